#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "smdk/tensor.hpp"
#include "smdk/types.hpp"

namespace smdk {

struct RayIntersection {
  std::size_t pixel_index = 0;  ///< row * width + col
  double length_mm = 0.0;
};

/// One row of the system matrix, sorted by pixel index.
struct RayIntersectionList {
  std::vector<RayIntersection> entries;
  double total_length_mm = 0.0;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Exact intersection lengths of the segment `from -> to` with the image grid
/// of `geom` (Siddon). Empty when the segment misses the grid.
RayIntersectionList trace_line(const FanBeamGeometry& geom, Point2 from, Point2 to);

/// Row (view, detector) of A. With sub_rays > 1 the sub-ray lengths are averaged.
/// Throws std::out_of_range for bad indices.
RayIntersectionList trace_ray(const FanBeamGeometry& geom, std::size_t view, std::size_t detector);

/// Source and detector-sample positions of one (sub-)ray in mm.
std::pair<Point2, Point2> ray_endpoints(const FanBeamGeometry& geom, std::size_t view,
                                        std::size_t detector, std::size_t sub_ray = 0);

/// Rows of one view in traversal order with weights in cm. Entries of
/// detector d are [offsets[d], offsets[d + 1]).
struct ViewRows {
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> pixels;
  std::vector<double> weights;
};

struct SartNormalizers {
  std::vector<double> row_sums;  ///< per ray, cm
  std::vector<double> col_sums;  ///< per pixel, cm
  std::size_t zero_rows = 0;     ///< rays missing the grid
  std::size_t zero_cols = 0;     ///< pixels hit by no ray
};

/// Matched forward/back projector for one geometry.
///
/// Images are Tensor3 of shape (height, width, K) and sinograms of shape
/// (views, detectors, K); all K channels are processed in one traversal of
/// each ray. Lengths are converted to cm so that images in cm^-1 give
/// dimensionless line integrals.
///
/// Forward projection runs in parallel over rays. Back projection splits the
/// views into a fixed number of blocks, accumulates each block privately and
/// sums the blocks in block order, so the result does not depend on the
/// number of threads.
///
/// When the system matrix fits kMatrixCacheBytes it is traced once on first
/// use and stored in CSR form; later calls read the stored rows. Entries keep
/// the traversal order, so cached and traced results are bit-identical.
class Projector {
 public:
  enum class MatrixCache { kAuto, kOff };

  explicit Projector(FanBeamGeometry geom, MatrixCache matrix_cache = MatrixCache::kAuto);

  const FanBeamGeometry& geometry() const { return geom_; }

  Tensor3 forward(const Tensor3& images) const;
  Tensor3 back(const Tensor3& sinograms) const;

  SinogramStack forward(const ChannelImageStack& images) const;
  ChannelImageStack back(const SinogramStack& sino) const;

  /// Computed once on first use; shared between copies.
  const SartNormalizers& normalizers() const;

  /// Rows of A belonging to `view`, copied from the stored matrix or traced.
  /// Entries match the order used by forward and back.
  void view_rows(std::size_t view, ViewRows& out) const;

  /// True when projections read a stored copy of A.
  bool uses_matrix_cache() const;

  static constexpr std::size_t kBackProjectionBlocks = 8;
  static constexpr std::size_t kMatrixCacheBytes = std::size_t{768} << 20;

 private:
  struct Cache;
  void ensure_matrix() const;
  template <class Visit>
  void visit_row(std::size_t view, std::size_t det, Visit&& visit) const;

  FanBeamGeometry geom_;
  bool matrix_enabled_ = false;
  std::shared_ptr<Cache> cache_;
};

Tensor3 forward_project(const Tensor3& images, const FanBeamGeometry& geom);
Tensor3 back_project(const Tensor3& sinograms, const FanBeamGeometry& geom);
SartNormalizers sart_normalizers(const FanBeamGeometry& geom);

/// Single-threaded reference kernels: rays visited in natural order, back
/// projection scatters straight into the output image.
namespace serial {
Tensor3 forward_project(const Tensor3& images, const FanBeamGeometry& geom);
Tensor3 back_project(const Tensor3& sinograms, const FanBeamGeometry& geom);
}  // namespace serial

}  // namespace smdk
