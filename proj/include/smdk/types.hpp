#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "smdk/tensor.hpp"

namespace smdk {

/// Flat-panel fan-beam scanner and reconstruction grid.
///
/// The source sits at `source_to_isocenter_mm * (cos t, sin t)` for view
/// angle t; the detector line is perpendicular to the central ray at
/// `source_to_detector_mm` from the source. The image is centred on the
/// isocenter with row 0 at the top (largest y).
struct FanBeamGeometry {
  double source_to_detector_mm = 180.0;
  double source_to_isocenter_mm = 132.0;
  std::size_t num_views = 360;
  std::size_t num_detectors = 256;
  double detector_pitch_mm = 0.2;
  std::size_t image_width_px = 128;
  std::size_t image_height_px = 128;
  double pixel_size_mm = 0.2;
  double angular_range_rad = 6.283185307179586;
  /// Detector centre shift in units of detector pitch.
  double detector_offset_px = 0.0;
  double start_angle_rad = 0.0;
  /// Rays traced per detector element, evenly spread across its width.
  std::size_t sub_rays = 1;

  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;

  /// Non-fatal issues, currently only field-of-view truncation.
  std::vector<std::string> warnings() const;

  /// Radius of the circle at the isocenter covered by every view.
  double fov_radius_mm() const;

  std::size_t num_rays() const { return num_views * num_detectors; }
  std::size_t num_pixels() const { return image_width_px * image_height_px; }

  friend bool operator==(const FanBeamGeometry&, const FanBeamGeometry&) = default;
};

/// Log-domain projections, shape (views, detectors, bins).
struct SinogramStack {
  Tensor3 data;
  FanBeamGeometry geometry;

  std::size_t num_bins() const { return data.slices(); }
};

/// Per-bin attenuation images in cm^-1, shape (height, width, bins).
struct ChannelImageStack {
  Tensor3 data;
  FanBeamGeometry geometry;

  std::size_t num_bins() const { return data.slices(); }
};

/// Per-material volume fractions, shape (height, width, materials).
struct MaterialMapStack {
  Tensor3 data;
  std::vector<std::string> material_names;
  /// True when every pixel lies in the capped simplex.
  bool constrained = false;

  std::size_t num_materials() const { return data.slices(); }
};

/// Air fraction 1 - sum_v m_v, shape (height, width, 1).
struct AirMap {
  Tensor3 data;
};

/// Bin-averaged attenuation of each pure basis material, N bins x V materials (cm^-1).
class MixingMatrix {
 public:
  MixingMatrix() = default;
  /// Throws std::invalid_argument for non-finite or negative entries, or N or V zero.
  MixingMatrix(RowMatrix values, std::vector<std::string> material_names);

  const RowMatrix& values() const { return values_; }
  std::size_t num_bins() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t num_materials() const { return static_cast<std::size_t>(values_.cols()); }
  const std::vector<std::string>& material_names() const { return names_; }

  /// Ratio of extreme singular values; infinity when rank deficient.
  double condition_number() const { return condition_; }
  bool full_column_rank() const { return full_rank_; }

 private:
  RowMatrix values_;
  std::vector<std::string> names_;
  double condition_ = 0.0;
  bool full_rank_ = false;
};

struct NoiseModel {
  std::uint64_t photons_per_ray = 5000;
  std::uint64_t rng_seed = 0;
  std::uint64_t min_counts_clamp = 1;

  void validate() const;

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

}  // namespace smdk
