#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "smdk/projector.hpp"
#include "smdk/types.hpp"

namespace smdk {

/// Centre and semi-axes are fractions of the image half-width (x) and
/// half-height (y), so the inscribed ellipse of the grid is (0, 0, 1, 1).
struct Ellipse {
  double center_x = 0.0;
  double center_y = 0.0;
  double semi_axis_a = 0.0;
  double semi_axis_b = 0.0;
  double rotation_rad = 0.0;
  std::vector<double> material_fractions;

  friend bool operator==(const Ellipse&, const Ellipse&) = default;
};

/// Ellipses are painted in order; later ellipses override earlier ones.
struct PhantomSpec {
  std::vector<std::string> material_names;
  std::vector<Ellipse> ellipses;

  /// Throws std::invalid_argument describing every violation.
  void validate() const;

  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

struct SpectrumSpec {
  std::vector<double> bin_edges_keV;
  MixingMatrix mixing;

  void validate() const;
};

/// True when pixel-centre point (x, y), in the same normalized frame as
/// Ellipse, lies inside or on the ellipse.
bool ellipse_contains(const Ellipse& e, double x, double y);

/// Normalized coordinates of pixel centre (row, col).
Point2 pixel_center_normalized(const FanBeamGeometry& geom, std::size_t row, std::size_t col);

MaterialMapStack make_phantom(const PhantomSpec& spec, const FanBeamGeometry& geom);

/// Air fraction 1 - sum_v m_v of a map stack.
AirMap air_map(const MaterialMapStack& maps);

/// H_(3) = B M_(3).
ChannelImageStack mix_channels(const MaterialMapStack& maps, const MixingMatrix& mixing,
                               const FanBeamGeometry& geom);

SinogramStack synthesize_sinograms(const ChannelImageStack& images, const Projector& projector);

struct NoisySinogram {
  SinogramStack sinogram;
  std::size_t clamp_events = 0;  ///< rays whose count was raised to min_counts_clamp
  double mean_counts = 0.0;
};

/// Beer-Lambert Poisson noise: c ~ Poisson(I0 exp(-p)), clamped to at least
/// min_counts_clamp, returned as ln(I0 / c). Ray (bin, view, det) draws from
/// stream (bin * views + view) * detectors + det of the configured seed.
/// Throws std::invalid_argument on negative or non-finite input.
NoisySinogram apply_poisson_noise(const SinogramStack& clean, const NoiseModel& noise);

}  // namespace smdk
