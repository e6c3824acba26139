#include "smdk/simulate.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "smdk/rng.hpp"

namespace smdk {

void PhantomSpec::validate() const {
  std::vector<std::string> errors;
  if (material_names.empty()) errors.emplace_back("phantom: material_names is empty");
  for (std::size_t i = 0; i < ellipses.size(); ++i) {
    const auto& e = ellipses[i];
    const std::string where = "phantom ellipse " + std::to_string(i) + ": ";
    if (!(e.semi_axis_a > 0.0) || !(e.semi_axis_b > 0.0)) {
      errors.push_back(where + "semi-axes must be positive");
    }
    if (!(std::abs(e.center_x) <= 1.0) || !(std::abs(e.center_y) <= 1.0)) {
      errors.push_back(where + "centre must lie in [-1, 1]");
    }
    if (!std::isfinite(e.rotation_rad)) errors.push_back(where + "rotation must be finite");
    if (e.material_fractions.size() != material_names.size()) {
      errors.push_back(where + "expected " + std::to_string(material_names.size()) +
                       " material fractions, got " + std::to_string(e.material_fractions.size()));
      continue;
    }
    double sum = 0.0;
    for (double f : e.material_fractions) {
      if (!(f >= 0.0 && f <= 1.0)) errors.push_back(where + "fractions must lie in [0, 1]");
      sum += f;
    }
    if (sum > 1.0 + 1e-12) errors.push_back(where + "fractions sum exceeds 1");
  }
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "invalid PhantomSpec:";
    for (const auto& e : errors) msg << "\n  " << e;
    throw std::invalid_argument(msg.str());
  }
}

void SpectrumSpec::validate() const {
  if (bin_edges_keV.size() < 2) throw std::invalid_argument("spectrum: need at least two bin edges");
  for (std::size_t i = 1; i < bin_edges_keV.size(); ++i) {
    if (!(bin_edges_keV[i] > bin_edges_keV[i - 1])) {
      throw std::invalid_argument("spectrum: bin edges must be strictly increasing");
    }
  }
  if (mixing.num_bins() != bin_edges_keV.size() - 1) {
    throw std::invalid_argument("spectrum: mixing matrix rows (" + std::to_string(mixing.num_bins()) +
                                ") must equal bin count (" +
                                std::to_string(bin_edges_keV.size() - 1) + ")");
  }
}

bool ellipse_contains(const Ellipse& e, double x, double y) {
  const double dx = x - e.center_x;
  const double dy = y - e.center_y;
  const double c = std::cos(e.rotation_rad);
  const double s = std::sin(e.rotation_rad);
  const double u = (c * dx + s * dy) / e.semi_axis_a;
  const double v = (-s * dx + c * dy) / e.semi_axis_b;
  return u * u + v * v <= 1.0;
}

Point2 pixel_center_normalized(const FanBeamGeometry& geom, std::size_t row, std::size_t col) {
  const double w = static_cast<double>(geom.image_width_px);
  const double h = static_cast<double>(geom.image_height_px);
  return {(2.0 * static_cast<double>(col) + 1.0) / w - 1.0,
          1.0 - (2.0 * static_cast<double>(row) + 1.0) / h};
}

MaterialMapStack make_phantom(const PhantomSpec& spec, const FanBeamGeometry& geom) {
  spec.validate();
  geom.validate();
  const std::size_t rows = geom.image_height_px;
  const std::size_t cols = geom.image_width_px;
  const std::size_t V = spec.material_names.size();
  MaterialMapStack out{Tensor3(rows, cols, V), spec.material_names, true};
  const std::size_t J = rows * cols;
  double* data = out.data.data();

#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const Point2 p = pixel_center_normalized(geom, r, c);
      const Ellipse* last = nullptr;
      for (const auto& e : spec.ellipses) {
        if (ellipse_contains(e, p.x, p.y)) last = &e;
      }
      if (last == nullptr) continue;
      for (std::size_t v = 0; v < V; ++v) data[v * J + r * cols + c] = last->material_fractions[v];
    }
  }
  return out;
}

AirMap air_map(const MaterialMapStack& maps) {
  const std::size_t J = maps.data.slice_size();
  AirMap air{Tensor3(maps.data.rows(), maps.data.cols(), 1, 1.0)};
  for (std::size_t v = 0; v < maps.num_materials(); ++v) {
    const auto s = maps.data.slice(v);
    for (std::size_t j = 0; j < J; ++j) air.data.data()[j] -= s[j];
  }
  return air;
}

ChannelImageStack mix_channels(const MaterialMapStack& maps, const MixingMatrix& mixing,
                               const FanBeamGeometry& geom) {
  if (maps.num_materials() != mixing.num_materials()) {
    throw std::invalid_argument("mix_channels: map stack has " + std::to_string(maps.num_materials()) +
                                " materials, mixing matrix has " +
                                std::to_string(mixing.num_materials()));
  }
  ChannelImageStack out{Tensor3(maps.data.rows(), maps.data.cols(), mixing.num_bins()), geom};
  mode3_view(out.data).noalias() = mixing.values() * mode3_view(maps.data);
  return out;
}

SinogramStack synthesize_sinograms(const ChannelImageStack& images, const Projector& projector) {
  return projector.forward(images);
}

NoisySinogram apply_poisson_noise(const SinogramStack& clean, const NoiseModel& noise) {
  noise.validate();
  const auto in = clean.data.values();
  for (double p : in) {
    if (!std::isfinite(p)) throw std::invalid_argument("apply_poisson_noise: non-finite line integral");
    if (p < 0.0) throw std::invalid_argument("apply_poisson_noise: negative line integral");
  }
  NoisySinogram result{{Tensor3(clean.data.rows(), clean.data.cols(), clean.data.slices()),
                        clean.geometry}};
  auto out = result.sinogram.data.values();
  const double i0 = static_cast<double>(noise.photons_per_ray);
  const double log_i0 = std::log(i0);
  const auto clamp_to = static_cast<std::int64_t>(noise.min_counts_clamp);
  const std::size_t n = in.size();
  std::size_t clamps = 0;
  double count_sum = 0.0;

#pragma omp parallel for schedule(static) reduction(+ : clamps)
  for (std::size_t i = 0; i < n; ++i) {
    // Storage index equals (bin * views + view) * detectors + det.
    CounterRng rng(noise.rng_seed, i);
    std::poisson_distribution<std::int64_t> dist(i0 * std::exp(-in[i]));
    std::int64_t c = dist(rng);
    if (c < clamp_to) {
      c = clamp_to;
      ++clamps;
    }
    out[i] = log_i0 - std::log(static_cast<double>(c));
  }
  for (double p : out) count_sum += std::exp(log_i0 - p);
  result.clamp_events = clamps;
  result.mean_counts = count_sum / static_cast<double>(n);
  return result;
}

}  // namespace smdk
