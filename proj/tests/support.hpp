// Shared generators for the property tests.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <random>
#include <vector>

#include "smdk/tensor.hpp"
#include "smdk/types.hpp"

namespace smdk::testing {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Tensor3 random_tensor(std::mt19937_64& g, std::size_t rows, std::size_t cols, std::size_t slices,
                             double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor3 t(rows, cols, slices);
  for (double& v : t.values()) v = u(g);
  return t;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  long double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline FanBeamGeometry small_geometry(std::size_t n = 64, std::size_t views = 90) {
  FanBeamGeometry g;
  g.image_width_px = n;
  g.image_height_px = n;
  g.pixel_size_mm = 25.6 / static_cast<double>(n);
  g.num_views = views;
  g.num_detectors = 2 * n;
  g.detector_pitch_mm = 51.2 / static_cast<double>(2 * n);
  return g;
}

/// Bundled 4-bin matrix, copied from data/mixing_matrix_4bin.json.
inline MixingMatrix bundled_mixing() {
  RowMatrix b(4, 3);
  b << 9.292856, 1.025619, 149.938907,
       4.942785, 0.61902, 81.642473,
       3.561236, 0.492938, 59.047118,
       1.531564, 0.307722, 89.969902;
  return MixingMatrix(b, {"bone", "soft_tissue", "iodine"});
}

/// Random maps inside the capped simplex: Dirichlet-like split of a random
/// total fraction.
inline Tensor3 random_constrained_maps(std::mt19937_64& g, std::size_t rows, std::size_t cols, std::size_t V) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> e(1.0);
  Tensor3 m(rows, cols, V);
  const std::size_t J = rows * cols;
  std::vector<double> w(V);
  for (std::size_t j = 0; j < J; ++j) {
    double s = 0.0;
    for (auto& x : w) s += (x = e(g));
    const double total = u(g);
    for (std::size_t v = 0; v < V; ++v) m.data()[v * J + j] = total * w[v] / s;
  }
  return m;
}

}  // namespace smdk::testing
