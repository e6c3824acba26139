#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "smdk/projector.hpp"
#include "support.hpp"

using namespace smdk;

namespace {

// Unit-pixel grid of n x n mm centred on the isocenter, with an odd detector
// so the central ray exists.
FanBeamGeometry unit_grid(std::size_t n, std::size_t views = 4) {
  FanBeamGeometry g;
  g.image_width_px = n;
  g.image_height_px = n;
  g.pixel_size_mm = 1.0;
  g.num_views = views;
  g.num_detectors = 4 * n + 1;
  g.detector_pitch_mm = 1.0;
  return g;
}

// Lengths per pixel from 10^4 midpoint samples along the segment.
std::map<std::size_t, double> sampled_lengths(const FanBeamGeometry& g, Point2 a, Point2 b, int samples = 10000) {
  std::map<std::size_t, double> out;
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const double half_w = 0.5 * g.image_width_px * g.pixel_size_mm;
  const double half_h = 0.5 * g.image_height_px * g.pixel_size_mm;
  for (int i = 0; i < samples; ++i) {
    const double t = (i + 0.5) / samples;
    const double x = a.x + t * (b.x - a.x);
    const double y = a.y + t * (b.y - a.y);
    if (x <= -half_w || x >= half_w || y <= -half_h || y >= half_h) continue;
    const auto col = static_cast<std::size_t>((x + half_w) / g.pixel_size_mm);
    const auto row = static_cast<std::size_t>((half_h - y) / g.pixel_size_mm);
    out[row * g.image_width_px + col] += len / samples;
  }
  return out;
}

}  // namespace

TEST_CASE("central axis ray crosses the full grid width") {
  const auto g = unit_grid(9);
  const auto r = trace_ray(g, 0, g.num_detectors / 2);
  CHECK(r.total_length_mm == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(r.entries.size() == 9);
  for (const auto& e : r.entries) {
    CHECK(e.pixel_index / 9 == 4);  // middle row
    CHECK(e.length_mm == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rays that miss the grid are empty") {
  const auto g = unit_grid(4);
  CHECK(trace_line(g, {-10, 5}, {10, 5}).entries.empty());
  CHECK(trace_line(g, {3, -10}, {3, 10}).entries.empty());
  CHECK(trace_line(g, {-10, -10}, {-9, -9}).entries.empty());
  // Outermost detector of a wide panel.
  auto wide = unit_grid(4);
  wide.num_detectors = 201;
  CHECK(trace_ray(wide, 0, 0).entries.empty());
}

TEST_CASE("45 degree diagonal across a 2x2 grid") {
  const auto g = unit_grid(2);
  const auto r = trace_line(g, {-2, -2}, {2, 2});
  REQUIRE(r.entries.size() == 2);
  // Bottom-left (row 1, col 0) and top-right (row 0, col 1).
  CHECK(r.entries[0].pixel_index == 1);
  CHECK(r.entries[1].pixel_index == 2);
  for (const auto& e : r.entries) CHECK(e.length_mm == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  const auto oracle = sampled_lengths(g, {-2, -2}, {2, 2});
  REQUIRE(oracle.size() == 2);
  for (const auto& e : r.entries) CHECK(oracle.at(e.pixel_index) == doctest::Approx(e.length_mm).epsilon(1e-3));
}

TEST_CASE("random segments agree with dense line sampling") {
  const auto g = unit_grid(7);
  auto rnd = testing::rng(21);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Point2 a{u(rnd), u(rnd)}, b{u(rnd), u(rnd)};
    const auto r = trace_line(g, a, b);
    const auto oracle = sampled_lengths(g, a, b);
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const double tol = 3.0 * len / 10000;  // one sample width at each end of a pixel chord
    double total = 0.0;
    for (const auto& e : r.entries) {
      const auto it = oracle.find(e.pixel_index);
      const double o = it == oracle.end() ? 0.0 : it->second;
      CHECK(std::abs(o - e.length_mm) <= tol);
      total += e.length_mm;
    }
    for (const auto& [pix, len_o] : oracle) {
      const bool present = std::any_of(r.entries.begin(), r.entries.end(),
                                       [&](const auto& e) { return e.pixel_index == pix; });
      if (!present) CHECK(len_o <= tol);
    }
    CHECK(r.total_length_mm == doctest::Approx(total).epsilon(1e-10));
  }
}

TEST_CASE("trace_ray lists: sorted, positive, bounded by the diagonal") {
  auto g = testing::small_geometry(32, 30);
  g.sub_rays = 3;
  const double diag = std::hypot(32 * g.pixel_size_mm, 32 * g.pixel_size_mm);
  for (std::size_t v = 0; v < g.num_views; v += 7) {
    for (std::size_t d = 0; d < g.num_detectors; d += 5) {
      const auto r = trace_ray(g, v, d);
      double sum = 0.0;
      for (std::size_t i = 0; i < r.entries.size(); ++i) {
        CHECK(r.entries[i].length_mm > 0.0);
        if (i > 0) CHECK(r.entries[i].pixel_index > r.entries[i - 1].pixel_index);
        sum += r.entries[i].length_mm;
      }
      CHECK(std::abs(sum - r.total_length_mm) <= 1e-10 * std::max(1.0, sum));
      CHECK(r.total_length_mm <= diag + 1e-9);
    }
  }
  CHECK_THROWS_AS(trace_ray(g, g.num_views, 0), std::out_of_range);
  CHECK_THROWS_AS(trace_ray(g, 0, g.num_detectors), std::out_of_range);
}

TEST_CASE("zero image and zero sinogram") {
  const auto g = testing::small_geometry(16, 12);
  const Projector p(g);
  const Tensor3 f = p.forward(Tensor3(16, 16, 2));
  const Tensor3 b = p.back(Tensor3(12, 32, 2));
  for (double v : f.values()) CHECK(v == 0.0);
  for (double v : b.values()) CHECK(v == 0.0);
}

TEST_CASE("uniform disk: central ray sees the chord 2 r mu") {
  FanBeamGeometry g;
  g.image_width_px = g.image_height_px = 64;
  g.pixel_size_mm = 0.4;
  g.num_detectors = 129;
  g.detector_pitch_mm = 0.4;
  g.num_views = 8;
  const double radius_mm = 8.0, mu = 2.0;
  Tensor3 img(64, 64, 1);
  for (std::size_t r = 0; r < 64; ++r)
    for (std::size_t c = 0; c < 64; ++c) {
      const double x = (c + 0.5) * 0.4 - 12.8, y = 12.8 - (r + 0.5) * 0.4;
      if (x * x + y * y <= radius_mm * radius_mm) img(r, c) = mu;
    }
  const Tensor3 sino = Projector(g).forward(img);
  const double expect = 2.0 * radius_mm * 0.1 * mu;
  for (std::size_t v = 0; v < g.num_views; ++v) {
    CHECK(std::abs(sino(v, 64) - expect) <= 2.0 * 0.04 * mu);
  }
}

TEST_CASE("forward projection is linear") {
  const auto g = testing::small_geometry(24, 20);
  const Projector p(g);
  auto rnd = testing::rng(2);
  const Tensor3 x = testing::random_tensor(rnd, 24, 24, 1), y = testing::random_tensor(rnd, 24, 24, 1);
  const double a = 1.7, b = -0.3;
  Tensor3 z(24, 24, 1);
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = a * x.data()[i] + b * y.data()[i];
  const Tensor3 pz = p.forward(z), px = p.forward(x), py = p.forward(y);
  std::vector<double> diff(pz.size());
  for (std::size_t i = 0; i < pz.size(); ++i) diff[i] = pz.data()[i] - (a * px.data()[i] + b * py.data()[i]);
  CHECK(testing::norm(diff) <= 1e-12 * testing::norm(pz.values()));
}

TEST_CASE("back projection is the adjoint: 10 random pairs at 64x64, 90 views") {
  const auto g = testing::small_geometry(64, 90);
  const Projector p(g);
  auto rnd = testing::rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor3 x = testing::random_tensor(rnd, 64, 64, 1);
    const Tensor3 y = testing::random_tensor(rnd, 90, 128, 1);
    const Tensor3 ax = p.forward(x);
    const Tensor3 aty = p.back(y);
    const double lhs = testing::dot(ax.values(), y.values());
    const double rhs = testing::dot(x.values(), aty.values());
    CHECK(std::abs(lhs - rhs) / (testing::norm(ax.values()) * testing::norm(y.values()) + 1e-300) <= 1e-6);
  }
}

TEST_CASE("single-ray sinogram back projects onto that ray") {
  const auto g = testing::small_geometry(32, 16);
  const Projector p(g);
  const std::size_t view = 5, det = 23;
  Tensor3 sino(16, 64, 1);
  sino(view, det) = 2.5;
  const Tensor3 img = p.back(sino);
  const auto ray = trace_ray(g, view, det);
  REQUIRE_FALSE(ray.entries.empty());
  Tensor3 expect(32, 32, 1);
  for (const auto& e : ray.entries) expect.data()[e.pixel_index] = 2.5 * e.length_mm * 0.1;
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(img.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));
}

TEST_CASE("SART normalizers") {
  auto g = testing::small_geometry(20, 18);
  g.num_detectors = 80;  // outer detectors miss the grid
  g.detector_pitch_mm = 1.0;
  const Projector p(g);
  const auto& n = p.normalizers();
  CHECK(n.row_sums.size() == g.num_rays());
  CHECK(n.col_sums.size() == g.num_pixels());
  CHECK(n.zero_rows > 0);
  CHECK(n.row_sums[0] == 0.0);
  CHECK(n.zero_cols == 0);

  const Tensor3 ones_img(20, 20, 1, 1.0);
  const Tensor3 rows = p.forward(ones_img);
  for (std::size_t l = 0; l < g.num_rays(); ++l) CHECK(n.row_sums[l] == rows.data()[l]);
  const Tensor3 cols = p.back(Tensor3(18, 80, 1, 1.0));
  for (std::size_t j = 0; j < g.num_pixels(); ++j) CHECK(n.col_sums[j] == cols.data()[j]);

  // Summing the projection of one pixel indicator over all rays gives its column sum.
  for (std::size_t j : {0u, 57u, 210u, 399u}) {
    Tensor3 e(20, 20, 1);
    e.data()[j] = 1.0;
    const Tensor3 fe = p.forward(e);
    double s = 0.0;
    for (double v : fe.values()) s += v;
    CHECK(s == doctest::Approx(n.col_sums[j]).epsilon(1e-12));
  }
}

TEST_CASE("multi-channel projection equals per-channel projection") {
  const auto g = testing::small_geometry(16, 10);
  const Projector p(g);
  auto rnd = testing::rng(4);
  const Tensor3 x = testing::random_tensor(rnd, 16, 16, 3);
  const Tensor3 px = p.forward(x);
  const Tensor3 bx = p.back(px);
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor3 pk = p.forward(x.slice_copy(k));
    const Tensor3 bk = p.back(px.slice_copy(k));
    CHECK(std::equal(pk.values().begin(), pk.values().end(), px.slice(k).begin()));
    CHECK(std::equal(bk.values().begin(), bk.values().end(), bx.slice(k).begin()));
  }
}

TEST_CASE("parallel kernels match the serial reference") {
  const auto g = testing::small_geometry(48, 40);
  auto rnd = testing::rng(8);
  const Tensor3 x = testing::random_tensor(rnd, 48, 48, 2);
  const Tensor3 y = testing::random_tensor(rnd, 40, 96, 2);
  const Projector p(g);
  const Tensor3 f = p.forward(x);
  const Tensor3 fs = serial::forward_project(x, g);
  // Same per-ray accumulation order, so forward results are identical.
  CHECK(f == fs);
  const Tensor3 b = p.back(y);
  const Tensor3 bs = serial::back_project(y, g);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(std::abs(b.data()[i] - bs.data()[i]) <= 1e-12 * std::max(1.0, std::abs(bs.data()[i])));
  }
}

TEST_CASE("results do not depend on the thread count or the matrix cache") {
  const auto g = testing::small_geometry(40, 36);
  auto rnd = testing::rng(13);
  const Tensor3 x = testing::random_tensor(rnd, 40, 40, 3);
  const Tensor3 y = testing::random_tensor(rnd, 36, 80, 3);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const Projector cached(g);
  REQUIRE(cached.uses_matrix_cache());
  const Tensor3 f1 = cached.forward(x), b1 = cached.back(y);
  omp_set_num_threads(4);
  const Projector cached4(g);
  const Tensor3 f4 = cached4.forward(x), b4 = cached4.back(y);
  const Projector traced(g, Projector::MatrixCache::kOff);
  REQUIRE_FALSE(traced.uses_matrix_cache());
  const Tensor3 ft = traced.forward(x), bt = traced.back(y);
  omp_set_num_threads(saved);
  CHECK(std::memcmp(f1.data(), f4.data(), 8 * f1.size()) == 0);
  CHECK(std::memcmp(b1.data(), b4.data(), 8 * b1.size()) == 0);
  CHECK(std::memcmp(f1.data(), ft.data(), 8 * f1.size()) == 0);
  CHECK(std::memcmp(b1.data(), bt.data(), 8 * b1.size()) == 0);
}

TEST_CASE("shape mismatches are rejected") {
  const Projector p(testing::small_geometry(16, 10));
  CHECK_THROWS_AS(p.forward(Tensor3(15, 16, 1)), std::invalid_argument);
  CHECK_THROWS_AS(p.back(Tensor3(10, 31, 1)), std::invalid_argument);
}
