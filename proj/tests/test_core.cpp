#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "smdk/rng.hpp"
#include "smdk/tensor.hpp"
#include "smdk/tensor_io.hpp"
#include "smdk/types.hpp"
#include "support.hpp"

using namespace smdk;

TEST_CASE("element (r, c, k) sits at (k*rows + r)*cols + c") {
  Tensor3 t(3, 4, 2);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(i);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(t(r, c, k) == static_cast<double>((k * 3 + r) * 4 + c));
}

TEST_CASE("mode-3 unfolding of a 2x2x2 tensor") {
  Tensor3 t(2, 2, 2);
  t(0, 0, 0) = 1; t(0, 1, 0) = 2; t(1, 0, 0) = 3; t(1, 1, 0) = 4;
  t(0, 0, 1) = 5; t(0, 1, 1) = 6; t(1, 0, 1) = 7; t(1, 1, 1) = 8;
  const RowMatrix u = mode3_unfold(t);
  REQUIRE(u.rows() == 2);
  REQUIRE(u.cols() == 4);
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 4; ++j) CHECK(u(k, j) == 4 * k + j + 1);
  CHECK(mode3_fold(u, 2, 2) == t);
}

TEST_CASE("fold(unfold(T)) == T and unfold agrees with the index formula") {
  auto g = testing::rng(11);
  std::uniform_int_distribution<std::size_t> rows(1, 64), cols(1, 64), slices(1, 8);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t R = rows(g), C = cols(g), K = slices(g);
    const Tensor3 t = testing::random_tensor(g, R, C, K);
    const RowMatrix u = mode3_unfold(t);
    CHECK(u.rows() == static_cast<Eigen::Index>(K));
    CHECK(u.cols() == static_cast<Eigen::Index>(R * C));
    std::uniform_int_distribution<std::size_t> pick_r(0, R - 1), pick_c(0, C - 1), pick_k(0, K - 1);
    for (int s = 0; s < 20; ++s) {
      const std::size_t r = pick_r(g), c = pick_c(g), k = pick_k(g);
      CHECK(u(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r * C + c)) == t(r, c, k));
    }
    CHECK(mode3_fold(u, R, C) == t);
    CHECK(mode3_view(t) == u);
  }
}

TEST_CASE("tensor bounds") {
  CHECK_THROWS_AS(Tensor3(0, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(Tensor3(3, 3, 0), std::invalid_argument);
  Tensor3 t(2, 3, 4);
  CHECK_NOTHROW(t(1, 2, 3));
  CHECK_THROWS_AS(t(2, 0, 0), std::out_of_range);
  CHECK_THROWS_AS(t(0, 3, 0), std::out_of_range);
  CHECK_THROWS_AS(t(0, 0, 4), std::out_of_range);
  CHECK_THROWS_AS(t.slice(4), std::out_of_range);
  CHECK_THROWS_AS(mode3_fold(RowMatrix::Zero(2, 5), 2, 3), std::invalid_argument);

  auto g = testing::rng(5);
  std::uniform_int_distribution<std::size_t> any(0, 10);
  for (int i = 0; i < 500; ++i) {
    const std::size_t r = any(g), c = any(g), k = any(g);
    const bool inside = r < 2 && c < 3 && k < 4;
    if (inside) CHECK_NOTHROW(t(r, c, k));
    else CHECK_THROWS_AS(t(r, c, k), std::out_of_range);
  }
}

TEST_CASE("slice copy and set") {
  auto g = testing::rng(3);
  Tensor3 t = testing::random_tensor(g, 5, 6, 3);
  Tensor3 s = t.slice_copy(1);
  CHECK(s.slices() == 1);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.data()[i] == t.slice(1)[i]);
  Tensor3 z(5, 6, 1, 7.0);
  t.set_slice(2, z);
  for (double v : t.slice(2)) CHECK(v == 7.0);
  CHECK_THROWS_AS(t.set_slice(0, Tensor3(6, 5, 1)), std::invalid_argument);
}

TEST_CASE("tensor file round trip is bit exact") {
  auto g = testing::rng(17);
  Tensor3 t = testing::random_tensor(g, 7, 5, 3, -1e6, 1e6);
  t(0, 0, 0) = -0.0;
  t(1, 1, 1) = std::numeric_limits<double>::denorm_min();
  std::stringstream buf;
  write_tensor(buf, t);
  const std::string bytes = buf.str();
  CHECK(bytes.rfind("SMDK1 7 5 3\n", 0) == 0);
  CHECK(bytes.size() == std::string("SMDK1 7 5 3\n").size() + 8 * t.size());
  std::stringstream in(bytes);
  const Tensor3 back = read_tensor(in);
  REQUIRE(back.same_shape(t));
  CHECK(std::memcmp(back.data(), t.data(), 8 * t.size()) == 0);
}

TEST_CASE("payload is little-endian float64") {
  Tensor3 t(1, 1, 1, 1.0);
  std::stringstream buf;
  write_tensor(buf, t);
  const std::string s = buf.str();
  const std::string payload = s.substr(s.find('\n') + 1);
  // 1.0 = 0x3FF0000000000000
  const unsigned char expect[8] = {0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
  REQUIRE(payload.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(static_cast<unsigned char>(payload[i]) == expect[i]);
}

TEST_CASE("malformed tensor files") {
  auto read = [](const std::string& s) {
    std::stringstream in(s);
    return read_tensor(in);
  };
  CHECK_THROWS_AS(read("NOPE1 1 1 1\n" + std::string(8, '\0')), FormatError);
  CHECK_THROWS_AS(read("SMDK1 1 1\n"), FormatError);
  CHECK_THROWS_AS(read("SMDK1 0 1 1\n"), FormatError);
  CHECK_THROWS_AS(read("SMDK1 2 1 1\n" + std::string(8, '\0')), FormatError);
  CHECK_THROWS_AS(read("SMDK1 1 1 1\n" + std::string(9, '\0')), FormatError);
  try {
    read("SMDK1 2 2 1\n" + std::string(10, '\0'));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("expected 32 bytes, got 10") != std::string::npos);
  }
  CHECK_THROWS_AS(read_tensor(std::filesystem::path("/nonexistent/x.smdk")), std::runtime_error);
}

TEST_CASE("counter RNG streams") {
  CounterRng a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  std::vector<std::uint64_t> xa, xc, xd;
  for (int i = 0; i < 100; ++i) {
    xa.push_back(a());
    CHECK(b() == xa.back());
    xc.push_back(c());
    xd.push_back(d());
  }
  CHECK(xa != xc);
  CHECK(xa != xd);
  CHECK(std::set<std::uint64_t>(xa.begin(), xa.end()).size() == xa.size());

  // Uniform bits: mean of the top bit over many draws is near 1/2.
  CounterRng e(1, 0);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += static_cast<int>(e() >> 63);
  CHECK(std::abs(ones - n / 2) < 5 * std::sqrt(n / 4.0));
}

TEST_CASE("Poisson draws from the counter RNG have the requested mean") {
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  const double lambda = 137.0;
  for (int i = 0; i < n; ++i) {
    CounterRng g(9, static_cast<std::uint64_t>(i));
    std::poisson_distribution<long> p(lambda);
    const double x = static_cast<double>(p(g));
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean - lambda) < 5 * std::sqrt(lambda / n));
  CHECK(var == doctest::Approx(lambda).epsilon(0.05));
}

TEST_CASE("geometry validation reports every problem") {
  FanBeamGeometry g;
  CHECK_NOTHROW(g.validate());
  CHECK(g.warnings().empty());
  g.num_views = 0;
  g.pixel_size_mm = -1;
  g.source_to_isocenter_mm = 200;  // beyond the detector
  try {
    g.validate();
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("num_views") != std::string::npos);
    CHECK(msg.find("pixel_size_mm") != std::string::npos);
    CHECK(msg.find("source_to_isocenter_mm") != std::string::npos);
  }
}

TEST_CASE("field of view") {
  FanBeamGeometry g;
  // Half detector width 25.6 mm seen from the source at 180 mm, scaled to the isocenter.
  const double half_angle = std::atan(25.6 / 180.0);
  CHECK(g.fov_radius_mm() == doctest::Approx(132.0 * std::sin(half_angle)).epsilon(1e-12));
  g.pixel_size_mm = 0.3;  // half-diagonal 27.2 mm
  CHECK_NOTHROW(g.validate());
  CHECK(g.warnings().size() == 1);
}

TEST_CASE("mixing matrix checks") {
  RowMatrix b(2, 2);
  b << 1, 0, 0, 1;
  MixingMatrix m(b, {"a", "b"});
  CHECK(m.full_column_rank());
  CHECK(m.condition_number() == doctest::Approx(1.0));
  b << 1, 2, 2, 4;
  CHECK_FALSE(MixingMatrix(b, {"a", "b"}).full_column_rank());
  b << 1, -1, 0, 1;
  CHECK_THROWS_AS(MixingMatrix(b, {"a", "b"}), std::invalid_argument);
  b << 1, std::nan(""), 0, 1;
  CHECK_THROWS_AS(MixingMatrix(b, {"a", "b"}), std::invalid_argument);
  b << 1, 0, 0, 1;
  CHECK_THROWS_AS(MixingMatrix(b, {"a"}), std::invalid_argument);
}

TEST_CASE("bundled mixing matrix matches its data file") {
  std::ifstream in(std::string(SMDK_SOURCE_DIR) + "/data/mixing_matrix_4bin.json");
  REQUIRE(in);
  const auto j = nlohmann::json::parse(in);
  const auto bundled = testing::bundled_mixing();
  const auto& rows = j.at("mixing_cm-1");
  for (int n = 0; n < 4; ++n)
    for (int v = 0; v < 3; ++v) CHECK(rows[n][v].get<double>() == bundled.values()(n, v));
  // Independent SVD (numpy) of the six-decimal entries stored in the file.
  CHECK(bundled.condition_number() == doctest::Approx(1992.0571307768967).epsilon(1e-10));
  // The stored value came from the unrounded coefficients; rounding the
  // entries moves it by about 1e-6 relative.
  CHECK(bundled.condition_number() == doctest::Approx(j.at("condition_number").get<double>()).epsilon(1e-5));
  CHECK(bundled.full_column_rank());
}

TEST_CASE("noise model validation") {
  NoiseModel n;
  CHECK_NOTHROW(n.validate());
  n.photons_per_ray = 0;
  CHECK_THROWS_AS(n.validate(), std::invalid_argument);
  n.photons_per_ray = 10;
  n.min_counts_clamp = 0;
  CHECK_THROWS_AS(n.validate(), std::invalid_argument);
}
