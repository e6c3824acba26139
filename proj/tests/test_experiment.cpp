#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <random>
#include <sstream>

#include "smdk/experiment.hpp"
#include "smdk/tensor_io.hpp"
#include "support.hpp"

using namespace smdk;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(SMDK_SOURCE_DIR) / "data";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json paper_analog_json() { return json::parse(read_file(kData / "paper_analog.json")); }

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("smdk_test_experiment_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool has_error(const std::vector<std::string>& errors, const std::string& prefix) {
  return std::any_of(errors.begin(), errors.end(), [&](const auto& e) { return e.rfind(prefix, 0) == 0; });
}

// 32x32 grid, 64 detectors, 60 views and short iteration counts.
json tiny_config() {
  json j = paper_analog_json();
  j["geometry"]["num_views"] = 60;
  j["geometry"]["num_detectors"] = 64;
  j["geometry"]["detector_pitch_mm"] = 0.8;
  j["geometry"]["image_width_px"] = 32;
  j["geometry"]["image_height_px"] = 32;
  j["geometry"]["pixel_size_mm"] = 0.8;
  for (const char* m : {"SART", "TVM"}) j["recon"][m]["outer_iterations"] = 3;
  for (const char* m : {"SART-TVMD", "TVM-TVMD"}) {
    j["decomp"][m]["outer_iterations"] = 3;
    j["decomp"][m]["tv_inner_iterations"] = 5;
  }
  j["profiles"] = json::array({{{"axis", "row"}, {"index", 13}}});
  return j;
}

ExperimentConfig must_validate(const json& j, const ConfigOverrides& o = {}) {
  auto r = validate_config(j.dump(), kData, o);
  for (const auto& e : r.errors) MESSAGE(e);
  REQUIRE(r.config.has_value());
  return std::move(*r.config);
}

std::map<std::string, std::string> artifact_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext == ".csv" || ext == ".smdk" || ext == ".pgm") out[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("validate_config reports every problem together") {
  json j = paper_analog_json();
  j.erase("pipelines");
  j["noise"]["photons_per_ray"] = -5;
  j["bogus"] = 1;
  j["recon"]["SART"]["sart_update"] = "sideways";
  const auto r = validate_config(j.dump(), kData);
  CHECK_FALSE(r.config.has_value());
  CHECK(has_error(r.errors, "pipelines: missing required field"));
  CHECK(has_error(r.errors, "noise.photons_per_ray"));
  CHECK(has_error(r.errors, "config.bogus: unknown field"));
  CHECK(has_error(r.errors, "recon.SART.sart_update"));
  CHECK(r.errors.size() >= 4);

  CHECK_THROWS_AS(load_config(kData / "does_not_exist.json"), ConfigError);
  CHECK_FALSE(validate_config("{not json", kData).config.has_value());
  CHECK_FALSE(validate_config("[1, 2]", kData).config.has_value());
}

TEST_CASE("validate_config rejects bad pipelines, paths and profiles") {
  json j = paper_analog_json();
  j["pipelines"] = json::array({"SART-DI", "SART-DI", "FBP-DI"});
  j["phantom"] = "missing_phantom.json";
  j["external_sinogram"] = "missing.smdk";
  j["profiles"] = json::array({{{"axis", "diagonal"}, {"index", 9999}}});
  j["display_windows"]["bone"] = json::array({0.2, 0.1});
  const auto r = validate_config(j.dump(), kData);
  CHECK_FALSE(r.config.has_value());
  CHECK(has_error(r.errors, "pipelines: duplicate entry 'SART-DI'"));
  CHECK(has_error(r.errors, "pipelines: unknown pipeline 'FBP-DI'"));
  CHECK(has_error(r.errors, "phantom: cannot open referenced file"));
  CHECK(has_error(r.errors, "external_sinogram: file does not exist"));
  CHECK(has_error(r.errors, "profiles[0].axis"));
  CHECK(has_error(r.errors, "display_windows.bone"));

  json empty = paper_analog_json();
  empty["pipelines"] = json::array();
  CHECK(has_error(validate_config(empty.dump(), kData).errors, "pipelines: select at least one pipeline"));
}

TEST_CASE("paper-analog config matches the golden canonical form") {
  const auto cfg = load_config(kData / "paper_analog.json");
  const std::string golden = read_file(fs::path(SMDK_SOURCE_DIR) / "tests/golden/paper_analog.canonical.json");
  CHECK(cfg.canonical_json + "\n" == golden);

  CHECK(cfg.geometry.source_to_detector_mm == 180.0);
  CHECK(cfg.geometry.source_to_isocenter_mm == 132.0);
  CHECK(cfg.geometry.num_detectors == 512);
  CHECK(cfg.geometry.detector_pitch_mm == 0.1);
  CHECK(cfg.geometry.num_views == 640);
  CHECK(cfg.spectrum.mixing.num_bins() == 4);
  CHECK(cfg.noise.photons_per_ray == 5000);
  CHECK(cfg.recon_sart.outer_iterations == 30);
  CHECK(cfg.recon_tvm.outer_iterations == 30);
  CHECK(cfg.pipelines == all_pipeline_labels());
  CHECK(cfg.display_windows.at("bone") == DisplayWindow{0.03, 0.2});
  CHECK(cfg.display_windows.at("soft_tissue") == DisplayWindow{0.1, 0.85});
  CHECK(cfg.display_windows.at("iodine") == DisplayWindow{0.0007, 0.003});

  // The canonical form is self-contained and a fixed point.
  const auto again = validate_config(cfg.canonical_json, fs::temp_directory_path());
  REQUIRE(again.config.has_value());
  CHECK(again.config->canonical_json == cfg.canonical_json);
  CHECK(again.config->phantom == cfg.phantom);
}

TEST_CASE("desk-scale overlay and overrides") {
  ConfigOverrides o;
  o.desk_scale = true;
  o.seed = 7;
  o.pipelines = std::vector<std::string>{"TVM-TVMD"};
  o.output_dir = "/tmp/somewhere";
  const auto cfg = load_config(kData / "paper_analog.json", o);
  CHECK(cfg.geometry.image_width_px == 128);
  CHECK(cfg.geometry.image_height_px == 128);
  CHECK(cfg.geometry.num_detectors == 256);
  CHECK(cfg.geometry.num_views == 360);
  CHECK(cfg.noise.rng_seed == 7);
  CHECK(cfg.pipelines == std::vector<std::string>{"TVM-TVMD"});
  CHECK(cfg.output_dir == fs::path("/tmp/somewhere"));
  CHECK(cfg.recon_sart.sart_update == SartUpdate::kPerView);
  CHECK(cfg.recon_tvm.outer_iterations == 30);
  CHECK(cfg.geometry.source_to_detector_mm == 180.0);
  REQUIRE(cfg.profiles.size() == 2);
  CHECK(cfg.profiles[0].line.index == 54);
  CHECK(cfg.canonical_json != load_config(kData / "paper_analog.json").canonical_json);
}

TEST_CASE("phantom row through the large iodine insert plateaus at the insert fraction") {
  ConfigOverrides o;
  o.desk_scale = true;
  const auto cfg = load_config(kData / "paper_analog.json", o);
  const auto maps = make_phantom(cfg.phantom, cfg.geometry);
  const auto& line = cfg.profiles[0].line;
  REQUIRE(line.axis == LineAxis::kRow);
  const auto iodine = extract_profile(maps.data, line, 2);

  // Oracle: circle of radius 0.14 centred at (0.05, 0.15) in normalized units.
  std::size_t inside = 0;
  for (std::size_t c = 0; c < iodine.size(); ++c) {
    const Point2 p = pixel_center_normalized(cfg.geometry, line.index, c);
    const double dx = p.x - 0.05, dy = p.y - 0.15;
    if (dx * dx + dy * dy <= 0.14 * 0.14) {
      ++inside;
      CHECK(iodine[c] == 0.012);
    } else {
      CHECK(iodine[c] == 0.0);
    }
  }
  CHECK(inside >= 10);
}

TEST_CASE("external sinogram round trip and format errors") {
  const auto dir = scratch_dir("external");
  auto g = testing::rng(11);
  FanBeamGeometry geom = testing::small_geometry(16, 20);
  const Tensor3 t = testing::random_tensor(g, geom.num_views, geom.num_detectors, 4, 0.0, 3.0);
  write_tensor(dir / "s.smdk", t);
  const auto s = load_external_sinogram(dir / "s.smdk", geom, 4);
  REQUIRE(s.data.same_shape(t));
  CHECK(std::equal(t.values().begin(), t.values().end(), s.data.values().begin()));
  CHECK(read_file(dir / "s.smdk") == [&] {
    write_tensor(dir / "s2.smdk", s.data);
    return read_file(dir / "s2.smdk");
  }());

  CHECK_THROWS_AS(load_external_sinogram(dir / "s.smdk", geom, 3), std::invalid_argument);
  FanBeamGeometry other = geom;
  other.num_views = 21;
  CHECK_THROWS_AS(load_external_sinogram(dir / "s.smdk", other, 4), std::invalid_argument);

  std::string bytes = read_file(dir / "s.smdk");
  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream(dir / "bad.smdk", std::ios::binary) << bad;
    CHECK_THROWS_AS(load_external_sinogram(dir / "bad.smdk", geom, 4), FormatError);
  }
  {
    std::ofstream(dir / "short.smdk", std::ios::binary) << bytes.substr(0, bytes.size() - 8);
    const std::size_t payload = t.size() * sizeof(double);
    try {
      load_external_sinogram(dir / "short.smdk", geom, 4);
      FAIL("truncated file accepted");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("expected " + std::to_string(payload)) != std::string::npos);
      CHECK(msg.find(std::to_string(payload - 8)) != std::string::npos);
    }
  }
  {
    Tensor3 nan_t = t;
    nan_t(0, 0, 0) = std::nan("");
    write_tensor(dir / "nan.smdk", nan_t);
    CHECK_THROWS_AS(load_external_sinogram(dir / "nan.smdk", geom, 4), std::invalid_argument);
  }
  fs::remove_all(dir);
}

TEST_CASE("fnv1a hex vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("16-bit PGM maps the display window linearly") {
  const auto dir = scratch_dir("pgm");
  Tensor3 img(2, 3, 2);
  const double vals[6] = {-1.0, 0.0, 0.25, 0.5, 1.0, 2.0};
  for (std::size_t i = 0; i < 6; ++i) img(i / 3, i % 3, 1) = vals[i];
  write_pgm16(dir / "x.pgm", img, 1, {0.0, 1.0});
  const std::string b = read_file(dir / "x.pgm");
  const std::string header = "P5\n3 2\n65535\n";
  REQUIRE(b.size() == header.size() + 12);
  CHECK(b.substr(0, header.size()) == header);
  const std::uint16_t expect[6] = {0, 0, 16384, 32768, 65535, 65535};
  for (std::size_t i = 0; i < 6; ++i) {
    const auto hi = static_cast<unsigned char>(b[header.size() + 2 * i]);
    const auto lo = static_cast<unsigned char>(b[header.size() + 2 * i + 1]);
    CHECK((hi << 8 | lo) == expect[i]);
  }
  fs::remove_all(dir);
}

TEST_CASE("tiny run writes every artifact and is identical across thread counts") {
  const auto dir1 = scratch_dir("run1");
  const auto dir2 = scratch_dir("run2");
  ConfigOverrides o;
  o.output_dir = dir1;
  const auto c1 = must_validate(tiny_config(), o);
  o.output_dir = dir2;
  const auto c2 = must_validate(tiny_config(), o);

  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto m1 = run_experiment(c1);
  omp_set_num_threads(3);
  const auto m2 = run_experiment(c2);
  omp_set_num_threads(saved);

  CHECK(m1.all_ok());
  REQUIRE(m1.pipelines.size() == 4);
  // The hash covers output_dir, which is the only difference between the two configs.
  CHECK(m1.config_hash == fnv1a_hex(c1.canonical_json));
  CHECK(m2.config_hash == fnv1a_hex(c2.canonical_json));
  for (const char* f : {"config.json", "manifest.json", "metrics.csv", "ranking.csv", "ranking.txt", "sinogram.smdk",
                        "recon_SART/convergence.csv", "recon_TVM/channels.smdk", "TVM-TVMD/maps.smdk",
                        "TVM-TVMD/iodine.pgm", "SART-DI/convergence.csv", "profiles/profile1_row13_iodine.csv"}) {
    CHECK_MESSAGE(fs::exists(dir1 / f), f);
  }
  const auto manifest = json::parse(read_file(dir1 / "manifest.json"));
  CHECK(manifest["seed"] == 0);
  CHECK(manifest["pipelines"].size() == 4);
  CHECK(manifest["stage_seconds"].contains("simulate"));

  const auto a = artifact_bytes(dir1);
  const auto b = artifact_bytes(dir2);
  CHECK(a.size() > 20);
  REQUIRE(a.size() == b.size());
  for (const auto& [name, bytes] : a) CHECK_MESSAGE(bytes == b.at(name), name);

  // External sinogram path: rerunning on the simulated sinogram reproduces the run.
  json ext = tiny_config();
  ext["external_sinogram"] = (dir1 / "sinogram.smdk").string();
  const auto dir3 = scratch_dir("run3");
  o.output_dir = dir3;
  const auto m3 = run_experiment(must_validate(ext, o));
  CHECK(m3.all_ok());
  CHECK(read_file(dir3 / "metrics.csv") == read_file(dir1 / "metrics.csv"));
  for (const auto& d : {dir1, dir2, dir3}) fs::remove_all(d);
}

TEST_CASE("noise-free desk SART-DI recovers the phantom to 1e-2") {
  const auto dir = scratch_dir("desk_clean");
  json j = paper_analog_json();
  j["noise"]["enabled"] = false;
  ConfigOverrides o;
  o.desk_scale = true;
  o.output_dir = dir;
  o.pipelines = std::vector<std::string>{"SART-DI"};
  const auto m = run_experiment(must_validate(j, o));
  REQUIRE(m.all_ok());
  REQUIRE(m.metrics.size() == 1);
  for (const auto& mm : m.metrics[0].per_material) {
    MESSAGE(mm.material << " rmse " << mm.rmse);
    CHECK(mm.rmse <= 1e-2);
  }
  CHECK(m.clamp_events == 0);
  fs::remove_all(dir);
}
