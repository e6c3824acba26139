#include "smdk/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "smdk/tensor_io.hpp"

namespace smdk {

using nlohmann::json;

namespace {

const std::vector<std::string> kPipelineLabels = {"SART-DI", "TVM-DI", "SART-TVMD", "TVM-TVMD"};

// Desk-scale geometry plus the parameter set tuned for it.
const std::string kDeskScaleOverlay = R"json({
  "geometry": {
    "num_views": 360,
    "num_detectors": 256,
    "detector_pitch_mm": 0.2,
    "image_width_px": 128,
    "image_height_px": 128,
    "pixel_size_mm": 0.2
  },
  "recon": {
    "SART": {"outer_iterations": 30, "sart_relaxation": 0.2, "sart_update": "per-view"},
    "TVM": {"outer_iterations": 30, "sart_relaxation": 0.2, "sart_update": "per-view",
            "tv_weight_per_bin": [0.1, 0.06, 0.05, 0.04]}
  },
  "decomp": {
    "SART-TVMD": {"coupling_delta": 1.0, "tv_weight_per_material": [0.01, 0.2, 0.001]},
    "TVM-TVMD": {"coupling_delta": 1.0, "tv_weight_per_material": [0.01, 0.2, 0.001]}
  },
  "profiles": [{"axis": "row", "index": 54}, {"axis": "column", "index": 64}]
})json";

class Checker {
 public:
  explicit Checker(std::vector<std::string>& errors) : errors_(errors) {}

  void error(const std::string& where, const std::string& what) { errors_.push_back(where + ": " + what); }

  void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) return;
    for (const auto& item : obj.items()) {
      bool known = false;
      for (const char* k : keys) known = known || item.key() == k;
      if (!known) error(where + "." + item.key(), "unknown field");
    }
  }

  bool require_object(const json& obj, const std::string& where) {
    if (obj.is_object()) return true;
    error(where, "expected an object");
    return false;
  }

  void number(const json& obj, const char* key, double& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number()) return error(where + "." + key, "expected a number");
    out = v.get<double>();
  }

  void count(const json& obj, const char* key, std::size_t& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) return error(where + "." + key, "expected an integer");
    if (v.get<long long>() < 0) return error(where + "." + key, "must be non-negative");
    out = v.get<std::size_t>();
  }

  void u64(const json& obj, const char* key, std::uint64_t& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) return error(where + "." + key, "expected an integer");
    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
      return error(where + "." + key, "must be non-negative");
    }
    out = v.get<std::uint64_t>();
  }

  void boolean(const json& obj, const char* key, bool& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_boolean()) return error(where + "." + key, "expected true or false");
    out = v.get<bool>();
  }

  void numbers(const json& obj, const char* key, std::vector<double>& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_array()) return error(where + "." + key, "expected an array of numbers");
    out.clear();
    for (const auto& x : v) {
      if (!x.is_number()) return error(where + "." + key, "expected an array of numbers");
      out.push_back(x.get<double>());
    }
  }

  void strings(const json& obj, const char* key, std::vector<std::string>& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_array()) return error(where + "." + key, "expected an array of strings");
    out.clear();
    for (const auto& x : v) {
      if (!x.is_string()) return error(where + "." + key, "expected an array of strings");
      out.push_back(x.get<std::string>());
    }
  }

  // Runs `fn` and records std::exception messages as errors at `where`.
  template <class Fn>
  void invariant(const std::string& where, Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      error(where, e.what());
    }
  }

 private:
  std::vector<std::string>& errors_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::optional<json> load_json_file(const std::filesystem::path& path, const std::string& where, Checker& c) {
  std::ifstream in(path);
  if (!in) {
    c.error(where, "cannot open referenced file " + path.string());
    return std::nullopt;
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    c.error(where, std::string("invalid JSON in ") + path.string() + ": " + e.what());
    return std::nullopt;
  }
}

void parse_geometry(const json& g, FanBeamGeometry& out, Checker& c) {
  const std::string w = "geometry";
  if (!c.require_object(g, w)) return;
  c.allow_keys(g, w, {"source_to_detector_mm", "source_to_isocenter_mm", "num_views", "num_detectors",
                      "detector_pitch_mm", "image_width_px", "image_height_px", "pixel_size_mm",
                      "angular_range_rad", "detector_offset_px", "start_angle_rad", "sub_rays"});
  c.number(g, "source_to_detector_mm", out.source_to_detector_mm, w);
  c.number(g, "source_to_isocenter_mm", out.source_to_isocenter_mm, w);
  c.count(g, "num_views", out.num_views, w);
  c.count(g, "num_detectors", out.num_detectors, w);
  c.number(g, "detector_pitch_mm", out.detector_pitch_mm, w);
  c.count(g, "image_width_px", out.image_width_px, w);
  c.count(g, "image_height_px", out.image_height_px, w);
  c.number(g, "pixel_size_mm", out.pixel_size_mm, w);
  c.number(g, "angular_range_rad", out.angular_range_rad, w);
  c.number(g, "detector_offset_px", out.detector_offset_px, w);
  c.number(g, "start_angle_rad", out.start_angle_rad, w);
  c.count(g, "sub_rays", out.sub_rays, w);
  c.invariant(w, [&] { out.validate(); });
}

void parse_phantom(const json& p, PhantomSpec& out, Checker& c) {
  const std::string w = "phantom";
  if (!c.require_object(p, w)) return;
  c.allow_keys(p, w, {"materials", "ellipses", "description"});
  if (!p.contains("materials")) c.error(w + ".materials", "missing required field");
  c.strings(p, "materials", out.material_names, w);
  if (!p.contains("ellipses")) return c.error(w + ".ellipses", "missing required field");
  if (!p.at("ellipses").is_array()) return c.error(w + ".ellipses", "expected an array");
  out.ellipses.clear();
  std::size_t i = 0;
  for (const auto& e : p.at("ellipses")) {
    const std::string we = w + ".ellipses[" + std::to_string(i++) + "]";
    if (!c.require_object(e, we)) continue;
    c.allow_keys(e, we, {"center", "semi_axes", "rotation_rad", "fractions", "label"});
    Ellipse el;
    std::vector<double> centre, axes;
    c.numbers(e, "center", centre, we);
    c.numbers(e, "semi_axes", axes, we);
    c.numbers(e, "fractions", el.material_fractions, we);
    c.number(e, "rotation_rad", el.rotation_rad, we);
    if (centre.size() != 2) c.error(we + ".center", "expected [x, y]");
    if (axes.size() != 2) c.error(we + ".semi_axes", "expected [a, b]");
    if (centre.size() == 2) el.center_x = centre[0], el.center_y = centre[1];
    if (axes.size() == 2) el.semi_axis_a = axes[0], el.semi_axis_b = axes[1];
    out.ellipses.push_back(el);
  }
  c.invariant(w, [&] { out.validate(); });
}

void parse_spectrum(const json& s, SpectrumSpec& out, const std::filesystem::path& base, Checker& c) {
  const std::string w = "spectrum";
  if (!c.require_object(s, w)) return;
  c.allow_keys(s, w, {"bin_edges_keV", "materials", "mixing_cm-1", "mixing_tensor", "provenance",
                      "condition_number"});
  if (!s.contains("bin_edges_keV")) c.error(w + ".bin_edges_keV", "missing required field");
  c.numbers(s, "bin_edges_keV", out.bin_edges_keV, w);
  std::vector<std::string> names;
  c.strings(s, "materials", names, w);
  RowMatrix values;
  if (s.contains("mixing_cm-1")) {
    const auto& m = s.at("mixing_cm-1");
    bool ok = m.is_array() && !m.empty();
    std::size_t cols = ok && m[0].is_array() ? m[0].size() : 0;
    ok = ok && cols > 0;
    if (ok) {
      values.resize(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; ok && r < m.size(); ++r) {
        ok = m[r].is_array() && m[r].size() == cols;
        for (std::size_t k = 0; ok && k < cols; ++k) {
          ok = m[r][k].is_number();
          if (ok) values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = m[r][k].get<double>();
        }
      }
    }
    if (!ok) return c.error(w + ".mixing_cm-1", "expected a rectangular matrix of numbers (bins x materials)");
  } else if (s.contains("mixing_tensor")) {
    if (!s.at("mixing_tensor").is_string()) return c.error(w + ".mixing_tensor", "expected a path");
    const auto path = resolve(base, s.at("mixing_tensor").get<std::string>());
    try {
      const Tensor3 t = read_tensor(path);
      if (t.slices() != 1) return c.error(w + ".mixing_tensor", "expected an N x V x 1 tensor");
      values = mode3_unfold(t).reshaped<Eigen::RowMajor>(static_cast<Eigen::Index>(t.rows()),
                                                        static_cast<Eigen::Index>(t.cols()));
    } catch (const std::exception& e) {
      return c.error(w + ".mixing_tensor", e.what());
    }
  } else {
    return c.error(w + ".mixing_cm-1", "missing required field (or mixing_tensor)");
  }
  c.invariant(w + ".mixing", [&] {
    out.mixing = MixingMatrix(values, names);
    if (!out.mixing.full_column_rank()) throw std::invalid_argument("mixing matrix is rank deficient");
  });
  c.invariant(w, [&] { out.validate(); });
}

void parse_recon(const json& r, ReconParams& out, const std::string& w, Checker& c) {
  if (!c.require_object(r, w)) return;
  c.allow_keys(r, w, {"outer_iterations", "sart_relaxation", "sart_update", "tv_weight_per_bin",
                      "tv_inner_iterations", "tv_step", "coupling_tau", "tv_epsilon"});
  c.count(r, "outer_iterations", out.outer_iterations, w);
  c.number(r, "sart_relaxation", out.sart_relaxation, w);
  if (r.contains("sart_update")) {
    const auto& v = r.at("sart_update");
    if (!v.is_string()) {
      c.error(w + ".sart_update", "expected \"per-view\" or \"simultaneous\"");
    } else {
      c.invariant(w + ".sart_update", [&] { out.sart_update = parse_sart_update(v.get<std::string>()); });
    }
  }
  c.numbers(r, "tv_weight_per_bin", out.tv_weight_per_bin, w);
  c.count(r, "tv_inner_iterations", out.tv_inner_iterations, w);
  c.number(r, "tv_step", out.tv_step, w);
  c.number(r, "coupling_tau", out.coupling_tau, w);
  c.number(r, "tv_epsilon", out.tv_epsilon, w);
}

void parse_decomp(const json& d, DecompParams& out, const std::string& w, Checker& c) {
  if (!c.require_object(d, w)) return;
  c.allow_keys(d, w, {"outer_iterations", "coupling_delta", "tv_weight_per_material", "tv_inner_iterations",
                      "tv_step", "tv_epsilon", "enforce_constraints", "project_di"});
  c.count(d, "outer_iterations", out.outer_iterations, w);
  c.number(d, "coupling_delta", out.coupling_delta, w);
  c.numbers(d, "tv_weight_per_material", out.tv_weight_per_material, w);
  c.count(d, "tv_inner_iterations", out.tv_inner_iterations, w);
  c.number(d, "tv_step", out.tv_step, w);
  c.number(d, "tv_epsilon", out.tv_epsilon, w);
  c.boolean(d, "enforce_constraints", out.enforce_constraints, w);
  c.boolean(d, "project_di", out.project_di, w);
}

std::map<std::string, DisplayWindow> default_windows() {
  return {{"bone", {0.03, 0.2}}, {"soft_tissue", {0.1, 0.85}}, {"iodine", {0.0007, 0.003}}};
}

}  // namespace

PipelineId parse_pipeline(const std::string& label) {
  const auto dash = label.find('-');
  if (dash == std::string::npos || std::find(kPipelineLabels.begin(), kPipelineLabels.end(), label) ==
                                       kPipelineLabels.end()) {
    throw std::invalid_argument("unknown pipeline '" + label + "' (expected SART-DI, TVM-DI, SART-TVMD or TVM-TVMD)");
  }
  return {parse_recon_mode(label.substr(0, dash)), parse_decomp_mode(label.substr(dash + 1))};
}

const std::vector<std::string>& all_pipeline_labels() { return kPipelineLabels; }

const std::string& desk_scale_overlay() { return kDeskScaleOverlay; }

const ReconParams& ExperimentConfig::recon_params(ReconMode mode) const {
  return mode == ReconMode::kSart ? recon_sart : recon_tvm;
}

const DecompParams& ExperimentConfig::decomp_params(PipelineId id) const {
  if (id.decomp == DecompMode::kDi) return decomp_di;
  return id.recon == ReconMode::kSart ? decomp_sart_tvmd : decomp_tvm_tvmd;
}

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error([&] {
        std::string msg = "invalid experiment config:";
        for (const auto& e : errors) msg += "\n  " + e;
        return msg;
      }()),
      errors_(std::move(errors)) {}

ConfigResult validate_config(const std::string& raw_text, const std::filesystem::path& base_dir,
                             const ConfigOverrides& overrides) {
  ConfigResult result;
  Checker c(result.errors);
  json root;
  try {
    root = json::parse(raw_text);
  } catch (const json::parse_error& e) {
    result.errors.push_back(std::string("config: invalid JSON: ") + e.what());
    return result;
  }
  if (!root.is_object()) {
    result.errors.emplace_back("config: top level must be an object");
    return result;
  }
  if (overrides.desk_scale) root.merge_patch(json::parse(kDeskScaleOverlay));
  if (overrides.seed) root["noise"]["seed"] = *overrides.seed;
  if (overrides.output_dir) root["output_dir"] = overrides.output_dir->string();
  if (overrides.pipelines) root["pipelines"] = *overrides.pipelines;

  c.allow_keys(root, "config", {"geometry", "phantom", "spectrum", "noise", "recon", "decomp", "pipelines",
                                "output_dir", "external_sinogram", "reference_mode", "display_windows",
                                "profiles", "description"});

  ExperimentConfig cfg;
  if (root.contains("geometry")) parse_geometry(root["geometry"], cfg.geometry, c);
  else c.error("geometry", "missing required field");

  // Referenced files are inlined so the canonical form captures their content.
  for (const char* key : {"phantom", "spectrum"}) {
    if (!root.contains(key)) {
      c.error(key, "missing required field");
      continue;
    }
    if (root[key].is_string()) {
      const auto path = resolve(base_dir, root[key].get<std::string>());
      if (auto loaded = load_json_file(path, key, c)) root[key] = *loaded;
      else root.erase(key);
    }
  }
  if (root.contains("phantom")) parse_phantom(root["phantom"], cfg.phantom, c);
  if (root.contains("spectrum")) parse_spectrum(root["spectrum"], cfg.spectrum, base_dir, c);
  if (!cfg.phantom.material_names.empty() && cfg.spectrum.mixing.num_materials() > 0 &&
      cfg.phantom.material_names != cfg.spectrum.mixing.material_names()) {
    c.error("phantom.materials", "must match spectrum.materials in name and order");
  }

  if (root.contains("noise")) {
    const auto& n = root["noise"];
    if (c.require_object(n, "noise")) {
      c.allow_keys(n, "noise", {"enabled", "photons_per_ray", "seed", "min_counts_clamp"});
      c.boolean(n, "enabled", cfg.noise_enabled, "noise");
      if (n.contains("photons_per_ray") && n["photons_per_ray"].is_number() && n["photons_per_ray"].get<double>() < 1) {
        c.error("noise.photons_per_ray", "must be >= 1");
      } else {
        c.u64(n, "photons_per_ray", cfg.noise.photons_per_ray, "noise");
      }
      c.u64(n, "seed", cfg.noise.rng_seed, "noise");
      c.u64(n, "min_counts_clamp", cfg.noise.min_counts_clamp, "noise");
      c.invariant("noise", [&] { cfg.noise.validate(); });
    }
  }

  const std::size_t bins = cfg.spectrum.mixing.num_bins();
  const std::size_t materials = cfg.phantom.material_names.size();
  if (root.contains("recon") && c.require_object(root["recon"], "recon")) {
    const auto& r = root["recon"];
    c.allow_keys(r, "recon", {"SART", "TVM"});
    if (r.contains("SART")) parse_recon(r["SART"], cfg.recon_sart, "recon.SART", c);
    if (r.contains("TVM")) parse_recon(r["TVM"], cfg.recon_tvm, "recon.TVM", c);
  }
  if (bins > 0) {
    c.invariant("recon.SART", [&] { cfg.recon_sart.validate(bins); });
    c.invariant("recon.TVM", [&] { cfg.recon_tvm.validate(bins); });
  }
  if (root.contains("decomp") && c.require_object(root["decomp"], "decomp")) {
    const auto& d = root["decomp"];
    c.allow_keys(d, "decomp", {"DI", "SART-TVMD", "TVM-TVMD"});
    if (d.contains("DI")) parse_decomp(d["DI"], cfg.decomp_di, "decomp.DI", c);
    if (d.contains("SART-TVMD")) parse_decomp(d["SART-TVMD"], cfg.decomp_sart_tvmd, "decomp.SART-TVMD", c);
    if (d.contains("TVM-TVMD")) parse_decomp(d["TVM-TVMD"], cfg.decomp_tvm_tvmd, "decomp.TVM-TVMD", c);
  }
  if (materials > 0) {
    c.invariant("decomp.DI", [&] { cfg.decomp_di.validate(materials, DecompMode::kDi); });
    c.invariant("decomp.SART-TVMD", [&] { cfg.decomp_sart_tvmd.validate(materials, DecompMode::kTvmd); });
    c.invariant("decomp.TVM-TVMD", [&] { cfg.decomp_tvm_tvmd.validate(materials, DecompMode::kTvmd); });
  }

  if (!root.contains("pipelines")) {
    c.error("pipelines", "missing required field");
  } else {
    c.strings(root, "pipelines", cfg.pipelines, "config");
    if (root["pipelines"].is_array() && cfg.pipelines.empty()) c.error("pipelines", "select at least one pipeline");
    std::set<std::string> seen;
    for (const auto& p : cfg.pipelines) {
      c.invariant("pipelines", [&] { parse_pipeline(p); });
      if (!seen.insert(p).second) c.error("pipelines", "duplicate entry '" + p + "'");
    }
  }

  cfg.output_dir = "run";
  if (root.contains("output_dir")) {
    if (root["output_dir"].is_string()) cfg.output_dir = resolve(base_dir, root["output_dir"].get<std::string>());
    else c.error("output_dir", "expected a path");
  }
  if (root.contains("external_sinogram") && !root["external_sinogram"].is_null()) {
    if (!root["external_sinogram"].is_string()) {
      c.error("external_sinogram", "expected a path or null");
    } else {
      cfg.external_sinogram = resolve(base_dir, root["external_sinogram"].get<std::string>());
      if (!std::filesystem::exists(*cfg.external_sinogram)) {
        c.error("external_sinogram", "file does not exist: " + cfg.external_sinogram->string());
      }
    }
  }
  if (root.contains("reference_mode")) {
    const auto& m = root["reference_mode"];
    if (m == "true-phantom") cfg.reference_mode = ReferenceMode::kTruePhantom;
    else if (m == "paper-analog") cfg.reference_mode = ReferenceMode::kPaperAnalog;
    else c.error("reference_mode", "expected \"true-phantom\" or \"paper-analog\"");
  }

  cfg.display_windows = default_windows();
  if (root.contains("display_windows") && c.require_object(root["display_windows"], "display_windows")) {
    for (const auto& item : root["display_windows"].items()) {
      const auto& v = item.value();
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number() ||
          !(v[1].get<double>() > v[0].get<double>())) {
        c.error("display_windows." + item.key(), "expected [lo, hi] with hi > lo");
        continue;
      }
      cfg.display_windows[item.key()] = {v[0].get<double>(), v[1].get<double>()};
    }
  }

  if (root.contains("profiles")) {
    const auto& ps = root["profiles"];
    if (!ps.is_array()) {
      c.error("profiles", "expected an array");
    } else {
      std::size_t i = 0;
      for (const auto& p : ps) {
        const std::string w = "profiles[" + std::to_string(i++) + "]";
        if (!c.require_object(p, w)) continue;
        c.allow_keys(p, w, {"axis", "index"});
        ProfileSpec spec;
        if (p.value("axis", "") == "row") spec.line.axis = LineAxis::kRow;
        else if (p.value("axis", "") == "column") spec.line.axis = LineAxis::kColumn;
        else c.error(w + ".axis", "expected \"row\" or \"column\"");
        c.count(p, "index", spec.line.index, w);
        const std::size_t limit = spec.line.axis == LineAxis::kRow ? cfg.geometry.image_height_px
                                                                   : cfg.geometry.image_width_px;
        if (spec.line.index >= limit) c.error(w + ".index", "outside the image");
        cfg.profiles.push_back(spec);
      }
    }
  }

  if (!result.errors.empty()) return result;
  cfg.canonical_json = root.dump(2);
  result.config = std::move(cfg);
  return result;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open " + path.string()});
  std::stringstream buf;
  buf << in.rdbuf();
  auto result = validate_config(buf.str(), path.parent_path(), overrides);
  if (!result.config) throw ConfigError(result.errors);
  return std::move(*result.config);
}

SinogramStack load_external_sinogram(const std::filesystem::path& path, const FanBeamGeometry& geom,
                                     std::size_t expected_bins) {
  Tensor3 t = read_tensor(path);
  if (t.rows() != geom.num_views || t.cols() != geom.num_detectors || t.slices() != expected_bins) {
    throw std::invalid_argument("external sinogram " + path.string() + " has shape " + std::to_string(t.rows()) +
                                "x" + std::to_string(t.cols()) + "x" + std::to_string(t.slices()) +
                                ", expected " + std::to_string(geom.num_views) + "x" +
                                std::to_string(geom.num_detectors) + "x" + std::to_string(expected_bins));
  }
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("external sinogram contains non-finite values");
  }
  return {std::move(t), geom};
}

void write_pgm16(const std::filesystem::path& path, const Tensor3& img, std::size_t k, DisplayWindow window) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << img.cols() << ' ' << img.rows() << "\n65535\n";
  const auto s = img.slice(k);
  std::vector<unsigned char> buf(2 * s.size());
  const double span = window.hi - window.lo;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t = std::clamp((s[i] - window.lo) / span, 0.0, 1.0);
    const auto v = static_cast<std::uint16_t>(std::lround(t * 65535.0));
    buf[2 * i] = static_cast<unsigned char>(v >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(v & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void write_csv_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

bool RunManifest::all_ok() const {
  return std::all_of(pipelines.begin(), pipelines.end(), [](const auto& p) { return p.ok; });
}

std::string RunManifest::to_json() const {
  json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["version"] = version;
  j["clamp_events"] = clamp_events;
  j["warnings"] = warnings;
  j["stage_seconds"] = stage_seconds;
  j["pipelines"] = json::array();
  for (const auto& p : pipelines) {
    json e{{"label", p.label}, {"ok", p.ok}, {"seconds", p.seconds}};
    if (!p.ok) e["error"] = p.error;
    j["pipelines"].push_back(e);
  }
  j["metrics"] = json::array();
  for (const auto& r : metrics) {
    for (const auto& m : r.per_material) {
      j["metrics"].push_back({{"pipeline", r.pipeline_label}, {"material", m.material}, {"rmse", m.rmse},
                              {"psnr_db", std::isinf(m.psnr_db) ? json("inf") : json(m.psnr_db)},
                              {"ssim", m.ssim}});
    }
  }
  return j.dump(2) + "\n";
}

SimulationOutput simulate(const ExperimentConfig& config, const Projector& projector) {
  SimulationOutput out;
  out.phantom = make_phantom(config.phantom, config.geometry);
  out.channels = mix_channels(out.phantom, config.spectrum.mixing, config.geometry);
  out.clean = synthesize_sinograms(out.channels, projector);
  if (config.noise_enabled) {
    auto noisy = apply_poisson_noise(out.clean, config.noise);
    out.measured = std::move(noisy.sinogram);
    out.clamp_events = noisy.clamp_events;
  } else {
    out.measured = out.clean;
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string to_csv(const ConvergenceLog& log) {
  std::ostringstream s;
  log.write_csv(s);
  return s.str();
}

std::string to_csv(const DecompLog& log) {
  std::ostringstream s;
  log.write_csv(s);
  return s.str();
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  RunManifest manifest;
  manifest.config_hash = fnv1a_hex(config.canonical_json);
  manifest.seed = config.noise.rng_seed;
  manifest.warnings = config.geometry.warnings();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  write_csv_file(dir / "config.json", config.canonical_json + "\n");

  const Projector projector(config.geometry);
  const auto& mixing = config.spectrum.mixing;
  const auto& names = mixing.material_names();

  auto t0 = Clock::now();
  SimulationOutput sim = simulate(config, projector);
  manifest.clamp_events = sim.clamp_events;
  if (config.external_sinogram) {
    sim.measured = load_external_sinogram(*config.external_sinogram, config.geometry, mixing.num_bins());
    manifest.clamp_events = 0;
  }
  write_tensor(dir / "phantom_maps.smdk", sim.phantom.data);
  write_tensor(dir / "phantom_channels.smdk", sim.channels.data);
  write_tensor(dir / "sinogram_clean.smdk", sim.clean.data);
  write_tensor(dir / "sinogram.smdk", sim.measured.data);
  manifest.stage_seconds["simulate"] = seconds_since(t0);

  // Metric reference.
  t0 = Clock::now();
  MaterialMapStack reference = sim.phantom;
  if (config.reference_mode == ReferenceMode::kPaperAnalog) {
    const auto clean_recon = reconstruct(sim.clean, projector, config.recon_sart, ReconMode::kSart);
    reference = direct_inversion(clean_recon.images, mixing);
  }
  const ChannelImageStack reference_channels = mix_channels(reference, mixing, config.geometry);
  write_tensor(dir / "reference_maps.smdk", reference.data);
  manifest.stage_seconds["reference"] = seconds_since(t0);

  std::vector<PipelineId> ids;
  for (const auto& label : config.pipelines) ids.push_back(parse_pipeline(label));

  std::map<ReconMode, ReconResult> recons;
  std::map<ReconMode, std::string> recon_errors;
  for (ReconMode mode : {ReconMode::kSart, ReconMode::kTvm}) {
    if (std::none_of(ids.begin(), ids.end(), [&](const auto& id) { return id.recon == mode; })) continue;
    t0 = Clock::now();
    try {
      auto r = reconstruct(sim.measured, projector, config.recon_params(mode), mode, &reference_channels);
      const fs::path sub = dir / ("recon_" + to_string(mode));
      fs::create_directories(sub);
      write_tensor(sub / "channels.smdk", r.images.data);
      write_csv_file(sub / "convergence.csv", to_csv(r.log));
      recons.emplace(mode, std::move(r));
    } catch (const std::exception& e) {
      recon_errors[mode] = e.what();
    }
    manifest.stage_seconds["recon_" + to_string(mode)] = seconds_since(t0);
  }

  std::vector<MetricReport> reports;
  std::vector<std::pair<std::string, MaterialMapStack>> outputs;
  for (const auto& id : ids) {
    PipelineStatus status;
    status.label = id.label();
    t0 = Clock::now();
    try {
      if (auto e = recon_errors.find(id.recon); e != recon_errors.end()) {
        throw std::runtime_error("reconstruction failed: " + e->second);
      }
      const auto& channels = recons.at(id.recon).images;
      auto result = decompose(channels, mixing, config.decomp_params(id), id.decomp, &reference);
      for (double v : result.maps.data.values()) {
        if (!std::isfinite(v)) throw std::runtime_error("decomposition produced non-finite values");
      }
      const fs::path sub = dir / id.label();
      fs::create_directories(sub);
      write_tensor(sub / "maps.smdk", result.maps.data);
      write_tensor(sub / "air.smdk", result.air.data);
      write_csv_file(sub / "convergence.csv", to_csv(result.log));
      for (std::size_t v = 0; v < names.size(); ++v) {
        const auto w = config.display_windows.count(names[v]) ? config.display_windows.at(names[v]) : DisplayWindow{};
        write_pgm16(sub / (names[v] + ".pgm"), result.maps.data, v, w);
      }
      reports.push_back(evaluate_maps(id.label(), result.maps.data, reference.data, names));
      outputs.emplace_back(id.label(), std::move(result.maps));
      status.ok = true;
    } catch (const std::exception& e) {
      status.error = e.what();
    }
    status.seconds = seconds_since(t0);
    manifest.pipelines.push_back(status);
  }

  {
    std::ostringstream s;
    write_metrics_csv(s, reports);
    write_csv_file(dir / "metrics.csv", s.str());
  }
  if (!reports.empty()) {
    const auto table = compare_pipelines(reports);
    std::ostringstream csv, text;
    table.write_csv(csv);
    table.write_text(text);
    write_csv_file(dir / "ranking.csv", csv.str());
    write_csv_file(dir / "ranking.txt", text.str());
  }
  if (!config.profiles.empty()) fs::create_directories(dir / "profiles");
  for (std::size_t p = 0; p < config.profiles.size(); ++p) {
    const auto& line = config.profiles[p].line;
    for (std::size_t v = 0; v < names.size(); ++v) {
      std::ostringstream s;
      s << "index,reference";
      for (const auto& o : outputs) s << ',' << o.first;
      s << '\n';
      const auto ref = extract_profile(reference.data, line, v);
      std::vector<std::vector<double>> series;
      for (const auto& o : outputs) series.push_back(extract_profile(o.second.data, line, v));
      for (std::size_t i = 0; i < ref.size(); ++i) {
        s << i << ',' << format_number(ref[i]);
        for (const auto& ser : series) s << ',' << format_number(ser[i]);
        s << '\n';
      }
      const std::string axis = line.axis == LineAxis::kRow ? "row" : "column";
      write_csv_file(dir / "profiles" / ("profile" + std::to_string(p + 1) + "_" + axis + std::to_string(line.index) +
                                         "_" + names[v] + ".csv"),
                     s.str());
    }
  }
  manifest.metrics = reports;
  write_csv_file(dir / "manifest.json", manifest.to_json());
  return manifest;
}

}  // namespace smdk
