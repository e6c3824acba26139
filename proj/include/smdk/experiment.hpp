#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "smdk/decomp.hpp"
#include "smdk/metrics.hpp"
#include "smdk/recon.hpp"
#include "smdk/simulate.hpp"
#include "smdk/types.hpp"

namespace smdk {

inline constexpr const char* kVersion = "0.1.0";

/// The four compared pipelines: reconstruction mode followed by decomposition mode.
struct PipelineId {
  ReconMode recon = ReconMode::kSart;
  DecompMode decomp = DecompMode::kDi;

  std::string label() const { return to_string(recon) + "-" + to_string(decomp); }
  friend bool operator==(const PipelineId&, const PipelineId&) = default;
};

/// Parses "SART-DI", "TVM-DI", "SART-TVMD" or "TVM-TVMD".
PipelineId parse_pipeline(const std::string& label);
const std::vector<std::string>& all_pipeline_labels();

enum class ReferenceMode { kTruePhantom, kPaperAnalog };

struct DisplayWindow {
  double lo = 0.0;
  double hi = 1.0;
  friend bool operator==(const DisplayWindow&, const DisplayWindow&) = default;
};

struct ProfileSpec {
  ProfileLine line;
  friend bool operator==(const ProfileSpec& a, const ProfileSpec& b) {
    return a.line.axis == b.line.axis && a.line.index == b.line.index;
  }
};

struct ExperimentConfig {
  FanBeamGeometry geometry;
  PhantomSpec phantom;
  SpectrumSpec spectrum;
  NoiseModel noise;
  bool noise_enabled = true;
  ReconParams recon_sart;
  ReconParams recon_tvm;
  DecompParams decomp_di;
  DecompParams decomp_sart_tvmd;
  DecompParams decomp_tvm_tvmd;
  std::vector<std::string> pipelines;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> external_sinogram;
  ReferenceMode reference_mode = ReferenceMode::kTruePhantom;
  std::map<std::string, DisplayWindow> display_windows;
  std::vector<ProfileSpec> profiles;
  /// Canonical JSON of the effective configuration; hashed into the manifest.
  std::string canonical_json;

  const ReconParams& recon_params(ReconMode mode) const;
  const DecompParams& decomp_params(PipelineId id) const;
};

/// Thrown by load_config when validation fails; carries every problem found.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::vector<std::string>> pipelines;
  bool desk_scale = false;
};

struct ConfigResult {
  std::optional<ExperimentConfig> config;
  std::vector<std::string> errors;
};

/// Parses and validates a JSON experiment file. Relative paths resolve
/// against `base_dir`. All schema and invariant violations are reported
/// together.
ConfigResult validate_config(const std::string& raw_text, const std::filesystem::path& base_dir = {},
                             const ConfigOverrides& overrides = {});

/// Reads `path` and validates it; throws ConfigError on any problem.
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// JSON overlay applied by `--desk-scale` (128x128 grid, 256 detectors, 360
/// views, and the parameter set tuned for that size).
const std::string& desk_scale_overlay();

/// Reads a (views, detectors, bins) tensor and checks it against the geometry
/// and the bin count. Throws FormatError or std::invalid_argument.
SinogramStack load_external_sinogram(const std::filesystem::path& path, const FanBeamGeometry& geom,
                                     std::size_t expected_bins);

/// 16-bit binary PGM of slice `k` mapped linearly from [lo, hi] to [0, 65535].
void write_pgm16(const std::filesystem::path& path, const Tensor3& img, std::size_t k, DisplayWindow window);

struct PipelineStatus {
  std::string label;
  bool ok = false;
  std::string error;
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::vector<PipelineStatus> pipelines;
  std::map<std::string, double> stage_seconds;
  std::size_t clamp_events = 0;
  std::vector<std::string> warnings;
  std::vector<MetricReport> metrics;

  bool all_ok() const;
  std::string to_json() const;
};

/// FNV-1a 64-bit hash, hex encoded.
std::string fnv1a_hex(const std::string& text);

/// Simulates (or loads) one sinogram realization, runs every selected
/// pipeline on it and writes all artifacts under config.output_dir. A failing
/// pipeline is recorded in the manifest and the others still run.
RunManifest run_experiment(const ExperimentConfig& config);

/// Stages exposed individually for the CLI subcommands.
struct SimulationOutput {
  MaterialMapStack phantom;
  ChannelImageStack channels;
  SinogramStack clean;
  SinogramStack measured;
  std::size_t clamp_events = 0;
};
SimulationOutput simulate(const ExperimentConfig& config, const Projector& projector);

void write_csv_file(const std::filesystem::path& path, const std::string& content);

}  // namespace smdk
