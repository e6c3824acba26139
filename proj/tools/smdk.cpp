// Command-line front end: simulate, reconstruct, decompose, run, metrics, validate.
//
// Exit codes: 0 success, 1 a stage or pipeline failed, 2 invalid configuration
// or arguments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "smdk/experiment.hpp"
#include "smdk/tensor_io.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> pipelines;
  bool desk_scale = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_pipelines) {
  cmd->add_option("-c,--config", o.config, "Experiment JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out, "Output directory (overrides output_dir)");
  cmd->add_option("--seed", o.seed, "Noise RNG seed (overrides noise.seed)");
  cmd->add_flag("--desk-scale", o.desk_scale, "Apply the 128x128 desk-scale overlay");
  if (with_pipelines) {
    cmd->add_option("--pipelines", o.pipelines, "Subset of SART-DI TVM-DI SART-TVMD TVM-TVMD")->delimiter(',');
  }
}

smdk::ExperimentConfig load(const CommonOptions& o) {
  smdk::ConfigOverrides ov;
  ov.seed = o.seed;
  ov.desk_scale = o.desk_scale;
  if (!o.out.empty()) ov.output_dir = fs::absolute(o.out);
  if (!o.pipelines.empty()) ov.pipelines = o.pipelines;
  return smdk::load_config(o.config, ov);
}

fs::path prepare_out(const smdk::ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  return cfg.output_dir;
}

template <class Log>
void write_log(const fs::path& path, const Log& log) {
  std::ostringstream s;
  log.write_csv(s);
  smdk::write_csv_file(path, s.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral CT material decomposition experiments"};
  app.set_version_flag("--version", std::string(smdk::kVersion));
  app.require_subcommand(1);

  CommonOptions validate_opts, sim_opts, run_opts, rec_opts, dec_opts, met_opts;

  auto* validate = app.add_subcommand("validate", "Check a config file and print every problem found");
  add_common(validate, validate_opts, true);

  auto* sim = app.add_subcommand("simulate", "Phantom, channel images and (noisy) sinograms");
  add_common(sim, sim_opts, false);

  std::string sinogram_path, rec_mode = "SART";
  auto* rec = app.add_subcommand("reconstruct", "Per-bin SART or TVM reconstruction of a sinogram stack");
  add_common(rec, rec_opts, false);
  rec->add_option("--sinogram", sinogram_path, "Sinogram tensor (views x detectors x bins)")
      ->required()
      ->check(CLI::ExistingFile);
  rec->add_option("--mode", rec_mode, "SART or TVM")->check(CLI::IsMember({"SART", "TVM"}));

  std::string channels_path, dec_pipeline = "SART-DI";
  auto* dec = app.add_subcommand("decompose", "Material decomposition of reconstructed channel images");
  add_common(dec, dec_opts, false);
  dec->add_option("--channels", channels_path, "Channel image tensor (rows x cols x bins)")
      ->required()
      ->check(CLI::ExistingFile);
  dec->add_option("--pipeline", dec_pipeline, "Selects the DI or TVMD parameter block")
      ->check(CLI::IsMember(smdk::all_pipeline_labels()));

  auto* run = app.add_subcommand("run", "Simulate once and run every selected pipeline");
  add_common(run, run_opts, true);

  std::string maps_path, reference_path;
  auto* met = app.add_subcommand("metrics", "RMSE, PSNR and SSIM of material maps against a reference");
  add_common(met, met_opts, false);
  met->add_option("--maps", maps_path, "Material map tensor")->required()->check(CLI::ExistingFile);
  met->add_option("--reference", reference_path, "Reference map tensor")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (validate->parsed()) {
      const auto cfg = load(validate_opts);
      for (const auto& w : cfg.geometry.warnings()) std::cout << "warning: " << w << '\n';
      std::cout << "config OK (hash " << smdk::fnv1a_hex(cfg.canonical_json) << ")\n";
      return kOk;
    }
    if (sim->parsed()) {
      const auto cfg = load(sim_opts);
      const auto dir = prepare_out(cfg);
      const smdk::Projector projector(cfg.geometry);
      const auto out = smdk::simulate(cfg, projector);
      smdk::write_tensor(dir / "phantom_maps.smdk", out.phantom.data);
      smdk::write_tensor(dir / "phantom_channels.smdk", out.channels.data);
      smdk::write_tensor(dir / "sinogram_clean.smdk", out.clean.data);
      smdk::write_tensor(dir / "sinogram.smdk", out.measured.data);
      std::cout << "wrote " << dir.string() << " (" << out.clamp_events << " clamp events)\n";
      return kOk;
    }
    if (rec->parsed()) {
      const auto cfg = load(rec_opts);
      const auto dir = prepare_out(cfg);
      const smdk::Projector projector(cfg.geometry);
      const auto sino = smdk::load_external_sinogram(sinogram_path, cfg.geometry, cfg.spectrum.mixing.num_bins());
      const auto mode = smdk::parse_recon_mode(rec_mode);
      const auto r = smdk::reconstruct(sino, projector, cfg.recon_params(mode), mode);
      smdk::write_tensor(dir / "channels.smdk", r.images.data);
      write_log(dir / "convergence.csv", r.log);
      std::cout << "wrote " << (dir / "channels.smdk").string() << '\n';
      return kOk;
    }
    if (dec->parsed()) {
      const auto cfg = load(dec_opts);
      const auto dir = prepare_out(cfg);
      const auto id = smdk::parse_pipeline(dec_pipeline);
      smdk::ChannelImageStack channels{smdk::read_tensor(channels_path), cfg.geometry};
      const auto r = smdk::decompose(channels, cfg.spectrum.mixing, cfg.decomp_params(id), id.decomp);
      smdk::write_tensor(dir / "maps.smdk", r.maps.data);
      smdk::write_tensor(dir / "air.smdk", r.air.data);
      write_log(dir / "convergence.csv", r.log);
      std::cout << "wrote " << (dir / "maps.smdk").string() << '\n';
      return kOk;
    }
    if (run->parsed()) {
      const auto cfg = load(run_opts);
      const auto manifest = smdk::run_experiment(cfg);
      for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << '\n';
      for (const auto& p : manifest.pipelines) {
        std::cout << p.label << ": " << (p.ok ? "ok" : "FAILED: " + p.error) << " (" << p.seconds << " s)\n";
      }
      std::ifstream ranking(cfg.output_dir / "ranking.txt");
      if (ranking) std::cout << ranking.rdbuf();
      return manifest.all_ok() ? kOk : kFailure;
    }
    if (met->parsed()) {
      const auto cfg = load(met_opts);
      const auto maps = smdk::read_tensor(maps_path);
      const auto ref = smdk::read_tensor(reference_path);
      const auto report = smdk::evaluate_maps("maps", maps, ref, cfg.spectrum.mixing.material_names());
      smdk::write_metrics_csv(std::cout, {report});
      return kOk;
    }
  } catch (const smdk::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
