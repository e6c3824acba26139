#include "smdk/recon.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "smdk/metrics.hpp"
#include "smdk/tv.hpp"

namespace smdk {

ReconMode parse_recon_mode(const std::string& name) {
  if (name == "SART") return ReconMode::kSart;
  if (name == "TVM") return ReconMode::kTvm;
  throw std::invalid_argument("unknown reconstruction mode '" + name + "' (expected SART or TVM)");
}

std::string to_string(ReconMode mode) { return mode == ReconMode::kSart ? "SART" : "TVM"; }

SartUpdate parse_sart_update(const std::string& name) {
  if (name == "per-view") return SartUpdate::kPerView;
  if (name == "simultaneous") return SartUpdate::kSimultaneous;
  throw std::invalid_argument("unknown SART update '" + name + "' (expected per-view or simultaneous)");
}

std::string to_string(SartUpdate update) {
  return update == SartUpdate::kPerView ? "per-view" : "simultaneous";
}

void ReconParams::validate(std::size_t num_bins) const {
  if (outer_iterations < 1) throw std::invalid_argument("recon: outer_iterations must be >= 1");
  if (tv_inner_iterations < 1) throw std::invalid_argument("recon: tv_inner_iterations must be >= 1");
  if (!(sart_relaxation > 0.0 && sart_relaxation <= 2.0)) {
    throw std::invalid_argument("recon: sart_relaxation must lie in (0, 2]");
  }
  if (!(tv_step > 0.0)) throw std::invalid_argument("recon: tv_step must be positive");
  if (!(coupling_tau >= 0.0)) throw std::invalid_argument("recon: coupling_tau must be >= 0");
  if (!(tv_epsilon > 0.0)) throw std::invalid_argument("recon: tv_epsilon must be positive");
  if (!tv_weight_per_bin.empty() && tv_weight_per_bin.size() != num_bins) {
    throw std::invalid_argument("recon: tv_weight_per_bin has " +
                                std::to_string(tv_weight_per_bin.size()) + " entries for " +
                                std::to_string(num_bins) + " bins");
  }
  for (double w : tv_weight_per_bin) {
    if (!(w >= 0.0)) throw std::invalid_argument("recon: TV weights must be >= 0");
  }
}

std::vector<double> ConvergenceLog::fidelity(std::size_t bin) const {
  std::vector<ReconLogRow> sel;
  for (const auto& r : rows) {
    if (r.bin == bin) sel.push_back(r);
  }
  std::sort(sel.begin(), sel.end(),
            [](const auto& a, const auto& b) { return a.iteration < b.iteration; });
  std::vector<double> out;
  for (const auto& r : sel) out.push_back(r.data_fidelity);
  return out;
}

void ConvergenceLog::write_csv(std::ostream& out) const {
  out << "iteration,bin,data_fidelity,rmse_vs_reference\n";
  const auto old = out.precision(17);
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.bin << ',' << r.data_fidelity << ',';
    if (r.rmse_vs_reference >= 0.0) out << r.rmse_vs_reference;
    out << '\n';
  }
  out.precision(old);
}

namespace {

std::vector<double> residual_fidelity(const Tensor3& residual) {
  std::vector<double> out(residual.slices(), 0.0);
  for (std::size_t k = 0; k < residual.slices(); ++k) {
    double s = 0.0;
    for (double r : residual.slice(k)) s += r * r;
    out[k] = 0.5 * s;
  }
  return out;
}

void check_pair(const Tensor3& images, const Tensor3& sinograms) {
  if (images.slices() != sinograms.slices()) {
    throw std::invalid_argument("recon: image and sinogram bin counts differ");
  }
}

}  // namespace

std::vector<double> data_fidelity(const Tensor3& images, const Tensor3& sinograms,
                                  const Projector& projector) {
  check_pair(images, sinograms);
  Tensor3 r = projector.forward(images);
  auto rv = r.values();
  const auto pv = sinograms.values();
  for (std::size_t i = 0; i < rv.size(); ++i) rv[i] = pv[i] - rv[i];
  return residual_fidelity(r);
}

namespace {

void check_sweep_args(const Tensor3& images, const Tensor3& sinograms, const FanBeamGeometry& geom,
                      double relaxation, double tau) {
  check_pair(images, sinograms);
  if (images.rows() != geom.image_height_px || images.cols() != geom.image_width_px ||
      sinograms.rows() != geom.num_views || sinograms.cols() != geom.num_detectors) {
    throw std::invalid_argument("sart_sweep: image or sinogram shape does not match the geometry");
  }
  if (!(relaxation > 0.0 && relaxation <= 2.0)) {
    throw std::invalid_argument("sart_sweep: relaxation must lie in (0, 2]");
  }
  if (!(tau >= 0.0)) throw std::invalid_argument("sart_sweep: tau must be >= 0");
}

void clip_negative(Tensor3& t) {
  for (double& v : t.values()) v = std::max(0.0, v);
}

Tensor3 simultaneous_sweep(const Tensor3& images, const Tensor3& sinograms, const Projector& projector,
                           double relaxation, double tau, std::vector<double>* input_fidelity) {
  const auto& norm = projector.normalizers();
  Tensor3 residual = projector.forward(images);
  const std::size_t L = norm.row_sums.size();
  {
    auto rv = residual.values();
    const auto pv = sinograms.values();
    for (std::size_t i = 0; i < rv.size(); ++i) rv[i] = pv[i] - rv[i];
  }
  if (input_fidelity) *input_fidelity = residual_fidelity(residual);
  for (std::size_t k = 0; k < residual.slices(); ++k) {
    auto rk = residual.slice(k);
    for (std::size_t l = 0; l < L; ++l) {
      const double w = norm.row_sums[l];
      rk[l] = w > 0.0 ? rk[l] / w : 0.0;
    }
  }
  const Tensor3 update = projector.back(residual);
  Tensor3 out = images;
  const std::size_t J = norm.col_sums.size();
  for (std::size_t k = 0; k < out.slices(); ++k) {
    auto hk = out.slice(k);
    const auto uk = update.slice(k);
    for (std::size_t j = 0; j < J; ++j) {
      const double c = norm.col_sums[j];
      if (c == 0.0) continue;
      hk[j] += relaxation * uk[j] / (c + tau);
    }
  }
  clip_negative(out);
  return out;
}

// Residuals of one view are computed in parallel over detectors; the scatter
// into the image runs serially in detector order, so the sweep is
// deterministic for any thread count.
Tensor3 per_view_sweep(const Tensor3& images, const Tensor3& sinograms, const Projector& projector,
                       double relaxation, double tau) {
  const auto& geom = projector.geometry();
  const auto& row_sums = projector.normalizers().row_sums;
  const std::size_t K = images.slices();
  const std::size_t J = geom.num_pixels();
  const std::size_t L = geom.num_rays();
  const std::size_t ndet = geom.num_detectors;
  Tensor3 out = images;
  double* h = out.data();
  const double* p = sinograms.data();

  ViewRows rows;
  std::vector<double> resid(ndet * K);
  std::vector<double> num(K * J, 0.0);
  std::vector<double> den(J, 0.0);
  std::vector<std::size_t> touched;
  touched.reserve(J);

  for (std::size_t v = 0; v < geom.num_views; ++v) {
    projector.view_rows(v, rows);
#pragma omp parallel
    {
      std::vector<double> acc(K);
#pragma omp for schedule(static)
      for (std::size_t d = 0; d < ndet; ++d) {
        const std::size_t ray = v * ndet + d;
        const double w = row_sums[ray];
        if (w == 0.0) continue;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = rows.offsets[d]; i < rows.offsets[d + 1]; ++i) {
          const std::size_t pix = rows.pixels[i];
          for (std::size_t k = 0; k < K; ++k) acc[k] += rows.weights[i] * h[k * J + pix];
        }
        for (std::size_t k = 0; k < K; ++k) resid[d * K + k] = (p[k * L + ray] - acc[k]) / w;
      }
    }
    for (std::size_t d = 0; d < ndet; ++d) {
      if (row_sums[v * ndet + d] == 0.0) continue;
      for (std::size_t i = rows.offsets[d]; i < rows.offsets[d + 1]; ++i) {
        const std::size_t pix = rows.pixels[i];
        const double a = rows.weights[i];
        if (den[pix] == 0.0) touched.push_back(pix);
        den[pix] += a;
        for (std::size_t k = 0; k < K; ++k) num[k * J + pix] += a * resid[d * K + k];
      }
    }
    for (std::size_t pix : touched) {
      const double scale = relaxation / (den[pix] + tau);
      for (std::size_t k = 0; k < K; ++k) {
        h[k * J + pix] += scale * num[k * J + pix];
        num[k * J + pix] = 0.0;
      }
      den[pix] = 0.0;
    }
    touched.clear();
  }
  clip_negative(out);
  return out;
}

}  // namespace

Tensor3 sart_sweep(const Tensor3& images, const Tensor3& sinograms, const Projector& projector,
                   double relaxation, double tau, SartUpdate update,
                   std::vector<double>* input_fidelity) {
  check_sweep_args(images, sinograms, projector.geometry(), relaxation, tau);
  if (update == SartUpdate::kSimultaneous) {
    return simultaneous_sweep(images, sinograms, projector, relaxation, tau, input_fidelity);
  }
  if (input_fidelity) *input_fidelity = data_fidelity(images, sinograms, projector);
  return per_view_sweep(images, sinograms, projector, relaxation, tau);
}

namespace serial {

Tensor3 sart_sweep(const Tensor3& images, const Tensor3& sinograms, const FanBeamGeometry& geom,
                   double relaxation, double tau, SartUpdate update) {
  geom.validate();
  check_sweep_args(images, sinograms, geom, relaxation, tau);
  const std::size_t K = images.slices();
  const std::size_t J = geom.num_pixels();
  const std::size_t L = geom.num_rays();
  const std::size_t ndet = geom.num_detectors;
  Tensor3 out = images;
  if (update == SartUpdate::kSimultaneous) {
    const Tensor3 ones_img(geom.image_height_px, geom.image_width_px, 1, 1.0);
    const Tensor3 rows = serial::forward_project(ones_img, geom);
    const Tensor3 cols = serial::back_project(Tensor3(geom.num_views, ndet, 1, 1.0), geom);
    Tensor3 r = serial::forward_project(images, geom);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = 0; l < L; ++l) {
        const double w = rows.data()[l];
        r.data()[k * L + l] = w > 0.0 ? (sinograms.data()[k * L + l] - r.data()[k * L + l]) / w : 0.0;
      }
    const Tensor3 u = serial::back_project(r, geom);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t j = 0; j < J; ++j) {
        const double c = cols.data()[j];
        if (c > 0.0) out.data()[k * J + j] += relaxation * u.data()[k * J + j] / (c + tau);
      }
  } else {
    for (std::size_t k = 0; k < K; ++k) {
      double* h = out.data() + k * J;
      for (std::size_t v = 0; v < geom.num_views; ++v) {
        std::vector<double> num(J, 0.0), den(J, 0.0);
        for (std::size_t d = 0; d < ndet; ++d) {
          const auto ray = trace_ray(geom, v, d);
          if (ray.entries.empty()) continue;
          double s = 0.0;
          for (const auto& e : ray.entries) s += 0.1 * e.length_mm * h[e.pixel_index];
          const double r = (sinograms.data()[k * L + v * ndet + d] - s) / (0.1 * ray.total_length_mm);
          for (const auto& e : ray.entries) {
            num[e.pixel_index] += 0.1 * e.length_mm * r;
            den[e.pixel_index] += 0.1 * e.length_mm;
          }
        }
        for (std::size_t j = 0; j < J; ++j) {
          if (den[j] > 0.0) h[j] += relaxation * num[j] / (den[j] + tau);
        }
      }
    }
  }
  clip_negative(out);
  return out;
}

}  // namespace serial

ReconResult reconstruct(const SinogramStack& sinograms, const Projector& projector,
                        const ReconParams& params, ReconMode mode,
                        const ChannelImageStack* reference) {
  const std::size_t K = sinograms.num_bins();
  params.validate(K);
  const auto& geom = projector.geometry();
  if (reference && (reference->data.slices() != K || reference->data.rows() != geom.image_height_px ||
                    reference->data.cols() != geom.image_width_px)) {
    throw std::invalid_argument("reconstruct: reference shape does not match");
  }

  Tensor3 h(geom.image_height_px, geom.image_width_px, K);
  std::vector<std::vector<double>> fid(params.outer_iterations + 1);
  std::vector<std::vector<double>> err(params.outer_iterations + 1);
  const bool tv = mode == ReconMode::kTvm;
  const double tau = tv ? params.coupling_tau : 0.0;

  for (std::size_t it = 1; it <= params.outer_iterations; ++it) {
    h = sart_sweep(h, sinograms.data, projector, params.sart_relaxation, tau, params.sart_update,
                   &fid[it - 1]);
    if (tv) {
      for (std::size_t k = 0; k < K; ++k) {
        const double mu = params.tv_weight_per_bin.empty() ? 0.0 : params.tv_weight_per_bin[k];
        if (mu == 0.0) continue;
        h.set_slice(k, tv_denoise(h.slice_copy(k), mu, params.tv_inner_iterations, params.tv_step,
                                  params.tv_epsilon));
      }
    }
    if (reference) {
      for (std::size_t k = 0; k < K; ++k) err[it].push_back(rmse(h.slice(k), reference->data.slice(k)));
    }
  }
  fid[params.outer_iterations] = data_fidelity(h, sinograms.data, projector);

  ReconResult result{{std::move(h), geom}, {}};
  for (std::size_t it = 1; it <= params.outer_iterations; ++it) {
    for (std::size_t k = 0; k < K; ++k) {
      result.log.rows.push_back({it, k, fid[it][k], reference ? err[it][k] : -1.0});
    }
  }
  return result;
}

}  // namespace smdk
