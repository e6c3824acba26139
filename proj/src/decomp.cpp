#include "smdk/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "smdk/metrics.hpp"
#include "smdk/simulate.hpp"
#include "smdk/tv.hpp"

namespace smdk {

DecompMode parse_decomp_mode(const std::string& name) {
  if (name == "DI") return DecompMode::kDi;
  if (name == "TVMD") return DecompMode::kTvmd;
  throw std::invalid_argument("unknown decomposition mode '" + name + "' (expected DI or TVMD)");
}

std::string to_string(DecompMode mode) { return mode == DecompMode::kDi ? "DI" : "TVMD"; }

void DecompParams::validate(std::size_t num_materials, DecompMode mode) const {
  if (outer_iterations < 1) throw std::invalid_argument("decomp: outer_iterations must be >= 1");
  if (tv_inner_iterations < 1) throw std::invalid_argument("decomp: tv_inner_iterations must be >= 1");
  if (mode == DecompMode::kTvmd && !(coupling_delta > 0.0)) {
    throw std::invalid_argument("decomp: coupling_delta must be positive for TVMD");
  }
  if (!(tv_step > 0.0)) throw std::invalid_argument("decomp: tv_step must be positive");
  if (!(tv_epsilon > 0.0)) throw std::invalid_argument("decomp: tv_epsilon must be positive");
  if (!tv_weight_per_material.empty() && tv_weight_per_material.size() != num_materials) {
    throw std::invalid_argument("decomp: tv_weight_per_material has " +
                                std::to_string(tv_weight_per_material.size()) + " entries for " +
                                std::to_string(num_materials) + " materials");
  }
  for (double w : tv_weight_per_material) {
    if (!(w >= 0.0)) throw std::invalid_argument("decomp: TV weights must be >= 0");
  }
}

namespace {

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd inv = svd.singularValues().cwiseInverse();
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

void check_channels(const ChannelImageStack& channels, const MixingMatrix& mixing) {
  if (channels.num_bins() != mixing.num_bins()) {
    throw std::invalid_argument("decomposition: channel stack has " +
                                std::to_string(channels.num_bins()) + " bins, mixing matrix has " +
                                std::to_string(mixing.num_bins()));
  }
}

// out[v][j] = sum_n P(v, n) * in[n][j] + offset(v, j)
void apply_per_pixel(const Eigen::MatrixXd& p, const Tensor3& in, Tensor3& out) {
  const std::size_t J = in.slice_size();
  const std::size_t N = in.slices();
  const std::size_t V = out.slices();
  const double* src = in.data();
  double* dst = out.data();
#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t v = 0; v < V; ++v) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) s += p(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(n)) * src[n * J + j];
      dst[v * J + j] = s;
    }
  }
}

}  // namespace

MaterialMapStack direct_inversion(const ChannelImageStack& channels, const MixingMatrix& mixing) {
  check_channels(channels, mixing);
  if (mixing.num_bins() < mixing.num_materials()) {
    throw std::invalid_argument("direct_inversion: fewer bins than materials");
  }
  if (!mixing.full_column_rank()) {
    throw std::invalid_argument("direct_inversion: mixing matrix is rank deficient");
  }
  const Eigen::MatrixXd pinv = pseudo_inverse(mixing.values());
  MaterialMapStack out{Tensor3(channels.data.rows(), channels.data.cols(), mixing.num_materials()),
                       mixing.material_names(), false};
  apply_per_pixel(pinv, channels.data, out.data);
  return out;
}

MaterialMapStack quad_step(const ChannelImageStack& channels, const MixingMatrix& mixing,
                           const MaterialMapStack& anchor, double delta) {
  check_channels(channels, mixing);
  if (!(delta > 0.0)) throw std::invalid_argument("quad_step: delta must be positive");
  const auto N = static_cast<Eigen::Index>(mixing.num_bins());
  const auto V = static_cast<Eigen::Index>(mixing.num_materials());
  if (anchor.num_materials() != static_cast<std::size_t>(V) ||
      anchor.data.rows() != channels.data.rows() || anchor.data.cols() != channels.data.cols()) {
    throw std::invalid_argument("quad_step: anchor shape mismatch");
  }
  // [B; sqrt(delta) I] m ~ [h; sqrt(delta) w] has normal equations
  // (B^T B + delta I) m = B^T h + delta w.
  const double root = std::sqrt(delta);
  Eigen::MatrixXd stacked(N + V, V);
  stacked.topRows(N) = mixing.values();
  stacked.bottomRows(V) = root * Eigen::MatrixXd::Identity(V, V);
  const Eigen::MatrixXd solve = pseudo_inverse(stacked);
  const Eigen::MatrixXd on_h = solve.leftCols(N);
  const Eigen::MatrixXd on_w = root * solve.rightCols(V);

  const std::size_t J = channels.data.slice_size();
  MaterialMapStack out{Tensor3(channels.data.rows(), channels.data.cols(), static_cast<std::size_t>(V)),
                       mixing.material_names(), false};
  const double* h = channels.data.data();
  const double* w = anchor.data.data();
  double* m = out.data.data();
#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < J; ++j) {
    for (Eigen::Index v = 0; v < V; ++v) {
      double s = 0.0;
      for (Eigen::Index n = 0; n < N; ++n) s += on_h(v, n) * h[static_cast<std::size_t>(n) * J + j];
      for (Eigen::Index u = 0; u < V; ++u) s += on_w(v, u) * w[static_cast<std::size_t>(u) * J + j];
      m[static_cast<std::size_t>(v) * J + j] = s;
    }
  }
  return out;
}

void project_capped_simplex(std::span<double> m) {
  const std::size_t V = m.size();
  if (V == 0) return;
  double sum = 0.0;
  for (double x : m) sum += std::clamp(x, 0.0, 1.0);
  if (sum <= 1.0 + 1e-12) {
    for (double& x : m) x = std::clamp(x, 0.0, 1.0);
    return;
  }
  // The sum constraint is active: m = clip(y - theta, 0, 1) with theta chosen
  // so the entries sum to one. g(theta) is piecewise linear and
  // non-increasing with breakpoints at y_v - 1 and y_v.
  auto g = [&](double theta) {
    double s = 0.0;
    for (double y : m) s += std::clamp(y - theta, 0.0, 1.0);
    return s;
  };
  std::vector<double> knots;
  knots.reserve(2 * V);
  for (double y : m) {
    knots.push_back(y - 1.0);
    knots.push_back(y);
  }
  std::sort(knots.begin(), knots.end());
  double theta = knots.back();
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const double ga = g(knots[i - 1]);
    const double gb = g(knots[i]);
    if (ga >= 1.0 && gb <= 1.0) {
      theta = ga == gb ? knots[i - 1] : knots[i - 1] + (ga - 1.0) * (knots[i] - knots[i - 1]) / (ga - gb);
      break;
    }
  }
  for (double& x : m) x = std::clamp(x - theta, 0.0, 1.0);
}

ConstrainedMaps project_constraints(const MaterialMapStack& maps) {
  ConstrainedMaps out{maps, AirMap{Tensor3(maps.data.rows(), maps.data.cols(), 1)}};
  out.maps.constrained = true;
  const std::size_t J = maps.data.slice_size();
  const std::size_t V = maps.num_materials();
  double* m = out.maps.data.data();
  double* air = out.air.data.data();
#pragma omp parallel
  {
    std::vector<double> buf(V);
#pragma omp for schedule(static)
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t v = 0; v < V; ++v) buf[v] = m[v * J + j];
      project_capped_simplex(buf);
      double sum = 0.0;
      for (std::size_t v = 0; v < V; ++v) {
        m[v * J + j] = buf[v];
        sum += buf[v];
      }
      air[j] = std::clamp(1.0 - sum, 0.0, 1.0);
    }
  }
  return out;
}

double decomposition_fidelity(const MaterialMapStack& maps, const ChannelImageStack& channels,
                              const MixingMatrix& mixing) {
  check_channels(channels, mixing);
  const RowMatrix r = mixing.values() * mode3_view(maps.data) - mode3_view(channels.data);
  return 0.5 * r.squaredNorm();
}

std::vector<double> DecompLog::fidelity() const {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.fidelity);
  return out;
}

void DecompLog::write_csv(std::ostream& out) const {
  out << "iteration,fidelity";
  const bool with_rmse = !rows.empty() && !rows.front().rmse_per_material.empty();
  if (with_rmse) {
    for (const auto& n : material_names) out << ",rmse_" << n;
  }
  out << '\n';
  for (const auto& r : rows) {
    out << r.iteration << ',' << format_number(r.fidelity);
    for (double e : r.rmse_per_material) out << ',' << format_number(e);
    out << '\n';
  }
}

namespace {

std::vector<double> per_material_rmse(const MaterialMapStack& maps, const MaterialMapStack* reference) {
  std::vector<double> out;
  if (!reference) return out;
  for (std::size_t v = 0; v < maps.num_materials(); ++v) {
    out.push_back(rmse(maps.data.slice(v), reference->data.slice(v)));
  }
  return out;
}

}  // namespace

DecompResult decompose(const ChannelImageStack& channels, const MixingMatrix& mixing,
                       const DecompParams& params, DecompMode mode,
                       const MaterialMapStack* reference) {
  params.validate(mixing.num_materials(), mode);
  if (reference && !reference->data.same_shape(Tensor3(channels.data.rows(), channels.data.cols(),
                                                       mixing.num_materials()))) {
    throw std::invalid_argument("decompose: reference shape mismatch");
  }
  DecompResult result;
  result.log.material_names = mixing.material_names();

  MaterialMapStack di = direct_inversion(channels, mixing);
  if (mode == DecompMode::kDi) {
    if (params.enforce_constraints && params.project_di) {
      auto c = project_constraints(di);
      result.maps = std::move(c.maps);
      result.air = std::move(c.air);
    } else {
      result.maps = std::move(di);
      result.air = air_map(result.maps);
    }
    result.log.rows.push_back({1, decomposition_fidelity(result.maps, channels, mixing),
                               per_material_rmse(result.maps, reference)});
    return result;
  }

  MaterialMapStack m = params.enforce_constraints ? project_constraints(di).maps : std::move(di);
  MaterialMapStack w = m;
  const std::size_t V = mixing.num_materials();
  for (std::size_t it = 1; it <= params.outer_iterations; ++it) {
    m = quad_step(channels, mixing, w, params.coupling_delta);
    if (params.enforce_constraints) m = project_constraints(m).maps;
    w = m;
    for (std::size_t v = 0; v < V; ++v) {
      const double lambda = params.tv_weight_per_material.empty() ? 0.0 : params.tv_weight_per_material[v];
      if (lambda == 0.0) continue;
      w.data.set_slice(v, tv_denoise(m.data.slice_copy(v), lambda, params.tv_inner_iterations,
                                     params.tv_step, params.tv_epsilon));
    }
    result.log.rows.push_back({it, decomposition_fidelity(m, channels, mixing),
                               per_material_rmse(m, reference)});
  }
  result.air = air_map(m);
  if (params.enforce_constraints) {
    for (double& a : result.air.data.values()) a = std::clamp(a, 0.0, 1.0);
  }
  result.maps = std::move(m);
  return result;
}

}  // namespace smdk
