#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "smdk/types.hpp"

namespace smdk {

enum class DecompMode { kDi, kTvmd };

DecompMode parse_decomp_mode(const std::string& name);
std::string to_string(DecompMode mode);

struct DecompParams {
  std::size_t outer_iterations = 30;
  /// Coupling between the data term and the TV estimate W.
  double coupling_delta = 1e-3;
  /// One TV weight per material. Empty means zero for every material.
  std::vector<double> tv_weight_per_material;
  std::size_t tv_inner_iterations = 20;
  double tv_step = 0.1;
  double tv_epsilon = 1e-8;
  bool enforce_constraints = true;
  /// Project DI output onto the feasible set (off to keep the plain DI baseline).
  bool project_di = false;

  void validate(std::size_t num_materials, DecompMode mode) const;

  friend bool operator==(const DecompParams&, const DecompParams&) = default;
};

/// Per-pixel least squares M_(3) = (B^T B)^-1 B^T H_(3), computed through the
/// pseudo-inverse of B. Throws std::invalid_argument when B is rank deficient
/// (including N < V) or the bin counts differ. Output is unconstrained.
MaterialMapStack direct_inversion(const ChannelImageStack& channels, const MixingMatrix& mixing);

/// Closed-form minimizer of 0.5*||B m - h||^2 + 0.5*delta*||m - w||^2 per
/// pixel, i.e. (B^T B + delta I)^-1 (B^T h + delta w). Solved as a stacked
/// least-squares problem factored once. Throws for delta <= 0.
MaterialMapStack quad_step(const ChannelImageStack& channels, const MixingMatrix& mixing,
                           const MaterialMapStack& anchor, double delta);

/// Euclidean projection of one fraction vector onto the capped simplex
/// {m in [0,1]^V : sum m <= 1}, in place.
void project_capped_simplex(std::span<double> m);

struct ConstrainedMaps {
  MaterialMapStack maps;
  AirMap air;
};

/// Per-pixel capped-simplex projection plus the derived air map.
ConstrainedMaps project_constraints(const MaterialMapStack& maps);

/// Decomposition data term 0.5 * ||B M_(3) - H_(3)||_F^2.
double decomposition_fidelity(const MaterialMapStack& maps, const ChannelImageStack& channels,
                              const MixingMatrix& mixing);

struct DecompLogRow {
  std::size_t iteration = 0;
  double fidelity = 0.0;
  std::vector<double> rmse_per_material;  ///< empty without a reference
};

struct DecompLog {
  std::vector<std::string> material_names;
  std::vector<DecompLogRow> rows;

  std::vector<double> fidelity() const;
  /// CSV `iteration,fidelity[,rmse_<material>...]`.
  void write_csv(std::ostream& out) const;
};

struct DecompResult {
  MaterialMapStack maps;
  AirMap air;
  DecompLog log;
};

/// DI: one direct inversion (projected only when enforce_constraints and
/// project_di are both set). TVMD: start from the projected DI solution,
/// then per outer iteration M <- P(quad_step(H, B, W, delta)) and
/// W <- tv_denoise(M_v, lambda_v) for every material.
DecompResult decompose(const ChannelImageStack& channels, const MixingMatrix& mixing,
                       const DecompParams& params, DecompMode mode,
                       const MaterialMapStack* reference = nullptr);

}  // namespace smdk
