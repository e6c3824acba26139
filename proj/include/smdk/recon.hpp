#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "smdk/projector.hpp"
#include "smdk/types.hpp"

namespace smdk {

enum class ReconMode { kSart, kTvm };

/// Parses "SART" / "TVM"; throws std::invalid_argument otherwise.
ReconMode parse_recon_mode(const std::string& name);
std::string to_string(ReconMode mode);

/// Per-view: the views are visited in order and each one updates the image
/// with its own rows (the classic SART ordering). Simultaneous: one update
/// from all rays at once.
enum class SartUpdate { kPerView, kSimultaneous };

/// Parses "per-view" / "simultaneous"; throws std::invalid_argument otherwise.
SartUpdate parse_sart_update(const std::string& name);
std::string to_string(SartUpdate update);

struct ReconParams {
  std::size_t outer_iterations = 30;
  double sart_relaxation = 1.0;
  SartUpdate sart_update = SartUpdate::kPerView;
  /// One TV weight per energy bin. Empty means zero for every bin.
  std::vector<double> tv_weight_per_bin;
  std::size_t tv_inner_iterations = 20;
  double tv_step = 0.1;
  /// Proximal coupling to the previous TV estimate during the data step, in
  /// cm (same units as the column sums of A). 0 is plain alternation.
  double coupling_tau = 0.0;
  double tv_epsilon = 1e-8;

  /// Throws std::invalid_argument on invalid values or a weight-count mismatch.
  void validate(std::size_t num_bins) const;

  friend bool operator==(const ReconParams&, const ReconParams&) = default;
};

struct ReconLogRow {
  std::size_t iteration = 0;
  std::size_t bin = 0;
  double data_fidelity = 0.0;
  double rmse_vs_reference = -1.0;  ///< negative when no reference was given
};

struct ConvergenceLog {
  std::vector<ReconLogRow> rows;

  /// Fidelity series of one bin, ordered by iteration.
  std::vector<double> fidelity(std::size_t bin) const;
  /// CSV with header `iteration,bin,data_fidelity,rmse_vs_reference`.
  void write_csv(std::ostream& out) const;
};

/// Per-bin 0.5 * ||p_n - A h_n||^2.
std::vector<double> data_fidelity(const Tensor3& images, const Tensor3& sinograms,
                                  const Projector& projector);

/// One SART sweep over every slice, followed by clipping at zero.
///   simultaneous: h <- h + relaxation * (D_col + tau)^-1 A^T D_row^-1 (p - A h)
///   per-view:     the same update with A restricted to the rows of view v,
///                 applied for v = 0, 1, ... in turn; D_col then holds the
///                 column sums of those rows only.
/// Rays and pixels with a zero normalizer are left out of the update. When
/// `input_fidelity` is given it receives 0.5*||p_n - A h_n||^2 of the input.
Tensor3 sart_sweep(const Tensor3& images, const Tensor3& sinograms, const Projector& projector,
                   double relaxation, double tau = 0.0, SartUpdate update = SartUpdate::kPerView,
                   std::vector<double>* input_fidelity = nullptr);

struct ReconResult {
  ChannelImageStack images;
  ConvergenceLog log;
};

/// SART: outer_iterations sweeps from a zero image. TVM: each outer
/// iteration is one sweep followed by per-bin tv_denoise with weight mu_n.
/// Bins never share state, so each one can be reconstructed on its own.
ReconResult reconstruct(const SinogramStack& sinograms, const Projector& projector,
                        const ReconParams& params, ReconMode mode,
                        const ChannelImageStack* reference = nullptr);

namespace serial {
/// Reference sweep built on trace_ray and the serial projectors.
Tensor3 sart_sweep(const Tensor3& images, const Tensor3& sinograms, const FanBeamGeometry& geom,
                   double relaxation, double tau = 0.0, SartUpdate update = SartUpdate::kPerView);
}  // namespace serial

}  // namespace smdk
