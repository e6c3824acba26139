#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "smdk/tensor.hpp"

namespace smdk {

/// sqrt(mean((x - y)^2)). Throws std::invalid_argument on size mismatch or empty input.
double rmse(std::span<const double> x, std::span<const double> y);

/// 10 log10(peak^2 / MSE). Returns +infinity when MSE is zero.
double psnr(std::span<const double> x, std::span<const double> ref, double peak);

/// Mean SSIM over every position where an 11x11 Gaussian window (sigma 1.5,
/// normalized to unit sum) fits inside the image; K1 = 0.01, K2 = 0.03.
/// Images must be single-slice and at least 11x11.
double ssim(const Tensor3& x, const Tensor3& ref, double dynamic_range);

enum class LineAxis { kRow, kColumn };

struct ProfileLine {
  LineAxis axis = LineAxis::kRow;
  std::size_t index = 0;
};

/// Pixel values along one grid row or column of slice `slice`.
std::vector<double> extract_profile(const Tensor3& img, ProfileLine line, std::size_t slice = 0);

struct MaterialMetrics {
  std::string material;
  double rmse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::string pipeline_label;
  std::vector<MaterialMetrics> per_material;
};

/// Metrics of every slice of `maps` against the same slice of `reference`.
/// Peak and dynamic range default to the reference slice maximum (1 when that
/// maximum is not positive); pass per-slice values to override.
MetricReport evaluate_maps(const std::string& label, const Tensor3& maps, const Tensor3& reference,
                           const std::vector<std::string>& material_names,
                           const std::vector<double>& peaks = {});

struct RankedEntry {
  std::string pipeline;
  double rmse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::size_t rank = 0;  ///< 1 = lowest RMSE
};

struct MaterialRanking {
  std::string material;
  std::vector<RankedEntry> entries;  ///< sorted by rank
};

struct RankingTable {
  std::vector<MaterialRanking> materials;

  /// `pipeline,material,rmse,psnr_db,ssim,rank`
  void write_csv(std::ostream& out) const;
  void write_text(std::ostream& out) const;
  /// Rank of `pipeline` for `material`; 0 when absent.
  std::size_t rank_of(const std::string& material, const std::string& pipeline) const;
};

/// Ranks pipelines by RMSE ascending per material (ties keep input order).
/// Throws std::invalid_argument when reports list different materials.
RankingTable compare_pipelines(const std::vector<MetricReport>& reports);

/// Metric table CSV: `pipeline,material,rmse,psnr_db,ssim`.
void write_metrics_csv(std::ostream& out, const std::vector<MetricReport>& reports);

/// Formats with 17 significant digits; infinities as "inf".
std::string format_number(double v);

}  // namespace smdk
