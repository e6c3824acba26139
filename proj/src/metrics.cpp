#include "smdk/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace smdk {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("metrics: size mismatch");
  if (x.empty()) throw std::invalid_argument("metrics: empty input");
}

double mse(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable "valid" Gaussian filter of a rows x cols image.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t rows, std::size_t cols,
                                 const std::array<double, kWindow>& taps) {
  const std::size_t orows = rows - kWindow + 1;
  const std::size_t ocols = cols - kWindow + 1;
  std::vector<double> tmp(rows * ocols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < ocols; ++j) {
      double s = 0.0;
      for (int t = 0; t < kWindow; ++t) s += taps[t] * img[i * cols + j + t];
      tmp[i * ocols + j] = s;
    }
  }
  std::vector<double> out(orows * ocols);
  for (std::size_t i = 0; i < orows; ++i) {
    for (std::size_t j = 0; j < ocols; ++j) {
      double s = 0.0;
      for (int t = 0; t < kWindow; ++t) s += taps[t] * tmp[(i + t) * ocols + j];
      out[i * ocols + j] = s;
    }
  }
  return out;
}

}  // namespace

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

double rmse(std::span<const double> x, std::span<const double> y) { return std::sqrt(mse(x, y)); }

double psnr(std::span<const double> x, std::span<const double> ref, double peak) {
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  const double m = mse(x, ref);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

double ssim(const Tensor3& x, const Tensor3& ref, double dynamic_range) {
  if (!x.same_shape(ref) || x.slices() != 1) throw std::invalid_argument("ssim: expected equal single-slice images");
  if (!(dynamic_range > 0.0)) throw std::invalid_argument("ssim: dynamic_range must be positive");
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (rows < kWindow || cols < kWindow) throw std::invalid_argument("ssim: image smaller than 11x11 window");

  const auto taps = gaussian_taps();
  const auto xv = x.values();
  const auto yv = ref.values();
  std::vector<double> a(xv.begin(), xv.end()), b(yv.begin(), yv.end());
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, rows, cols, taps);
  const auto mu_b = filter_valid(b, rows, cols, taps);
  const auto e_aa = filter_valid(aa, rows, cols, taps);
  const auto e_bb = filter_valid(bb, rows, cols, taps);
  const auto e_ab = filter_valid(ab, rows, cols, taps);

  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

std::vector<double> extract_profile(const Tensor3& img, ProfileLine line, std::size_t slice) {
  const auto s = img.slice(slice);
  std::vector<double> out;
  if (line.axis == LineAxis::kRow) {
    if (line.index >= img.rows()) throw std::out_of_range("extract_profile: row out of range");
    out.assign(s.begin() + static_cast<std::ptrdiff_t>(line.index * img.cols()),
               s.begin() + static_cast<std::ptrdiff_t>((line.index + 1) * img.cols()));
  } else {
    if (line.index >= img.cols()) throw std::out_of_range("extract_profile: column out of range");
    for (std::size_t r = 0; r < img.rows(); ++r) out.push_back(s[r * img.cols() + line.index]);
  }
  return out;
}

MetricReport evaluate_maps(const std::string& label, const Tensor3& maps, const Tensor3& reference,
                           const std::vector<std::string>& material_names,
                           const std::vector<double>& peaks) {
  if (!maps.same_shape(reference)) throw std::invalid_argument("evaluate_maps: shape mismatch");
  if (material_names.size() != maps.slices()) throw std::invalid_argument("evaluate_maps: name count mismatch");
  if (!peaks.empty() && peaks.size() != maps.slices()) throw std::invalid_argument("evaluate_maps: peak count mismatch");
  MetricReport report{label, {}};
  for (std::size_t v = 0; v < maps.slices(); ++v) {
    const auto ref = reference.slice(v);
    double peak = peaks.empty() ? *std::max_element(ref.begin(), ref.end()) : peaks[v];
    if (!(peak > 0.0)) peak = 1.0;
    report.per_material.push_back({material_names[v], rmse(maps.slice(v), ref),
                                   psnr(maps.slice(v), ref, peak),
                                   ssim(maps.slice_copy(v), reference.slice_copy(v), peak)});
  }
  return report;
}

RankingTable compare_pipelines(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("compare_pipelines: no reports");
  const auto& first = reports.front().per_material;
  for (const auto& r : reports) {
    if (r.per_material.size() != first.size()) throw std::invalid_argument("compare_pipelines: material lists differ");
    for (std::size_t v = 0; v < first.size(); ++v) {
      if (r.per_material[v].material != first[v].material) {
        throw std::invalid_argument("compare_pipelines: material lists differ");
      }
    }
  }
  RankingTable table;
  for (std::size_t v = 0; v < first.size(); ++v) {
    MaterialRanking mr{first[v].material, {}};
    for (const auto& r : reports) {
      const auto& m = r.per_material[v];
      mr.entries.push_back({r.pipeline_label, m.rmse, m.psnr_db, m.ssim, 0});
    }
    std::stable_sort(mr.entries.begin(), mr.entries.end(),
                     [](const auto& a, const auto& b) { return a.rmse < b.rmse; });
    for (std::size_t i = 0; i < mr.entries.size(); ++i) mr.entries[i].rank = i + 1;
    table.materials.push_back(std::move(mr));
  }
  return table;
}

void RankingTable::write_csv(std::ostream& out) const {
  out << "pipeline,material,rmse,psnr_db,ssim,rank\n";
  for (const auto& m : materials) {
    for (const auto& e : m.entries) {
      out << e.pipeline << ',' << m.material << ',' << format_number(e.rmse) << ','
          << format_number(e.psnr_db) << ',' << format_number(e.ssim) << ',' << e.rank << '\n';
    }
  }
}

void RankingTable::write_text(std::ostream& out) const {
  for (const auto& m : materials) {
    out << m.material << '\n';
    for (const auto& e : m.entries) {
      out << "  " << e.rank << ". " << std::left << std::setw(12) << e.pipeline << std::right
          << " RMSE " << std::scientific << std::setprecision(4) << e.rmse << std::defaultfloat
          << "  PSNR " << std::fixed << std::setprecision(3) << e.psnr_db << " dB"
          << "  SSIM " << std::setprecision(4) << e.ssim << std::defaultfloat << '\n';
    }
  }
}

std::size_t RankingTable::rank_of(const std::string& material, const std::string& pipeline) const {
  for (const auto& m : materials) {
    if (m.material != material) continue;
    for (const auto& e : m.entries) {
      if (e.pipeline == pipeline) return e.rank;
    }
  }
  return 0;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "pipeline,material,rmse,psnr_db,ssim\n";
  for (const auto& r : reports) {
    for (const auto& m : r.per_material) {
      out << r.pipeline_label << ',' << m.material << ',' << format_number(m.rmse) << ','
          << format_number(m.psnr_db) << ',' << format_number(m.ssim) << '\n';
    }
  }
}

}  // namespace smdk
