#include "smdk/types.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace smdk {

void FanBeamGeometry::validate() const {
  std::vector<std::string> errors;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) errors.push_back(std::string(name) + " must be positive");
  };
  auto count = [&](std::size_t v, const char* name) {
    if (v == 0) errors.push_back(std::string(name) + " must be positive");
  };
  positive(source_to_detector_mm, "source_to_detector_mm");
  positive(source_to_isocenter_mm, "source_to_isocenter_mm");
  positive(detector_pitch_mm, "detector_pitch_mm");
  positive(pixel_size_mm, "pixel_size_mm");
  positive(angular_range_rad, "angular_range_rad");
  count(num_views, "num_views");
  count(num_detectors, "num_detectors");
  count(image_width_px, "image_width_px");
  count(image_height_px, "image_height_px");
  count(sub_rays, "sub_rays");
  if (!(source_to_detector_mm > source_to_isocenter_mm)) {
    errors.emplace_back("source_to_detector_mm must exceed source_to_isocenter_mm");
  }
  if (!std::isfinite(detector_offset_px) || !std::isfinite(start_angle_rad)) {
    errors.emplace_back("detector_offset_px and start_angle_rad must be finite");
  }
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "invalid FanBeamGeometry:";
    for (const auto& e : errors) msg << "\n  " << e;
    throw std::invalid_argument(msg.str());
  }
}

double FanBeamGeometry::fov_radius_mm() const {
  // The narrower side of an offset detector limits the covered circle.
  const double half = 0.5 * static_cast<double>(num_detectors) * detector_pitch_mm;
  const double shift = std::abs(detector_offset_px) * detector_pitch_mm;
  const double half_fan = std::atan((half - shift) / source_to_detector_mm);
  return half_fan > 0.0 ? source_to_isocenter_mm * std::sin(half_fan) : 0.0;
}

std::vector<std::string> FanBeamGeometry::warnings() const {
  std::vector<std::string> out;
  const double hw = 0.5 * static_cast<double>(image_width_px) * pixel_size_mm;
  const double hh = 0.5 * static_cast<double>(image_height_px) * pixel_size_mm;
  const double half_diag = std::hypot(hw, hh);
  const double fov = fov_radius_mm();
  if (half_diag > fov) {
    std::ostringstream msg;
    msg << "image half-diagonal " << half_diag << " mm exceeds field-of-view radius " << fov
        << " mm; corner pixels are truncated";
    out.push_back(msg.str());
  }
  return out;
}

MixingMatrix::MixingMatrix(RowMatrix values, std::vector<std::string> material_names)
    : values_(std::move(values)), names_(std::move(material_names)) {
  if (values_.rows() == 0 || values_.cols() == 0) {
    throw std::invalid_argument("MixingMatrix: empty matrix");
  }
  if (!names_.empty() && names_.size() != static_cast<std::size_t>(values_.cols())) {
    throw std::invalid_argument("MixingMatrix: material name count does not match columns");
  }
  if (names_.empty()) {
    for (Eigen::Index v = 0; v < values_.cols(); ++v) names_.push_back("material" + std::to_string(v));
  }
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    const double x = values_.data()[i];
    if (!std::isfinite(x) || x < 0.0) {
      throw std::invalid_argument("MixingMatrix: entries must be finite and non-negative");
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(values_);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  const double tol = static_cast<double>(std::max(values_.rows(), values_.cols())) *
                     std::numeric_limits<double>::epsilon() * smax;
  full_rank_ = values_.rows() >= values_.cols() && smin > tol;
  condition_ = full_rank_ ? smax / smin : std::numeric_limits<double>::infinity();
}

void NoiseModel::validate() const {
  if (photons_per_ray < 1) throw std::invalid_argument("NoiseModel: photons_per_ray must be >= 1");
  if (min_counts_clamp < 1) throw std::invalid_argument("NoiseModel: min_counts_clamp must be >= 1");
}

}  // namespace smdk
