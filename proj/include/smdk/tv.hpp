#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smdk/tensor.hpp"

namespace smdk {

struct ImageShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Smoothed isotropic total variation
///   TV_eps(s) = sum_ij sqrt(dx^2 + dy^2 + eps^2)
/// with forward differences and reflective (zero-flux) boundaries, i.e. the
/// difference leaving the last column/row is zero.
double tv_value(std::span<const double> img, ImageShape shape, double eps);

/// Gradient of tv_value, written to `grad` (size rows*cols). Parallel over rows.
void tv_gradient(std::span<const double> img, ImageShape shape, double eps, std::span<double> grad);

/// Largest forward-difference magnitude sqrt(dx^2 + dy^2) over the image.
double max_gradient_magnitude(std::span<const double> img, ImageShape shape);

/// 0.5 * ||s - ref||^2 + weight * TV_eps(s).
double tv_objective(std::span<const double> s, std::span<const double> ref, ImageShape shape,
                    double weight, double eps);

struct TvDenoiseStats {
  std::vector<double> objective;  ///< initial value then one entry per accepted step
  std::size_t halvings = 0;
  std::size_t rejected_iterations = 0;  ///< iterations where no step was accepted
};

/// Minimizes 0.5*||s - img||^2 + weight * TV_eps(s) from s = img by
/// normalized steepest descent: each iteration moves along -g / max|g| with
/// length `step * max_gradient_magnitude(s)`, halving the length until the
/// objective does not increase. `img` must be a single-slice tensor.
Tensor3 tv_denoise(const Tensor3& img, double weight, std::size_t inner_iters, double step,
                   double eps, TvDenoiseStats* stats = nullptr);

namespace serial {
void tv_gradient(std::span<const double> img, ImageShape shape, double eps, std::span<double> grad);
}  // namespace serial

}  // namespace smdk
