#include "smdk/tv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smdk {

namespace {

struct Diff {
  double dx, dy;
};

inline Diff forward_diff(const double* s, std::size_t rows, std::size_t cols, std::size_t i,
                         std::size_t j) {
  const double v = s[i * cols + j];
  return {j + 1 < cols ? s[i * cols + j + 1] - v : 0.0, i + 1 < rows ? s[(i + 1) * cols + j] - v : 0.0};
}

void check(std::span<const double> img, ImageShape shape) {
  if (img.size() != shape.rows * shape.cols) {
    throw std::invalid_argument("tv: image size does not match shape");
  }
}

}  // namespace

double tv_value(std::span<const double> img, ImageShape shape, double eps) {
  check(img, shape);
  const double eps2 = eps * eps;
  double sum = 0.0;
  for (std::size_t i = 0; i < shape.rows; ++i) {
    for (std::size_t j = 0; j < shape.cols; ++j) {
      const Diff d = forward_diff(img.data(), shape.rows, shape.cols, i, j);
      sum += std::sqrt(d.dx * d.dx + d.dy * d.dy + eps2);
    }
  }
  return sum;
}

void tv_gradient(std::span<const double> img, ImageShape shape, double eps, std::span<double> grad) {
  check(img, shape);
  check(grad, shape);
  const std::size_t rows = shape.rows;
  const std::size_t cols = shape.cols;
  const double eps2 = eps * eps;
  const double* s = img.data();
  double* g = grad.data();

  // Gather form: each pixel collects the terms of the three edge
  // magnitudes it appears in, so rows can be processed independently.
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const Diff d = forward_diff(s, rows, cols, i, j);
      double acc = -(d.dx + d.dy) / std::sqrt(d.dx * d.dx + d.dy * d.dy + eps2);
      if (j > 0) {
        const Diff l = forward_diff(s, rows, cols, i, j - 1);
        acc += l.dx / std::sqrt(l.dx * l.dx + l.dy * l.dy + eps2);
      }
      if (i > 0) {
        const Diff u = forward_diff(s, rows, cols, i - 1, j);
        acc += u.dy / std::sqrt(u.dx * u.dx + u.dy * u.dy + eps2);
      }
      g[i * cols + j] = acc;
    }
  }
}

double max_gradient_magnitude(std::span<const double> img, ImageShape shape) {
  check(img, shape);
  double best = 0.0;
  for (std::size_t i = 0; i < shape.rows; ++i) {
    for (std::size_t j = 0; j < shape.cols; ++j) {
      const Diff d = forward_diff(img.data(), shape.rows, shape.cols, i, j);
      best = std::max(best, d.dx * d.dx + d.dy * d.dy);
    }
  }
  return std::sqrt(best);
}

double tv_objective(std::span<const double> s, std::span<const double> ref, ImageShape shape,
                    double weight, double eps) {
  check(ref, shape);
  double fid = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = s[i] - ref[i];
    fid += r * r;
  }
  return 0.5 * fid + (weight != 0.0 ? weight * tv_value(s, shape, eps) : 0.0);
}

Tensor3 tv_denoise(const Tensor3& img, double weight, std::size_t inner_iters, double step,
                   double eps, TvDenoiseStats* stats) {
  if (img.slices() != 1) throw std::invalid_argument("tv_denoise: expected a single-slice image");
  if (!(weight >= 0.0)) throw std::invalid_argument("tv_denoise: weight must be non-negative");
  if (!(step > 0.0) || !(eps > 0.0)) throw std::invalid_argument("tv_denoise: step and eps must be positive");

  const ImageShape shape{img.rows(), img.cols()};
  const auto ref = img.values();
  Tensor3 s = img;
  Tensor3 cand = img;
  std::vector<double> grad(ref.size());
  double f = tv_objective(s.values(), ref, shape, weight, eps);
  if (stats) stats->objective.assign(1, f);

  for (std::size_t it = 0; it < inner_iters; ++it) {
    tv_gradient(s.values(), shape, eps, grad);
    const auto sv = s.values();
    double gmax = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      grad[i] = (sv[i] - ref[i]) + weight * grad[i];
      gmax = std::max(gmax, std::abs(grad[i]));
    }
    double length = step * max_gradient_magnitude(sv, shape);
    if (gmax == 0.0 || length == 0.0) break;

    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      const double scale = length / gmax;
      auto cv = cand.values();
      for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = sv[i] - scale * grad[i];
      const double fc = tv_objective(cv, ref, shape, weight, eps);
      if (fc <= f) {
        std::swap(s, cand);
        f = fc;
        accepted = true;
        break;
      }
      length *= 0.5;
      if (stats) ++stats->halvings;
    }
    if (!accepted) {
      if (stats) ++stats->rejected_iterations;
      break;
    }
    if (stats) stats->objective.push_back(f);
  }
  return s;
}

namespace serial {

void tv_gradient(std::span<const double> img, ImageShape shape, double eps, std::span<double> grad) {
  check(img, shape);
  check(grad, shape);
  std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t rows = shape.rows;
  const std::size_t cols = shape.cols;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const Diff d = forward_diff(img.data(), rows, cols, i, j);
      const double inv = 1.0 / std::sqrt(d.dx * d.dx + d.dy * d.dy + eps * eps);
      grad[i * cols + j] -= (d.dx + d.dy) * inv;
      if (j + 1 < cols) grad[i * cols + j + 1] += d.dx * inv;
      if (i + 1 < rows) grad[(i + 1) * cols + j] += d.dy * inv;
    }
  }
}

}  // namespace serial

}  // namespace smdk
