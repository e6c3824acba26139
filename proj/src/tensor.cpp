#include "smdk/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace smdk {

Tensor3::Tensor3(std::size_t rows, std::size_t cols, std::size_t slices, double fill)
    : rows_(rows), cols_(cols), slices_(slices), data_(rows * cols * slices, fill) {
  if (rows == 0 || cols == 0 || slices == 0) {
    throw std::invalid_argument("Tensor3: dimensions must be positive");
  }
}

namespace {
[[noreturn]] void throw_oob(std::size_t r, std::size_t c, std::size_t k) {
  throw std::out_of_range("Tensor3 index (" + std::to_string(r) + ", " + std::to_string(c) +
                          ", " + std::to_string(k) + ") out of range");
}
}  // namespace

double& Tensor3::operator()(std::size_t r, std::size_t c, std::size_t k) {
  if (r >= rows_ || c >= cols_ || k >= slices_) throw_oob(r, c, k);
  return data_[(k * rows_ + r) * cols_ + c];
}

double Tensor3::operator()(std::size_t r, std::size_t c, std::size_t k) const {
  if (r >= rows_ || c >= cols_ || k >= slices_) throw_oob(r, c, k);
  return data_[(k * rows_ + r) * cols_ + c];
}

std::span<double> Tensor3::slice(std::size_t k) {
  if (k >= slices_) throw_oob(0, 0, k);
  return std::span<double>(data_).subspan(k * slice_size(), slice_size());
}

std::span<const double> Tensor3::slice(std::size_t k) const {
  if (k >= slices_) throw_oob(0, 0, k);
  return std::span<const double>(data_).subspan(k * slice_size(), slice_size());
}

Tensor3 Tensor3::slice_copy(std::size_t k) const {
  Tensor3 out(rows_, cols_, 1);
  auto src = slice(k);
  std::copy(src.begin(), src.end(), out.data_.begin());
  return out;
}

void Tensor3::set_slice(std::size_t k, const Tensor3& image) {
  if (image.rows_ != rows_ || image.cols_ != cols_ || image.slices_ != 1) {
    throw std::invalid_argument("Tensor3::set_slice: shape mismatch");
  }
  auto dst = slice(k);
  std::copy(image.data_.begin(), image.data_.end(), dst.begin());
}

RowMatrix mode3_unfold(const Tensor3& t) { return mode3_view(t); }

Tensor3 mode3_fold(const RowMatrix& m, std::size_t rows, std::size_t cols) {
  if (static_cast<std::size_t>(m.cols()) != rows * cols) {
    throw std::invalid_argument("mode3_fold: matrix columns do not match rows*cols");
  }
  Tensor3 t(rows, cols, static_cast<std::size_t>(m.rows()));
  mode3_view(t) = m;
  return t;
}

}  // namespace smdk
