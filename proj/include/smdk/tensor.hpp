#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace smdk {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense rank-3 tensor of doubles with shape (rows, cols, slices).
///
/// Storage is row-major within a slice and the slice index is the slowest
/// axis, so element (r, c, k) lives at `(k * rows + r) * cols + c`. With this
/// layout the mode-3 unfolding is a zero-copy reinterpretation of the buffer
/// as a `slices x (rows*cols)` row-major matrix. 2-D images are tensors with a
/// single slice.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t rows, std::size_t cols, std::size_t slices, double fill = 0.0);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t slices() const noexcept { return slices_; }
  std::size_t slice_size() const noexcept { return rows_ * cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Bounds-checked element access; throws std::out_of_range.
  double& operator()(std::size_t r, std::size_t c, std::size_t k = 0);
  double operator()(std::size_t r, std::size_t c, std::size_t k = 0) const;

  std::span<double> slice(std::size_t k);
  std::span<const double> slice(std::size_t k) const;

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  /// Copy of slice k as a single-slice tensor.
  Tensor3 slice_copy(std::size_t k) const;
  /// Overwrite slice k with a single-slice tensor of matching rows/cols.
  void set_slice(std::size_t k, const Tensor3& image);

  bool same_shape(const Tensor3& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_ && slices_ == other.slices_;
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t slices_ = 0;
  std::vector<double> data_;
};

/// Mode-3 unfolding: row k of the result is the row-major flattening of slice k.
RowMatrix mode3_unfold(const Tensor3& t);

/// Inverse of mode3_unfold for the given spatial shape.
Tensor3 mode3_fold(const RowMatrix& m, std::size_t rows, std::size_t cols);

/// Zero-copy views of the unfolding.
inline Eigen::Map<RowMatrix> mode3_view(Tensor3& t) {
  return {t.data(), static_cast<Eigen::Index>(t.slices()),
          static_cast<Eigen::Index>(t.slice_size())};
}
inline Eigen::Map<const RowMatrix> mode3_view(const Tensor3& t) {
  return {t.data(), static_cast<Eigen::Index>(t.slices()),
          static_cast<Eigen::Index>(t.slice_size())};
}

}  // namespace smdk
