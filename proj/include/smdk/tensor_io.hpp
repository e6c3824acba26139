#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "smdk/tensor.hpp"

namespace smdk {

/// Raised for malformed or truncated tensor files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor file layout (version 1):
///
///     SMDK1 <rows> <cols> <slices>\n
///     rows*cols*slices little-endian IEEE-754 doubles in Tensor3 storage order
///
/// 2-D images are written with slices = 1.
void write_tensor(std::ostream& out, const Tensor3& t);
void write_tensor(const std::filesystem::path& path, const Tensor3& t);

Tensor3 read_tensor(std::istream& in);
Tensor3 read_tensor(const std::filesystem::path& path);

}  // namespace smdk
