#include "smdk/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace smdk {

namespace {

constexpr const char* kMagic = "SMDK1";

void encode_le(double v, unsigned char* out) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out[b] = static_cast<unsigned char>(bits >> (8 * b));
}

double decode_le(const unsigned char* in) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(in[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor3& t) {
  out << kMagic << ' ' << t.rows() << ' ' << t.cols() << ' ' << t.slices() << '\n';
  std::vector<unsigned char> buf(t.size() * 8);
  const auto values = t.values();
  for (std::size_t i = 0; i < values.size(); ++i) encode_le(values[i], &buf[8 * i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write_tensor: stream write failed");
}

void write_tensor(const std::filesystem::path& path, const Tensor3& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_tensor: cannot open " + path.string());
  write_tensor(out, t);
}

Tensor3 read_tensor(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw FormatError("tensor file: missing header line");
  std::istringstream hs(header);
  std::string magic;
  long long dims[3] = {0, 0, 0};
  hs >> magic >> dims[0] >> dims[1] >> dims[2];
  if (magic != kMagic) throw FormatError("tensor file: bad magic '" + magic + "', expected SMDK1");
  std::string extra;
  if (!hs || (hs >> extra) || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
    throw FormatError("tensor file: malformed header '" + header + "'");
  }
  Tensor3 t(static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
            static_cast<std::size_t>(dims[2]));
  const std::size_t expected = t.size() * 8;
  std::vector<unsigned char> buf(expected);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != expected) {
    throw FormatError("tensor file: truncated payload, expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(got));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("tensor file: trailing bytes after " + std::to_string(expected) +
                      "-byte payload");
  }
  auto values = t.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = decode_le(&buf[8 * i]);
  return t;
}

Tensor3 read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_tensor: cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace smdk
