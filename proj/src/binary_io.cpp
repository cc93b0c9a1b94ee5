// SPDX-License-Identifier: Apache-2.0
#include "msat/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "msat/errors.hpp"

namespace msat {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void ByteWriter::raw(std::string_view bytes) { bytes_.insert(bytes_.end(), bytes.begin(), bytes.end()); }

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void ByteWriter::f64s(std::span<const double> values) {
  const std::size_t start = bytes_.size();
  bytes_.resize(start + values.size() * sizeof(double));
  if (!values.empty()) std::memcpy(&bytes_[start], values.data(), values.size() * sizeof(double));
}

void ByteWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s);
}

void ByteReader::need(std::size_t n, const char* what) const {
  if (remaining() < n) {
    throw FormatError(std::string("truncated data reading ") + what + ": need " + std::to_string(n) +
                          " bytes, " + std::to_string(remaining()) + " left",
                      offset_);
  }
}

std::string ByteReader::raw(std::size_t n) {
  need(n, "bytes");
  std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), n);
  offset_ += n;
  return s;
}

std::uint32_t ByteReader::u32() {
  need(4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
  offset_ += 4;
  return v;
}

double ByteReader::f64() {
  need(8, "f64");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
  offset_ += 8;
  return std::bit_cast<double>(bits);
}

void ByteReader::f64s(std::span<double> out) {
  need(out.size() * sizeof(double), "f64 array");
  if (!out.empty()) std::memcpy(out.data(), bytes_.data() + offset_, out.size() * sizeof(double));
  offset_ += out.size() * sizeof(double);
}

std::string ByteReader::string() {
  const std::size_t at = offset_;
  const std::uint32_t n = u32();
  if (remaining() < n) {
    throw FormatError("truncated string of length " + std::to_string(n), at);
  }
  return raw(n);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace msat
