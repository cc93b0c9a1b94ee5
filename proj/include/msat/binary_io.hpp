// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte buffers shared by the checkpoint and feature formats.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace msat {

class ByteWriter {
 public:
  void raw(std::string_view bytes);
  void u32(std::uint32_t v);
  void f64(double v);
  void f64s(std::span<const double> values);
  /// u32 length prefix followed by the bytes.
  void string(std::string_view s);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Reads from a byte span; every read past the end throws FormatError with the
/// offset at which the read started.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::string raw(std::size_t n);
  std::uint32_t u32();
  double f64();
  void f64s(std::span<double> out);
  std::string string();

  bool at_end() const { return offset_ == bytes_.size(); }
  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

 private:
  void need(std::size_t n, const char* what) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace msat
