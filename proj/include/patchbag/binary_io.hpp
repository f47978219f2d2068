#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchbag/common.hpp"

namespace patchbag {

/// IEEE 802.3 CRC-32 (the zlib polynomial).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Little-endian byte sink for the binary artifact formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void raw(std::string_view s);
  /// u16 length prefix followed by the bytes.
  void str16(std::string_view s);
  /// Appends the CRC-32 of everything written so far.
  void seal_crc();

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader. Every read past the end throws
/// ErrorCode::Truncated.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string raw(std::size_t n);
  std::string str16();

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n);

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// Verifies and strips the trailing CRC-32. Throws Truncated when the buffer
/// cannot hold one, CrcMismatch when it does not match.
std::span<const std::uint8_t> checked_payload(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void atomic_write_file(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void atomic_write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace patchbag
