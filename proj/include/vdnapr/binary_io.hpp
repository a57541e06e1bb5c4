#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include "vdnapr/error.hpp"

namespace vdnapr::io {

/// Little-endian primitive writer over any std::ostream.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void bytes(std::span<const std::uint8_t> data) {
    out_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out_) fail(ErrorKind::IoError, "write failed");
  }
  void magic(std::string_view tag) {
    out_.write(tag.data(), static_cast<std::streamsize>(tag.size()));
    if (!out_) fail(ErrorKind::IoError, "write failed");
  }
  void u8(std::uint8_t v) { put_le(v, 1); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v), 8); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }

  /// u16 length prefix + UTF-8 bytes.
  void short_string(std::string_view s) {
    if (s.size() > 0xFFFF) fail(ErrorKind::FormatError, "string longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    magic(s);
  }

 private:
  void put_le(std::uint64_t v, int width) {
    std::array<char, 8> buf{};
    for (int i = 0; i < width; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(buf.data(), width);
    if (!out_) fail(ErrorKind::IoError, "write failed");
  }

  std::ostream& out_;
};

/// Little-endian primitive reader. Truncation raises FormatError naming the
/// byte offset at which the missing field starts.
class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in, std::string source = "stream")
      : in_(in), source_(std::move(source)) {}

  std::uint64_t offset() const noexcept { return offset_; }
  const std::string& source() const noexcept { return source_; }

  void expect_magic(std::string_view tag) {
    std::array<char, 8> buf{};
    read_raw(buf.data(), tag.size(), "magic");
    if (std::string_view(buf.data(), tag.size()) != tag)
      fail(ErrorKind::FormatError, source_ + ": bad magic, expected \"" + std::string(tag) + "\"");
  }
  std::uint8_t u8(const char* what = "u8") { return static_cast<std::uint8_t>(get_le(1, what)); }
  std::uint16_t u16(const char* what = "u16") { return static_cast<std::uint16_t>(get_le(2, what)); }
  std::uint32_t u32(const char* what = "u32") { return static_cast<std::uint32_t>(get_le(4, what)); }
  std::uint64_t u64(const char* what = "u64") { return get_le(8, what); }
  std::int64_t i64(const char* what = "i64") { return static_cast<std::int64_t>(get_le(8, what)); }
  float f32(const char* what = "f32") { return std::bit_cast<float>(static_cast<std::uint32_t>(get_le(4, what))); }
  double f64(const char* what = "f64") { return std::bit_cast<double>(get_le(8, what)); }

  std::string short_string(const char* what = "string") {
    const std::uint16_t n = u16(what);
    std::string s(n, '\0');
    read_raw(s.data(), n, what);
    return s;
  }

  /// Bulk read of `count` little-endian f32 values.
  void f32_array(std::span<float> out, const char* what) {
    if constexpr (std::endian::native == std::endian::little) {
      read_raw(reinterpret_cast<char*>(out.data()), out.size() * sizeof(float), what);
    } else {
      for (auto& v : out) v = f32(what);
    }
  }
  void u64_array(std::span<std::uint64_t> out, const char* what) {
    if constexpr (std::endian::native == std::endian::little) {
      read_raw(reinterpret_cast<char*>(out.data()), out.size() * sizeof(std::uint64_t), what);
    } else {
      for (auto& v : out) v = u64(what);
    }
  }

  /// True when the stream has no further bytes.
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::uint64_t get_le(int width, const char* what) {
    std::array<char, 8> buf{};
    read_raw(buf.data(), static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[i])) << (8 * i);
    return v;
  }

  void read_raw(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      fail(ErrorKind::FormatError, source_ + ": truncated at byte offset " + std::to_string(offset_ + got) +
                                       " while reading " + what + " starting at offset " + std::to_string(offset_));
    }
    offset_ += n;
  }

  std::istream& in_;
  std::string source_;
  std::uint64_t offset_ = 0;
};

inline void write_u64_array(BinaryWriter& w, std::span<const std::uint64_t> values, std::ostream& raw) {
  if constexpr (std::endian::native == std::endian::little) {
    raw.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
    if (!raw) fail(ErrorKind::IoError, "write failed");
  } else {
    for (auto v : values) w.u64(v);
  }
}

inline void write_f32_array(BinaryWriter& w, std::span<const float> values, std::ostream& raw) {
  if constexpr (std::endian::native == std::endian::little) {
    raw.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
    if (!raw) fail(ErrorKind::IoError, "write failed");
  } else {
    for (auto v : values) w.f32(v);
  }
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  return out;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return in;
}

}  // namespace vdnapr::io
