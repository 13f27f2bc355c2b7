#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "mera/errors.hpp"
#include "mera/matrix.hpp"

namespace mera::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

/// Little-endian byte sink.
class ByteWriter {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  void u8(std::uint8_t v) { bytes_.push_back(v); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void str(std::string_view s) {
    u32(checked_u32(s.size(), "string length"));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  /// Row-major float payload; doubles are narrowed to single precision.
  void floats(const Matrix& m) {
    for (double v : m.data()) f32(static_cast<float>(v));
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  static std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > UINT32_MAX) throw FormatError(std::string(what) + " exceeds 32 bits");
    return static_cast<std::uint32_t>(v);
  }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Little-endian byte source that reports byte offsets on failure.
class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  void expect_magic(std::string_view m) {
    if (bytes_.size() < m.size() ||
        std::memcmp(bytes_.data(), m.data(), m.size()) != 0)
      throw FormatError(source_ + ": bad magic at byte offset 0, expected \"" + std::string(m) + "\"");
    pos_ = m.size();
  }

  std::uint8_t u8() {
    need(1, "byte");
    return bytes_[pos_++];
  }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string str() {
    const std::uint32_t n = u32();
    need(n, "string body");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  /// rows×cols single-precision payload widened to double.
  Matrix floats(std::size_t rows, std::size_t cols) {
    if (cols == 0) fail("zero column count");
    const std::size_t count = rows * cols;
    if (rows != 0 && count / rows != cols) fail("matrix size overflow");
    need(count * 4, "float payload of " + Matrix::shape_string(rows, cols));
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < count; ++i) {
      const float f = f32();
      if (!std::isfinite(f)) fail("non-finite value in payload");
      m.data()[i] = static_cast<double>(f);
    }
    return m;
  }

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  void expect_end() {
    if (!at_end()) fail(std::to_string(bytes_.size() - pos_) + " trailing bytes");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(source_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) fail("truncated " + what);
  }

  std::vector<std::uint8_t> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace mera::io
