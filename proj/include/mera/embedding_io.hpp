#pragma once

// Dense embedding files ("MERAEMB1") and the parallel label files written
// next to exported embeddings ("MERALAB1").

#include <cstdint>
#include <string>
#include <vector>

#include "mera/binary_io.hpp"
#include "mera/matrix.hpp"

namespace mera {

inline constexpr const char* kEmbeddingMagic = "MERAEMB1";
inline constexpr const char* kLabelMagic = "MERALAB1";

inline std::vector<std::uint8_t> serialize_embedding(const Matrix& m) {
  io::ByteWriter w;
  w.magic(kEmbeddingMagic);
  w.u8(1);
  w.u32(io::ByteWriter::checked_u32(m.rows(), "row count"));
  w.u32(io::ByteWriter::checked_u32(m.cols(), "column count"));
  w.floats(m);
  return w.bytes();
}

inline Matrix deserialize_embedding(std::vector<std::uint8_t> bytes, const std::string& source) {
  io::ByteReader rd(std::move(bytes), source);
  rd.expect_magic(kEmbeddingMagic);
  const std::uint8_t version = rd.u8();
  if (version != 1) rd.fail("unsupported embedding version " + std::to_string(version));
  const std::uint32_t rows = rd.u32();
  const std::uint32_t cols = rd.u32();
  Matrix m = rd.floats(rows, cols);
  rd.expect_end();
  return m;
}

inline void save_embedding(const std::string& path, const Matrix& m) { io::write_file(path, serialize_embedding(m)); }

inline Matrix load_embedding(const std::string& path) { return deserialize_embedding(io::read_file(path), path); }

inline std::vector<std::uint8_t> serialize_labels(const std::vector<std::uint8_t>& labels) {
  io::ByteWriter w;
  w.magic(kLabelMagic);
  w.u8(1);
  w.u32(io::ByteWriter::checked_u32(labels.size(), "label count"));
  for (std::uint8_t v : labels) w.u8(v ? 1 : 0);
  return w.bytes();
}

inline std::vector<std::uint8_t> deserialize_labels(std::vector<std::uint8_t> bytes, const std::string& source) {
  io::ByteReader rd(std::move(bytes), source);
  rd.expect_magic(kLabelMagic);
  const std::uint8_t version = rd.u8();
  if (version != 1) rd.fail("unsupported label version " + std::to_string(version));
  const std::uint32_t n = rd.u32();
  std::vector<std::uint8_t> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint8_t v = rd.u8();
    if (v > 1) rd.fail("label value " + std::to_string(v) + " is not binary");
    out.push_back(v);
  }
  rd.expect_end();
  return out;
}

inline void save_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  io::write_file(path, serialize_labels(labels));
}

inline std::vector<std::uint8_t> load_labels(const std::string& path) {
  return deserialize_labels(io::read_file(path), path);
}

}  // namespace mera
