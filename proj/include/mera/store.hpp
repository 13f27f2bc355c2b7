#pragma once

// Protein vector database: records keyed by the mean residue embedding,
// queried by exact cosine top-K with self-exclusion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mera/binary_io.hpp"
#include "mera/errors.hpp"
#include "mera/matrix.hpp"

namespace mera {

/// Mean of the residue embeddings, 1×D.
inline Matrix chain_key(const Matrix& seq_emb) {
  if (seq_emb.rows() == 0) throw EmptyInputError("chain key of a protein with zero residues");
  return column_mean(seq_emb);
}

struct ProteinRecord {
  std::string id;
  Matrix seq_emb;
  Matrix chain_key;
  std::vector<std::size_t> active_indices;
  std::optional<std::string> cluster_id;
  std::optional<std::vector<std::uint8_t>> labels;
  /// Named additional per-residue blocks (e.g. "peptide"), each k×D.
  std::map<std::string, Matrix> extras;

  std::size_t length() const { return seq_emb.rows(); }
  std::size_t dim() const { return seq_emb.cols(); }

  Matrix active_block() const { return select_rows(seq_emb, active_indices); }

  static ProteinRecord make(std::string id, Matrix seq_emb, std::vector<std::size_t> active,
                            std::optional<std::string> cluster = std::nullopt,
                            std::map<std::string, Matrix> extras = {}) {
    ProteinRecord r;
    r.id = std::move(id);
    r.chain_key = mera::chain_key(seq_emb);
    r.seq_emb = std::move(seq_emb);
    r.active_indices = std::move(active);
    r.cluster_id = std::move(cluster);
    r.extras = std::move(extras);
    return r;
  }

  static ProteinRecord from_labels(std::string id, Matrix seq_emb, const std::vector<std::uint8_t>& labels,
                                   std::optional<std::string> cluster = std::nullopt,
                                   std::map<std::string, Matrix> extras = {}) {
    if (labels.size() != seq_emb.rows())
      throw DimensionError("protein '" + id + "': " + std::to_string(labels.size()) + " labels for " +
                           std::to_string(seq_emb.rows()) + " residues");
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i]) active.push_back(i);
    ProteinRecord r = make(std::move(id), std::move(seq_emb), std::move(active), std::move(cluster),
                           std::move(extras));
    r.labels = labels;
    return r;
  }

  /// Throws StoreError describing the first violated invariant.
  void validate() const {
    if (seq_emb.rows() == 0) throw StoreError("record '" + id + "' has zero residues");
    if (active_indices.empty()) throw StoreError("record '" + id + "' has no active sites");
    if (active_indices.size() > seq_emb.rows())
      throw StoreError("record '" + id + "' lists more active sites than residues");
    for (std::size_t k = 0; k < active_indices.size(); ++k) {
      if (active_indices[k] >= seq_emb.rows())
        throw StoreError("record '" + id + "' active index " + std::to_string(active_indices[k]) +
                         " out of range");
      if (k > 0 && active_indices[k] <= active_indices[k - 1])
        throw StoreError("record '" + id + "' active indices not strictly increasing");
    }
    if (!chain_key.same_shape(Matrix(1, seq_emb.cols())))
      throw StoreError("record '" + id + "' chain key has shape " + chain_key.shape());
    if (labels) {
      std::vector<std::size_t> from;
      for (std::size_t i = 0; i < labels->size(); ++i)
        if ((*labels)[i]) from.push_back(i);
      if (from != active_indices) throw StoreError("record '" + id + "' labels disagree with active indices");
    }
    for (const auto& [name, block] : extras)
      if (block.cols() != seq_emb.cols() || block.rows() == 0)
        throw StoreError("record '" + id + "' extra block '" + name + "' has shape " + block.shape());
  }
};

struct Neighbor {
  const ProteinRecord* record = nullptr;
  double similarity = 0.0;
};

struct NeighborSet {
  std::string query_id;
  std::vector<Neighbor> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.record->id);
    return out;
  }
};

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw StoreError("norm error: cosine similarity with a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

struct RetrieveOptions {
  std::size_t k = 3;
  std::optional<std::string> exclude_id;
  std::optional<std::string> cluster_id;
};

class Store {
 public:
  Store() = default;

  const std::vector<ProteinRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  /// Embedding width, 0 for an empty store.
  std::size_t dim() const { return records_.empty() ? 0 : records_.front().dim(); }

  const ProteinRecord* find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
  }

  /// Exact top-K by cosine similarity of chain keys. Ties go to the
  /// lexicographically smaller id. Returns fewer than K entries when fewer
  /// records are eligible; zero eligible records is an error.
  NeighborSet retrieve(const Matrix& query_key, const RetrieveOptions& opt) const {
    if (opt.k < 1) throw ParameterError("retrieval K must be at least 1");
    if (query_key.rows() != 1) throw DimensionError("query key must be a single row, got " + query_key.shape());
    if (!records_.empty() && query_key.cols() != dim())
      throw DimensionError("query key " + query_key.shape() + " against store of width " + std::to_string(dim()));
    const double qn = norm(query_key.row(0));
    if (qn == 0.0) throw StoreError("norm error: query key has zero norm");

    const bool restrict_cluster = opt.cluster_id.has_value() && any_cluster_;
    std::vector<Neighbor> cand;
    cand.reserve(records_.size());
    for (std::size_t j = 0; j < records_.size(); ++j) {
      const ProteinRecord& r = records_[j];
      if (opt.exclude_id && r.id == *opt.exclude_id) continue;
      if (restrict_cluster && r.cluster_id != opt.cluster_id) continue;
      const double sim = std::clamp(dot(query_key.row(0), r.chain_key.row(0)) / (qn * key_norms_[j]), -1.0, 1.0);
      cand.push_back({&r, sim});
    }
    if (cand.empty()) {
      std::string why = records_.empty() ? "store is empty" : "no eligible records";
      throw StoreError("retrieval error for query '" + opt.exclude_id.value_or("") + "': " + why);
    }
    const std::size_t k = std::min(opt.k, cand.size());
    auto better = [](const Neighbor& a, const Neighbor& b) {
      if (a.similarity != b.similarity) return a.similarity > b.similarity;
      return a.record->id < b.record->id;
    };
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), better);
    cand.resize(k);
    return {opt.exclude_id.value_or(""), std::move(cand)};
  }

  friend Store build_store(std::vector<ProteinRecord> records);

 private:
  std::vector<ProteinRecord> records_;
  std::vector<double> key_norms_;
  std::map<std::string, std::size_t> by_id_;
  bool any_cluster_ = false;
};

/// Validates every record and freezes them into a Store.
inline Store build_store(std::vector<ProteinRecord> records) {
  Store s;
  for (std::size_t j = 0; j < records.size(); ++j) {
    const ProteinRecord& r = records[j];
    if (r.active_indices.empty())
      throw StoreError("ingestion error: record '" + r.id + "' has no active sites");
    r.validate();
    if (j > 0 && r.dim() != records[0].dim())
      throw StoreError("record '" + r.id + "' has width " + std::to_string(r.dim()) + ", expected " +
                       std::to_string(records[0].dim()));
    if (!s.by_id_.emplace(r.id, j).second) throw StoreError("build error: duplicate record id '" + r.id + "'");
    const double n = norm(r.chain_key.row(0));
    if (n == 0.0) throw StoreError("norm error: record '" + r.id + "' has a zero chain key");
    s.key_norms_.push_back(n);
    s.any_cluster_ = s.any_cluster_ || r.cluster_id.has_value();
  }
  s.records_ = std::move(records);
  return s;
}

inline constexpr const char* kStoreMagic = "MERASTO1";

inline std::vector<std::uint8_t> serialize_store(const Store& store) {
  bool has_extras = false;
  for (const auto& r : store.records()) has_extras = has_extras || !r.extras.empty();
  io::ByteWriter w;
  w.magic(kStoreMagic);
  w.u8(has_extras ? 2 : 1);
  w.u32(io::ByteWriter::checked_u32(store.size(), "record count"));
  for (const auto& r : store.records()) {
    w.str(r.id);
    w.u32(io::ByteWriter::checked_u32(r.dim(), "embedding width"));
    w.u32(io::ByteWriter::checked_u32(r.length(), "residue count"));
    w.floats(r.seq_emb);
    w.u32(io::ByteWriter::checked_u32(r.active_indices.size(), "active count"));
    for (std::size_t i : r.active_indices) w.u32(static_cast<std::uint32_t>(i));
    w.str(r.cluster_id.value_or(""));
    if (has_extras) {
      w.u32(static_cast<std::uint32_t>(r.extras.size()));
      for (const auto& [name, block] : r.extras) {
        w.str(name);
        w.u32(io::ByteWriter::checked_u32(block.rows(), "extra rows"));
        w.u32(io::ByteWriter::checked_u32(block.cols(), "extra cols"));
        w.floats(block);
      }
    }
  }
  return w.bytes();
}

inline Store deserialize_store(std::vector<std::uint8_t> bytes, const std::string& source) {
  io::ByteReader rd(std::move(bytes), source);
  rd.expect_magic(kStoreMagic);
  const std::uint8_t version = rd.u8();
  if (version != 1 && version != 2) rd.fail("unsupported store version " + std::to_string(version));
  const std::uint32_t count = rd.u32();
  std::vector<ProteinRecord> recs;
  for (std::uint32_t j = 0; j < count; ++j) {
    std::string id = rd.str();
    const std::uint32_t d = rd.u32();
    const std::uint32_t n = rd.u32();
    if (d == 0) rd.fail("record '" + id + "' has zero width");
    Matrix emb = rd.floats(n, d);
    const std::uint32_t nact = rd.u32();
    std::vector<std::size_t> act;
    for (std::uint32_t a = 0; a < nact; ++a) act.push_back(rd.u32());
    std::string cluster = rd.str();
    std::map<std::string, Matrix> extras;
    if (version == 2) {
      const std::uint32_t ne = rd.u32();
      for (std::uint32_t e = 0; e < ne; ++e) {
        std::string name = rd.str();
        const std::uint32_t er = rd.u32(), ec = rd.u32();
        extras.emplace(std::move(name), rd.floats(er, ec));
      }
    }
    if (n == 0) rd.fail("record '" + id + "' has zero residues");
    recs.push_back(ProteinRecord::make(std::move(id), std::move(emb), std::move(act),
                                       cluster.empty() ? std::nullopt : std::optional<std::string>(cluster),
                                       std::move(extras)));
  }
  rd.expect_end();
  return build_store(std::move(recs));
}

inline void save_store(const Store& store, const std::string& path) {
  io::write_file(path, serialize_store(store));
}

inline Store load_store(const std::string& path) { return deserialize_store(io::read_file(path), path); }

}  // namespace mera
