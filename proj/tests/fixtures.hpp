#pragma once

// Small hand-sized datasets shared by the unit and acceptance tests.

#include <filesystem>
#include <string>
#include <vector>

#include "mera/model.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace mera;

/// Random proteins with at least one positive and one negative residue.
inline std::vector<ProteinInput> toy_proteins(Rng& rng, std::size_t count, std::size_t length, std::size_t dim,
                                              std::size_t text_dim, const std::string& prefix = "t") {
  std::vector<ProteinInput> out;
  for (std::size_t j = 0; j < count; ++j) {
    ProteinInput p;
    p.id = prefix + std::to_string(j);
    p.seq = oracle::random_matrix(rng, length, dim, 0.7);
    p.text = oracle::random_matrix(rng, 3, text_dim, 0.7);
    p.labels.assign(length, 0);
    for (std::size_t i = 0; i < length; ++i) p.labels[i] = rng.uniform() < 0.3;
    p.labels[0] = 1;
    p.labels[length - 1] = 0;
    p.cluster = "c" + std::to_string(j % 2);
    out.push_back(std::move(p));
  }
  return out;
}

inline Store toy_store(const std::vector<ProteinInput>& proteins) {
  std::vector<ProteinRecord> recs;
  for (const auto& p : proteins) recs.push_back(p.to_record());
  return build_store(std::move(recs));
}

inline MeraConfig toy_config(std::size_t dim, std::size_t text_dim, std::uint64_t seed = 1) {
  MeraConfig c;
  c.seq_dim = dim;
  c.text_dim = text_dim;
  c.attn_dim = 4;
  c.head_hidden = 6;
  c.k = 2;
  c.seed = seed;
  c.learning_rate = 1e-2;
  return c;
}

/// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / ("mera_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace fixture
