#pragma once

// Synthetic protein generator.
//
// Every residue has a type t and every protein a family f. A residue
// embedding is P_t + F_f + noise, where P_t is a type prototype and F_f a
// weaker family offset. A residue is active when a_t + b_f > 0.5, with
// type scores a_t evenly spread over [0, 1] and family biases b_f drawn from
// [-r, r] with r < 0.5; so whether a mid-range type is active depends on the family.
// A single residue shows its type clearly and its family only faintly, while
// the chain key, retrieved same-family neighbors and the text tokens carry
// the family cleanly. Text tokens are noisy linear images of the family
// offset, or pure noise when `noise_text` is set.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "mera/embedding_io.hpp"
#include "mera/errors.hpp"
#include "mera/manifest.hpp"
#include "mera/matrix.hpp"
#include "mera/random.hpp"

namespace mera {

struct SynthConfig {
  std::size_t n_train = 200;
  std::size_t n_valid = 25;
  std::size_t n_test = 25;
  std::size_t length = 50;
  std::size_t seq_dim = 32;
  std::size_t text_dim = 16;
  std::size_t text_tokens = 8;
  std::size_t types = 8;
  std::size_t families = 10;
  double difficulty = 0.5;
  double positive_rate = 0.2;
  double family_strength = 0.1;
  double family_bias_range = 0.45;
  double residue_noise = 1.5;
  double text_noise = 0.3;
  bool noise_text = false;
  std::uint64_t seed = 0;

  std::size_t proteins() const { return n_train + n_valid + n_test; }

  void validate() const {
    if (seq_dim < 2 || text_dim < 2) throw ConfigError("synthetic embedding widths must be at least 2");
    if (proteins() < 10) throw ConfigError("at least 10 synthetic proteins are required");
    if (length < 2) throw ConfigError("synthetic proteins need at least 2 residues");
    if (types < 2) throw ConfigError("at least 2 residue types are required");
    if (families < 1) throw ConfigError("at least 1 family is required");
    if (text_tokens < 1) throw ConfigError("at least 1 text token is required");
    if (!(difficulty >= 0.0 && difficulty <= 1.0)) throw ConfigError("difficulty must lie in [0, 1]");
    if (!(positive_rate > 0.0 && positive_rate < 1.0)) throw ConfigError("positive rate must lie in (0, 1)");
    if (!(family_bias_range >= 0.0 && family_bias_range < 0.5))
      throw ConfigError("family bias range must lie in [0, 0.5)");
    if (!(family_strength >= 0.0) || !(residue_noise >= 0.0) || !(text_noise >= 0.0))
      throw ConfigError("synthetic scales must be non-negative");
  }
};

/// Hidden generative structure, exposed for oracles.
struct SynthWorld {
  Matrix prototypes;           // types × D
  Matrix family_offsets;       // families × D
  std::vector<double> type_score;
  std::vector<double> family_bias;
  std::vector<Matrix> text_maps;  // per token, D_text × D
  static constexpr double kThreshold = 0.5;

  bool active(std::size_t type, std::size_t family) const {
    return type_score[type] + family_bias[family] > kThreshold;
  }
};

struct SynthProtein {
  ProteinInput input;
  Split split = Split::Train;
  std::size_t family = 0;
  std::vector<std::size_t> types;
};

struct SynthData {
  SynthWorld world;
  std::vector<SynthProtein> proteins;
};

namespace detail {

inline double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double sd) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = sd * rng.normal();
  return m;
}

}  // namespace detail

inline SynthData generate_synth(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t D = cfg.seq_dim, T = cfg.types, F = cfg.families;
  const double unit = 1.0 / std::sqrt(static_cast<double>(D));

  SynthData out;
  SynthWorld& w = out.world;
  w.prototypes = detail::gaussian(rng, T, D, unit);
  w.family_offsets = detail::gaussian(rng, F, D, unit * cfg.family_strength);
  for (std::size_t t = 0; t < T; ++t) w.type_score.push_back(static_cast<double>(t) / static_cast<double>(T - 1));
  for (std::size_t f = 0; f < F; ++f) w.family_bias.push_back(rng.uniform(-cfg.family_bias_range, cfg.family_bias_range));
  for (std::size_t j = 0; j < cfg.text_tokens; ++j)
    w.text_maps.push_back(detail::gaussian(rng, cfg.text_dim, D, 1.0 / std::max(cfg.family_strength, 1e-3)));

  std::vector<std::vector<std::size_t>> active_types(F), inactive_types(F);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t) (w.active(t, f) ? active_types[f] : inactive_types[f]).push_back(t);

  const double res_sd = cfg.difficulty * cfg.residue_noise * unit;
  const double expected_pos = cfg.positive_rate * static_cast<double>(cfg.length);
  const std::size_t total = cfg.proteins();
  const int width = total > 9999 ? 6 : 4;
  for (std::size_t i = 0; i < total; ++i) {
    SynthProtein sp;
    sp.split = i < cfg.n_train ? Split::Train : i < cfg.n_train + cfg.n_valid ? Split::Valid : Split::Test;
    sp.family = static_cast<std::size_t>(rng.below(F));
    const auto& act = active_types[sp.family];
    const auto& inact = inactive_types[sp.family];
    // Stochastic rounding keeps the expected positive count exact.
    std::size_t n_pos = static_cast<std::size_t>(std::floor(expected_pos));
    if (rng.uniform() < expected_pos - std::floor(expected_pos)) ++n_pos;
    n_pos = std::clamp<std::size_t>(n_pos, 1, cfg.length - 1);
    std::vector<std::uint8_t> labels(cfg.length, 0);
    for (std::size_t r = 0; r < n_pos; ++r) labels[r] = 1;
    rng.shuffle(labels);

    Matrix seq(cfg.length, D);
    for (std::size_t r = 0; r < cfg.length; ++r) {
      const auto& pool = labels[r] ? act : inact;
      const std::size_t t = pool[static_cast<std::size_t>(rng.below(pool.size()))];
      sp.types.push_back(t);
      for (std::size_t d = 0; d < D; ++d)
        seq(r, d) = detail::to_f32(w.prototypes(t, d) + w.family_offsets(sp.family, d) + res_sd * rng.normal());
    }

    Matrix text(cfg.text_tokens, cfg.text_dim);
    const double text_sd = cfg.text_noise;
    for (std::size_t j = 0; j < cfg.text_tokens; ++j) {
      for (std::size_t c = 0; c < cfg.text_dim; ++c) {
        double v = text_sd * rng.normal();
        if (!cfg.noise_text) v += dot(w.text_maps[j].row(c), w.family_offsets.row(sp.family));
        else v += rng.normal();
        text(j, c) = detail::to_f32(v);
      }
    }

    std::string id = std::to_string(i);
    id = "p" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;
    sp.input.id = id;
    sp.input.seq = std::move(seq);
    sp.input.text = std::move(text);
    sp.input.labels = std::move(labels);
    sp.input.cluster = "fam" + std::to_string(sp.family);
    out.proteins.push_back(std::move(sp));
  }
  return out;
}

/// Writes `<dir>/manifest.json` and `<dir>/emb/<id>.{seq,text}.emb`.
/// Returns the manifest path.
inline std::string write_synth(const SynthData& data, const SynthConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "emb", ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  std::vector<ManifestEntry> entries;
  for (const auto& sp : data.proteins) {
    const std::string seq_rel = "emb/" + sp.input.id + ".seq.emb";
    const std::string text_rel = "emb/" + sp.input.id + ".text.emb";
    save_embedding((fs::path(dir) / seq_rel).string(), sp.input.seq);
    save_embedding((fs::path(dir) / text_rel).string(), *sp.input.text);
    entries.push_back({sp.input.id, seq_rel, text_rel, sp.input.labels, sp.split, sp.input.cluster});
  }
  const std::string path = (fs::path(dir) / "manifest.json").string();
  io::write_text(path, manifest_text(cfg.seq_dim, cfg.text_dim, entries));
  return path;
}

}  // namespace mera
