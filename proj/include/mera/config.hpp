#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mera/errors.hpp"
#include "mera/merag.hpp"
#include "mera/rmf.hpp"

namespace mera {

enum class Reduction { Mean, Sum };

inline std::string to_string(Reduction r) { return r == Reduction::Mean ? "mean" : "sum"; }

inline Reduction parse_reduction(const std::string& s) {
  if (s == "mean") return Reduction::Mean;
  if (s == "sum") return Reduction::Sum;
  throw ConfigError("unknown reduction '" + s + "' (expected mean or sum)");
}

/// Architecture and training hyper-parameters. Everything that shapes the
/// parameter store lives here so a checkpoint can echo it.
struct MeraConfig {
  // dims
  std::size_t seq_dim = 32;
  std::size_t text_dim = 16;
  std::size_t attn_dim = 64;
  std::size_t head_hidden = 32;
  std::size_t gate_hidden = 0;  // 0 → E·D/2

  // retrieval augmentation
  std::vector<std::string> experts{"seq", "chain", "act"};
  std::vector<std::string> modalities{"seq", "rag", "text"};
  GateMode gate_mode = GateMode::PerDimension;
  std::size_t k = 3;
  double intra_temperature = 0.1;
  bool restrict_to_cluster = false;

  // optimisation
  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  std::optional<std::uint64_t> seed;
  double reliability_weight = 1.0;
  Reduction reliability_reduction = Reduction::Mean;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  std::size_t effective_gate_hidden() const {
    if (gate_hidden) return gate_hidden;
    return std::max<std::size_t>(1, experts.size() * seq_dim / 2);
  }

  std::vector<Modality> active_modalities() const {
    std::vector<Modality> out;
    for (Modality m : kAllModalities)
      if (std::find(modalities.begin(), modalities.end(), to_string(m)) != modalities.end()) out.push_back(m);
    return out;
  }

  bool has_modality(Modality m) const {
    return std::find(modalities.begin(), modalities.end(), to_string(m)) != modalities.end();
  }

  std::uint64_t require_seed() const {
    if (!seed) throw ConfigError("a seed is required");
    return *seed;
  }

  void validate() const {
    if (seq_dim < 1 || text_dim < 1) throw ConfigError("embedding widths must be positive");
    if (attn_dim < 1) throw ConfigError("attn_dim must be positive");
    if (head_hidden < 1) throw ConfigError("head_hidden must be positive");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (k < 1) throw ConfigError("k must be at least 1");
    if (!(intra_temperature > 0.0)) throw ConfigError("intra_temperature must be positive");
    if (!(reliability_weight >= 0.0)) throw ConfigError("reliability_weight must be non-negative");
    parse_experts(experts);
    if (modalities.empty()) throw ConfigError("at least one modality must stay active");
    std::vector<std::string> seen;
    for (const auto& m : modalities) {
      parse_modality(m);
      if (std::find(seen.begin(), seen.end(), m) != seen.end()) throw ConfigError("modality '" + m + "' listed twice");
      seen.push_back(m);
    }
  }

  /// Removes names from the active lists, rejecting unknown names and an
  /// empty result.
  void disable(const std::vector<std::string>& mods, const std::vector<std::string>& exps) {
    for (const auto& m : mods) {
      parse_modality(m);
      std::erase(modalities, m);
    }
    if (modalities.empty()) throw ConfigError("every modality was disabled");
    for (const auto& e : exps) {
      if (std::find(experts.begin(), experts.end(), e) == experts.end())
        throw ConfigError("cannot disable expert '" + e + "': not configured");
      std::erase(experts, e);
    }
    if (experts.empty() && has_modality(Modality::Rag)) throw ConfigError("every expert was disabled");
  }
};

inline nlohmann::json to_json(const MeraConfig& c) {
  nlohmann::json j;
  j["seq_dim"] = c.seq_dim;
  j["text_dim"] = c.text_dim;
  j["attn_dim"] = c.attn_dim;
  j["head_hidden"] = c.head_hidden;
  j["gate_hidden"] = c.gate_hidden;
  j["experts"] = c.experts;
  j["modalities"] = c.modalities;
  j["gate_mode"] = to_string(c.gate_mode);
  j["k"] = c.k;
  j["intra_temperature"] = c.intra_temperature;
  j["restrict_to_cluster"] = c.restrict_to_cluster;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
  j["reliability_weight"] = c.reliability_weight;
  j["reliability_reduction"] = to_string(c.reliability_reduction);
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  return j;
}

/// Overlays the keys present in `j` onto `c`. Unknown keys are rejected.
inline void apply_json(MeraConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      const auto& v = it.value();
      if (key == "seq_dim") c.seq_dim = v.get<std::size_t>();
      else if (key == "text_dim") c.text_dim = v.get<std::size_t>();
      else if (key == "attn_dim") c.attn_dim = v.get<std::size_t>();
      else if (key == "head_hidden") c.head_hidden = v.get<std::size_t>();
      else if (key == "gate_hidden") c.gate_hidden = v.get<std::size_t>();
      else if (key == "experts") c.experts = v.get<std::vector<std::string>>();
      else if (key == "modalities") c.modalities = v.get<std::vector<std::string>>();
      else if (key == "gate_mode") c.gate_mode = parse_gate_mode(v.get<std::string>());
      else if (key == "k") c.k = v.get<std::size_t>();
      else if (key == "intra_temperature") c.intra_temperature = v.get<double>();
      else if (key == "restrict_to_cluster") c.restrict_to_cluster = v.get<bool>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.is_null() ? std::nullopt : std::optional<std::uint64_t>(v.get<std::uint64_t>());
      else if (key == "reliability_weight") c.reliability_weight = v.get<double>();
      else if (key == "reliability_reduction") c.reliability_reduction = parse_reduction(v.get<std::string>());
      else if (key == "adam_beta1") c.adam_beta1 = v.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = v.get<double>();
      else if (key == "adam_eps") c.adam_eps = v.get<double>();
      else throw ConfigError("unknown configuration key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad configuration value: ") + e.what());
  }
}

inline MeraConfig config_from_json(const nlohmann::json& j) {
  MeraConfig c;
  apply_json(c, j);
  return c;
}

}  // namespace mera
