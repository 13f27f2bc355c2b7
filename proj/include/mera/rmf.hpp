#pragma once

// Reliability-aware multimodal fusion. Every modality gets its own two-layer
// head; the heads' bounded scores become evidence masses, masses become
// credibility coefficients, credibilities become entropy-based reliability
// indicators, and the final probability is the sigmoid of the
// reliability-weighted raw scores.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mera/autodiff.hpp"
#include "mera/matrix.hpp"
#include "mera/nn.hpp"
#include "mera/params.hpp"

namespace mera {

enum class Modality { Seq, Rag, Text };

inline constexpr std::array<Modality, 3> kAllModalities{Modality::Seq, Modality::Rag, Modality::Text};

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::Seq:
      return "seq";
    case Modality::Rag:
      return "rag";
    case Modality::Text:
      return "text";
  }
  return "?";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "seq") return Modality::Seq;
  if (s == "rag") return Modality::Rag;
  if (s == "text") return Modality::Text;
  throw ConfigError("unknown modality '" + s + "' (expected seq, rag or text)");
}

inline std::string head_prefix(Modality m) { return "head." + to_string(m); }

inline void add_head_params(ParameterStore& params, Modality m, std::size_t dim, std::size_t hidden, Rng& rng) {
  add_mlp2(params, head_prefix(m), dim, hidden, 1, rng);
}

// ---------------------------------------------------------------------------
// Per-residue formulas on plain values

/// Softmax across modalities of the bounded scores.
inline std::vector<double> evidence_mass(std::span<const double> bounded) { return softmax(bounded, 1.0); }

/// c_s = ½(m_s + 1 − max_{s'≠s} m_s'); a lone modality has no rivals (max 0).
inline std::vector<double> credibility(std::span<const double> masses) {
  std::vector<double> c(masses.size());
  for (std::size_t s = 0; s < masses.size(); ++s) {
    double rival = 0.0;
    bool any = false;
    for (std::size_t o = 0; o < masses.size(); ++o) {
      if (o == s) continue;
      rival = any ? std::max(rival, masses[o]) : masses[o];
      any = true;
    }
    c[s] = std::clamp(0.5 * (masses[s] + 1.0 - rival), 0.0, 1.0);
  }
  return c;
}

/// Binary entropy of c in bits, with 0·ln 0 = 0. Lower is more reliable.
inline double reliability(double c) {
  if (c <= 0.0 || c >= 1.0) return 0.0;
  return (-c * std::log(c) - (1.0 - c) * std::log(1.0 - c)) / std::numbers::ln2;
}

/// Softmax of the negated reliability indicators.
inline std::vector<double> fusion_weights(std::span<const double> u) {
  std::vector<double> neg(u.size());
  for (std::size_t s = 0; s < u.size(); ++s) neg[s] = -u[s];
  return softmax(neg, 1.0);
}

/// σ(Σ_s e_s z_s) over raw head scores.
inline double fuse(std::span<const double> raw, std::span<const double> weights) {
  return sigmoid(dot(raw, weights));
}

// ---------------------------------------------------------------------------
// Bundles

/// All per-residue fusion quantities; every matrix is n×S with columns in
/// `modalities` order.
struct ModalityBundle {
  std::vector<Modality> modalities;
  Matrix raw;       // z
  Matrix bounded;   // p = σ(z)
  Matrix mass;      // m
  Matrix cred;      // c
  Matrix rel;       // u
  Matrix weight;    // e

  std::size_t index_of(Modality m) const {
    for (std::size_t s = 0; s < modalities.size(); ++s)
      if (modalities[s] == m) return s;
    return modalities.size();
  }
};

struct PredictionBundle {
  std::vector<double> y_hat;
  ModalityBundle modal;
};

namespace ad {

struct RmfTape {
  Var y_hat;                 // n×1 fused probability
  std::vector<Var> bounded;  // n×1 per modality, p = σ(z)
  PredictionBundle bundle;
};

template <typename Params>
Var head_forward(Var h, Params& params, Modality m) {
  Var z = mlp2_forward(h, params, head_prefix(m));
  if (z.cols() != 1) throw DimensionError(head_prefix(m) + " must emit one column, got " + z.value().shape());
  return z;
}

/// Full fusion on the tape. `reps[s]` is the n×D representation of
/// `modalities[s]`.
template <typename Params>
RmfTape rmf_forward(const std::vector<Var>& reps, const std::vector<Modality>& modalities, Params& params) {
  if (modalities.empty()) throw ConfigError("no active modalities");
  if (reps.size() != modalities.size()) throw ContractError("one representation per modality required");
  const std::size_t n = reps[0].rows();
  for (const Var& r : reps)
    if (r.rows() != n) throw DimensionError("modality representations disagree on residue count");

  std::vector<Var> raw, bounded;
  for (std::size_t s = 0; s < modalities.size(); ++s) {
    raw.push_back(head_forward(reps[s], params, modalities[s]));
    bounded.push_back(sigmoid(raw.back()));
  }
  Var z = concat_cols(raw);
  Var p = concat_cols(bounded);
  Var mass = softmax_rows(p, 1.0);
  Var cred = affine(sub(mass, max_of_others(mass)), 0.5, 0.5);
  Var rel = binary_entropy_bits(cred);
  Var weight = softmax_rows(scale(rel, -1.0), 1.0);
  Var y = sigmoid(sum_rows(hadamard(weight, z)));

  RmfTape out{y, bounded, {}};
  out.bundle.y_hat = y.value().data();
  // σ saturates to exactly 0 or 1 for |logit| beyond ~37; keep reported
  // probabilities strictly inside the open interval.
  for (double& v : out.bundle.y_hat) v = std::clamp(v, 1e-300, std::nextafter(1.0, 0.0));
  out.bundle.modal = {modalities, z.value(), p.value(), mass.value(), cred.value(), rel.value(), weight.value()};
  return out;
}

}  // namespace ad

/// Raw and bounded per-residue scores of one modality head.
inline std::pair<std::vector<double>, std::vector<double>> head_forward(const Matrix& h, const ParameterStore& params,
                                                                        Modality m) {
  ad::Tape tape;
  Matrix z = ad::head_forward(tape.constant(h), params, m).value();
  std::vector<double> raw = z.data(), bounded(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) bounded[i] = sigmoid(raw[i]);
  return {raw, bounded};
}

/// Inference-only fusion. `reps` holds one n×D matrix per entry of
/// `modalities`.
inline PredictionBundle rmf_forward(const std::vector<Matrix>& reps, const std::vector<Modality>& modalities,
                                    const ParameterStore& params) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& r : reps) vars.push_back(tape.constant(r));
  return ad::rmf_forward(vars, modalities, params).bundle;
}

}  // namespace mera
