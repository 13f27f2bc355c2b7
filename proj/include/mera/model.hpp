#pragma once

// Wiring of one protein through retrieval, the experts and gate, the text
// cross-attention and the fusion heads.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mera/autodiff.hpp"
#include "mera/config.hpp"
#include "mera/merag.hpp"
#include "mera/rmf.hpp"
#include "mera/store.hpp"
#include "mera/textguide.hpp"

namespace mera {

struct ProteinInput {
  std::string id;
  Matrix seq;                 // n×D residue embeddings
  std::optional<Matrix> text; // m×D_text token embeddings
  std::vector<std::uint8_t> labels;
  std::optional<std::string> cluster;
  std::map<std::string, Matrix> extras;

  std::size_t length() const { return seq.rows(); }

  ProteinRecord to_record() const {
    return ProteinRecord::from_labels(id, seq, labels, cluster, extras);
  }
};

/// Fresh parameters for every head, the text attention and the gate.
/// Creation order is fixed so a seed determines the whole store.
inline ParameterStore init_params(const MeraConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.require_seed());
  ParameterStore p;
  if (!cfg.experts.empty())
    add_gate_params(p, cfg.experts.size(), cfg.seq_dim, cfg.effective_gate_hidden(), cfg.gate_mode, rng);
  add_textguide_params(p, cfg.seq_dim, cfg.text_dim, cfg.attn_dim, rng);
  for (Modality m : kAllModalities) add_head_params(p, m, cfg.seq_dim, cfg.head_hidden, rng);
  return p;
}

/// Parameter-independent part of the forward pass: neighbors and expert
/// outputs. Computed once per protein and reused across epochs.
struct RetrievalContext {
  NeighborSet neighbors;
  std::vector<ExpertOutput> experts;
  bool failed = false;
  std::string error;
};

/// Retrieval excludes the query's own id. When `allow_empty` is set a failed
/// retrieval degrades to zero neighbors (expert outputs equal the query
/// embeddings); otherwise the failure is recorded in the context.
inline RetrievalContext prepare_retrieval(const MeraConfig& cfg, const Store& store, const ProteinInput& p,
                                          bool allow_empty) {
  RetrievalContext ctx;
  if (!cfg.has_modality(Modality::Rag)) return ctx;
  if (store.size() > 0 && store.dim() != p.seq.cols())
    throw DimensionError("protein '" + p.id + "' width " + std::to_string(p.seq.cols()) + " vs store width " +
                         std::to_string(store.dim()));
  RetrieveOptions opt;
  opt.k = cfg.k;
  opt.exclude_id = p.id;
  if (cfg.restrict_to_cluster) opt.cluster_id = p.cluster;
  try {
    ctx.neighbors = store.retrieve(chain_key(p.seq), opt);
  } catch (const StoreError& e) {
    ctx.failed = true;
    ctx.error = e.what();
    if (!allow_empty) return ctx;
    ctx.neighbors = {p.id, {}};
  }
  for (const auto& kind : parse_experts(cfg.experts))
    ctx.experts.push_back(expert_forward(kind, p.seq, ctx.neighbors, cfg.intra_temperature));
  return ctx;
}

/// Active modalities for one protein: the configured set, minus text when
/// the protein carries no text tokens.
inline std::vector<Modality> modalities_for(const MeraConfig& cfg, const ProteinInput& p) {
  std::vector<Modality> out;
  for (Modality m : cfg.active_modalities()) {
    if (m == Modality::Text && (!p.text || p.text->rows() == 0)) continue;
    out.push_back(m);
  }
  if (out.empty()) throw ConfigError("protein '" + p.id + "' has no usable modality");
  return out;
}

namespace ad {

struct ForwardTape {
  RmfTape rmf;
  std::optional<Var> h_rag;
  std::optional<Var> h_text;
  GateWeights gate;
};

template <typename Params>
ForwardTape forward(Tape& tape, const MeraConfig& cfg, Params& params, const ProteinInput& p,
                    const RetrievalContext& ctx) {
  if (p.seq.cols() != cfg.seq_dim)
    throw DimensionError("protein '" + p.id + "' embedding width " + std::to_string(p.seq.cols()) +
                         " vs model width " + std::to_string(cfg.seq_dim));
  const auto mods = modalities_for(cfg, p);
  ForwardTape out;
  Var h_seq = tape.constant(p.seq);
  std::vector<Var> reps;
  for (Modality m : mods) {
    switch (m) {
      case Modality::Seq:
        reps.push_back(h_seq);
        break;
      case Modality::Rag:
        if (ctx.experts.empty()) throw ContractError("rag modality active without expert outputs");
        out.h_rag = moe_gate(tape, ctx.experts, params, cfg.gate_mode, &out.gate);
        reps.push_back(*out.h_rag);
        break;
      case Modality::Text:
        if (p.text->cols() != cfg.text_dim)
          throw DimensionError("protein '" + p.id + "' text width " + std::to_string(p.text->cols()) +
                               " vs model text width " + std::to_string(cfg.text_dim));
        out.h_text = cross_attend(h_seq, tape.constant(*p.text), params);
        reps.push_back(*out.h_text);
        break;
    }
  }
  out.rmf = rmf_forward(reps, mods, params);
  return out;
}

}  // namespace ad

struct LossBreakdown {
  double total = 0.0;
  double bce = 0.0;
  double reliability = 0.0;
  std::vector<std::pair<std::string, double>> per_modality;
};

struct LossTape {
  ad::Var total;
  LossBreakdown parts;
};

/// BCE on the fused probability plus λ times the per-modality squared error
/// of the bounded head scores (mean or sum over residues).
inline LossTape build_loss(const ad::RmfTape& rmf, const std::vector<std::uint8_t>& labels, const MeraConfig& cfg) {
  std::vector<double> y(labels.begin(), labels.end());
  ad::Var bce = ad::bce_mean(rmf.y_hat, y);
  LossTape out;
  out.parts.bce = bce.scalar();
  std::optional<ad::Var> rel;
  for (std::size_t s = 0; s < rmf.bounded.size(); ++s) {
    ad::Var term = ad::squared_error(rmf.bounded[s], y, cfg.reliability_reduction == Reduction::Mean);
    out.parts.per_modality.emplace_back(to_string(rmf.bundle.modal.modalities[s]), term.scalar());
    rel = rel ? ad::add(*rel, term) : term;
  }
  out.parts.reliability = rel->scalar();
  out.total = ad::add(bce, ad::scale(*rel, cfg.reliability_weight));
  out.parts.total = out.total.scalar();
  return out;
}

/// Inference for one protein with read-only parameters.
struct Prediction {
  PredictionBundle bundle;
  std::optional<Matrix> h_rag;
  std::optional<Matrix> h_text;
  GateWeights gate;
};

inline Prediction predict(const MeraConfig& cfg, const ParameterStore& params, const ProteinInput& p,
                          const RetrievalContext& ctx) {
  ad::Tape tape;
  auto f = ad::forward(tape, cfg, params, p, ctx);
  Prediction out{f.rmf.bundle, std::nullopt, std::nullopt, f.gate};
  if (f.h_rag) out.h_rag = f.h_rag->value();
  if (f.h_text) out.h_text = f.h_text->value();
  return out;
}

}  // namespace mera
