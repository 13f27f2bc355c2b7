#pragma once

// Multi-expert retrieval augmentation. Each expert reads one view of the
// retrieved neighbors, collapses every neighbor to one vector per query
// residue (intra-neighbor attention), fuses those with the query residue
// itself (inter-neighbor attention), and a residue-wise gate mixes the
// expert outputs into the retrieval-augmented representation.

#include <set>
#include <string>
#include <vector>

#include "mera/autodiff.hpp"
#include "mera/matrix.hpp"
#include "mera/nn.hpp"
#include "mera/params.hpp"
#include "mera/store.hpp"

namespace mera {

class ExpertKind {
 public:
  enum class View { Seq, Chain, Act, Extra };

  ExpertKind() = default;

  /// "seq", "chain" and "act" are built in; any other name reads the
  /// neighbor's extra embedding block of that name.
  static ExpertKind parse(const std::string& name) {
    if (name.empty()) throw ConfigError("empty expert name");
    ExpertKind k;
    k.name_ = name;
    if (name == "seq")
      k.view_ = View::Seq;
    else if (name == "chain")
      k.view_ = View::Chain;
    else if (name == "act")
      k.view_ = View::Act;
    else
      k.view_ = View::Extra;
    return k;
  }

  const std::string& name() const { return name_; }
  View view() const { return view_; }

  /// The block of a neighbor record this expert attends over.
  Matrix block(const ProteinRecord& r) const {
    switch (view_) {
      case View::Seq:
        return r.seq_emb;
      case View::Chain:
        return r.chain_key;
      case View::Act: {
        if (r.active_indices.empty())
          throw ContractError("act expert: neighbor '" + r.id + "' selects zero active rows");
        return r.active_block();
      }
      case View::Extra: {
        auto it = r.extras.find(name_);
        if (it == r.extras.end()) throw LookupError("neighbor '" + r.id + "' has no '" + name_ + "' block");
        return it->second;
      }
    }
    return {};
  }

  friend bool operator==(const ExpertKind& a, const ExpertKind& b) { return a.name_ == b.name_; }

 private:
  std::string name_ = "seq";
  View view_ = View::Seq;
};

inline std::vector<ExpertKind> parse_experts(const std::vector<std::string>& names) {
  if (names.empty()) throw ConfigError("expert list is empty");
  std::set<std::string> seen;
  std::vector<ExpertKind> out;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw ConfigError("expert '" + n + "' listed twice");
    out.push_back(ExpertKind::parse(n));
  }
  return out;
}

struct ExpertOutput {
  ExpertKind kind;
  Matrix matrix;
};

/// Softmax(q·row_j / τ)-weighted sum of the block's rows.
inline Matrix intra_aggregate(std::span<const double> query_residue, const Matrix& block, double temperature) {
  if (block.rows() == 0) throw EmptyInputError("intra-neighbor aggregation over an empty block");
  if (!(temperature > 0.0)) throw ParameterError("intra temperature must be positive");
  std::vector<double> beta(block.rows());
  for (std::size_t j = 0; j < block.rows(); ++j) beta[j] = dot(query_residue, block.row(j));
  softmax_inplace(beta, temperature);
  Matrix z(1, block.cols());
  for (std::size_t j = 0; j < block.rows(); ++j)
    for (std::size_t d = 0; d < block.cols(); ++d) z(0, d) += beta[j] * block(j, d);
  return z;
}

/// The query residue is candidate 0; weights are softmax(q·candidate).
inline Matrix inter_fuse(std::span<const double> query_residue, const std::vector<Matrix>& summaries) {
  const std::size_t dim = query_residue.size();
  std::vector<double> gamma(summaries.size() + 1);
  gamma[0] = dot(query_residue, query_residue);
  for (std::size_t k = 0; k < summaries.size(); ++k) {
    if (summaries[k].rows() != 1 || summaries[k].cols() != dim)
      throw DimensionError("summary " + summaries[k].shape() + " for query width " + std::to_string(dim));
    gamma[k + 1] = dot(query_residue, summaries[k].row(0));
  }
  softmax_inplace(gamma, 1.0);
  Matrix h(1, dim);
  for (std::size_t d = 0; d < dim; ++d) h(0, d) = gamma[0] * query_residue[d];
  for (std::size_t k = 0; k < summaries.size(); ++k)
    for (std::size_t d = 0; d < dim; ++d) h(0, d) += gamma[k + 1] * summaries[k](0, d);
  return h;
}

/// n×D expert output for one view. With no neighbors the output is h_seq.
inline ExpertOutput expert_forward(const ExpertKind& kind, const Matrix& h_seq, const NeighborSet& neighbors,
                                   double temperature) {
  const std::size_t n = h_seq.rows(), dim = h_seq.cols();
  std::vector<Matrix> blocks;
  for (const auto& nb : neighbors.entries) {
    Matrix b = kind.block(*nb.record);
    if (b.cols() != dim)
      throw DimensionError("neighbor '" + nb.record->id + "' block " + b.shape() + " vs query width " +
                           std::to_string(dim));
    blocks.push_back(std::move(b));
  }
  Matrix out(n, dim);
  std::vector<Matrix> summaries(blocks.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < blocks.size(); ++k) summaries[k] = intra_aggregate(h_seq.row(i), blocks[k], temperature);
    Matrix h = inter_fuse(h_seq.row(i), summaries);
    std::copy(h.row(0).begin(), h.row(0).end(), out.row(i).begin());
  }
  return {kind, std::move(out)};
}

enum class GateMode { PerDimension, PerExpert };

inline std::string to_string(GateMode m) { return m == GateMode::PerDimension ? "per_dimension" : "per_expert"; }

inline GateMode parse_gate_mode(const std::string& s) {
  if (s == "per_dimension") return GateMode::PerDimension;
  if (s == "per_expert") return GateMode::PerExpert;
  throw ConfigError("unknown gate mode '" + s + "'");
}

/// Registers gate.{W1,b1,W2,b2}: input E·D, output E·D (per-dimension) or E.
inline void add_gate_params(ParameterStore& params, std::size_t experts, std::size_t dim, std::size_t hidden,
                            GateMode mode, Rng& rng) {
  add_mlp2(params, "gate", experts * dim, hidden, mode == GateMode::PerDimension ? experts * dim : experts, rng);
}

/// Gate weights laid out n×(E·D): entry (i, e·D + d) is the weight of
/// expert e at residue i, dimension d.
struct GateWeights {
  std::size_t experts = 0;
  std::size_t dim = 0;
  Matrix values;

  double at(std::size_t i, std::size_t e, std::size_t d) const { return values(i, e * dim + d); }
};

inline Matrix concat_expert_outputs(const std::vector<ExpertOutput>& outs) {
  if (outs.empty()) throw EmptyInputError("gate over zero experts");
  const std::size_t n = outs[0].matrix.rows(), dim = outs[0].matrix.cols();
  for (const auto& o : outs)
    if (o.matrix.rows() != n || o.matrix.cols() != dim)
      throw DimensionError("expert '" + o.kind.name() + "' output " + o.matrix.shape() + " vs " +
                           Matrix::shape_string(n, dim));
  Matrix cat(n, outs.size() * dim);
  for (std::size_t e = 0; e < outs.size(); ++e)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < dim; ++d) cat(i, e * dim + d) = outs[e].matrix(i, d);
  return cat;
}

namespace ad {

/// Residue-wise soft gate on the tape. Expert outputs are constants; the
/// gate MLP parameters are the differentiable inputs.
template <typename Params>
Var moe_gate(Tape& tape, const std::vector<ExpertOutput>& outs, Params& params, GateMode mode,
             GateWeights* weights_out = nullptr) {
  const std::size_t experts = outs.size();
  Var cat = tape.constant(concat_expert_outputs(outs));
  const std::size_t dim = cat.cols() / experts;
  Var logits = mlp2_forward(cat, params, "gate");
  Var gates;
  if (mode == GateMode::PerDimension) {
    if (logits.cols() != experts * dim)
      throw DimensionError("per-dimension gate emits " + logits.value().shape() + ", expected width " +
                           std::to_string(experts * dim));
    gates = softmax_across_blocks(logits, experts);
  } else {
    if (logits.cols() != experts)
      throw DimensionError("per-expert gate emits " + logits.value().shape() + ", expected width " +
                           std::to_string(experts));
    gates = repeat_columns(softmax_rows(logits), dim);
  }
  if (weights_out) *weights_out = {experts, dim, gates.value()};
  return sum_blocks(hadamard(gates, cat), experts);
}

}  // namespace ad

struct GateResult {
  GateWeights weights;
  Matrix h_rag;
};

inline GateResult moe_gate(const std::vector<ExpertOutput>& outs, const ParameterStore& params, GateMode mode) {
  ad::Tape tape;
  GateResult r;
  ad::Var h = ad::moe_gate(tape, outs, params, mode, &r.weights);
  r.h_rag = h.value();
  return r;
}

/// Rebuilds the gate for a subset of the experts it was trained with by
/// dropping the corresponding input rows and output columns.
inline void slice_gate_params(ParameterStore& params, const std::vector<std::string>& trained,
                              const std::vector<std::string>& kept, std::size_t dim, GateMode mode) {
  std::vector<std::size_t> keep_idx;
  for (const auto& k : kept) {
    auto it = std::find(trained.begin(), trained.end(), k);
    if (it == trained.end()) throw ConfigError("expert '" + k + "' was not part of the trained gate");
    keep_idx.push_back(static_cast<std::size_t>(it - trained.begin()));
  }
  if (keep_idx.size() == trained.size()) return;
  const Matrix w1 = params.value("gate.W1");
  if (w1.rows() != trained.size() * dim)
    throw DimensionError("gate.W1 is " + w1.shape() + " for " + std::to_string(trained.size()) + " experts of width " +
                         std::to_string(dim));
  Matrix nw1(keep_idx.size() * dim, w1.cols());
  for (std::size_t k = 0; k < keep_idx.size(); ++k)
    for (std::size_t d = 0; d < dim; ++d)
      std::copy(w1.row(keep_idx[k] * dim + d).begin(), w1.row(keep_idx[k] * dim + d).end(),
                nw1.row(k * dim + d).begin());
  const std::size_t block = mode == GateMode::PerDimension ? dim : 1;
  auto slice_cols = [&](const Matrix& m) {
    Matrix out(m.rows(), keep_idx.size() * block);
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t k = 0; k < keep_idx.size(); ++k)
        for (std::size_t d = 0; d < block; ++d) out(r, k * block + d) = m(r, keep_idx[k] * block + d);
    return out;
  };
  params.set("gate.W1", std::move(nw1));
  params.set("gate.W2", slice_cols(params.value("gate.W2")));
  params.set("gate.b2", slice_cols(params.value("gate.b2")));
}

}  // namespace mera
