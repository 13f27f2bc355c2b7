#pragma once

// Single-head cross-attention from residues (queries) to text tokens
// (keys/values). Produces one text-guided row per residue, in the residue
// embedding width.

#include <cmath>

#include "mera/autodiff.hpp"
#include "mera/params.hpp"
#include "mera/random.hpp"

namespace mera {

/// Registers text.{WQ,WK,WV}: WQ is D×d_a, WK is D_text×d_a, WV is D_text×D.
inline void add_textguide_params(ParameterStore& params, std::size_t seq_dim, std::size_t text_dim,
                                 std::size_t attn_dim, Rng& rng) {
  if (attn_dim < 1) throw ConfigError("attention width must be at least 1");
  params.add_glorot("text.WQ", seq_dim, attn_dim, rng);
  params.add_glorot("text.WK", text_dim, attn_dim, rng);
  params.add_glorot("text.WV", text_dim, seq_dim, rng);
}

namespace ad {

/// softmax(h_seq·WQ · (text·WK)ᵀ / √d_a) · text·WV
template <typename Params>
Var cross_attend(Var h_seq, Var text_emb, Params& params, Matrix* attention_out = nullptr) {
  if (text_emb.rows() == 0) throw EmptyInputError("cross-attention over zero text tokens");
  Tape& t = *h_seq.tape;
  Var wq = t.parameter(params, "text.WQ");
  Var wk = t.parameter(params, "text.WK");
  Var wv = t.parameter(params, "text.WV");
  if (wq.rows() != h_seq.cols())
    throw DimensionError("text.WQ " + wq.value().shape() + " for residues " + h_seq.value().shape());
  if (wk.rows() != text_emb.cols() || wv.rows() != text_emb.cols())
    throw DimensionError("text.WK " + wk.value().shape() + " / text.WV " + wv.value().shape() + " for text " +
                         text_emb.value().shape());
  Var q = matmul(h_seq, wq);
  Var k = matmul(text_emb, wk);
  Var v = matmul(text_emb, wv);
  Var att = softmax_rows(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols()))));
  if (attention_out) *attention_out = att.value();
  return matmul(att, v);
}

}  // namespace ad

inline Matrix cross_attend(const Matrix& h_seq, const Matrix& text_emb, const ParameterStore& params) {
  ad::Tape tape;
  return ad::cross_attend(tape.constant(h_seq), tape.constant(text_emb), params).value();
}

}  // namespace mera
