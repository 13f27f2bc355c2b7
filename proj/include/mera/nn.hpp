#pragma once

#include <string>

#include "mera/autodiff.hpp"
#include "mera/matrix.hpp"
#include "mera/params.hpp"
#include "mera/random.hpp"

namespace mera {

/// Registers prefix.{W1,b1,W2,b2} for an in → hidden → out MLP. Weights are
/// Glorot-uniform, biases start at zero.
inline void add_mlp2(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                     std::size_t out, Rng& rng) {
  store.add_glorot(prefix + ".W1", in, hidden, rng);
  store.add_zeros(prefix + ".b1", 1, hidden);
  store.add_glorot(prefix + ".W2", hidden, out, rng);
  store.add_zeros(prefix + ".b2", 1, out);
}

/// x·W1 + b1 → ReLU → ·W2 + b2, without a tape.
inline Matrix mlp2_forward(const Matrix& x, const ParameterStore& params, const std::string& prefix) {
  const Matrix& w1 = params.value(prefix + ".W1");
  const Matrix& b1 = params.value(prefix + ".b1");
  const Matrix& w2 = params.value(prefix + ".W2");
  const Matrix& b2 = params.value(prefix + ".b2");
  Matrix h = matmul(x, w1);
  if (b1.rows() != 1 || b1.cols() != h.cols()) throw DimensionError("bias " + b1.shape() + " for " + h.shape());
  for (std::size_t r = 0; r < h.rows(); ++r)
    for (std::size_t c = 0; c < h.cols(); ++c) h(r, c) = std::max(0.0, h(r, c) + b1(0, c));
  Matrix y = matmul(h, w2);
  if (b2.rows() != 1 || b2.cols() != y.cols()) throw DimensionError("bias " + b2.shape() + " for " + y.shape());
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += b2(0, c);
  return y;
}

namespace ad {

/// Works with a mutable store (parameters become differentiable leaves) or a
/// const one (parameters enter as constants).
template <typename Params>
Var mlp2_forward(Var x, Params& params, const std::string& prefix) {
  Tape& t = *x.tape;
  Var h = relu(add_bias(matmul(x, t.parameter(params, prefix + ".W1")), t.parameter(params, prefix + ".b1")));
  return add_bias(matmul(h, t.parameter(params, prefix + ".W2")), t.parameter(params, prefix + ".b2"));
}

}  // namespace ad
}  // namespace mera
