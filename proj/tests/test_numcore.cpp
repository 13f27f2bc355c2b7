#include <gtest/gtest.h>

#include <cmath>

#include "mera/autodiff.hpp"
#include "mera/nn.hpp"
#include "oracles.hpp"

using namespace mera;

TEST(Matmul, IdentityIsNeutral) {
  Rng rng(1);
  const Matrix m = oracle::random_matrix(rng, 2, 5);
  EXPECT_EQ(matmul(Matrix::identity(2), m), m);
}

TEST(Matmul, HandArithmetic) {
  const Matrix c = matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{1}, {1}});
  EXPECT_EQ(c, (Matrix{{3}, {7}}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(2);
  const Matrix a = oracle::random_matrix(rng, 5, 7), b = oracle::random_matrix(rng, 7, 3);
  EXPECT_LE(max_abs_diff(matmul(a, b), oracle::triple_loop_matmul(a, b)), 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(4, 2));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("4x2"), std::string::npos);
  }
}

TEST(Matmul, Associativity) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = oracle::random_matrix(rng, 3, 4), b = oracle::random_matrix(rng, 4, 5),
                 c = oracle::random_matrix(rng, 5, 2);
    EXPECT_LE(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-9);
  }
}

TEST(Softmax, EqualRowIsUniform) {
  for (double t : {0.1, 1.0, 7.0}) {
    const Matrix s = softmax_rows(Matrix{{3, 3, 3, 3}}, t);
    for (double v : s.data()) EXPECT_NEAR(v, 0.25, 1e-15);
  }
}

TEST(Softmax, SaturatesAtLowTemperature) {
  const Matrix s = softmax_rows(Matrix{{10, 0}}, 0.1);
  EXPECT_GE(s(0, 0), 1.0 - 1e-40);
}

TEST(Softmax, DirectFormula) {
  const Matrix s = softmax_rows(Matrix{{1, 2, 3}}, 1.0);
  const double den = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(s(0, j), std::exp(j + 1.0) / den, 1e-12);
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  EXPECT_THROW(softmax_rows(Matrix{{1, 2}}, 0.0), ParameterError);
  EXPECT_THROW(softmax_rows(Matrix{{1, 2}}, -1.0), ParameterError);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(4);
  const Matrix s = softmax_rows(oracle::random_matrix(rng, 50, 9, 30.0), 0.7);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double sum = 0.0;
    for (double v : s.row(r)) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Softmax, TemperatureLimits) {
  const Matrix x{{0.3, -1.2, 2.5, 0.9}};
  const Matrix hot = softmax_rows(x, 1e3);
  for (double v : hot.data()) EXPECT_NEAR(v, 0.25, 1e-2);
  const Matrix cold = softmax_rows(x, 1e-3);
  EXPECT_NEAR(cold(0, 2), 1.0, 1e-12);
}

TEST(Sigmoid, Values) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  for (double x : {0.1, 3.0, 40.0, 700.0}) EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-15);
  EXPECT_NEAR(sigmoid(2.0), 0.880797, 1e-6);
  EXPECT_TRUE(std::isfinite(sigmoid(-1000.0)));
}

namespace {

ParameterStore mlp_params(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed) {
  ParameterStore p;
  Rng rng(seed);
  add_mlp2(p, "m", in, hidden, out, rng);
  for (auto& e : p.entries())
    for (double& v : e.value.data()) v = rng.uniform(-1, 1);
  return p;
}

}  // namespace

TEST(Mlp2, ZeroParametersGiveZero) {
  ParameterStore p = mlp_params(4, 3, 2, 5);
  for (auto& e : p.entries()) e.value.fill(0.0);
  Rng rng(5);
  const Matrix y = mlp2_forward(oracle::random_matrix(rng, 3, 4), p, "m");
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp2, IdentityOnNonNegativeInput) {
  ParameterStore p;
  p.add("m.W1", Matrix::identity(3));
  p.add_zeros("m.b1", 1, 3);
  p.add("m.W2", Matrix::identity(3));
  p.add_zeros("m.b2", 1, 3);
  const Matrix x{{0.0, 1.5, 2.0}, {3.0, 0.25, 0.0}};
  EXPECT_EQ(mlp2_forward(x, p, "m"), x);
}

TEST(Mlp2, MatchesTwoStepOracle) {
  ParameterStore p = mlp_params(4, 5, 2, 6);
  Rng rng(7);
  const Matrix x = oracle::random_matrix(rng, 3, 4);
  Matrix h = oracle::triple_loop_matmul(x, p.value("m.W1"));
  for (std::size_t r = 0; r < h.rows(); ++r)
    for (std::size_t c = 0; c < h.cols(); ++c) h(r, c) = std::max(0.0, h(r, c) + p.value("m.b1")(0, c));
  Matrix y = oracle::triple_loop_matmul(h, p.value("m.W2"));
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += p.value("m.b2")(0, c);
  EXPECT_LE(max_abs_diff(mlp2_forward(x, p, "m"), y), 1e-12);
  ad::Tape tape;
  EXPECT_LE(max_abs_diff(ad::mlp2_forward(tape.constant(x), p, "m").value(), y), 1e-12);
}

TEST(Mlp2, MissingParameterIsLookupError) {
  ParameterStore p = mlp_params(2, 2, 1, 8);
  EXPECT_THROW(mlp2_forward(Matrix(1, 2), p, "other"), LookupError);
}

TEST(Backward, SumOfSquares) {
  ParameterStore p;
  p.add("w", Matrix{{1.5, -2.0, 0.25}});
  ad::Tape t;
  ad::Var w = t.parameter(p, "w");
  t.backward(ad::sum_all(ad::hadamard(w, w)));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(p.grad("w").data()[k], 2.0 * p.value("w").data()[k]);
}

TEST(Backward, UnusedParameterHasZeroGradient) {
  ParameterStore p;
  p.add("w", Matrix{{1.0, 2.0}});
  p.add("unused", Matrix{{3.0}});
  ad::Tape t;
  t.backward(ad::sum_all(t.parameter(p, "w")));
  EXPECT_EQ(p.grad("unused")(0, 0), 0.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  ParameterStore p;
  p.add("w", Matrix{{1.0, 2.0}});
  ad::Tape t;
  EXPECT_THROW(t.backward(t.parameter(p, "w")), ContractError);
}

TEST(Backward, ReplayIsBitIdentical) {
  ParameterStore p = mlp_params(4, 6, 1, 9);
  Rng rng(10);
  ad::Tape t;
  ad::Var loss = ad::sum_all(ad::sigmoid(ad::mlp2_forward(t.constant(oracle::random_matrix(rng, 5, 4)), p, "m")));
  t.backward(loss);
  std::vector<Matrix> first;
  for (const auto& e : p.entries()) first.push_back(e.grad);
  p.zero_grad();
  t.backward(loss);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(p.entries()[i].grad, first[i]);
}

TEST(Params, ZeroGradLeavesValues) {
  ParameterStore p = mlp_params(3, 3, 1, 11);
  const Matrix before = p.value("m.W1");
  p.grad("m.W1").fill(4.0);
  p.zero_grad();
  EXPECT_EQ(p.value("m.W1"), before);
  for (double v : p.grad("m.W1").data()) EXPECT_EQ(v, 0.0);
}

TEST(Params, GlorotBounds) {
  ParameterStore p;
  Rng rng(12);
  p.add_glorot("w", 10, 6, rng);
  const double lim = std::sqrt(6.0 / 16.0);
  for (double v : p.value("w").data()) EXPECT_LE(std::abs(v), lim);
}

TEST(FiniteDiff, QuadraticIsExact) {
  ParameterStore p;
  p.add("w", Matrix{{0.3, -1.1, 2.0}, {0.7, 0.0, -0.4}});
  auto f = [](ad::Tape& t, ParameterStore& ps) {
    ad::Var w = t.parameter(ps, "w");
    return ad::sum_all(ad::hadamard(w, w));
  };
  const auto r = ad::finite_diff_check(f, p);
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.checked, 6u);
}

TEST(FiniteDiff, SigmoidOfDot) {
  ParameterStore p;
  Rng rng(13);
  p.add("w", oracle::random_matrix(rng, 4, 1));
  const Matrix x = oracle::random_matrix(rng, 3, 4);
  auto f = [&](ad::Tape& t, ParameterStore& ps) {
    return ad::sum_all(ad::sigmoid(ad::matmul(t.constant(x), t.parameter(ps, "w"))));
  };
  EXPECT_LT(ad::finite_diff_check(f, p).max_relative_error, 1e-6);
}

TEST(FiniteDiff, ReluKinkIsSkipped) {
  ParameterStore p;
  p.add("w", Matrix{{0.0, 1.0}});
  auto f = [](ad::Tape& t, ParameterStore& ps) { return ad::sum_all(ad::relu(t.parameter(ps, "w"))); };
  const auto r = ad::finite_diff_check(f, p);
  EXPECT_EQ(r.skipped_kinks, 1u);
  EXPECT_EQ(r.checked, 1u);
  EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  ParameterStore p;
  p.add("w", Matrix{{1.0}});
  auto f = [](ad::Tape& t, ParameterStore& ps) { return ad::sum_all(t.parameter(ps, "w")); };
  EXPECT_THROW(ad::finite_diff_check(f, p, 0.0), ParameterError);
}

TEST(FiniteDiff, CompositeOperations) {
  // Every primitive on one tape: the gradient check covers their backward rules.
  ParameterStore p;
  Rng rng(14);
  p.add("a", oracle::random_matrix(rng, 3, 6));
  p.add("b", oracle::random_matrix(rng, 1, 6));
  const std::vector<double> labels{1, 0, 1};
  auto f = [&](ad::Tape& t, ParameterStore& ps) {
    ad::Var a = t.parameter(ps, "a");
    ad::Var b = t.parameter(ps, "b");
    ad::Var x = ad::add_bias(a, b);
    ad::Var g = ad::softmax_across_blocks(x, 3);
    ad::Var s = ad::sum_blocks(ad::hadamard(g, ad::affine(x, 0.5, 0.1)), 3);
    ad::Var r = ad::softmax_rows(ad::matmul_nt(s, s), 0.7);
    ad::Var col = ad::sum_rows(ad::sub(r, ad::scale(r, 0.3)));
    ad::Var pr = ad::sigmoid(col);
    ad::Var parts[] = {pr, ad::sigmoid(ad::scale(col, -1.0))};
    ad::Var cat = ad::concat_cols(parts);
    ad::Var mo = ad::max_of_others(ad::softmax_rows(cat));
    ad::Var ent = ad::binary_entropy_bits(ad::affine(mo, 0.5, 0.25));
    ad::Var rep = ad::repeat_columns(ent, 2);
    return ad::add(ad::add(ad::bce_mean(pr, labels), ad::squared_error(pr, labels, true)), ad::mean_all(rep));
  };
  EXPECT_LT(ad::finite_diff_check(f, p).max_relative_error, 1e-4);
}
