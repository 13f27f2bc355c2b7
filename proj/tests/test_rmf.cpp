#include <gtest/gtest.h>

#include <cmath>

#include "mera/rmf.hpp"
#include "oracles.hpp"

using namespace mera;

namespace {

ParameterStore head_params(std::size_t dim, std::uint64_t seed, bool shared = false) {
  ParameterStore p;
  Rng rng(seed);
  for (Modality m : kAllModalities) add_head_params(p, m, dim, 5, rng);
  for (auto& e : p.entries())
    for (double& v : e.value.data()) v = rng.uniform(-1, 1);
  if (shared)
    for (Modality m : {Modality::Rag, Modality::Text})
      for (const char* part : {".W1", ".b1", ".W2", ".b2"})
        p.value(head_prefix(m) + part) = p.value(head_prefix(Modality::Seq) + part);
  return p;
}

const std::vector<Modality> kThree{Modality::Seq, Modality::Rag, Modality::Text};

}  // namespace

TEST(Head, ZeroParametersGiveHalf) {
  ParameterStore p = head_params(4, 1);
  for (auto& e : p.entries()) e.value.fill(0.0);
  Rng rng(1);
  const auto [raw, bounded] = head_forward(oracle::random_matrix(rng, 3, 4), p, Modality::Seq);
  for (double v : raw) EXPECT_EQ(v, 0.0);
  for (double v : bounded) EXPECT_EQ(v, 0.5);
}

TEST(Head, RowsAreIndependent) {
  const ParameterStore p = head_params(3, 2);
  const Matrix h{{0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}, {-1, 0, 1}};
  const auto [raw, bounded] = head_forward(h, p, Modality::Text);
  EXPECT_EQ(raw[0], raw[1]);
  EXPECT_EQ(bounded[0], bounded[1]);
}

TEST(Head, CompositionOracle) {
  const ParameterStore p = head_params(4, 3);
  Rng rng(3);
  const Matrix h = oracle::random_matrix(rng, 3, 4);
  const Matrix z = mlp2_forward(h, p, "head.rag");
  const auto [raw, bounded] = head_forward(h, p, Modality::Rag);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(raw[i], z(i, 0), 1e-12);
    EXPECT_NEAR(bounded[i], 1.0 / (1.0 + std::exp(-z(i, 0))), 1e-12);
  }
}

TEST(Mass, EqualScoresUniform) {
  for (double v : evidence_mass(std::vector<double>{0.3, 0.3, 0.3, 0.3})) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Mass, BoundaryExample) {
  const auto m = evidence_mass(std::vector<double>{1, 0, 0});
  const double e = std::exp(1.0);
  EXPECT_NEAR(m[0], e / (e + 2), 1e-12);
  EXPECT_NEAR(m[1], 1 / (e + 2), 1e-12);
  EXPECT_NEAR(m[0], 0.57612, 1e-5);
  EXPECT_NEAR(m[2], 0.21194, 1e-5);
}

TEST(Mass, InteriorExample) {
  const auto m = evidence_mass(std::vector<double>{0.9, 0.5, 0.1});
  const double den = std::exp(0.9) + std::exp(0.5) + std::exp(0.1);
  EXPECT_NEAR(m[0], std::exp(0.9) / den, 1e-12);
  EXPECT_NEAR(m[1], std::exp(0.5) / den, 1e-12);
  EXPECT_NEAR(m[2], std::exp(0.1) / den, 1e-12);
  // Five-decimal reference values; the last one is off by one unit in its
  // final digit (0.211983), hence the wider tolerance.
  EXPECT_NEAR(m[0], 0.47178, 5e-5);
  EXPECT_NEAR(m[1], 0.31625, 5e-5);
  EXPECT_NEAR(m[2], 0.21197, 5e-5);
}

TEST(Credibility, Uniform) {
  for (double c : credibility(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3})) EXPECT_NEAR(c, 0.5, 1e-15);
}

TEST(Credibility, Boundary) {
  const auto c = credibility(std::vector<double>{1, 0, 0});
  EXPECT_EQ(c, (std::vector<double>{1, 0, 0}));
}

TEST(Credibility, Example) {
  const auto c = credibility(std::vector<double>{0.5, 0.3, 0.2});
  EXPECT_NEAR(c[0], 0.6, 1e-12);
  EXPECT_NEAR(c[1], 0.4, 1e-12);
  EXPECT_NEAR(c[2], 0.35, 1e-12);
}

TEST(Credibility, LoneModalityIsCertain) { EXPECT_EQ(credibility(std::vector<double>{1.0}), std::vector<double>{1.0}); }

TEST(Reliability, Values) {
  EXPECT_NEAR(reliability(0.5), 1.0, 1e-15);
  EXPECT_EQ(reliability(0.0), 0.0);
  EXPECT_EQ(reliability(1.0), 0.0);
  EXPECT_NEAR(reliability(0.6), -(0.6 * std::log2(0.6) + 0.4 * std::log2(0.4)), 1e-12);
  EXPECT_NEAR(reliability(0.6), 0.97095, 1e-5);
}

TEST(FusionWeights, Values) {
  for (double e : fusion_weights(std::vector<double>{0.4, 0.4, 0.4})) EXPECT_NEAR(e, 1.0 / 3, 1e-15);
  const auto e = fusion_weights(std::vector<double>{0, 1, 1});
  EXPECT_NEAR(e[0], 0.57612, 1e-5);
  EXPECT_NEAR(e[1], 0.21194, 1e-5);
  const auto o = fusion_weights(std::vector<double>{0.9, 0.1, 0.5});
  EXPECT_LT(o[0], o[2]);
  EXPECT_LT(o[2], o[1]);
}

TEST(Fuse, Values) {
  EXPECT_EQ(fuse(std::vector<double>{0, 0, 0}, std::vector<double>{0.2, 0.3, 0.5}), 0.5);
  EXPECT_NEAR(fuse(std::vector<double>{1.3, 1.3, 1.3}, std::vector<double>{0.2, 0.3, 0.5}), sigmoid(1.3), 1e-15);
  EXPECT_NEAR(fuse(std::vector<double>{2, -1, 0}, std::vector<double>{0.5, 0.3, 0.2}), sigmoid(0.7), 1e-15);
  EXPECT_NEAR(fuse(std::vector<double>{2, -1, 0}, std::vector<double>{0.5, 0.3, 0.2}), 0.66819, 1e-5);
}

TEST(Rmf, SingleModalityIsIdentity) {
  const ParameterStore p = head_params(4, 4);
  Rng rng(5);
  const Matrix h = oracle::random_matrix(rng, 4, 4);
  const PredictionBundle b = rmf_forward({h}, {Modality::Rag}, p);
  const auto [raw, bounded] = head_forward(h, p, Modality::Rag);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(b.y_hat[i], bounded[i], 1e-15);
    EXPECT_EQ(b.modal.weight(i, 0), 1.0);
    EXPECT_EQ(b.modal.rel(i, 0), 0.0);
  }
}

TEST(Rmf, SymmetricInputs) {
  const ParameterStore p = head_params(3, 6, true);
  Rng rng(7);
  const Matrix h = oracle::random_matrix(rng, 2, 3);
  const PredictionBundle b = rmf_forward({h, h, h}, kThree, p);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t s = 0; s < 3; ++s) {
      EXPECT_NEAR(b.modal.mass(i, s), 1.0 / 3, 1e-15);
      EXPECT_NEAR(b.modal.cred(i, s), 0.5, 1e-15);
      EXPECT_NEAR(b.modal.rel(i, s), 1.0, 1e-12);
      EXPECT_NEAR(b.modal.weight(i, s), 1.0 / 3, 1e-12);
    }
}

TEST(Rmf, StraightLineOracle) {
  const ParameterStore p = head_params(4, 8);
  Rng rng(9);
  const std::vector<Matrix> reps{oracle::random_matrix(rng, 2, 4), oracle::random_matrix(rng, 2, 4),
                                 oracle::random_matrix(rng, 2, 4)};
  const PredictionBundle b = rmf_forward(reps, kThree, p);
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<double> z;
    for (std::size_t s = 0; s < 3; ++s) z.push_back(mlp2_forward(reps[s], p, head_prefix(kThree[s]))(i, 0));
    const auto t = oracle::straight_line_fusion(z);
    for (std::size_t s = 0; s < 3; ++s) {
      EXPECT_NEAR(b.modal.bounded(i, s), t.p[s], 1e-12);
      EXPECT_NEAR(b.modal.mass(i, s), t.m[s], 1e-12);
      EXPECT_NEAR(b.modal.cred(i, s), t.c[s], 1e-12);
      EXPECT_NEAR(b.modal.rel(i, s), t.u[s], 1e-12);
      EXPECT_NEAR(b.modal.weight(i, s), t.e[s], 1e-12);
    }
    EXPECT_NEAR(b.y_hat[i], t.y, 1e-12);
  }
}

TEST(Rmf, ModalityOrderEquivariance) {
  const ParameterStore p = head_params(4, 10);
  Rng rng(11);
  const Matrix a = oracle::random_matrix(rng, 3, 4), b = oracle::random_matrix(rng, 3, 4), c = oracle::random_matrix(rng, 3, 4);
  const auto f = rmf_forward({a, b, c}, kThree, p);
  const auto g = rmf_forward({c, a, b}, {Modality::Text, Modality::Seq, Modality::Rag}, p);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(f.y_hat[i], g.y_hat[i], 1e-12);
    EXPECT_NEAR(f.modal.rel(i, 2), g.modal.rel(i, 0), 1e-12);
  }
}

TEST(Rmf, Errors) {
  const ParameterStore p = head_params(3, 12);
  EXPECT_THROW(rmf_forward({}, {}, p), ConfigError);
  EXPECT_THROW(rmf_forward({Matrix(2, 3)}, kThree, p), ContractError);
  EXPECT_THROW(rmf_forward({Matrix(2, 3), Matrix(3, 3)}, {Modality::Seq, Modality::Rag}, p), DimensionError);
  EXPECT_THROW(parse_modality("image"), ConfigError);
}

TEST(Rmf, GradientsMatchFiniteDifferences) {
  ParameterStore p = head_params(4, 13);
  Rng rng(14);
  const std::vector<Matrix> reps{oracle::random_matrix(rng, 3, 4), oracle::random_matrix(rng, 3, 4),
                                 oracle::random_matrix(rng, 3, 4)};
  const std::vector<double> y{1, 0, 1};
  auto f = [&](ad::Tape& t, ParameterStore& ps) {
    std::vector<ad::Var> vars;
    for (const auto& r : reps) vars.push_back(t.constant(r));
    auto out = ad::rmf_forward(vars, kThree, ps);
    return ad::bce_mean(out.y_hat, y);
  };
  const auto r = ad::finite_diff_check(f, p);
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_GT(r.checked, 0u);
}

TEST(Rmf, InvariantsOnRandomSimplexPoints) {
  Rng rng(15);
  for (int t = 0; t < 5000; ++t) {
    const std::size_t S = 2 + rng.below(3);
    std::vector<double> w(S);
    double sum = 0.0;
    for (double& v : w) sum += (v = -std::log(1.0 - rng.uniform()));
    for (double& v : w) v /= sum;
    for (double c : credibility(w)) {
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 1.0);
    }
    const double c = rng.uniform();
    EXPECT_NEAR(reliability(c), reliability(1.0 - c), 1e-12);
  }
}
