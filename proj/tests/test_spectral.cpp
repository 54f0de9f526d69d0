#include <gtest/gtest.h>

#include <complex>
#include <numeric>
#include <random>

#include "rowgossip/spectral.hpp"
#include "rowgossip/topology.hpp"

using namespace rowgossip;

namespace {

MixingMatrix two_by_two() {
  Matrix a(2, 2);
  a << 0.9, 0.1, 0.5, 0.5;
  return MixingMatrix::from_dense(a);
}

// Independent route: dense SVD.
double svd_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

// Brute-force LHS of the rolling-sum inequality with explicit powers.
double rolling_lhs_bruteforce(const Matrix& a, const Matrix& limit, const std::vector<Matrix>& deltas) {
  double lhs = 0.0;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    Matrix inner = Matrix::Zero(deltas[0].rows(), deltas[0].cols());
    for (std::size_t i = 0; i <= k; ++i) inner += (matrix_power(a, k + 1 - i) - limit) * deltas[i];
    lhs += inner.squaredNorm();
  }
  return lhs;
}

std::vector<Matrix> gaussian_deltas(std::size_t count, Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < count; ++k) {
    Matrix m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) m(i, j) = normal(rng);
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST(Perron, SingleNode) {
  auto a = weights_from_indegree(build_exponential(1));
  auto pi = perron_vector(a);
  ASSERT_EQ(pi.size(), 1);
  EXPECT_DOUBLE_EQ(pi(0), 1.0);
}

TEST(Perron, DoublyStochasticIsUniform) {
  for (auto a : {weights_from_indegree(build_exponential(8)), weights_from_indegree(build_directed_ring(9)),
                 weights_from_indegree(build_exponential(13))}) {
    auto pi = perron_vector(a);
    const double n = static_cast<double>(a.size());
    EXPECT_LE((pi.array() - 1.0 / n).abs().maxCoeff(), 1e-10);
  }
}

TEST(Perron, TwoByTwoAnalytic) {
  // pi^T A = pi^T: 0.1 pi_0 = 0.5 pi_1 with pi_0 + pi_1 = 1.
  auto pi = perron_vector(two_by_two());
  EXPECT_NEAR(pi(0), 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(pi(1), 1.0 / 6.0, 1e-12);
}

TEST(Perron, ResidualAndNormalization) {
  auto a = weights_from_indegree(build_geometric(24, 0.3, 9));
  auto pi = perron_vector(a);
  EXPECT_LE(perron_residual(a, pi), 1e-10);
  EXPECT_NEAR(pi.sum(), 1.0, 1e-12);
  EXPECT_GT(pi.minCoeff(), 0.0);
}

TEST(Perron, IterationBudgetExhausted) {
  auto a = weights_from_indegree(build_geometric(24, 0.3, 9));
  try {
    perron_vector(a, 1e-15, 12);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(PiNorm, ZeroAndIdentity) {
  Vector pi(3);
  pi << 0.2, 0.3, 0.5;
  EXPECT_EQ(pi_operator_norm(Matrix::Zero(3, 3), pi), 0.0);
  EXPECT_NEAR(pi_operator_norm(Matrix::Identity(3, 3), pi), 1.0, 1e-12);
}

TEST(PiNorm, RejectsNonPositiveWeights) {
  Vector pi(2);
  pi << 1.0, 0.0;
  EXPECT_THROW(pi_operator_norm(Matrix::Identity(2, 2), pi), InvalidArgument);
}

TEST(PiNorm, MatchesSvdOnRandomMatrices) {
  Rng rng(17);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + trial % 7;
    Matrix w(n, n);
    Vector pi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pi(i) = unif(rng);
      for (Eigen::Index j = 0; j < n; ++j) w(i, j) = normal(rng);
    }
    pi /= pi.sum();
    const Vector s = pi.cwiseSqrt();
    const double oracle = svd_norm(s.asDiagonal() * w * s.cwiseInverse().asDiagonal());
    EXPECT_NEAR(pi_operator_norm(w, pi), oracle, 1e-9 * oracle);
  }
}

TEST(PiNorm, ExponentialEightBetaIsHalf) {
  auto a = weights_from_indegree(build_exponential(8));
  auto pi = perron_vector(a);
  const Matrix limit = Vector::Ones(8) * pi.transpose();
  EXPECT_NEAR(pi_operator_norm(a.dense() - limit, pi), 0.5, 1e-9);
}

TEST(Metrics, SingleNode) {
  auto m = compute_metrics(weights_from_indegree(build_exponential(1)));
  EXPECT_EQ(m.beta, 0.0);
  EXPECT_EQ(m.kappa, 1.0);
  EXPECT_EQ(m.m_a, 0.0);
  EXPECT_EQ(m.s_a, 0.0);
}

TEST(Metrics, ExponentialSixteen) {
  auto m = compute_metrics(weights_from_indegree(build_exponential(16)));
  EXPECT_NEAR(m.beta, 0.6, 1e-9);
  EXPECT_NEAR(m.kappa, 1.0, 1e-8);
}

TEST(Metrics, RingBetaMatchesCirculantEigenvalues) {
  const std::size_t n = 16;
  auto m = compute_metrics(weights_from_indegree(build_directed_ring(n)));
  // (I + P)/2 is normal; beta is the largest non-unit eigenvalue modulus.
  double oracle = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    const std::complex<double> w = std::polar(1.0, 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n));
    oracle = std::max(oracle, std::abs((1.0 + w) / 2.0));
  }
  EXPECT_NEAR(m.beta, oracle, 1e-9);
  EXPECT_NEAR(m.kappa, 1.0, 1e-8);
}

TEST(Metrics, TwoByTwoKappaIsFive) {
  auto m = compute_metrics(two_by_two());
  EXPECT_NEAR(m.kappa, 5.0, 1e-10);
}

TEST(Metrics, InvariantsOnGeneratedTopologies) {
  for (const auto& g : {build_grid(4, 4), build_geometric(16, 0.35, 3), build_nearest_neighbor(16, 3, 4)}) {
    auto a = weights_from_indegree(g);
    auto m = compute_metrics(a);
    EXPECT_LT(m.beta, 1.0);
    EXPECT_GE(m.kappa, 1.0 - 1e-12);
    EXPECT_LE(m.perron_residual, 1e-10);
    EXPECT_GE(m.theta, a.dense().diagonal().cwiseInverse().maxCoeff());
    EXPECT_GE(m.theta_certified, m.theta);
    EXPECT_NEAR(m.s_a, m.m_a * (1.0 + 0.5 * std::log(m.kappa)) / (1.0 - m.beta), 1e-12);
  }
}

TEST(Metrics, Deterministic) {
  auto a = weights_from_indegree(build_geometric(12, 0.4, 5));
  auto m1 = compute_metrics(a, 40);
  auto m2 = compute_metrics(a, 40);
  EXPECT_EQ(m1.beta, m2.beta);
  EXPECT_EQ(m1.m_a, m2.m_a);
  EXPECT_EQ(m1.theta, m2.theta);
  EXPECT_EQ(m1.pi, m2.pi);
}

TEST(Metrics, MaxNormMatchesFullHorizonScan) {
  auto a = weights_from_indegree(build_geometric(10, 0.45, 8));
  auto m = compute_metrics(a);
  double brute = 0.0;
  Matrix p = Matrix::Identity(10, 10);
  for (std::size_t k = 1; k <= m.horizon; ++k) {
    p = p * a.dense();
    brute = std::max(brute, svd_norm(p - m.limit()));
  }
  EXPECT_NEAR(m.m_a, brute, 1e-9);
}

TEST(Metrics, BetaInvariantUnderPermutation) {
  auto a = weights_from_indegree(build_geometric(12, 0.4, 21));
  auto base = compute_metrics(a);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::PermutationMatrix<Eigen::Dynamic> p(12);
    for (int i = 0; i < 12; ++i) p.indices()(i) = perm[static_cast<std::size_t>(i)];
    Matrix permuted = p * a.dense() * p.transpose();
    auto m = compute_metrics(MixingMatrix::from_dense(permuted));
    EXPECT_NEAR(m.beta, base.beta, 1e-9);
    EXPECT_NEAR(m.kappa, base.kappa, 1e-9);
  }
}

TEST(Metrics, PowerNormEnvelope) {
  for (const auto& g : {build_directed_ring(6), build_grid(3, 3), build_geometric(14, 0.4, 2)}) {
    auto a = weights_from_indegree(g);
    auto m = compute_metrics(a);
    Matrix p = Matrix::Identity(a.dense().rows(), a.dense().cols());
    for (int k = 1; k <= 60; ++k) {
      p = p * a.dense();
      EXPECT_LE(svd_norm(p - m.limit()), std::sqrt(m.kappa) * std::pow(m.beta, k) + 1e-9) << "k=" << k;
    }
  }
}

TEST(MultiGossipMetrics, ContractionImprovesWithRounds) {
  auto a = weights_from_indegree(build_directed_ring(8));
  auto m = compute_metrics(a);
  auto mg = compute_mg_metrics(a, m, 5);
  EXPECT_LE(mg.beta_hat, std::pow(m.beta, 5) + 1e-9);
  EXPECT_NEAR(mg.s_hat / mg.s_hat_rolling, 2.0 * (1.0 + std::log(m.kappa)) / (1.0 + 0.5 * std::log(m.kappa)), 1e-12);
  EXPECT_THROW(compute_mg_metrics(a, m, 0), InvalidArgument);
}

TEST(RollingSum, ZeroDeltasHold) {
  auto a = weights_from_indegree(build_exponential(8));
  auto m = compute_metrics(a);
  auto r = verify_rolling_sum(a, m, std::vector<Matrix>(5, Matrix::Zero(8, 3)));
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_TRUE(r.holds);
}

TEST(RollingSum, SingleDeltaIsDirectProduct) {
  auto a = weights_from_indegree(build_directed_ring(5));
  auto m = compute_metrics(a);
  auto deltas = gaussian_deltas(1, 5, 2, 4);
  auto r = verify_rolling_sum(a, m, deltas);
  EXPECT_NEAR(r.lhs, ((a.dense() - m.limit()) * deltas[0]).squaredNorm(), 1e-12);
  EXPECT_NEAR(r.rhs, m.s_a * m.s_a * deltas[0].squaredNorm(), 1e-12);
  EXPECT_TRUE(r.holds);
}

TEST(RollingSum, MatchesBruteForceAndHolds) {
  auto a = weights_from_indegree(build_exponential(8));
  auto m = compute_metrics(a);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto deltas = gaussian_deltas(12, 8, 3, seed);
    auto r = verify_rolling_sum(a, m, deltas);
    if (seed < 5) {
      EXPECT_NEAR(r.lhs, rolling_lhs_bruteforce(a.dense(), m.limit(), deltas), 1e-9 * r.lhs);
    }
    EXPECT_TRUE(r.holds) << "seed " << seed << ": " << r.lhs << " > " << r.rhs;
  }
}

TEST(RollingSum, ShapeMismatch) {
  auto a = weights_from_indegree(build_exponential(4));
  auto m = compute_metrics(a);
  std::vector<Matrix> deltas{Matrix::Zero(4, 2), Matrix::Zero(4, 3)};
  EXPECT_THROW(verify_rolling_sum(a, m, deltas), ShapeError);
  EXPECT_THROW(verify_rolling_sum(a, m, {Matrix::Zero(3, 2)}), ShapeError);
}

TEST(DiagConvergence, SingleNodeTrivial) {
  auto a = weights_from_indegree(build_exponential(1));
  auto m = compute_metrics(a);
  auto r = verify_diag_convergence(a, m, 5);
  EXPECT_TRUE(r.holds);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.weighted_gap, 0.0);
    EXPECT_EQ(row.inverse_gap, 0.0);
    EXPECT_EQ(row.step_gap, 0.0);
  }
}

TEST(DiagConvergence, ExponentialAndRingHold) {
  for (auto [g, kmax] : {std::pair{build_exponential(8), 20}, std::pair{build_directed_ring(5), 30}}) {
    auto a = weights_from_indegree(g);
    auto m = compute_metrics(a);
    auto r = verify_diag_convergence(a, m, static_cast<std::size_t>(kmax));
    ASSERT_EQ(r.rows.size(), static_cast<std::size_t>(kmax));
    EXPECT_TRUE(r.holds);
    for (const auto& row : r.rows) EXPECT_TRUE(row.holds) << "k=" << row.k;
  }
}

TEST(DiagConvergence, ReportsZeroDiagonal) {
  // Complete graph without self-loops: every [A]_ii is zero.
  const Matrix a = (Matrix::Ones(4, 4) - Matrix::Identity(4, 4)) / 3.0;
  auto mix = MixingMatrix::from_dense(a);
  auto m = compute_metrics(mix);
  EXPECT_NEAR(m.beta, 1.0 / 3.0, 1e-9);
  auto r = verify_diag_convergence(mix, m, 10);
  EXPECT_FALSE(r.holds);
  ASSERT_TRUE(r.zero_diagonal.has_value());
  EXPECT_EQ(r.zero_diagonal->first, 1u);
  EXPECT_EQ(r.zero_diagonal->second, 0u);
}

TEST(DiagFloor, SingleNode) {
  auto a = weights_from_indegree(build_exponential(1));
  auto m = compute_metrics(a);
  auto r = check_diag_floor(a, m, 1);
  EXPECT_TRUE(r.holds);
  EXPECT_DOUBLE_EQ(r.min_diag, 1.0);
}

TEST(DiagFloor, HoldsAtThreshold) {
  for (const auto& g : {build_exponential(8), build_directed_ring(16), build_grid(4, 4)}) {
    auto a = weights_from_indegree(g);
    auto m = compute_metrics(a);
    const std::size_t k = diag_floor_threshold(m.n, m.beta, m.kappa);
    auto r = check_diag_floor(a, m, k);
    EXPECT_TRUE(r.holds) << r.min_diag << " < " << r.floor;
    EXPECT_THROW(check_diag_floor(a, m, k - 1), PreconditionError);
  }
}

TEST(DiagFloor, ExponentialEightThresholdValue) {
  // ceil((0 + 2 ln 8) / 0.5) = ceil(8.3178) = 9
  auto a = weights_from_indegree(build_exponential(8));
  auto m = compute_metrics(a);
  EXPECT_EQ(diag_floor_threshold(m.n, m.beta, m.kappa), 9u);
}
