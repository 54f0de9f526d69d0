#include <gtest/gtest.h>

#include <random>

#include "rowgossip/gossip.hpp"
#include "rowgossip/spectral.hpp"

using namespace rowgossip;

namespace {

Matrix random_state(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Matrix z(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = normal(rng);
  return z;
}

MixingMatrix complete_average(Eigen::Index n) {
  return MixingMatrix::from_dense(Matrix::Constant(n, n, 1.0 / static_cast<double>(n)));
}

Matrix mean_rows(const Matrix& z) { return Vector::Ones(z.rows()) * z.colwise().mean(); }

}  // namespace

TEST(AStep, IdentityLeavesStateUnchanged) {
  auto a = MixingMatrix::from_dense(Matrix::Identity(1, 1));
  Matrix z(1, 3);
  z << 1.0, -2.0, 3.0;
  EXPECT_EQ(a_step(a, z), z);
}

TEST(AStep, CompleteAveraging) {
  auto a = complete_average(5);
  Matrix z = random_state(5, 3, 1);
  EXPECT_LE((a_step(a, z) - mean_rows(z)).norm(), 1e-14);
}

TEST(AStep, HandExample) {
  Matrix m(2, 2);
  m << 0.5, 0.5, 0.0, 1.0;
  auto a = MixingMatrix::from_stochastic(m);
  Matrix z(2, 1);
  z << 2.0, 0.0;
  Matrix out = a_step(a, z);
  EXPECT_DOUBLE_EQ(out(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(out(1, 0), 0.0);
}

TEST(AStep, MatchesDenseProduct) {
  auto a = weights_from_indegree(build_geometric(15, 0.4, 3));
  Matrix z = random_state(15, 4, 2);
  EXPECT_LE((a_step(a, z) - a.dense() * z).norm(), 1e-13);
}

TEST(AStep, ShapeMismatch) {
  auto a = weights_from_indegree(build_exponential(4));
  EXPECT_THROW(a_step(a, Matrix::Zero(3, 2)), ShapeError);
}

TEST(AStep, PreservesWeightedCentroid) {
  for (const auto& g : {build_directed_ring(7), build_geometric(12, 0.4, 6), build_grid(3, 4)}) {
    auto a = weights_from_indegree(g);
    const Vector pi = perron_vector(a);
    Matrix z = random_state(static_cast<Eigen::Index>(a.size()), 3, 7);
    const Eigen::RowVectorXd before = pi.transpose() * z;
    const Eigen::RowVectorXd after = pi.transpose() * a_step(a, z);
    EXPECT_LE((after - before).norm(), 1e-10 * std::max(1.0, before.norm()));
  }
}

TEST(AStep, RowDependsOnlyOnInNeighbors) {
  auto a = weights_from_indegree(build_geometric(14, 0.3, 12));
  Matrix z = random_state(14, 2, 9);
  const Matrix base = a_step(a, z);
  for (std::size_t j = 0; j < a.size(); ++j) {
    Matrix perturbed = z;
    perturbed.row(static_cast<Eigen::Index>(j)).array() += 100.0;
    const Matrix out = a_step(a, perturbed);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (a(i, j) == 0.0) {
        EXPECT_EQ(out.row(ii), base.row(ii)) << "row " << i << " read node " << j;
      }
    }
  }
}

TEST(MultiGossip, ZeroAndOneRounds) {
  auto a = weights_from_indegree(build_exponential(6));
  Matrix z = random_state(6, 2, 4);
  EXPECT_EQ(multi_gossip(a, z, 0), z);
  EXPECT_EQ(multi_gossip(a, z, 1), a_step(a, z));
}

TEST(MultiGossip, ContractionEnvelope) {
  for (const auto& g : {build_directed_ring(8), build_geometric(12, 0.45, 5), build_exponential(10)}) {
    auto a = weights_from_indegree(g);
    auto m = compute_metrics(a);
    const Matrix limit = m.limit();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Matrix z = random_state(static_cast<Eigen::Index>(a.size()), 3, seed);
      const Matrix zinf = limit * z;
      for (std::size_t r : {1u, 3u, 10u, 25u}) {
        const double lhs = (multi_gossip(a, z, r) - zinf).norm();
        const double rhs = std::sqrt(m.kappa) * std::pow(m.beta, static_cast<double>(r)) * (z - zinf).norm();
        EXPECT_LE(lhs, rhs * (1.0 + 1e-9) + 1e-14) << "R=" << r;
      }
    }
  }
}

TEST(PullDiag, CompleteGraphIsExactInOneRound) {
  auto a = complete_average(6);
  Matrix z = random_state(6, 3, 5);
  EXPECT_LE((pull_diag_average(a, z, 1) - mean_rows(z)).norm(), 1e-13);
}

TEST(PullDiag, SingleNodeUnchanged) {
  auto a = weights_from_indegree(build_exponential(1));
  Matrix z(1, 2);
  z << 3.0, -1.0;
  EXPECT_EQ(pull_diag_average(a, z, 5), z);
}

TEST(PullDiag, ExponentialEightConvergesToAverage) {
  auto a = weights_from_indegree(build_exponential(8));
  Matrix z = random_state(8, 4, 6);
  EXPECT_LE((pull_diag_average(a, z, 40) - mean_rows(z)).norm(), 1e-8 * z.norm());
}

TEST(PullDiag, NonDoublyStochasticTargetsUniformAverage) {
  // Plain gossip converges to pi^T z, Pull-Diag to the uniform mean.
  auto a = weights_from_indegree(build_geometric(10, 0.45, 13));
  auto m = compute_metrics(a);
  ASSERT_GT(m.kappa, 1.2);
  Matrix z = random_state(10, 2, 8);
  const Matrix gossip = multi_gossip(a, z, 400);
  EXPECT_LE((gossip - m.limit() * z).norm(), 1e-8);
  EXPECT_GT((gossip - mean_rows(z)).norm(), 1e-3);
  EXPECT_LE((pull_diag_average(a, z, 400) - mean_rows(z)).norm(), 1e-8 * z.norm());
}

TEST(PullDiag, GeometricDecaySlope) {
  auto a = weights_from_indegree(build_exponential(8));
  auto m = compute_metrics(a);
  Matrix z = random_state(8, 1, 10);
  const Eigen::RowVectorXd mean = column_mean(z);
  std::vector<double> ks, logs;
  for (std::size_t k = 5; k <= 40; ++k) {
    ks.push_back(static_cast<double>(k));
    logs.push_back(std::log(std::max(consensus_error(pull_diag_average(a, z, k), mean), 1e-300)));
  }
  // Least squares slope, restricted to the part above round-off.
  double sx = 0, sy = 0, sxx = 0, sxy = 0, count = 0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (logs[i] < std::log(1e-13)) break;
    sx += ks[i];
    sy += logs[i];
    sxx += ks[i] * ks[i];
    sxy += ks[i] * logs[i];
    count += 1;
  }
  ASSERT_GE(count, 5);
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  EXPECT_LE(slope, std::log(m.beta) + 0.05);
}

TEST(PullDiag, SmallDiagonalRaised) {
  // Zero diagonal after one round: the complete graph without self-loops.
  auto a = MixingMatrix::from_dense((Matrix::Ones(3, 3) - Matrix::Identity(3, 3)) / 2.0);
  Matrix z = random_state(3, 1, 1);
  try {
    pull_diag_average(a, z, 1);
    FAIL() << "expected SmallDiagonalError";
  } catch (const SmallDiagonalError& e) {
    EXPECT_EQ(e.node(), 0u);
    EXPECT_EQ(e.iteration(), 1);
    EXPECT_EQ(e.value(), 0.0);
    EXPECT_EQ(e.exit_code(), ExitCode::kNumericalError);
  }
  EXPECT_NO_THROW(pull_diag_average(a, z, 2));
  EXPECT_THROW(pull_diag_average(a, z, 0), InvalidArgument);
}

TEST(PullDiag, InterleavedMatchesDenseFormula) {
  auto a = weights_from_indegree(build_geometric(9, 0.45, 2));
  Matrix z = random_state(9, 2, 3);
  const double n = 9.0;
  std::size_t calls = 0;
  pull_diag_interleaved(a, z, 12, [&](std::size_t k, const StackedState& zk) {
    ++calls;
    const Matrix v = matrix_power(a.dense(), k);
    const Vector dinv = (n * v.diagonal()).cwiseInverse();
    const Matrix oracle = v * dinv.asDiagonal() * z;
    EXPECT_LE((zk - oracle).norm(), 1e-11 * oracle.norm()) << "k=" << k;
  });
  EXPECT_EQ(calls, 12u);
}

TEST(PullDiag, InterleavedConverges) {
  auto a = weights_from_indegree(build_exponential(8));
  Matrix z = random_state(8, 2, 7);
  EXPECT_LE((pull_diag_interleaved(a, z, 60) - mean_rows(z)).norm(), 1e-10 * z.norm());
}

TEST(ConsensusError, HandValues) {
  Matrix z(2, 1);
  z << 1.0, 0.0;
  Eigen::RowVectorXd ref(1);
  ref << 0.5;
  EXPECT_DOUBLE_EQ(consensus_error(z, ref), std::sqrt(0.5));
  Matrix same = Matrix::Constant(4, 1, 0.5);
  EXPECT_EQ(consensus_error(same, ref), 0.0);
  EXPECT_THROW(consensus_error(z, Eigen::RowVectorXd::Zero(2)), ShapeError);
}
