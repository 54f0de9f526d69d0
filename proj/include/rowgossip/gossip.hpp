#pragma once

// Gossip primitives over a row-stochastic mixing matrix. Every step is
// simulated node by node: row i of the result is assembled only from rows j
// in the support of row i of A.

#include <Eigen/Dense>

#include <cassert>
#include <cstddef>
#include <functional>
#include <string>

#include "rowgossip/errors.hpp"
#include "rowgossip/tolerances.hpp"
#include "rowgossip/topology.hpp"

namespace rowgossip {

/// n x d matrix whose row i is the local vector held by node i.
using StackedState = Matrix;

inline void check_rows(const MixingMatrix& a, const StackedState& z, const char* where) {
  if (static_cast<std::size_t>(z.rows()) != a.size())
    throw ShapeError(std::string(where) + ": state has " + std::to_string(z.rows()) + " rows, matrix is " +
                     std::to_string(a.size()) + " x " + std::to_string(a.size()));
}

/// One round of the A-protocol, z <- A z.
inline StackedState a_step(const MixingMatrix& a, const StackedState& z) {
  check_rows(a, z, "a_step");
  StackedState out = StackedState::Zero(z.rows(), z.cols());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (auto j : a.support(i)) {
      assert(a(i, j) > 0.0 && "gossip read a non-neighbor entry");
      out.row(ii) += a(i, j) * z.row(static_cast<Eigen::Index>(j));
    }
  }
  return out;
}

/// R sequential A-protocol rounds; A^R is never formed.
inline StackedState multi_gossip(const MixingMatrix& a, StackedState z, std::size_t rounds) {
  check_rows(a, z, "multi_gossip");
  for (std::size_t r = 0; r < rounds; ++r) z = a_step(a, z);
  return z;
}

/// Two-phase Pull-Diag average: K rounds of power iteration on the basis
/// rows v_i = e_i, local rescaling z_i / (n [v_i]_i), then K rounds of
/// gossip on the rescaled values. Converges to the exact global mean.
inline StackedState pull_diag_average(const MixingMatrix& a, const StackedState& z, std::size_t rounds,
                                      double diag_floor = kDefaultTolerances.diag_floor) {
  check_rows(a, z, "pull_diag_average");
  if (rounds == 0) throw InvalidArgument("pull_diag_average: rounds must be >= 1");
  const auto n = static_cast<Eigen::Index>(a.size());
  const StackedState v = multi_gossip(a, Matrix::Identity(n, n), rounds);
  StackedState scaled = z;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double vii = v(i, i);
    if (!(vii > diag_floor))
      throw SmallDiagonalError(static_cast<std::size_t>(i), static_cast<long long>(rounds), vii);
    scaled.row(i) /= static_cast<double>(n) * vii;
  }
  return multi_gossip(a, std::move(scaled), rounds);
}

/// Interleaved form z^(k) = V_k Diag(n V_k)^{-1} z with V_k = A^k. The
/// callback observes every iterate k = 1..K; the last one is returned.
inline StackedState pull_diag_interleaved(
    const MixingMatrix& a, const StackedState& z, std::size_t rounds,
    const std::function<void(std::size_t, const StackedState&)>& observe = {},
    double diag_floor = kDefaultTolerances.diag_floor) {
  check_rows(a, z, "pull_diag_interleaved");
  const auto n = static_cast<Eigen::Index>(a.size());
  StackedState v = Matrix::Identity(n, n);
  StackedState current = z;
  for (std::size_t k = 1; k <= rounds; ++k) {
    v = a_step(a, v);
    StackedState scaled = z;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double vii = v(i, i);
      if (!(vii > diag_floor)) throw SmallDiagonalError(static_cast<std::size_t>(i), static_cast<long long>(k), vii);
      scaled.row(i) /= static_cast<double>(n) * vii;
    }
    current = v * scaled;
    if (observe) observe(k, current);
  }
  return current;
}

/// ||z - 1 reference||_F
inline double consensus_error(const StackedState& z, const Eigen::RowVectorXd& reference) {
  if (reference.size() != z.cols()) throw ShapeError("consensus_error: reference length differs from state width");
  return (z.rowwise() - reference).norm();
}

inline Eigen::RowVectorXd column_mean(const StackedState& z) { return z.colwise().mean(); }

}  // namespace rowgossip
