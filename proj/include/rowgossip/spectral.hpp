#pragma once

// Perron vectors, pi-weighted operator norms and the network metrics that
// govern row-stochastic gossip:
//
//   beta  = || A - 1 pi^T ||_pi          (generalized contraction factor)
//   kappa = max(pi) / min(pi)            (equilibrium skewness)
//   m_a   = max_k || A^k - 1 pi^T ||_2
//   s_a   = m_a (1 + ln(kappa)/2) / (1 - beta)
//   theta = sup_k max_i 1 / [A^k]_ii
//
// plus numerical verifiers for the rolling-sum inequality and the
// convergence of Diag(A^k) towards diag(pi).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rowgossip/errors.hpp"
#include "rowgossip/rng.hpp"
#include "rowgossip/tolerances.hpp"
#include "rowgossip/topology.hpp"

namespace rowgossip {

namespace detail {

// out = A^T v using only the stored support.
inline void transpose_apply(const MixingMatrix& a, const Vector& v, Vector& out) {
  out.setZero(v.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double vi = v(static_cast<Eigen::Index>(i));
    for (auto j : a.support(i)) out(static_cast<Eigen::Index>(j)) += a(i, j) * vi;
  }
}

}  // namespace detail

/// ||pi^T A - pi^T||_inf
inline double perron_residual(const MixingMatrix& a, const Vector& pi) {
  Vector next;
  detail::transpose_apply(a, pi, next);
  return (next - pi).cwiseAbs().maxCoeff();
}

/// Left Perron vector of a primitive row-stochastic matrix, by power
/// iteration on v <- A^T v. With max_iter == 0 the budget is
/// 100 n ceil(1 / (1 - b)), where b is a contraction estimate taken from ten
/// warmup steps.
inline Vector perron_vector(const MixingMatrix& a, double tol = kDefaultTolerances.perron_residual,
                            std::size_t max_iter = 0) {
  const auto n = static_cast<Eigen::Index>(a.size());
  Vector v = Vector::Constant(n, 1.0 / static_cast<double>(n));
  Vector next(n);
  double residual = std::numeric_limits<double>::infinity();

  auto step = [&]() {
    detail::transpose_apply(a, v, next);
    next /= next.sum();
    residual = (next - v).cwiseAbs().maxCoeff();
  };

  constexpr std::size_t kWarmup = 10;
  std::vector<double> diffs;
  for (std::size_t k = 0; k < kWarmup; ++k) {
    step();
    if (residual <= tol) return v;
    diffs.push_back(residual);
    v.swap(next);
  }
  if (max_iter == 0) {
    double rate = std::pow(diffs.back() / diffs.front(), 1.0 / static_cast<double>(kWarmup - 1));
    rate = std::clamp(std::isfinite(rate) ? rate : 0.0, 0.0, 1.0 - 1e-7);
    const double budget = 100.0 * static_cast<double>(n) * std::ceil(1.0 / (1.0 - rate));
    max_iter = static_cast<std::size_t>(std::min(budget, 1e9));
  }
  for (std::size_t k = kWarmup; k < max_iter; ++k) {
    step();
    if (residual <= tol) return v;
    v.swap(next);
  }
  throw ConvergenceError("perron_vector did not converge in " + std::to_string(max_iter) + " iterations",
                         residual);
}

/// Largest singular value of m by power iteration on the Gram map
/// x <- m^T m x, stopped on the relative eigen-residual.
inline double spectral_norm(const Matrix& m, double rel_tol = kDefaultTolerances.spectral_rel,
                            std::size_t max_iter = 1000000) {
  if (m.size() == 0) return 0.0;
  const double frob = m.norm();
  if (frob == 0.0) return 0.0;
  Rng rng = make_rng(0x5eed5eedULL, {static_cast<std::uint64_t>(m.cols())});
  std::normal_distribution<double> normal;
  Vector x(m.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
  x.normalize();

  double lambda = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Vector y = m * x;
    const Vector z = m.transpose() * y;
    lambda = y.squaredNorm();
    const double zn = z.norm();
    if (zn == 0.0) return 0.0;
    residual = (z - lambda * x).norm();
    if (residual <= rel_tol * lambda) return std::sqrt(lambda);
    x = z / zn;
  }
  throw ConvergenceError("spectral_norm did not converge", residual / std::max(lambda, 1e-300));
}

/// ||Pi^{1/2} W Pi^{-1/2}||_2 with Pi = diag(pi).
inline double pi_operator_norm(const Matrix& w, const Vector& pi,
                               double rel_tol = kDefaultTolerances.spectral_rel) {
  if (w.rows() != w.cols() || w.rows() != pi.size())
    throw ShapeError("pi_operator_norm: W must be n x n with n = len(pi)");
  if ((pi.array() <= 0.0).any()) throw InvalidArgument("pi_operator_norm: weights must be positive");
  const Vector s = pi.cwiseSqrt();
  const Matrix scaled = s.asDiagonal() * w * s.cwiseInverse().asDiagonal();
  return spectral_norm(scaled, rel_tol);
}

/// A^k by binary exponentiation (k = 0 gives the identity).
inline Matrix matrix_power(const Matrix& a, std::size_t k) {
  Matrix result = Matrix::Identity(a.rows(), a.cols());
  Matrix base = a;
  while (k > 0) {
    if (k & 1U) result = result * base;
    k >>= 1U;
    if (k > 0) base = base * base;
  }
  return result;
}

/// Smallest k with min_i [A^k]_ii >= 1/(2 n kappa) guaranteed:
/// ceil((2 ln kappa + 2 ln n) / (1 - beta)).
inline std::size_t diag_floor_threshold(std::size_t n, double beta, double kappa) {
  const double t = (2.0 * std::log(kappa) + 2.0 * std::log(static_cast<double>(n))) / (1.0 - beta);
  return static_cast<std::size_t>(std::max(0.0, std::ceil(t - 1e-12)));
}

struct NetworkMetrics {
  std::size_t n = 0;
  Vector pi;
  double beta = 0.0;
  double kappa = 1.0;
  double m_a = 0.0;
  double s_a = 0.0;
  double theta = 1.0;            // sup over k in [1, theta_horizon] and the limit 1/pi
  double theta_certified = 1.0;  // upper bound valid for every k >= 1
  std::size_t horizon = 0;        // k_max used for m_a
  std::size_t theta_horizon = 0;  // max(horizon, diag threshold)
  std::size_t diag_threshold = 0;
  double perron_residual = 0.0;

  Matrix limit() const { return Vector::Ones(pi.size()) * pi.transpose(); }
};

/// Default horizon 10 ceil(1 / (1 - beta)).
inline std::size_t default_horizon(double beta) {
  return static_cast<std::size_t>(10.0 * std::ceil(1.0 / (1.0 - beta)));
}

inline NetworkMetrics compute_metrics(const MixingMatrix& a, std::size_t k_max = 0,
                                      const Tolerances& tol = kDefaultTolerances) {
  NetworkMetrics m;
  m.n = a.size();
  m.pi = perron_vector(a, tol.perron_residual);
  m.perron_residual = perron_residual(a, m.pi);
  const Matrix& dense = a.dense();
  const Matrix limit = m.limit();
  m.beta = pi_operator_norm(dense - limit, m.pi, tol.spectral_rel);
  if (!(m.beta < 1.0)) throw NumericalError("beta >= 1; matrix is not primitive to working precision");
  m.kappa = m.pi.maxCoeff() / m.pi.minCoeff();
  m.horizon = k_max > 0 ? k_max : default_horizon(m.beta);
  m.diag_threshold = diag_floor_threshold(m.n, m.beta, m.kappa);
  m.theta_horizon = std::max(m.horizon, m.diag_threshold);

  // ||A^k - A_inf||_2 <= sqrt(kappa) beta^k, so once that envelope drops
  // below the running maximum no later power can raise it.
  const double root_kappa = std::sqrt(m.kappa);
  double envelope = root_kappa;
  double theta = 1.0 / m.pi.minCoeff();
  Matrix power = Matrix::Identity(dense.rows(), dense.cols());
  for (std::size_t k = 1; k <= m.theta_horizon; ++k) {
    power = power * dense;
    envelope *= m.beta;
    const Vector diag = power.diagonal();
    if ((diag.array() <= 0.0).any()) {
      theta = std::numeric_limits<double>::infinity();
    } else {
      theta = std::max(theta, diag.cwiseInverse().maxCoeff());
    }
    if (k <= m.horizon && envelope > m.m_a) {
      m.m_a = std::max(m.m_a, spectral_norm(power - limit, tol.spectral_rel));
    }
  }
  m.theta = theta;
  // Beyond the threshold every diagonal stays above 1/(2 n kappa).
  m.theta_certified = std::max(theta, 2.0 * static_cast<double>(m.n) * m.kappa);
  m.s_a = m.beta < 1.0 ? m.m_a * (1.0 + 0.5 * std::log(m.kappa)) / (1.0 - m.beta) : 0.0;
  return m;
}

/// Metrics of the R-step operator A^R, used by the multi-gossip analysis.
struct MultiGossipMetrics {
  std::size_t rounds = 1;
  double beta_hat = 0.0;       // ||A^R - A_inf||_pi
  double sup_norm = 0.0;       // max_k ||A^{kR} - A_inf||_2
  double s_hat = 0.0;          // sup_norm * 2 (1 + ln kappa) / (1 - beta_hat)
  double s_hat_rolling = 0.0;  // sup_norm * (1 + ln(kappa)/2) / (1 - beta_hat)
  double theta_hat = 1.0;      // max over the horizon of 1/[A^{kR}]_ii
};

inline MultiGossipMetrics compute_mg_metrics(const MixingMatrix& a, const NetworkMetrics& base,
                                             std::size_t rounds,
                                             const Tolerances& tol = kDefaultTolerances) {
  if (rounds == 0) throw InvalidArgument("compute_mg_metrics: rounds must be >= 1");
  MultiGossipMetrics out;
  out.rounds = rounds;
  const Matrix limit = base.limit();
  const Matrix step = matrix_power(a.dense(), rounds);
  out.beta_hat = pi_operator_norm(step - limit, base.pi, tol.spectral_rel);
  const std::size_t horizon = default_horizon(out.beta_hat);
  double envelope = std::sqrt(base.kappa);
  const double contraction = std::pow(base.beta, static_cast<double>(rounds));
  double theta = 1.0 / base.pi.minCoeff();
  Matrix power = Matrix::Identity(step.rows(), step.cols());
  for (std::size_t k = 1; k <= horizon; ++k) {
    power = power * step;
    envelope *= contraction;
    const Vector diag = power.diagonal();
    theta = (diag.array() <= 0.0).any() ? std::numeric_limits<double>::infinity()
                                        : std::max(theta, diag.cwiseInverse().maxCoeff());
    if (envelope > out.sup_norm) out.sup_norm = std::max(out.sup_norm, spectral_norm(power - limit, tol.spectral_rel));
  }
  out.theta_hat = theta;
  const double gap = 1.0 - out.beta_hat;
  out.s_hat = out.sup_norm * 2.0 * (1.0 + std::log(base.kappa)) / gap;
  out.s_hat_rolling = out.sup_norm * (1.0 + 0.5 * std::log(base.kappa)) / gap;
  return out;
}

// ---------------------------------------------------------------------------
// Bound verifiers

struct RollingSumReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = true;
};

/// LHS = sum_{k=0}^{K} || sum_{i=0}^{k} (A^{k+1-i} - A_inf) Delta_i ||_F^2,
/// RHS = s_a^2 sum_i ||Delta_i||_F^2.
inline RollingSumReport verify_rolling_sum(const MixingMatrix& a, const NetworkMetrics& metrics,
                                           const std::vector<Matrix>& deltas,
                                           const Tolerances& tol = kDefaultTolerances) {
  RollingSumReport report;
  if (deltas.empty()) return report;
  const auto n = static_cast<Eigen::Index>(a.size());
  const Eigen::Index d = deltas.front().cols();
  for (const auto& delta : deltas)
    if (delta.rows() != n || delta.cols() != d)
      throw ShapeError("verify_rolling_sum: every Delta must be n x d with a common d");

  // (A - A_inf)^m = A^m - A_inf for m >= 1, so the inner sums obey
  // S_k = (A - A_inf)(S_{k-1} + Delta_k).
  const Matrix gap = a.dense() - metrics.limit();
  Matrix acc = Matrix::Zero(n, d);
  double energy = 0.0;
  for (const auto& delta : deltas) {
    acc = gap * (acc + delta);
    report.lhs += acc.squaredNorm();
    energy += delta.squaredNorm();
  }
  report.rhs = metrics.s_a * metrics.s_a * energy;
  report.holds = report.lhs <= report.rhs * (1.0 + tol.bound_slack);
  return report;
}

struct DiagConvergenceRow {
  std::size_t k = 0;
  double weighted_gap = 0.0;  // ||pi^T D_k^{-1} - 1^T||
  double weighted_bound = 0.0;
  double inverse_gap = 0.0;  // ||D_k^{-1} - Pi^{-1}||_2
  double inverse_bound = 0.0;
  double step_gap = 0.0;  // ||D_k^{-1} - D_{k+1}^{-1}||_2
  double step_bound = 0.0;
  bool holds = true;
};

struct DiagConvergenceReport {
  std::vector<DiagConvergenceRow> rows;
  bool holds = true;
  // Set when some [A^k]_ii is not positive.
  std::optional<std::pair<std::size_t, std::size_t>> zero_diagonal;
};

inline DiagConvergenceReport verify_diag_convergence(const MixingMatrix& a, const NetworkMetrics& metrics,
                                                     std::size_t k_max,
                                                     const Tolerances& tol = kDefaultTolerances) {
  DiagConvergenceReport report;
  const double n = static_cast<double>(a.size());
  const double kappa = metrics.kappa;
  const double c1 = metrics.theta * std::sqrt(n * kappa);
  const double c2 = metrics.theta * std::sqrt(kappa * kappa * kappa * n * n * n);
  const Vector pi_inv = metrics.pi.cwiseInverse();
  const double slack = 1.0 + tol.bound_slack;

  Matrix power = a.dense();  // A^k
  Vector inv_k;
  auto inverse_diag = [&](const Matrix& p, std::size_t k) -> std::optional<Vector> {
    const Vector diag = p.diagonal();
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
      if (!(diag(i) > 0.0)) {
        report.zero_diagonal = std::make_pair(k, static_cast<std::size_t>(i));
        report.holds = false;
        return std::nullopt;
      }
    }
    return diag.cwiseInverse();
  };

  auto first = inverse_diag(power, 1);
  if (!first) return report;
  inv_k = *first;
  double beta_k = metrics.beta;
  for (std::size_t k = 1; k <= k_max; ++k) {
    const Matrix next_power = power * a.dense();
    auto next_inv = inverse_diag(next_power, k + 1);
    if (!next_inv) return report;
    DiagConvergenceRow row;
    row.k = k;
    row.weighted_gap = (metrics.pi.cwiseProduct(inv_k) - Vector::Ones(inv_k.size())).norm();
    row.weighted_bound = c1 * beta_k;
    row.inverse_gap = (inv_k - pi_inv).cwiseAbs().maxCoeff();
    row.inverse_bound = c2 * beta_k;
    row.step_gap = (inv_k - *next_inv).cwiseAbs().maxCoeff();
    row.step_bound = 2.0 * c2 * beta_k;
    // Exact zeros (n = 1) compare against zero bounds.
    row.holds = row.weighted_gap <= row.weighted_bound * slack + 1e-15 &&
                row.inverse_gap <= row.inverse_bound * slack + 1e-15 &&
                row.step_gap <= row.step_bound * slack + 1e-15;
    report.holds = report.holds && row.holds;
    report.rows.push_back(row);
    power = next_power;
    inv_k = *next_inv;
    beta_k *= metrics.beta;
  }
  return report;
}

struct DiagFloorReport {
  bool holds = false;
  double min_diag = 0.0;
  double floor = 0.0;
  std::size_t threshold = 0;
};

/// Checks min_i [A^k]_ii >= 1/(2 n kappa) at a power k past the threshold.
inline DiagFloorReport check_diag_floor(const MixingMatrix& a, const NetworkMetrics& metrics, std::size_t k) {
  DiagFloorReport report;
  report.threshold = diag_floor_threshold(metrics.n, metrics.beta, metrics.kappa);
  if (k < report.threshold || k == 0)
    throw PreconditionError("check_diag_floor: k = " + std::to_string(k) + " is below the threshold " +
                            std::to_string(std::max<std::size_t>(report.threshold, 1)));
  report.min_diag = matrix_power(a.dense(), k).diagonal().minCoeff();
  report.floor = 1.0 / (2.0 * static_cast<double>(metrics.n) * metrics.kappa);
  report.holds = report.min_diag >= report.floor;
  return report;
}

}  // namespace rowgossip
