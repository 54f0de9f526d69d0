#pragma once

// Pull-Diag-GT and its multi-gossip variant (MG-Pull-Diag-GT) as node-local
// state machines.
//
// Per iteration, with R gossip rounds (R = 1 for the vanilla method):
//   x   <- A^R (x - alpha y),   v <- A^R v          (same rounds)
//   g+  <- R-sample minibatch gradient at the new x
//   psi <- y + g+ / [v_i]_i(new) - g / [v_i]_i(old)   (node-wise)
//   y   <- A^R psi
// Each node only ever inverts its own diagonal entry [v_i]_i.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rowgossip/errors.hpp"
#include "rowgossip/gossip.hpp"
#include "rowgossip/problems.hpp"
#include "rowgossip/rng.hpp"
#include "rowgossip/spectral.hpp"
#include "rowgossip/tolerances.hpp"

namespace rowgossip {

struct GtState {
  StackedState x;  // models
  StackedState y;  // trackers
  StackedState g;  // last minibatch gradients
  Matrix v;        // row i: node i's Perron estimate, starts at e_i
  Vector d_prev;   // [v_i]_i used when g was drawn
  std::size_t iter = 0;
  std::size_t comm_rounds = 0;
  std::size_t samples = 0;  // per node, excluding the initial minibatch
  std::size_t batch_rounds = 1;
  double alpha = 0.0;
  std::vector<Rng> streams;  // one noise stream per node
};

struct StepReport {
  std::size_t iter = 0;
  std::size_t comm_rounds = 0;
  std::size_t samples = 0;
  double grad_norm = std::numeric_limits<double>::quiet_NaN();  // ||(1/n) sum_i grad f_i(x_i)||
  double consensus_error = 0.0;                                 // ||x - 1 pi^T x||_F
  double descent_deviation = 0.0;                               // ||pi^T y - 1^T g||
  double objective = std::numeric_limits<double>::quiet_NaN();  // f(pi^T x)
  double min_diag = 1.0;                                        // min_i [v_i]_i
};

/// Relative residuals of the two exact algebraic identities after a step.
struct ProbeResult {
  double centroid = 0.0;  // pi^T x+ vs pi^T x - alpha pi^T y
  double tracker = 0.0;   // pi^T y vs pi^T D^{-1} g
};

namespace detail {

inline void check_problem(const MixingMatrix& a, const GradientOracle& oracle, const Vector& x0) {
  if (oracle.nodes() != a.size())
    throw ShapeError("oracle has " + std::to_string(oracle.nodes()) + " nodes, matrix has " + std::to_string(a.size()));
  if (static_cast<std::size_t>(x0.size()) != oracle.dim()) throw ShapeError("x0 dimension differs from oracle");
}

inline void draw_gradients(const GradientOracle& oracle, const StackedState& x, std::size_t batches,
                           std::vector<Rng>& streams, StackedState& out) {
  out.setZero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto node = static_cast<std::size_t>(i);
    const Vector xi = x.row(i).transpose();
    Vector acc = Vector::Zero(x.cols());
    for (std::size_t r = 0; r < batches; ++r) acc += oracle.stochastic_gradient(node, xi, streams[node]);
    out.row(i) = (acc / static_cast<double>(batches)).transpose();
  }
}

inline double relative_gap(const Eigen::RowVectorXd& lhs, const Eigen::RowVectorXd& rhs, double scale) {
  const double denom = std::max({lhs.norm(), rhs.norm(), scale});
  const double diff = (lhs - rhs).norm();
  return denom > 0.0 ? diff / denom : diff;
}

}  // namespace detail

/// MG initialization: every node starts at x0 with an R-sample minibatch
/// gradient as both g and y; v = I; D_0 = I.
inline GtState init_mg(const MixingMatrix& a, const Vector& x0, const GradientOracle& oracle, double alpha,
                       std::size_t rounds, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw InvalidArgument("step size alpha must be positive");
  if (rounds < 1) throw InvalidArgument("gossip rounds R must be >= 1");
  detail::check_problem(a, oracle, x0);
  const auto n = static_cast<Eigen::Index>(a.size());
  GtState s;
  s.alpha = alpha;
  s.batch_rounds = rounds;
  s.x = Vector::Ones(n) * x0.transpose();
  s.v = Matrix::Identity(n, n);
  s.d_prev = Vector::Ones(n);
  s.streams.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) s.streams.push_back(make_rng(seed, {0x6e6f6465ULL, i}));
  detail::draw_gradients(oracle, s.x, rounds, s.streams, s.g);
  s.y = s.g;
  return s;
}

inline GtState init_gt(const MixingMatrix& a, const Vector& x0, const GradientOracle& oracle, double alpha,
                       std::uint64_t seed) {
  return init_mg(a, x0, oracle, alpha, 1, seed);
}

/// Fills the diagnostic fields of a report. Exact-gradient metrics are
/// skipped when `exact` is false since they need a full pass over the data.
inline StepReport make_report(const GtState& s, const GradientOracle& oracle, const Vector& pi, bool exact = true) {
  StepReport r;
  r.iter = s.iter;
  r.comm_rounds = s.comm_rounds;
  r.samples = s.samples;
  const Eigen::RowVectorXd centroid = pi.transpose() * s.x;
  r.consensus_error = consensus_error(s.x, centroid);
  r.descent_deviation = (pi.transpose() * s.y - s.g.colwise().sum()).norm();
  r.min_diag = s.v.diagonal().minCoeff();
  if (exact) {
    Vector avg = Vector::Zero(s.x.cols());
    for (Eigen::Index i = 0; i < s.x.rows(); ++i)
      avg += oracle.exact_gradient(static_cast<std::size_t>(i), s.x.row(i).transpose());
    r.grad_norm = (avg / static_cast<double>(s.x.rows())).norm();
    if (auto f = oracle.objective(centroid.transpose())) r.objective = *f;
  }
  return r;
}

/// sum_i pi_i ||x_i - alpha y_i||: size of the terms averaged by the
/// centroid, so cancellation error is measured against it.
inline double centroid_mass(const GtState& s, const Vector& pi) {
  return pi.dot((s.x - s.alpha * s.y).rowwise().norm());
}

/// sum_i pi_i (||y_i|| + ||g_i|| / d_i): size of the terms the tracker
/// identity sums. The tracker carries round-off from every earlier step, so
/// callers pass the running maximum of this quantity.
inline double tracker_mass(const GtState& s, const Vector& pi) {
  return pi.dot(s.y.rowwise().norm() + s.g.rowwise().norm().cwiseQuotient(s.d_prev));
}

/// Evaluates both identities on the current state; `prev_centroid` and
/// `prev_direction` are pi^T x and pi^T y before the step. The gaps are
/// relative to the larger of the compared vectors and the given scales.
inline ProbeResult probe(const GtState& s, const Vector& pi, const Eigen::RowVectorXd& prev_centroid,
                         const Eigen::RowVectorXd& prev_direction, double centroid_scale = 0.0,
                         double tracker_scale = 0.0) {
  ProbeResult p;
  const Eigen::RowVectorXd centroid = pi.transpose() * s.x;
  const Eigen::RowVectorXd expected = prev_centroid - s.alpha * prev_direction;
  p.centroid = detail::relative_gap(
      centroid, expected, std::max({prev_centroid.norm(), s.alpha * prev_direction.norm(), centroid_scale}));
  const Eigen::RowVectorXd direction = pi.transpose() * s.y;
  const Eigen::RowVectorXd corrected = pi.transpose() * (s.d_prev.cwiseInverse().asDiagonal() * s.g);
  p.tracker = detail::relative_gap(direction, corrected, tracker_scale);
  return p;
}

/// One MG-Pull-Diag-GT iteration with R = s.batch_rounds gossip rounds.
inline void mg_advance(GtState& s, const MixingMatrix& a, const GradientOracle& oracle,
                       double diag_floor = kDefaultTolerances.diag_floor) {
  const std::size_t rounds = s.batch_rounds;
  for (Eigen::Index i = 0; i < s.d_prev.size(); ++i)
    if (!(s.d_prev(i) > diag_floor))
      throw SmallDiagonalError(static_cast<std::size_t>(i), static_cast<long long>(s.comm_rounds), s.d_prev(i));

  s.x = multi_gossip(a, s.x - s.alpha * s.y, rounds);
  s.v = multi_gossip(a, std::move(s.v), rounds);
  const Vector d_new = s.v.diagonal();
  for (Eigen::Index i = 0; i < d_new.size(); ++i)
    if (!(d_new(i) > diag_floor))
      throw SmallDiagonalError(static_cast<std::size_t>(i), static_cast<long long>(s.comm_rounds + rounds), d_new(i));

  StackedState g_next;
  detail::draw_gradients(oracle, s.x, rounds, s.streams, g_next);
  StackedState psi = s.y;
  psi += d_new.cwiseInverse().asDiagonal() * g_next;
  psi -= s.d_prev.cwiseInverse().asDiagonal() * s.g;
  s.y = multi_gossip(a, std::move(psi), rounds);
  s.g = std::move(g_next);
  s.d_prev = d_new;
  s.iter += 1;
  s.comm_rounds += rounds;
  s.samples += rounds;
}

inline StepReport mg_step(GtState& s, const MixingMatrix& a, const GradientOracle& oracle, const Vector& pi,
                          double diag_floor = kDefaultTolerances.diag_floor) {
  mg_advance(s, a, oracle, diag_floor);
  return make_report(s, oracle, pi);
}

/// One Pull-Diag-GT iteration (one gossip round, one sample per node).
inline StepReport gt_step(GtState& s, const MixingMatrix& a, const GradientOracle& oracle, const Vector& pi,
                          double diag_floor = kDefaultTolerances.diag_floor) {
  if (s.batch_rounds != 1) throw InvalidArgument("gt_step on a state initialized with R > 1");
  return mg_step(s, a, oracle, pi, diag_floor);
}

/// ceil(3 (1 + ln kappa + ln n) / (1 - beta)), at least 1. `n` is real so
/// the formula can be evaluated off the integers.
inline std::size_t recommended_rounds(double beta, double kappa, double n) {
  if (!(beta >= 0.0 && beta < 1.0) || !(kappa >= 1.0 - 1e-12) || !(n >= 1.0))
    throw InvalidArgument("recommended_rounds: need 0 <= beta < 1, kappa >= 1, n >= 1");
  const double r = 3.0 * (1.0 + std::log(kappa) + std::log(n)) / (1.0 - beta);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(r - 1e-9)));
}

inline std::size_t recommended_R(const NetworkMetrics& m, std::size_t n) {
  return recommended_rounds(m.beta, m.kappa, static_cast<double>(n));
}

/// The variant ceil((1 + 3 ln kappa + 3 ln n) / (1 - beta)).
inline std::size_t recommended_R_lean(const NetworkMetrics& m, std::size_t n) {
  const double r = (1.0 + 3.0 * std::log(m.kappa) + 3.0 * std::log(static_cast<double>(n))) / (1.0 - m.beta);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(r - 1e-9)));
}

// ---------------------------------------------------------------------------
// Driver

enum class Algorithm { kPullDiagGt, kMgPullDiagGt };

struct RunOptions {
  Algorithm algorithm = Algorithm::kPullDiagGt;
  double alpha = 0.01;
  std::size_t total_rounds = 0;  // communication-round budget K
  std::size_t rounds = 1;        // R; forced to 1 for the vanilla method
  std::uint64_t seed = 0;
  bool probes = false;
  std::size_t log_every = 1;  // emit a report whenever this many rounds have elapsed
  std::optional<Vector> x0;   // defaults to the zero vector
  Tolerances tol{};
};

struct RunResult {
  std::vector<StepReport> reports;
  double max_centroid_error = 0.0;
  double max_tracker_error = 0.0;
  double min_diag = 1.0;
  std::size_t iterations = 0;
};

/// A run that stopped early; the partial record is kept.
class RunAborted : public Error {
 public:
  RunAborted(const std::string& what, ExitCode code, RunResult partial)
      : Error(what), code_(code), partial_(std::move(partial)) {}
  ExitCode exit_code() const noexcept override { return code_; }
  const RunResult& partial() const noexcept { return partial_; }

 private:
  ExitCode code_;
  RunResult partial_;
};

/// Runs T = floor(K / R) iterations. Reports are indexed by cumulative
/// communication rounds.
inline RunResult run(const MixingMatrix& a, const GradientOracle& oracle, const Vector& pi, const RunOptions& opt) {
  RunResult result;
  if (opt.total_rounds == 0) return result;
  const std::size_t rounds = opt.algorithm == Algorithm::kPullDiagGt ? 1 : opt.rounds;
  if (rounds == 0) throw InvalidArgument("run: R must be >= 1");
  if (opt.total_rounds < rounds)
    throw InvalidArgument("run: round budget " + std::to_string(opt.total_rounds) + " is smaller than R = " +
                          std::to_string(rounds));
  const std::size_t log_every = std::max<std::size_t>(opt.log_every, 1);
  const Vector x0 = opt.x0 ? *opt.x0 : Vector::Zero(static_cast<Eigen::Index>(oracle.dim()));
  GtState s = init_mg(a, x0, oracle, opt.alpha, rounds, opt.seed);
  const std::size_t iterations = opt.total_rounds / rounds;
  std::size_t next_log = log_every;
  double tracker_scale = 0.0;
  try {
    for (std::size_t t = 0; t < iterations; ++t) {
      Eigen::RowVectorXd prev_centroid, prev_direction;
      double mass = 0.0;
      if (opt.probes) {
        prev_centroid = pi.transpose() * s.x;
        prev_direction = pi.transpose() * s.y;
        mass = centroid_mass(s, pi);
        tracker_scale = std::max(tracker_scale, tracker_mass(s, pi));
      }
      mg_advance(s, a, oracle, opt.tol.diag_floor);
      result.iterations = s.iter;
      result.min_diag = std::min(result.min_diag, s.d_prev.minCoeff());
      if (!s.x.allFinite() || !s.y.allFinite())
        throw NumericalError("non-finite iterate at iteration " + std::to_string(s.iter));
      if (opt.probes) {
        tracker_scale = std::max(tracker_scale, tracker_mass(s, pi));
        const auto p = probe(s, pi, prev_centroid, prev_direction, mass, tracker_scale);
        result.max_centroid_error = std::max(result.max_centroid_error, p.centroid);
        result.max_tracker_error = std::max(result.max_tracker_error, p.tracker);
        if (!(p.centroid <= opt.tol.centroid_rel) || !(p.tracker <= opt.tol.tracker_rel))
          throw InvariantFailure("invariant probe failed at iteration " + std::to_string(s.iter) +
                                 ": centroid " + std::to_string(p.centroid) + ", tracker " +
                                 std::to_string(p.tracker));
      }
      if (s.comm_rounds >= next_log || t + 1 == iterations) {
        result.reports.push_back(make_report(s, oracle, pi));
        while (next_log <= s.comm_rounds) next_log += log_every;
      }
    }
  } catch (const Error& e) {
    throw RunAborted(e.what(), e.exit_code(), std::move(result));
  }
  return result;
}

}  // namespace rowgossip
