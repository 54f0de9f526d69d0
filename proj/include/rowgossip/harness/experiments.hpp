#pragma once

// Experiment drivers: consensus sweeps, node-count sweeps, gossip-round
// comparisons and the invariant suite.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "rowgossip/gossip.hpp"
#include "rowgossip/harness/config.hpp"
#include "rowgossip/harness/records.hpp"
#include "rowgossip/optim.hpp"
#include "rowgossip/spectral.hpp"

namespace rowgossip::harness {

/// Runs task(0..count-1) on a small worker pool. Each task writes only its
/// own output slot, so results do not depend on scheduling. The first
/// exception is rethrown after all workers finish.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task,
                         std::size_t max_workers = 0) {
  if (count == 0) return;
  std::size_t workers = max_workers ? max_workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        task(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::uint64_t repetition_seed(std::uint64_t base, std::size_t rep) {
  return derive_seed(base, {0x72657065ULL, rep});
}

/// Runs one optimizer configuration, catching aborts into the record.
inline RunRecord run_record(const MixingMatrix& a, const GradientOracle& oracle, const Vector& pi,
                            const RunOptions& opt, std::string label) {
  RunRecord rec;
  rec.label = std::move(label);
  rec.nodes = a.size();
  rec.rounds = opt.algorithm == Algorithm::kPullDiagGt ? 1 : opt.rounds;
  rec.alpha = opt.alpha;
  rec.seed = opt.seed;
  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  try {
    result = run(a, oracle, pi, opt);
  } catch (const RunAborted& e) {
    result = e.partial();
    rec.error = e.what();
    rec.error_code = e.exit_code();
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rec.rows = std::move(result.reports);
  rec.max_centroid_error = result.max_centroid_error;
  rec.max_tracker_error = result.max_tracker_error;
  rec.min_diag = result.min_diag;
  return rec;
}

// ---------------------------------------------------------------------------
// Consensus sweep

struct ConsensusRow {
  std::string family;  // lazy | hetero
  double param = 0.0;
  double beta = 0.0;
  double kappa = 1.0;
  std::size_t round = 0;
  double consensus_err = 0.0;  // interleaved mode after `round` rounds
  double two_phase_err = 0.0;  // two-phase mode with K = round
};

struct ConsensusResult {
  std::vector<ConsensusRow> rows;
  double initial_error = 0.0;
};

/// theta A + (1 - theta) I: same Perron vector, so kappa is fixed while
/// beta grows as theta shrinks.
inline Matrix lazy_family(const Matrix& a, double theta) {
  return theta * a + (1.0 - theta) * Matrix::Identity(a.rows(), a.cols());
}

/// Rows of the first half of the nodes become (1 - s) A_i + s e_i, which
/// tilts the Perron vector toward them and raises kappa.
inline Matrix hetero_family(const Matrix& a, double s) {
  Matrix out = a;
  const Eigen::Index half = a.rows() / 2;
  for (Eigen::Index i = 0; i < half; ++i) {
    out.row(i) *= (1.0 - s);
    out(i, i) += s;
  }
  return out;
}

inline std::vector<ConsensusRow> consensus_sweep(const std::string& family, double param, const MixingMatrix& a,
                                                 std::size_t rounds) {
  std::vector<ConsensusRow> rows;
  const auto n = static_cast<Eigen::Index>(a.size());
  const auto m = compute_metrics(a);
  Matrix z(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) z(i, 0) = static_cast<double>(i + 1);
  const Eigen::RowVectorXd mean = column_mean(z);
  pull_diag_interleaved(a, z, rounds, [&](std::size_t k, const StackedState& zk) {
    ConsensusRow row;
    row.family = family;
    row.param = param;
    row.beta = m.beta;
    row.kappa = m.kappa;
    row.round = k;
    row.consensus_err = consensus_error(zk, mean);
    row.two_phase_err = consensus_error(pull_diag_average(a, z, k), mean);
    rows.push_back(row);
  });
  return rows;
}

inline ConsensusResult run_consensus_experiment(const ExperimentConfig& cfg) {
  const MixingMatrix base = build_topology(cfg.topology);
  ConsensusResult result;
  const auto n = static_cast<Eigen::Index>(base.size());
  Matrix z(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) z(i, 0) = static_cast<double>(i + 1);
  result.initial_error = consensus_error(z, column_mean(z));
  for (double theta : cfg.lazy) {
    auto rows = consensus_sweep("lazy", theta, MixingMatrix::from_dense(lazy_family(base.dense(), theta)),
                                cfg.consensus_rounds);
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  for (double s : cfg.hetero) {
    auto rows = consensus_sweep("hetero", s, MixingMatrix::from_dense(hetero_family(base.dense(), s)),
                                cfg.consensus_rounds);
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  return result;
}

inline void write_consensus_csv(std::ostream& os, const ConsensusResult& r) {
  os << "family,param,beta,kappa,round,consensus_err,two_phase_err\n" << std::setprecision(17);
  for (const auto& row : r.rows)
    os << row.family << ',' << row.param << ',' << row.beta << ',' << row.kappa << ',' << row.round << ','
       << row.consensus_err << ',' << row.two_phase_err << '\n';
}

// ---------------------------------------------------------------------------
// Node-count sweep

struct SpeedupEntry {
  std::size_t nodes = 0;
  double alpha = 0.0;
  std::vector<RunRecord> runs;     // one per repetition
  std::vector<StepReport> mean;    // grad_norm etc. averaged over repetitions
  std::vector<double> plateaus;    // per repetition
  double plateau_mean = 0.0;
  double plateau_se = 0.0;         // standard error of plateau_mean
};

struct SpeedupResult {
  std::vector<SpeedupEntry> entries;
};

inline std::vector<StepReport> average_rows(const std::vector<RunRecord>& runs) {
  std::vector<StepReport> mean;
  if (runs.empty()) return mean;
  std::size_t len = runs.front().rows.size();
  for (const auto& r : runs) len = std::min(len, r.rows.size());
  mean.assign(runs.front().rows.begin(), runs.front().rows.begin() + static_cast<std::ptrdiff_t>(len));
  const double count = static_cast<double>(runs.size());
  for (std::size_t k = 0; k < len; ++k) {
    StepReport& m = mean[k];
    m.grad_norm = m.consensus_error = m.descent_deviation = m.objective = 0.0;
    for (const auto& r : runs) {
      m.grad_norm += r.rows[k].grad_norm / count;
      m.consensus_error += r.rows[k].consensus_error / count;
      m.descent_deviation += r.rows[k].descent_deviation / count;
      m.objective += r.rows[k].objective / count;
    }
  }
  return mean;
}

inline SpeedupResult run_speedup_experiment(const ExperimentConfig& cfg) {
  SpeedupResult result;
  if (cfg.problem.kind == "logistic")
    for (auto n : cfg.nodes)
      if (cfg.problem.total % n != 0)
        throw ConfigError("speedup: L_total = " + std::to_string(cfg.problem.total) + " is not divisible by n = " +
                          std::to_string(n));
  struct Job {
    std::size_t entry, rep;
  };
  std::vector<Job> jobs;
  std::vector<MixingMatrix> mats;
  std::vector<NetworkMetrics> metrics;
  std::vector<OraclePtr> oracles;
  for (std::size_t e = 0; e < cfg.nodes.size(); ++e) {
    const std::size_t n = cfg.nodes[e];
    mats.push_back(build_topology(cfg.topology.with_nodes(n)));
    metrics.push_back(compute_metrics(mats.back()));
    oracles.push_back(build_problem(cfg.problem, n));
    SpeedupEntry entry;
    entry.nodes = n;
    const double n_alpha = cfg.n_alpha.value_or(speedup_step_product(cfg.topology.kind));
    entry.alpha = cfg.alpha.value_or(n_alpha / static_cast<double>(n));
    entry.runs.resize(cfg.repetitions);
    result.entries.push_back(std::move(entry));
    for (std::size_t r = 0; r < cfg.repetitions; ++r) jobs.push_back({e, r});
  }
  parallel_for(jobs.size(), [&](std::size_t j) {
    const auto [e, rep] = jobs[j];
    RunOptions opt;
    opt.algorithm = Algorithm::kPullDiagGt;
    opt.alpha = result.entries[e].alpha;
    opt.total_rounds = cfg.total_rounds;
    opt.seed = repetition_seed(cfg.seed, rep);
    opt.log_every = cfg.log_every;
    result.entries[e].runs[rep] = run_record(mats[e], *oracles[e], metrics[e].pi, opt,
                                             "n=" + std::to_string(cfg.nodes[e]) + " rep=" + std::to_string(rep));
  });
  for (auto& entry : result.entries) {
    for (const auto& run : entry.runs) {
      if (run.error) throw NumericalError("speedup run " + run.label + " aborted: " + *run.error);
      entry.plateaus.push_back(plateau(run.rows));
    }
    entry.mean = average_rows(entry.runs);
    const double count = static_cast<double>(entry.plateaus.size());
    double sum = 0.0;
    for (double p : entry.plateaus) sum += p;
    entry.plateau_mean = sum / count;
    double sq = 0.0;
    for (double p : entry.plateaus) sq += (p - entry.plateau_mean) * (p - entry.plateau_mean);
    entry.plateau_se = count > 1 ? std::sqrt(sq / (count - 1.0) / count) : 0.0;
  }
  return result;
}

/// True when a - b exceeds `z` combined standard errors.
inline bool significantly_greater(const SpeedupEntry& a, const SpeedupEntry& b, double z = 3.0) {
  return a.plateau_mean - b.plateau_mean > z * std::hypot(a.plateau_se, b.plateau_se);
}

// ---------------------------------------------------------------------------
// Gossip-round comparison

struct MgEntry {
  std::string label;  // as requested: "1", "5", "auto"
  std::size_t rounds = 1;
  double alpha = 0.0;
  std::vector<RunRecord> runs;
};

struct MgCompareResult {
  NetworkMetrics metrics;
  std::size_t recommended = 1;
  std::vector<MgEntry> entries;
};

inline MgCompareResult run_mg_compare(const ExperimentConfig& cfg) {
  MgCompareResult result;
  const MixingMatrix a = build_topology(cfg.topology);
  result.metrics = compute_metrics(a);
  result.recommended = recommended_R(result.metrics, a.size());
  const OraclePtr oracle = build_problem(cfg.problem, a.size());
  for (const auto& label : cfg.rounds) {
    MgEntry e;
    e.label = label;
    e.rounds = label == "auto" ? result.recommended : detail::parse_unsigned("run.R", label);
    if (cfg.total_rounds < e.rounds)
      throw ConfigError("mg-compare: round budget " + std::to_string(cfg.total_rounds) + " is below R = " +
                        std::to_string(e.rounds));
    e.alpha = cfg.alpha.value_or(mg_step_size(cfg.topology.kind, a.size(), e.rounds));
    e.runs.resize(cfg.repetitions);
    result.entries.push_back(std::move(e));
  }
  const std::size_t per = cfg.repetitions;
  parallel_for(result.entries.size() * per, [&](std::size_t j) {
    MgEntry& e = result.entries[j / per];
    const std::size_t rep = j % per;
    RunOptions opt;
    opt.algorithm = e.rounds == 1 ? Algorithm::kPullDiagGt : Algorithm::kMgPullDiagGt;
    opt.rounds = e.rounds;
    opt.alpha = e.alpha;
    opt.total_rounds = cfg.total_rounds;
    opt.seed = repetition_seed(cfg.seed, rep);
    opt.log_every = std::max(cfg.log_every, e.rounds);
    e.runs[rep] = run_record(a, *oracle, result.metrics.pi, opt, "R=" + e.label + " rep=" + std::to_string(rep));
  });
  return result;
}

// ---------------------------------------------------------------------------
// Invariant suite

struct NamedMatrix {
  std::string name;
  Matrix dense;
};

struct InvariantCheck {
  std::string set;
  std::string name;
  bool passed = true;
  double margin = 0.0;  // slack to the bound; negative when violated
  std::string detail;
};

struct InvariantReport {
  std::vector<InvariantCheck> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const InvariantCheck& c) { return c.passed; });
  }

  Json to_json() const {
    Json j;
    j["passed"] = passed();
    Json arr = Json::array();
    for (const auto& c : checks) {
      Json e;
      e["set"] = c.set;
      e["check"] = c.name;
      e["passed"] = c.passed;
      e["margin"] = json_number(c.margin);
      if (!c.detail.empty()) e["detail"] = c.detail;
      arr.push_back(e);
    }
    j["checks"] = arr;
    return j;
  }
};

inline std::vector<NamedMatrix> default_invariant_sets(std::uint64_t seed) {
  return {
      {"exp1", weights_from_indegree(build_exponential(1)).dense()},
      {"exp8", weights_from_indegree(build_exponential(8)).dense()},
      {"exp16", weights_from_indegree(build_exponential(16)).dense()},
      {"ring5", weights_from_indegree(build_directed_ring(5)).dense()},
      {"ring16", weights_from_indegree(build_directed_ring(16)).dense()},
      {"grid4x4", weights_from_indegree(build_grid(4, 4)).dense()},
      {"geometric16", weights_from_indegree(build_geometric(16, 0.35, seed)).dense()},
      {"knn16", weights_from_indegree(build_nearest_neighbor(16, 3, seed)).dense()},
  };
}

namespace detail {

inline void check_set(const NamedMatrix& set, std::uint64_t seed, std::vector<InvariantCheck>& out) {
  const Tolerances& tol = kDefaultTolerances;
  auto add = [&](std::string name, bool ok, double margin, std::string detail = {}) {
    out.push_back({set.name, std::move(name), ok, margin, std::move(detail)});
  };

  const auto validation = validate_mixing(set.dense, tol);
  add("validate", validation.ok, 0.0, validation.message);
  if (!validation.ok) return;
  const MixingMatrix a = MixingMatrix::from_dense(set.dense, tol);
  const std::size_t n = a.size();

  NetworkMetrics m;
  try {
    m = compute_metrics(a, 0, tol);
  } catch (const Error& e) {
    add("metrics", false, 0.0, e.what());
    return;
  }
  add("perron_residual", m.perron_residual <= tol.perron_residual, tol.perron_residual - m.perron_residual);
  add("beta_below_one", m.beta < 1.0, 1.0 - m.beta);

  // Rolling-sum inequality on seeded Gaussian sequences.
  {
    Rng rng = make_rng(seed, {0x726f6c6cULL});
    std::normal_distribution<double> normal;
    double worst = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Matrix> deltas;
      for (int k = 0; k < 12; ++k) {
        Matrix d(static_cast<Eigen::Index>(n), 3);
        for (Eigen::Index i = 0; i < d.rows(); ++i)
          for (Eigen::Index j = 0; j < d.cols(); ++j) d(i, j) = normal(rng);
        deltas.push_back(d);
      }
      const auto r = verify_rolling_sum(a, m, deltas, tol);
      ok = ok && r.holds;
      worst = std::min(worst, r.rhs - r.lhs);
    }
    add("rolling_sum", ok, worst);
  }

  // Diagonal convergence needs positive diagonals.
  if ((a.dense().diagonal().array() > 0.0).all()) {
    const auto r = verify_diag_convergence(a, m, 30, tol);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& row : r.rows) {
      worst = std::min({worst, row.weighted_bound - row.weighted_gap, row.inverse_bound - row.inverse_gap,
                        row.step_bound - row.step_gap});
    }
    add("diag_convergence", r.holds, r.rows.empty() ? 0.0 : worst);
  } else {
    add("diag_convergence", true, 0.0, "skipped: zero diagonal entries");
  }

  {
    const std::size_t k = std::max<std::size_t>(1, diag_floor_threshold(n, m.beta, m.kappa));
    const auto r = check_diag_floor(a, m, k);
    add("diag_floor", r.holds, r.min_diag - r.floor, "k = " + std::to_string(k));
  }

  // Optimizer probes on a noisy quadratic.
  {
    auto oracle = noisy(make_quadratic(n, 3, 1.0, seed), 1.0);
    for (std::size_t rounds : {std::size_t{1}, std::size_t{3}}) {
      RunOptions opt;
      opt.algorithm = rounds == 1 ? Algorithm::kPullDiagGt : Algorithm::kMgPullDiagGt;
      opt.rounds = rounds;
      opt.alpha = 0.01;
      opt.total_rounds = 150;
      opt.seed = seed;
      opt.probes = true;
      opt.log_every = 150;
      const std::string name = rounds == 1 ? "probes_gt" : "probes_mg";
      try {
        const auto r = run(a, *oracle, m.pi, opt);
        add(name, true,
            std::min(tol.centroid_rel - r.max_centroid_error, tol.tracker_rel - r.max_tracker_error));
      } catch (const RunAborted& e) {
        add(name, false, 0.0, e.what());
      }
    }
    // Diagonal floor along an MG run with the recommended R.
    const std::size_t rounds = recommended_R(m, n);
    auto st = init_mg(a, Vector::Zero(3), *oracle, 0.01, rounds, seed);
    const double floor = 1.0 / (2.0 * static_cast<double>(n) * m.kappa);
    double worst = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 5; ++t) {
      mg_advance(st, a, *oracle);
      worst = std::min(worst, st.d_prev.minCoeff() - floor);
    }
    add("mg_diag_floor", worst >= 0.0, worst, "R = " + std::to_string(rounds));
  }
}

}  // namespace detail

inline InvariantReport run_invariant_suite(const std::vector<NamedMatrix>& sets, std::uint64_t seed) {
  InvariantReport report;
  std::vector<std::vector<InvariantCheck>> per_set(sets.size());
  parallel_for(sets.size(), [&](std::size_t s) { detail::check_set(sets[s], seed, per_set[s]); });
  for (auto& v : per_set) report.checks.insert(report.checks.end(), v.begin(), v.end());
  return report;
}

}  // namespace rowgossip::harness
