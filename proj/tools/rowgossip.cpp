// rowgossip command-line driver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rowgossip/harness/experiments.hpp"

namespace fs = std::filesystem;
using namespace rowgossip;
using namespace rowgossip::harness;

namespace {

struct Invocation {
  std::string config_path;
  std::string out_dir;
  std::map<std::string, std::string> overrides;
};

void flag(CLI::App* app, Invocation& inv, const std::string& name, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
      name, [&inv, key](const std::string& v) { inv.overrides[key] = v; }, help + " [" + key + "]");
}

void common_flags(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_path, "key = value config file");
  app->add_option("--out", inv.out_dir, "output directory [output.dir]");
  flag(app, inv, "--seed", "seed", "base seed (default: ROWGOSSIP_SEED or 1)");
}

void topology_flags(CLI::App* app, Invocation& inv) {
  flag(app, inv, "--topology", "topology.kind", "exp|ring|grid|geometric|knn|complete|file");
  flag(app, inv, "--n", "topology.n", "node count");
  flag(app, inv, "--radius", "topology.radius", "geometric connection radius");
  flag(app, inv, "--k", "topology.k", "nearest-neighbor count");
  flag(app, inv, "--rows", "topology.rows", "grid rows");
  flag(app, inv, "--cols", "topology.cols", "grid columns");
  flag(app, inv, "--topology-seed", "topology.seed", "seed for random topologies");
  app->add_option_function<std::string>(
      "--matrix",
      [&inv](const std::string& v) {
        inv.overrides["topology.kind"] = "file";
        inv.overrides["topology.path"] = v;
      },
      "dense mixing matrix CSV [topology.path]");
}

void problem_flags(CLI::App* app, Invocation& inv) {
  flag(app, inv, "--problem", "problem.kind", "logistic|quadratic|hard");
  flag(app, inv, "--sigma", "problem.sigma", "extra gradient noise level");
  flag(app, inv, "--dim", "problem.dim", "model dimension");
  flag(app, inv, "--total", "problem.total", "logistic: total sample count");
  flag(app, inv, "--batch", "problem.batch", "logistic: minibatch size");
  flag(app, inv, "--problem-seed", "problem.seed", "dataset seed");
}

void run_flags(CLI::App* app, Invocation& inv) {
  flag(app, inv, "--alpha", "run.alpha", "step size");
  flag(app, inv, "--n-alpha", "run.n_alpha", "step size times node count");
  flag(app, inv, "--rounds", "run.total_rounds", "communication-round budget");
  flag(app, inv, "--reps", "run.repetitions", "repetitions per configuration");
  flag(app, inv, "--log-every", "run.log_every", "report interval in rounds");
}

KeyValueConfig resolve(const Invocation& inv) {
  KeyValueConfig c = inv.config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(inv.config_path);
  for (const auto& [k, v] : inv.overrides) c.set(k, v);
  if (!inv.out_dir.empty()) c.set("output.dir", inv.out_dir);
  if (!c.has("seed")) c.set("seed", std::to_string(default_seed()));
  return c;
}

fs::path prepare_out(const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) return {};
  fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.output_dir + "': " + ec.message());
  std::ofstream echo(dir / "config.ini");
  for (const auto& [k, v] : cfg.echo.values())
    if (k != "output.dir") echo << k << " = " << v << '\n';
  return dir;
}

Json metrics_json(const NetworkMetrics& m, std::size_t n) {
  Json j;
  j["n"] = n;
  j["beta"] = m.beta;
  j["kappa"] = m.kappa;
  j["theta"] = m.theta;
  j["theta_certified"] = m.theta_certified;
  j["m_a"] = m.m_a;
  j["s_a"] = m.s_a;
  j["perron_residual"] = m.perron_residual;
  j["diag_threshold"] = m.diag_threshold;
  if (m.beta < 1.0) j["recommended_R"] = recommended_R(m, n);
  return j;
}

int cmd_metrics(const ExperimentConfig& cfg) {
  const MixingMatrix a = build_topology(cfg.topology);
  const Json j = metrics_json(compute_metrics(a), a.size());
  std::cout << j.dump(2) << '\n';
  if (auto dir = prepare_out(cfg); !dir.empty()) write_json((dir / "metrics.json").string(), j);
  return 0;
}

int cmd_consensus(const ExperimentConfig& cfg) {
  const auto result = run_consensus_experiment(cfg);
  const auto dir = prepare_out(cfg);
  if (dir.empty()) {
    write_consensus_csv(std::cout, result);
    return 0;
  }
  std::ofstream out(dir / "consensus.csv");
  write_consensus_csv(out, result);
  Json j;
  j["initial_error"] = result.initial_error;
  Json fams = Json::array();
  for (const auto& row : result.rows) {
    if (row.round != cfg.consensus_rounds) continue;
    fams.push_back({{"family", row.family}, {"param", row.param}, {"beta", row.beta}, {"kappa", row.kappa},
                    {"final_error", json_number(row.consensus_err)}});
  }
  j["final"] = fams;
  write_json((dir / "summary.json").string(), j);
  std::cout << "wrote " << (dir / "consensus.csv").string() << '\n';
  return 0;
}

int cmd_speedup(const ExperimentConfig& cfg) {
  const auto result = run_speedup_experiment(cfg);
  const auto dir = prepare_out(cfg);
  Json summary = Json::array();
  std::cout << std::setw(6) << "n" << std::setw(12) << "alpha" << std::setw(16) << "plateau" << std::setw(14) << "se"
            << '\n';
  for (const auto& e : result.entries) {
    std::cout << std::setw(6) << e.nodes << std::setw(12) << e.alpha << std::setw(16) << e.plateau_mean
              << std::setw(14) << e.plateau_se << '\n';
    Json j;
    j["nodes"] = e.nodes;
    j["alpha"] = e.alpha;
    j["plateau_mean"] = e.plateau_mean;
    j["plateau_se"] = e.plateau_se;
    j["plateaus"] = e.plateaus;
    Json runs = Json::array();
    for (const auto& r : e.runs) runs.push_back(summary_json(r));
    j["runs"] = runs;
    summary.push_back(j);
    if (!dir.empty()) {
      write_run_csv((dir / ("speedup_n" + std::to_string(e.nodes) + ".csv")).string(), e.mean);
      for (std::size_t r = 0; r < e.runs.size(); ++r)
        write_run_csv((dir / ("speedup_n" + std::to_string(e.nodes) + "_rep" + std::to_string(r) + ".csv")).string(),
                      e.runs[r].rows);
    }
  }
  if (!dir.empty()) write_json((dir / "summary.json").string(), Json{{"entries", summary}});
  return 0;
}

int cmd_mg_compare(const ExperimentConfig& cfg) {
  const auto result = run_mg_compare(cfg);
  const auto dir = prepare_out(cfg);
  Json summary;
  summary["metrics"] = metrics_json(result.metrics, result.metrics.n);
  summary["recommended_R"] = result.recommended;
  Json entries = Json::array();
  std::ostringstream cmp;
  cmp << "label,R,alpha,rep," << kRunCsvHeader << '\n' << std::setprecision(17);
  std::cout << std::setw(8) << "R" << std::setw(10) << "alpha" << std::setw(16) << "objective" << std::setw(16)
            << "grad_norm" << "  status\n";
  for (const auto& e : result.entries) {
    Json je;
    je["label"] = e.label;
    je["R"] = e.rounds;
    je["alpha"] = e.alpha;
    Json runs = Json::array();
    for (std::size_t r = 0; r < e.runs.size(); ++r) {
      const auto& run = e.runs[r];
      runs.push_back(summary_json(run));
      for (const auto& row : run.rows)
        cmp << e.label << ',' << e.rounds << ',' << e.alpha << ',' << r << ',' << row.comm_rounds << ','
            << row.samples << ',' << row.grad_norm << ',' << row.consensus_error << ',' << row.descent_deviation
            << ',' << row.objective << '\n';
      if (!dir.empty())
        write_run_csv((dir / ("mg_R" + e.label + "_rep" + std::to_string(r) + ".csv")).string(), run.rows);
      std::cout << std::setw(8) << e.rounds << std::setw(10) << e.alpha << std::setw(16) << run.final_objective()
                << std::setw(16) << run.final_grad_norm() << "  " << (run.error ? *run.error : "ok") << '\n';
    }
    je["runs"] = runs;
    entries.push_back(je);
  }
  summary["entries"] = entries;
  if (!dir.empty()) {
    std::ofstream(dir / "mg_compare.csv") << cmp.str();
    write_json((dir / "summary.json").string(), summary);
  }
  return 0;
}

int cmd_verify(const ExperimentConfig& cfg, const std::string& matrix, const std::string& report_path) {
  std::vector<NamedMatrix> sets;
  if (matrix.empty()) {
    sets = default_invariant_sets(cfg.seed);
  } else {
    std::ifstream in(matrix);
    if (!in) throw ConfigError("cannot open matrix file '" + matrix + "'");
    sets.push_back({fs::path(matrix).filename().string(), read_matrix_csv(in)});
  }
  const auto report = run_invariant_suite(sets, cfg.seed);
  std::size_t failed = 0;
  for (const auto& c : report.checks) {
    if (c.passed) continue;
    ++failed;
    std::cerr << "FAIL " << c.set << ' ' << c.name << " margin=" << c.margin
              << (c.detail.empty() ? "" : " (" + c.detail + ")") << '\n';
  }
  std::cout << report.checks.size() - failed << '/' << report.checks.size() << " checks passed\n";
  std::string path = report_path;
  if (path.empty())
    if (auto dir = prepare_out(cfg); !dir.empty()) path = (dir / "verify.json").string();
  if (!path.empty()) write_json(path, report.to_json());
  return report.passed() ? 0 : static_cast<int>(ExitCode::kInvariantFailure);
}

struct ExportPaths {
  std::string matrix, edges, dataset;
};

int cmd_export(const ExperimentConfig& cfg, const ExportPaths& p) {
  if (p.matrix.empty() && p.edges.empty() && p.dataset.empty())
    throw ConfigError("export: give at least one of --matrix-csv, --edges, --dataset");
  auto open = [](const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    return out;
  };
  if (!p.matrix.empty() || !p.edges.empty()) {
    const MixingMatrix a = build_topology(cfg.topology);
    if (!p.matrix.empty()) {
      auto out = open(p.matrix);
      write_matrix_csv(out, a.dense());
    }
    if (!p.edges.empty()) {
      DirectedGraph g(a.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
          if (a(i, j) > 0.0) g.add_edge(j, i);
      auto out = open(p.edges);
      write_edge_list(out, g);
    }
  }
  if (!p.dataset.empty()) {
    const auto& ps = cfg.problem;
    const auto ds = make_synthetic_dataset(cfg.topology.n, ps.total, ps.dim, ps.seed, ps.sigma_h);
    auto out = open(p.dataset);
    write_dataset_csv(out, ds);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized optimization over row-stochastic networks"};
  app.require_subcommand(1);

  Invocation inv;
  auto* metrics = app.add_subcommand("metrics", "print spectral metrics of a topology as JSON");
  common_flags(metrics, inv);
  topology_flags(metrics, inv);

  auto* consensus = app.add_subcommand("consensus", "Pull-Diag consensus sweep over lazy and tilted matrices");
  common_flags(consensus, inv);
  topology_flags(consensus, inv);
  flag(consensus, inv, "--K", "consensus.rounds", "gossip rounds");

  auto* speedup = app.add_subcommand("speedup", "Pull-Diag-GT plateau versus node count");
  common_flags(speedup, inv);
  topology_flags(speedup, inv);
  problem_flags(speedup, inv);
  run_flags(speedup, inv);
  flag(speedup, inv, "--nodes", "run.nodes", "comma-separated node counts");

  auto* mg = app.add_subcommand("mg-compare", "vanilla versus multi-round gossip at equal round budget");
  common_flags(mg, inv);
  topology_flags(mg, inv);
  problem_flags(mg, inv);
  run_flags(mg, inv);
  flag(mg, inv, "--R", "run.R", "comma-separated gossip rounds per iteration, 'auto' for the recommended value");

  auto* verify = app.add_subcommand("verify", "run the invariant suite");
  common_flags(verify, inv);
  std::string verify_matrix, verify_report;
  verify->add_option("--matrix", verify_matrix, "check this matrix CSV instead of the built-in set");
  verify->add_option("--report", verify_report, "JSON report path");

  auto* exp = app.add_subcommand("export", "write a mixing matrix, edge list or synthetic dataset");
  common_flags(exp, inv);
  topology_flags(exp, inv);
  problem_flags(exp, inv);
  ExportPaths paths;
  exp->add_option("--matrix-csv", paths.matrix, "dense matrix CSV path");
  exp->add_option("--edges", paths.edges, "edge list path");
  exp->add_option("--dataset", paths.dataset, "synthetic logistic dataset CSV path");

  auto* run_cfg = app.add_subcommand("run", "run the experiment named by the config's 'experiment' key");
  common_flags(run_cfg, inv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::kConfigError);
  }

  try {
    KeyValueConfig c = resolve(inv);
    auto as = [&c](const char* kind) {
      c.set("experiment", kind);
      return ExperimentConfig::from(c);
    };
    if (metrics->parsed()) return cmd_metrics(as("metrics"));
    if (consensus->parsed()) return cmd_consensus(as("consensus"));
    if (speedup->parsed()) return cmd_speedup(as("speedup"));
    if (mg->parsed()) return cmd_mg_compare(as("mg-compare"));
    if (verify->parsed()) return cmd_verify(as("verify"), verify_matrix, verify_report);
    if (exp->parsed()) return cmd_export(as("metrics"), paths);
    const auto cfg = ExperimentConfig::from(c);
    switch (cfg.kind) {
      case ExperimentKind::kConsensus: return cmd_consensus(cfg);
      case ExperimentKind::kSpeedup: return cmd_speedup(cfg);
      case ExperimentKind::kMgCompare: return cmd_mg_compare(cfg);
      case ExperimentKind::kInvariants: return cmd_verify(cfg, "", "");
      case ExperimentKind::kMetrics: return cmd_metrics(cfg);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kNumericalError);
  }
  return 0;
}
