#pragma once

// Experiment configuration.
//
// File grammar (one entry per line):
//   # comment            ; comment
//   [section]
//   key = value
// Keys are addressed as "section.key"; keys before the first section header
// are addressed by their bare name. Lists are comma separated. Command-line
// flags override file keys through KeyValueConfig::set.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rowgossip/errors.hpp"
#include "rowgossip/problems.hpp"
#include "rowgossip/topology.hpp"

namespace rowgossip::harness {

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(text, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

}  // namespace detail

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is, const std::string& origin = "<config>") {
    KeyValueConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3)
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
        section = detail::trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = detail::trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      cfg.set(section.empty() ? key : section + "." + key, detail::trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  std::optional<std::string> find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }
  double get_double(const std::string& key, double fallback) const {
    auto v = find(key);
    return v ? detail::parse_double(key, *v) : fallback;
  }
  std::uint64_t get_unsigned(const std::string& key, std::uint64_t fallback) const {
    auto v = find(key);
    return v ? detail::parse_unsigned(key, *v) : fallback;
  }
  std::vector<std::string> get_list(const std::string& key, const std::string& fallback) const {
    return detail::split_list(get(key, fallback));
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Base seed: ROWGOSSIP_SEED if set, else 1.
inline std::uint64_t default_seed() {
  if (const char* env = std::getenv("ROWGOSSIP_SEED"))
    return detail::parse_unsigned("ROWGOSSIP_SEED", detail::trim(env));
  return 1;
}

// ---------------------------------------------------------------------------
// Topology

struct TopologySpec {
  std::string kind = "exp";  // exp | ring | grid | geometric | knn | complete | file
  std::size_t n = 8;
  std::size_t rows = 0;  // grid; 0 means a square grid of n nodes
  std::size_t cols = 0;
  double radius = 0.35;  // geometric
  std::size_t k = 3;     // knn
  std::uint64_t seed = 1;
  std::string path;  // file: dense matrix CSV

  static TopologySpec from(const KeyValueConfig& c, std::uint64_t base_seed) {
    TopologySpec t;
    t.kind = c.get("topology.kind", t.kind);
    t.n = c.get_unsigned("topology.n", t.n);
    t.rows = c.get_unsigned("topology.rows", 0);
    t.cols = c.get_unsigned("topology.cols", 0);
    t.radius = c.get_double("topology.radius", t.radius);
    t.k = c.get_unsigned("topology.k", t.k);
    t.seed = c.get_unsigned("topology.seed", base_seed);
    t.path = c.get("topology.path", "");
    t.validate();
    return t;
  }

  void validate() const {
    static const std::vector<std::string> kinds{"exp", "ring", "grid", "geometric", "knn", "complete", "file"};
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
      throw ConfigError("topology.kind: unknown kind '" + kind + "'");
    if (kind != "file" && n == 0) throw ConfigError("topology.n must be >= 1");
    if (kind == "file" && path.empty()) throw ConfigError("topology.path is required for kind = file");
  }

  /// Same spec with a different node count.
  TopologySpec with_nodes(std::size_t nodes) const {
    TopologySpec t = *this;
    t.n = nodes;
    t.rows = t.cols = 0;
    return t;
  }
};

inline MixingMatrix build_topology(const TopologySpec& t) {
  t.validate();
  if (t.kind == "file") {
    std::ifstream in(t.path);
    if (!in) throw ConfigError("cannot open matrix file '" + t.path + "'");
    return MixingMatrix::from_dense(read_matrix_csv(in));
  }
  if (t.kind == "complete") {
    const auto n = static_cast<Eigen::Index>(t.n);
    return MixingMatrix::from_dense(Matrix::Constant(n, n, 1.0 / static_cast<double>(n)));
  }
  if (t.kind == "exp") return weights_from_indegree(build_exponential(t.n));
  if (t.kind == "ring") return weights_from_indegree(build_directed_ring(t.n));
  if (t.kind == "geometric") return weights_from_indegree(build_geometric(t.n, t.radius, t.seed));
  if (t.kind == "knn") return weights_from_indegree(build_nearest_neighbor(t.n, t.k, t.seed));
  // grid
  std::size_t rows = t.rows, cols = t.cols;
  if (rows == 0 || cols == 0) {
    rows = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(t.n))));
    if (rows == 0 || rows * rows != t.n) throw ConfigError("grid: n must be a perfect square unless rows/cols are set");
    cols = rows;
  }
  return weights_from_indegree(build_grid(rows, cols));
}

// ---------------------------------------------------------------------------
// Problem

struct ProblemSpec {
  std::string kind = "logistic";  // logistic | quadratic | hard
  double sigma = 0.0;             // extra Gaussian noise level
  std::size_t total = 12800;      // logistic: L_total
  std::size_t batch = 50;
  std::size_t dim = 10;
  double rho = 0.01;
  double sigma_h = 10.0;
  double spread = 1.0;       // quadratic
  double smoothness = 1.0;   // hard: L
  double lambda = 1.0;       // hard
  std::uint64_t seed = 1;

  static ProblemSpec from(const KeyValueConfig& c, std::uint64_t base_seed) {
    ProblemSpec p;
    p.kind = c.get("problem.kind", p.kind);
    p.sigma = c.get_double("problem.sigma", p.sigma);
    p.total = c.get_unsigned("problem.total", p.total);
    p.batch = c.get_unsigned("problem.batch", p.batch);
    p.dim = c.get_unsigned("problem.dim", p.dim);
    p.rho = c.get_double("problem.rho", p.rho);
    p.sigma_h = c.get_double("problem.sigma_h", p.sigma_h);
    p.spread = c.get_double("problem.spread", p.spread);
    p.smoothness = c.get_double("problem.smoothness", p.smoothness);
    p.lambda = c.get_double("problem.lambda", p.lambda);
    p.seed = c.get_unsigned("problem.seed", base_seed);
    p.validate();
    return p;
  }

  void validate() const {
    if (kind != "logistic" && kind != "quadratic" && kind != "hard")
      throw ConfigError("problem.kind: unknown kind '" + kind + "'");
    if (!(sigma >= 0.0)) throw ConfigError("problem.sigma must be >= 0");
    if (dim == 0) throw ConfigError("problem.dim must be >= 1");
  }
};

inline OraclePtr build_problem(const ProblemSpec& p, std::size_t n) {
  p.validate();
  OraclePtr base;
  try {
    if (p.kind == "logistic") {
      base = make_synthetic_logistic(n, p.total, p.dim, p.rho, p.batch, p.sigma_h, p.seed);
    } else if (p.kind == "quadratic") {
      base = make_quadratic(n, p.dim, p.spread, p.seed);
    } else {
      base = make_hard_instance(n, p.dim, p.smoothness, p.lambda, p.seed);
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
  return p.sigma > 0.0 ? noisy(base, p.sigma) : base;
}

// ---------------------------------------------------------------------------
// Step sizes

/// Per-R step sizes for the gossip-round comparison; R values off the table
/// use the entry of the largest listed R below them.
inline double mg_step_size(const std::string& topology, std::size_t n, std::size_t rounds) {
  struct Table {
    const char* kind;
    double r1, r5, r10;
  };
  static const Table tables[] = {
      {"ring", 0.005, 0.01, 0.02},
      {"grid", 0.02, 0.03, 0.03},
      {"geometric", 0.02, 0.02, 0.03},
      {"knn", 0.02, 0.02, 0.02},
  };
  for (const auto& t : tables) {
    if (topology != t.kind) continue;
    if (rounds >= 10) return t.r10;
    if (rounds >= 5) return t.r5;
    return t.r1;
  }
  return 0.512 / static_cast<double>(n);
}

/// n * alpha for the node-count sweep.
inline double speedup_step_product(const std::string& topology) { return topology == "ring" ? 0.002 : 0.512; }

// ---------------------------------------------------------------------------
// Experiment

enum class ExperimentKind { kConsensus, kSpeedup, kMgCompare, kMetrics, kInvariants };

inline ExperimentKind parse_kind(const std::string& s) {
  if (s == "consensus") return ExperimentKind::kConsensus;
  if (s == "speedup") return ExperimentKind::kSpeedup;
  if (s == "mg-compare") return ExperimentKind::kMgCompare;
  if (s == "metrics") return ExperimentKind::kMetrics;
  if (s == "invariants" || s == "verify") return ExperimentKind::kInvariants;
  throw ConfigError("experiment: unknown kind '" + s + "'");
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kMetrics;
  TopologySpec topology;
  ProblemSpec problem;
  std::optional<double> alpha;    // fixed step size
  std::optional<double> n_alpha;  // step size times node count
  std::vector<std::string> rounds{"1"};  // R values; "auto" = recommended
  std::size_t total_rounds = 2000;       // K
  std::vector<std::size_t> nodes{1, 4, 16};
  std::size_t repetitions = 1;
  std::uint64_t seed = 1;
  std::size_t log_every = 10;
  std::string output_dir;
  // consensus sweep
  std::size_t consensus_rounds = 40;
  std::vector<double> lazy{0.25, 0.5, 0.75, 1.0};
  std::vector<double> hetero{0.0, 0.3, 0.6, 0.9};
  KeyValueConfig echo;

  static ExperimentConfig from(const KeyValueConfig& c, std::optional<ExperimentKind> forced = std::nullopt) {
    ExperimentConfig e;
    e.echo = c;
    e.kind = forced ? *forced : parse_kind(c.get("experiment", "metrics"));
    e.seed = c.get_unsigned("seed", default_seed());
    e.topology = TopologySpec::from(c, e.seed);
    e.problem = ProblemSpec::from(c, e.seed);
    if (auto a = c.find("run.alpha")) e.alpha = detail::parse_double("run.alpha", *a);
    if (auto a = c.find("run.n_alpha")) e.n_alpha = detail::parse_double("run.n_alpha", *a);
    e.rounds = c.get_list("run.R", e.kind == ExperimentKind::kMgCompare ? "1,auto" : "1");
    e.total_rounds = c.get_unsigned("run.total_rounds", e.total_rounds);
    e.nodes.clear();
    for (const auto& s : c.get_list("run.nodes", "1,4,16")) e.nodes.push_back(detail::parse_unsigned("run.nodes", s));
    e.repetitions = c.get_unsigned("run.repetitions", e.repetitions);
    e.log_every = c.get_unsigned("run.log_every", e.log_every);
    e.output_dir = c.get("output.dir", "");
    e.consensus_rounds = c.get_unsigned("consensus.rounds", e.consensus_rounds);
    if (c.has("consensus.lazy")) e.lazy = parse_doubles("consensus.lazy", c.get_list("consensus.lazy", ""));
    if (c.has("consensus.hetero")) e.hetero = parse_doubles("consensus.hetero", c.get_list("consensus.hetero", ""));
    e.validate();
    return e;
  }

  void validate() const {
    if (alpha && !(*alpha > 0.0)) throw ConfigError("run.alpha must be > 0");
    if (n_alpha && !(*n_alpha > 0.0)) throw ConfigError("run.n_alpha must be > 0");
    if (repetitions < 1) throw ConfigError("run.repetitions must be >= 1");
    if (nodes.empty()) throw ConfigError("run.nodes must list at least one node count");
    for (auto n : nodes)
      if (n == 0) throw ConfigError("run.nodes entries must be >= 1");
    if (rounds.empty()) throw ConfigError("run.R must list at least one value");
    for (const auto& r : rounds) {
      if (r == "auto") continue;
      if (detail::parse_unsigned("run.R", r) == 0) throw ConfigError("run.R entries must be >= 1 or 'auto'");
    }
    for (double t : lazy)
      if (!(t > 0.0 && t <= 1.0)) throw ConfigError("consensus.lazy entries must lie in (0, 1]");
    for (double t : hetero)
      if (!(t >= 0.0 && t < 1.0)) throw ConfigError("consensus.hetero entries must lie in [0, 1)");
  }

 private:
  static std::vector<double> parse_doubles(const std::string& key, const std::vector<std::string>& items) {
    std::vector<double> out;
    for (const auto& s : items) out.push_back(detail::parse_double(key, s));
    return out;
  }
};

}  // namespace rowgossip::harness
