#pragma once

// Network topologies and row-stochastic weight assignment.
//
// A DirectedGraph stores, for every node i, the set of in-neighbors j (edges
// j -> i, meaning j sends to i). Self-loops are tracked separately; all the
// generators below add them. Edge direction follows the pull convention of
// the mixing matrix: a_ij > 0 iff j -> i is an edge or j == i.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rowgossip/errors.hpp"
#include "rowgossip/rng.hpp"
#include "rowgossip/tolerances.hpp"

namespace rowgossip {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class DirectedGraph {
 public:
  explicit DirectedGraph(std::size_t n) : in_(n), self_(n, false) {
    if (n == 0) throw InvalidArgument("graph must have at least one node");
  }

  std::size_t size() const noexcept { return in_.size(); }

  /// Adds the edge from -> to. A self-loop is recorded when from == to.
  void add_edge(std::size_t from, std::size_t to) {
    check_node(from);
    check_node(to);
    if (from == to) {
      self_[to] = true;
      return;
    }
    auto& list = in_[to];
    auto it = std::lower_bound(list.begin(), list.end(), from);
    if (it == list.end() || *it != from) list.insert(it, from);
  }

  void add_undirected_edge(std::size_t a, std::size_t b) {
    add_edge(a, b);
    add_edge(b, a);
  }

  void add_self_loops() {
    std::fill(self_.begin(), self_.end(), true);
  }

  bool has_edge(std::size_t from, std::size_t to) const {
    check_node(from);
    check_node(to);
    if (from == to) return self_[to];
    return std::binary_search(in_[to].begin(), in_[to].end(), from);
  }

  bool has_self_loop(std::size_t i) const {
    check_node(i);
    return self_[i];
  }

  bool all_self_loops() const {
    return std::all_of(self_.begin(), self_.end(), [](bool b) { return b; });
  }

  /// In-neighbors of node i, excluding i itself, sorted ascending.
  const std::vector<std::size_t>& in_neighbors(std::size_t i) const {
    check_node(i);
    return in_[i];
  }

  /// In-degree excluding the self-loop.
  std::size_t in_degree(std::size_t i) const { return in_neighbors(i).size(); }

  /// All edges as (from, to) pairs, self-loops included, ordered by target.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < size(); ++i) {
      bool self_done = !self_[i];
      for (auto j : in_[i]) {
        if (!self_done && i < j) {
          out.emplace_back(i, i);
          self_done = true;
        }
        out.emplace_back(j, i);
      }
      if (!self_done) out.emplace_back(i, i);
    }
    return out;
  }

  std::size_t edge_count() const {
    std::size_t m = 0;
    for (std::size_t i = 0; i < size(); ++i) m += in_[i].size() + (self_[i] ? 1 : 0);
    return m;
  }

  bool strongly_connected() const {
    const std::size_t n = size();
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t i = 0; i < n; ++i)
      for (auto j : in_[i]) out[j].push_back(i);
    return reaches_all(out) && reaches_all(in_);
  }

  friend bool operator==(const DirectedGraph& a, const DirectedGraph& b) {
    return a.in_ == b.in_ && a.self_ == b.self_;
  }

 private:
  void check_node(std::size_t i) const {
    if (i >= size()) throw InvalidArgument("node index " + std::to_string(i) + " out of range");
  }

  static bool reaches_all(const std::vector<std::vector<std::size_t>>& adj) {
    const std::size_t n = adj.size();
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!q.empty()) {
      auto u = q.front();
      q.pop();
      for (auto v : adj[u]) {
        if (!seen[v]) {
          seen[v] = true;
          ++count;
          q.push(v);
        }
      }
    }
    return count == n;
  }

  std::vector<std::vector<std::size_t>> in_;
  std::vector<bool> self_;
};

// ---------------------------------------------------------------------------
// Generators

/// Node i receives from i - 2^j (mod n) for every 2^j < n.
inline DirectedGraph build_exponential(std::size_t n) {
  DirectedGraph g(n);
  g.add_self_loops();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t off = 1; off < n; off *= 2) g.add_edge((i + n - off) % n, i);
  return g;
}

inline DirectedGraph build_directed_ring(std::size_t n) {
  if (n < 2) throw InvalidArgument("directed ring needs n >= 2, got " + std::to_string(n));
  DirectedGraph g(n);
  g.add_self_loops();
  for (std::size_t i = 0; i < n; ++i) g.add_edge(i, (i + 1) % n);
  return g;
}

/// Undirected 4-neighbor lattice; node (r, c) has index r * cols + c.
inline DirectedGraph build_grid(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw InvalidArgument("grid dimensions must be positive");
  DirectedGraph g(rows * cols);
  g.add_self_loops();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t u = r * cols + c;
      if (c + 1 < cols) g.add_undirected_edge(u, u + 1);
      if (r + 1 < rows) g.add_undirected_edge(u, u + cols);
    }
  }
  return g;
}

namespace detail {

inline std::vector<std::pair<double, double>> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x67656f6dULL});
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<double, double>> pts(n);
  for (auto& p : pts) {
    p.first = unif(rng);
    p.second = unif(rng);
  }
  return pts;
}

inline double dist2(const std::pair<double, double>& a, const std::pair<double, double>& b) {
  const double dx = a.first - b.first, dy = a.second - b.second;
  return dx * dx + dy * dy;
}

}  // namespace detail

inline constexpr int kMaxRadiusEscalations = 50;

/// Random geometric graph in the unit square. The radius grows by 10% until
/// the graph is connected.
inline DirectedGraph build_geometric(std::size_t n, double radius, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("geometric graph needs n >= 1");
  if (!(radius > 0.0) || radius > std::sqrt(2.0))
    throw InvalidArgument("geometric radius must lie in (0, sqrt(2)]");
  const auto pts = detail::random_points(n, seed);
  double r = radius;
  for (int attempt = 0; attempt <= kMaxRadiusEscalations; ++attempt, r *= 1.1) {
    DirectedGraph g(n);
    g.add_self_loops();
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (detail::dist2(pts[a], pts[b]) <= r * r) g.add_undirected_edge(a, b);
    if (g.strongly_connected()) return g;
  }
  throw GenerationError("geometric graph still disconnected after " +
                        std::to_string(kMaxRadiusEscalations) + " radius escalations");
}

/// Each node links to its k Euclidean-nearest peers; the result is symmetrized.
inline DirectedGraph build_nearest_neighbor(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("nearest-neighbor graph needs n >= 1");
  if (k >= n && n > 1) throw InvalidArgument("nearest-neighbor graph needs k < n");
  const auto pts = detail::random_points(n, seed);
  DirectedGraph g(n);
  g.add_self_loops();
  std::vector<std::size_t> order(n);
  for (std::size_t a = 0; a < n; ++a) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t u, std::size_t v) {
      return detail::dist2(pts[a], pts[u]) < detail::dist2(pts[a], pts[v]);
    });
    std::size_t added = 0;
    for (auto b : order) {
      if (added == k) break;
      if (b == a) continue;
      g.add_undirected_edge(a, b);
      ++added;
    }
  }
  if (!g.strongly_connected())
    throw GenerationError("nearest-neighbor graph is disconnected; increase k");
  return g;
}

// ---------------------------------------------------------------------------
// Mixing matrices

namespace detail {

// Dense boolean matrix with 64-bit packed rows.
class BoolMatrix {
 public:
  explicit BoolMatrix(std::size_t n) : n_(n), words_((n + 63) / 64), bits_(n * words_, 0) {}

  void set(std::size_t i, std::size_t j) { bits_[i * words_ + j / 64] |= (1ULL << (j % 64)); }
  bool get(std::size_t i, std::size_t j) const {
    return (bits_[i * words_ + j / 64] >> (j % 64)) & 1ULL;
  }

  BoolMatrix operator*(const BoolMatrix& rhs) const {
    BoolMatrix out(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      std::uint64_t* dst = &out.bits_[i * words_];
      for (std::size_t k = 0; k < n_; ++k) {
        if (!get(i, k)) continue;
        const std::uint64_t* src = &rhs.bits_[k * words_];
        for (std::size_t w = 0; w < words_; ++w) dst[w] |= src[w];
      }
    }
    return out;
  }

  bool all() const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (!get(i, j)) return false;
    return true;
  }

  static BoolMatrix identity(std::size_t n) {
    BoolMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m.set(i, i);
    return m;
  }

 private:
  std::size_t n_, words_;
  std::vector<std::uint64_t> bits_;
};

}  // namespace detail

/// True iff the support of the non-negative matrix `a` has an entrywise
/// positive power. Uses Wielandt's bound m = (n-1)^2 + 1.
inline bool is_primitive(const Matrix& a) {
  const auto n = static_cast<std::size_t>(a.rows());
  if (n == 0) return false;
  detail::BoolMatrix base(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a(i, j) > 0.0) base.set(i, j);
  std::uint64_t e = static_cast<std::uint64_t>(n - 1) * (n - 1) + 1;
  auto result = detail::BoolMatrix::identity(n);
  while (e > 0) {
    if (e & 1ULL) result = result * base;
    e >>= 1;
    if (e > 0) base = base * base;
  }
  return result.all();
}

struct ValidationReport {
  bool ok = true;
  std::string message;
};

/// Checks the mixing-matrix invariants: square, finite, non-negative, rows
/// summing to one and primitive.
inline ValidationReport validate_mixing(const Matrix& a, const Tolerances& tol = kDefaultTolerances,
                                        bool require_primitive = true) {
  auto fail = [](std::string msg) { return ValidationReport{false, std::move(msg)}; };
  if (a.rows() == 0 || a.rows() != a.cols()) return fail("mixing matrix must be square and non-empty");
  if (!a.allFinite()) return fail("mixing matrix has non-finite entries");
  if ((a.array() < 0.0).any()) return fail("mixing matrix has negative entries");
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double s = a.row(i).sum();
    if (std::abs(s - 1.0) > tol.row_sum) {
      std::ostringstream os;
      os << std::setprecision(17) << "row " << i << " sums to " << s << ", not 1";
      return fail(os.str());
    }
  }
  if (require_primitive && !is_primitive(a)) return fail("mixing matrix is not primitive");
  return {};
}

/// Non-negative, row-stochastic, primitive n x n matrix with its cached
/// sparsity pattern. Node i may only read rows j in support(i).
class MixingMatrix {
 public:
  static MixingMatrix from_dense(Matrix a, const Tolerances& tol = kDefaultTolerances) {
    auto report = validate_mixing(a, tol);
    if (!report.ok) throw InvalidGraph(report.message);
    return MixingMatrix(std::move(a));
  }

  /// Row-stochastic without the primitivity check; enough for raw gossip
  /// steps but not for anything that needs a Perron vector.
  static MixingMatrix from_stochastic(Matrix a, const Tolerances& tol = kDefaultTolerances) {
    auto report = validate_mixing(a, tol, false);
    if (!report.ok) throw InvalidGraph(report.message);
    return MixingMatrix(std::move(a));
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(a_.rows()); }
  const Matrix& dense() const noexcept { return a_; }
  double operator()(std::size_t i, std::size_t j) const { return a_(i, j); }

  /// Column indices j with a_ij > 0 (in-neighbors plus i), ascending.
  const std::vector<std::size_t>& support(std::size_t i) const { return support_.at(i); }

  std::size_t nonzeros() const {
    std::size_t m = 0;
    for (const auto& s : support_) m += s.size();
    return m;
  }

  /// The graph whose edges are the off-diagonal support.
  DirectedGraph graph() const {
    DirectedGraph g(size());
    for (std::size_t i = 0; i < size(); ++i)
      for (auto j : support_[i]) g.add_edge(j, i);
    return g;
  }

 private:
  explicit MixingMatrix(Matrix a) : a_(std::move(a)), support_(static_cast<std::size_t>(a_.rows())) {
    for (Eigen::Index i = 0; i < a_.rows(); ++i)
      for (Eigen::Index j = 0; j < a_.cols(); ++j)
        if (a_(i, j) > 0.0) support_[static_cast<std::size_t>(i)].push_back(static_cast<std::size_t>(j));
  }

  Matrix a_;
  std::vector<std::vector<std::size_t>> support_;
};

/// a_ij = 1 / (1 + d_i^in) on the in-neighborhood of i (self included).
inline MixingMatrix weights_from_indegree(const DirectedGraph& g,
                                          const Tolerances& tol = kDefaultTolerances) {
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; ++i)
    if (!g.has_self_loop(i)) throw InvalidGraph("node " + std::to_string(i) + " has no self-loop");
  if (!g.strongly_connected()) throw InvalidGraph("graph is not strongly connected");
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / (1.0 + static_cast<double>(g.in_degree(i)));
    const auto ii = static_cast<Eigen::Index>(i);
    a(ii, ii) = w;
    for (auto j : g.in_neighbors(i)) a(ii, static_cast<Eigen::Index>(j)) = w;
  }
  return MixingMatrix::from_dense(std::move(a), tol);
}

// ---------------------------------------------------------------------------
// Text formats

/// First line n, then n lines of n comma-separated values at 17 significant digits.
inline void write_matrix_csv(std::ostream& os, const Matrix& a) {
  os << a.rows() << '\n';
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (j) os << ',';
      os << a(i, j);
    }
    os << '\n';
  }
}

inline Matrix read_matrix_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("matrix csv: missing header line");
  long long n = 0;
  try {
    n = std::stoll(line);
  } catch (const std::exception&) {
    throw InvalidArgument("matrix csv: bad header '" + line + "'");
  }
  if (n <= 0) throw InvalidArgument("matrix csv: dimension must be positive");
  Matrix a(n, n);
  for (long long i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw InvalidArgument("matrix csv: expected " + std::to_string(n) + " rows");
    std::stringstream row(line);
    std::string cell;
    long long j = 0;
    while (std::getline(row, cell, ',')) {
      if (j >= n) throw InvalidArgument("matrix csv: too many columns in row " + std::to_string(i));
      try {
        a(i, j++) = std::stod(cell);
      } catch (const std::exception&) {
        throw InvalidArgument("matrix csv: bad value '" + cell + "'");
      }
    }
    if (j != n) throw InvalidArgument("matrix csv: row " + std::to_string(i) + " has " + std::to_string(j) + " columns");
  }
  return a;
}

/// One "j i" pair per line for every edge j -> i, self-loops included.
inline void write_edge_list(std::ostream& os, const DirectedGraph& g) {
  for (auto [from, to] : g.edges()) os << from << ' ' << to << '\n';
}

inline DirectedGraph read_edge_list(std::istream& is, std::size_t n = 0) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t from = 0, to = 0, max_index = 0;
  while (is >> from >> to) {
    edges.emplace_back(from, to);
    max_index = std::max({max_index, from, to});
  }
  if (!is.eof()) throw InvalidArgument("edge list: malformed line");
  if (n == 0) n = edges.empty() ? 0 : max_index + 1;
  DirectedGraph g(n);
  for (auto [f, t] : edges) g.add_edge(f, t);
  return g;
}

}  // namespace rowgossip
