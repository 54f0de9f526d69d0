#pragma once

// Gradient oracles for the benchmark problems: a quadratic smoke test, the
// synthetic nonconvex logistic regression and the zero-chain hard instance.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "rowgossip/errors.hpp"
#include "rowgossip/rng.hpp"
#include "rowgossip/topology.hpp"

namespace rowgossip {

/// Per-node gradient access for f = (1/n) sum_i f_i. Implementations are
/// immutable; stochastic calls draw all randomness from the supplied Rng.
class GradientOracle {
 public:
  virtual ~GradientOracle() = default;

  virtual std::size_t nodes() const = 0;
  virtual std::size_t dim() const = 0;
  /// Bound on tr Var of the stochastic gradient noise added on top of the
  /// sampling noise of the problem itself.
  virtual double sigma() const { return 0.0; }

  virtual Vector exact_gradient(std::size_t node, const Vector& x) const = 0;
  virtual Vector stochastic_gradient(std::size_t node, const Vector& x, Rng& rng) const = 0;

  /// f_i(x), when the problem exposes function values.
  virtual std::optional<double> local_objective(std::size_t, const Vector&) const { return std::nullopt; }

  std::optional<double> objective(const Vector& x) const {
    double total = 0.0;
    for (std::size_t i = 0; i < nodes(); ++i) {
      auto fi = local_objective(i, x);
      if (!fi) return std::nullopt;
      total += *fi;
    }
    return total / static_cast<double>(nodes());
  }

  /// (1/n) sum_i grad f_i(x)
  Vector global_gradient(const Vector& x) const {
    Vector g = Vector::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t i = 0; i < nodes(); ++i) g += exact_gradient(i, x);
    return g / static_cast<double>(nodes());
  }

 protected:
  void check_call(std::size_t node, const Vector& x) const {
    if (node >= nodes()) throw InvalidArgument("oracle: node " + std::to_string(node) + " out of range");
    if (static_cast<std::size_t>(x.size()) != dim()) throw ShapeError("oracle: point has wrong dimension");
  }
};

using OraclePtr = std::shared_ptr<const GradientOracle>;

// ---------------------------------------------------------------------------
// Quadratic: f_i(x) = 0.5 ||x - c_i||^2

class QuadraticOracle final : public GradientOracle {
 public:
  explicit QuadraticOracle(Matrix centers) : centers_(std::move(centers)) {
    if (centers_.rows() == 0 || centers_.cols() == 0) throw InvalidArgument("quadratic: empty centers");
  }

  std::size_t nodes() const override { return static_cast<std::size_t>(centers_.rows()); }
  std::size_t dim() const override { return static_cast<std::size_t>(centers_.cols()); }

  Vector exact_gradient(std::size_t node, const Vector& x) const override {
    check_call(node, x);
    return x - centers_.row(static_cast<Eigen::Index>(node)).transpose();
  }
  Vector stochastic_gradient(std::size_t node, const Vector& x, Rng&) const override {
    return exact_gradient(node, x);
  }
  std::optional<double> local_objective(std::size_t node, const Vector& x) const override {
    check_call(node, x);
    return 0.5 * (x - centers_.row(static_cast<Eigen::Index>(node)).transpose()).squaredNorm();
  }

  const Matrix& centers() const { return centers_; }
  Vector minimizer() const { return centers_.colwise().mean().transpose(); }

 private:
  Matrix centers_;
};

inline std::shared_ptr<const QuadraticOracle> make_quadratic(std::size_t n, std::size_t d, double spread,
                                                             std::uint64_t seed) {
  if (n == 0 || d == 0) throw InvalidArgument("quadratic: n and d must be positive");
  if (!(spread >= 0.0)) throw InvalidArgument("quadratic: spread must be >= 0");
  Rng rng = make_rng(seed, {0x71756164ULL});
  std::normal_distribution<double> normal;
  Matrix c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j) c(i, j) = spread * normal(rng);
  return std::make_shared<const QuadraticOracle>(std::move(c));
}

// ---------------------------------------------------------------------------
// Synthetic nonconvex logistic regression

struct SyntheticDataset {
  Matrix features;       // L_total x d, rows [i M, (i+1) M) belong to node i
  Vector labels;         // +-1
  Vector x_opt;          // planted parameter
  Matrix local_starts;   // n x d perturbed copies of x_opt
  std::size_t nodes = 1;
  std::size_t per_node = 0;
};

inline SyntheticDataset make_synthetic_dataset(std::size_t n, std::size_t total, std::size_t d,
                                               std::uint64_t seed, double sigma_h = 10.0) {
  if (n == 0 || d == 0 || total == 0) throw InvalidArgument("synthetic: sizes must be positive");
  if (total % n != 0)
    throw InvalidArgument("synthetic: L_total = " + std::to_string(total) + " is not divisible by n = " +
                          std::to_string(n));
  SyntheticDataset ds;
  ds.nodes = n;
  ds.per_node = total / n;
  const auto dd = static_cast<Eigen::Index>(d);
  const auto ll = static_cast<Eigen::Index>(total);
  // The planted model and data depend only on (seed, L_total, d) so that
  // different node counts split the same global dataset.
  Rng rng = make_rng(seed, {0x6c6f6769ULL, total, d});
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ds.x_opt.resize(dd);
  for (Eigen::Index j = 0; j < dd; ++j) ds.x_opt(j) = normal(rng);
  ds.features.resize(ll, dd);
  for (Eigen::Index l = 0; l < ll; ++l)
    for (Eigen::Index j = 0; j < dd; ++j) ds.features(l, j) = normal(rng);
  ds.labels.resize(ll);
  for (Eigen::Index l = 0; l < ll; ++l) {
    const double z = unif(rng);
    const double margin = ds.features.row(l).dot(ds.x_opt);
    ds.labels(l) = (1.0 / z > 1.0 + std::exp(-margin)) ? 1.0 : -1.0;
  }
  Rng start_rng = make_rng(seed, {0x73746172ULL, n, total, d});
  ds.local_starts.resize(static_cast<Eigen::Index>(n), dd);
  for (Eigen::Index i = 0; i < ds.local_starts.rows(); ++i)
    for (Eigen::Index j = 0; j < dd; ++j) ds.local_starts(i, j) = ds.x_opt(j) + sigma_h * normal(start_rng);
  return ds;
}

/// Header `node,label,h0,...,h{d-1}`, one row per sample.
inline void write_dataset_csv(std::ostream& os, const SyntheticDataset& ds) {
  os << "node,label";
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) os << ",h" << j;
  os << '\n' << std::setprecision(17);
  for (Eigen::Index l = 0; l < ds.features.rows(); ++l) {
    os << static_cast<std::size_t>(l) / ds.per_node << ',' << ds.labels(l);
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) os << ',' << ds.features(l, j);
    os << '\n';
  }
}

class SyntheticLogisticOracle final : public GradientOracle {
 public:
  SyntheticLogisticOracle(SyntheticDataset data, double rho, std::size_t batch)
      : data_(std::move(data)), rho_(rho), batch_(batch) {
    if (batch_ == 0 || batch_ > data_.per_node)
      throw InvalidArgument("synthetic: batch size must lie in [1, L_total / n]");
    if (!(rho_ >= 0.0)) throw InvalidArgument("synthetic: rho must be >= 0");
  }

  std::size_t nodes() const override { return data_.nodes; }
  std::size_t dim() const override { return static_cast<std::size_t>(data_.features.cols()); }

  Vector exact_gradient(std::size_t node, const Vector& x) const override {
    check_call(node, x);
    Vector g = Vector::Zero(x.size());
    const std::size_t base = node * data_.per_node;
    for (std::size_t l = 0; l < data_.per_node; ++l) accumulate_loss_gradient(base + l, x, g);
    g /= static_cast<double>(data_.per_node);
    return g + regularizer_gradient(x);
  }

  /// Minibatch of `batch` local samples drawn uniformly without replacement.
  Vector stochastic_gradient(std::size_t node, const Vector& x, Rng& rng) const override {
    check_call(node, x);
    const auto picks = sample_batch(rng);
    Vector g = Vector::Zero(x.size());
    const std::size_t base = node * data_.per_node;
    for (auto l : picks) accumulate_loss_gradient(base + l, x, g);
    g /= static_cast<double>(batch_);
    return g + regularizer_gradient(x);
  }

  std::optional<double> local_objective(std::size_t node, const Vector& x) const override {
    check_call(node, x);
    const std::size_t base = node * data_.per_node;
    double loss = 0.0;
    for (std::size_t l = 0; l < data_.per_node; ++l) {
      const auto row = static_cast<Eigen::Index>(base + l);
      const double m = data_.labels(row) * data_.features.row(row).dot(x);
      loss += softplus(-m);
    }
    loss /= static_cast<double>(data_.per_node);
    const Vector sq = x.array().square();
    return loss + rho_ * (sq.array() / (1.0 + sq.array())).sum();
  }

  const SyntheticDataset& dataset() const { return data_; }
  double rho() const { return rho_; }
  std::size_t batch() const { return batch_; }

  Vector regularizer_gradient(const Vector& x) const {
    const Eigen::ArrayXd sq = x.array().square();
    return (rho_ * 2.0 * x.array() / (1.0 + sq).square()).matrix();
  }

 private:
  static double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

  // g -= y h / (1 + exp(y h^T x))
  void accumulate_loss_gradient(std::size_t row, const Vector& x, Vector& g) const {
    const auto r = static_cast<Eigen::Index>(row);
    const double y = data_.labels(r);
    const double m = y * data_.features.row(r).dot(x);
    g.noalias() -= (y / (1.0 + std::exp(m))) * data_.features.row(r).transpose();
  }

  // Floyd's sampling; indices returned in ascending order.
  std::vector<std::size_t> sample_batch(Rng& rng) const {
    const std::size_t m = data_.per_node;
    std::vector<std::size_t> picks;
    picks.reserve(batch_);
    for (std::size_t j = m - batch_; j < m; ++j) {
      std::uniform_int_distribution<std::size_t> pick(0, j);
      const std::size_t t = pick(rng);
      auto it = std::lower_bound(picks.begin(), picks.end(), t);
      if (it != picks.end() && *it == t) {
        picks.insert(std::lower_bound(picks.begin(), picks.end(), j), j);
      } else {
        picks.insert(it, t);
      }
    }
    return picks;
  }

  SyntheticDataset data_;
  double rho_;
  std::size_t batch_;
};

inline std::shared_ptr<const SyntheticLogisticOracle> make_synthetic_logistic(
    std::size_t n, std::size_t total, std::size_t d, double rho, std::size_t batch, double sigma_h,
    std::uint64_t seed) {
  return std::make_shared<const SyntheticLogisticOracle>(make_synthetic_dataset(n, total, d, seed, sigma_h), rho,
                                                         batch);
}

// ---------------------------------------------------------------------------
// Zero-chain hard instance

namespace hard {

inline constexpr double kDelta0 = 12.0;
inline constexpr double kSmoothness = 152.0;  // L_0
inline constexpr double kGradSup = 23.0;      // G_inf

inline double psi(double z) {
  if (z <= 0.5) return 0.0;
  const double t = 2.0 * z - 1.0;
  return std::exp(1.0 - 1.0 / (t * t));
}

inline double psi_prime(double z) {
  if (z <= 0.5) return 0.0;
  const double t = 2.0 * z - 1.0;
  return psi(z) * 4.0 / (t * t * t);
}

/// sqrt(e) * int_{-inf}^z exp(-t^2/2) dt = sqrt(e pi / 2) erfc(-z / sqrt 2)
inline double phi(double z) {
  static const double scale = std::sqrt(std::exp(1.0) * M_PI / 2.0);
  return scale * std::erfc(-z / std::sqrt(2.0));
}

inline double phi_prime(double z) { return std::sqrt(std::exp(1.0)) * std::exp(-0.5 * z * z); }

enum class Links { kAll, kEven, kOdd };

namespace detail {

inline bool selected(std::size_t j, Links which) {
  switch (which) {
    case Links::kAll: return true;
    case Links::kEven: return j % 2 == 0;
    case Links::kOdd: return j % 2 == 1;
  }
  return false;
}

// head * (-psi(1) phi(x_1)) + factor * sum over selected 1-based j < d of
//   psi(-x_j) phi(-x_{j+1}) - psi(x_j) phi(x_{j+1})
inline double chain_value(const Vector& x, double head, double factor, Links which) {
  const auto d = static_cast<std::size_t>(x.size());
  double v = head * (-psi(1.0) * phi(x(0)));
  for (std::size_t j = 1; j < d; ++j) {
    if (!selected(j, which)) continue;
    const double a = x(static_cast<Eigen::Index>(j - 1)), b = x(static_cast<Eigen::Index>(j));
    v += factor * (psi(-a) * phi(-b) - psi(a) * phi(b));
  }
  return v;
}

inline Vector chain_gradient(const Vector& x, double head, double factor, Links which) {
  const auto d = static_cast<std::size_t>(x.size());
  Vector g = Vector::Zero(x.size());
  g(0) = head * (-psi(1.0) * phi_prime(x(0)));
  for (std::size_t j = 1; j < d; ++j) {
    if (!selected(j, which)) continue;
    const auto ja = static_cast<Eigen::Index>(j - 1), jb = static_cast<Eigen::Index>(j);
    const double a = x(ja), b = x(jb);
    g(ja) += factor * (-psi_prime(-a) * phi(-b) - psi_prime(a) * phi(b));
    g(jb) += factor * (-psi(-a) * phi_prime(-b) - psi(a) * phi_prime(b));
  }
  return g;
}

}  // namespace detail

inline double h(const Vector& x) { return detail::chain_value(x, 1.0, 1.0, Links::kAll); }
inline Vector grad_h(const Vector& x) { return detail::chain_gradient(x, 1.0, 1.0, Links::kAll); }
inline double h1(const Vector& x) { return detail::chain_value(x, 2.0, 2.0, Links::kEven); }
inline Vector grad_h1(const Vector& x) { return detail::chain_gradient(x, 2.0, 2.0, Links::kEven); }
inline double h2(const Vector& x) { return detail::chain_value(x, 0.0, 2.0, Links::kOdd); }
inline Vector grad_h2(const Vector& x) { return detail::chain_gradient(x, 0.0, 2.0, Links::kOdd); }

}  // namespace hard

/// Largest 1-based index of a nonzero coordinate; 0 for the zero vector.
inline std::size_t prog(const Vector& x) {
  for (Eigen::Index j = x.size(); j > 0; --j)
    if (x(j - 1) != 0.0) return static_cast<std::size_t>(j);
  return 0;
}

/// Nodes in the first third hold L lambda^2 h1(x/lambda)/L0, nodes in the last
/// third hold the h2 analogue, and the middle third holds zero, so that
/// f = 2 L lambda^2 h(x/lambda) / (3 L0).
class HardInstanceOracle final : public GradientOracle {
 public:
  enum class Role { kFirst, kMiddle, kLast };

  HardInstanceOracle(std::size_t n, std::size_t d, double smoothness, double lambda)
      : n_(n), d_(d), smoothness_(smoothness), lambda_(lambda) {
    if (n == 0 || n % 3 != 0) throw InvalidArgument("hard instance: n must be a positive multiple of 3");
    if (d < 2) throw InvalidArgument("hard instance: d must be >= 2");
    if (!(lambda > 0.0) || !(smoothness > 0.0)) throw InvalidArgument("hard instance: L and lambda must be > 0");
  }

  std::size_t nodes() const override { return n_; }
  std::size_t dim() const override { return d_; }

  Role role(std::size_t node) const {
    if (node < n_ / 3) return Role::kFirst;
    if (node >= 2 * n_ / 3) return Role::kLast;
    return Role::kMiddle;
  }

  Vector exact_gradient(std::size_t node, const Vector& x) const override {
    check_call(node, x);
    const Vector u = x / lambda_;
    const double c = smoothness_ * lambda_ / hard::kSmoothness;
    switch (role(node)) {
      case Role::kFirst: return c * hard::grad_h1(u);
      case Role::kLast: return c * hard::grad_h2(u);
      case Role::kMiddle: break;
    }
    return Vector::Zero(x.size());
  }

  Vector stochastic_gradient(std::size_t node, const Vector& x, Rng&) const override {
    return exact_gradient(node, x);
  }

  std::optional<double> local_objective(std::size_t node, const Vector& x) const override {
    check_call(node, x);
    const Vector u = x / lambda_;
    const double c = smoothness_ * lambda_ * lambda_ / hard::kSmoothness;
    switch (role(node)) {
      case Role::kFirst: return c * hard::h1(u);
      case Role::kLast: return c * hard::h2(u);
      case Role::kMiddle: break;
    }
    return 0.0;
  }

  double lambda() const { return lambda_; }
  double smoothness() const { return smoothness_; }

 private:
  std::size_t n_, d_;
  double smoothness_, lambda_;
};

/// The instance is deterministic; the seed is accepted for interface symmetry.
inline std::shared_ptr<const HardInstanceOracle> make_hard_instance(std::size_t n, std::size_t d, double smoothness,
                                                                    double lambda, std::uint64_t /*seed*/ = 0) {
  return std::make_shared<const HardInstanceOracle>(n, d, smoothness, lambda);
}

// ---------------------------------------------------------------------------
// Additive Gaussian noise

/// Adds N(0, sigma^2/d I) to every stochastic gradient, so the trace of the
/// added covariance is sigma^2.
class NoisyOracle final : public GradientOracle {
 public:
  NoisyOracle(OraclePtr inner, double sigma) : inner_(std::move(inner)), sigma_(sigma) {
    if (!inner_) throw InvalidArgument("noisy: null oracle");
    if (!(sigma >= 0.0)) throw InvalidArgument("noisy: sigma must be >= 0");
  }

  std::size_t nodes() const override { return inner_->nodes(); }
  std::size_t dim() const override { return inner_->dim(); }
  double sigma() const override { return sigma_; }

  Vector exact_gradient(std::size_t node, const Vector& x) const override { return inner_->exact_gradient(node, x); }

  Vector stochastic_gradient(std::size_t node, const Vector& x, Rng& rng) const override {
    Vector g = inner_->stochastic_gradient(node, x, rng);
    if (sigma_ == 0.0) return g;
    std::normal_distribution<double> normal(0.0, sigma_ / std::sqrt(static_cast<double>(dim())));
    for (Eigen::Index j = 0; j < g.size(); ++j) g(j) += normal(rng);
    return g;
  }

  std::optional<double> local_objective(std::size_t node, const Vector& x) const override {
    return inner_->local_objective(node, x);
  }

  const OraclePtr& inner() const { return inner_; }

 private:
  OraclePtr inner_;
  double sigma_;
};

inline OraclePtr noisy(OraclePtr inner, double sigma) {
  return std::make_shared<const NoisyOracle>(std::move(inner), sigma);
}

}  // namespace rowgossip
