#pragma once

// Strictly stationary generators with exact mixing coefficients, and the
// Berbee maximal coupling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hustat/hilbert.hpp"
#include "hustat/kernels.hpp"
#include "hustat/rng.hpp"

namespace hustat {

/// Sample path indexed by consecutive integers first, first+1, ..., which may
/// be non-positive for two-sided samples.
template <class S>
struct IndexedPath {
  long first = 1;
  std::vector<S> values;

  long last() const { return first + static_cast<long>(values.size()) - 1; }
  bool contains(long i) const { return i >= first && i <= last(); }

  const S& at(long i) const {
    if (!contains(i))
      throw std::out_of_range("path index " + std::to_string(i) + " outside [" + std::to_string(first) +
                              ", " + std::to_string(last()) + "]");
    return values[static_cast<std::size_t>(i - first)];
  }

  /// X_1, ..., X_n as a contiguous view.
  std::span<const S> one_based(std::size_t n) const {
    if (!contains(1) || !contains(static_cast<long>(n)))
      throw std::out_of_range("path does not cover indices 1.." + std::to_string(n));
    return std::span<const S>(values).subspan(static_cast<std::size_t>(1 - first), n);
  }
};

// -----------------------------------------------------------------------------
// Mixing coefficients of finite chains
// -----------------------------------------------------------------------------

namespace detail {

inline void check_chain(const Matrix& p, const Eigen::VectorXd& pi) {
  if (p.rows() == 0 || p.rows() != p.cols()) throw std::invalid_argument("transition matrix must be square");
  if (pi.size() != p.rows()) throw std::invalid_argument("stationary law has wrong size");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (p.row(i).minCoeff() < 0.0) throw std::invalid_argument("transition matrix has a negative entry");
    if (std::abs(p.row(i).sum() - 1.0) > 1e-12)
      throw std::invalid_argument("transition matrix is not row-stochastic");
  }
  if (pi.minCoeff() < 0.0 || std::abs(pi.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("stationary law is not a probability vector");
  if ((pi.transpose() * p - pi.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("law is not stationary for the transition matrix");
}

inline Matrix matrix_power(const Matrix& p, long k) {
  Matrix result = Matrix::Identity(p.rows(), p.cols());
  Matrix base = p;
  while (k > 0) {
    if (k & 1) result = result * base;
    base = base * base;
    k >>= 1;
  }
  return result;
}

}  // namespace detail

/// beta(sigma(X_0), sigma(X_k)) = 1/2 sum_i pi_i sum_j |P^k(i,j) - pi_j|.
/// For a finite pair law the finest partitions attain the supremum.
inline double beta_pair_exact(const Matrix& p, const Eigen::VectorXd& pi, long k) {
  detail::check_chain(p, pi);
  if (k < 1) throw std::invalid_argument("beta_pair_exact: k must be >= 1");
  const Matrix pk = detail::matrix_power(p, k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) total += pi(i) * std::abs(pk(i, j) - pi(j));
  return 0.5 * total;
}

/// Exhaustive-search limit for alpha_pair_exact.
inline constexpr int kAlphaMaxStates = 12;

/// alpha(sigma(X_0), sigma(X_k)) by enumeration of the events {X_0 in A}.
/// For fixed A the best B collects the states where the covariance has one sign.
inline double alpha_pair_exact(const Matrix& p, const Eigen::VectorXd& pi, long k) {
  detail::check_chain(p, pi);
  if (k < 1) throw std::invalid_argument("alpha_pair_exact: k must be >= 1");
  const int s = static_cast<int>(p.rows());
  if (s > kAlphaMaxStates)
    throw std::invalid_argument("alpha_pair_exact: " + std::to_string(s) + " states exceed the exhaustive limit of " +
                                std::to_string(kAlphaMaxStates));
  const Matrix pk = detail::matrix_power(p, k);
  Matrix joint = pi.asDiagonal() * pk;
  Eigen::VectorXd col_law = joint.colwise().sum().transpose();
  double best = 0.0;
  Eigen::VectorXd diff(s);
  for (std::uint32_t mask = 1; mask < (1u << s); ++mask) {
    diff.setZero();
    double pa = 0.0;
    for (int i = 0; i < s; ++i)
      if (mask & (1u << i)) {
        diff += joint.row(i).transpose();
        pa += pi(i);
      }
    diff -= pa * col_law;
    double pos = 0.0, neg = 0.0;
    for (int j = 0; j < s; ++j) (diff(j) > 0 ? pos : neg) += diff(j);
    best = std::max({best, pos, -neg});
  }
  return best;
}

/// beta between the coordinates of a finite joint table: sum_x p(x) TV(p(.|x), p_Y).
inline double beta_of_joint(const Matrix& joint) {
  const Eigen::VectorXd px = joint.rowwise().sum();
  const Eigen::RowVectorXd py = joint.colwise().sum();
  double total = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i)
    for (Eigen::Index j = 0; j < joint.cols(); ++j) total += std::abs(joint(i, j) - px(i) * py(j));
  return 0.5 * total;
}

enum class Exactness { exact, upper_bound };

/// beta(k), alpha(k) for k = 1..K (index k-1).
struct MixingProfile {
  std::vector<double> beta;
  std::vector<double> alpha;
  Exactness exactness = Exactness::exact;

  double beta_at(long k) const {
    if (k < 1) throw std::invalid_argument("mixing profile: k must be >= 1");
    if (static_cast<std::size_t>(k) > beta.size()) return beta.empty() ? 1.0 : beta.back();
    return beta[static_cast<std::size_t>(k - 1)];
  }
};

// -----------------------------------------------------------------------------
// Models
// -----------------------------------------------------------------------------

/// Finite-state stationary Markov chain (i.i.d. when all rows equal the
/// stationary law). States are embedded into R^m through `embedding` (one row
/// per state).
class FiniteChain {
 public:
  static FiniteChain markov(Matrix transition, Matrix embedding = Matrix()) {
    return FiniteChain(transition, stationary_law(transition), std::move(embedding), false);
  }

  static FiniteChain markov(Matrix transition, Eigen::VectorXd pi, Matrix embedding = Matrix()) {
    return FiniteChain(std::move(transition), std::move(pi), std::move(embedding), false);
  }

  static FiniteChain iid(Eigen::VectorXd weights, Matrix embedding = Matrix()) {
    const Eigen::Index s = weights.size();
    Matrix p(s, s);
    for (Eigen::Index i = 0; i < s; ++i) p.row(i) = weights.transpose();
    return FiniteChain(std::move(p), std::move(weights), std::move(embedding), true);
  }

  /// Two-state chain with P(0->1) = a and P(1->0) = b, states embedded as 0, 1.
  static FiniteChain two_state(double a, double b) {
    Matrix p(2, 2);
    p << 1.0 - a, a, b, 1.0 - b;
    Eigen::VectorXd pi(2);
    pi << b / (a + b), a / (a + b);
    return markov(p, pi);
  }

  /// Left Perron vector of a stochastic matrix, normalized to sum 1.
  static Eigen::VectorXd stationary_law(const Matrix& p) {
    const Eigen::Index s = p.rows();
    if (s == 0 || p.cols() != s) throw std::invalid_argument("transition matrix must be square");
    Matrix a = p.transpose() - Matrix::Identity(s, s);
    a.row(s - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s);
    rhs(s - 1) = 1.0;
    Eigen::VectorXd pi = a.colPivHouseholderQr().solve(rhs);
    for (Eigen::Index i = 0; i < s; ++i)
      if (std::abs(pi(i)) < 1e-15) pi(i) = 0.0;
    return pi;
  }

  int states() const { return static_cast<int>(p_.rows()); }
  const Matrix& transition() const { return p_; }
  const Eigen::VectorXd& stationary() const { return pi_; }
  const Matrix& embedding() const { return embedding_; }
  bool is_iid() const { return iid_; }

  Matrix transition_power(long k) const { return detail::matrix_power(p_, k); }

  /// Embedded value of a state as an R^m point.
  HPoint embed(StateIndex s) const { return embedding_.row(s).transpose(); }

  /// First embedding coordinate of each state.
  std::vector<double> scalar_embedding() const {
    std::vector<double> v(static_cast<std::size_t>(states()));
    for (int s = 0; s < states(); ++s) v[static_cast<std::size_t>(s)] = embedding_(s, 0);
    return v;
  }

  std::vector<HPoint> vector_embedding() const {
    std::vector<HPoint> v;
    for (int s = 0; s < states(); ++s) v.push_back(embed(s));
    return v;
  }

  FiniteLaw<StateIndex> marginal_law() const {
    return state_law(std::vector<double>(pi_.data(), pi_.data() + pi_.size()));
  }

  StateIndex draw_stationary(Rng& rng) const {
    return sample_categorical(std::span<const double>(pi_.data(), static_cast<std::size_t>(pi_.size())), rng);
  }

  StateIndex step(StateIndex from, Rng& rng) const {
    return sample_categorical(std::span<const double>(rows_[static_cast<std::size_t>(from)]), rng);
  }

  /// X_1..X_n started from the stationary law.
  std::vector<StateIndex> simulate(std::size_t n, Rng& rng) const {
    if (n < 1) throw std::invalid_argument("simulate: n must be >= 1");
    std::vector<StateIndex> out(n);
    out[0] = draw_stationary(rng);
    for (std::size_t i = 1; i < n; ++i) out[i] = step(out[i - 1], rng);
    return out;
  }

  /// Stationary sample indexed first..last; indices below 1 model the past of a
  /// two-sided sequence.
  IndexedPath<StateIndex> simulate_indexed(long first, long last, Rng& rng) const {
    if (last < first) throw std::invalid_argument("simulate: empty index range");
    IndexedPath<StateIndex> path;
    path.first = first;
    path.values = simulate(static_cast<std::size_t>(last - first + 1), rng);
    return path;
  }

  double beta(long k) const { return beta_pair_exact(p_, pi_, k); }
  double alpha(long k) const { return alpha_pair_exact(p_, pi_, k); }

  /// Exact profile: by the Markov property the past/future coefficients reduce
  /// to those of the pair (X_0, X_k).
  MixingProfile mixing_profile(long max_lag) const {
    MixingProfile prof;
    prof.exactness = Exactness::exact;
    Matrix pk = p_;
    for (long k = 1; k <= max_lag; ++k) {
      double b = 0.0;
      for (Eigen::Index i = 0; i < p_.rows(); ++i)
        for (Eigen::Index j = 0; j < p_.cols(); ++j) b += pi_(i) * std::abs(pk(i, j) - pi_(j));
      prof.beta.push_back(0.5 * b);
      prof.alpha.push_back(states() <= kAlphaMaxStates ? alpha_pair_exact(p_, pi_, k) : std::min(0.25, 0.5 * b));
      pk = pk * p_;
    }
    return prof;
  }

  /// Modulus of the second largest eigenvalue of P (geometric mixing rate).
  double spectral_gap_rate() const {
    Eigen::EigenSolver<Matrix> es(p_);
    std::vector<double> mods;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mods.push_back(std::abs(es.eigenvalues()(i)));
    std::sort(mods.rbegin(), mods.rend());
    return mods.size() > 1 ? mods[1] : 0.0;
  }

 private:
  FiniteChain(Matrix p, Eigen::VectorXd pi, Matrix embedding, bool iid)
      : p_(std::move(p)), pi_(std::move(pi)), embedding_(std::move(embedding)), iid_(iid) {
    detail::check_chain(p_, pi_);
    if (embedding_.size() == 0) {
      embedding_.resize(p_.rows(), 1);
      for (Eigen::Index i = 0; i < p_.rows(); ++i) embedding_(i, 0) = static_cast<double>(i);
    }
    if (embedding_.rows() != p_.rows()) throw std::invalid_argument("embedding needs one row per state");
    rows_.resize(static_cast<std::size_t>(p_.rows()));
    for (Eigen::Index i = 0; i < p_.rows(); ++i)
      for (Eigen::Index j = 0; j < p_.cols(); ++j) rows_[static_cast<std::size_t>(i)].push_back(p_(i, j));
  }

  Matrix p_;
  Eigen::VectorXd pi_;
  Matrix embedding_;
  bool iid_;
  std::vector<std::vector<double>> rows_;
};

/// Gaussian AR(1): X_i = rho X_{i-1} + e_i, e_i ~ N(0, noise_variance).
class Ar1Gaussian {
 public:
  Ar1Gaussian(double rho, double noise_variance) : rho_(rho), noise_var_(noise_variance) {
    if (!(std::abs(rho_) < 1.0)) throw std::invalid_argument("AR(1) requires |rho| < 1");
    if (!(noise_var_ > 0.0)) throw std::invalid_argument("AR(1) requires positive noise variance");
  }

  double rho() const { return rho_; }
  double noise_variance() const { return noise_var_; }
  double stationary_variance() const { return noise_var_ / (1.0 - rho_ * rho_); }

  std::vector<double> simulate(std::size_t n, Rng& rng) const {
    if (n < 1) throw std::invalid_argument("simulate: n must be >= 1");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> out(n);
    out[0] = std::sqrt(stationary_variance()) * normal(rng);
    const double sd = std::sqrt(noise_var_);
    for (std::size_t i = 1; i < n; ++i) out[i] = rho_ * out[i - 1] + sd * normal(rng);
    return out;
  }

  IndexedPath<double> simulate_indexed(long first, long last, Rng& rng) const {
    if (last < first) throw std::invalid_argument("simulate: empty index range");
    return {first, simulate(static_cast<std::size_t>(last - first + 1), rng)};
  }

  /// Upper bound on beta(k): the conditional law of X_k given X_0 = x is
  /// N(rho^k x, (1 - rho^{2k}) v); averaging Pinsker's inequality with Jensen
  /// gives beta(k) <= sqrt(-log(1 - rho^{2k})) / 2.
  double beta_upper_bound(long k) const {
    const double r2k = std::pow(rho_ * rho_, static_cast<double>(k));
    if (r2k <= 0.0) return 0.0;
    return std::min(1.0, 0.5 * std::sqrt(-std::log1p(-r2k)));
  }

  MixingProfile mixing_profile(long max_lag) const {
    MixingProfile prof;
    prof.exactness = Exactness::upper_bound;
    for (long k = 1; k <= max_lag; ++k) {
      const double b = beta_upper_bound(k);
      prof.beta.push_back(b);
      prof.alpha.push_back(std::min(0.25, b));
    }
    return prof;
  }

 private:
  double rho_;
  double noise_var_;
};

using ProcessModel = std::variant<FiniteChain, Ar1Gaussian>;

// -----------------------------------------------------------------------------
// Berbee coupling
// -----------------------------------------------------------------------------

/// Given Y = y drawn from `conditional` (the law of Y given the conditioning
/// variable), returns Y* distributed as `target` and independent of the
/// conditioning variable, with P(Y* != Y) = TV(conditional, target).
inline int maximal_couple(std::span<const double> conditional, std::span<const double> target, int y,
                          Rng& rng) {
  if (conditional.size() != target.size()) throw std::invalid_argument("maximal_couple: size mismatch");
  const auto yi = static_cast<std::size_t>(y);
  const double keep = conditional[yi] > 0.0 ? std::min(1.0, target[yi] / conditional[yi]) : 0.0;
  if (uniform01(rng) < keep) return y;
  std::vector<double> residual(target.size());
  for (std::size_t j = 0; j < target.size(); ++j) residual[j] = std::max(0.0, target[j] - conditional[j]);
  return sample_categorical(residual, rng);
}

struct CoupledDraw {
  int x;
  int y;
  int y_star;
};

/// Sampler of (X, Y, Y*) from a finite joint table where Y* is independent of
/// X, has the law of Y, and P(Y != Y*) = beta(sigma(X), sigma(Y)).
class BerbeeCoupler {
 public:
  explicit BerbeeCoupler(Matrix joint) : joint_(std::move(joint)) {
    if (joint_.size() == 0) throw std::invalid_argument("BerbeeCoupler: empty table");
    if (joint_.minCoeff() < 0.0) throw std::invalid_argument("BerbeeCoupler: negative probability");
    if (std::abs(joint_.sum() - 1.0) > 1e-12) throw std::invalid_argument("BerbeeCoupler: table is not normalized");
    const Eigen::Index nx = joint_.rows(), ny = joint_.cols();
    flat_.assign(joint_.data(), joint_.data() + joint_.size());  // column-major
    px_.resize(static_cast<std::size_t>(nx));
    py_.assign(static_cast<std::size_t>(ny), 0.0);
    cond_.assign(static_cast<std::size_t>(nx), std::vector<double>(static_cast<std::size_t>(ny), 0.0));
    for (Eigen::Index i = 0; i < nx; ++i) {
      px_[static_cast<std::size_t>(i)] = joint_.row(i).sum();
      for (Eigen::Index j = 0; j < ny; ++j) {
        py_[static_cast<std::size_t>(j)] += joint_(i, j);
        if (px_[static_cast<std::size_t>(i)] > 0.0)
          cond_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = joint_(i, j) / px_[static_cast<std::size_t>(i)];
      }
    }
  }

  /// beta(sigma(X), sigma(Y)) of the table; equals P(Y != Y*).
  double mismatch_probability() const { return beta_of_joint(joint_); }
  const std::vector<double>& y_marginal() const { return py_; }
  const std::vector<double>& x_marginal() const { return px_; }

  CoupledDraw draw(Rng& rng) const {
    const int cell = sample_categorical(flat_, rng);
    const int x = cell % static_cast<int>(joint_.rows());
    const int y = cell / static_cast<int>(joint_.rows());
    return {x, y, couple(x, y, rng)};
  }

  int couple(int x, int y, Rng& rng) const { return maximal_couple(cond_[static_cast<std::size_t>(x)], py_, y, rng); }

 private:
  Matrix joint_;
  std::vector<double> flat_;
  std::vector<double> px_;
  std::vector<double> py_;
  std::vector<std::vector<double>> cond_;
};

// -----------------------------------------------------------------------------
// Blocks
// -----------------------------------------------------------------------------

/// V_{k,u} = (X_{2qu+k}, ..., X_{2qu+k+width-1}) for u = 0..u_count-1.
template <class S>
std::vector<std::vector<S>> block_vectors(const IndexedPath<S>& path, long q, long k, long u_count,
                                          long width = -1) {
  if (q < 1) throw std::invalid_argument("block_vectors: q must be >= 1");
  if (width < 0) width = q;
  std::vector<std::vector<S>> blocks;
  blocks.reserve(static_cast<std::size_t>(std::max(0L, u_count)));
  for (long u = 0; u < u_count; ++u) {
    const long start = 2 * q * u + k;
    std::vector<S> block;
    block.reserve(static_cast<std::size_t>(width));
    for (long a = 0; a < width; ++a) block.push_back(path.at(start + a));
    blocks.push_back(std::move(block));
  }
  return blocks;
}

}  // namespace hustat
