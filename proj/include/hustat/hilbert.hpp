#pragma once

// Finite-dimensional model of a separable Hilbert space: R^d with the
// Euclidean inner product, covariance operators and Gaussian / Brownian
// sampling.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hustat/rng.hpp"

namespace hustat {

using HPoint = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct InnerAndNorm {
  double inner;
  double norm;
};

inline InnerAndNorm inner_and_norm(const HPoint& x, const HPoint& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("inner_and_norm: dimension mismatch (" + std::to_string(x.size()) +
                                " vs " + std::to_string(y.size()) + ")");
  return {x.dot(y), x.norm()};
}

inline bool all_finite(const HPoint& x) { return x.allFinite(); }

/// Symmetric positive semidefinite operator on R^d. Negative eigenvalues down
/// to the PSD tolerance are clipped to zero; the clipped mass is kept.
class CovOperator {
 public:
  static constexpr double kSymmetryTol = 1e-10;
  static constexpr double kPsdTol = 1e-8;

  explicit CovOperator(Matrix matrix, bool allow_indefinite = false) : matrix_(std::move(matrix)) {
    if (matrix_.rows() != matrix_.cols() || matrix_.rows() == 0)
      throw std::invalid_argument("CovOperator: matrix must be square and non-empty");
    if (!matrix_.allFinite()) throw std::invalid_argument("CovOperator: non-finite entry");
    const double scale = std::max(1.0, matrix_.cwiseAbs().maxCoeff());
    if ((matrix_ - matrix_.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale)
      throw std::invalid_argument("CovOperator: matrix is not symmetric");
    matrix_ = 0.5 * (matrix_ + matrix_.transpose());

    Eigen::SelfAdjointEigenSolver<Matrix> eig(matrix_);
    Eigen::VectorXd values = eig.eigenvalues();
    if (!allow_indefinite && values.minCoeff() < -kPsdTol * scale)
      throw std::invalid_argument("CovOperator: matrix is not positive semidefinite");
    clipped_mass_ = 0.0;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (values(i) < 0.0) {
        clipped_mass_ += -values(i);
        values(i) = 0.0;
      }
    }
    eigenvalues_ = values;
    // Square-root factor: gamma = factor * factor^T.
    factor_ = eig.eigenvectors() * values.cwiseSqrt().asDiagonal();
    if (clipped_mass_ > 0.0) matrix_ = factor_ * factor_.transpose();
  }

  static CovOperator identity(Eigen::Index d) { return CovOperator(Matrix::Identity(d, d)); }
  static CovOperator zero(Eigen::Index d) { return CovOperator(Matrix::Zero(d, d)); }

  Eigen::Index dim() const { return matrix_.rows(); }
  const Matrix& matrix() const { return matrix_; }
  const Matrix& factor() const { return factor_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  double clipped_mass() const { return clipped_mass_; }
  double trace() const { return matrix_.trace(); }
  double quadratic(const HPoint& u) const { return u.dot(matrix_ * u); }

 private:
  Matrix matrix_;
  Matrix factor_;
  Eigen::VectorXd eigenvalues_;
  double clipped_mass_ = 0.0;
};

/// Draw from the centered Gaussian law on R^d with covariance `gamma`.
inline HPoint sample_gaussian(const CovOperator& gamma, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  HPoint z(gamma.dim());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return gamma.factor() * z;
}

/// Brownian path W_gamma evaluated on `grid` (0 = t_0 < ... < t_m = 1).
inline std::vector<HPoint> sample_brownian_path(const CovOperator& gamma,
                                                std::span<const double> grid, Rng& rng) {
  if (grid.size() < 2 || grid.front() != 0.0 || grid.back() != 1.0)
    throw std::invalid_argument("sample_brownian_path: grid must start at 0 and end at 1");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw std::invalid_argument("sample_brownian_path: grid must be strictly increasing");

  std::vector<HPoint> path;
  path.reserve(grid.size());
  path.push_back(HPoint::Zero(gamma.dim()));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double dt = grid[i] - grid[i - 1];
    path.push_back(path.back() + std::sqrt(dt) * sample_gaussian(gamma, rng));
  }
  return path;
}

}  // namespace hustat
