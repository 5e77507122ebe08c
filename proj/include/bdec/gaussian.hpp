#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bdec/random.hpp"

namespace bdec {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyMixture : public std::logic_error {
 public:
  EmptyMixture() : std::logic_error("Gaussian mixture has no components") {}
};

/// log(sum(exp(v))) with the maximum subtracted first. Returns -inf for an
/// empty input or when every term is -inf.
inline double log_sum_exp(std::span<const double> values) {
  double top = kNegInf;
  for (double v : values) top = std::max(top, v);
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - top);
  return top + std::log(sum);
}

/// Lower-triangular factor L of a covariance, L * L^T = sigma, with the
/// log-determinant cached.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;

  /// Factors a symmetric matrix (only the lower triangle is read). A pivot
  /// at or below 1e-12 * trace / d is treated as loss of definiteness.
  static CholeskyFactor factor(const Matrix& sigma) {
    const auto d = sigma.rows();
    if (d == 0 || sigma.cols() != d) {
      throw std::invalid_argument("cholesky: matrix must be square and non-empty");
    }
    const double trace = sigma.trace();
    if (!(trace > 0.0) || !std::isfinite(trace)) {
      throw NotPositiveDefinite("cholesky: non-positive trace");
    }
    const double tolerance = 1e-12 * trace / static_cast<double>(d);
    Matrix lower = Matrix::Zero(d, d);
    double log_det = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      double pivot = sigma(j, j);
      for (Eigen::Index k = 0; k < j; ++k) pivot -= lower(j, k) * lower(j, k);
      if (!(pivot > tolerance)) {
        throw NotPositiveDefinite("cholesky: pivot " + std::to_string(j) + " is " +
                                  std::to_string(pivot));
      }
      const double diag = std::sqrt(pivot);
      lower(j, j) = diag;
      log_det += 2.0 * std::log(diag);
      for (Eigen::Index i = j + 1; i < d; ++i) {
        double s = sigma(i, j);
        for (Eigen::Index k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
        lower(i, j) = s / diag;
      }
    }
    return CholeskyFactor(std::move(lower), log_det);
  }

  /// Wraps an already-lower-triangular matrix without checks. Used for
  /// degenerate test factors (e.g. L = 0).
  static CholeskyFactor from_lower(Matrix lower) {
    double log_det = 0.0;
    for (Eigen::Index j = 0; j < lower.rows(); ++j) log_det += 2.0 * std::log(lower(j, j));
    return CholeskyFactor(std::move(lower), log_det);
  }

  const Matrix& lower() const { return lower_; }
  double log_det() const { return log_det_; }
  Eigen::Index dimension() const { return lower_.rows(); }

  Matrix covariance() const { return lower_ * lower_.transpose(); }

  /// L^{-1} v.
  Vector whiten(const Vector& v) const {
    return lower_.triangularView<Eigen::Lower>().solve(v);
  }

  /// v^T Sigma^{-1} v.
  double mahalanobis_sq(const Vector& v) const { return whiten(v).squaredNorm(); }

  Matrix inverse() const {
    Matrix inv_lower = lower_.triangularView<Eigen::Lower>().solve(
        Matrix::Identity(lower_.rows(), lower_.cols()));
    return inv_lower.transpose() * inv_lower;
  }

 private:
  CholeskyFactor(Matrix lower, double log_det) : lower_(std::move(lower)), log_det_(log_det) {}

  Matrix lower_;
  double log_det_ = 0.0;
};

inline CholeskyFactor cholesky(const Matrix& sigma) { return CholeskyFactor::factor(sigma); }

inline double mvn_logpdf(const Vector& x, const Vector& mu, const CholeskyFactor& chol) {
  const double d = static_cast<double>(x.size());
  return -0.5 * d * kLog2Pi - 0.5 * chol.log_det() - 0.5 * chol.mahalanobis_sq(x - mu);
}

inline Vector standard_normal(RandomStream& rng, Eigen::Index d) {
  Vector eps(d);
  for (Eigen::Index j = 0; j < d; ++j) eps(j) = rng.gaussian();
  return eps;
}

inline Vector mvn_sample(RandomStream& rng, const Vector& mu, const CholeskyFactor& chol) {
  return mu + chol.lower().triangularView<Eigen::Lower>() * standard_normal(rng, mu.size());
}

/// Finite mixture of multivariate normals with normalized weights.
class GaussianMixture {
 public:
  struct Component {
    Vector mean;
    CholeskyFactor chol;
  };

  GaussianMixture() = default;

  /// Weights must be nonnegative and sum to 1 within 1e-9; they are
  /// renormalized exactly.
  GaussianMixture(std::vector<Component> components, std::vector<double> weights)
      : components_(std::move(components)), weights_(std::move(weights)) {
    if (components_.size() != weights_.size()) {
      throw std::invalid_argument("mixture: component and weight counts differ");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("mixture: weights must be finite and nonnegative");
      }
      total += w;
    }
    if (!components_.empty() && std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("mixture: weights must sum to 1");
    }
    for (std::size_t i = 1; i < components_.size(); ++i) {
      if (components_[i].mean.size() != components_[0].mean.size()) {
        throw std::invalid_argument("mixture: components differ in dimension");
      }
    }
    log_weights_.reserve(weights_.size());
    cumulative_.reserve(weights_.size());
    double running = 0.0;
    for (double& w : weights_) {
      w /= total;
      running += w;
      cumulative_.push_back(running);
      log_weights_.push_back(std::log(w));
    }
  }

  std::size_t size() const { return components_.size(); }
  bool empty() const { return components_.empty(); }
  Eigen::Index dimension() const { return empty() ? 0 : components_.front().mean.size(); }
  const std::vector<Component>& components() const { return components_; }
  const std::vector<double>& weights() const { return weights_; }

  double log_pdf(const Vector& x) const {
    if (empty()) throw EmptyMixture();
    std::vector<double> terms(components_.size());
    for (std::size_t i = 0; i < components_.size(); ++i) {
      terms[i] = weights_[i] > 0.0
                     ? log_weights_[i] + mvn_logpdf(x, components_[i].mean, components_[i].chol)
                     : kNegInf;
    }
    return log_sum_exp(terms);
  }

  /// Index of the component chosen by inverse CDF on the cached cumulative weights.
  std::size_t pick(double u) const {
    const double scaled = u * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), scaled);
    auto index = static_cast<std::size_t>(it - cumulative_.begin());
    index = std::min(index, components_.size() - 1);
    while (weights_[index] == 0.0 && index > 0) --index;
    return index;
  }

  Vector sample(RandomStream& rng) const {
    if (empty()) throw EmptyMixture();
    const auto& c = components_[pick(rng.uniform())];
    return mvn_sample(rng, c.mean, c.chol);
  }

 private:
  std::vector<Component> components_;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<double> cumulative_;
};

inline double mixture_logpdf(const GaussianMixture& gm, const Vector& x) { return gm.log_pdf(x); }
inline Vector mixture_sample(const GaussianMixture& gm, RandomStream& rng) { return gm.sample(rng); }

/// log of (1/N) sum_i K(x_i, x) for the isotropic Gaussian kernel of bandwidth h.
/// `points` holds one particle per column.
inline double kde_log_density(const Matrix& points, double h, const Vector& x) {
  const auto n = points.cols();
  const double d = static_cast<double>(points.rows());
  std::vector<double> terms(static_cast<std::size_t>(n));
  const double inv_two_h2 = 1.0 / (2.0 * h * h);
  for (Eigen::Index i = 0; i < n; ++i) {
    terms[static_cast<std::size_t>(i)] = -(points.col(i) - x).squaredNorm() * inv_two_h2;
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(n)) -
         0.5 * d * std::log(2.0 * std::numbers::pi * h * h);
}

}  // namespace bdec
