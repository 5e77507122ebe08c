#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bdec/gaussian.hpp"
#include "bdec/random.hpp"

namespace bdec {

namespace special {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

inline double log_normal_pdf(double z) { return -0.5 * z * z - 0.5 * kLog2Pi; }

/// log Phi(z), accurate far into the lower tail.
inline double log_normal_cdf(double z) {
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z * kInvSqrt2));
  if (z > -20.0) return std::log(0.5 * std::erfc(-z * kInvSqrt2));
  // Asymptotic Mills-ratio series; truncation error ~ 945 / z^10.
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) +
                        105.0 / (z2 * z2 * z2 * z2);
  return log_normal_pdf(z) - std::log(-z) + std::log(series);
}

/// phi(z) / Phi(z).
inline double inverse_mills(double z) { return std::exp(log_normal_pdf(z) - log_normal_cdf(z)); }

}  // namespace special

/// Central differences of a scalar function, step scale * (1 + |x_j|).
template <class F>
Vector finite_difference_gradient(F&& f, const Vector& x, double scale = 1e-5) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double step = scale * (1.0 + std::abs(x(j)));
    probe(j) = x(j) + step;
    const double up = f(probe);
    probe(j) = x(j) - step;
    const double down = f(probe);
    probe(j) = x(j);
    g(j) = (up - down) / (2.0 * step);
  }
  return g;
}

/// Central differences of a vector gradient, symmetrized as (H + H^T) / 2.
template <class G>
Matrix finite_difference_jacobian_sym(G&& grad, const Vector& x, double scale = 1e-4) {
  const auto d = x.size();
  Matrix h(d, d);
  Vector probe = x;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double step = scale * (1.0 + std::abs(x(j)));
    probe(j) = x(j) + step;
    const Vector up = grad(probe);
    probe(j) = x(j) - step;
    const Vector down = grad(probe);
    probe(j) = x(j);
    h.col(j) = (up - down) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

/// Unnormalized log-density with derivative access. Implementations must be
/// pure functions of their parameters and x, so concurrent calls are safe.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;

  virtual Eigen::Index dimension() const = 0;
  virtual std::string name() const = 0;

  /// log pi(x) up to a constant fixed per instance; -inf outside the support.
  virtual double log_density(const Vector& x) const = 0;

  virtual Vector grad_log_density(const Vector& x) const {
    return finite_difference_gradient([this](const Vector& p) { return log_density(p); }, x);
  }

  virtual Matrix hessian_log_density(const Vector& x) const {
    return finite_difference_jacobian_sym(
        [this](const Vector& p) { return grad_log_density(p); }, x);
  }

  /// Exact sampling from pi, for targets where it is available (diagnostics
  /// such as the exploration rate need it).
  virtual bool has_exact_sampler() const { return false; }
  virtual Vector sample_exact(RandomStream&) const {
    throw std::logic_error(name() + ": no exact sampler");
  }

  /// Normalized closed-form log-density of one coordinate's marginal.
  virtual bool has_marginal() const { return false; }
  virtual double marginal_log_density(Eigen::Index /*coordinate*/, double /*u*/) const {
    throw std::logic_error(name() + ": no closed-form marginal");
  }
};

inline double log_density(const TargetDensity& t, const Vector& x) { return t.log_density(x); }
inline Vector grad_log_density(const TargetDensity& t, const Vector& x) {
  return t.grad_log_density(x);
}
inline Matrix hessian_log_density(const TargetDensity& t, const Vector& x) {
  return t.hessian_log_density(x);
}

/// pi_beta: log pi_beta = beta * log pi. Shares the modes of the base target.
class TemperedTarget final : public TargetDensity {
 public:
  TemperedTarget(const TargetDensity& base, double beta) : base_(base), beta_(beta) {}

  Eigen::Index dimension() const override { return base_.dimension(); }
  std::string name() const override { return base_.name() + "^beta"; }
  double log_density(const Vector& x) const override { return beta_ * base_.log_density(x); }
  Vector grad_log_density(const Vector& x) const override {
    return beta_ * base_.grad_log_density(x);
  }
  Matrix hessian_log_density(const Vector& x) const override {
    return beta_ * base_.hessian_log_density(x);
  }

 private:
  const TargetDensity& base_;
  double beta_;
};

/// N(mu, Sigma) with the constant chosen so that log pi(mu) = 0.
class GaussianTarget final : public TargetDensity {
 public:
  GaussianTarget(Vector mean, const Matrix& covariance)
      : mean_(std::move(mean)), chol_(cholesky(covariance)), precision_(chol_.inverse()) {}

  static GaussianTarget standard(Eigen::Index d) {
    return GaussianTarget(Vector::Zero(d), Matrix::Identity(d, d));
  }

  Eigen::Index dimension() const override { return mean_.size(); }
  std::string name() const override { return "gaussian-test"; }
  double log_density(const Vector& x) const override {
    return -0.5 * chol_.mahalanobis_sq(x - mean_);
  }
  Vector grad_log_density(const Vector& x) const override { return -precision_ * (x - mean_); }
  Matrix hessian_log_density(const Vector&) const override { return -precision_; }

  bool has_exact_sampler() const override { return true; }
  Vector sample_exact(RandomStream& rng) const override { return mvn_sample(rng, mean_, chol_); }

  bool has_marginal() const override { return true; }
  double marginal_log_density(Eigen::Index c, double u) const override {
    const Matrix cov = chol_.covariance();
    const double var = cov(c, c);
    const double z = u - mean_(c);
    return -0.5 * z * z / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
  }

  const Vector& mean() const { return mean_; }

 private:
  Vector mean_;
  CholeskyFactor chol_;
  Matrix precision_;
};

/// Normalized Gaussian mixture density with analytic derivatives.
class GaussianMixtureTarget final : public TargetDensity {
 public:
  explicit GaussianMixtureTarget(GaussianMixture mixture, std::string name = "gmm")
      : mixture_(std::move(mixture)), name_(std::move(name)) {
    if (mixture_.empty()) throw EmptyMixture();
    for (const auto& c : mixture_.components()) precisions_.push_back(c.chol.inverse());
  }

  Eigen::Index dimension() const override { return mixture_.dimension(); }
  std::string name() const override { return name_; }
  double log_density(const Vector& x) const override { return mixture_.log_pdf(x); }

  Vector grad_log_density(const Vector& x) const override {
    Vector g = Vector::Zero(x.size());
    const auto resp = responsibilities(x);
    for (std::size_t i = 0; i < resp.size(); ++i) {
      if (resp[i] == 0.0) continue;
      g -= resp[i] * (precisions_[i] * (x - mixture_.components()[i].mean));
    }
    return g;
  }

  Matrix hessian_log_density(const Vector& x) const override {
    const auto d = x.size();
    Matrix h = Matrix::Zero(d, d);
    Vector g = Vector::Zero(d);
    const auto resp = responsibilities(x);
    for (std::size_t i = 0; i < resp.size(); ++i) {
      if (resp[i] == 0.0) continue;
      const Vector gi = -(precisions_[i] * (x - mixture_.components()[i].mean));
      h += resp[i] * (gi * gi.transpose() - precisions_[i]);
      g += resp[i] * gi;
    }
    h -= g * g.transpose();
    return 0.5 * (h + h.transpose());
  }

  bool has_exact_sampler() const override { return true; }
  Vector sample_exact(RandomStream& rng) const override { return mixture_.sample(rng); }

  bool has_marginal() const override { return true; }
  double marginal_log_density(Eigen::Index c, double u) const override {
    std::vector<double> terms;
    for (std::size_t i = 0; i < mixture_.size(); ++i) {
      const auto& comp = mixture_.components()[i];
      const Matrix cov = comp.chol.covariance();
      const double var = cov(c, c);
      const double z = u - comp.mean(c);
      terms.push_back(std::log(mixture_.weights()[i]) - 0.5 * z * z / var -
                      0.5 * std::log(2.0 * std::numbers::pi * var));
    }
    return log_sum_exp(terms);
  }

  const GaussianMixture& mixture() const { return mixture_; }

 private:
  std::vector<double> responsibilities(const Vector& x) const {
    const auto& comps = mixture_.components();
    std::vector<double> terms(comps.size());
    for (std::size_t i = 0; i < comps.size(); ++i) {
      const double w = mixture_.weights()[i];
      terms[i] = w > 0.0 ? std::log(w) + mvn_logpdf(x, comps[i].mean, comps[i].chol) : kNegInf;
    }
    const double total = log_sum_exp(terms);
    for (double& t : terms) t = std::exp(t - total);
    return terms;
  }

  GaussianMixture mixture_;
  std::vector<Matrix> precisions_;
  std::string name_;
};

/// Two-parameter seemingly-unrelated-regression posterior,
/// log pi(x) = -(n/2) log det Sigma(x), with Sigma(x) a 2x2 matrix quadratic
/// in x. -inf where Sigma(x) is not positive definite.
class SurTarget final : public TargetDensity {
 public:
  explicit SurTarget(double sample_size = 1.0) : n_(sample_size) {}

  Eigen::Index dimension() const override { return 2; }
  std::string name() const override { return "sur2d"; }

  double log_density(const Vector& x) const override {
    const auto e = entries(x);
    const double det = e.a * e.c - e.b * e.b;
    if (!(e.a > 0.0) || !(det > 0.0)) return kNegInf;
    return -0.5 * n_ * std::log(det);
  }

  Vector grad_log_density(const Vector& x) const override {
    const auto e = entries(x);
    const double det = e.a * e.c - e.b * e.b;
    Vector g(2);
    if (!(e.a > 0.0) || !(det > 0.0)) {
      g.setConstant(std::numeric_limits<double>::quiet_NaN());
      return g;
    }
    g(0) = -0.5 * n_ * (e.a1 * e.c - 2.0 * e.b * e.b1) / det;
    g(1) = -0.5 * n_ * (e.a * e.c2 - 2.0 * e.b * e.b2) / det;
    return g;
  }

  Matrix hessian_log_density(const Vector& x) const override {
    const auto e = entries(x);
    const double det = e.a * e.c - e.b * e.b;
    Matrix h(2, 2);
    if (!(e.a > 0.0) || !(det > 0.0)) {
      h.setConstant(std::numeric_limits<double>::quiet_NaN());
      return h;
    }
    const double d1 = e.a1 * e.c - 2.0 * e.b * e.b1;
    const double d2 = e.a * e.c2 - 2.0 * e.b * e.b2;
    const double d11 = 2.0 * kA2 * e.c - 2.0 * e.b1 * e.b1;
    const double d22 = 2.0 * kC2 * e.a - 2.0 * e.b2 * e.b2;
    const double d12 = e.a1 * e.c2 - 2.0 * (e.b2 * e.b1 + e.b * kB12);
    h(0, 0) = d11 / det - d1 * d1 / (det * det);
    h(1, 1) = d22 / det - d2 * d2 / (det * det);
    h(0, 1) = h(1, 0) = d12 / det - d1 * d2 / (det * det);
    return -0.5 * n_ * h;
  }

  /// Sigma(x) itself.
  Matrix covariance_at(const Vector& x) const {
    const auto e = entries(x);
    Matrix s(2, 2);
    s << e.a, e.b, e.b, e.c;
    return s;
  }

  double sample_size() const { return n_; }

 private:
  static constexpr double kA2 = 7.70, kA1 = -19.27, kA0 = 21.09;
  static constexpr double kC2 = 27.31, kC1 = -97.40, kC0 = 114.19;
  static constexpr double kB12 = -5.11, kB1 = -3.42, kB2 = -3.51, kB0 = 23.52;

  struct Entries {
    double a, c, b;
    double a1, c2, b1, b2;
  };

  static Entries entries(const Vector& x) {
    const double x1 = x(0), x2 = x(1);
    return Entries{
        .a = kA2 * x1 * x1 + kA1 * x1 + kA0,
        .c = kC2 * x2 * x2 + kC1 * x2 + kC0,
        .b = kB12 * x1 * x2 + kB1 * x1 + kB2 * x2 + kB0,
        .a1 = 2.0 * kA2 * x1 + kA1,
        .c2 = 2.0 * kC2 * x2 + kC1,
        .b1 = kB12 * x2 + kB1,
        .b2 = kB12 * x1 + kB2,
    };
  }

  double n_;
};

/// Equal-weight mixture of product skew-normal components. Component k has
/// per-coordinate density (2/w_k) phi(u) Phi(alpha u), u = (x_j - m_kj) / w_k.
class SkewNormalMixtureTarget final : public TargetDensity {
 public:
  SkewNormalMixtureTarget(std::vector<Vector> locations, std::vector<double> scales,
                          double alpha, std::string name = "skew-mixture")
      : locations_(std::move(locations)), scales_(std::move(scales)), alpha_(alpha),
        name_(std::move(name)) {
    if (locations_.empty() || locations_.size() != scales_.size()) {
      throw std::invalid_argument("skew mixture: need matching, non-empty locations and scales");
    }
    log_weight_ = -std::log(static_cast<double>(locations_.size()));
  }

  Eigen::Index dimension() const override { return locations_.front().size(); }
  std::string name() const override { return name_; }

  double log_density(const Vector& x) const override {
    std::vector<double> terms(locations_.size());
    for (std::size_t k = 0; k < locations_.size(); ++k) terms[k] = log_weight_ + component_log(k, x);
    return log_sum_exp(terms);
  }

  Vector grad_log_density(const Vector& x) const override {
    const auto resp = responsibilities(x);
    Vector g = Vector::Zero(x.size());
    for (std::size_t k = 0; k < resp.size(); ++k) {
      if (resp[k] == 0.0) continue;
      g += resp[k] * component_grad(k, x);
    }
    return g;
  }

  Matrix hessian_log_density(const Vector& x) const override {
    const auto d = x.size();
    const auto resp = responsibilities(x);
    Matrix h = Matrix::Zero(d, d);
    Vector g = Vector::Zero(d);
    for (std::size_t k = 0; k < resp.size(); ++k) {
      if (resp[k] == 0.0) continue;
      const Vector gk = component_grad(k, x);
      const double w = scales_[k];
      for (Eigen::Index j = 0; j < d; ++j) {
        const double z = alpha_ * (x(j) - locations_[k](j)) / w;
        const double lambda = special::inverse_mills(z);
        const double lambda_prime = -lambda * (z + lambda);
        h(j, j) += resp[k] * (-1.0 + alpha_ * alpha_ * lambda_prime) / (w * w);
      }
      h += resp[k] * gk * gk.transpose();
      g += resp[k] * gk;
    }
    h -= g * g.transpose();
    return 0.5 * (h + h.transpose());
  }

  bool has_exact_sampler() const override { return true; }
  Vector sample_exact(RandomStream& rng) const override {
    const std::size_t k = rng.below(locations_.size());
    const double delta = alpha_ / std::sqrt(1.0 + alpha_ * alpha_);
    const double rest = std::sqrt(1.0 - delta * delta);
    Vector x(dimension());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double u0 = rng.gaussian();
      const double u1 = rng.gaussian();
      x(j) = locations_[k](j) + scales_[k] * (delta * std::abs(u0) + rest * u1);
    }
    return x;
  }

  bool has_marginal() const override { return true; }
  double marginal_log_density(Eigen::Index c, double u) const override {
    std::vector<double> terms(locations_.size());
    for (std::size_t k = 0; k < locations_.size(); ++k) {
      terms[k] = log_weight_ + coordinate_log(k, c, u);
    }
    return log_sum_exp(terms);
  }

  const std::vector<Vector>& locations() const { return locations_; }
  const std::vector<double>& scales() const { return scales_; }
  double alpha() const { return alpha_; }

 private:
  double coordinate_log(std::size_t k, Eigen::Index j, double value) const {
    const double w = scales_[k];
    const double u = (value - locations_[k](j)) / w;
    return std::numbers::ln2 - std::log(w) + special::log_normal_pdf(u) +
           special::log_normal_cdf(alpha_ * u);
  }

  double component_log(std::size_t k, const Vector& x) const {
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) total += coordinate_log(k, j, x(j));
    return total;
  }

  Vector component_grad(std::size_t k, const Vector& x) const {
    const double w = scales_[k];
    Vector g(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double u = (x(j) - locations_[k](j)) / w;
      g(j) = (-u + alpha_ * special::inverse_mills(alpha_ * u)) / w;
    }
    return g;
  }

  std::vector<double> responsibilities(const Vector& x) const {
    std::vector<double> terms(locations_.size());
    for (std::size_t k = 0; k < locations_.size(); ++k) terms[k] = component_log(k, x);
    const double total = log_sum_exp(terms);
    for (double& t : terms) t = std::exp(t - total);
    return terms;
  }

  std::vector<Vector> locations_;
  std::vector<double> scales_;
  double alpha_;
  double log_weight_ = 0.0;
  std::string name_;
};

/// The four-component 2D mixture with heterogeneous, axis-aligned covariances.
namespace example1 {

inline std::vector<Vector> means() {
  return {Vector{{0.0, 8.0}}, Vector{{0.0, 2.0}}, Vector{{-3.0, 5.0}}, Vector{{3.0, 5.0}}};
}

inline std::vector<Matrix> covariances() {
  const Matrix wide = Vector{{1.2, 0.01}}.asDiagonal();
  const Matrix tall = Vector{{0.01, 2.0}}.asDiagonal();
  return {wide, wide, tall, tall};
}

inline Vector initial_mean() { return Vector{{0.0, 8.0}}; }
inline Matrix initial_covariance() { return Vector{{0.3, 0.01}}.asDiagonal(); }

inline GaussianMixture mixture() {
  std::vector<GaussianMixture::Component> comps;
  const auto mu = means();
  const auto cov = covariances();
  for (std::size_t i = 0; i < mu.size(); ++i) comps.push_back({mu[i], cholesky(cov[i])});
  return GaussianMixture(std::move(comps), {0.25, 0.25, 0.25, 0.25});
}

inline GaussianMixtureTarget target() { return GaussianMixtureTarget(mixture(), "example1-gmm"); }

}  // namespace example1

namespace sur {

inline std::vector<Vector> reported_modes() { return {Vector{{0.78, 1.54}}, Vector{{2.76, 2.50}}}; }
inline Vector initial_point() { return Vector{{1.25, 1.78}}; }

}  // namespace sur

/// The 20-dimensional four-component skew-normal product mixture.
namespace skew20d {

inline constexpr Eigen::Index kDimension = 20;
inline constexpr double kAlpha = 10.0;

inline std::vector<Vector> locations() {
  Vector m1 = Vector::Constant(kDimension, 20.0);
  Vector m3(kDimension);
  m3.head(kDimension / 2).setConstant(-10.0);
  m3.tail(kDimension / 2).setConstant(10.0);
  return {m1, -m1, m3, -m3};
}

inline std::vector<double> scales() { return {1.0, 1.0, 2.0, 2.0}; }

inline SkewNormalMixtureTarget target() {
  return SkewNormalMixtureTarget(locations(), scales(), kAlpha, "skew20d");
}

}  // namespace skew20d

}  // namespace bdec
