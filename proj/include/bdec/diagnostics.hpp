#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "bdec/gaussian.hpp"
#include "bdec/samplers.hpp"
#include "bdec/target.hpp"

namespace bdec {

class GridTooNarrow : public std::runtime_error {
 public:
  explicit GridTooNarrow(double mass)
      : std::runtime_error("quadrature grid holds only " + std::to_string(mass) +
                           " of the kernel density mass"),
        mass_(mass) {}
  double mass() const { return mass_; }

 private:
  double mass_;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// (1/N) sum_i f(x_i).
template <class F>
double estimate_expectation(const Ensemble& ens, F&& f) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < ens.size(); ++i) total += f(Vector(ens.positions.col(i)));
  return total / static_cast<double>(ens.size());
}

namespace detail {

inline double min_sq_distance_brute(const Matrix& points, const Vector& x) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    best = std::min(best, (points.col(i) - x).squaredNorm());
  }
  return best;
}

/// Uniform hash grid with cell size h for d <= 3; a ball of radius h around
/// a query only touches the 3^d neighbouring cells.
class CellIndex {
 public:
  using Key = std::array<std::int64_t, 3>;

  CellIndex(const Matrix& points, double h) : points_(points), h_(h) {
    for (Eigen::Index i = 0; i < points.cols(); ++i) cells_[key_of(points.col(i))].push_back(i);
  }

  bool any_within(const Vector& x) const {
    const Key centre = key_of(x);
    const double h2 = h_ * h_;
    const auto d = points_.rows();
    Key offset{0, 0, 0};
    const int span = 1;
    // Enumerate the 3^d neighbour offsets.
    const int total = d == 1 ? 3 : d == 2 ? 9 : 27;
    for (int code = 0; code < total; ++code) {
      int c = code;
      for (Eigen::Index k = 0; k < 3; ++k) {
        if (k < d) {
          offset[static_cast<std::size_t>(k)] = (c % 3) - span;
          c /= 3;
        } else {
          offset[static_cast<std::size_t>(k)] = 0;
        }
      }
      Key probe = centre;
      for (std::size_t k = 0; k < 3; ++k) probe[k] += offset[k];
      auto it = cells_.find(probe);
      if (it == cells_.end()) continue;
      for (Eigen::Index i : it->second) {
        if ((points_.col(i) - x).squaredNorm() <= h2) return true;
      }
    }
    return false;
  }

 private:
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t h = 1469598103934665603ULL;
      for (auto v : k) {
        h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      }
      return static_cast<std::size_t>(h);
    }
  };

  template <class V>
  Key key_of(const V& x) const {
    Key k{0, 0, 0};
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      k[static_cast<std::size_t>(j)] = static_cast<std::int64_t>(std::floor(x(j) / h_));
    }
    return k;
  }

  const Matrix& points_;
  double h_;
  std::unordered_map<Key, std::vector<Eigen::Index>, KeyHash> cells_;
};

}  // namespace detail

/// Fraction of reference samples (drawn from pi, one per column) that lie
/// within Euclidean distance h of at least one particle.
inline double estimate_Z(const Ensemble& ens, const Matrix& references, double h) {
  if (references.cols() < 1) throw std::invalid_argument("estimate_Z: need reference samples");
  std::size_t covered = 0;
  if (ens.dimension() <= 3) {
    const detail::CellIndex index(ens.positions, h);
    for (Eigen::Index k = 0; k < references.cols(); ++k) {
      if (index.any_within(references.col(k))) ++covered;
    }
  } else {
    const double h2 = h * h;
    for (Eigen::Index k = 0; k < references.cols(); ++k) {
      if (detail::min_sq_distance_brute(ens.positions, references.col(k)) <= h2) ++covered;
    }
  }
  return static_cast<double>(covered) / static_cast<double>(references.cols());
}

/// Brute-force version of estimate_Z, independent of the hash grid.
inline double estimate_Z_brute_force(const Ensemble& ens, const Matrix& references, double h) {
  std::size_t covered = 0;
  for (Eigen::Index k = 0; k < references.cols(); ++k) {
    if (detail::min_sq_distance_brute(ens.positions, references.col(k)) <= h * h) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(references.cols());
}

/// Uniform 1D grid [lo, hi] with n points.
struct Grid1D {
  double lo = -8.0;
  double hi = 8.0;
  int n = 2001;

  double step() const { return (hi - lo) / static_cast<double>(n - 1); }
  double at(int k) const { return lo + step() * k; }
  double weight(int k) const { return (k == 0 || k == n - 1) ? 0.5 * step() : step(); }
};

/// Trapezoidal KL(rho1 | pi1) of one coordinate's kernel-smoothed marginal,
/// rho1(u) = (1/N) sum_i N(u; x_i[c], h^2), against a normalized log marginal.
inline double marginal_kl(const Ensemble& ens, Eigen::Index coordinate,
                          const std::function<double(double)>& log_marginal, double h,
                          const Grid1D& grid) {
  if (grid.n < 3 || grid.n % 2 == 0) throw std::invalid_argument("marginal_kl: n_points must be odd and >= 3");
  if (!(grid.hi > grid.lo)) throw std::invalid_argument("marginal_kl: empty grid");
  const double step = grid.step();
  const double norm = 1.0 / (static_cast<double>(ens.size()) * std::sqrt(2.0 * std::numbers::pi) * h);
  const double reach = 40.0 * h;
  std::vector<double> rho(static_cast<std::size_t>(grid.n), 0.0);
  for (Eigen::Index i = 0; i < ens.size(); ++i) {
    const double centre = ens.positions(coordinate, i);
    const int first = std::max(0, static_cast<int>(std::floor((centre - reach - grid.lo) / step)));
    const int last = std::min(grid.n - 1, static_cast<int>(std::ceil((centre + reach - grid.lo) / step)));
    for (int k = first; k <= last; ++k) {
      const double z = (grid.at(k) - centre) / h;
      rho[static_cast<std::size_t>(k)] += std::exp(-0.5 * z * z);
    }
  }
  double mass = 0.0;
  double kl = 0.0;
  for (int k = 0; k < grid.n; ++k) {
    const double r = rho[static_cast<std::size_t>(k)] * norm;
    mass += grid.weight(k) * r;
    if (r < 1e-300) continue;
    kl += grid.weight(k) * r * (std::log(r) - log_marginal(grid.at(k)));
  }
  if (mass < 0.999) throw GridTooNarrow(mass);
  return kl;
}

/// Rectangular quadrature box for chi-square diagnostics (d <= 2).
struct Chi2Grid {
  Grid1D x;
  Grid1D y{-8.0, 8.0, 501};
};

struct Chi2Result {
  double divergence = 0.0;
  /// Kernel-density mass on cells where pi < 1e-300 (excluded from the integral).
  double clipped_mass = 0.0;
  double rho_mass = 0.0;
};

/// chi^2 divergence int rho^2 / pi - 1 of the kernel density of an ensemble,
/// by trapezoidal quadrature on a fixed grid. pi is normalized on the grid once
/// at construction.
class Chi2Evaluator {
 public:
  Chi2Evaluator(const TargetDensity& target, Chi2Grid grid) : grid_(grid), d_(target.dimension()) {
    if (d_ > 2) throw DomainError("chi2_divergence_grid: only d <= 2 is supported");
    const int ny = d_ == 2 ? grid_.y.n : 1;
    log_pi_.resize(grid_.x.n, ny);
    Vector p(d_);
    for (int a = 0; a < grid_.x.n; ++a) {
      for (int b = 0; b < ny; ++b) {
        p(0) = grid_.x.at(a);
        if (d_ == 2) p(1) = grid_.y.at(b);
        log_pi_(a, b) = target.log_density(p);
      }
    }
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(log_pi_.size()));
    for (int a = 0; a < grid_.x.n; ++a) {
      for (int b = 0; b < ny; ++b) terms.push_back(log_pi_(a, b) + std::log(cell_weight(a, b)));
    }
    log_pi_.array() -= log_sum_exp(terms);
  }

  /// Chi-square divergence of the ensemble's kernel density (bandwidth h).
  Chi2Result evaluate(const Ensemble& ens, double h) const {
    const auto n = ens.size();
    const double inv_two_h2 = 1.0 / (2.0 * h * h);
    auto kernel_table = [&](const Grid1D& g, Eigen::Index coordinate) {
      Matrix k(g.n, n);
      for (int a = 0; a < g.n; ++a) {
        const double u = g.at(a);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double z = u - ens.positions(coordinate, i);
          k(a, i) = std::exp(-z * z * inv_two_h2);
        }
      }
      return k;
    };
    Matrix rho;
    const double norm_1d = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * h);
    if (d_ == 2) {
      const Matrix kx = kernel_table(grid_.x, 0);
      const Matrix ky = kernel_table(grid_.y, 1);
      rho.noalias() = kx * ky.transpose();
      rho *= norm_1d * norm_1d / static_cast<double>(n);
    } else {
      rho = kernel_table(grid_.x, 0).rowwise().sum() * (norm_1d / static_cast<double>(n));
    }
    return integrate([&](int a, int b) { return rho(a, b); });
  }

  /// Same quadrature with an explicit log-density in place of the kernel density.
  Chi2Result evaluate_density(const std::function<double(const Vector&)>& log_rho) const {
    const int ny = d_ == 2 ? grid_.y.n : 1;
    Matrix rho(grid_.x.n, ny);
    Vector p(d_);
    for (int a = 0; a < grid_.x.n; ++a) {
      for (int b = 0; b < ny; ++b) {
        p(0) = grid_.x.at(a);
        if (d_ == 2) p(1) = grid_.y.at(b);
        rho(a, b) = std::exp(log_rho(p));
      }
    }
    return integrate([&](int a, int b) { return rho(a, b); });
  }

 private:
  double cell_weight(int a, int b) const {
    return grid_.x.weight(a) * (d_ == 2 ? grid_.y.weight(b) : 1.0);
  }

  template <class Rho>
  Chi2Result integrate(Rho&& rho_at) const {
    Chi2Result out;
    double total = 0.0;
    for (int a = 0; a < log_pi_.rows(); ++a) {
      for (int b = 0; b < log_pi_.cols(); ++b) {
        const double w = cell_weight(a, b);
        const double r = rho_at(a, b);
        out.rho_mass += w * r;
        const double lp = log_pi_(a, b);
        if (lp < kLogTiny) {
          out.clipped_mass += w * r;
          continue;
        }
        if (r > 0.0) total += w * std::exp(2.0 * std::log(r) - lp);
      }
    }
    if (out.rho_mass < 0.999) throw GridTooNarrow(out.rho_mass);
    out.divergence = total - 1.0;
    return out;
  }

  static constexpr double kLogTiny = -690.7755278982137;  // log(1e-300)

  Chi2Grid grid_;
  Eigen::Index d_;
  Matrix log_pi_;
};

inline Chi2Result chi2_divergence_grid(const Ensemble& ens, const TargetDensity& target, double h,
                                       const Chi2Grid& grid) {
  return Chi2Evaluator(target, grid).evaluate(ens, h);
}

/// Lower bound on inf rho_hat / pi for a unimodal target that is M-strongly
/// convex and L-smooth on a ball of radius R around its mode.
inline double gaussian_approx_lower_bound(double m, double l, double r, Eigen::Index d) {
  if (!(m > 0.0) || !(m <= l)) throw DomainError("need 0 < M <= L");
  const double dd = static_cast<double>(d);
  const double radius_floor = std::sqrt(dd / l);
  if (r < radius_floor) throw DomainError("need R >= sqrt(d / L)");
  const double gap = r - radius_floor;
  return std::pow(m / l, 0.5 * dd) * (-std::expm1(-0.5 * l * gap * gap)) *
         std::exp(-0.5 * (l - m) * r * r);
}

/// Multimodal form: min over modes of (M_j/L_j)^{d/2} [1 - exp(-L_j (R - sqrt(d/L_j))^2 / 2)]
/// times min over modes of exp(-(L_i - M_i) R^2 / 2).
inline double gaussian_approx_lower_bound(std::span<const double> m, std::span<const double> l,
                                          double r, Eigen::Index d) {
  if (m.empty() || m.size() != l.size()) throw DomainError("need matching, non-empty M and L");
  const double dd = static_cast<double>(d);
  double first = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (!(m[j] > 0.0) || !(m[j] <= l[j])) throw DomainError("need 0 < M <= L");
    const double floor_j = std::sqrt(dd / l[j]);
    if (r < floor_j) throw DomainError("need R >= sqrt(d / L)");
    const double gap = r - floor_j;
    first = std::min(first, std::pow(m[j] / l[j], 0.5 * dd) * (-std::expm1(-0.5 * l[j] * gap * gap)));
    second = std::min(second, std::exp(-0.5 * (l[j] - m[j]) * r * r));
  }
  return first * second;
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

struct MetricRecord {
  int replicate = 0;
  int iteration = 0;
  int update = 0;
  std::string metric;
  double value = 0.0;
};

/// Time series of diagnostics keyed by (iteration, update).
class RunMetrics {
 public:
  static constexpr const char* kCsvHeader = "replicate,iteration,update,metric,value";

  explicit RunMetrics(int replicate = 0) : replicate_(replicate) {}

  void add(int iteration, int update, std::string metric, double value) {
    if (!records_.empty() && update < records_.back().update) {
      throw std::logic_error("RunMetrics: update index must be non-decreasing");
    }
    records_.push_back({replicate_, iteration, update, std::move(metric), value});
  }

  int replicate() const { return replicate_; }
  const std::vector<MetricRecord>& records() const { return records_; }

  /// Values of one metric in recording order.
  std::vector<double> series(const std::string& metric) const {
    std::vector<double> out;
    for (const auto& r : records_) {
      if (r.metric == metric) out.push_back(r.value);
    }
    return out;
  }

  std::string to_csv() const {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : records_) {
      out += std::to_string(r.replicate) + "," + std::to_string(r.iteration) + "," +
             std::to_string(r.update) + "," + r.metric + "," + format_double(r.value) + "\n";
    }
    return out;
  }

 private:
  int replicate_;
  std::vector<MetricRecord> records_;
};

}  // namespace bdec
