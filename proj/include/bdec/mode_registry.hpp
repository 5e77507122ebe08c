#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bdec/bfgs.hpp"
#include "bdec/gaussian.hpp"
#include "bdec/parallel.hpp"
#include "bdec/target.hpp"

namespace bdec {

/// A located mode: mu, Sigma = -[Hess log pi(mu)]^{-1} and the cached log pi(mu).
struct ModeInfo {
  Vector location;
  CholeskyFactor covariance;
  double log_density = 0.0;
};

/// d^{-1} max{ delta^T Sigma_k^{-1} delta, delta^T Sigma_l^{-1} delta }.
inline double mode_distance(const ModeInfo& k, const ModeInfo& l) {
  if (k.location.size() != l.location.size()) {
    throw std::invalid_argument("mode_distance: dimension mismatch");
  }
  const Vector delta = k.location - l.location;
  const double d = static_cast<double>(delta.size());
  return std::max(k.covariance.mahalanobis_sq(delta), l.covariance.mahalanobis_sq(delta)) / d;
}

inline double default_threshold(Eigen::Index d) {
  if (d < 1) throw std::invalid_argument("default_threshold: dimension must be positive");
  return 1.0 + std::sqrt(2.0 / static_cast<double>(d));
}

/// Laplace-style weights pi(mu_j) |Sigma_j|^{1/2}, normalized; computed as a
/// softmax of log pi(mu_j) + log|Sigma_j| / 2.
inline std::vector<double> recompute_weights(std::span<const ModeInfo> modes) {
  std::vector<double> logits;
  logits.reserve(modes.size());
  for (const auto& m : modes) logits.push_back(m.log_density + 0.5 * m.covariance.log_det());
  if (logits.empty()) return logits;
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    total += l;
  }
  for (double& l : logits) l /= total;
  return logits;
}

/// Discovered modes I = {M, S, W} and the Gaussian mixture proposal built
/// from them. Weights are always recomputed from the modes.
class ModeAtlas {
 public:
  ModeAtlas() = default;
  explicit ModeAtlas(Eigen::Index dimension) : dimension_(dimension) {}
  ModeAtlas(Eigen::Index dimension, std::vector<ModeInfo> modes)
      : dimension_(dimension), modes_(std::move(modes)) {
    rebuild();
  }

  Eigen::Index dimension() const { return dimension_; }
  std::size_t size() const { return modes_.size(); }
  bool empty() const { return modes_.empty(); }
  const std::vector<ModeInfo>& modes() const { return modes_; }
  const std::vector<double>& weights() const { return weights_; }
  const GaussianMixture& mixture() const { return mixture_; }

  /// Appends modes and recomputes the weights once.
  void append(std::span<const ModeInfo> added) {
    if (added.empty()) return;
    for (const auto& m : added) {
      if (m.location.size() != dimension_) {
        throw std::invalid_argument("ModeAtlas: mode dimension mismatch");
      }
      modes_.push_back(m);
    }
    rebuild();
  }

  /// Smallest distance from a candidate to any stored mode; +inf when empty.
  double nearest_distance(const ModeInfo& candidate) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : modes_) best = std::min(best, mode_distance(candidate, m));
    return best;
  }

  nlohmann::json to_json() const {
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& m : modes_) {
      const Matrix cov = m.covariance.covariance();
      std::vector<double> flat;
      for (Eigen::Index r = 0; r < cov.rows(); ++r) {
        for (Eigen::Index c = 0; c < cov.cols(); ++c) flat.push_back(cov(r, c));
      }
      modes.push_back({{"location", std::vector<double>(m.location.begin(), m.location.end())},
                       {"covariance", flat},
                       {"log_density", m.log_density}});
    }
    return {{"dimension", dimension_}, {"modes", modes}, {"weights", weights_}};
  }

  /// Reads an atlas document. When a target is given, cached log-densities are
  /// re-evaluated against it; the stored weights are ignored and recomputed.
  static ModeAtlas from_json(const nlohmann::json& doc, const TargetDensity* target = nullptr) {
    const auto d = doc.at("dimension").get<Eigen::Index>();
    std::vector<ModeInfo> modes;
    for (const auto& entry : doc.at("modes")) {
      const auto loc = entry.at("location").get<std::vector<double>>();
      const auto flat = entry.at("covariance").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(loc.size()) != d ||
          static_cast<Eigen::Index>(flat.size()) != d * d) {
        throw std::invalid_argument("atlas: mode entry has wrong dimension");
      }
      ModeInfo mode;
      mode.location = Eigen::Map<const Vector>(loc.data(), d);
      Matrix cov(d, d);
      for (Eigen::Index r = 0; r < d; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) cov(r, c) = flat[static_cast<std::size_t>(r * d + c)];
      }
      mode.covariance = cholesky(0.5 * (cov + cov.transpose()));
      if (target != nullptr) {
        mode.log_density = target->log_density(mode.location);
      } else {
        mode.log_density = entry.at("log_density").get<double>();
      }
      modes.push_back(std::move(mode));
    }
    return ModeAtlas(d, std::move(modes));
  }

 private:
  void rebuild() {
    weights_ = recompute_weights(modes_);
    std::vector<GaussianMixture::Component> comps;
    comps.reserve(modes_.size());
    for (const auto& m : modes_) comps.push_back({m.location, m.covariance});
    mixture_ = modes_.empty() ? GaussianMixture() : GaussianMixture(std::move(comps), weights_);
  }

  Eigen::Index dimension_ = 0;
  std::vector<ModeInfo> modes_;
  std::vector<double> weights_;
  GaussianMixture mixture_;
};

enum class ModeSearchStatus { found, not_converged, not_a_minimum, out_of_support };

struct ModeSearchResult {
  std::optional<ModeInfo> mode;
  ModeSearchStatus status = ModeSearchStatus::not_converged;
  int iterations = 0;
};

/// BFGS on V = -log pi from `start`, then the covariance from the Hessian at
/// the terminus. Always uses the untempered target.
inline ModeSearchResult find_mode(const TargetDensity& target, const Vector& start,
                                  const BfgsOptions& opts = {}) {
  auto potential = [&target](const Vector& x, Vector& grad) {
    const double lp = target.log_density(x);
    if (!std::isfinite(lp)) {
      grad.setConstant(std::numeric_limits<double>::quiet_NaN());
      return std::numeric_limits<double>::infinity();
    }
    grad = -target.grad_log_density(x);
    return -lp;
  };
  const BfgsResult opt = minimize_bfgs(potential, start, opts);

  ModeSearchResult result;
  result.iterations = opt.iterations;
  if (opt.status == BfgsStatus::non_finite_start) {
    result.status = ModeSearchStatus::out_of_support;
    return result;
  }
  if (opt.status != BfgsStatus::converged) {
    result.status = ModeSearchStatus::not_converged;
    return result;
  }
  const Matrix precision = -target.hessian_log_density(opt.x);
  if (!precision.allFinite()) {
    result.status = ModeSearchStatus::not_a_minimum;
    return result;
  }
  try {
    const CholeskyFactor precision_chol = cholesky(0.5 * (precision + precision.transpose()));
    const Matrix sigma = precision_chol.inverse();
    result.mode = ModeInfo{opt.x, cholesky(0.5 * (sigma + sigma.transpose())), -opt.value};
    result.status = ModeSearchStatus::found;
  } catch (const NotPositiveDefinite&) {
    result.status = ModeSearchStatus::not_a_minimum;
  }
  return result;
}

struct ExplorationResult {
  ModeAtlas atlas;
  bool new_found = false;
  int candidates = 0;
  int failures = 0;
};

/// One pass of the exploration component over a batch of tempered-chain
/// positions. Searches run in parallel against the incoming atlas; candidates
/// are then committed in batch order, each tested against the atlas including
/// earlier insertions from the same batch.
inline ExplorationResult exploration_step(std::span<const Vector> batch, const ModeAtlas& atlas,
                                          const TargetDensity& target, double threshold,
                                          int workers = 1, const BfgsOptions& opts = {}) {
  std::vector<ModeSearchResult> searches(batch.size());
  parallel_for(batch.size(), workers,
               [&](std::size_t b) { searches[b] = find_mode(target, batch[b], opts); });

  ExplorationResult out;
  out.atlas = atlas;
  out.candidates = static_cast<int>(batch.size());
  std::vector<ModeInfo> accepted;
  for (const auto& s : searches) {
    if (!s.mode) {
      ++out.failures;
      continue;
    }
    bool is_new = out.atlas.nearest_distance(*s.mode) > threshold;
    for (const auto& a : accepted) {
      if (!is_new) break;
      is_new = mode_distance(*s.mode, a) > threshold;
    }
    if (is_new) accepted.push_back(*s.mode);
  }
  out.new_found = !accepted.empty();
  out.atlas.append(accepted);
  return out;
}

}  // namespace bdec
