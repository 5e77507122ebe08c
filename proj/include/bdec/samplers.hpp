#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bdec/gaussian.hpp"
#include "bdec/mode_registry.hpp"
#include "bdec/parallel.hpp"
#include "bdec/random.hpp"
#include "bdec/target.hpp"

namespace bdec {

enum class Algorithm { bdec, bdls, lec, ula };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::bdec: return "bdec";
    case Algorithm::bdls: return "bdls";
    case Algorithm::lec: return "lec";
    case Algorithm::ula: return "ula";
  }
  return "bdec";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view s) {
  if (s == "bdec") return Algorithm::bdec;
  if (s == "bdls") return Algorithm::bdls;
  if (s == "lec") return Algorithm::lec;
  if (s == "ula") return Algorithm::ula;
  return std::nullopt;
}

/// Invalid configuration; `field` names the offending entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct SamplerConfig {
  Algorithm algorithm = Algorithm::bdec;
  double dt = 0.005;
  double h = 0.05;
  double beta_hot = 0.05;
  int n = 2000;
  int n_hot = 2000;
  int iterations = 50;
  int moves_per_iteration = 6;
  int batch_size = 12;
  /// Mode-distance threshold; default_threshold(d) when unset.
  std::optional<double> threshold;
  /// Prepend a Langevin step to each MH + birth-death update in insertion iterations.
  bool langevin_in_insertion = false;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt", "must be > 0");
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("h", "must be > 0");
    if (!(beta_hot > 0.0 && beta_hot <= 1.0)) throw ConfigError("beta_hot", "must be in (0, 1]");
    if (n < 2) throw ConfigError("n", "must be >= 2");
    if (iterations < 0) throw ConfigError("iterations", "must be >= 0");
    if (moves_per_iteration < 1) throw ConfigError("moves_per_iteration", "must be >= 1");
    const bool uses_hot_chain = algorithm == Algorithm::bdec || algorithm == Algorithm::lec;
    if (uses_hot_chain) {
      if (n_hot < 1) throw ConfigError("n_hot", "must be >= 1");
      if (batch_size < 1 || batch_size > n_hot) {
        throw ConfigError("batch_size", "must be in [1, n_hot]");
      }
    }
    if (threshold && !(*threshold > 0.0)) throw ConfigError("threshold", "must be > 0");
    if (workers < 1) throw ConfigError("workers", "must be >= 1");
  }
};

/// Test hooks and execution controls shared by the step kernels.
struct StepControls {
  int workers = 1;
  /// Forces every Langevin noise vector to zero.
  bool zero_noise = false;
  /// Forces every birth-death kill/duplicate probability to zero.
  bool suppress_birth_death = false;
};

/// N particle positions (one per column) with one random stream per slot and
/// a separate stream for serialized birth-death resolution.
struct Ensemble {
  Matrix positions;
  std::vector<RandomStream> streams;
  RandomStream resolution;
  std::uint64_t generation = 0;

  static Ensemble create(Matrix positions, std::uint64_t seed, StreamDomain domain) {
    Ensemble e;
    const auto n = static_cast<std::size_t>(positions.cols());
    e.positions = std::move(positions);
    e.streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) e.streams.emplace_back(seed, domain, i);
    e.resolution = RandomStream(seed, StreamDomain::birth_death, static_cast<std::uint32_t>(domain));
    return e;
  }

  Eigen::Index size() const { return positions.cols(); }
  Eigen::Index dimension() const { return positions.rows(); }
};

inline constexpr int kMaxLangevinRetries = 10;

/// One unadjusted Langevin update of every particle at inverse temperature beta:
/// x' = x + dt * beta * grad log pi(x) + sqrt(2 dt) eps. Proposals that leave
/// the support are redrawn up to 10 times, then the particle stays put.
inline void ula_step(Ensemble& ens, const TargetDensity& target, double beta, double dt,
                     const StepControls& controls = {}) {
  const double noise_scale = controls.zero_noise ? 0.0 : std::sqrt(2.0 * dt);
  const auto d = ens.dimension();
  parallel_for(static_cast<std::size_t>(ens.size()), controls.workers, [&](std::size_t i) {
    auto col = ens.positions.col(static_cast<Eigen::Index>(i));
    const Vector x = col;
    const Vector drift = dt * beta * target.grad_log_density(x);
    if (!drift.allFinite()) return;
    auto& rng = ens.streams[i];
    for (int attempt = 0; attempt <= kMaxLangevinRetries; ++attempt) {
      Vector proposal = x + drift;
      if (noise_scale > 0.0) proposal += noise_scale * standard_normal(rng, d);
      if (proposal.allFinite() && std::isfinite(target.log_density(proposal))) {
        col = proposal;
        return;
      }
    }
  });
  ++ens.generation;
}

/// r_i = log((1/N) sum_l K(x_i - x_l)) - log pi(x_i), self-term included.
inline std::vector<double> birth_death_rates(const Matrix& positions, const TargetDensity& target,
                                             double h, int workers = 1) {
  const auto n = positions.cols();
  const double d = static_cast<double>(positions.rows());
  const double inv_two_h2 = 1.0 / (2.0 * h * h);
  const double log_norm = -std::log(static_cast<double>(n)) -
                          0.5 * d * std::log(2.0 * std::numbers::pi * h * h);
  std::vector<double> rates(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t si) {
    const auto i = static_cast<Eigen::Index>(si);
    double sum = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
      const double e = (positions.col(i) - positions.col(l)).squaredNorm() * inv_two_h2;
      if (e < 745.0) sum += std::exp(-e);
    }
    // The self-term contributes exp(0) = 1, so sum >= 1 and no underflow guard is needed.
    rates[si] = std::log(sum) + log_norm - target.log_density(positions.col(i));
  });
  return rates;
}

struct BirthDeathStats {
  int kills = 0;
  int duplications = 0;
};

inline double birth_death_probability(double rate, double mean_rate, double dt) {
  return -std::expm1(-std::abs(rate - mean_rate) * dt);
}

/// Birth-death adjustment. Rates come from the pre-step snapshot; particles
/// are then resolved in index order against the evolving list. N is preserved.
inline BirthDeathStats birth_death_step(Ensemble& ens, const TargetDensity& target, double h,
                                        double dt, const StepControls& controls = {}) {
  const auto n = ens.size();
  if (n < 2) throw std::invalid_argument("birth_death_step: need at least two particles");
  BirthDeathStats stats;
  if (controls.suppress_birth_death) return stats;

  const auto rates = birth_death_rates(ens.positions, target, h, controls.workers);
  double mean_rate = 0.0;
  for (double r : rates) mean_rate += r;
  mean_rate /= static_cast<double>(n);

  auto pick_other = [&](Eigen::Index i) {
    auto j = static_cast<Eigen::Index>(ens.resolution.below(static_cast<std::size_t>(n - 1)));
    return j >= i ? j + 1 : j;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rate = rates[static_cast<std::size_t>(i)];
    const double p = birth_death_probability(rate, mean_rate, dt);
    if (!(ens.resolution.uniform() < p)) continue;
    const Eigen::Index other = pick_other(i);
    if (rate > mean_rate) {
      ens.positions.col(i) = ens.positions.col(other);
      ++stats.kills;
    } else {
      ens.positions.col(other) = ens.positions.col(i);
      ++stats.duplications;
    }
  }
  return stats;
}

class EmptyAtlas : public std::logic_error {
 public:
  EmptyAtlas() : std::logic_error("mixture proposal needs a non-empty mode atlas") {}
};

/// log of the independence-sampler acceptance probability for moving from x
/// to a proposal z drawn from rho: min{0, log pi(z) + log rho(x) - log pi(x) - log rho(z)}.
inline double mh_log_acceptance(double log_pi_current, double log_rho_current,
                                double log_pi_proposal, double log_rho_proposal) {
  if (!std::isfinite(log_pi_proposal)) return kNegInf;
  if (!std::isfinite(log_pi_current)) return 0.0;
  const double log_ratio = log_pi_proposal + log_rho_current - log_pi_current - log_rho_proposal;
  return std::min(0.0, log_ratio);
}

/// One Metropolis-Hastings step per particle with the atlas mixture as an
/// independence proposal. Returns the accepted fraction.
inline double mh_mixture_step(Ensemble& ens, const TargetDensity& target, const ModeAtlas& atlas,
                              const StepControls& controls = {}) {
  if (atlas.empty()) throw EmptyAtlas();
  const auto& proposal = atlas.mixture();
  std::vector<char> accepted(static_cast<std::size_t>(ens.size()), 0);
  parallel_for(static_cast<std::size_t>(ens.size()), controls.workers, [&](std::size_t i) {
    auto col = ens.positions.col(static_cast<Eigen::Index>(i));
    auto& rng = ens.streams[i];
    const Vector x = col;
    const Vector z = proposal.sample(rng);
    const double log_a = mh_log_acceptance(target.log_density(x), proposal.log_pdf(x),
                                           target.log_density(z), proposal.log_pdf(z));
    const double u = rng.uniform();
    if (std::log(u) < log_a) {
      col = z;
      accepted[i] = 1;
    }
  });
  ++ens.generation;
  double count = 0.0;
  for (char a : accepted) count += a;
  return count / static_cast<double>(ens.size());
}

/// Emitted after every update of the target-level ensemble.
struct UpdateEvent {
  int iteration = 0;
  int update = 0;
  const Ensemble* ensemble = nullptr;
  const ModeAtlas* atlas = nullptr;
  std::optional<double> acceptance_rate;
  int optimizer_failures = 0;
};

using UpdateHook = std::function<void(const UpdateEvent&)>;

struct SamplerOutcome {
  Ensemble x;
  Ensemble y;
  ModeAtlas atlas;
  /// Atlas size after each exploration pass.
  std::vector<int> modes_per_iteration;
};

/// Draws `count` distinct indices from [0, n) by a partial Fisher-Yates shuffle.
inline std::vector<std::size_t> draw_without_replacement(RandomStream& rng, std::size_t n,
                                                         std::size_t count) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t j = k + rng.below(n - k);
    std::swap(pool[k], pool[j]);
  }
  pool.resize(count);
  return pool;
}

namespace detail {

inline SamplerOutcome run_sampler(const SamplerConfig& config, const TargetDensity& target,
                                  Ensemble x, Ensemble y, ModeAtlas atlas,
                                  const UpdateHook& hook, StepControls controls) {
  config.validate();
  controls.workers = config.workers;
  const bool explores = config.algorithm == Algorithm::bdec || config.algorithm == Algorithm::lec;
  if (x.dimension() != target.dimension() || x.size() != config.n) {
    throw ConfigError("n", "initial target-level ensemble must hold n particles of the target dimension");
  }
  if (explores && (y.dimension() != target.dimension() || y.size() != config.n_hot)) {
    throw ConfigError("n_hot", "initial tempered ensemble must hold n_hot particles of the target dimension");
  }
  if (atlas.dimension() == 0) atlas = ModeAtlas(target.dimension());
  const bool birth_death = config.algorithm == Algorithm::bdec || config.algorithm == Algorithm::bdls;
  const double threshold = config.threshold.value_or(default_threshold(target.dimension()));
  RandomStream explore_rng(config.seed, StreamDomain::exploration, 0);
  const int T = config.moves_per_iteration;

  SamplerOutcome out;
  for (int j = 1; j <= config.iterations; ++j) {
    const int offset = (j - 1) * T;
    bool new_found = false;
    int failures = 0;
    if (explores) {
      for (int t = 0; t < T; ++t) ula_step(y, target, config.beta_hot, config.dt, controls);
      const auto picks = draw_without_replacement(explore_rng, static_cast<std::size_t>(y.size()),
                                                  static_cast<std::size_t>(config.batch_size));
      std::vector<Vector> batch;
      batch.reserve(picks.size());
      for (auto p : picks) batch.emplace_back(y.positions.col(static_cast<Eigen::Index>(p)));
      auto explored = exploration_step(batch, atlas, target, threshold, controls.workers);
      atlas = std::move(explored.atlas);
      new_found = explored.new_found;
      failures = explored.failures;
      out.modes_per_iteration.push_back(static_cast<int>(atlas.size()));
    }

    for (int t = 1; t <= T; ++t) {
      std::optional<double> acceptance;
      if (new_found) {
        if (config.langevin_in_insertion) ula_step(x, target, 1.0, config.dt, controls);
        acceptance = mh_mixture_step(x, target, atlas, controls);
      } else {
        ula_step(x, target, 1.0, config.dt, controls);
      }
      if (birth_death) birth_death_step(x, target, config.h, config.dt, controls);
      if (hook) {
        UpdateEvent ev;
        ev.iteration = j;
        ev.update = offset + t;
        ev.ensemble = &x;
        ev.atlas = &atlas;
        ev.acceptance_rate = acceptance;
        ev.optimizer_failures = t == 1 ? failures : 0;
        hook(ev);
      }
    }
  }
  out.x = std::move(x);
  out.y = std::move(y);
  out.atlas = std::move(atlas);
  return out;
}

}  // namespace detail

/// Langevin sampling with birth-death and the exploration component: J
/// iterations of {T tempered Langevin moves of Y; one exploration pass; T
/// updates of X}, where X updates are MH-with-mixture + birth-death when the
/// pass found a new mode and Langevin + birth-death otherwise.
inline SamplerOutcome run_bdec(const SamplerConfig& config, const TargetDensity& target,
                               Ensemble init_x, Ensemble init_y, ModeAtlas init_atlas,
                               const UpdateHook& hook = {}, const StepControls& controls = {}) {
  if (config.algorithm != Algorithm::bdec) {
    throw ConfigError("algorithm", "run_bdec requires algorithm = bdec");
  }
  return detail::run_sampler(config, target, std::move(init_x), std::move(init_y),
                             std::move(init_atlas), hook, controls);
}

/// Baselines: bdls (no hot chain, Langevin + birth-death), lec (bdec without
/// birth-death) and ula (Langevin only). Y and the atlas are only used by lec.
inline SamplerOutcome run_baseline(const SamplerConfig& config, const TargetDensity& target,
                                   Ensemble init_x, Ensemble init_y = {}, ModeAtlas init_atlas = {},
                                   const UpdateHook& hook = {}, const StepControls& controls = {}) {
  if (config.algorithm == Algorithm::bdec) {
    throw ConfigError("algorithm", "run_baseline expects bdls, lec or ula");
  }
  return detail::run_sampler(config, target, std::move(init_x), std::move(init_y),
                             std::move(init_atlas), hook, controls);
}

/// Dispatches on config.algorithm.
inline SamplerOutcome run_algorithm(const SamplerConfig& config, const TargetDensity& target,
                                    Ensemble init_x, Ensemble init_y, ModeAtlas init_atlas,
                                    const UpdateHook& hook = {}, const StepControls& controls = {}) {
  return detail::run_sampler(config, target, std::move(init_x), std::move(init_y),
                             std::move(init_atlas), hook, controls);
}

}  // namespace bdec
