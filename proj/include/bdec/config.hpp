#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bdec/diagnostics.hpp"
#include "bdec/gaussian.hpp"
#include "bdec/samplers.hpp"
#include "bdec/target.hpp"

namespace bdec {

using nlohmann::json;

/// Which target to build. `id` is one of example1-gmm, sur2d, skew20d,
/// gaussian-test, gmm (a custom mixture given by weights/means/covariances).
struct TargetSpec {
  std::string id = "example1-gmm";
  double n_sur = 1.0;
  int dimension = 2;
  std::vector<double> weights;
  std::vector<std::vector<double>> means;
  /// Row-major d*d entries per component.
  std::vector<std::vector<double>> covariances;

  bool operator==(const TargetSpec&) const = default;
};

/// Gaussian initial distribution; `exact` draws from the target itself.
struct InitialSpec {
  bool exact = false;
  std::vector<double> mean;
  std::vector<double> covariance;

  bool operator==(const InitialSpec&) const = default;
};

struct ExperimentConfig {
  std::string name;
  TargetSpec target;
  std::optional<InitialSpec> initial;
  SamplerConfig sampler;
  std::vector<std::string> metrics;
  int replicates = 10;
  int reference_samples = 20000;
  std::string output_dir = "out";
  int snapshot_every = 0;
  bool parallel_replicates = false;
  std::optional<Grid1D> kl_grid;
  std::optional<Chi2Grid> chi2_grid;
  /// Atlas document (object) or a path to one (string); empty atlas when unset.
  json initial_atlas;
};

namespace config_detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
    }
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where.empty() ? key : where + "." + key, std::string("wrong type: ") + e.what());
  }
}

inline Grid1D read_grid(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(field, "expected [lo, hi, n_points]");
  Grid1D g;
  try {
    g.lo = j[0].get<double>();
    g.hi = j[1].get<double>();
    g.n = j[2].get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(field, std::string("wrong type: ") + e.what());
  }
  if (!(g.hi > g.lo)) throw ConfigError(field, "hi must exceed lo");
  if (g.n < 3 || g.n % 2 == 0) throw ConfigError(field, "n_points must be odd and >= 3");
  return g;
}

inline json write_grid(const Grid1D& g) { return json::array({g.lo, g.hi, g.n}); }

}  // namespace config_detail

/// Canonical metric names. "marginal_kl coordinate=K" (or "marginal_kl")
/// becomes "marginal_kl_K".
inline std::optional<std::string> canonical_metric(const std::string& id) {
  static const std::set<std::string> plain{"x", "y", "abs_x", "quad", "Z", "mode_count",
                                           "acceptance_rate", "chi2"};
  if (plain.contains(id)) return id;
  if (id == "marginal_kl") return "marginal_kl_0";
  const std::string prefix = "marginal_kl coordinate=";
  if (id.rfind(prefix, 0) == 0) {
    const std::string rest = id.substr(prefix.size());
    if (rest.empty() || !std::all_of(rest.begin(), rest.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return std::nullopt;
    }
    return "marginal_kl_" + rest;
  }
  return std::nullopt;
}

inline std::unique_ptr<TargetDensity> make_target(const TargetSpec& spec) {
  if (spec.id == "example1-gmm") return std::make_unique<GaussianMixtureTarget>(example1::target());
  if (spec.id == "sur2d") {
    if (!(spec.n_sur > 0.0)) throw ConfigError("target.n_sur", "must be > 0");
    return std::make_unique<SurTarget>(spec.n_sur);
  }
  if (spec.id == "skew20d") return std::make_unique<SkewNormalMixtureTarget>(skew20d::target());
  if (spec.id == "gaussian-test") {
    if (spec.dimension < 1) throw ConfigError("target.dimension", "must be >= 1");
    return std::make_unique<GaussianTarget>(GaussianTarget::standard(spec.dimension));
  }
  if (spec.id == "gmm") {
    const std::size_t m = spec.weights.size();
    if (m == 0 || spec.means.size() != m || spec.covariances.size() != m) {
      throw ConfigError("target", "gmm needs equally many weights, means and covariances");
    }
    const auto d = static_cast<Eigen::Index>(spec.means.front().size());
    if (d == 0) throw ConfigError("target.means", "empty mean");
    std::vector<GaussianMixture::Component> comps;
    for (std::size_t i = 0; i < m; ++i) {
      if (static_cast<Eigen::Index>(spec.means[i].size()) != d ||
          static_cast<Eigen::Index>(spec.covariances[i].size()) != d * d) {
        throw ConfigError("target.covariances", "component " + std::to_string(i) + " has wrong size");
      }
      Matrix cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          spec.covariances[i].data(), d, d);
      try {
        comps.push_back({Eigen::Map<const Vector>(spec.means[i].data(), d), cholesky(cov)});
      } catch (const NotPositiveDefinite&) {
        throw ConfigError("target.covariances", "component " + std::to_string(i) + " is not positive definite");
      }
    }
    try {
      return std::make_unique<GaussianMixtureTarget>(GaussianMixture(std::move(comps), spec.weights), "gmm");
    } catch (const std::invalid_argument& e) {
      throw ConfigError("target.weights", e.what());
    }
  }
  throw ConfigError("target.id", "unknown target '" + spec.id + "'");
}

inline ExperimentConfig parse_config(const json& doc) {
  using namespace config_detail;
  reject_unknown(doc, {"name", "target", "initial", "sampler", "metrics", "replicates",
                       "reference_samples", "output_dir", "snapshot_every", "parallel_replicates",
                       "kl_grid", "chi2_grid", "initial_atlas"},
                 "");
  ExperimentConfig c;
  read(doc, "name", c.name, "");

  if (!doc.contains("target")) throw ConfigError("target", "required");
  const auto& t = doc.at("target");
  reject_unknown(t, {"id", "n_sur", "dimension", "weights", "means", "covariances"}, "target");
  if (!t.contains("id")) throw ConfigError("target.id", "required");
  read(t, "id", c.target.id, "target");
  read(t, "n_sur", c.target.n_sur, "target");
  read(t, "dimension", c.target.dimension, "target");
  read(t, "weights", c.target.weights, "target");
  read(t, "means", c.target.means, "target");
  read(t, "covariances", c.target.covariances, "target");

  if (doc.contains("initial")) {
    const auto& init = doc.at("initial");
    InitialSpec spec;
    if (init.is_string()) {
      if (init.get<std::string>() != "exact") throw ConfigError("initial", "expected \"exact\" or an object");
      spec.exact = true;
    } else {
      reject_unknown(init, {"mean", "covariance"}, "initial");
      read(init, "mean", spec.mean, "initial");
      read(init, "covariance", spec.covariance, "initial");
      if (spec.mean.empty()) throw ConfigError("initial.mean", "required");
      if (spec.covariance.size() != spec.mean.size() * spec.mean.size()) {
        throw ConfigError("initial.covariance", "needs d*d row-major entries");
      }
    }
    c.initial = spec;
  }

  if (doc.contains("sampler")) {
    const auto& s = doc.at("sampler");
    reject_unknown(s, {"algorithm", "dt", "h", "beta_hot", "n", "n_hot", "iterations",
                       "moves_per_iteration", "batch_size", "threshold", "langevin_in_insertion",
                       "seed", "workers"},
                   "sampler");
    if (s.contains("algorithm")) {
      std::string a;
      read(s, "algorithm", a, "sampler");
      auto parsed = parse_algorithm(a);
      if (!parsed) throw ConfigError("sampler.algorithm", "unknown algorithm '" + a + "'");
      c.sampler.algorithm = *parsed;
    }
    read(s, "dt", c.sampler.dt, "sampler");
    read(s, "h", c.sampler.h, "sampler");
    read(s, "beta_hot", c.sampler.beta_hot, "sampler");
    read(s, "n", c.sampler.n, "sampler");
    c.sampler.n_hot = c.sampler.n;
    read(s, "n_hot", c.sampler.n_hot, "sampler");
    read(s, "iterations", c.sampler.iterations, "sampler");
    read(s, "moves_per_iteration", c.sampler.moves_per_iteration, "sampler");
    read(s, "batch_size", c.sampler.batch_size, "sampler");
    if (s.contains("threshold") && !s.at("threshold").is_null()) {
      double thr = 0.0;
      read(s, "threshold", thr, "sampler");
      c.sampler.threshold = thr;
    }
    read(s, "langevin_in_insertion", c.sampler.langevin_in_insertion, "sampler");
    read(s, "seed", c.sampler.seed, "sampler");
    read(s, "workers", c.sampler.workers, "sampler");
  }

  read(doc, "metrics", c.metrics, "");
  read(doc, "replicates", c.replicates, "");
  read(doc, "reference_samples", c.reference_samples, "");
  read(doc, "output_dir", c.output_dir, "");
  read(doc, "snapshot_every", c.snapshot_every, "");
  read(doc, "parallel_replicates", c.parallel_replicates, "");
  if (doc.contains("kl_grid")) c.kl_grid = read_grid(doc.at("kl_grid"), "kl_grid");
  if (doc.contains("chi2_grid")) {
    const auto& g = doc.at("chi2_grid");
    reject_unknown(g, {"x", "y"}, "chi2_grid");
    Chi2Grid grid;
    if (!g.contains("x")) throw ConfigError("chi2_grid.x", "required");
    grid.x = read_grid(g.at("x"), "chi2_grid.x");
    if (g.contains("y")) grid.y = read_grid(g.at("y"), "chi2_grid.y");
    c.chi2_grid = grid;
  }
  if (doc.contains("initial_atlas")) c.initial_atlas = doc.at("initial_atlas");
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  json target = {{"id", c.target.id}};
  if (c.target.id == "sur2d") target["n_sur"] = c.target.n_sur;
  if (c.target.id == "gaussian-test") target["dimension"] = c.target.dimension;
  if (c.target.id == "gmm") {
    target["weights"] = c.target.weights;
    target["means"] = c.target.means;
    target["covariances"] = c.target.covariances;
  }
  json sampler = {{"algorithm", std::string(to_string(c.sampler.algorithm))},
                  {"dt", c.sampler.dt},
                  {"h", c.sampler.h},
                  {"beta_hot", c.sampler.beta_hot},
                  {"n", c.sampler.n},
                  {"n_hot", c.sampler.n_hot},
                  {"iterations", c.sampler.iterations},
                  {"moves_per_iteration", c.sampler.moves_per_iteration},
                  {"batch_size", c.sampler.batch_size},
                  {"langevin_in_insertion", c.sampler.langevin_in_insertion},
                  {"seed", c.sampler.seed},
                  {"workers", c.sampler.workers}};
  sampler["threshold"] = c.sampler.threshold ? json(*c.sampler.threshold) : json(nullptr);
  json doc = {{"name", c.name},
              {"target", target},
              {"sampler", sampler},
              {"metrics", c.metrics},
              {"replicates", c.replicates},
              {"reference_samples", c.reference_samples},
              {"output_dir", c.output_dir},
              {"snapshot_every", c.snapshot_every},
              {"parallel_replicates", c.parallel_replicates}};
  if (c.initial) {
    doc["initial"] = c.initial->exact ? json("exact")
                                      : json{{"mean", c.initial->mean}, {"covariance", c.initial->covariance}};
  }
  if (c.kl_grid) doc["kl_grid"] = config_detail::write_grid(*c.kl_grid);
  if (c.chi2_grid) {
    doc["chi2_grid"] = {{"x", config_detail::write_grid(c.chi2_grid->x)},
                        {"y", config_detail::write_grid(c.chi2_grid->y)}};
  }
  if (!c.initial_atlas.is_null()) doc["initial_atlas"] = c.initial_atlas;
  return doc;
}

/// Full semantic check: sampler fields, counts, metric identifiers and
/// whether the target supports each requested metric.
inline void validate(const ExperimentConfig& c) {
  try {
    c.sampler.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("sampler." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  }
  if (c.replicates < 1) throw ConfigError("replicates", "must be >= 1");
  if (c.reference_samples < 1) throw ConfigError("reference_samples", "must be >= 1");
  if (c.snapshot_every < 0) throw ConfigError("snapshot_every", "must be >= 0");
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  const auto target = make_target(c.target);
  if (c.initial && !c.initial->exact &&
      static_cast<Eigen::Index>(c.initial->mean.size()) != target->dimension()) {
    throw ConfigError("initial.mean", "dimension does not match the target");
  }
  for (const auto& m : c.metrics) {
    const auto name = canonical_metric(m);
    if (!name) throw ConfigError("metrics", "unknown metric '" + m + "'");
    if (*name == "Z" && !target->has_exact_sampler()) {
      throw ConfigError("metrics", "Z needs a target with an exact sampler");
    }
    if (*name == "chi2" && target->dimension() > 2) {
      throw ConfigError("metrics", "chi2 is only available for d <= 2");
    }
    if ((*name == "y" || *name == "quad") && target->dimension() < 2) {
      throw ConfigError("metrics", "'" + m + "' needs d >= 2");
    }
    if (name->rfind("marginal_kl_", 0) == 0) {
      if (!target->has_marginal()) throw ConfigError("metrics", "target has no closed-form marginal");
      const auto coord = std::stol(name->substr(12));
      if (coord >= target->dimension()) throw ConfigError("metrics", "marginal_kl coordinate out of range");
    }
  }
}

}  // namespace bdec
