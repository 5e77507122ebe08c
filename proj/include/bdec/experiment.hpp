#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bdec/config.hpp"
#include "bdec/diagnostics.hpp"
#include "bdec/mode_registry.hpp"
#include "bdec/parallel.hpp"
#include "bdec/random.hpp"
#include "bdec/samplers.hpp"
#include "bdec/target.hpp"

namespace bdec {

// ---------------------------------------------------------------------------
// Presets

inline std::vector<std::string> preset_names() {
  return {"example1-bdec", "example1-bdls", "example1-lec", "example1-ula", "sur2d-bdec",
          "sur2d-lec",     "skew20d-bdec",  "skew20d-bdls", "skew20d-lec"};
}

inline ExperimentConfig preset(const std::string& name) {
  const auto dash = name.rfind('-');
  const std::string family = dash == std::string::npos ? name : name.substr(0, dash);
  const std::string algo = dash == std::string::npos ? "" : name.substr(dash + 1);
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ConfigError("preset", "unknown preset '" + name + "'");
  }

  ExperimentConfig c;
  c.name = name;
  c.sampler.algorithm = *parse_algorithm(algo);
  if (family == "example1") {
    c.target.id = "example1-gmm";
    c.sampler.n = c.sampler.n_hot = 2000;
    c.sampler.dt = 0.005;
    c.sampler.iterations = 50;
    c.sampler.moves_per_iteration = 6;
    c.sampler.beta_hot = 0.05;
    c.sampler.batch_size = 12;
    c.metrics = {"x", "y", "abs_x", "quad", "Z", "mode_count", "acceptance_rate"};
  } else if (family == "sur2d") {
    c.target.id = "sur2d";
    c.sampler.n = c.sampler.n_hot = 1000;
    c.sampler.dt = 0.005;
    c.sampler.iterations = 30;
    c.sampler.moves_per_iteration = 5;
    c.sampler.beta_hot = 0.05;
    c.sampler.batch_size = 12;
    c.metrics = {"x", "y", "quad", "mode_count", "acceptance_rate"};
  } else {
    c.target.id = "skew20d";
    c.sampler.n = c.sampler.n_hot = 1000;
    c.sampler.dt = 0.001;
    c.sampler.iterations = 30;
    c.sampler.moves_per_iteration = 3;
    c.sampler.beta_hot = 5e-5;
    c.sampler.batch_size = 10;
    c.metrics = {"marginal_kl coordinate=0", "mode_count", "acceptance_rate"};
  }
  c.sampler.h = 0.05;
  c.output_dir = "out/" + name;
  return c;
}

/// Quadrature range covering the marginal of `coordinate`, used when the
/// config leaves kl_grid unset.
inline Grid1D default_kl_grid(const TargetSpec& spec, Eigen::Index coordinate) {
  if (spec.id == "example1-gmm") return coordinate == 0 ? Grid1D{-9.0, 9.0, 2001} : Grid1D{-7.0, 17.0, 2001};
  if (spec.id == "skew20d") return Grid1D{-36.0, 36.0, 2001};
  if (spec.id == "gmm") {
    const auto d = spec.means.front().size();
    const auto c = static_cast<std::size_t>(coordinate);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t k = 0; k < spec.means.size(); ++k) {
      const double sd = std::sqrt(spec.covariances[k][c * d + c]);
      lo = std::min(lo, spec.means[k][c] - 8.0 * sd);
      hi = std::max(hi, spec.means[k][c] + 8.0 * sd);
    }
    return Grid1D{lo, hi, 2001};
  }
  return Grid1D{-8.0, 8.0, 2001};
}

inline std::optional<Chi2Grid> default_chi2_grid(const TargetSpec& spec) {
  if (spec.id == "example1-gmm") return Chi2Grid{{-9.0, 9.0, 501}, {-7.0, 17.0, 501}};
  if (spec.id == "gaussian-test") return Chi2Grid{{-8.0, 8.0, 501}, {-8.0, 8.0, 501}};
  if (spec.id == "gmm") {
    Chi2Grid g{default_kl_grid(spec, 0), {}};
    g.x.n = 501;
    if (spec.means.front().size() > 1) {
      g.y = default_kl_grid(spec, 1);
      g.y.n = 501;
    }
    return g;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Initial ensembles

/// Column i is drawn from RandomStream(seed, domain, i), so the draw does not
/// depend on how the work is split.
inline Matrix draw_initial(const ExperimentConfig& c, const TargetDensity& target, int n,
                           std::uint64_t seed, StreamDomain domain) {
  const auto d = target.dimension();
  Matrix out(d, n);
  const bool exact = c.initial ? c.initial->exact
                               : (c.target.id == "gaussian-test" || c.target.id == "gmm");
  std::optional<CholeskyFactor> chol;
  Vector mean;
  if (!exact) {
    if (c.initial) {
      mean = Eigen::Map<const Vector>(c.initial->mean.data(), d);
      Matrix cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          c.initial->covariance.data(), d, d);
      try {
        chol = cholesky(cov);
      } catch (const NotPositiveDefinite&) {
        throw ConfigError("initial.covariance", "not positive definite");
      }
    } else if (c.target.id == "example1-gmm") {
      mean = example1::initial_mean();
      chol = cholesky(example1::initial_covariance());
    } else if (c.target.id == "sur2d") {
      mean = sur::initial_point();
      chol = cholesky(Matrix::Identity(d, d));
    } else if (c.target.id == "skew20d") {
      mean = skew20d::locations().front();
      chol = cholesky(Matrix::Identity(d, d));
    }
  }
  for (int i = 0; i < n; ++i) {
    RandomStream rng(seed, domain, static_cast<std::uint64_t>(i));
    out.col(i) = exact ? target.sample_exact(rng) : mvn_sample(rng, mean, *chol);
  }
  return out;
}

inline ModeAtlas load_initial_atlas(const ExperimentConfig& c, const TargetDensity& target) {
  if (c.initial_atlas.is_null()) return ModeAtlas(target.dimension());
  json doc = c.initial_atlas;
  if (doc.is_string()) {
    std::ifstream in(doc.get<std::string>());
    if (!in) throw ConfigError("initial_atlas", "cannot open '" + doc.get<std::string>() + "'");
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("initial_atlas", e.what());
    }
  }
  try {
    ModeAtlas atlas = ModeAtlas::from_json(doc, &target);
    if (atlas.dimension() != target.dimension()) throw ConfigError("initial_atlas", "dimension mismatch");
    return atlas;
  } catch (const json::exception& e) {
    throw ConfigError("initial_atlas", e.what());
  } catch (const NotPositiveDefinite& e) {
    throw ConfigError("initial_atlas", e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("initial_atlas", e.what());
  }
}

// ---------------------------------------------------------------------------
// Running

struct ReplicateResult {
  RunMetrics metrics;
  SamplerOutcome outcome;
};

struct RunOptions {
  /// Write metrics, atlases, snapshots and the summary under output_dir.
  bool write_files = true;
  /// Receives one JSON progress line per update when set.
  std::ostream* progress = nullptr;
};

namespace experiment_detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::string ensemble_csv(const Ensemble& ens) {
  std::string out;
  for (Eigen::Index i = 0; i < ens.size(); ++i) {
    for (Eigen::Index r = 0; r < ens.dimension(); ++r) {
      if (r > 0) out += ',';
      out += format_double(ens.positions(r, i));
    }
    out += '\n';
  }
  return out;
}

inline std::string snapshot_name(int replicate, int iteration) {
  return replicate == 0 ? "ensemble_iter" + std::to_string(iteration) + ".csv"
                        : "ensemble_rep" + std::to_string(replicate) + "_iter" +
                              std::to_string(iteration) + ".csv";
}

/// Evaluates the configured ensemble metrics; acceptance_rate and mode_count
/// are handled by the caller.
class MetricSet {
 public:
  MetricSet(const ExperimentConfig& c, const TargetDensity& target, std::uint64_t seed)
      : config_(c), target_(target) {
    for (const auto& m : c.metrics) names_.push_back(*canonical_metric(m));
    if (wants("Z")) {
      references_.resize(target.dimension(), c.reference_samples);
      for (int k = 0; k < c.reference_samples; ++k) {
        RandomStream rng(seed, StreamDomain::reference, static_cast<std::uint64_t>(k));
        references_.col(k) = target.sample_exact(rng);
      }
    }
    if (wants("chi2")) {
      auto grid = c.chi2_grid ? c.chi2_grid : default_chi2_grid(c.target);
      if (!grid) throw ConfigError("chi2_grid", "required for target '" + c.target.id + "'");
      chi2_.emplace(target, *grid);
    }
  }

  void record(RunMetrics& out, int iteration, int update, const Ensemble& ens, const ModeAtlas& atlas,
              std::optional<double> acceptance) const {
    const auto& p = ens.positions;
    const double n = static_cast<double>(ens.size());
    for (const auto& name : names_) {
      if (name == "x") {
        out.add(iteration, update, name, p.row(0).sum() / n);
      } else if (name == "y") {
        out.add(iteration, update, name, p.row(1).sum() / n);
      } else if (name == "abs_x") {
        out.add(iteration, update, name, p.row(0).cwiseAbs().sum() / n);
      } else if (name == "quad") {
        out.add(iteration, update, name,
                (p.row(0).array().square() / 3.0 + p.row(1).array().square() / 5.0).sum() / n);
      } else if (name == "Z") {
        out.add(iteration, update, name, estimate_Z(ens, references_, config_.sampler.h));
      } else if (name == "mode_count") {
        out.add(iteration, update, name, static_cast<double>(atlas.size()));
      } else if (name == "acceptance_rate") {
        if (acceptance) out.add(iteration, update, name, *acceptance);
      } else if (name == "chi2") {
        out.add(iteration, update, name, chi2_->evaluate(ens, config_.sampler.h).divergence);
      } else {
        const auto coord = static_cast<Eigen::Index>(std::stol(name.substr(12)));
        const Grid1D grid = config_.kl_grid ? *config_.kl_grid : default_kl_grid(config_.target, coord);
        const auto& t = target_;
        out.add(iteration, update, name,
                marginal_kl(ens, coord, [&t, coord](double u) { return t.marginal_log_density(coord, u); },
                            config_.sampler.h, grid));
      }
    }
  }

 private:
  bool wants(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
  }

  const ExperimentConfig& config_;
  const TargetDensity& target_;
  std::vector<std::string> names_;
  Matrix references_;
  std::optional<Chi2Evaluator> chi2_;
};

}  // namespace experiment_detail

/// Runs replicate r with seed sampler.seed + r. Metrics are recorded for the
/// initial ensemble (update 0) and after every update.
inline ReplicateResult run_replicate(const ExperimentConfig& c, int replicate,
                                     const RunOptions& options = {},
                                     std::mutex* progress_mutex = nullptr) {
  using namespace experiment_detail;
  const auto target = make_target(c.target);
  const std::uint64_t seed = c.sampler.seed + static_cast<std::uint64_t>(replicate);
  SamplerConfig sampler = c.sampler;
  sampler.seed = seed;

  const bool explores = sampler.algorithm == Algorithm::bdec || sampler.algorithm == Algorithm::lec;
  Ensemble x = Ensemble::create(draw_initial(c, *target, sampler.n, seed, StreamDomain::init_target), seed,
                                StreamDomain::target_chain);
  Ensemble y = explores ? Ensemble::create(draw_initial(c, *target, sampler.n_hot, seed, StreamDomain::init_hot),
                                           seed, StreamDomain::hot_chain)
                        : Ensemble{};
  ModeAtlas atlas = load_initial_atlas(c, *target);

  const std::filesystem::path dir(c.output_dir);
  const bool snapshots = options.write_files && c.snapshot_every > 0;
  MetricSet metric_set(c, *target, seed);
  ReplicateResult result{RunMetrics(replicate), {}};
  metric_set.record(result.metrics, 0, 0, x, atlas, std::nullopt);
  if (snapshots) write_text(dir / snapshot_name(replicate, 0), ensemble_csv(x));

  const int T = sampler.moves_per_iteration;
  auto hook = [&](const UpdateEvent& ev) {
    metric_set.record(result.metrics, ev.iteration, ev.update, *ev.ensemble, *ev.atlas, ev.acceptance_rate);
    if (snapshots && ev.update % T == 0 && ev.iteration % c.snapshot_every == 0) {
      write_text(dir / snapshot_name(replicate, ev.iteration), ensemble_csv(*ev.ensemble));
    }
    if (options.progress != nullptr) {
      json line = {{"replicate", replicate},
                   {"iteration", ev.iteration},
                   {"update", ev.update},
                   {"modes_found", ev.atlas->size()}};
      line["acceptance_rate"] = ev.acceptance_rate ? json(*ev.acceptance_rate) : json(nullptr);
      std::unique_lock<std::mutex> lock;
      if (progress_mutex != nullptr) lock = std::unique_lock(*progress_mutex);
      *options.progress << line.dump() << '\n' << std::flush;
    }
  };
  result.outcome = run_algorithm(sampler, *target, std::move(x), std::move(y), std::move(atlas), hook);
  return result;
}

/// Per-(metric, update) mean and sample standard deviation across replicates.
inline json summarize(const std::vector<RunMetrics>& runs) {
  struct Acc {
    int iteration = 0;
    std::vector<double> values;
  };
  std::map<std::string, std::map<int, Acc>> table;
  for (const auto& run : runs) {
    for (const auto& r : run.records()) {
      auto& acc = table[r.metric][r.update];
      acc.iteration = r.iteration;
      acc.values.push_back(r.value);
    }
  }
  json metrics = json::object();
  for (const auto& [name, by_update] : table) {
    json rows = json::array();
    for (const auto& [update, acc] : by_update) {
      const double n = static_cast<double>(acc.values.size());
      double mean = 0.0;
      for (double v : acc.values) mean += v;
      mean /= n;
      double ss = 0.0;
      for (double v : acc.values) ss += (v - mean) * (v - mean);
      const double sd = acc.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      rows.push_back({{"iteration", acc.iteration},
                      {"update", update},
                      {"mean", mean},
                      {"std", sd},
                      {"count", acc.values.size()}});
    }
    metrics[name] = rows;
  }
  return metrics;
}

struct ExperimentResult {
  std::vector<ReplicateResult> replicates;
  json summary;
};

/// Validates the config, runs all replicates and (optionally) writes
/// metrics_rep<r>.csv, atlas files, snapshots, config.json and summary.json.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const RunOptions& options = {}) {
  using namespace experiment_detail;
  validate(c);
  const std::filesystem::path dir(c.output_dir);
  if (options.write_files) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
    write_text(dir / "config.json", to_json(c).dump(2) + "\n");
  }

  ExperimentResult result;
  result.replicates.resize(static_cast<std::size_t>(c.replicates));
  std::mutex progress_mutex;
  const int workers = c.parallel_replicates
                          ? std::max(1, static_cast<int>(std::thread::hardware_concurrency()))
                          : 1;
  parallel_for(result.replicates.size(), workers, [&](std::size_t r) {
    result.replicates[r] = run_replicate(c, static_cast<int>(r), options, &progress_mutex);
  });

  std::vector<RunMetrics> runs;
  for (const auto& rep : result.replicates) runs.push_back(rep.metrics);
  result.summary = {{"name", c.name},
                    {"algorithm", std::string(to_string(c.sampler.algorithm))},
                    {"replicates", c.replicates},
                    {"metrics", summarize(runs)}};

  if (options.write_files) {
    for (std::size_t r = 0; r < result.replicates.size(); ++r) {
      const auto& rep = result.replicates[r];
      const std::string tag = std::to_string(r);
      write_text(dir / ("metrics_rep" + tag + ".csv"), rep.metrics.to_csv());
      const std::string atlas = rep.outcome.atlas.to_json().dump(2) + "\n";
      write_text(dir / ("atlas_final_rep" + tag + ".json"), atlas);
      if (r == 0) write_text(dir / "atlas_final.json", atlas);
    }
    write_text(dir / "summary.json", result.summary.dump(2) + "\n");
  }
  return result;
}

}  // namespace bdec
