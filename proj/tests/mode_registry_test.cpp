#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "support.hpp"

namespace bdec {
namespace {

using testing::make_mode;

/// Maximizes f on a shrinking grid around `start` (pattern refinement).
Vector grid_refine_max(const std::function<double(double, double)>& f, Vector centre, double span, int rounds) {
  for (int r = 0; r < rounds; ++r) {
    double best = -std::numeric_limits<double>::infinity();
    Vector arg = centre;
    for (int a = -20; a <= 20; ++a) {
      for (int b = -20; b <= 20; ++b) {
        const double x = centre(0) + span * a / 20.0;
        const double y = centre(1) + span * b / 20.0;
        const double v = f(x, y);
        if (v > best) {
          best = v;
          arg = Vector{{x, y}};
        }
      }
    }
    centre = arg;
    span /= 8.0;
  }
  return centre;
}

double example1_naive_log(double x, double y) {
  const double mx[] = {0.0, 0.0, -3.0, 3.0}, my[] = {8.0, 2.0, 5.0, 5.0};
  const double vx[] = {1.2, 1.2, 0.01, 0.01}, vy[] = {0.01, 0.01, 2.0, 2.0};
  double total = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double dx = x - mx[k], dy = y - my[k];
    total += std::exp(-0.5 * (dx * dx / vx[k] + dy * dy / vy[k])) / std::sqrt(vx[k] * vy[k]);
  }
  return std::log(total);
}

double sur_neg_log_det(double x1, double x2) {
  const double a = 7.70 * x1 * x1 - 19.27 * x1 + 21.09;
  const double c = 27.31 * x2 * x2 - 97.40 * x2 + 114.19;
  const double b = -5.11 * x1 * x2 - 3.42 * x1 - 3.51 * x2 + 23.52;
  return -std::log(a * c - b * b);
}

TEST(ModeDistance, ClosedFormExamples) {
  const auto k = make_mode(Vector{{1.0, 0.0}}, Matrix::Identity(2, 2));
  const auto l = make_mode(Vector{{0.0, 0.0}}, Matrix::Identity(2, 2));
  EXPECT_DOUBLE_EQ(mode_distance(k, k), 0.0);
  EXPECT_DOUBLE_EQ(mode_distance(k, l), 0.5);
  const auto thin = make_mode(Vector{{1.0, 0.0}}, Vector{{0.01, 2.0}}.asDiagonal());
  EXPECT_NEAR(mode_distance(thin, l), 50.0, 1e-12);
  EXPECT_NEAR(mode_distance(l, thin), 50.0, 1e-12);
}

TEST(ModeDistance, SymmetricAndNonNegative) {
  RandomStream rng(31, StreamDomain::user, 0);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(5));
    const auto a = make_mode(testing::random_vector(rng, d), testing::random_spd(rng, d));
    const auto b = make_mode(testing::random_vector(rng, d), testing::random_spd(rng, d));
    const double dab = mode_distance(a, b);
    EXPECT_GE(dab, 0.0);
    EXPECT_NEAR(dab, mode_distance(b, a), 1e-12 * (1.0 + dab));
  }
}

TEST(DefaultThreshold, ClosedFormExamples) {
  EXPECT_DOUBLE_EQ(default_threshold(2), 2.0);
  EXPECT_NEAR(default_threshold(20), 1.31623, 1e-5);
  EXPECT_NEAR(default_threshold(1), 2.41421356, 1e-8);
  EXPECT_THROW(default_threshold(0), std::invalid_argument);
}

TEST(Weights, FormulaExamples) {
  const Matrix eye = Matrix::Identity(2, 2);
  std::vector<ModeInfo> one{make_mode(Vector::Zero(2), eye, -3.0)};
  EXPECT_EQ(recompute_weights(one), std::vector<double>{1.0});

  std::vector<ModeInfo> twin{make_mode(Vector::Zero(2), eye, -1.0), make_mode(Vector::Ones(2), eye, -1.0)};
  const auto w = recompute_weights(twin);
  EXPECT_NEAR(w[0], 0.5, 1e-15);
  EXPECT_NEAR(w[1], 0.5, 1e-15);

  std::vector<ModeInfo> tilted{make_mode(Vector::Zero(2), eye, std::log(2.0) - 4.0),
                               make_mode(Vector::Ones(2), eye, -4.0)};
  const auto v = recompute_weights(tilted);
  EXPECT_NEAR(v[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(v[1], 1.0 / 3.0, 1e-15);
}

TEST(Weights, DeterminantEntersAsSquareRoot) {
  // pi equal, |Sigma_1| = 4 |Sigma_2|  ->  weights 2/3, 1/3.
  std::vector<ModeInfo> modes{make_mode(Vector::Zero(1), Matrix{{4.0}}, 0.0),
                              make_mode(Vector::Ones(1), Matrix{{1.0}}, 0.0)};
  const auto w = recompute_weights(modes);
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-14);
}

TEST(Weights, SurviveExtremeLogDensities) {
  const Matrix eye = Matrix::Identity(1, 1);
  std::vector<ModeInfo> modes{make_mode(Vector::Zero(1), eye, -5000.0), make_mode(Vector::Ones(1), eye, -5001.0)};
  const auto w = recompute_weights(modes);
  EXPECT_NEAR(w[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-14);
}

TEST(FindMode, QuadraticFromOffsetStart) {
  const auto t = GaussianTarget::standard(2);
  const auto r = find_mode(t, Vector{{3.0, -4.0}});
  ASSERT_EQ(r.status, ModeSearchStatus::found);
  EXPECT_LE(r.mode->location.norm(), 1e-6);
  EXPECT_LE((r.mode->covariance.covariance() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_NEAR(r.mode->log_density, 0.0, 1e-10);
}

TEST(FindMode, CorrelatedGaussianRecoversCovariance) {
  const Matrix sigma{{2.0, 0.8}, {0.8, 0.5}};
  GaussianTarget t(Vector{{1.0, -1.0}}, sigma);
  const auto r = find_mode(t, Vector{{-3.0, 4.0}});
  ASSERT_EQ(r.status, ModeSearchStatus::found);
  EXPECT_LE((r.mode->location - Vector{{1.0, -1.0}}).norm(), 1e-5);
  EXPECT_LE((r.mode->covariance.covariance() - sigma).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FindMode, SurFirstModeFromNearbyStart) {
  SurTarget t;
  const auto r = find_mode(t, Vector{{1.0, 1.5}});
  ASSERT_EQ(r.status, ModeSearchStatus::found);
  EXPECT_LE((r.mode->location - sur::reported_modes()[0]).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(FindMode, SurModesMatchGridOracle) {
  SurTarget t;
  for (const auto& start : {Vector{{1.0, 1.5}}, Vector{{2.7, 2.4}}}) {
    const Vector oracle = grid_refine_max(sur_neg_log_det, start, 0.5, 12);
    const auto r = find_mode(t, start);
    ASSERT_EQ(r.status, ModeSearchStatus::found);
    EXPECT_LE((r.mode->location - oracle).norm(), 1e-5) << oracle.transpose();
  }
  // The computed second mode, for reference.
  const auto second = find_mode(t, Vector{{2.7, 2.4}});
  EXPECT_NEAR(second.mode->location(0), 2.8311, 1e-3);
  EXPECT_NEAR(second.mode->location(1), 2.5137, 1e-3);
}

TEST(FindMode, Example1UpperModeMatchesGridOracle) {
  const auto t = example1::target();
  const Vector oracle = grid_refine_max(example1_naive_log, Vector{{0.0, 8.0}}, 0.5, 12);
  const auto r = find_mode(t, Vector{{0.1, 7.9}});
  ASSERT_EQ(r.status, ModeSearchStatus::found);
  EXPECT_LE((r.mode->location - oracle).norm(), 1e-3);
}

TEST(FindMode, CriticalPointThatIsNotAMaximumIsRejected) {
  // Symmetric bimodal 1D mixture: x = 0 is a density minimum with zero gradient.
  const auto c = cholesky(Matrix{{1.0}});
  GaussianMixtureTarget t(GaussianMixture({{Vector{{-2.0}}, c}, {Vector{{2.0}}, c}}, {0.5, 0.5}));
  const auto r = find_mode(t, Vector{{0.0}});
  EXPECT_EQ(r.status, ModeSearchStatus::not_a_minimum);
  EXPECT_FALSE(r.mode.has_value());
}

TEST(FindMode, IterationCapReportsNotConverged) {
  BfgsOptions opts;
  opts.max_iterations = 1;
  const auto r = find_mode(example1::target(), Vector{{1.0, 6.0}}, opts);
  EXPECT_EQ(r.status, ModeSearchStatus::not_converged);
}

TEST(Bfgs, RosenbrockConverges) {
  auto f = [](const Vector& x, Vector& g) {
    const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
    g.resize(2);
    g(0) = -2.0 * a - 400.0 * x(0) * b;
    g(1) = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  BfgsOptions opts;
  opts.max_iterations = 2000;
  const auto r = minimize_bfgs(f, Vector{{-1.2, 1.0}}, opts);
  EXPECT_EQ(r.status, BfgsStatus::converged);
  EXPECT_LE((r.x - Vector{{1.0, 1.0}}).norm(), 1e-4);
}

TEST(Bfgs, NonFiniteStartIsReported) {
  auto f = [](const Vector&, Vector& g) {
    g = Vector::Zero(1);
    return std::numeric_limits<double>::infinity();
  };
  EXPECT_EQ(minimize_bfgs(f, Vector{{0.0}}).status, BfgsStatus::non_finite_start);
}

TEST(Exploration, PointAtKnownModeAddsNothing) {
  const auto t = example1::target();
  ModeAtlas atlas(2);
  const std::vector<Vector> seed_batch{Vector{{0.1, 7.9}}};
  atlas = exploration_step(seed_batch, atlas, t, default_threshold(2)).atlas;
  ASSERT_EQ(atlas.size(), 1u);
  const std::vector<Vector> again{atlas.modes()[0].location};
  const auto r = exploration_step(again, atlas, t, default_threshold(2));
  EXPECT_FALSE(r.new_found);
  EXPECT_EQ(r.atlas.size(), 1u);
  EXPECT_EQ(r.atlas.modes()[0].location, atlas.modes()[0].location);
}

TEST(Exploration, EmptyAtlasGainsFirstMode) {
  const auto t = GaussianTarget::standard(3);
  const std::vector<Vector> batch{Vector{{0.3, -0.2, 0.1}}};
  const auto r = exploration_step(batch, ModeAtlas(3), t, default_threshold(3));
  EXPECT_TRUE(r.new_found);
  ASSERT_EQ(r.atlas.size(), 1u);
  EXPECT_EQ(r.atlas.weights(), std::vector<double>{1.0});
}

TEST(Exploration, SecondExample1ModeGetsEqualWeight) {
  const auto t = example1::target();
  ModeAtlas atlas(2);
  atlas = exploration_step(std::vector<Vector>{Vector{{0.0, 8.0}}}, atlas, t, 2.0).atlas;
  const auto r = exploration_step(std::vector<Vector>{Vector{{0.1, 2.1}}}, atlas, t, 2.0);
  EXPECT_TRUE(r.new_found);
  ASSERT_EQ(r.atlas.size(), 2u);
  EXPECT_LE((r.atlas.modes()[1].location - Vector{{0.0, 2.0}}).norm(), 1e-2);
  EXPECT_NEAR(r.atlas.weights()[0], 0.5, 1e-3);
  EXPECT_NEAR(r.atlas.weights()[1], 0.5, 1e-3);
}

TEST(Exploration, DuplicatesWithinOneBatchAreMerged) {
  const auto t = example1::target();
  const std::vector<Vector> batch{Vector{{0.1, 2.05}}, Vector{{-0.2, 1.95}}, Vector{{0.05, 2.0}}};
  const auto r = exploration_step(batch, ModeAtlas(2), t, 2.0);
  EXPECT_EQ(r.atlas.size(), 1u);
}

TEST(Exploration, BatchesCoveringAllBasinsFindExactlyTheFourComponents) {
  const auto t = example1::target();
  const std::vector<Vector> batch{Vector{{0.2, 8.05}}, Vector{{-0.3, 1.97}}, Vector{{-3.02, 5.4}},
                                  Vector{{2.98, 4.6}}, Vector{{0.1, 7.95}}};
  const auto r = exploration_step(batch, ModeAtlas(2), t, default_threshold(2));
  ASSERT_EQ(r.atlas.size(), 4u);
  for (const auto& mean : example1::means()) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : r.atlas.modes()) best = std::min(best, (m.location - mean).norm());
    EXPECT_LE(best, 1e-2) << mean.transpose();
  }
}

// Property: random batches on Example 1 keep pairwise distances above the
// threshold, weights fresh, the atlas size monotone and a repeated batch idle.
TEST(Exploration, RandomBatchesPreserveAtlasInvariants) {
  const auto t = example1::target();
  const TemperedTarget hot(t, 0.05);
  RandomStream rng(32, StreamDomain::user, 0);
  const double thr = default_threshold(2);
  ModeAtlas atlas(2);
  for (int round = 0; round < 20; ++round) {
    std::vector<Vector> batch;
    for (int b = 0; b < 6; ++b) batch.push_back(testing::uniform_vector(rng, Vector{{-6.0, -4.0}}, Vector{{6.0, 14.0}}));
    const auto before = atlas.size();
    atlas = exploration_step(batch, atlas, t, thr, 2).atlas;
    EXPECT_GE(atlas.size(), before);

    const auto again = exploration_step(batch, atlas, t, thr);
    EXPECT_FALSE(again.new_found);
    EXPECT_EQ(again.atlas.size(), atlas.size());

    const auto fresh = recompute_weights(atlas.modes());
    for (std::size_t j = 0; j < fresh.size(); ++j) EXPECT_NEAR(atlas.weights()[j], fresh[j], 1e-12);
    double total = 0.0;
    for (double w : atlas.weights()) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (std::size_t a = 0; a < atlas.size(); ++a) {
      for (std::size_t b = a + 1; b < atlas.size(); ++b) {
        EXPECT_GT(mode_distance(atlas.modes()[a], atlas.modes()[b]), thr);
      }
      EXPECT_LE(t.grad_log_density(atlas.modes()[a].location).norm(),
                1e-6 * (1.0 + std::abs(atlas.modes()[a].log_density)));
    }
  }
  EXPECT_GE(atlas.size(), 4u);
}

TEST(Exploration, ParallelSearchMatchesSerial) {
  const auto t = example1::target();
  RandomStream rng(33, StreamDomain::user, 0);
  std::vector<Vector> batch;
  for (int b = 0; b < 12; ++b) batch.push_back(testing::uniform_vector(rng, Vector{{-5.0, -2.0}}, Vector{{5.0, 12.0}}));
  const auto serial = exploration_step(batch, ModeAtlas(2), t, 2.0, 1);
  const auto parallel = exploration_step(batch, ModeAtlas(2), t, 2.0, 4);
  ASSERT_EQ(serial.atlas.size(), parallel.atlas.size());
  for (std::size_t j = 0; j < serial.atlas.size(); ++j) {
    EXPECT_EQ(serial.atlas.modes()[j].location, parallel.atlas.modes()[j].location);
  }
}

TEST(AtlasJson, RoundTripPreservesModesAndWeights) {
  std::vector<ModeInfo> modes{make_mode(Vector{{0.0, 8.0}}, Vector{{1.2, 0.01}}.asDiagonal(), -1.0),
                              make_mode(Vector{{3.0, 5.0}}, Matrix{{0.5, 0.1}, {0.1, 2.0}}, -2.5)};
  const ModeAtlas atlas(2, modes);
  const auto doc = atlas.to_json();
  const auto back = ModeAtlas::from_json(nlohmann::json::parse(doc.dump()));
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(back.modes()[j].location, atlas.modes()[j].location);
    EXPECT_TRUE(back.modes()[j].covariance.covariance().isApprox(atlas.modes()[j].covariance.covariance(), 1e-14));
    EXPECT_NEAR(back.weights()[j], atlas.weights()[j], 1e-15);
  }
  EXPECT_EQ(doc["modes"][1]["covariance"].size(), 4u);
  EXPECT_DOUBLE_EQ(doc["modes"][1]["covariance"][1].get<double>(), 0.1);
}

TEST(AtlasJson, TargetReevaluatesLogDensity) {
  auto doc = ModeAtlas(2, {make_mode(Vector{{0.0, 8.0}}, Vector{{1.2, 0.01}}.asDiagonal(), 123.0)}).to_json();
  const auto t = example1::target();
  const auto back = ModeAtlas::from_json(doc, &t);
  EXPECT_NEAR(back.modes()[0].log_density, t.log_density(Vector{{0.0, 8.0}}), 1e-14);
}

TEST(AtlasJson, MalformedDocumentsAreRejected) {
  nlohmann::json doc = {{"dimension", 2}, {"modes", {{{"location", {1.0}}, {"covariance", {1.0}}, {"log_density", 0.0}}}}};
  EXPECT_THROW(ModeAtlas::from_json(doc), std::invalid_argument);
  doc = {{"dimension", 1}, {"modes", {{{"location", {1.0}}, {"covariance", {-1.0}}, {"log_density", 0.0}}}}};
  EXPECT_THROW(ModeAtlas::from_json(doc), NotPositiveDefinite);
}

}  // namespace
}  // namespace bdec
