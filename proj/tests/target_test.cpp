#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <vector>

#include "support.hpp"

namespace bdec {
namespace {

// Independent evaluation of det Sigma(x) for the SUR target, written out
// from the coefficient table.
double sur_det(double x1, double x2) {
  const double a = 7.70 * x1 * x1 - 19.27 * x1 + 21.09;
  const double c = 27.31 * x2 * x2 - 97.40 * x2 + 114.19;
  const double b = -5.11 * x1 * x2 - 3.42 * x1 - 3.51 * x2 + 23.52;
  return a * c - b * b;
}

struct NamedTarget {
  std::string label;
  std::shared_ptr<TargetDensity> target;
  std::function<Vector(RandomStream&)> draw;
};

std::vector<NamedTarget> shipped_targets() {
  std::vector<NamedTarget> out;
  auto e1 = std::make_shared<GaussianMixtureTarget>(example1::target());
  out.push_back({"example1", e1, [e1](RandomStream& r) { return e1->sample_exact(r); }});
  auto sur = std::make_shared<SurTarget>(1.0);
  out.push_back({"sur2d", sur, [sur](RandomStream& r) {
                   for (;;) {
                     const Vector x = testing::uniform_vector(r, Vector{{0.0, 1.0}}, Vector{{3.5, 3.2}});
                     if (std::isfinite(sur->log_density(x))) return x;
                   }
                 }});
  auto skew = std::make_shared<SkewNormalMixtureTarget>(skew20d::target());
  out.push_back({"skew20d", skew, [skew](RandomStream& r) { return skew->sample_exact(r); }});
  auto gauss = std::make_shared<GaussianTarget>(Vector{{1.0, -2.0, 0.5}},
                                                Matrix{{2.0, 0.3, 0.0}, {0.3, 1.0, -0.2}, {0.0, -0.2, 0.5}});
  out.push_back({"gaussian", gauss, [gauss](RandomStream& r) { return gauss->sample_exact(r); }});
  return out;
}

TEST(Targets, AnalyticGradientMatchesFiniteDifferences) {
  for (const auto& nt : shipped_targets()) {
    SCOPED_TRACE(nt.label);
    RandomStream rng(21, StreamDomain::user, 0);
    const auto& t = *nt.target;
    for (int i = 0; i < 100; ++i) {
      const Vector x = nt.draw(rng);
      const Vector g = t.grad_log_density(x);
      const Vector fd = finite_difference_gradient([&t](const Vector& p) { return t.log_density(p); }, x);
      ASSERT_TRUE(fd.allFinite());
      EXPECT_LE((g - fd).norm(), 1e-4 * std::max(1.0, g.norm())) << "at point " << i;
    }
  }
}

TEST(Targets, AnalyticHessianMatchesFiniteDifferences) {
  for (const auto& nt : shipped_targets()) {
    SCOPED_TRACE(nt.label);
    RandomStream rng(22, StreamDomain::user, 0);
    const auto& t = *nt.target;
    for (int i = 0; i < 100; ++i) {
      const Vector x = nt.draw(rng);
      const Matrix h = t.hessian_log_density(x);
      const Matrix fd = finite_difference_jacobian_sym([&t](const Vector& p) { return t.grad_log_density(p); }, x);
      ASSERT_TRUE(fd.allFinite());
      EXPECT_TRUE(h.isApprox(h.transpose(), 1e-14));
      EXPECT_LE((h - fd).norm(), 1e-3 * std::max(1.0, h.norm())) << "at point " << i;
    }
  }
}

TEST(Targets, TemperingScalesDerivatives) {
  for (const auto& nt : shipped_targets()) {
    SCOPED_TRACE(nt.label);
    RandomStream rng(23, StreamDomain::user, 0);
    for (double beta : {0.05, 0.00005}) {
      TemperedTarget hot(*nt.target, beta);
      for (int i = 0; i < 100; ++i) {
        const Vector x = nt.draw(rng);
        const Vector g = nt.target->grad_log_density(x);
        EXPECT_LE((hot.grad_log_density(x) - beta * g).norm(), 1e-15 * (1.0 + beta * g.norm()));
        EXPECT_NEAR(hot.log_density(x), beta * nt.target->log_density(x), 1e-15 * (1.0 + std::abs(nt.target->log_density(x))));
      }
    }
  }
}

TEST(GaussianTarget, QuadraticCase) {
  const auto t = GaussianTarget::standard(2);
  EXPECT_EQ(t.log_density(Vector::Zero(2)), 0.0);
  EXPECT_TRUE(t.grad_log_density(Vector{{1.0, 0.0}}).isApprox(Vector{{-1.0, 0.0}}));
  EXPECT_TRUE(t.hessian_log_density(Vector{{3.0, -7.0}}).isApprox(-Matrix::Identity(2, 2)));
}

TEST(GaussianTarget, HessianIsNegativePrecision) {
  const Matrix sigma{{2.0, 0.5}, {0.5, 1.0}};
  GaussianTarget t(Vector{{1.0, 2.0}}, sigma);
  EXPECT_TRUE(t.hessian_log_density(Vector{{-4.0, 9.0}}).isApprox(-sigma.inverse(), 1e-12));
}

TEST(Example1, LogDensityAtUpperMeanIsDirectSum) {
  const auto t = example1::target();
  const Vector x{{0.0, 8.0}};
  double total = 0.0;
  const double vx[] = {1.2, 1.2, 0.01, 0.01};
  const double vy[] = {0.01, 0.01, 2.0, 2.0};
  const auto m = example1::means();
  for (int k = 0; k < 4; ++k) {
    const double dx = x(0) - m[k](0), dy = x(1) - m[k](1);
    total += 0.25 * std::exp(-0.5 * (dx * dx / vx[k] + dy * dy / vy[k])) /
             (2.0 * std::numbers::pi * std::sqrt(vx[k] * vy[k]));
  }
  EXPECT_NEAR(t.log_density(x), std::log(total), 1e-12 * std::abs(std::log(total)));
}

TEST(Example1, HessianAtTallComponentMean) {
  const auto t = example1::target();
  const Matrix h = t.hessian_log_density(Vector{{-3.0, 5.0}});
  EXPECT_NEAR(h(0, 0), -100.0, 1.0);
  EXPECT_NEAR(h(1, 1), -0.5, 0.005);
  EXPECT_NEAR(h(0, 1), 0.0, 1e-6);
}

TEST(Example1, MomentsMatchClosedFormAndMonteCarlo) {
  // Closed form from the component parameters.
  const double ex2 = (0.0 + 0.0 + 9.0 + 9.0 + 1.2 + 1.2 + 0.01 + 0.01) / 4.0;
  const double ey2 = (64.0 + 4.0 + 25.0 + 25.0 + 0.01 + 0.01 + 2.0 + 2.0) / 4.0;
  const double ey = (8.0 + 2.0 + 5.0 + 5.0) / 4.0;
  const double quad = ex2 / 3.0 + ey2 / 5.0;
  // Folded normal: E|N(m, s^2)| = s sqrt(2/pi) exp(-m^2 / 2s^2) + m (1 - 2 Phi(-m/s)).
  auto folded = [](double m, double s) {
    return s * std::sqrt(2.0 / std::numbers::pi) * std::exp(-m * m / (2.0 * s * s)) +
           m * std::erf(m / (s * std::sqrt(2.0)));
  };
  const double eabs = (2.0 * folded(0.0, std::sqrt(1.2)) + 2.0 * folded(3.0, 0.1)) / 4.0;
  EXPECT_NEAR(ey, 5.0, 1e-15);
  EXPECT_NEAR(quad, 7.8027, 5e-5);
  EXPECT_NEAR(eabs, 1.937, 5e-4);

  const auto t = example1::target();
  RandomStream rng(24, StreamDomain::user, 0);
  const int n = 1000000;
  double sy = 0.0, squad = 0.0, sabs = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector x = t.sample_exact(rng);
    sy += x(1);
    squad += x(0) * x(0) / 3.0 + x(1) * x(1) / 5.0;
    sabs += std::abs(x(0));
  }
  EXPECT_NEAR(sy / n, ey, 5e-3 * ey);
  EXPECT_NEAR(squad / n, quad, 5e-3 * quad);
  EXPECT_NEAR(sabs / n, eabs, 5e-3 * eabs);
}

TEST(Example1, MarginalsIntegrateToOne) {
  const auto t = example1::target();
  for (Eigen::Index c = 0; c < 2; ++c) {
    double total = 0.0;
    const double lo = -20.0, step = 0.001;
    for (int k = 0; k <= 40000; ++k) {
      const double w = (k == 0 || k == 40000) ? 0.5 : 1.0;
      total += w * std::exp(t.marginal_log_density(c, lo + k * step));
    }
    EXPECT_NEAR(total * step, 1.0, 1e-6);
  }
}

TEST(Sur, SupportCoversThePlane) {
  // a(x) c(x) dominates b(x)^2 in every direction, so Sigma(x) stays positive definite.
  SurTarget t;
  for (double x1 = -50.0; x1 <= 50.0; x1 += 0.5) {
    for (double x2 = -50.0; x2 <= 50.0; x2 += 0.5) {
      ASSERT_GT(sur_det(x1, x2), 0.0);
      ASSERT_TRUE(std::isfinite(t.log_density(Vector{{x1, x2}})));
    }
  }
}

TEST(Sur, LogDensityMatchesIndependentDeterminant) {
  RandomStream rng(25, StreamDomain::user, 0);
  for (double n : {1.0, 4.0}) {
    SurTarget t(n);
    for (int i = 0; i < 200; ++i) {
      const Vector x = testing::uniform_vector(rng, Vector{{-1.0, -1.0}}, Vector{{5.0, 5.0}});
      const double det = sur_det(x(0), x(1));
      const double a = 7.70 * x(0) * x(0) - 19.27 * x(0) + 21.09;
      if (det > 0.0 && a > 0.0) {
        EXPECT_NEAR(t.log_density(x), -0.5 * n * std::log(det), 1e-12 * (1.0 + std::abs(std::log(det))));
      } else {
        EXPECT_EQ(t.log_density(x), -std::numeric_limits<double>::infinity());
      }
    }
  }
}

TEST(Sur, GradientNearlyVanishesAtFirstReportedMode) {
  SurTarget t;
  EXPECT_LE(t.grad_log_density(sur::reported_modes()[0]).norm(), 1e-2);
}

TEST(Sur, CovarianceIsPositiveDefiniteNearModes) {
  SurTarget t;
  for (const auto& m : {Vector{{0.7794, 1.5467}}, Vector{{2.8311, 2.5137}}}) {
    EXPECT_NO_THROW(cholesky(t.covariance_at(m)));
    EXPECT_NO_THROW(cholesky(-t.hessian_log_density(m)));
  }
}

TEST(SkewNormal, MarginalIntegratesToOneAndMatchesSamples) {
  const auto t = skew20d::target();
  double total = 0.0, mean = 0.0;
  const double lo = -40.0, step = 0.002;
  const int n = 40000;
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 0.5 : 1.0;
    const double u = lo + k * step;
    const double p = std::exp(t.marginal_log_density(0, u));
    total += w * p;
    mean += w * p * u;
  }
  EXPECT_NEAR(total * step, 1.0, 1e-6);

  // Closed form: location + scale * delta * sqrt(2/pi) averaged over components.
  const double delta = 10.0 / std::sqrt(101.0);
  const auto locs = skew20d::locations();
  const auto scales = skew20d::scales();
  double analytic = 0.0;
  for (std::size_t k = 0; k < 4; ++k) analytic += 0.25 * (locs[k](0) + scales[k] * delta * std::sqrt(2.0 / std::numbers::pi));
  EXPECT_NEAR(mean * step, analytic, 1e-6);

  RandomStream rng(26, StreamDomain::user, 0);
  double sample_mean = 0.0;
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) sample_mean += t.sample_exact(rng)(0);
  // Coordinate variance is about 250 (the four locations spread over +-20).
  EXPECT_NEAR(sample_mean / draws, analytic, 4.0 * std::sqrt(260.0 / draws));
}

TEST(SkewNormal, LogDensityIsFiniteFarFromAllComponents) {
  const auto t = skew20d::target();
  const Vector far = Vector::Constant(20, -60.0);
  EXPECT_TRUE(std::isfinite(t.log_density(far)));
  EXPECT_TRUE(t.grad_log_density(far).allFinite());
}

TEST(SpecialFunctions, LogNormalCdfTails) {
  EXPECT_NEAR(special::log_normal_cdf(0.0), std::log(0.5), 1e-15);
  EXPECT_NEAR(special::log_normal_cdf(-5.0), std::log(0.5 * std::erfc(5.0 / std::sqrt(2.0))), 1e-12);
  // Mills ratio asymptotics: log Phi(z) ~ log phi(z) - log(-z) for z -> -inf.
  const double z = -40.0;
  EXPECT_NEAR(special::log_normal_cdf(z), special::log_normal_pdf(z) - std::log(-z) - 1.0 / (z * z), 1e-5);
  EXPECT_NEAR(special::inverse_mills(-40.0), 40.0, 0.05);
}

}  // namespace
}  // namespace bdec
