#pragma once

#include <cmath>
#include <utility>

#include "bdec/gaussian.hpp"

namespace bdec {

struct BfgsOptions {
  double armijo_c = 1e-4;
  double shrink = 0.5;
  double initial_step = 1.0;
  /// Converged when |grad f| <= gradient_tolerance * (1 + |f|).
  double gradient_tolerance = 1e-6;
  int max_iterations = 500;
  int max_backtracks = 60;
};

enum class BfgsStatus { converged, iteration_limit, line_search_failed, non_finite_start };

struct BfgsResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  int iterations = 0;
  BfgsStatus status = BfgsStatus::iteration_limit;
};

/// Minimizes f with BFGS (identity initial inverse Hessian) and Armijo
/// backtracking. `objective(x, grad)` returns f(x) and writes grad f(x);
/// +inf marks points outside the domain, which the line search backs away from.
template <class Objective>
BfgsResult minimize_bfgs(Objective&& objective, Vector x, const BfgsOptions& opts = {}) {
  const auto d = x.size();
  BfgsResult result;
  Vector g(d);
  double f = objective(x, g);
  if (!std::isfinite(f) || !g.allFinite()) {
    result.x = std::move(x);
    result.value = f;
    result.gradient = std::move(g);
    result.status = BfgsStatus::non_finite_start;
    return result;
  }

  Matrix inv_hessian = Matrix::Identity(d, d);
  Vector trial(d), trial_grad(d);
  int iteration = 0;
  BfgsStatus status = BfgsStatus::iteration_limit;
  for (; iteration < opts.max_iterations; ++iteration) {
    if (g.norm() <= opts.gradient_tolerance * (1.0 + std::abs(f))) {
      status = BfgsStatus::converged;
      break;
    }
    Vector direction = -inv_hessian * g;
    double slope = g.dot(direction);
    if (!(slope < 0.0)) {
      inv_hessian.setIdentity();
      direction = -g;
      slope = -g.squaredNorm();
    }

    double step = opts.initial_step;
    double trial_f = 0.0;
    bool accepted = false;
    for (int k = 0; k < opts.max_backtracks; ++k) {
      trial = x + step * direction;
      trial_f = objective(trial, trial_grad);
      if (std::isfinite(trial_f) && trial_grad.allFinite() &&
          trial_f <= f + opts.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= opts.shrink;
    }
    if (!accepted) {
      status = BfgsStatus::line_search_failed;
      break;
    }

    const Vector s = trial - x;
    const Vector y = trial_grad - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Vector hy = inv_hessian * y;
      // (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded.
      inv_hessian += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
                     rho * (hy * s.transpose() + s * hy.transpose());
    }
    x = trial;
    g = trial_grad;
    f = trial_f;
  }
  if (status == BfgsStatus::iteration_limit &&
      g.norm() <= opts.gradient_tolerance * (1.0 + std::abs(f))) {
    status = BfgsStatus::converged;
  }

  result.x = std::move(x);
  result.value = f;
  result.gradient = std::move(g);
  result.iterations = iteration;
  result.status = status;
  return result;
}

}  // namespace bdec
