#pragma once

#include <Eigen/QR>

#include <cmath>
#include <vector>

#include "bdec/bdec.hpp"

namespace bdec::testing {

inline Vector random_vector(RandomStream& rng, Eigen::Index d, double scale = 1.0) {
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = scale * rng.gaussian();
  return v;
}

inline Vector uniform_vector(RandomStream& rng, const Vector& lo, const Vector& hi) {
  Vector v(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) v(i) = lo(i) + (hi(i) - lo(i)) * rng.uniform();
  return v;
}

/// Q from the QR decomposition of a Gaussian matrix, sign-fixed so det(Q) = +1.
inline Matrix random_rotation(RandomStream& rng, Eigen::Index d) {
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.gaussian();
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ();
  if (q.determinant() < 0) q.col(0) *= -1.0;
  return q;
}

/// Q diag(lambda) Q^T with eigenvalues log-uniform in [lo, hi].
inline Matrix random_spd(RandomStream& rng, Eigen::Index d, double lo = 0.1, double hi = 10.0) {
  const Matrix q = random_rotation(rng, d);
  Vector lambda(d);
  for (Eigen::Index i = 0; i < d; ++i) lambda(i) = lo * std::pow(hi / lo, rng.uniform());
  Matrix s = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

inline Matrix random_positions(RandomStream& rng, Eigen::Index d, Eigen::Index n, double scale = 1.0) {
  Matrix p(d, n);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = scale * rng.gaussian();
  return p;
}

inline Ensemble make_ensemble(Matrix positions, std::uint64_t seed = 7) {
  return Ensemble::create(std::move(positions), seed, StreamDomain::target_chain);
}

inline Matrix exact_samples(const TargetDensity& target, int n, std::uint64_t seed) {
  Matrix out(target.dimension(), n);
  for (int i = 0; i < n; ++i) {
    RandomStream rng(seed, StreamDomain::user, static_cast<std::uint64_t>(i));
    out.col(i) = target.sample_exact(rng);
  }
  return out;
}

inline ModeInfo make_mode(const Vector& mu, const Matrix& sigma, double log_density = 0.0) {
  return ModeInfo{mu, cholesky(sigma), log_density};
}

}  // namespace bdec::testing
