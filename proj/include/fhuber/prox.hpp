#pragma once

#include "fhuber/core.hpp"

#include <cmath>
#include <stdexcept>

namespace fhuber {

/// Scalar soft-threshold sgn(v) * max(|v| - c, 0). Assumes c >= 0.
inline double soft_threshold(double v, double c)
{
  if (v > c) return v - c;
  if (v < -c) return v + c;
  return 0.0;
}

/// Elementwise prox of c * ||.||_1.
inline Vector soft_threshold(const Eigen::Ref<const Vector>& v, double c)
{
  if (!(c >= 0.0)) throw std::invalid_argument("soft_threshold: threshold must be nonnegative");
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = soft_threshold(v[i], c);
  return out;
}

/// Prox of the conjugate of c * ||.||_1 via Moreau: v - S_c(v), i.e. clamping to [-c, c].
inline Vector prox_conjugate_l1(const Eigen::Ref<const Vector>& v, double c)
{
  return v - soft_threshold(v, c);
}

/// argmin_x (1/n) h_tau(x) + (1/(2c)) (x - v)^2.
///
/// The minimizer sits in the quadratic piece iff |v| <= tau (n + c) / n, where it is v n / (n + c);
/// otherwise it is v - (c tau / n) sgn(v). Ties go to the quadratic branch; both agree there.
/// tau = +inf gives the squared-loss prox.
inline double huber_prox(double v, double tau, double c, double n)
{
  if (!std::isfinite(v)) throw std::invalid_argument("huber_prox: argument must be finite");
  if (!(tau > 0.0) || !(c > 0.0) || !(n >= 1.0))
    throw std::invalid_argument("huber_prox: need tau > 0, c > 0, n >= 1");
  if (std::isinf(tau) || std::abs(v) <= tau * (n + c) / n) return v * n / (n + c);
  const double shift = c * tau / n;
  return v > 0.0 ? v - shift : v + shift;
}

inline double huber_prox(double v, double tau, double c, Eigen::Index n)
{
  return huber_prox(v, tau, c, static_cast<double>(n));
}

}  // namespace fhuber
