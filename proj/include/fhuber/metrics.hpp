#pragma once

#include "fhuber/core.hpp"

#include <cmath>
#include <stdexcept>

namespace fhuber {

/// ||beta_hat - beta_star||_2. Reported under the name "MSE" for comparability with published tables,
/// but it is the plain l2 norm: not squared, not averaged.
inline double estimation_error(const Eigen::Ref<const Vector>& beta_hat, const Eigen::Ref<const Vector>& beta_star)
{
  if (beta_hat.size() != beta_star.size()) throw std::invalid_argument("estimation_error: length mismatch");
  return (beta_hat - beta_star).norm();
}

/// Mean absolute prediction error on held-out data.
inline double mae(const ProblemData& test, const Eigen::Ref<const Vector>& beta_hat)
{
  if (beta_hat.size() != test.p()) throw std::invalid_argument("mae: coefficient length does not match data");
  return (test.y() - test.X() * beta_hat).cwiseAbs().mean();
}

/// Sample standard deviation (divisor n - 1) of y - X beta_hat.
inline double residual_std(const ProblemData& data, const Eigen::Ref<const Vector>& beta_hat)
{
  if (data.n() < 2) throw std::invalid_argument("residual_std: need at least two samples");
  if (beta_hat.size() != data.p()) throw std::invalid_argument("residual_std: coefficient length does not match data");
  const Vector r = data.y() - data.X() * beta_hat;
  const double mean = r.mean();
  return std::sqrt((r.array() - mean).square().sum() / static_cast<double>(r.size() - 1));
}

/// Non-excess moment-ratio kurtosis m4 / m2^2 (normal ~ 3), no small-sample correction.
inline double kurtosis(const Eigen::Ref<const Vector>& v)
{
  if (v.size() < 4) throw std::invalid_argument("kurtosis: need at least four values");
  const double mean = v.mean();
  const Eigen::ArrayXd d = v.array() - mean;
  const double m2 = d.square().mean();
  const double m4 = d.square().square().mean();
  const double floor = 1e-14 * v.cwiseAbs().maxCoeff();
  if (!(m2 > floor * floor)) throw std::invalid_argument("kurtosis: zero variance");
  return m4 / (m2 * m2);
}

}  // namespace fhuber
