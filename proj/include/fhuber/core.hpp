#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fhuber {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Coefficient vector of length p.
using Coefficients = Vector;

enum class Loss { huber, squared };

inline const char* to_string(Loss loss) { return loss == Loss::huber ? "huber" : "squared"; }

inline Loss parse_loss(const std::string& s)
{
  if (s == "huber") return Loss::huber;
  if (s == "squared") return Loss::squared;
  throw std::invalid_argument("unknown loss '" + s + "' (expected huber|squared)");
}

/// The Cholesky factorization of the normal matrix failed.
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterate became non-finite.
class DivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Regression instance y ~ X beta, no intercept. Validated on construction.
class ProblemData {
 public:
  ProblemData(Matrix X, Vector y) : X_(std::move(X)), y_(std::move(y))
  {
    if (X_.rows() < 1) throw std::invalid_argument("ProblemData: need at least one sample");
    if (X_.cols() < 2) throw std::invalid_argument("ProblemData: need at least two feature columns");
    if (y_.size() != X_.rows())
      throw std::invalid_argument("ProblemData: y has " + std::to_string(y_.size()) + " entries, X has " +
                                  std::to_string(X_.rows()) + " rows");
    if (!X_.allFinite()) throw std::invalid_argument("ProblemData: X has non-finite entries");
    if (!y_.allFinite()) throw std::invalid_argument("ProblemData: y has non-finite entries");
  }

  const Matrix& X() const { return X_; }
  const Vector& y() const { return y_; }
  Eigen::Index n() const { return X_.rows(); }
  Eigen::Index p() const { return X_.cols(); }

 private:
  Matrix X_;
  Vector y_;
};

struct SolverConfig {
  double tau = 1.345;
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double sigma = 0.1;
  double pi = 1.0;
  double tol = 1e-3;
  int max_iter = 2000;
  Loss loss = Loss::huber;

  static constexpr double max_step() { return 1.6180339887498949; }  // (1 + sqrt 5) / 2

  void validate() const
  {
    auto fail = [](const std::string& what) { throw std::invalid_argument("SolverConfig: " + what); };
    if (loss == Loss::huber && !(tau > 0.0)) fail("tau must be positive");
    if (std::isnan(tau)) fail("tau is NaN");
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) fail("lambda1 must be finite and nonnegative");
    if (!(lambda2 >= 0.0) || !std::isfinite(lambda2)) fail("lambda2 must be finite and nonnegative");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) fail("sigma must be finite and positive");
    if (!(pi > 0.0 && pi < max_step())) fail("pi must lie in (0, (1+sqrt5)/2)");
    if (!(tol > 0.0)) fail("tol must be positive");
    if (max_iter < 1) fail("max_iter must be positive");
  }
};

/// Primal blocks (z, alpha, gamma, beta) and the multiplier mu = (mu_z, mu_alpha, mu_gamma).
/// theta = (z, alpha, gamma) and mu both have length n + 2p - 1.
struct IterateState {
  Vector z, alpha, gamma, beta;
  Vector mu_z, mu_alpha, mu_gamma;

  static IterateState zeros(Eigen::Index n, Eigen::Index p)
  {
    return {Vector::Zero(n), Vector::Zero(p), Vector::Zero(p - 1), Vector::Zero(p),
            Vector::Zero(n), Vector::Zero(p), Vector::Zero(p - 1)};
  }

  bool matches(Eigen::Index n, Eigen::Index p) const
  {
    return z.size() == n && mu_z.size() == n && alpha.size() == p && mu_alpha.size() == p && beta.size() == p &&
           gamma.size() == p - 1 && mu_gamma.size() == p - 1;
  }

  bool all_finite() const
  {
    return z.allFinite() && alpha.allFinite() && gamma.allFinite() && beta.allFinite() && mu_z.allFinite() &&
           mu_alpha.allFinite() && mu_gamma.allFinite();
  }
};

namespace detail {

inline void check_tau(double tau)
{
  if (!(tau > 0.0)) throw std::invalid_argument("huber: tau must be positive");
}

inline void check_finite(double x, const char* what)
{
  if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": argument must be finite");
}

}  // namespace detail

/// h_tau(x): x^2/2 on |x| <= tau, tau|x| - tau^2/2 outside. tau may be +inf.
inline double huber_scalar(double x, double tau)
{
  detail::check_finite(x, "huber_scalar");
  detail::check_tau(tau);
  const double a = std::abs(x);
  return a <= tau ? 0.5 * x * x : tau * a - 0.5 * tau * tau;
}

/// psi_tau(x) = clip(x, -tau, tau).
inline double huber_deriv(double x, double tau)
{
  detail::check_finite(x, "huber_deriv");
  detail::check_tau(tau);
  if (x > tau) return tau;
  if (x < -tau) return -tau;
  return x;
}

/// L_tau(r) = (1/n) sum_i h_tau(r_i).
inline double huber_loss(const Eigen::Ref<const Vector>& r, double tau)
{
  if (r.size() == 0) throw std::invalid_argument("huber_loss: empty residual vector");
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) s += huber_scalar(r[i], tau);
  return s / static_cast<double>(r.size());
}

/// (1/2n) ||r||^2
inline double squared_loss(const Eigen::Ref<const Vector>& r)
{
  if (r.size() == 0) throw std::invalid_argument("squared_loss: empty residual vector");
  return 0.5 * r.squaredNorm() / static_cast<double>(r.size());
}

/// First differences (beta_2 - beta_1, ..., beta_p - beta_{p-1}).
inline Vector apply_D(const Eigen::Ref<const Vector>& beta)
{
  const Eigen::Index p = beta.size();
  if (p < 2) throw std::invalid_argument("apply_D: need p >= 2");
  return beta.tail(p - 1) - beta.head(p - 1);
}

/// Adjoint of apply_D: (D^T v)_j = v_{j-1} - v_j with v_0 = v_p = 0.
inline Vector apply_Dt(const Eigen::Ref<const Vector>& v)
{
  const Eigen::Index m = v.size();
  if (m < 1) throw std::invalid_argument("apply_Dt: need p >= 2");
  Vector out(m + 1);
  out[0] = -v[0];
  for (Eigen::Index j = 1; j < m; ++j) out[j] = v[j - 1] - v[j];
  out[m] = v[m - 1];
  return out;
}

inline double fused_penalty(const Eigen::Ref<const Vector>& beta, double lambda1, double lambda2)
{
  return lambda1 * beta.lpNorm<1>() + lambda2 * apply_D(beta).lpNorm<1>();
}

/// L(y - X beta) + lambda1 ||beta||_1 + lambda2 ||D beta||_1.
inline double objective(const ProblemData& data, const Eigen::Ref<const Vector>& beta, const SolverConfig& cfg)
{
  if (beta.size() != data.p())
    throw std::invalid_argument("objective: beta has length " + std::to_string(beta.size()) + ", expected " +
                                std::to_string(data.p()));
  const Vector r = data.y() - data.X() * beta;
  const double loss = cfg.loss == Loss::huber ? huber_loss(r, cfg.tau) : squared_loss(r);
  return loss + fused_penalty(beta, cfg.lambda1, cfg.lambda2);
}

}  // namespace fhuber
