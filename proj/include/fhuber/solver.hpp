#pragma once

#include "fhuber/core.hpp"
#include "fhuber/prox.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace fhuber {

/// Cholesky factor of M = X^T X + I + D^T D, the normal matrix of the stacked operator (X; I; D).
/// Computed once per design and reused by every beta-step.
class NormalFactorization {
 public:
  explicit NormalFactorization(const Matrix& X)
  {
    if (!X.allFinite()) throw FactorizationError("normal matrix: design has non-finite entries");
    const Eigen::Index p = X.cols();
    Matrix M(p, p);
    M.setZero();
    M.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
    // I + D^T D is tridiagonal: diagonal (2, 3, ..., 3, 2), off-diagonal -1.
    for (Eigen::Index j = 0; j < p; ++j) M(j, j) += (j == 0 || j == p - 1) ? 2.0 : 3.0;
    for (Eigen::Index j = 0; j + 1 < p; ++j) M(j + 1, j) -= 1.0;
    M.triangularView<Eigen::StrictlyUpper>() = M.transpose();
    llt_.compute(M);
    if (llt_.info() != Eigen::Success || !llt_.matrixLLT().allFinite())
      throw FactorizationError("normal matrix: Cholesky factorization failed");
  }

  Eigen::Index size() const { return llt_.rows(); }

  Vector solve(const Eigen::Ref<const Vector>& rhs) const
  {
    if (rhs.size() != size()) throw std::invalid_argument("NormalFactorization::solve: dimension mismatch");
    return llt_.solve(rhs);
  }

  /// L L^T, for checking the factor against a directly assembled M.
  Matrix reconstruct() const { return llt_.reconstructedMatrix(); }

  Matrix lower() const { return llt_.matrixL(); }

 private:
  Eigen::LLT<Matrix> llt_;
};

inline NormalFactorization factorize_normal_matrix(const ProblemData& data) { return NormalFactorization(data.X()); }

struct KktResiduals {
  double phi_mu = 0.0;
  double phi_z = 0.0;
  double phi_alpha = 0.0;
  double phi_beta = 0.0;
  double phi_gamma = 0.0;
  double res = 0.0;
};

enum class SolveStatus { converged, max_iter_reached };

inline const char* to_string(SolveStatus s) { return s == SolveStatus::converged ? "converged" : "max_iter_reached"; }

struct SolveResult {
  Coefficients beta;
  int iterations = 0;
  std::vector<KktResiduals> residual_history;
  SolveStatus status = SolveStatus::max_iter_reached;
  IterateState state;  // final iterate, usable as a warm start
};

namespace detail {

inline void check_state(const IterateState& s, const ProblemData& data)
{
  if (!s.matches(data.n(), data.p())) throw std::invalid_argument("IterateState dimensions do not match the data");
}

/// Per-coordinate prox of the (1/n)-scaled loss with parameter c.
inline double loss_prox(double v, const SolverConfig& cfg, double c, double n)
{
  const double tau = cfg.loss == Loss::huber ? cfg.tau : std::numeric_limits<double>::infinity();
  return huber_prox(v, tau, c, n);
}

}  // namespace detail

/// beta-step: solve M beta = X^T (z + mu_z/sigma) + (alpha + mu_alpha/sigma) + D^T (gamma + mu_gamma/sigma).
inline Vector update_beta(const IterateState& s, const NormalFactorization& fac, const ProblemData& data,
                          const SolverConfig& cfg)
{
  detail::check_state(s, data);
  if (fac.size() != data.p()) throw std::invalid_argument("update_beta: factorization does not match data");
  const double inv = 1.0 / cfg.sigma;
  Vector rhs = data.X().transpose() * (s.z + inv * s.mu_z);
  rhs += s.alpha + inv * s.mu_alpha;
  rhs += apply_Dt(s.gamma + inv * s.mu_gamma);
  return fac.solve(rhs);
}

/// alpha = S_{lambda1/sigma}(beta - mu_alpha/sigma), using the already-updated beta.
inline Vector update_alpha(const IterateState& s, const SolverConfig& cfg)
{
  if (s.beta.size() != s.mu_alpha.size()) throw std::invalid_argument("update_alpha: dimension mismatch");
  return soft_threshold(s.beta - s.mu_alpha / cfg.sigma, cfg.lambda1 / cfg.sigma);
}

/// gamma = S_{lambda2/sigma}(D beta - mu_gamma/sigma).
inline Vector update_gamma(const IterateState& s, const SolverConfig& cfg)
{
  if (s.beta.size() != s.mu_gamma.size() + 1) throw std::invalid_argument("update_gamma: dimension mismatch");
  return soft_threshold(apply_D(s.beta) - s.mu_gamma / cfg.sigma, cfg.lambda2 / cfg.sigma);
}

/// z-step, coordinatewise: with zeta = y - X beta + mu_z/sigma, z = y - prox(zeta) where prox is the
/// (1/n) Huber prox with c = 1/sigma. Quadratic regime |zeta| <= tau (n sigma + 1)/(n sigma) gives
/// z = (y + n sigma X beta - n mu_z)/(n sigma + 1); otherwise z = y - S_{tau/(n sigma)}(zeta).
/// `Xbeta` may be passed to avoid recomputing X * beta.
inline Vector update_z(const IterateState& s, const ProblemData& data, const SolverConfig& cfg,
                       const Vector* Xbeta = nullptr)
{
  detail::check_state(s, data);
  const Vector local = Xbeta ? Vector() : Vector(data.X() * s.beta);
  const Vector& xb = Xbeta ? *Xbeta : local;
  const auto n = static_cast<double>(data.n());
  const double c = 1.0 / cfg.sigma;
  Vector z(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double zeta = data.y()[i] - xb[i] + s.mu_z[i] / cfg.sigma;
    z[i] = data.y()[i] - detail::loss_prox(zeta, cfg, c, n);
  }
  return z;
}

struct Multipliers {
  Vector mu_z, mu_alpha, mu_gamma;
};

/// mu += pi sigma (theta - Xtilde beta), blockwise.
inline Multipliers update_mu(const IterateState& s, const ProblemData& data, const SolverConfig& cfg,
                             const Vector* Xbeta = nullptr)
{
  cfg.validate();
  detail::check_state(s, data);
  const double step = cfg.pi * cfg.sigma;
  const Vector local = Xbeta ? Vector() : Vector(data.X() * s.beta);
  const Vector& xb = Xbeta ? *Xbeta : local;
  return {s.mu_z + step * (s.z - xb), s.mu_alpha + step * (s.alpha - s.beta),
          s.mu_gamma + step * (s.gamma - apply_D(s.beta))};
}

namespace detail {

/// ||w - S_1(w - m/lambda)|| / (1 + ||w|| + ||m/lambda||); falls back to ||m|| when lambda = 0.
inline double l1_block_residual(const Vector& w, const Vector& m, double lambda)
{
  if (lambda == 0.0) return m.norm();
  const Vector scaled = m / lambda;
  return (w - soft_threshold(w - scaled, 1.0)).norm() / (1.0 + w.norm() + scaled.norm());
}

}  // namespace detail

/// The five normalized KKT violations and their maximum.
///
/// phi_z uses w = y - z and the (1/n)-scaled loss prox with c = 1 evaluated at w + mu_z, which vanishes
/// exactly when mu_z is a gradient of the loss at w. phi_beta is ||Xtilde^T mu||.
inline KktResiduals kkt_residuals(const IterateState& s, const ProblemData& data, const SolverConfig& cfg,
                                  const Vector* Xbeta = nullptr)
{
  detail::check_state(s, data);
  const Vector local = Xbeta ? Vector() : Vector(data.X() * s.beta);
  const Vector& xb = Xbeta ? *Xbeta : local;
  KktResiduals r;

  const Vector Dbeta = apply_D(s.beta);
  r.phi_mu = std::sqrt((s.z - xb).squaredNorm() + (s.alpha - s.beta).squaredNorm() +
                       (s.gamma - Dbeta).squaredNorm());

  const auto n = static_cast<double>(data.n());
  const Vector w = data.y() - s.z;
  Vector prox(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) prox[i] = detail::loss_prox(w[i] + s.mu_z[i], cfg, 1.0, n);
  r.phi_z = (w - prox).norm() / (1.0 + w.norm() + s.mu_z.norm());

  r.phi_alpha = detail::l1_block_residual(s.alpha, s.mu_alpha, cfg.lambda1);
  r.phi_gamma = detail::l1_block_residual(s.gamma, s.mu_gamma, cfg.lambda2);

  const Vector stationarity = data.X().transpose() * s.mu_z + s.mu_alpha + apply_Dt(s.mu_gamma);
  r.phi_beta = stationarity.norm();

  r.res = std::max({r.phi_mu, r.phi_z, r.phi_alpha, r.phi_beta, r.phi_gamma});
  return r;
}

/// One full sweep beta, alpha, gamma, z, mu. Returns X * beta for the new beta.
inline Vector step(IterateState& s, const NormalFactorization& fac, const ProblemData& data, const SolverConfig& cfg)
{
  s.beta = update_beta(s, fac, data, cfg);
  s.alpha = update_alpha(s, cfg);
  s.gamma = update_gamma(s, cfg);
  Vector xb = data.X() * s.beta;
  s.z = update_z(s, data, cfg, &xb);
  Multipliers mu = update_mu(s, data, cfg, &xb);
  s.mu_z = std::move(mu.mu_z);
  s.mu_alpha = std::move(mu.mu_alpha);
  s.mu_gamma = std::move(mu.mu_gamma);
  return xb;
}

/// FHADMM with a caller-supplied factorization (shared across a tuning grid on one design).
inline SolveResult solve(const ProblemData& data, const SolverConfig& cfg, const NormalFactorization& fac,
                         std::optional<IterateState> init = std::nullopt)
{
  cfg.validate();
  if (fac.size() != data.p()) throw std::invalid_argument("solve: factorization does not match data");
  IterateState s = init ? std::move(*init) : IterateState::zeros(data.n(), data.p());
  detail::check_state(s, data);

  SolveResult out;
  out.residual_history.reserve(static_cast<std::size_t>(std::min(cfg.max_iter, 4096)));
  for (int k = 1; k <= cfg.max_iter; ++k) {
    const Vector xb = step(s, fac, data, cfg);
    if (!s.all_finite()) throw DivergedError("solve: non-finite iterate at iteration " + std::to_string(k));
    const KktResiduals r = kkt_residuals(s, data, cfg, &xb);
    out.residual_history.push_back(r);
    out.iterations = k;
    if (r.res < cfg.tol) {
      out.status = SolveStatus::converged;
      break;
    }
  }
  out.beta = s.beta;
  out.state = std::move(s);
  return out;
}

/// FHADMM on the fused-lasso Huber model (or squared loss, per cfg.loss). Zero start by default.
inline SolveResult solve(const ProblemData& data, const SolverConfig& cfg,
                         std::optional<IterateState> init = std::nullopt)
{
  cfg.validate();
  return solve(data, cfg, factorize_normal_matrix(data), std::move(init));
}

/// Same pipeline with the squared loss (1/2n)||y - X beta||^2; tau is ignored.
inline SolveResult solve_least_squares(const ProblemData& data, SolverConfig cfg,
                                       std::optional<IterateState> init = std::nullopt)
{
  cfg.loss = Loss::squared;
  return solve(data, cfg, std::move(init));
}

}  // namespace fhuber
