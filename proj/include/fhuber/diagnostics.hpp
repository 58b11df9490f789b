#pragma once

#include "fhuber/core.hpp"
#include "fhuber/metrics.hpp"
#include "fhuber/parallel.hpp"
#include "fhuber/simulate.hpp"
#include "fhuber/solver.hpp"
#include "fhuber/tune.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fhuber {

/// Constants appearing in the nonasymptotic error bound for the fused Huber estimator.
struct TheoryParams {
  double delta = 1.0;  // finite (1 + delta)-th moment of the noise
  double tau0 = 1.0;
  double t = 1.0;      // confidence parameter, bound holds w.p. >= 1 - (1 + 2p) e^{-t}
  int s = 11;          // |support of beta*|
  double c0 = 1.0;     // cone constant
  double b = 1.0;      // lambda2 = b * lambda1
  double d = 2.0;      // ||D||_inf (max abs row sum) for first differences
  int m = 11;          // cone support bound
  double r = 1.0;      // cone radius
  double kappa_low = 1.0;
  double kappa_up = 1.0;

  void validate() const
  {
    if (!(delta > 0 && tau0 > 0 && t > 0 && c0 > 0 && b > 0 && d > 0 && r > 0 && kappa_low > 0 && kappa_up > 0))
      throw std::invalid_argument("TheoryParams: all real parameters must be positive");
    if (s < 1 || m < s) throw std::invalid_argument("TheoryParams: need 1 <= s <= m");
    if (kappa_low > kappa_up) throw std::invalid_argument("TheoryParams: kappa_low > kappa_up");
  }

  /// (2bd + 3) / (2bd + 1): the l1-cone constant the estimation error falls into.
  double cone_constant() const { return (2.0 * b * d + 3.0) / (2.0 * b * d + 1.0); }

  /// tau = tau0 (n/t)^{max(1/(1+delta), 1/2)}.
  double tau_schedule(double n) const { return tau0 * std::pow(n / t, std::max(1.0 / (1.0 + delta), 0.5)); }

  /// Smallest admissible lambda1 = 4 tau0 (t/n)^{min(delta/(1+delta), 1/2)}.
  double lambda1_schedule(double n) const
  {
    return 4.0 * tau0 * std::pow(t / n, std::min(delta / (1.0 + delta), 0.5));
  }

  /// lambda1 sqrt(s) / kappa_low.
  double error_bound(double lambda1) const { return lambda1 * std::sqrt(static_cast<double>(s)) / kappa_low; }
};

/// ||D||_inf for the first-difference operator: every interior row is (-1, 1).
inline constexpr double kDifferenceOperatorNorm = 2.0;

/// grad L_tau(beta) = -(1/n) sum_i psi_tau(y_i - x_i^T beta) x_i.
inline Vector huber_gradient(const ProblemData& data, const Eigen::Ref<const Vector>& beta, double tau)
{
  if (beta.size() != data.p()) throw std::invalid_argument("huber_gradient: dimension mismatch");
  const Vector r = data.y() - data.X() * beta;
  Vector psi(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) psi[i] = huber_deriv(r[i], tau);
  return -(data.X().transpose() * psi) / static_cast<double>(data.n());
}

/// <grad L(beta1) - grad L(beta2), beta1 - beta2>; nonnegative by convexity.
inline double bregman_symmetric(const Eigen::Ref<const Vector>& beta1, const Eigen::Ref<const Vector>& beta2,
                                const ProblemData& data, double tau)
{
  if (beta1.size() != beta2.size()) throw std::invalid_argument("bregman_symmetric: length mismatch");
  return (huber_gradient(data, beta1, tau) - huber_gradient(data, beta2, tau)).dot(beta1 - beta2);
}

/// S_n = (1/n) X^T X.
namespace detail {

/// A^T A / n from the lower triangle, mirrored so the result is exactly symmetric.
inline Matrix scaled_cross_product(const Matrix& A, double n)
{
  Matrix S = Matrix::Zero(A.cols(), A.cols());
  S.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose());
  S = S.selfadjointView<Eigen::Lower>();
  return S / n;
}

}  // namespace detail

inline Matrix gram_matrix(const ProblemData& data)
{
  return detail::scaled_cross_product(data.X(), static_cast<double>(data.n()));
}

/// H_tau(beta) = (1/n) sum_i 1(|y_i - x_i^T beta| <= tau) x_i x_i^T.
inline Matrix huber_hessian(const ProblemData& data, const Eigen::Ref<const Vector>& beta, double tau)
{
  if (beta.size() != data.p()) throw std::invalid_argument("huber_hessian: dimension mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("huber_hessian: tau must be positive");
  const Vector r = data.y() - data.X() * beta;
  // Same product as gram_matrix on the row-masked design, so tau = inf reproduces S_n bitwise.
  Matrix Xm = data.X();
  for (Eigen::Index i = 0; i < data.n(); ++i)
    if (!(std::abs(r[i]) <= tau)) Xm.row(i).setZero();
  return detail::scaled_cross_product(Xm, static_cast<double>(data.n()));
}

struct RestrictedEigenvalueEstimate {
  double rho_minus = 0.0;  // sampled upper bound on the restricted minimum
  double rho_plus = 0.0;   // sampled lower bound on the restricted maximum
  std::size_t subsets = 0;
};

/// Largest p for which the superset enumeration is attempted.
inline constexpr Eigen::Index kMaxRestrictedEigenvalueDim = 20;

/// Sampled extremes of u^T M u / ||u||^2 over u in the cone
///   { u : ||u_{J^c}||_1 <= c0 ||u_J||_1 for some J with S in J, |J| <= m }.
///
/// Supersets J are enumerated exhaustively and visited round-robin; each sample draws u_J Gaussian
/// and u_{J^c} Gaussian rescaled to l1 mass U c0 ||u_J||_1 with U uniform, so every sample lies in the
/// cone. Results are estimates, not certificates: rho_minus can only overestimate the true infimum.
inline RestrictedEigenvalueEstimate restricted_eigenvalue_estimate(const Matrix& M,
                                                                   const std::vector<Eigen::Index>& support,
                                                                   Eigen::Index m, double c0, int samples,
                                                                   std::uint64_t seed = 0)
{
  const Eigen::Index p = M.rows();
  if (M.cols() != p) throw std::invalid_argument("restricted_eigenvalue_estimate: M must be square");
  if (p > kMaxRestrictedEigenvalueDim)
    throw std::invalid_argument("restricted_eigenvalue_estimate: p = " + std::to_string(p) +
                                " is too large for subset enumeration (max " +
                                std::to_string(kMaxRestrictedEigenvalueDim) + ")");
  if (!(c0 >= 0.0)) throw std::invalid_argument("restricted_eigenvalue_estimate: c0 must be nonnegative");
  if (samples < 1) throw std::invalid_argument("restricted_eigenvalue_estimate: samples must be positive");
  std::uint32_t base = 0;
  for (Eigen::Index j : support) {
    if (j < 0 || j >= p) throw std::invalid_argument("restricted_eigenvalue_estimate: support index out of range");
    base |= 1u << j;
  }
  const auto s = static_cast<Eigen::Index>(std::popcount(base));
  if (m < std::max<Eigen::Index>(s, 1) || m > p)
    throw std::invalid_argument("restricted_eigenvalue_estimate: need max(|S|, 1) <= m <= p");

  std::vector<std::uint32_t> subsets;
  const std::uint32_t full = p == 32 ? ~0u : ((1u << p) - 1u);
  const std::uint32_t rest = full & ~base;
  // Enumerate submasks of `rest`, keep those giving a nonempty J of size <= m.
  for (std::uint32_t sub = rest;; sub = (sub - 1) & rest) {
    const std::uint32_t J = base | sub;
    if (J != 0 && std::popcount(J) <= m) subsets.push_back(J);
    if (sub == 0) break;
  }
  std::sort(subsets.begin(), subsets.end());

  Rng rng(seed);
  RestrictedEigenvalueEstimate est;
  est.subsets = subsets.size();
  est.rho_minus = std::numeric_limits<double>::infinity();
  est.rho_plus = -std::numeric_limits<double>::infinity();
  Vector u(p);
  for (int k = 0; k < samples; ++k) {
    const std::uint32_t J = subsets[static_cast<std::size_t>(k) % subsets.size()];
    double inside = 0.0, outside = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      u[j] = rng.normal();
      ((J >> j) & 1u ? inside : outside) += std::abs(u[j]);
    }
    const double scale = outside > 0.0 ? rng.uniform() * c0 * inside / outside : 0.0;
    for (Eigen::Index j = 0; j < p; ++j)
      if (!((J >> j) & 1u)) u[j] *= scale;
    const double q = u.dot(M * u) / u.squaredNorm();
    est.rho_minus = std::min(est.rho_minus, q);
    est.rho_plus = std::max(est.rho_plus, q);
  }
  return est;
}

struct ConeReport {
  double off_support_l1 = 0.0;  // ||(beta_hat - beta*)_{S^c}||_1
  double on_support_l1 = 0.0;   // ||(beta_hat - beta*)_S||_1
  double cone_constant = 0.0;
  double gradient_sup = 0.0;    // ||grad L_tau(beta*)||_inf
  bool gradient_condition = false;  // gradient_sup <= lambda1 / 2
  bool inside_cone = false;         // off <= constant * on + slack
};

/// Checks whether beta_hat - beta* lies in the l1 cone implied by lambda2 = b lambda1, ||D||_inf = d.
/// The cone membership is only guaranteed when gradient_condition holds.
inline ConeReport cone_check(const ProblemData& data, const Eigen::Ref<const Vector>& beta_hat,
                             const Eigen::Ref<const Vector>& beta_star, double tau, double lambda1, double lambda2,
                             double slack = 1e-3)
{
  if (beta_hat.size() != beta_star.size() || beta_hat.size() != data.p())
    throw std::invalid_argument("cone_check: dimension mismatch");
  if (!(lambda1 > 0.0)) throw std::invalid_argument("cone_check: lambda1 must be positive");
  TheoryParams tp;
  tp.b = lambda2 / lambda1;
  tp.d = kDifferenceOperatorNorm;
  ConeReport rep;
  rep.cone_constant = tp.cone_constant();
  const Vector err = beta_hat - beta_star;
  for (Eigen::Index j = 0; j < err.size(); ++j)
    (beta_star[j] != 0.0 ? rep.on_support_l1 : rep.off_support_l1) += std::abs(err[j]);
  rep.gradient_sup = huber_gradient(data, beta_star, tau).lpNorm<Eigen::Infinity>();
  rep.gradient_condition = rep.gradient_sup <= lambda1 / 2.0;
  rep.inside_cone = rep.off_support_l1 <= rep.cone_constant * rep.on_support_l1 + slack;
  return rep;
}

struct RateExperimentSpec {
  Eigen::Index p = 50;
  NoiseLaw noise = NoiseLaw::gaussian();
  std::vector<Eigen::Index> n_list{100, 400, 1600};
  int replications = 20;
  std::uint64_t seed = 0;
  double rho = 0.5;
  SolverConfig base;  // tau / lambdas overwritten by tuning
  /// Tuning grid for one n; default: three tau multipliers and a 7 x 7 lambda grid.
  std::function<TuneGrid(Eigen::Index n, Eigen::Index p)> grid;
  int workers = 1;
};

struct RateRow {
  Eigen::Index n = 0;
  double median_error = 0.0;
  std::vector<double> errors;  // per replication, in replication order
};

struct RateTable {
  std::vector<RateRow> rows;
  std::optional<double> slope;  // least-squares slope of log(median error) on log(n)
  bool slope_undefined = false; // set when some median is ~0 (noiseless data)
};

inline double median(std::vector<double> v)
{
  if (v.empty()) throw std::invalid_argument("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// For each n: `replications` runs of simulate -> grid_search (validation = an independent draw of
/// size n) -> error of the selected fit. Replication r uses seed + r at every n.
inline RateTable rate_experiment(const RateExperimentSpec& spec)
{
  if (spec.n_list.empty() || spec.replications < 1) throw std::invalid_argument("rate_experiment: empty design");
  auto grid_for = [&](Eigen::Index n) {
    if (spec.grid) return spec.grid(n, spec.p);
    const double scale = std::sqrt(static_cast<double>(n) / std::log(static_cast<double>(spec.p)));
    return TuneGrid{{0.4 * scale, 0.95 * scale, 1.5 * scale}, log_grid(-4.0, -1.0, 7), log_grid(-4.0, -1.0, 7)};
  };

  RateTable table;
  const auto reps = static_cast<std::size_t>(spec.replications);
  for (Eigen::Index n : spec.n_list) {
    const TuneGrid grid = grid_for(n);
    RateRow row;
    row.n = n;
    row.errors.assign(reps, 0.0);
    parallel_for(reps, spec.workers, [&](std::size_t r) {
      SyntheticSpec ss;
      ss.n = n;
      ss.n_test = n;
      ss.p = spec.p;
      ss.rho = spec.rho;
      ss.noise = spec.noise;
      ss.seed = spec.seed + r;
      const SyntheticData d = generate(ss);
      const TuneResult tr = grid_search(d.train, *d.test, grid, spec.base);
      row.errors[r] = estimation_error(tr.best_beta, d.beta_star);
    });
    row.median_error = median(row.errors);
    table.rows.push_back(std::move(row));
  }

  const double tiny = 1e-10;
  table.slope_undefined = table.rows.size() < 2 ||
                          std::any_of(table.rows.begin(), table.rows.end(),
                                      [&](const RateRow& r) { return !(r.median_error > tiny); });
  if (!table.slope_undefined) {
    const auto k = static_cast<double>(table.rows.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const RateRow& r : table.rows) {
      const double x = std::log(static_cast<double>(r.n)), y = std::log(r.median_error);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    table.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  }
  return table;
}

inline void write_rate_table(std::ostream& os, const RateTable& t)
{
  const auto old_precision = os.precision(17);
  os << "n,median_error,replications\n";
  for (const RateRow& r : t.rows) os << r.n << ',' << r.median_error << ',' << r.errors.size() << '\n';
  os << "slope,";
  if (t.slope) os << *t.slope; else os << "undefined";
  os << ",\n";
  os.precision(old_precision);
}

}  // namespace fhuber
