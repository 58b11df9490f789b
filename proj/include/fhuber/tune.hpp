#pragma once

#include "fhuber/core.hpp"
#include "fhuber/metrics.hpp"
#include "fhuber/parallel.hpp"
#include "fhuber/solver.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fhuber {

/// Huber's classical fixed breakpoint (95% efficiency at the standard normal).
inline constexpr double kClassicalTau = 1.345;

struct TuneGrid {
  std::vector<double> taus;
  std::vector<double> lambda1s;
  std::vector<double> lambda2s;

  void validate() const
  {
    if (taus.empty() || lambda1s.empty() || lambda2s.empty()) throw std::invalid_argument("TuneGrid: empty list");
    for (double t : taus)
      if (!(t > 0.0) || std::isnan(t)) throw std::invalid_argument("TuneGrid: taus must be positive");
    for (const auto* list : {&lambda1s, &lambda2s})
      for (double l : *list)
        if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("TuneGrid: lambdas must be finite and >= 0");
  }

  std::size_t size() const { return taus.size() * lambda1s.size() * lambda2s.size(); }
};

/// a * sqrt(n / ln p) for a = 0.40, 0.45, ..., 1.50 (23 values, ascending).
inline std::vector<double> tau_grid(Eigen::Index n, Eigen::Index p)
{
  if (n < 1) throw std::invalid_argument("tau_grid: n must be positive");
  if (p < 2) throw std::invalid_argument("tau_grid: p must be at least 2");
  const double scale = std::sqrt(static_cast<double>(n) / std::log(static_cast<double>(p)));
  std::vector<double> out;
  out.reserve(23);
  for (int k = 0; k <= 22; ++k) out.push_back(static_cast<double>(40 + 5 * k) / 100.0 * scale);
  return out;
}

/// `count` log-spaced values from 10^lo to 10^hi inclusive.
inline std::vector<double> log_grid(double lo_exp, double hi_exp, int count)
{
  if (count < 1) throw std::invalid_argument("log_grid: count must be positive");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double e = count == 1 ? lo_exp : lo_exp + (hi_exp - lo_exp) * k / (count - 1);
    out.push_back(std::pow(10.0, e));
  }
  return out;
}

/// 1e-3 .. 1e1, nine points.
inline std::vector<double> default_lambda_grid() { return log_grid(-3.0, 1.0, 9); }

inline TuneGrid default_grid(Eigen::Index n, Eigen::Index p)
{
  return {tau_grid(n, p), default_lambda_grid(), default_lambda_grid()};
}

struct ScoreRow {
  double tau = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool ok = false;
  double mae = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> estimation_error;  // only when the truth is known
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iter_reached;
  std::string error;
};

struct TuneResult {
  SolverConfig best;
  std::size_t best_index = 0;
  Coefficients best_beta;
  std::vector<ScoreRow> table;
};

/// A tuning failure: every grid cell failed to produce a fit.
class TuningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TuneOptions {
  int workers = 1;
  std::optional<Coefficients> beta_star;
};

namespace detail {

/// Strict weak order on candidates: lower MAE, then larger lambda1, larger lambda2, smaller tau.
inline bool better(const ScoreRow& a, const ScoreRow& b)
{
  if (a.mae != b.mae) return a.mae < b.mae;
  if (a.lambda1 != b.lambda1) return a.lambda1 > b.lambda1;
  if (a.lambda2 != b.lambda2) return a.lambda2 > b.lambda2;
  return a.tau < b.tau;
}

}  // namespace detail

/// Fits every (tau, lambda1, lambda2) on `train` and scores validation MAE.
///
/// Rows follow grid order (tau outermost, lambda2 innermost) whatever the worker count. With the
/// squared loss tau is unused, so only the first tau is evaluated. Cells that throw are kept in the
/// table with ok = false and skipped by the argmin; non-converged cells stay eligible.
inline TuneResult grid_search(const ProblemData& train, const ProblemData& validation, const TuneGrid& grid,
                              const SolverConfig& base, const TuneOptions& opts = {})
{
  grid.validate();
  base.validate();
  if (validation.p() != train.p()) throw std::invalid_argument("grid_search: train/validation column mismatch");
  if (opts.beta_star && opts.beta_star->size() != train.p())
    throw std::invalid_argument("grid_search: beta_star length mismatch");

  const std::vector<double> taus =
      base.loss == Loss::squared ? std::vector<double>{grid.taus.front()} : grid.taus;
  std::vector<ScoreRow> table;
  table.reserve(taus.size() * grid.lambda1s.size() * grid.lambda2s.size());
  for (double t : taus)
    for (double l1 : grid.lambda1s)
      for (double l2 : grid.lambda2s) {
        ScoreRow row;
        row.tau = t;
        row.lambda1 = l1;
        row.lambda2 = l2;
        table.push_back(row);
      }

  const NormalFactorization fac = factorize_normal_matrix(train);
  std::vector<Coefficients> betas(table.size());
  parallel_for(table.size(), opts.workers, [&](std::size_t i) {
    ScoreRow& row = table[i];
    SolverConfig cfg = base;
    cfg.tau = row.tau;
    cfg.lambda1 = row.lambda1;
    cfg.lambda2 = row.lambda2;
    try {
      SolveResult fit = solve(train, cfg, fac);
      row.iterations = fit.iterations;
      row.status = fit.status;
      row.mae = mae(validation, fit.beta);
      if (opts.beta_star) row.estimation_error = estimation_error(fit.beta, *opts.beta_star);
      row.ok = std::isfinite(row.mae);
      if (!row.ok) row.error = "non-finite validation MAE";
      betas[i] = std::move(fit.beta);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  });

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!table[i].ok) continue;
    if (!best || detail::better(table[i], table[*best])) best = i;
  }
  if (!best) throw TuningError("grid_search: every grid cell failed");

  TuneResult out;
  out.best = base;
  out.best.tau = table[*best].tau;
  out.best.lambda1 = table[*best].lambda1;
  out.best.lambda2 = table[*best].lambda2;
  out.best_index = *best;
  out.best_beta = std::move(betas[*best]);
  out.table = std::move(table);
  return out;
}

/// CSV: tau,lambda1,lambda2,ok,mae,estimation_error,iterations,status,error
inline void write_score_table(std::ostream& os, const std::vector<ScoreRow>& table)
{
  const auto old_precision = os.precision(17);
  os << "tau,lambda1,lambda2,ok,mae,estimation_error,iterations,status,error\n";
  for (const ScoreRow& r : table) {
    os << r.tau << ',' << r.lambda1 << ',' << r.lambda2 << ',' << (r.ok ? 1 : 0) << ',';
    if (r.ok) os << r.mae;
    os << ',';
    if (r.estimation_error) os << *r.estimation_error;
    os << ',' << r.iterations << ',' << to_string(r.status) << ',';
    for (char c : r.error) os << (c == ',' || c == '\n' ? ' ' : c);
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace fhuber
