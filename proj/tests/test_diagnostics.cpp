#include "fhuber/diagnostics.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace fhuber;
using fhuber::testing::random_instance;

namespace {

Vector random_vector(Rng& rng, Eigen::Index k, double scale = 1.0)
{
  Vector v(k);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace

TEST(TheoryParams, ConeConstantAndSchedules)
{
  TheoryParams tp;
  tp.b = 0.5;
  tp.d = 2.0;
  EXPECT_DOUBLE_EQ(tp.cone_constant(), 5.0 / 3.0);
  tp.delta = 1.0;
  tp.tau0 = 2.0;
  tp.t = 4.0;
  EXPECT_DOUBLE_EQ(tp.tau_schedule(400.0), 2.0 * 10.0);
  EXPECT_DOUBLE_EQ(tp.lambda1_schedule(400.0), 4.0 * 2.0 * 0.1);
  tp.delta = 3.0;  // exponent max(1/4, 1/2) = 1/2
  EXPECT_DOUBLE_EQ(tp.tau_schedule(400.0), 20.0);
  tp.delta = 0.5;  // exponent 2/3
  EXPECT_NEAR(tp.tau_schedule(400.0), 2.0 * std::pow(100.0, 2.0 / 3.0), 1e-12);
  tp.kappa_low = 0.5;
  tp.s = 4;
  EXPECT_DOUBLE_EQ(tp.error_bound(0.1), 0.4);
  EXPECT_NO_THROW(tp.validate());
  tp.kappa_up = 0.1;
  EXPECT_THROW(tp.validate(), std::invalid_argument);
  EXPECT_EQ(kDifferenceOperatorNorm, 2.0);
}

TEST(Gradient, MatchesFiniteDifferences)
{
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const ProblemData d = random_instance(25, 6, 10 + static_cast<std::uint64_t>(trial), NoiseLaw::student_t());
    const Vector beta = random_vector(rng, 6, 0.5);
    const double tau = 0.3 + rng.uniform();
    const Vector r = d.y() - d.X() * beta;
    if (((r.array().abs() - tau).abs() < 1e-3).any()) continue;
    const Vector g = huber_gradient(d, beta, tau);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < 6; ++j) {
      Vector bp = beta, bm = beta;
      bp[j] += h;
      bm[j] -= h;
      const double fd = (huber_loss(d.y() - d.X() * bp, tau) - huber_loss(d.y() - d.X() * bm, tau)) / (2 * h);
      EXPECT_NEAR(g[j], fd, 1e-5);
    }
  }
}

TEST(Bregman, SymmetryNonnegativityAndScaling)
{
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const ProblemData d = random_instance(20, 5, 50 + static_cast<std::uint64_t>(trial), NoiseLaw::lognormal());
    const Vector b1 = random_vector(rng, 5), b2 = random_vector(rng, 5);
    const double tau = 0.2 + 2 * rng.uniform();
    EXPECT_EQ(bregman_symmetric(b1, b1, d, tau), 0.0);
    const double v = bregman_symmetric(b1, b2, d, tau);
    EXPECT_GE(v, -1e-10);
    EXPECT_EQ(v, bregman_symmetric(b2, b1, d, tau));
    for (int k = 1; k <= 9; ++k) {
      const double l = 0.1 * k;
      const Vector bl = b2 + l * (b1 - b2);
      EXPECT_LE(bregman_symmetric(bl, b2, d, tau), l * v + 1e-10);
    }
  }
  EXPECT_THROW(bregman_symmetric(Vector::Zero(2), Vector::Zero(3), random_instance(4, 2, 1), 1.0),
               std::invalid_argument);
}

TEST(Gram, Examples)
{
  const ProblemData ident(Matrix::Identity(4, 4), Vector::Zero(4));
  EXPECT_LE((gram_matrix(ident) - 0.25 * Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-15);

  const ProblemData d = random_instance(13, 5, 2);
  Matrix oracle = Matrix::Zero(5, 5);
  for (Eigen::Index a = 0; a < 5; ++a)
    for (Eigen::Index b = 0; b < 5; ++b)
      for (Eigen::Index i = 0; i < 13; ++i) oracle(a, b) += d.X()(i, a) * d.X()(i, b) / 13.0;
  EXPECT_LE((gram_matrix(d) - oracle).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(gram_matrix(d), huber_hessian(d, Vector::Zero(5), std::numeric_limits<double>::infinity()));
}

TEST(Hessian, Examples)
{
  // Residuals y - X*0 = (0.5, 3): only the first row is inside tau = 1.
  Matrix X(2, 2);
  X << 1, 2, 3, 4;
  const ProblemData d(X, Vector{{0.5, 3.0}});
  Matrix expect(2, 2);
  expect << 1, 2, 2, 4;
  expect /= 2.0;
  EXPECT_LE((huber_hessian(d, Vector::Zero(2), 1.0) - expect).cwiseAbs().maxCoeff(), 1e-15);

  const ProblemData g = random_instance(10, 3, 8);
  EXPECT_TRUE(huber_hessian(g, Vector::Zero(3), 1e-300).isZero(0.0));
  EXPECT_THROW(huber_hessian(g, Vector::Zero(3), 0.0), std::invalid_argument);
  EXPECT_THROW(huber_hessian(g, Vector::Zero(2), 1.0), std::invalid_argument);
}

TEST(Hessian, SandwichedByGram)
{
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const ProblemData d = random_instance(30, 6, 70 + static_cast<std::uint64_t>(trial), NoiseLaw::student_t());
    const Matrix H = huber_hessian(d, random_vector(rng, 6), 0.5 + rng.uniform());
    const Matrix S = gram_matrix(d);
    EXPECT_LE((H - H.transpose()).cwiseAbs().maxCoeff(), 0.0);
    for (int k = 0; k < 50; ++k) {
      const Vector u = random_vector(rng, 6);
      const double h = u.dot(H * u);
      EXPECT_GE(h, -1e-12);
      EXPECT_LE(h, u.dot(S * u) + 1e-12);
    }
  }
}

TEST(RestrictedEigenvalue, IdentityIsExact)
{
  const auto est = restricted_eigenvalue_estimate(Matrix::Identity(6, 6), {0, 1}, 3, 1.0, 500, 1);
  EXPECT_NEAR(est.rho_minus, 1.0, 1e-14);
  EXPECT_NEAR(est.rho_plus, 1.0, 1e-14);
  // supersets of {0,1} of size <= 3: {0,1} plus four single additions
  EXPECT_EQ(est.subsets, 5u);
}

TEST(RestrictedEigenvalue, WithinSpectrum)
{
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix A(8, 8);
    for (auto& x : A.reshaped()) x = rng.normal();
    const Matrix M = A.transpose() * A;
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
    const auto est = restricted_eigenvalue_estimate(M, {2}, 4, 2.0, 2000, static_cast<std::uint64_t>(trial));
    EXPECT_GE(est.rho_minus, eig.eigenvalues().minCoeff() - 1e-10);
    EXPECT_LE(est.rho_plus, eig.eigenvalues().maxCoeff() + 1e-10);
    EXPECT_LE(est.rho_minus, est.rho_plus);
  }
}

TEST(RestrictedEigenvalue, DiagonalApproachesLargestEntry)
{
  Matrix M = Matrix::Zero(2, 2);
  M(0, 0) = 1.0;
  M(1, 1) = 4.0;
  const auto est = restricted_eigenvalue_estimate(M, {0}, 2, 1e6, 20000, 3);
  EXPECT_GT(est.rho_plus, 3.99);
  EXPECT_LT(est.rho_minus, 1.01);
}

TEST(RestrictedEigenvalue, ArgumentErrors)
{
  EXPECT_THROW(restricted_eigenvalue_estimate(Matrix::Identity(21, 21), {0}, 2, 1.0, 10), std::invalid_argument);
  EXPECT_THROW(restricted_eigenvalue_estimate(Matrix::Identity(4, 4), {0, 1, 2}, 2, 1.0, 10), std::invalid_argument);
  EXPECT_THROW(restricted_eigenvalue_estimate(Matrix::Identity(4, 4), {7}, 2, 1.0, 10), std::invalid_argument);
  EXPECT_THROW(restricted_eigenvalue_estimate(Matrix::Identity(4, 4), {0}, 2, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(restricted_eigenvalue_estimate(Matrix::Identity(4, 3), {0}, 2, 1.0, 10), std::invalid_argument);
}

TEST(ConeCheck, HoldsWhenGradientConditionHolds)
{
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SyntheticSpec spec;
    spec.n = 200;
    spec.p = 20;
    spec.noise = NoiseLaw::gaussian(0.5);
    spec.seed = seed;
    const SyntheticData sd = generate(spec);
    const double tau = 1.345;
    const double lambda1 = 2.5 * huber_gradient(sd.train, sd.beta_star, tau).lpNorm<Eigen::Infinity>() + 1e-3;
    SolverConfig cfg;
    cfg.tau = tau;
    cfg.lambda1 = lambda1;
    cfg.lambda2 = 0.5 * lambda1;
    cfg.tol = 1e-8;
    cfg.max_iter = 100000;
    const SolveResult r = solve(sd.train, cfg);
    const ConeReport rep = cone_check(sd.train, r.beta, sd.beta_star, tau, cfg.lambda1, cfg.lambda2);
    EXPECT_DOUBLE_EQ(rep.cone_constant, (2 * 0.5 * 2 + 3) / (2 * 0.5 * 2 + 1.0));
    ASSERT_TRUE(rep.gradient_condition);
    EXPECT_TRUE(rep.inside_cone) << rep.off_support_l1 << " vs " << rep.cone_constant << " * " << rep.on_support_l1;
    ++checked;
  }
  EXPECT_EQ(checked, 30);
}

TEST(ConeCheck, Bookkeeping)
{
  const ProblemData d(Matrix::Identity(3, 3), Vector::Zero(3));
  const ConeReport rep = cone_check(d, Vector{{1.5, 0.0, -1.0}}, Vector{{1.0, 0.0, 0.0}}, 1.0, 1.0, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(rep.on_support_l1, 0.5);
  EXPECT_DOUBLE_EQ(rep.off_support_l1, 1.0);
  EXPECT_DOUBLE_EQ(rep.cone_constant, 7.0 / 5.0);
  EXPECT_FALSE(rep.inside_cone);
  EXPECT_DOUBLE_EQ(rep.gradient_sup, 1.0 / 3.0);
  EXPECT_TRUE(rep.gradient_condition);
  EXPECT_THROW(cone_check(d, Vector::Zero(3), Vector::Zero(3), 1.0, 0.0, 1.0), std::invalid_argument);
}

TEST(Median, Examples)
{
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(RateExperiment, NoiselessFlagsSlopeUndefined)
{
  RateExperimentSpec spec;
  spec.p = 12;
  spec.noise = NoiseLaw::gaussian(0.0);
  spec.n_list = {40, 80};
  spec.replications = 2;
  spec.base.tol = 1e-13;
  spec.base.max_iter = 200000;
  spec.grid = [](Eigen::Index, Eigen::Index) { return TuneGrid{{1.0}, {0.0}, {0.0}}; };
  const RateTable t = rate_experiment(spec);
  ASSERT_EQ(t.rows.size(), 2u);
  for (const auto& row : t.rows) EXPECT_LE(row.median_error, 1e-8);
  EXPECT_TRUE(t.slope_undefined);
  EXPECT_FALSE(t.slope.has_value());
  std::ostringstream os;
  write_rate_table(os, t);
  EXPECT_NE(os.str().find("slope,undefined,"), std::string::npos);
}

TEST(RateExperiment, ErrorShrinksWithNAndIsDeterministic)
{
  RateExperimentSpec spec;
  spec.p = 20;
  spec.noise = NoiseLaw::gaussian(0.5);
  spec.n_list = {100, 400};
  spec.replications = 5;
  spec.seed = 11;
  spec.grid = [](Eigen::Index n, Eigen::Index p) {
    return TuneGrid{{std::sqrt(static_cast<double>(n) / std::log(static_cast<double>(p)))},
                    log_grid(-3, -1, 3), log_grid(-3, -1, 3)};
  };
  const RateTable a = rate_experiment(spec);
  EXPECT_LT(a.rows[1].median_error, a.rows[0].median_error);
  ASSERT_TRUE(a.slope.has_value());
  EXPECT_LT(*a.slope, 0.0);

  spec.workers = 2;
  const RateTable b = rate_experiment(spec);
  for (std::size_t k = 0; k < a.rows.size(); ++k) EXPECT_EQ(a.rows[k].errors, b.rows[k].errors);

  // Replications are seeded individually: extending the run keeps the first ones bitwise.
  spec.replications = 10;
  const RateTable c = rate_experiment(spec);
  for (std::size_t k = 0; k < a.rows.size(); ++k)
    for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(c.rows[k].errors[r], a.rows[k].errors[r]);
}
