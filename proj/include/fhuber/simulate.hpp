#pragma once

#include "fhuber/core.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

namespace fhuber {

/// Seeded random source with pinned transforms.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++ standard. The standard
/// library's distributions are implementation-defined, so the continuous transforms are spelled out
/// here: 53-bit uniforms, Marsaglia polar normals, Marsaglia-Tsang gammas. Changing any of them
/// changes every generated dataset; bump kRngVersion when that happens.
class Rng {
 public:
  static constexpr int kRngVersion = 1;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Gamma(shape, 1).
  double gamma(double shape)
  {
    if (!(shape > 0.0)) throw std::invalid_argument("Rng::gamma: shape must be positive");
    if (shape < 1.0) {
      // Gamma(a) = Gamma(a + 1) * U^(1/a)
      const double g = gamma(shape + 1.0);
      double u;
      do u = uniform(); while (u == 0.0);
      return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }

  double student_t(double df)
  {
    const double z = normal();
    return z / std::sqrt(chi_squared(df) / df);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer over (seed, stream): independent sub-seeds for the parts of one dataset.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum class NoiseKind { gaussian, student_t, lognormal };

/// A noise law with its single shape parameter: gaussian sd, t degrees of freedom, or the sd of
/// log(eps) for the lognormal (whose log-mean is 0).
struct NoiseLaw {
  NoiseKind kind = NoiseKind::gaussian;
  double param = 0.05;

  static NoiseLaw gaussian(double sd = 0.05) { return {NoiseKind::gaussian, sd}; }
  static NoiseLaw student_t(double df = 1.5) { return {NoiseKind::student_t, df}; }
  static NoiseLaw lognormal(double sd = 2.0) { return {NoiseKind::lognormal, sd}; }
};

inline std::string to_string(NoiseKind k)
{
  switch (k) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::student_t: return "t";
    case NoiseKind::lognormal: return "lognormal";
  }
  return "?";
}

/// Accepts "gaussian"/"normal", "t"/"student_t", "lognormal"; uses the default parameter of each law.
inline NoiseLaw parse_noise(const std::string& s)
{
  if (s == "gaussian" || s == "normal") return NoiseLaw::gaussian();
  if (s == "t" || s == "student_t") return NoiseLaw::student_t();
  if (s == "lognormal") return NoiseLaw::lognormal();
  throw std::invalid_argument("unknown noise law '" + s + "' (expected gaussian|t|lognormal)");
}

struct SyntheticSpec {
  Eigen::Index n = 100;
  Eigen::Index n_test = 100;
  Eigen::Index p = 50;
  double rho = 0.5;
  NoiseLaw noise = NoiseLaw::gaussian();
  std::uint64_t seed = 0;

  void validate() const
  {
    if (n < 1) throw std::invalid_argument("SyntheticSpec: n must be positive");
    if (n_test < 0) throw std::invalid_argument("SyntheticSpec: n_test must be nonnegative");
    if (p < 12) throw std::invalid_argument("SyntheticSpec: p must be at least 12");
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("SyntheticSpec: rho must lie in [0, 1)");
  }
};

/// (1,1,1,1,1,1, 2, 1.5,1.5,1.5,1.5) followed by p - 11 zeros.
inline Coefficients make_beta_star(Eigen::Index p)
{
  if (p < 12) throw std::invalid_argument("make_beta_star: p must be at least 12");
  Coefficients b = Coefficients::Zero(p);
  b.head(6).setConstant(1.0);
  b[6] = 2.0;
  b.segment(7, 4).setConstant(1.5);
  return b;
}

/// Rows i.i.d. N(0, Sigma), Sigma_ij = rho^|i-j|, via the stationary AR(1) recursion along each row.
inline Matrix sample_design(Eigen::Index n, Eigen::Index p, double rho, std::uint64_t seed)
{
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("sample_design: rho must lie in [0, 1)");
  if (n < 1 || p < 1) throw std::invalid_argument("sample_design: need n, p >= 1");
  Rng rng(seed);
  const double innov = std::sqrt(1.0 - rho * rho);
  Matrix X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    for (Eigen::Index j = 1; j < p; ++j) X(i, j) = rho * X(i, j - 1) + innov * rng.normal();
  }
  return X;
}

inline Vector sample_noise(const NoiseLaw& law, Eigen::Index n, std::uint64_t seed)
{
  if (n < 1) throw std::invalid_argument("sample_noise: n must be positive");
  Rng rng(seed);
  Vector e(n);
  switch (law.kind) {
    case NoiseKind::gaussian:
      if (!(law.param >= 0.0)) throw std::invalid_argument("sample_noise: gaussian sd must be nonnegative");
      for (Eigen::Index i = 0; i < n; ++i) e[i] = law.param * rng.normal();
      break;
    case NoiseKind::student_t:
      if (!(law.param > 0.0)) throw std::invalid_argument("sample_noise: t degrees of freedom must be positive");
      for (Eigen::Index i = 0; i < n; ++i) e[i] = rng.student_t(law.param);
      break;
    case NoiseKind::lognormal:
      if (!(law.param >= 0.0)) throw std::invalid_argument("sample_noise: lognormal sd must be nonnegative");
      for (Eigen::Index i = 0; i < n; ++i) e[i] = std::exp(law.param * rng.normal());
      break;
    default: throw std::invalid_argument("sample_noise: unknown noise kind");
  }
  return e;
}

struct SyntheticData {
  ProblemData train;
  std::optional<ProblemData> test;  // absent when n_test == 0
  Coefficients beta_star;
};

/// y = X beta* + eps for independent train and test draws; fully determined by spec.seed.
inline SyntheticData generate(const SyntheticSpec& spec)
{
  spec.validate();
  Coefficients beta_star = make_beta_star(spec.p);
  auto draw = [&](Eigen::Index rows, std::uint64_t stream) {
    Matrix X = sample_design(rows, spec.p, spec.rho, derive_seed(spec.seed, stream));
    Vector y = X * beta_star + sample_noise(spec.noise, rows, derive_seed(spec.seed, stream + 1));
    return ProblemData(std::move(X), std::move(y));
  };
  ProblemData train = draw(spec.n, 0);
  std::optional<ProblemData> test;
  if (spec.n_test > 0) test.emplace(draw(spec.n_test, 2));
  return {std::move(train), std::move(test), std::move(beta_star)};
}

}  // namespace fhuber
