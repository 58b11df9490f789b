#pragma once

// Orchestration behind the command-line tool: configuration, data loading and preprocessing, and
// the report files each subcommand writes. Primary outputs are deterministic functions of the
// configuration; wall-clock data goes only to run.log and timing.csv.

#include "fhuber/csv.hpp"
#include "fhuber/diagnostics.hpp"
#include "fhuber/metrics.hpp"
#include "fhuber/ordering.hpp"
#include "fhuber/parallel.hpp"
#include "fhuber/simulate.hpp"
#include "fhuber/solver.hpp"
#include "fhuber/tune.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fhuber::cli {

inline constexpr const char* kVersion = "0.1.0";

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

enum class Command { simulate, fit, tune, bench, diagnose };
enum class ColumnOrder { none, hierarchical };

inline const char* to_string(Command c)
{
  switch (c) {
    case Command::simulate: return "simulate";
    case Command::fit: return "fit";
    case Command::tune: return "tune";
    case Command::bench: return "bench";
    case Command::diagnose: return "diagnose";
  }
  return "?";
}

inline Command parse_command(const std::string& s)
{
  for (Command c : {Command::simulate, Command::fit, Command::tune, Command::bench, Command::diagnose})
    if (s == to_string(c)) return c;
  throw std::invalid_argument("unknown command '" + s + "'");
}

inline const char* to_string(ColumnOrder o) { return o == ColumnOrder::none ? "none" : "hierarchical"; }

inline ColumnOrder parse_order(const std::string& s)
{
  if (s == "none") return ColumnOrder::none;
  if (s == "hierarchical") return ColumnOrder::hierarchical;
  throw std::invalid_argument("unknown column order '" + s + "' (expected none|hierarchical)");
}

struct RunConfig {
  Command command = Command::fit;
  std::uint64_t seed = 0;
  fs::path out = "out";
  std::optional<fs::path> data;        // training CSV; synthetic data when absent
  std::optional<fs::path> validation;  // held-out CSV with the same columns
  std::optional<fs::path> beta_star;   // known truth, index,value
  std::optional<fs::path> beta;        // diagnose: fitted coefficients, index,value
  std::string response = "y";
  SolverConfig solver;
  bool normalize = false;
  ColumnOrder order = ColumnOrder::none;
  int replications = 20;
  int workers = 1;
  SyntheticSpec synthetic;

  // Tuning grids. tau = multiplier * sqrt(n / ln p). Unset grids fall back to per-command defaults.
  std::optional<std::vector<double>> tau_multipliers;
  std::optional<std::vector<double>> lambda1_grid;
  std::optional<std::vector<double>> lambda2_grid;

  std::vector<Eigen::Index> bench_p{50, 200, 400};
  std::vector<NoiseLaw> bench_noise{NoiseLaw::gaussian(), NoiseLaw::student_t(), NoiseLaw::lognormal()};
  bool compare = true;  // bench: also fit the least-squares fused lasso

  bool rate = false;  // diagnose: run the rate-vs-n experiment
  std::vector<Eigen::Index> rate_n{100, 400, 1600};
  int re_samples = 2000;

  void validate() const
  {
    solver.validate();
    synthetic.validate();
    if (replications < 1) throw std::invalid_argument("replications must be positive");
    if (workers < 1) throw std::invalid_argument("workers must be positive");
    if (re_samples < 1) throw std::invalid_argument("re_samples must be positive");
    for (const auto* p : {&data, &validation, &beta_star, &beta})
      if (*p && !fs::exists(**p)) throw std::invalid_argument("input file not found: " + (*p)->string());
    if (bench_p.empty() || bench_noise.empty()) throw std::invalid_argument("bench needs at least one p and noise");
    for (Eigen::Index p : bench_p)
      if (p < 12) throw std::invalid_argument("bench p must be at least 12");
    if (rate_n.empty()) throw std::invalid_argument("rate_n must be nonempty");
  }
};

/// The paper's tau multipliers 0.40, 0.45, ..., 1.50.
inline std::vector<double> full_tau_multipliers()
{
  std::vector<double> a;
  for (int k = 0; k <= 22; ++k) a.push_back(static_cast<double>(40 + 5 * k) / 100.0);
  return a;
}

/// Smaller default for the replicated bench loop.
inline std::vector<double> bench_tau_multipliers() { return {0.4, 0.95, 1.5}; }
inline std::vector<double> bench_lambda_grid() { return log_grid(-3.0, 0.0, 4); }

inline TuneGrid make_grid(const std::vector<double>& multipliers, const std::vector<double>& l1,
                          const std::vector<double>& l2, Eigen::Index n, Eigen::Index p)
{
  const double scale = std::sqrt(static_cast<double>(n) / std::log(static_cast<double>(p)));
  TuneGrid g;
  for (double a : multipliers) g.taus.push_back(a * scale);
  g.lambda1s = l1;
  g.lambda2s = l2;
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------------------------
// JSON configuration

namespace detail {

inline NoiseLaw noise_from_json(const json& j)
{
  if (j.is_string()) return parse_noise(j.get<std::string>());
  NoiseLaw law = parse_noise(j.at("kind").get<std::string>());
  if (j.contains("param")) law.param = j.at("param").get<double>();
  return law;
}

inline json noise_to_json(const NoiseLaw& law) { return json{{"kind", to_string(law.kind)}, {"param", law.param}}; }

}  // namespace detail

/// A threshold given as text: a finite number, or "inf" for the squared-loss limit.
inline double parse_tau(const std::string& s)
{
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw std::invalid_argument("expected a number or \"inf\", got \"" + s + "\"");
  return v;
}

namespace detail {

inline double number_or_infinity(const json& j) { return j.is_string() ? parse_tau(j.get<std::string>()) : j.get<double>(); }

}  // namespace detail

/// Applies the keys of a JSON object onto `cfg`. Unknown keys are rejected so typos surface.
inline void apply_json(RunConfig& cfg, const json& j)
{
  if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "out") cfg.out = v.get<std::string>();
      else if (key == "data") cfg.data = v.get<std::string>();
      else if (key == "validation") cfg.validation = v.get<std::string>();
      else if (key == "beta_star") cfg.beta_star = v.get<std::string>();
      else if (key == "beta") cfg.beta = v.get<std::string>();
      else if (key == "response") cfg.response = v.get<std::string>();
      else if (key == "tau") cfg.solver.tau = detail::number_or_infinity(v);
      else if (key == "lambda1") cfg.solver.lambda1 = v.get<double>();
      else if (key == "lambda2") cfg.solver.lambda2 = v.get<double>();
      else if (key == "sigma") cfg.solver.sigma = v.get<double>();
      else if (key == "pi") cfg.solver.pi = v.get<double>();
      else if (key == "tol") cfg.solver.tol = v.get<double>();
      else if (key == "max_iter") cfg.solver.max_iter = v.get<int>();
      else if (key == "loss") cfg.solver.loss = parse_loss(v.get<std::string>());
      else if (key == "normalize") cfg.normalize = v.get<bool>();
      else if (key == "order") cfg.order = parse_order(v.get<std::string>());
      else if (key == "replications") cfg.replications = v.get<int>();
      else if (key == "workers") cfg.workers = v.get<int>();
      else if (key == "n") cfg.synthetic.n = v.get<Eigen::Index>();
      else if (key == "n_test") cfg.synthetic.n_test = v.get<Eigen::Index>();
      else if (key == "p") cfg.synthetic.p = v.get<Eigen::Index>();
      else if (key == "rho") cfg.synthetic.rho = v.get<double>();
      else if (key == "noise") cfg.synthetic.noise = detail::noise_from_json(v);
      else if (key == "tau_multipliers") cfg.tau_multipliers = v.get<std::vector<double>>();
      else if (key == "lambda1_grid") cfg.lambda1_grid = v.get<std::vector<double>>();
      else if (key == "lambda2_grid") cfg.lambda2_grid = v.get<std::vector<double>>();
      else if (key == "bench_p") cfg.bench_p = v.get<std::vector<Eigen::Index>>();
      else if (key == "bench_noise") {
        cfg.bench_noise.clear();
        for (const auto& e : v) cfg.bench_noise.push_back(detail::noise_from_json(e));
      }
      else if (key == "compare") cfg.compare = v.get<bool>();
      else if (key == "rate") cfg.rate = v.get<bool>();
      else if (key == "rate_n") cfg.rate_n = v.get<std::vector<Eigen::Index>>();
      else if (key == "re_samples") cfg.re_samples = v.get<int>();
      else throw std::invalid_argument("unknown key");
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
}

inline RunConfig load_config(const fs::path& path, RunConfig base = {})
{
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file " + path.string() + ": " + e.what());
  }
  apply_json(base, j);
  return base;
}

/// Full configuration echo, in the key vocabulary accepted by apply_json.
inline json to_json(const RunConfig& cfg)
{
  auto opt_path = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
  auto opt_vec = [](const std::optional<std::vector<double>>& v) { return v ? json(*v) : json(nullptr); };
  json noise = json::array();
  for (const auto& law : cfg.bench_noise) noise.push_back(detail::noise_to_json(law));
  json tau = std::isinf(cfg.solver.tau) ? json("inf") : json(cfg.solver.tau);
  return json{{"command", to_string(cfg.command)},
              {"seed", cfg.seed},
              {"out", cfg.out.string()},
              {"data", opt_path(cfg.data)},
              {"validation", opt_path(cfg.validation)},
              {"beta_star", opt_path(cfg.beta_star)},
              {"beta", opt_path(cfg.beta)},
              {"response", cfg.response},
              {"tau", tau},
              {"lambda1", cfg.solver.lambda1},
              {"lambda2", cfg.solver.lambda2},
              {"sigma", cfg.solver.sigma},
              {"pi", cfg.solver.pi},
              {"tol", cfg.solver.tol},
              {"max_iter", cfg.solver.max_iter},
              {"loss", to_string(cfg.solver.loss)},
              {"normalize", cfg.normalize},
              {"order", to_string(cfg.order)},
              {"replications", cfg.replications},
              {"workers", cfg.workers},
              {"n", cfg.synthetic.n},
              {"n_test", cfg.synthetic.n_test},
              {"p", cfg.synthetic.p},
              {"rho", cfg.synthetic.rho},
              {"noise", detail::noise_to_json(cfg.synthetic.noise)},
              {"tau_multipliers", opt_vec(cfg.tau_multipliers)},
              {"lambda1_grid", opt_vec(cfg.lambda1_grid)},
              {"lambda2_grid", opt_vec(cfg.lambda2_grid)},
              {"bench_p", cfg.bench_p},
              {"bench_noise", noise},
              {"compare", cfg.compare},
              {"rate", cfg.rate},
              {"rate_n", cfg.rate_n},
              {"re_samples", cfg.re_samples}};
}

// ---------------------------------------------------------------------------------------------
// Output plumbing

/// Collects primary outputs, the manifest, and a timestamped log for one run.
class RunWriter {
 public:
  RunWriter(const RunConfig& cfg) : cfg_(cfg), start_(std::chrono::steady_clock::now())
  {
    fs::create_directories(cfg.out);
    log_.open(cfg.out / "run.log", std::ios::trunc);
    if (!log_) throw std::runtime_error("cannot write to output directory " + cfg.out.string());
    log("start " + std::string(to_string(cfg.command)));
  }

  /// Writes a primary (deterministic) output and records it in the manifest.
  void write(const std::string& name, const std::string& content)
  {
    std::ofstream out(cfg_.out / name, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("failed to write " + (cfg_.out / name).string());
    outputs_.push_back(name);
  }

  /// Non-deterministic side file (timings); listed separately in the manifest.
  void write_volatile(const std::string& name, const std::string& content)
  {
    std::ofstream out(cfg_.out / name, std::ios::binary | std::ios::trunc);
    out << content;
    volatile_.push_back(name);
  }

  void log(const std::string& msg)
  {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::tm tm{};
    gmtime_r(&t, &tm);
    log_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << " +" << std::fixed << std::setprecision(3) << elapsed
         << "s " << msg << '\n';
    log_.flush();
  }

  json& extra() { return extra_; }

  /// Writes manifest.json; returns the exit code (0 iff no failures were recorded).
  int finish(int failures)
  {
    json m;
    m["tool"] = "fhuber";
    m["version"] = kVersion;
    m["versions"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"rng", Rng::kRngVersion}};
    m["config"] = to_json(cfg_);
    m["results"] = extra_;
    m["failures"] = failures;
    m["outputs"] = outputs_;
    m["volatile_outputs"] = volatile_;
    m["log"] = "run.log";
    std::ofstream out(cfg_.out / "manifest.json", std::ios::binary | std::ios::trunc);
    out << m.dump(2) << '\n';
    log("done, failures=" + std::to_string(failures));
    return failures == 0 ? 0 : 1;
  }

 private:
  const RunConfig& cfg_;
  std::chrono::steady_clock::time_point start_;
  std::ofstream log_;
  std::vector<std::string> outputs_;
  std::vector<std::string> volatile_;
  json extra_ = json::object();
};

namespace detail {

inline std::string fmt(double v) { return format_double(v); }

inline std::string csv_text(const ProblemData& d, const std::string& response, const std::vector<std::string>& names)
{
  std::ostringstream os;
  write_csv(os, d, response, names);
  return os.str();
}

inline std::string vector_text(const Vector& v, const std::string& name)
{
  std::ostringstream os;
  os << "index," << name << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i + 1) << ',' << fmt(v[i]) << '\n';
  return os.str();
}

inline std::string history_text(const std::vector<KktResiduals>& h)
{
  std::ostringstream os;
  os << "iteration,res,phi_mu,phi_z,phi_alpha,phi_beta,phi_gamma\n";
  for (std::size_t k = 0; k < h.size(); ++k)
    os << (k + 1) << ',' << fmt(h[k].res) << ',' << fmt(h[k].phi_mu) << ',' << fmt(h[k].phi_z) << ','
       << fmt(h[k].phi_alpha) << ',' << fmt(h[k].phi_beta) << ',' << fmt(h[k].phi_gamma) << '\n';
  return os.str();
}

/// metric,value rows; values already formatted.
class MetricTable {
 public:
  void add(const std::string& name, double v) { rows_.emplace_back(name, fmt(v)); }
  void add(const std::string& name, const std::string& v) { rows_.emplace_back(name, v); }
  std::string text() const
  {
    std::string s = "metric,value\n";
    for (const auto& [k, v] : rows_) s += k + ',' + v + '\n';
    return s;
  }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

inline std::vector<std::string> default_names(Eigen::Index p)
{
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Data preparation

/// Training data, optional held-out data and truth, after column ordering and normalization.
struct PreparedData {
  ProblemData train;
  std::optional<ProblemData> validation;
  std::optional<Coefficients> beta_star;  // in the prepared column order, original scale
  std::vector<std::string> feature_names;
  std::vector<Eigen::Index> order;        // prepared column k is input column order[k]
  Vector scale;                           // prepared column k was divided by scale[k]
};

/// Loads or generates the data named by the config. Synthetic data uses cfg.seed.
inline PreparedData load_inputs(const RunConfig& cfg)
{
  std::optional<ProblemData> train, validation;
  std::optional<Coefficients> truth;
  std::vector<std::string> names;
  if (cfg.data) {
    Dataset ds = load_dataset(*cfg.data, cfg.response);
    train = std::move(ds.data);
    names = std::move(ds.feature_names);
    if (cfg.validation) {
      Dataset vs = load_dataset(*cfg.validation, cfg.response);
      if (vs.feature_names != names)
        throw std::invalid_argument("validation file columns differ from training file columns");
      validation = std::move(vs.data);
    }
  } else {
    SyntheticSpec spec = cfg.synthetic;
    spec.seed = cfg.seed;
    SyntheticData sd = generate(spec);
    train = std::move(sd.train);
    validation = std::move(sd.test);
    truth = std::move(sd.beta_star);
    names = detail::default_names(train->p());
  }
  if (cfg.beta_star) {
    truth = load_vector_csv(*cfg.beta_star);
    if (truth->size() != train->p()) throw std::invalid_argument("beta_star length does not match the data");
  }
  return {std::move(*train), std::move(validation), std::move(truth), std::move(names), {}, Vector()};
}

/// Applies --order then --normalize, both estimated on the training rows only.
inline PreparedData prepare(PreparedData in, const RunConfig& cfg)
{
  const Eigen::Index p = in.train.p();
  in.order.resize(static_cast<std::size_t>(p));
  std::iota(in.order.begin(), in.order.end(), Eigen::Index{0});
  Matrix X = in.train.X();
  std::optional<Matrix> Xv;
  if (in.validation) Xv = in.validation->X();
  if (cfg.order == ColumnOrder::hierarchical) {
    in.order = hierarchical_order(X);
    X = permute_columns(X, in.order);
    if (Xv) Xv = permute_columns(*Xv, in.order);
    std::vector<std::string> names;
    Coefficients truth(p);
    for (std::size_t k = 0; k < in.order.size(); ++k) {
      names.push_back(in.feature_names[static_cast<std::size_t>(in.order[k])]);
      if (in.beta_star) truth[static_cast<Eigen::Index>(k)] = (*in.beta_star)[in.order[k]];
    }
    in.feature_names = std::move(names);
    if (in.beta_star) in.beta_star = truth;
  }
  in.scale = Vector::Ones(p);
  if (cfg.normalize) {
    in.scale = normalize_columns(X);
    if (Xv) *Xv = (*Xv).array().rowwise() / in.scale.transpose().array();
  }
  in.train = ProblemData(std::move(X), in.train.y());
  if (Xv) in.validation = ProblemData(std::move(*Xv), in.validation->y());
  return in;
}

/// Held-out split for tuning: the validation data when present, else a seeded 70/30 row split.
inline std::pair<ProblemData, ProblemData> tuning_split(const PreparedData& d, std::uint64_t seed)
{
  if (d.validation) return {d.train, *d.validation};
  return train_test_split(d.train, default_train_size(d.train.n()), derive_seed(seed, 7));
}

// ---------------------------------------------------------------------------------------------
// Commands

inline std::string beta_text(const PreparedData& d, const Vector& beta)
{
  std::ostringstream os;
  os << "index,feature,beta,beta_original_scale\n";
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    os << (j + 1) << ',' << d.feature_names[static_cast<std::size_t>(j)] << ',' << detail::fmt(beta[j]) << ','
       << detail::fmt(beta[j] / d.scale[j]) << '\n';
  return os.str();
}

inline int run_simulate(const RunConfig& cfg)
{
  RunWriter w(cfg);
  SyntheticSpec spec = cfg.synthetic;
  spec.seed = cfg.seed;
  const SyntheticData sd = generate(spec);
  const auto names = detail::default_names(spec.p);
  w.write("train.csv", detail::csv_text(sd.train, cfg.response, names));
  if (sd.test) w.write("test.csv", detail::csv_text(*sd.test, cfg.response, names));
  w.write("beta_star.csv", detail::vector_text(sd.beta_star, "beta_star"));
  w.extra()["seed_streams"] = {{"train_design", derive_seed(spec.seed, 0)}, {"train_noise", derive_seed(spec.seed, 1)},
                               {"test_design", derive_seed(spec.seed, 2)}, {"test_noise", derive_seed(spec.seed, 3)}};
  return w.finish(0);
}

inline int run_fit(const RunConfig& cfg)
{
  RunWriter w(cfg);
  const PreparedData d = prepare(load_inputs(cfg), cfg);
  w.log("data n=" + std::to_string(d.train.n()) + " p=" + std::to_string(d.train.p()));
  const auto t0 = std::chrono::steady_clock::now();
  const SolveResult r = solve(d.train, cfg.solver);
  const double cpu = detail::seconds_since(t0);
  w.log("solve " + std::string(to_string(r.status)) + " in " + std::to_string(r.iterations) + " iterations, " +
        std::to_string(cpu) + " s");

  const Vector beta_orig = r.beta.cwiseQuotient(d.scale);
  detail::MetricTable m;
  m.add("objective", objective(d.train, r.beta, cfg.solver));
  m.add("iterations", std::to_string(r.iterations));
  m.add("status", to_string(r.status));
  m.add("final_res", r.residual_history.empty() ? 0.0 : r.residual_history.back().res);
  m.add("train_mae", mae(d.train, r.beta));
  if (d.train.n() >= 2) m.add("residual_std", residual_std(d.train, r.beta));
  if (d.validation) m.add("validation_mae", mae(*d.validation, r.beta));
  if (d.beta_star) m.add("estimation_error", estimation_error(beta_orig, *d.beta_star));
  w.write("beta.csv", beta_text(d, r.beta));
  w.write("history.csv", detail::history_text(r.residual_history));
  w.write("summary.csv", m.text());
  w.write_volatile("timing.csv", "metric,value\ncpu_seconds," + detail::fmt(cpu) + "\n");
  w.extra()["status"] = to_string(r.status);
  w.extra()["iterations"] = r.iterations;
  return w.finish(0);
}

inline int run_tune(const RunConfig& cfg)
{
  RunWriter w(cfg);
  const PreparedData d = prepare(load_inputs(cfg), cfg);
  const auto [train, val] = tuning_split(d, cfg.seed);
  const TuneGrid grid = make_grid(cfg.tau_multipliers.value_or(full_tau_multipliers()),
                                  cfg.lambda1_grid.value_or(default_lambda_grid()),
                                  cfg.lambda2_grid.value_or(default_lambda_grid()), train.n(), train.p());
  TuneOptions opts;
  opts.workers = cfg.workers;
  if (d.beta_star && !cfg.normalize) opts.beta_star = d.beta_star;
  w.log("grid of " + std::to_string(grid.size()) + " cells, train n=" + std::to_string(train.n()) +
        ", validation n=" + std::to_string(val.n()));
  const TuneResult tr = grid_search(train, val, grid, cfg.solver, opts);
  int failures = 0;
  for (const auto& row : tr.table) failures += row.ok ? 0 : 1;

  std::ostringstream scores;
  write_score_table(scores, tr.table);
  w.write("scores.csv", scores.str());
  w.write("beta.csv", beta_text(d, tr.best_beta));
  detail::MetricTable m;
  m.add("tau", tr.best.tau);
  m.add("lambda1", tr.best.lambda1);
  m.add("lambda2", tr.best.lambda2);
  m.add("validation_mae", tr.table[tr.best_index].mae);
  m.add("iterations", std::to_string(tr.table[tr.best_index].iterations));
  m.add("status", to_string(tr.table[tr.best_index].status));
  m.add("cells", std::to_string(tr.table.size()));
  m.add("failed_cells", std::to_string(failures));
  if (d.beta_star) m.add("estimation_error", estimation_error(tr.best_beta.cwiseQuotient(d.scale), *d.beta_star));
  w.write("summary.csv", m.text());
  w.extra()["best"] = {{"tau", tr.best.tau}, {"lambda1", tr.best.lambda1}, {"lambda2", tr.best.lambda2}};
  return w.finish(failures);
}

/// One replication of one bench cell for one method.
struct BenchRecord {
  std::string noise;
  Eigen::Index p = 0;
  std::string method;
  int replication = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double tau = 0, lambda1 = 0, lambda2 = 0;
  double mse = 0, std = 0;
  int iterations = 0;
  std::string status;
  double cpu = 0;
  std::string error;
  Coefficients beta;
};

/// simulate -> tune on the generated validation set -> refit at the selected point (timed).
inline BenchRecord bench_replication(const NoiseLaw& noise, Eigen::Index p, Loss loss, int replication,
                                     const RunConfig& cfg)
{
  BenchRecord rec;
  rec.noise = to_string(noise.kind);
  rec.p = p;
  rec.method = loss == Loss::huber ? "fhadmm" : "least_squares";
  rec.replication = replication;
  rec.seed = cfg.seed + static_cast<std::uint64_t>(replication);
  try {
    SyntheticSpec spec = cfg.synthetic;
    spec.p = p;
    spec.noise = noise;
    spec.seed = rec.seed;
    if (spec.n_test < 1) throw std::invalid_argument("bench needs n_test >= 1 for tuning");
    const SyntheticData sd = generate(spec);
    SolverConfig base = cfg.solver;
    base.loss = loss;
    const TuneGrid grid = make_grid(cfg.tau_multipliers.value_or(bench_tau_multipliers()),
                                    cfg.lambda1_grid.value_or(bench_lambda_grid()),
                                    cfg.lambda2_grid.value_or(bench_lambda_grid()), spec.n, p);
    const TuneResult tr = grid_search(sd.train, *sd.test, grid, base);
    const auto t0 = std::chrono::steady_clock::now();
    const SolveResult fit = solve(sd.train, tr.best);
    rec.cpu = detail::seconds_since(t0);
    rec.tau = loss == Loss::huber ? tr.best.tau : std::numeric_limits<double>::infinity();
    rec.lambda1 = tr.best.lambda1;
    rec.lambda2 = tr.best.lambda2;
    rec.mse = estimation_error(fit.beta, sd.beta_star);
    rec.std = residual_std(sd.train, fit.beta);
    rec.iterations = fit.iterations;
    rec.status = to_string(fit.status);
    rec.beta = fit.beta;
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

inline int run_bench(const RunConfig& cfg)
{
  RunWriter w(cfg);
  std::vector<Loss> methods{Loss::huber};
  if (cfg.compare) methods.push_back(Loss::squared);
  struct Task {
    NoiseLaw noise;
    Eigen::Index p;
    Loss loss;
    int rep;
  };
  std::vector<Task> tasks;
  for (const NoiseLaw& noise : cfg.bench_noise)
    for (Eigen::Index p : cfg.bench_p)
      for (Loss loss : methods)
        for (int r = 0; r < cfg.replications; ++r) tasks.push_back({noise, p, loss, r});
  w.log("bench: " + std::to_string(tasks.size()) + " fits on " + std::to_string(cfg.workers) + " workers");

  std::vector<BenchRecord> recs(tasks.size());
  parallel_for(tasks.size(), cfg.workers, [&](std::size_t i) {
    recs[i] = bench_replication(tasks[i].noise, tasks[i].p, tasks[i].loss, tasks[i].rep, cfg);
  });

  std::ostringstream raw, summary, timing;
  raw << "noise,p,method,replication,seed,ok,tau,lambda1,lambda2,mse,std,iterations,status,error\n";
  summary << "noise,p,method,metric,value\n";
  timing << "noise,p,method,metric,value\n";
  int failures = 0;
  for (const BenchRecord& r : recs) {
    raw << r.noise << ',' << r.p << ',' << r.method << ',' << r.replication << ',' << r.seed << ',' << (r.ok ? 1 : 0)
        << ',';
    if (r.ok)
      raw << detail::fmt(r.tau) << ',' << detail::fmt(r.lambda1) << ',' << detail::fmt(r.lambda2) << ','
          << detail::fmt(r.mse) << ',' << detail::fmt(r.std) << ',' << r.iterations << ',' << r.status << ',';
    else
      raw << ",,,,,,,";
    for (char c : r.error) raw << (c == ',' || c == '\n' ? ' ' : c);
    raw << '\n';
    failures += r.ok ? 0 : 1;
  }
  // One summary block per (noise, p, method), in configuration order.
  const std::size_t reps = static_cast<std::size_t>(cfg.replications);
  for (std::size_t start = 0; start < recs.size(); start += reps) {
    std::vector<double> mse, sd, cpu;
    for (std::size_t k = start; k < start + reps; ++k)
      if (recs[k].ok) {
        mse.push_back(recs[k].mse);
        sd.push_back(recs[k].std);
        cpu.push_back(recs[k].cpu);
      }
    const BenchRecord& r0 = recs[start];
    const std::string key = r0.noise + ',' + std::to_string(r0.p) + ',' + r0.method + ',';
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
    };
    summary << key << "mse," << detail::fmt(mean(mse)) << '\n';
    summary << key << "mse_median," << (mse.empty() ? "nan" : detail::fmt(median(mse))) << '\n';
    summary << key << "std," << detail::fmt(mean(sd)) << '\n';
    summary << key << "succeeded," << mse.size() << '\n';
    timing << key << "cpu," << detail::fmt(mean(cpu)) << '\n';
  }
  w.write("raw.csv", raw.str());
  w.write("summary.csv", summary.str());
  w.write_volatile("timing.csv", timing.str());

  // Replication-0 coefficients against the truth, one file per (noise, p).
  const std::size_t per_cell = reps * methods.size();
  for (std::size_t start = 0; start < recs.size(); start += per_cell) {
    const BenchRecord& r0 = recs[start];
    const Coefficients truth = make_beta_star(r0.p);
    std::ostringstream os;
    os << "index,truth";
    for (std::size_t m = 0; m < methods.size(); ++m) os << ',' << recs[start + m * reps].method;
    os << '\n';
    for (Eigen::Index j = 0; j < r0.p; ++j) {
      os << (j + 1) << ',' << detail::fmt(truth[j]);
      for (std::size_t m = 0; m < methods.size(); ++m) {
        const BenchRecord& r = recs[start + m * reps];
        os << ',';
        if (r.ok) os << detail::fmt(r.beta[j]);
      }
      os << '\n';
    }
    w.write("coefficients_" + r0.noise + "_p" + std::to_string(r0.p) + ".csv", os.str());
  }
  w.extra()["replication_seed_rule"] = "seed + replication";
  return w.finish(failures);
}

inline int run_diagnose(const RunConfig& cfg)
{
  RunWriter w(cfg);
  const PreparedData d = prepare(load_inputs(cfg), cfg);
  const SolverConfig& sc = cfg.solver;
  Vector beta;
  if (cfg.beta) {
    beta = load_vector_csv(*cfg.beta);
    if (beta.size() != d.train.p()) throw std::invalid_argument("beta length does not match the data");
    w.log("using coefficients from " + cfg.beta->string());
  } else {
    const SolveResult r = solve(d.train, sc);
    beta = r.beta;
    w.log("fitted coefficients: " + std::string(to_string(r.status)) + " after " + std::to_string(r.iterations));
  }
  const double tau = sc.loss == Loss::squared ? std::numeric_limits<double>::infinity() : sc.tau;
  const Matrix S = gram_matrix(d.train);
  const Matrix H = huber_hessian(d.train, beta, tau);
  const Eigen::SelfAdjointEigenSolver<Matrix> eigS(S, Eigen::EigenvaluesOnly), eigH(H, Eigen::EigenvaluesOnly);
  const Vector resid = d.train.y() - d.train.X() * beta;

  detail::MetricTable m;
  m.add("tau", tau);
  m.add("hessian_gram_max_abs_diff", (H - S).cwiseAbs().maxCoeff());
  m.add("hessian_equals_gram", (H - S).cwiseAbs().maxCoeff() == 0.0 ? "1" : "0");
  m.add("fraction_residuals_within_tau", (resid.array().abs() <= tau).cast<double>().mean());
  m.add("gram_min_eigenvalue", eigS.eigenvalues().minCoeff());
  m.add("gram_max_eigenvalue", eigS.eigenvalues().maxCoeff());
  m.add("hessian_min_eigenvalue", eigH.eigenvalues().minCoeff());
  m.add("hessian_max_eigenvalue", eigH.eigenvalues().maxCoeff());
  m.add("gradient_sup_at_beta", huber_gradient(d.train, beta, tau).lpNorm<Eigen::Infinity>());
  if (resid.size() >= 4 && resid.cwiseAbs().maxCoeff() > 0.0) {
    try {
      m.add("residual_kurtosis", kurtosis(resid));
    } catch (const std::invalid_argument&) {
      m.add("residual_kurtosis", "undefined");
    }
  }

  std::vector<Eigen::Index> support;
  if (d.beta_star && !cfg.normalize) {
    const Coefficients& truth = *d.beta_star;
    m.add("bregman_beta_truth", bregman_symmetric(beta, truth, d.train, tau));
    m.add("estimation_error", estimation_error(beta, truth));
    if (sc.lambda1 > 0.0) {
      const ConeReport rep = cone_check(d.train, beta, truth, tau, sc.lambda1, sc.lambda2);
      m.add("cone_on_support_l1", rep.on_support_l1);
      m.add("cone_off_support_l1", rep.off_support_l1);
      m.add("cone_constant", rep.cone_constant);
      m.add("cone_gradient_sup", rep.gradient_sup);
      m.add("cone_gradient_condition", rep.gradient_condition ? "1" : "0");
      m.add("cone_inside", rep.inside_cone ? "1" : "0");
    }
    for (Eigen::Index j = 0; j < truth.size(); ++j)
      if (truth[j] != 0.0) support.push_back(j);
  } else {
    for (Eigen::Index j = 0; j < beta.size(); ++j)
      if (beta[j] != 0.0) support.push_back(j);
  }
  if (d.train.p() <= kMaxRestrictedEigenvalueDim && !support.empty()) {
    const auto est = restricted_eigenvalue_estimate(S, support, static_cast<Eigen::Index>(support.size()), 1.0,
                                                    cfg.re_samples, derive_seed(cfg.seed, 11));
    m.add("re_rho_minus_estimate", est.rho_minus);
    m.add("re_rho_plus_estimate", est.rho_plus);
    m.add("re_subsets", std::to_string(est.subsets));
  } else {
    m.add("re_rho_minus_estimate", "skipped");
    m.add("re_rho_plus_estimate", "skipped");
  }
  w.write("diagnostics.csv", m.text());

  std::ostringstream kurt;
  kurt << "column,name,kurtosis\n";
  for (Eigen::Index j = 0; j < d.train.p(); ++j) {
    kurt << (j + 1) << ',' << d.feature_names[static_cast<std::size_t>(j)] << ',';
    try {
      kurt << detail::fmt(kurtosis(d.train.X().col(j)));
    } catch (const std::invalid_argument&) {
      kurt << "undefined";
    }
    kurt << '\n';
  }
  w.write("kurtosis.csv", kurt.str());

  if (cfg.rate) {
    RateExperimentSpec rs;
    rs.p = cfg.synthetic.p;
    rs.noise = cfg.synthetic.noise;
    rs.n_list = cfg.rate_n;
    rs.replications = cfg.replications;
    rs.seed = cfg.seed;
    rs.rho = cfg.synthetic.rho;
    rs.base = sc;
    rs.workers = cfg.workers;
    if (cfg.tau_multipliers || cfg.lambda1_grid || cfg.lambda2_grid) {
      rs.grid = [&cfg](Eigen::Index n, Eigen::Index p) {
        return make_grid(cfg.tau_multipliers.value_or(std::vector<double>{0.4, 0.95, 1.5}),
                         cfg.lambda1_grid.value_or(log_grid(-4.0, -1.0, 7)),
                         cfg.lambda2_grid.value_or(log_grid(-4.0, -1.0, 7)), n, p);
      };
    }
    w.log("rate experiment over " + std::to_string(rs.n_list.size()) + " sample sizes");
    std::ostringstream os;
    write_rate_table(os, rate_experiment(rs));
    w.write("rate.csv", os.str());
  }
  return w.finish(0);
}

inline int run(const RunConfig& cfg)
{
  cfg.validate();
  switch (cfg.command) {
    case Command::simulate: return run_simulate(cfg);
    case Command::fit: return run_fit(cfg);
    case Command::tune: return run_tune(cfg);
    case Command::bench: return run_bench(cfg);
    case Command::diagnose: return run_diagnose(cfg);
  }
  return 2;
}

}  // namespace fhuber::cli
