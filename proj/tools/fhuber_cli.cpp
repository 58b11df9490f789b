#include "fhuber/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

using fhuber::cli::RunConfig;

namespace {

/// Flags stay empty unless given, so they override the config file only when present.
struct Flags {
  std::optional<std::string> config, out, data, validation, beta_star, beta, response, loss, order, noise;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> tau;
  std::optional<double> lambda1, lambda2, sigma, pi, tol, rho;
  std::optional<int> max_iter, replications, workers;
  std::optional<Eigen::Index> n, n_test, p;
  bool normalize = false, rate = false, no_compare = false;
};

void add_flags(CLI::App& app, Flags& f)
{
  app.add_option("--config", f.config, "JSON config file; flags override its keys")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "Base RNG seed");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--data", f.data, "Training CSV (synthetic data when omitted)")->check(CLI::ExistingFile);
  app.add_option("--validation", f.validation, "Held-out CSV with the same columns")->check(CLI::ExistingFile);
  app.add_option("--beta-star", f.beta_star, "Known coefficients (index,value CSV)")->check(CLI::ExistingFile);
  app.add_option("--beta", f.beta, "diagnose: fitted coefficients (index,value CSV)")->check(CLI::ExistingFile);
  app.add_option("--response", f.response, "Response column name (default y)");
  app.add_option("--tau", f.tau, "Huber threshold (number or inf)");
  app.add_option("--lambda1", f.lambda1, "l1 penalty");
  app.add_option("--lambda2", f.lambda2, "fusion penalty");
  app.add_option("--sigma", f.sigma, "ADMM penalty parameter (default 0.1)");
  app.add_option("--pi", f.pi, "Dual step length in (0, 1.618) (default 1)");
  app.add_option("--tol", f.tol, "KKT residual tolerance (default 1e-3)");
  app.add_option("--max-iter", f.max_iter, "Iteration cap (default 2000)");
  app.add_option("--loss", f.loss, "huber or squared")->check(CLI::IsMember({"huber", "squared"}));
  app.add_flag("--normalize", f.normalize, "Scale columns by their largest absolute entry");
  app.add_option("--order", f.order, "Column order: none or hierarchical")
      ->check(CLI::IsMember({"none", "hierarchical"}));
  app.add_option("--replications", f.replications, "Replications for bench and rate experiments (default 20)");
  app.add_option("--workers", f.workers, "Worker threads (default 1)");
  app.add_option("--n", f.n, "Synthetic training size (default 100)");
  app.add_option("--n-test", f.n_test, "Synthetic test size (default 100)");
  app.add_option("--p", f.p, "Synthetic dimension (default 50)");
  app.add_option("--rho", f.rho, "Synthetic design correlation (default 0.5)");
  app.add_option("--noise", f.noise, "gaussian, t or lognormal");
  app.add_flag("--rate", f.rate, "diagnose: also run the error-vs-n experiment");
  app.add_flag("--no-compare", f.no_compare, "bench: skip the least-squares fit");
}

RunConfig resolve(const std::string& command, const Flags& f)
{
  RunConfig cfg;
  if (f.config) cfg = fhuber::cli::load_config(*f.config);
  cfg.command = fhuber::cli::parse_command(command);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.data) cfg.data = *f.data;
  if (f.validation) cfg.validation = *f.validation;
  if (f.beta_star) cfg.beta_star = *f.beta_star;
  if (f.beta) cfg.beta = *f.beta;
  if (f.response) cfg.response = *f.response;
  if (f.tau) cfg.solver.tau = fhuber::cli::parse_tau(*f.tau);
  if (f.lambda1) cfg.solver.lambda1 = *f.lambda1;
  if (f.lambda2) cfg.solver.lambda2 = *f.lambda2;
  if (f.sigma) cfg.solver.sigma = *f.sigma;
  if (f.pi) cfg.solver.pi = *f.pi;
  if (f.tol) cfg.solver.tol = *f.tol;
  if (f.max_iter) cfg.solver.max_iter = *f.max_iter;
  if (f.loss) cfg.solver.loss = fhuber::parse_loss(*f.loss);
  if (f.normalize) cfg.normalize = true;
  if (f.order) cfg.order = fhuber::cli::parse_order(*f.order);
  if (f.replications) cfg.replications = *f.replications;
  if (f.workers) cfg.workers = *f.workers;
  if (f.n) cfg.synthetic.n = *f.n;
  if (f.n_test) cfg.synthetic.n_test = *f.n_test;
  if (f.p) cfg.synthetic.p = *f.p;
  if (f.rho) cfg.synthetic.rho = *f.rho;
  if (f.noise) cfg.synthetic.noise = fhuber::parse_noise(*f.noise);
  if (f.rate) cfg.rate = true;
  if (f.no_compare) cfg.compare = false;
  return cfg;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Fused Huber regression via ADMM"};
  app.set_version_flag("--version", fhuber::cli::kVersion);
  app.require_subcommand(1);
  Flags flags;
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "Generate a synthetic train/test pair and the true coefficients"},
      {"fit", "Fit the fused Huber (or least-squares) model at fixed parameters"},
      {"tune", "Grid search over tau, lambda1, lambda2 by validation MAE"},
      {"bench", "Replicated simulate-tune-fit comparison across noise laws and dimensions"},
      {"diagnose", "Hessian, Gram, cone and restricted-eigenvalue diagnostics"},
  };
  for (const auto& [name, help] : commands) add_flags(*app.add_subcommand(name, help), flags);
  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = resolve(app.get_subcommands().front()->get_name(), flags);
    const int code = fhuber::cli::run(cfg);
    if (code != 0) std::cerr << "fhuber: some cells failed; see " << (cfg.out / "manifest.json").string() << '\n';
    return code;
  } catch (const std::exception& e) {
    std::cerr << "fhuber: error: " << e.what() << '\n';
    return 2;
  }
}
