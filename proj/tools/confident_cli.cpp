#include "confident/run.hpp"
#include "confident/theory.hpp"
#include "confident/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace confident;

constexpr int kOk = 0;
constexpr int kInvariantFailure = 1;
constexpr int kUsageError = 2;

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> parallelism, std::optional<std::string> out_dir) {
  RunConfig cfg = load_run_config(config_path);
  if (seed) cfg.planner.master_seed = *seed;
  if (parallelism) cfg.planner.parallelism = *parallelism;
  if (out_dir) cfg.out_dir = *out_dir;

  RunOutcome run = execute_run(cfg);
  RunReport& report = run.report;
  const nlohmann::json encoded(report);
  if (!(encoded.get<RunReport>() == report)) {
    report.violations.push_back("summary JSON does not round-trip");
  }
  write_run_outputs(report, run.output, cfg.out_dir);

  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  nlohmann::json brief{{"gap", encoded["gap"]},
                       {"loops", report.loops},
                       {"coreset_size", report.coreset_size},
                       {"queries", report.queries},
                       {"out", cfg.out_dir}};
  std::cout << brief.dump() << '\n';
  if (!report.violations.empty()) {
    for (const auto& v : report.violations) std::cerr << "invariant violated: " << v << '\n';
    return kInvariantFailure;
  }
  return kOk;
}

void print_params(const TheoryParams& p, const std::string& theorem) {
  std::cout << "# parameters for " << theorem << '\n'
            << "algo = " << to_string(p.algo) << '\n'
            << "tau = " << format_double(p.tau) << '\n'
            << "lambda = " << format_double(p.lambda) << '\n';
  if (p.alpha) std::cout << "alpha = " << format_double(*p.alpha) << '\n';
  std::cout << "n = " << p.n << '\n' << "K = " << p.K << '\n' << "m = " << p.m << '\n';
  std::cout << "# unrounded: n = " << format_double(p.raw_n) << ", K = " << format_double(p.raw_K)
            << ", m = " << format_double(p.raw_m) << '\n';
  if (p.predicted_bound) std::cout << "# predicted gap bound = " << format_double(*p.predicted_bound) << '\n';
}

struct ParamsArgs {
  std::string theorem;
  double kappa = 0.1;
  double gamma = 0.9;
  double b = 1.0;
  std::size_t d = 1;
  double delta = 0.05;
  std::size_t actions = 2;
  double epsilon = 0.0;
};

int cmd_params(const ParamsArgs& a) {
  TheoryParams p;
  if (a.theorem == "lspi") {
    p = lspi_params_from_theorem(a.kappa, a.gamma, a.b, a.delta, a.d);
  } else if (a.theorem == "politex") {
    p = politex_params_from_theorem(a.kappa, a.gamma, a.b, a.delta, a.d, a.actions);
  } else if (a.theorem == "lspi-eps") {
    p = misspecified_params_from_theorem(a.epsilon, a.gamma, a.b, a.delta, a.d, Algorithm::kLspi, a.actions);
  } else if (a.theorem == "politex-eps") {
    p = misspecified_params_from_theorem(a.epsilon, a.gamma, a.b, a.delta, a.d, Algorithm::kPolitex,
                                         a.actions);
  } else {
    throw ConfigError("unknown theorem '" + a.theorem + "' (lspi, politex, lspi-eps, politex-eps)");
  }
  print_params(p, a.theorem);
  return kOk;
}

int cmd_verify(const std::string& suite, std::optional<std::size_t> trials, std::uint64_t seed) {
  const SuiteResult r = run_verify_suite(suite, trials.value_or(default_trials(suite)), seed);
  for (const auto& p : r.properties) {
    std::cout << nlohmann::json{{"suite", r.suite}, {"property", p.name}, {"passed", p.passed},
                                {"detail", p.detail}}
                     .dump()
              << '\n';
  }
  if (const PropertyResult* f = r.first_failure()) {
    std::cerr << "FAILED " << r.suite << "/" << f->name << ": " << f->detail << '\n';
    return kInvariantFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confident Monte Carlo planners with local simulator access"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> parallelism_override;
  std::optional<std::string> out_override;
  auto* run = app.add_subcommand("run", "plan, evaluate and write records.csv / summary.json");
  run->add_option("--config", config_path, "key = value config file")->required();
  run->add_option("--seed", seed_override, "override the master seed");
  run->add_option("--parallelism", parallelism_override, "rollout worker threads");
  run->add_option("--out", out_override, "output directory");

  ParamsArgs pa;
  auto* params = app.add_subcommand("params", "print theorem-prescribed parameters");
  params->add_option("theorem", pa.theorem, "lspi | politex | lspi-eps | politex-eps")->required();
  params->add_option("--kappa", pa.kappa, "target sub-optimality");
  params->add_option("--gamma", pa.gamma, "discount")->required();
  params->add_option("--b", pa.b, "weight norm bound")->required();
  params->add_option("--d", pa.d, "feature dimension")->required();
  params->add_option("--delta", pa.delta, "failure probability");
  params->add_option("--actions", pa.actions, "number of actions");
  params->add_option("--epsilon", pa.epsilon, "misspecification level");

  std::string suite;
  std::optional<std::size_t> trials;
  std::uint64_t verify_seed = 0;
  auto* verify = app.add_subcommand("verify", "run a property suite");
  verify->add_option("suite", suite, "coreset | determinant | coupling | hoeffding | random-initial")
      ->required();
  verify->add_option("--trials", trials, "number of trials");
  verify->add_option("--seed", verify_seed, "suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*run) return cmd_run(config_path, seed_override, parallelism_override, out_override);
    if (*params) return cmd_params(pa);
    if (*verify) return cmd_verify(suite, trials, verify_seed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "invariant failure: " << e.what() << '\n';
    return kInvariantFailure;
  }
  return kUsageError;
}
