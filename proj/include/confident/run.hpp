#pragma once

#include "confident/envs.hpp"
#include "confident/oracle.hpp"
#include "confident/planner.hpp"
#include "confident/theory.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace confident {

/// Everything one experiment needs: environment, planner settings, outputs.
struct RunConfig {
  EnvSpec env;
  /// When set, the environment is imported from this tabular text file and
  /// the size/family keys are ignored.
  std::optional<std::string> path;
  /// Uniform random initial state via the auxiliary-start-state reduction.
  bool random_initial = false;
  PlannerConfig planner;
  bool alpha_given = false;
  bool gamma_given = false;
  bool oracle_gap = true;
  std::size_t eval_rollouts = 0;
  std::string out_dir = ".";
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) throw ConfigError(where + "'" + text + "' is not a valid number");
  return value;
}

inline bool parse_bool(const std::string& text, const std::string& where) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(where + "'" + text + "' is not a boolean");
}

}  // namespace detail

/// Parses flat `key = value` text; `#` starts a comment. Errors name the
/// source and line.
inline RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>") {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string at = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(at + "expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(at + "missing key");
    if (!seen.insert(key).second) throw ConfigError(at + "duplicate key '" + key + "'");
    const std::string where = at + key + ": ";
    auto size = [&] { return detail::parse_number<std::size_t>(value, where); };
    auto real = [&] { return detail::parse_number<double>(value, where); };

    if (key == "family") {
      if (value == "file") {
        cfg.path = cfg.path.value_or("");
      } else {
        try {
          cfg.env.family = env_family_from_string(value);
        } catch (const ConfigError& e) {
          throw ConfigError(where + e.what());
        }
      }
    } else if (key == "path") {
      cfg.path = value;
    } else if (key == "states") {
      cfg.env.states = size();
    } else if (key == "actions") {
      cfg.env.actions = size();
    } else if (key == "dim") {
      cfg.env.dim = size();
    } else if (key == "epsilon") {
      cfg.env.epsilon = real();
    } else if (key == "env_seed") {
      cfg.env.seed = detail::parse_number<std::uint64_t>(value, where);
    } else if (key == "branching") {
      cfg.env.branching = size();
    } else if (key == "random_initial") {
      if (value == "none") {
        cfg.random_initial = false;
      } else if (value == "uniform") {
        cfg.random_initial = true;
      } else {
        throw ConfigError(where + "expected none or uniform");
      }
    } else if (key == "algo") {
      if (value == "lspi") {
        cfg.planner.algo = Algorithm::kLspi;
      } else if (value == "politex") {
        cfg.planner.algo = Algorithm::kPolitex;
      } else {
        throw ConfigError(where + "expected lspi or politex");
      }
    } else if (key == "gamma") {
      cfg.planner.gamma = real();
      cfg.env.gamma = cfg.planner.gamma;
      cfg.gamma_given = true;
    } else if (key == "lambda") {
      cfg.planner.lambda = real();
    } else if (key == "tau") {
      cfg.planner.tau = real();
    } else if (key == "alpha") {
      cfg.planner.alpha = real();
      cfg.alpha_given = true;
    } else if (key == "m") {
      cfg.planner.m = size();
    } else if (key == "n") {
      cfg.planner.n = size();
    } else if (key == "K") {
      cfg.planner.K = size();
    } else if (key == "seed") {
      cfg.planner.master_seed = detail::parse_number<std::uint64_t>(value, where);
    } else if (key == "parallelism") {
      cfg.planner.parallelism = size();
    } else if (key == "oracle_gap") {
      cfg.oracle_gap = detail::parse_bool(value, where);
    } else if (key == "eval_rollouts") {
      cfg.eval_rollouts = size();
    } else if (key == "out") {
      cfg.out_dir = value;
    } else {
      throw ConfigError(at + "unknown key '" + key + "'");
    }
  }
  if (cfg.path && cfg.path->empty()) throw ConfigError(source + ": family = file needs a path");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path);
}

/// Canonical key/value echo of the settings that determine a run's result.
/// Execution-only settings (parallelism, output directory) are left out so
/// that reports compare equal across them.
inline std::map<std::string, std::string> config_echo(const RunConfig& c) {
  std::map<std::string, std::string> e;
  if (c.path) {
    e["family"] = "file";
    e["path"] = *c.path;
  } else {
    e["family"] = to_string(c.env.family);
    e["states"] = std::to_string(c.env.states);
    e["actions"] = std::to_string(c.env.actions);
    e["dim"] = std::to_string(c.env.dim);
    e["epsilon"] = format_double(c.env.epsilon);
    e["env_seed"] = std::to_string(c.env.seed);
    e["branching"] = std::to_string(c.env.branching);
  }
  e["random_initial"] = c.random_initial ? "uniform" : "none";
  e["algo"] = to_string(c.planner.algo);
  e["gamma"] = format_double(c.planner.gamma);
  e["lambda"] = format_double(c.planner.lambda);
  e["tau"] = format_double(c.planner.tau);
  if (c.planner.algo == Algorithm::kPolitex) e["alpha"] = format_double(c.planner.alpha);
  e["m"] = std::to_string(c.planner.m);
  e["n"] = std::to_string(c.planner.n);
  e["K"] = std::to_string(c.planner.K);
  e["seed"] = std::to_string(c.planner.master_seed);
  e["oracle_gap"] = c.oracle_gap ? "true" : "false";
  e["eval_rollouts"] = std::to_string(c.eval_rollouts);
  return e;
}

/// The environment a run plans in, plus how to read values back in terms of
/// the original start distribution.
struct PreparedEnv {
  TabularEnvironment env;
  StateId start;
  /// Multiplies values at `start` into base-environment values (1/gamma for
  /// the auxiliary start state, 1 otherwise).
  double value_scale = 1.0;
};

/// Builds the environment and fills in derived planner settings (gamma from
/// an imported file, the default Politex step size).
inline PreparedEnv prepare_env(RunConfig& cfg) {
  std::optional<TabularEnvironment> base;
  if (cfg.path) {
    std::ifstream in(*cfg.path);
    if (!in) throw ConfigError("cannot read environment file '" + *cfg.path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    base.emplace(import_tabular(buf.str()));
    const double file_gamma = base->mdp().gamma;
    if (cfg.gamma_given && cfg.planner.gamma != file_gamma) {
      throw ConfigError("gamma in the config disagrees with the environment file");
    }
    cfg.planner.gamma = file_gamma;
    cfg.env.gamma = file_gamma;
  } else {
    cfg.env.gamma = cfg.planner.gamma;
    base.emplace(make_env(cfg.env));
  }
  if (cfg.planner.algo == Algorithm::kPolitex && !cfg.alpha_given) {
    if (base->action_count() < 2) throw ConfigError("politex needs at least two actions");
    cfg.planner.alpha = detail::alpha_for(cfg.planner.gamma, base->action_count(),
                                          static_cast<double>(cfg.planner.K));
  }
  if (!cfg.random_initial) {
    const StateId start{base->mdp().initial_state};
    return PreparedEnv{std::move(*base), start, 1.0};
  }
  const std::size_t S = base->state_count();
  std::vector<double> rho(S, 1.0 / static_cast<double>(S));
  AugmentedEnv aug = augment_random_initial(*base, rho);
  return PreparedEnv{std::move(aug.env), aug.s_init, 1.0 / cfg.planner.gamma};
}

struct ExactEvaluation {
  double optimal = 0.0;
  double output = 0.0;
  double gap = 0.0;
};

/// Oracle value of the planner's output at the start state: the greedy
/// output policy for LSPI, the uniform mixture over pi_0..pi_{K-1} for
/// Politex.
inline ExactEvaluation evaluate_exact(const PlannerOutput& out, const TabularEnvironment& env,
                                      StateId start, double value_scale = 1.0) {
  const TabularMdp& mdp = env.mdp();
  const auto s = static_cast<Eigen::Index>(start.value);
  ExactEvaluation ev;
  ev.optimal = optimal_values(mdp).values[s] * value_scale;
  if (out.algo == Algorithm::kLspi) {
    ev.output = policy_values(mdp, policy_table(out.output_policy, env))[s] * value_scale;
  } else {
    double total = 0.0;
    for (const auto& p : out.policies) total += policy_values(mdp, policy_table(p, env))[s];
    ev.output = total / static_cast<double>(out.policies.size()) * value_scale;
  }
  ev.gap = ev.optimal - ev.output;
  return ev;
}

/// Monte Carlo value of the output policy over `rollouts` trajectories of
/// n + 1 steps, on the evaluation lane. The Politex mixture draws one
/// iterate per trajectory.
inline double evaluate_rollouts(const PlannerOutput& out, const TabularEnvironment& env,
                                StateId start, const PlannerConfig& cfg, std::size_t rollouts) {
  SimulatorHandle<TabularEnvironment> sim(env, start);
  const auto fmap = env.feature_map();
  const std::size_t A = env.action_count();
  double total = 0.0;
  for (std::size_t r = 0; r < rollouts; ++r) {
    RngStream rng(StreamKey{cfg.master_seed, ~std::uint64_t{0}, 0, 0, r,
                            static_cast<std::uint64_t>(Lane::kEvaluation)});
    const PolicySnapshot* policy = &out.output_policy;
    if (out.algo == Algorithm::kPolitex) {
      const auto k = std::min(out.policies.size() - 1,
                              static_cast<std::size_t>(rng.next_uniform() *
                                                       static_cast<double>(out.policies.size())));
      policy = &out.policies[k];
    }
    StateId s = start;
    double discount = 1.0;
    double ret = 0.0;
    for (std::size_t t = 0; t <= cfg.n; ++t) {
      const ActionId a = sample_action(*policy, s, fmap, A, rng);
      const Transition tr = sim.query(s, a, rng);
      ret += discount * tr.reward;
      discount *= cfg.gamma;
      s = tr.next_state;
    }
    total += ret;
  }
  return total / static_cast<double>(rollouts);
}

struct RunReport {
  std::string family;
  std::string algo;
  std::uint64_t seed = 0;
  std::optional<double> gap;
  std::optional<double> optimal_value;
  std::optional<double> output_value;
  std::optional<double> rollout_value;
  std::size_t loops = 0;
  std::size_t coreset_size = 0;
  double coreset_cap = 0.0;
  std::uint64_t queries = 0;
  std::vector<IterationRecord> records;
  std::vector<CoreSetEntry> coreset;
  std::vector<double> final_weights;
  std::vector<std::string> warnings;
  /// Invariant checks that failed; a non-empty list means exit code 1.
  std::vector<std::string> violations;
  std::map<std::string, std::string> config;
  double wall_time_seconds = 0.0;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

/// Equality ignoring wall time.
inline bool same_result(RunReport a, RunReport b) {
  a.wall_time_seconds = 0.0;
  b.wall_time_seconds = 0.0;
  return a == b;
}

inline void to_json(nlohmann::json& j, const IterationRecord& r) {
  j = nlohmann::json{{"loop", r.loop},           {"iteration", r.iteration},
                     {"coreset_size", r.coreset_size}, {"restart", r.restart},
                     {"queries", r.queries},     {"weight_norm", r.weight_norm}};
}

inline void from_json(const nlohmann::json& j, IterationRecord& r) {
  j.at("loop").get_to(r.loop);
  j.at("iteration").get_to(r.iteration);
  j.at("coreset_size").get_to(r.coreset_size);
  j.at("restart").get_to(r.restart);
  j.at("queries").get_to(r.queries);
  j.at("weight_norm").get_to(r.weight_norm);
}

inline void to_json(nlohmann::json& j, const CoreSetEntry& e) {
  j = nlohmann::json{{"state", e.state.value},
                     {"action", e.action.index},
                     {"feature", std::vector<double>(e.feature.data(), e.feature.data() + e.feature.size())},
                     {"q", e.q_estimate ? nlohmann::json(*e.q_estimate) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, CoreSetEntry& e) {
  e.state = StateId{j.at("state").get<std::uint64_t>()};
  e.action = ActionId{j.at("action").get<std::size_t>()};
  const auto f = j.at("feature").get<std::vector<double>>();
  e.feature = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  if (j.at("q").is_null()) {
    e.q_estimate.reset();
  } else {
    e.q_estimate = j.at("q").get<double>();
  }
}

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& x) {
  return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
}

inline std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const RunReport& r) {
  j = nlohmann::json{{"family", r.family},
                     {"algo", r.algo},
                     {"seed", r.seed},
                     {"gap", detail::optional_json(r.gap)},
                     {"optimal_value", detail::optional_json(r.optimal_value)},
                     {"output_value", detail::optional_json(r.output_value)},
                     {"rollout_value", detail::optional_json(r.rollout_value)},
                     {"loops", r.loops},
                     {"coreset_size", r.coreset_size},
                     {"coreset_cap", r.coreset_cap},
                     {"queries", r.queries},
                     {"records", r.records},
                     {"coreset", r.coreset},
                     {"final_weights", r.final_weights},
                     {"warnings", r.warnings},
                     {"violations", r.violations},
                     {"config", r.config},
                     {"wall_time_seconds", r.wall_time_seconds}};
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
  j.at("family").get_to(r.family);
  j.at("algo").get_to(r.algo);
  j.at("seed").get_to(r.seed);
  r.gap = detail::optional_from(j, "gap");
  r.optimal_value = detail::optional_from(j, "optimal_value");
  r.output_value = detail::optional_from(j, "output_value");
  r.rollout_value = detail::optional_from(j, "rollout_value");
  j.at("loops").get_to(r.loops);
  j.at("coreset_size").get_to(r.coreset_size);
  j.at("coreset_cap").get_to(r.coreset_cap);
  j.at("queries").get_to(r.queries);
  j.at("records").get_to(r.records);
  j.at("coreset").get_to(r.coreset);
  j.at("final_weights").get_to(r.final_weights);
  j.at("warnings").get_to(r.warnings);
  j.at("violations").get_to(r.violations);
  j.at("config").get_to(r.config);
  j.at("wall_time_seconds").get_to(r.wall_time_seconds);
}

inline const char* kRecordsCsvHeader = "loop,iteration,coreset_size,restart,queries,weight_norm";

inline std::string records_to_csv(const std::vector<IterationRecord>& records) {
  std::ostringstream out;
  out << kRecordsCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.loop << ',' << r.iteration << ',' << r.coreset_size << ',' << (r.restart ? 1 : 0)
        << ',' << r.queries << ',' << format_double(r.weight_norm) << '\n';
  }
  return out.str();
}

struct RunOutcome {
  RunReport report;
  PlannerOutput output;
};

/// Plans, evaluates and checks invariants. `cfg` is completed in place
/// (gamma from file, default alpha).
inline RunOutcome execute_run(RunConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  PreparedEnv prepared = prepare_env(cfg);
  const auto fmap = prepared.env.feature_map();

  RunOutcome result;
  result.output = plan(cfg.planner, prepared.env, fmap, prepared.start);
  const PlannerOutput& out = result.output;
  RunReport& rep = result.report;
  rep.family = cfg.path ? "file" : to_string(cfg.env.family);
  rep.algo = to_string(cfg.planner.algo);
  rep.seed = cfg.planner.master_seed;
  rep.loops = out.loops;
  rep.coreset_size = out.coreset.size();
  rep.coreset_cap = out.coreset.size_cap();
  rep.queries = out.query_count;
  rep.records = out.records;
  rep.coreset = out.coreset.entries();
  rep.final_weights.assign(out.final_weights.data(), out.final_weights.data() + out.final_weights.size());
  rep.warnings = out.warnings;
  rep.config = config_echo(cfg);

  if (cfg.oracle_gap) {
    const ExactEvaluation ev = evaluate_exact(out, prepared.env, prepared.start, prepared.value_scale);
    rep.gap = ev.gap;
    rep.optimal_value = ev.optimal;
    rep.output_value = ev.output;
    if (ev.gap < -1e-9) rep.violations.push_back("gap below zero: output beats the optimum");
  }
  if (cfg.eval_rollouts > 0) {
    rep.rollout_value = evaluate_rollouts(out, prepared.env, prepared.start, cfg.planner,
                                          cfg.eval_rollouts) *
                        prepared.value_scale;
  }
  if (static_cast<double>(rep.coreset_size) > rep.coreset_cap) {
    rep.violations.push_back("core set larger than its cap");
  }
  // The very first entry is admitted unconditionally.
  for (std::size_t i = 1; i < out.insertions.size(); ++i) {
    if (!(out.insertions[i].uncertainty > cfg.planner.tau)) {
      rep.violations.push_back("insertion " + std::to_string(i) + " was not uncertain");
      break;
    }
  }
  rep.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

/// Writes records.csv, summary.json and coreset.tsv under `dir`.
inline void write_run_outputs(const RunReport& report, const PlannerOutput& output,
                              const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  {
    std::ofstream csv(base / "records.csv");
    csv << records_to_csv(report.records);
  }
  {
    std::ofstream js(base / "summary.json");
    js << nlohmann::json(report).dump(2) << '\n';
  }
  {
    std::ofstream cs(base / "coreset.tsv");
    cs << coreset_to_text(output.coreset);
  }
}

}  // namespace confident
