#pragma once

#include "confident/envs.hpp"
#include "confident/oracle.hpp"
#include "confident/planner.hpp"
#include "confident/rollout.hpp"
#include "confident/theory.hpp"
#include "confident/virtual_harness.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace confident {

struct PropertyResult {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<PropertyResult> properties;

  bool passed() const {
    for (const auto& p : properties) {
      if (!p.passed) return false;
    }
    return true;
  }

  const PropertyResult* first_failure() const {
    for (const auto& p : properties) {
      if (!p.passed) return &p;
    }
    return nullptr;
  }
};

/// A small planner problem drawn at random over every environment family.
struct Workload {
  EnvSpec env;
  PlannerConfig planner;
};

/// Feature dimension stays at most 16 and lambda at most 1e-2, so even the
/// seed entry of the core set is uncertain for every tau used here.
inline Workload random_workload(std::mt19937_64& gen) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Workload w;
  const std::size_t family = pick(0, 4);
  w.env.seed = gen();
  w.env.gamma = 0.5 + 0.45 * unit(gen);
  switch (family) {
    case 0:
      w.env.family = EnvFamily::kTabularOneHot;
      w.env.states = pick(2, 8);
      w.env.actions = pick(2, std::max<std::size_t>(2, std::min<std::size_t>(4, 16 / w.env.states)));
      break;
    case 1:
      w.env.family = EnvFamily::kChain;
      w.env.states = pick(2, 8);
      w.env.actions = 2;
      break;
    case 2:
    case 3:
      w.env.family = family == 2 ? EnvFamily::kLowRankLinear : EnvFamily::kMisspecified;
      w.env.states = pick(3, 10);
      w.env.actions = pick(2, 3);
      w.env.dim = pick(2, 16);
      w.env.epsilon = family == 3 ? 0.01 + 0.09 * unit(gen) : 0.0;
      break;
    default:
      w.env.family = EnvFamily::kTwoPhaseExplore;
      w.env.states = pick(3, 8);
      w.env.actions = 2;
      break;
  }
  const double taus[] = {0.5, 1.0, 2.0};
  w.planner.gamma = w.env.gamma;
  w.planner.lambda = std::pow(10.0, -3.0 + unit(gen));
  w.planner.tau = taus[pick(0, 2)];
  w.planner.m = pick(1, 4);
  w.planner.n = pick(2, 12);
  w.planner.K = pick(1, 4);
  w.planner.master_seed = gen();
  w.planner.algo = pick(0, 1) == 0 ? Algorithm::kLspi : Algorithm::kPolitex;
  if (w.planner.algo == Algorithm::kPolitex) {
    w.planner.alpha = detail::alpha_for(w.planner.gamma, w.env.actions,
                                        static_cast<double>(w.planner.K));
  }
  return w;
}

namespace detail {

inline std::string ratio(std::size_t ok, std::size_t total) {
  return std::to_string(ok) + "/" + std::to_string(total);
}

inline SuiteResult verify_coreset_runs(std::size_t trials, std::uint64_t seed, bool determinant) {
  std::mt19937_64 gen(seed);
  std::size_t within_cap = 0, uncertain_ok = 0, completed = 0, growth_ok = 0, det_ok = 0;
  std::size_t insertions = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Workload w = random_workload(gen);
    const TabularEnvironment env = make_env(w.env);
    const auto fmap = env.feature_map();
    PlannerOutput out;
    try {
      out = plan(w.planner, env, fmap, StateId{env.mdp().initial_state});
      ++completed;
    } catch (const BoundViolation&) {
      continue;
    }
    if (static_cast<double>(out.coreset.size()) <= out.coreset.size_cap()) ++within_cap;
    bool all_uncertain = true, all_growth = true;
    const double floor = std::log1p(w.planner.tau) - 1e-9;
    for (const auto& ins : out.insertions) {
      ++insertions;
      if (!(ins.uncertainty > w.planner.tau)) all_uncertain = false;
      if (!(ins.log_det_after - ins.log_det_before > floor)) all_growth = false;
    }
    if (all_uncertain) ++uncertain_ok;
    if (all_growth) ++growth_ok;

    Eigen::MatrixXd gram = w.planner.lambda *
                           Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(fmap.dim()),
                                                     static_cast<Eigen::Index>(fmap.dim()));
    for (const auto& e : out.coreset.entries()) gram += e.feature * e.feature.transpose();
    const double direct = gram.ldlt().vectorD().array().log().sum();
    if (std::abs(direct - out.coreset.gram().log_det()) <= 1e-8 * std::max(1.0, std::abs(direct))) {
      ++det_ok;
    }
  }
  SuiteResult r;
  if (!determinant) {
    r.suite = "coreset";
    r.properties.push_back({"no_bound_violation", completed == trials, ratio(completed, trials)});
    r.properties.push_back({"size_within_cap", within_cap == completed, ratio(within_cap, completed)});
    r.properties.push_back({"insertions_uncertain", uncertain_ok == completed,
                            ratio(uncertain_ok, completed) + " runs, " +
                                std::to_string(insertions) + " insertions"});
  } else {
    r.suite = "determinant";
    r.properties.push_back({"log_det_growth", growth_ok == completed,
                            ratio(growth_ok, completed) + " runs, " + std::to_string(insertions) +
                                " insertions"});
    r.properties.push_back({"log_det_matches_direct", det_ok == completed, ratio(det_ok, completed)});
  }
  return r;
}

}  // namespace detail

/// Lockstep main/virtual comparison on a stochastic one-hot environment.
inline HarnessReport coupling_trial(std::uint64_t seed) {
  EnvSpec spec;
  spec.family = EnvFamily::kTabularOneHot;
  spec.states = 4;
  spec.actions = 2;
  spec.gamma = 0.9;
  spec.seed = seed;
  const TabularEnvironment env = make_env(spec);
  PlannerConfig cfg;
  cfg.gamma = 0.9;
  cfg.lambda = 1e-2;
  cfg.tau = 1.0;
  cfg.m = 4;
  cfg.n = 10;
  cfg.K = 3;
  cfg.master_seed = seed;
  return virtual_pi_harness(cfg, env, env.feature_map(), StateId{env.mdp().initial_state});
}

inline SuiteResult verify_coupling(std::size_t trials, std::uint64_t seed) {
  std::size_t weights = 0, growth = 0, trajectories = 0, planner = 0, restarted = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const HarnessReport rep = coupling_trial(seed + t);
    if (rep.final_weights_identical) ++weights;
    if (rep.growth_sequences_equal()) ++growth;
    if (rep.trajectories_equal()) ++trajectories;
    if (rep.matches_planner) ++planner;
    if (rep.loops.size() > 1) ++restarted;
  }
  SuiteResult r{"coupling", {}};
  r.properties.push_back({"final_weights_bit_identical", weights == trials,
                          detail::ratio(weights, trials) + " seeds"});
  r.properties.push_back({"coreset_growth_identical", growth == trials, detail::ratio(growth, trials)});
  r.properties.push_back({"trajectories_identical", trajectories == trials, detail::ratio(trajectories, trials)});
  r.properties.push_back({"harness_matches_planner", planner == trials, detail::ratio(planner, trials)});
  r.properties.push_back({"restart_path_exercised", restarted > 0,
                          detail::ratio(restarted, trials) + " seeds restarted"});
  return r;
}

/// Outcome of the Monte Carlo envelope experiment.
struct HoeffdingStats {
  std::size_t batches = 0;
  std::size_t m = 0;
  std::size_t n = 0;
  double gamma = 0.0;
  /// |mean over batches - Q_n| and its envelope 4/(1-gamma) sqrt(log B / (2 B m)).
  double mean_deviation = 0.0;
  double mean_envelope = 0.0;
  /// Per-batch Hoeffding bound with a union bound over batches at level delta.
  double batch_envelope = 0.0;
  double max_batch_deviation = 0.0;
  std::size_t outside = 0;
  double truncation_error = 0.0;
  double truncation_bound = 0.0;
};

/// Batches of m confident rollouts from one fixed pair under the uniform
/// policy, with a core set covering every pair, compared against the
/// oracle's n-step truncated Q.
inline HoeffdingStats hoeffding_experiment(std::size_t batches, std::uint64_t seed,
                                           double delta = 1e-3) {
  if (batches < 2) throw ConfigError("hoeffding: need at least 2 batches");
  EnvSpec spec;
  spec.family = EnvFamily::kTabularOneHot;
  spec.states = 5;
  spec.actions = 2;
  spec.gamma = 0.9;
  spec.seed = seed;
  const TabularEnvironment env = make_env(spec);
  const auto fmap = env.feature_map();
  const TabularMdp& mdp = env.mdp();
  const std::size_t S = mdp.state_count, A = mdp.action_count;

  HoeffdingStats st;
  st.batches = batches;
  st.m = 20;
  st.n = 20;
  st.gamma = spec.gamma;
  const double range = 1.0 / (1.0 - st.gamma);
  const double B = static_cast<double>(batches);
  const double m = static_cast<double>(st.m);
  st.mean_envelope = 4.0 * range * std::sqrt(std::log(B) / (2.0 * B * m));
  st.batch_envelope = range * std::sqrt(std::log(2.0 * B / delta) / (2.0 * m));

  CoreSet core(fmap.dim(), 1e-2, 1.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      core.add(CoreSetEntry{StateId{s}, ActionId{a}, fmap(StateId{s}, ActionId{a}), std::nullopt});
    }
  }
  const PolicyTable pi = uniform_policy(mdp);
  const QTable qn = truncated_policy_q(mdp, pi, st.n);
  const QTable q = exact_policy_q(mdp, pi);
  st.truncation_error = (qn - q).cwiseAbs().maxCoeff();
  st.truncation_bound = std::pow(st.gamma, static_cast<double>(st.n + 1)) / (1.0 - st.gamma);

  const StateId s0{mdp.initial_state};
  const ActionId a0{0};
  const double target = qn(static_cast<Eigen::Index>(s0.value), 0);
  SimulatorHandle<TabularEnvironment> sim(env, s0);
  const PolicySnapshot policy = UniformPolicy{};
  const RolloutSpec rs{st.m, st.n, st.gamma, s0, a0};
  double sum = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    const auto res = confident_rollout(rs, policy, core, sim, fmap, RolloutKey{seed, 0, b, 0});
    const double est = std::get<RolloutDone>(res).estimate;
    const double dev = std::abs(est - target);
    st.max_batch_deviation = std::max(st.max_batch_deviation, dev);
    if (dev > st.batch_envelope) ++st.outside;
    sum += est;
  }
  st.mean_deviation = std::abs(sum / B - target);
  return st;
}

inline SuiteResult verify_hoeffding(std::size_t batches, std::uint64_t seed) {
  const HoeffdingStats st = hoeffding_experiment(batches, seed);
  SuiteResult r{"hoeffding", {}};
  std::ostringstream mean;
  mean << "|mean - Q_n| = " << st.mean_deviation << " vs " << st.mean_envelope;
  r.properties.push_back({"mean_envelope", st.mean_deviation <= st.mean_envelope, mean.str()});
  std::ostringstream env;
  env << "max |est - Q_n| = " << st.max_batch_deviation << " vs " << st.batch_envelope << ", "
      << st.outside << " of " << st.batches << " batches outside";
  r.properties.push_back({"batch_envelope", st.outside == 0, env.str()});
  std::ostringstream trunc;
  trunc << "|Q_n - Q| = " << st.truncation_error << " vs " << st.truncation_bound;
  r.properties.push_back({"truncation_bound", st.truncation_error <= st.truncation_bound, trunc.str()});
  return r;
}

/// Largest |gamma * E_rho[V(s)] - V(s_init)| over random policies on a
/// random augmented environment.
struct RandomInitialStats {
  double max_identity_error = 0.0;
  double max_feature_norm = 0.0;
  double max_realizability_residual = 0.0;
};

inline RandomInitialStats random_initial_experiment(std::size_t policies, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  EnvSpec spec;
  spec.family = EnvFamily::kTabularOneHot;
  spec.states = 6;
  spec.actions = 3;
  spec.gamma = 0.85;
  spec.seed = seed;
  const TabularEnvironment base = make_env(spec);
  std::vector<double> rho(spec.states);
  std::exponential_distribution<double> expo(1.0);
  double total = 0.0;
  for (double& p : rho) total += (p = expo(gen));
  for (double& p : rho) p /= total;
  rho.back() = 1.0 - std::accumulate(rho.begin(), rho.end() - 1, 0.0);
  const AugmentedEnv aug = augment_random_initial(base, rho);

  RandomInitialStats st;
  const Eigen::MatrixXd& phi = aug.env.feature_table();
  for (Eigen::Index r = 0; r < phi.rows(); ++r) st.max_feature_norm = std::max(st.max_feature_norm, phi.row(r).norm());
  for (std::size_t k = 0; k < policies; ++k) {
    const PolicyTable pi = random_policy_table(aug.env.mdp(), gen, k % 2 == 0);
    const Eigen::VectorXd v = policy_values(aug.env.mdp(), pi);
    double expected = 0.0;
    for (std::size_t s = 0; s < spec.states; ++s) expected += rho[s] * v[static_cast<Eigen::Index>(s)];
    const double err = std::abs(spec.gamma * expected - v[static_cast<Eigen::Index>(aug.s_init.value)]);
    st.max_identity_error = std::max(st.max_identity_error, err);
    const LinearFit fit = fit_q(aug.env, exact_policy_q(aug.env.mdp(), pi));
    st.max_realizability_residual = std::max(st.max_realizability_residual, fit.sup_residual);
  }
  return st;
}

inline SuiteResult verify_random_initial(std::size_t policies, std::uint64_t seed) {
  const RandomInitialStats st = random_initial_experiment(policies, seed);
  SuiteResult r{"random-initial", {}};
  r.properties.push_back({"start_state_identity", st.max_identity_error <= 1e-10,
                          "max error " + format_double(st.max_identity_error)});
  r.properties.push_back({"feature_norms", st.max_feature_norm <= 1.0 + kFeatureNormSlack,
                          "max norm " + format_double(st.max_feature_norm)});
  r.properties.push_back({"realizable_after_augmentation", st.max_realizability_residual <= 1e-9,
                          "max residual " + format_double(st.max_realizability_residual)});
  return r;
}

inline std::vector<std::string> verify_suite_names() {
  return {"coreset", "determinant", "coupling", "hoeffding", "random-initial"};
}

/// Default trial counts per suite.
inline std::size_t default_trials(const std::string& suite) {
  if (suite == "coupling" || suite == "random-initial") return 20;
  if (suite == "hoeffding") return 10000;
  return 100;
}

/// Throws ConfigError on an unknown suite name.
inline SuiteResult run_verify_suite(const std::string& suite, std::size_t trials, std::uint64_t seed) {
  if (suite == "coreset") return detail::verify_coreset_runs(trials, seed, false);
  if (suite == "determinant") return detail::verify_coreset_runs(trials, seed, true);
  if (suite == "coupling") return verify_coupling(trials, seed);
  if (suite == "hoeffding") return verify_hoeffding(trials, seed);
  if (suite == "random-initial") return verify_random_initial(trials, seed);
  throw ConfigError("unknown verify suite '" + suite + "'");
}

}  // namespace confident
