#pragma once

#include "confident/coreset.hpp"
#include "confident/errors.hpp"
#include "confident/numerics.hpp"
#include "confident/policy.hpp"
#include "confident/rollout.hpp"
#include "confident/simulator.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace confident {

enum class Algorithm { kLspi, kPolitex };

inline std::string to_string(Algorithm a) { return a == Algorithm::kLspi ? "lspi" : "politex"; }

struct PlannerConfig {
  Algorithm algo = Algorithm::kLspi;
  double gamma = 0.9;
  double lambda = 1e-3;
  double tau = 1.0;
  double alpha = 0.0;  // Politex step size
  std::size_t m = 1;
  std::size_t n = 0;
  std::size_t K = 1;
  std::uint64_t master_seed = 0;
  std::size_t parallelism = 1;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("planner: gamma must be in (0,1)");
    if (!(lambda > 0.0)) throw ConfigError("planner: lambda must be positive");
    if (!(tau > 0.0)) throw ConfigError("planner: tau must be positive");
    if (m < 1) throw ConfigError("planner: m must be at least 1");
    if (K < 1) throw ConfigError("planner: K must be at least 1");
    if (algo == Algorithm::kPolitex && !(alpha > 0.0)) {
      throw ConfigError("planner: alpha must be positive for Politex");
    }
  }

  /// Non-fatal issues. tau < 1 forfeits the guarantee that a freshly
  /// inserted unit-norm feature lands inside the good set.
  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    if (tau < 1.0) out.emplace_back("tau < 1: inserted features may stay outside the good set");
    return out;
  }
};

/// One row of run telemetry: a completed iteration, or the iteration that
/// triggered a restart.
struct IterationRecord {
  std::size_t loop = 0;
  std::size_t iteration = 0;
  std::size_t coreset_size = 0;
  double weight_norm = 0.0;
  bool restart = false;
  std::uint64_t queries = 0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct PlannerOutput {
  Algorithm algo = Algorithm::kLspi;
  /// Weights produced by the last iteration of the final loop (w_K).
  WeightVector final_weights;
  /// w_1 .. w_K of the final loop.
  std::vector<WeightVector> weight_history;
  /// LSPI: greedy in w_K. Politex: unused (see `policies`).
  PolicySnapshot output_policy = UniformPolicy{};
  /// LSPI: greedy in w_{K-1} (uniform when K == 1).
  PolicySnapshot previous_policy = UniformPolicy{};
  /// pi_0 .. pi_{K-1} of the final loop; the Politex output is the uniform
  /// mixture over these.
  std::vector<PolicySnapshot> policies;
  std::size_t loops = 0;
  CoreSet coreset{1, 1.0, 1.0};
  std::uint64_t query_count = 0;
  std::vector<IterationRecord> records;
  std::vector<InsertionRecord> insertions;
  std::vector<std::string> warnings;
  /// States screened during the final loop (only with PlanOptions::record_trace).
  std::vector<StateId> final_loop_screened;
};

struct PlanOptions {
  bool record_trace = false;
  std::function<void(const IterationRecord&)> on_record;
};

/// Confident MC-LSPI / Confident MC-Politex.
///
/// The core set is seeded from `rho`; each loop resets the estimates and runs
/// K iterations of rollout + ridge regression + policy update. An uncertain
/// pair found by any rollout joins the core set and the loop restarts from
/// pi_0. The run ends with the first loop that completes all K iterations.
template <Environment Env>
PlannerOutput plan(const PlannerConfig& config, const Env& env, const FeatureMap& fmap,
                   StateId rho, const PlanOptions& options = {}) {
  config.validate();
  const std::size_t A = env.action_count();
  SimulatorHandle<Env> sim(env, rho);

  PlannerOutput out;
  out.algo = config.algo;
  out.warnings = config.warnings();
  out.coreset = initialize_core_set(rho, fmap, A, config.lambda, config.tau, &out.insertions);
  CoreSet& core = out.coreset;

  const PassOptions pass_options{config.parallelism, options.record_trace};
  auto emit = [&](const IterationRecord& rec) {
    out.records.push_back(rec);
    if (options.on_record) options.on_record(rec);
  };

  for (std::size_t loop = 0;; ++loop) {
    core.reset_estimates();
    auto history = std::make_shared<std::vector<WeightVector>>();
    PolicySnapshot policy = UniformPolicy{};
    std::vector<PolicySnapshot> policies{policy};
    std::vector<StateId> screened;
    bool restarted = false;

    for (std::size_t k = 1; k <= config.K; ++k) {
      const RolloutKey key{config.master_seed, loop, k, 0};
      auto pass = run_coreset_pass(core, policy, config.m, config.n, config.gamma, sim, fmap, key,
                                   pass_options);
      if (options.record_trace) {
        screened.insert(screened.end(), pass.screened.begin(), pass.screened.end());
      }
      if (!pass.done()) {
        out.insertions.push_back(core.add(std::move(*pass.uncertain)));
        emit(IterationRecord{loop, k, core.size(), 0.0, true, sim.query_count()});
        restarted = true;
        break;
      }
      for (std::size_t z = 0; z < core.size(); ++z) core.entry(z).q_estimate = pass.q[z];
      const auto features = core.features();
      WeightVector w = ridge_solve(core.gram(), features, pass.q);
      history->push_back(w);
      if (config.algo == Algorithm::kLspi) {
        policy = GreedyPolicy{w};
      } else {
        policy = PolitexPolicy{history, history->size(), config.alpha, config.gamma};
      }
      emit(IterationRecord{loop, k, core.size(), w.norm(), false, sim.query_count()});
      if (k < config.K) policies.push_back(policy);
    }

    if (!restarted) {
      out.loops = loop + 1;
      out.weight_history = *history;
      out.final_weights = history->back();
      out.policies = std::move(policies);
      if (config.algo == Algorithm::kLspi) {
        out.output_policy = GreedyPolicy{out.final_weights};
        out.previous_policy = config.K >= 2 ? PolicySnapshot{GreedyPolicy{(*history)[config.K - 2]}}
                                            : PolicySnapshot{UniformPolicy{}};
      } else {
        out.output_policy = policy;
      }
      out.final_loop_screened = std::move(screened);
      break;
    }
  }
  out.query_count = sim.query_count();
  return out;
}

}  // namespace confident
