#pragma once

#include "confident/coreset.hpp"
#include "confident/oracle.hpp"
#include "confident/planner.hpp"
#include "confident/rollout.hpp"
#include "confident/simulator.hpp"
#include "confident/tabular.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace confident {

/// Per-loop comparison between the planner and its virtual twin.
struct HarnessLoopReport {
  std::size_t loop = 0;
  bool coresets_equal_at_start = true;
  /// Main and virtual produced the same (state, action, reward, successor)
  /// sequence for as long as the main algorithm was still running.
  bool prefix_trajectories_equal = true;
  bool main_restarted = false;
  std::optional<CoreSetEntry> main_added;
  std::optional<CoreSetEntry> virtual_added;
  std::size_t virtual_records = 0;

  bool added_equal() const { return main_added == virtual_added; }
};

struct HarnessReport {
  std::vector<HarnessLoopReport> loops;
  std::vector<WeightVector> main_weights;     // final loop, w_1..w_K
  std::vector<WeightVector> virtual_weights;  // final loop, w~_1..w~_K
  bool final_weights_identical = false;
  /// The harness's main algorithm reproduced plan() bit for bit.
  bool matches_planner = false;

  bool growth_sequences_equal() const {
    for (const auto& l : loops) {
      if (!l.coresets_equal_at_start || !l.added_equal()) return false;
    }
    return true;
  }

  bool trajectories_equal() const {
    for (const auto& l : loops) {
      if (!l.prefix_trajectories_equal) return false;
    }
    return true;
  }

  bool passed() const {
    return final_weights_identical && matches_planner && growth_sequences_equal() &&
           trajectories_equal();
  }
};

namespace detail {

inline bool bitwise_equal(const std::vector<WeightVector>& a, const std::vector<WeightVector>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    for (Eigen::Index j = 0; j < a[i].size(); ++j) {
      if (std::bit_cast<std::uint64_t>(a[i][j]) != std::bit_cast<std::uint64_t>(b[i][j])) return false;
    }
  }
  return true;
}

}  // namespace detail

/// Runs the planner and the virtual policy-iteration process in lockstep on
/// coupled simulators.
///
/// The virtual process never aborts a rollout: it records uncertain pairs and
/// keeps going, and its Q-function substitutes the exact Q of its own rollout
/// policy wherever a feature falls outside the good set. At the end of each
/// loop it adds the first pair it recorded. Inside the good set both
/// processes act identically, so while the main algorithm runs their
/// trajectories coincide, and in the main algorithm's final loop their weight
/// vectors must agree exactly.
inline HarnessReport virtual_pi_harness(const PlannerConfig& config,
                                        const TabularEnvironment& env, const FeatureMap& fmap,
                                        StateId rho) {
  config.validate();
  const TabularMdp& mdp = env.mdp();
  const std::size_t S = mdp.state_count;
  const std::size_t A = mdp.action_count;
  const double q_max = 1.0 / (1.0 - config.gamma);

  SimulatorHandle<TabularEnvironment> main_sim(env, rho);
  SimulatorHandle<TabularEnvironment> virt_sim(env, rho);
  CoreSet main_core = initialize_core_set(rho, fmap, A, config.lambda, config.tau);
  CoreSet virt_core = initialize_core_set(rho, fmap, A, config.lambda, config.tau);

  HarnessReport report;
  const auto loop_limit = static_cast<std::size_t>(std::ceil(main_core.size_cap())) + 1;

  for (std::size_t loop = 0; loop < loop_limit; ++loop) {
    HarnessLoopReport lr;
    lr.loop = loop;
    lr.coresets_equal_at_start = main_core.entries() == virt_core.entries();
    main_core.reset_estimates();
    virt_core.reset_estimates();

    bool main_active = true;
    auto main_history = std::make_shared<std::vector<WeightVector>>();
    PolicySnapshot main_policy = UniformPolicy{};
    std::vector<WeightVector> virt_weights;
    PolicyTable virt_table = uniform_policy(mdp);
    QTable virt_cumulative = QTable::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A));
    std::vector<CoreSetEntry> virt_records;

    // Good-set membership is fixed for the whole loop.
    std::vector<char> good(S * A);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        good[s * A + a] = virt_core.is_confident(fmap(StateId{s}, ActionId{a})) ? 1 : 0;
      }
    }

    for (std::size_t k = 1; k <= config.K; ++k) {
      detail::StateMemo main_memo(main_policy, main_core, fmap, A);
      std::vector<double> q_main(main_core.size(), 0.0);
      std::vector<double> q_virt(virt_core.size(), 0.0);

      for (std::size_t z = 0; z < virt_core.size(); ++z) {
        const RolloutKey key{config.master_seed, loop, k, z};
        double main_total = 0.0;
        double virt_total = 0.0;
        for (std::size_t i = 0; i < config.m; ++i) {
          RngStream transitions(key.stream(i, Lane::kTransition));
          const RngStream actions(key.stream(i, Lane::kAction));
          bool main_here = main_active;
          StateAction main_q{main_core.entries()[z].state, main_core.entries()[z].action};
          StateAction virt_q{virt_core.entries()[z].state, virt_core.entries()[z].action};
          if (main_here && main_q != virt_q) lr.prefix_trajectories_equal = false;

          transitions.seek(0);
          auto [tm, tv] = coupled_query(main_here ? &main_sim : nullptr, virt_sim,
                                        main_here ? std::optional<StateAction>(main_q) : std::nullopt,
                                        virt_q, transitions);
          double main_ret = main_here ? tm->reward : 0.0;
          double virt_ret = tv.reward;
          if (main_here && !(*tm == tv)) lr.prefix_trajectories_equal = false;
          StateId sm = main_here ? tm->next_state : StateId{};
          StateId sv = tv.next_state;
          double discount = 1.0;

          for (std::size_t t = 1; t <= config.n; ++t) {
            if (main_here) {
              const auto& screened = main_memo.screen(sm);
              if (screened.uncertain_action) {
                lr.main_added = CoreSetEntry{sm, ActionId{*screened.uncertain_action},
                                             screened.uncertain_feature, std::nullopt};
                main_here = false;
                main_active = false;
              }
            }
            for (std::size_t a = 0; a < A; ++a) {
              if (!good[sv.value * A + a]) {
                virt_records.push_back(
                    CoreSetEntry{sv, ActionId{a}, fmap(sv, ActionId{a}), std::nullopt});
                break;
              }
            }
            const double u = actions.uniform_at(t);
            std::optional<StateAction> mq;
            if (main_here) mq = StateAction{sm, main_memo.act(sm, u)};
            const std::span<const double> virt_probs(virt_table.data() + sv.value * A, A);
            const StateAction vq{sv, sample_from(virt_probs, u)};
            if (mq && *mq != vq) lr.prefix_trajectories_equal = false;

            transitions.seek(t);
            auto [tm2, tv2] = coupled_query(mq ? &main_sim : nullptr, virt_sim, mq, vq, transitions);
            discount *= config.gamma;
            if (mq) {
              if (!(*tm2 == tv2)) lr.prefix_trajectories_equal = false;
              main_ret += discount * tm2->reward;
              sm = tm2->next_state;
            }
            virt_ret += discount * tv2.reward;
            sv = tv2.next_state;
          }
          if (main_here) main_total += main_ret;
          virt_total += virt_ret;
        }
        if (main_active) q_main[z] = main_total / static_cast<double>(config.m);
        q_virt[z] = virt_total / static_cast<double>(config.m);
      }

      if (main_active) {
        const auto features = main_core.features();
        WeightVector w = ridge_solve(main_core.gram(), features, q_main);
        main_history->push_back(w);
        if (config.algo == Algorithm::kLspi) {
          main_policy = GreedyPolicy{w};
        } else {
          main_policy = PolitexPolicy{main_history, main_history->size(), config.alpha, config.gamma};
        }
      }

      const auto vfeatures = virt_core.features();
      const WeightVector wv = ridge_solve(virt_core.gram(), vfeatures, q_virt);
      virt_weights.push_back(wv);
      const QTable exact = exact_policy_q(mdp, virt_table);
      PolicyTable next(S * A, 0.0);
      for (std::size_t s = 0; s < S; ++s) {
        std::vector<double> q_tilde(A);
        for (std::size_t a = 0; a < A; ++a) {
          const FeatureVector phi = fmap(StateId{s}, ActionId{a});
          const double off = exact(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
          if (config.algo == Algorithm::kLspi) {
            q_tilde[a] = good[s * A + a] ? wv.dot(phi) : off;
          } else {
            q_tilde[a] = good[s * A + a] ? clipped_q(wv, phi, config.gamma) : std::clamp(off, 0.0, q_max);
          }
        }
        if (config.algo == Algorithm::kLspi) {
          std::size_t best = 0;
          for (std::size_t a = 1; a < A; ++a) {
            if (q_tilde[a] > q_tilde[best]) best = a;
          }
          next[s * A + best] = 1.0;
        } else {
          std::vector<double> logits(A);
          for (std::size_t a = 0; a < A; ++a) {
            auto& cum = virt_cumulative(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
            cum += q_tilde[a];
            logits[a] = config.alpha * cum;
          }
          softmax_in_place(logits);
          std::copy(logits.begin(), logits.end(), next.begin() + static_cast<std::ptrdiff_t>(s * A));
        }
      }
      virt_table = std::move(next);
    }

    lr.virtual_records = virt_records.size();
    if (!virt_records.empty()) lr.virtual_added = virt_records.front();

    if (main_active) {
      report.main_weights = *main_history;
      report.virtual_weights = std::move(virt_weights);
      report.final_weights_identical = detail::bitwise_equal(report.main_weights, report.virtual_weights);
      report.loops.push_back(std::move(lr));
      break;
    }
    lr.main_restarted = true;
    main_core.add(*lr.main_added);
    if (lr.virtual_added) virt_core.add(*lr.virtual_added);
    report.loops.push_back(std::move(lr));
  }

  PlannerConfig sequential = config;
  sequential.parallelism = 1;
  const PlannerOutput planned = plan(sequential, env, fmap, rho);
  report.matches_planner = planned.loops == report.loops.size() &&
                           detail::bitwise_equal(planned.weight_history, report.main_weights) &&
                           planned.coreset.entries().size() == main_core.entries().size();
  if (report.matches_planner) {
    for (std::size_t i = 0; i < main_core.size(); ++i) {
      const auto& a = planned.coreset.entries()[i];
      const auto& b = main_core.entries()[i];
      if (a.state != b.state || a.action != b.action) report.matches_planner = false;
    }
  }
  return report;
}

}  // namespace confident
