#pragma once

#include "confident/coreset.hpp"
#include "confident/errors.hpp"
#include "confident/policy.hpp"
#include "confident/rng.hpp"
#include "confident/simulator.hpp"
#include "confident/types.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <optional>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

namespace confident {

/// m trajectories of n + 1 steps from (start_state, start_action).
struct RolloutSpec {
  std::size_t m = 1;
  std::size_t n = 0;
  double gamma = 0.9;
  StateId start_state;
  ActionId start_action;

  void validate() const {
    if (m == 0) throw ConfigError("rollout: m must be at least 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("rollout: gamma must be in (0,1)");
  }
};

struct RolloutDone {
  double estimate = 0.0;
};

/// The first uncertain pair met while screening; q_estimate is empty.
struct RolloutUncertain {
  CoreSetEntry entry;
};

using RolloutResult = std::variant<RolloutDone, RolloutUncertain>;

/// Position of a rollout batch inside the planner: (seed, loop, iteration,
/// core-set index). Trajectory i of the batch reads streams keyed by i.
struct RolloutKey {
  std::uint64_t master_seed = 0;
  std::uint64_t loop = 0;
  std::uint64_t iteration = 0;
  std::uint64_t coreset_index = 0;

  StreamKey stream(std::uint64_t rollout_index, Lane lane) const {
    return StreamKey{master_seed, loop, iteration, coreset_index, rollout_index,
                     static_cast<std::uint64_t>(lane)};
  }
};

namespace detail {

/// Per-thread memo of state screening and action probabilities. Valid only
/// while the policy and the core set stay frozen (one core-set pass).
class StateMemo {
 public:
  struct Entry {
    std::optional<std::size_t> uncertain_action;
    FeatureVector uncertain_feature;
    std::vector<double> probs;
    bool has_probs = false;
  };

  StateMemo(const PolicySnapshot& policy, const CoreSet& coreset, const FeatureMap& fmap,
            std::size_t action_count)
      : policy_(&policy), coreset_(&coreset), fmap_(&fmap), action_count_(action_count) {}

  const Entry& screen(StateId s) {
    auto it = memo_.find(s);
    if (it != memo_.end()) return it->second;
    if (memo_.size() > kMaxEntries) memo_.clear();
    Entry e;
    for (std::size_t a = 0; a < action_count_; ++a) {
      FeatureVector phi = (*fmap_)(s, ActionId{a});
      if (coreset_->uncertainty(phi) > coreset_->tau()) {
        e.uncertain_action = a;
        e.uncertain_feature = std::move(phi);
        break;
      }
    }
    return memo_.emplace(s, std::move(e)).first->second;
  }

  ActionId act(StateId s, double u) {
    Entry& e = memo_.at(s);
    if (!e.has_probs) {
      e.probs = action_probabilities(*policy_, s, *fmap_, action_count_);
      e.has_probs = true;
    }
    return sample_from(e.probs, u);
  }

 private:
  static constexpr std::size_t kMaxEntries = 1u << 16;
  const PolicySnapshot* policy_;
  const CoreSet* coreset_;
  const FeatureMap* fmap_;
  std::size_t action_count_;
  std::unordered_map<StateId, Entry> memo_;
};

struct TrajectoryOutcome {
  double discounted_return = 0.0;
  std::optional<CoreSetEntry> uncertain;
  std::size_t uncertain_step = 0;
  std::vector<StateId> screened;  // filled when tracing
};

/// One trajectory of the confident rollout. Step 0 queries the start pair
/// without screening; steps 1..n screen every action before acting.
template <Environment Env>
TrajectoryOutcome run_trajectory(const RolloutSpec& spec, SimulatorHandle<Env>& sim,
                                 const RolloutKey& key, std::uint64_t rollout_index,
                                 StateMemo& memo, bool trace) {
  const RngStream transitions(key.stream(rollout_index, Lane::kTransition));
  const RngStream actions(key.stream(rollout_index, Lane::kAction));
  TrajectoryOutcome out;
  Transition tr = sim.query_with_draw(spec.start_state, spec.start_action,
                                      transitions.uniform_at(0));
  double ret = tr.reward;
  double discount = 1.0;
  StateId s = tr.next_state;
  for (std::size_t t = 1; t <= spec.n; ++t) {
    const auto& screened = memo.screen(s);
    if (trace) out.screened.push_back(s);
    if (screened.uncertain_action) {
      out.uncertain = CoreSetEntry{s, ActionId{*screened.uncertain_action},
                                   screened.uncertain_feature, std::nullopt};
      out.uncertain_step = t;
      return out;
    }
    const ActionId a = memo.act(s, actions.uniform_at(t));
    tr = sim.query_with_draw(s, a, transitions.uniform_at(t));
    discount *= spec.gamma;
    ret += discount * tr.reward;
    s = tr.next_state;
  }
  out.discounted_return = ret;
  return out;
}

}  // namespace detail

/// Monte Carlo estimate of Q_pi(start) that aborts on the first feature
/// outside the good set of `coreset`.
template <Environment Env>
RolloutResult confident_rollout(const RolloutSpec& spec, const PolicySnapshot& policy,
                                const CoreSet& coreset, SimulatorHandle<Env>& sim,
                                const FeatureMap& fmap, const RolloutKey& key,
                                std::vector<StateId>* screened_states = nullptr) {
  spec.validate();
  detail::StateMemo memo(policy, coreset, fmap, sim.env().action_count());
  double total = 0.0;
  for (std::size_t i = 0; i < spec.m; ++i) {
    auto out = detail::run_trajectory(spec, sim, key, i, memo, screened_states != nullptr);
    if (screened_states != nullptr) {
      screened_states->insert(screened_states->end(), out.screened.begin(), out.screened.end());
    }
    if (out.uncertain) return RolloutUncertain{std::move(*out.uncertain)};
    total += out.discounted_return;
  }
  return RolloutDone{total / static_cast<double>(spec.m)};
}

struct PassOptions {
  std::size_t parallelism = 1;
  bool record_trace = false;
};

/// Outcome of estimating every core-set entry under one policy.
struct CoresetPassResult {
  /// Estimates in core-set order; empty when `uncertain` is set.
  std::vector<double> q;
  std::optional<CoreSetEntry> uncertain;
  std::size_t uncertain_coreset_index = 0;
  std::size_t uncertain_rollout_index = 0;
  std::size_t uncertain_step = 0;
  /// States screened by the merged trajectories, in sequential order.
  std::vector<StateId> screened;

  bool done() const noexcept { return !uncertain.has_value(); }
};

/// Rolls out from every core-set entry in order. Trajectories may run on
/// several threads; the result is defined by sequential semantics: the
/// uncertain pair with the smallest (entry, rollout) position wins, and only
/// trajectories a sequential run would have executed count toward the
/// simulator's query total and visited set.
template <Environment Env>
CoresetPassResult run_coreset_pass(const CoreSet& coreset, const PolicySnapshot& policy,
                                   std::size_t m, std::size_t n, double gamma,
                                   SimulatorHandle<Env>& sim, const FeatureMap& fmap,
                                   const RolloutKey& pass_key, const PassOptions& options = {}) {
  if (coreset.empty()) throw ConfigError("run_coreset_pass: empty core set");
  if (m == 0) throw ConfigError("run_coreset_pass: m must be at least 1");
  const std::size_t entries = coreset.size();
  const std::size_t tasks = entries * m;
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  struct Slot {
    std::optional<SimulatorHandle<Env>> view;
    detail::TrajectoryOutcome outcome;
    bool ran = false;
  };
  std::vector<Slot> slots(tasks);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> first_uncertain{kNone};

  auto worker = [&] {
    detail::StateMemo memo(policy, coreset, fmap, sim.env().action_count());
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= tasks || task > first_uncertain.load()) return;
      const std::size_t z = task / m;
      const std::size_t i = task % m;
      const auto& entry = coreset.entries()[z];
      RolloutSpec spec{m, n, gamma, entry.state, entry.action};
      RolloutKey key = pass_key;
      key.coreset_index = z;
      Slot& slot = slots[task];
      slot.view.emplace(sim.fork());
      slot.outcome = detail::run_trajectory(spec, *slot.view, key, i, memo, options.record_trace);
      slot.ran = true;
      if (slot.outcome.uncertain) {
        std::size_t cur = first_uncertain.load();
        while (task < cur && !first_uncertain.compare_exchange_weak(cur, task)) {
        }
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.parallelism, tasks));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  CoresetPassResult result;
  const std::size_t stop = first_uncertain.load();
  const std::size_t merged = stop == kNone ? tasks : stop + 1;
  for (std::size_t task = 0; task < merged; ++task) {
    Slot& slot = slots[task];
    sim.merge(*slot.view);
    if (options.record_trace) {
      result.screened.insert(result.screened.end(), slot.outcome.screened.begin(),
                             slot.outcome.screened.end());
    }
  }
  if (stop != kNone) {
    Slot& slot = slots[stop];
    result.uncertain = std::move(slot.outcome.uncertain);
    result.uncertain_coreset_index = stop / m;
    result.uncertain_rollout_index = stop % m;
    result.uncertain_step = slot.outcome.uncertain_step;
    return result;
  }
  result.q.resize(entries);
  for (std::size_t z = 0; z < entries; ++z) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) total += slots[z * m + i].outcome.discounted_return;
    result.q[z] = total / static_cast<double>(m);
  }
  return result;
}

}  // namespace confident
