#pragma once

#include "confident/errors.hpp"
#include "confident/rng.hpp"
#include "confident/types.hpp"

#include <concepts>
#include <cstdint>
#include <optional>
#include <unordered_set>
#include <utility>
#include <vector>

namespace confident {

/// A generative model: given (s, a) and one uniform draw u in [0, 1),
/// returns r(s, a) and a successor sampled from P(.|s, a) by inverse CDF
/// over the environment's fixed successor ordering.
template <class E>
concept Environment = requires(const E& e, StateId s, ActionId a, double u) {
  { e.action_count() } -> std::convertible_to<std::size_t>;
  { e.initial_state() } -> std::convertible_to<StateId>;
  { e.sample(s, a, u) } -> std::same_as<Transition>;
};

/// Local-access simulator: queries are only allowed at states that have been
/// observed before (the initial state, or any successor returned so far).
///
/// A handle is single-threaded. Parallel rollouts each take a fork(), which
/// reads the parent's visited set without copying it; forks are merged back
/// once the parent is no longer being read.
template <Environment Env>
class SimulatorHandle {
 public:
  explicit SimulatorHandle(const Env& env) : SimulatorHandle(env, env.initial_state()) {}
  SimulatorHandle(const Env& env, StateId start) : env_(&env) { visited_.insert(start); }

  const Env& env() const noexcept { return *env_; }
  std::uint64_t query_count() const noexcept { return query_count_; }

  bool has_visited(StateId s) const {
    for (const SimulatorHandle* h = this; h != nullptr; h = h->parent_) {
      if (h->visited_.contains(s)) return true;
    }
    return false;
  }

  /// Consumes exactly one draw from `rng`.
  Transition query(StateId s, ActionId a, RngStream& rng) {
    return query_with_draw(s, a, rng.next_uniform());
  }

  Transition query_with_draw(StateId s, ActionId a, double u) {
    if (!has_visited(s)) {
      throw LocalAccessViolation("simulator queried at unvisited state " + to_string(s));
    }
    if (a.index >= env_->action_count()) {
      throw DimensionMismatch("simulator: action index out of range");
    }
    Transition t = env_->sample(s, a, u);
    ++query_count_;
    if (visited_.insert(t.next_state).second) added_.push_back(t.next_state);
    return t;
  }

  /// A child handle that sees this handle's visited set. The parent must not
  /// be mutated while forks are alive.
  SimulatorHandle fork() const {
    SimulatorHandle child(*env_);
    child.visited_.clear();
    child.parent_ = this;
    return child;
  }

  /// Folds a fork's discoveries and query count back into this handle.
  void merge(const SimulatorHandle& child) {
    for (StateId s : child.added_) {
      if (visited_.insert(s).second) added_.push_back(s);
    }
    query_count_ += child.query_count_;
  }

  std::size_t visited_count() const noexcept { return visited_.size(); }

 private:
  const Env* env_;
  const SimulatorHandle* parent_ = nullptr;
  std::unordered_set<StateId> visited_;
  std::vector<StateId> added_;
  std::uint64_t query_count_ = 0;
};

template <Environment Env>
Transition query(SimulatorHandle<Env>& h, StateId s, ActionId a, RngStream& rng) {
  return h.query(s, a, rng);
}

template <Environment Env>
std::uint64_t checkpoint_count(const SimulatorHandle<Env>& h) {
  return h.query_count();
}

using StateAction = std::pair<StateId, ActionId>;

/// Queries two simulators over the same kernel so that identical (s, a)
/// requests share a single draw and therefore return the same successor.
/// Unequal requests, or a virtual request with no main counterpart, use
/// independent sub-streams. Either way each side's marginal is P(.|s, a).
template <Environment Env>
std::pair<std::optional<Transition>, Transition> coupled_query(
    SimulatorHandle<Env>* main, SimulatorHandle<Env>& virt,
    const std::optional<StateAction>& main_q, const StateAction& virt_q, RngStream& rng) {
  const std::uint64_t pos = rng.counter();
  rng.seek(pos + 1);
  if (main_q && main != nullptr && *main_q == virt_q) {
    const double u = rng.uniform_at(pos);
    Transition tm = main->query_with_draw(main_q->first, main_q->second, u);
    Transition tv = virt.query_with_draw(virt_q.first, virt_q.second, u);
    return {tm, tv};
  }
  std::optional<Transition> tm;
  if (main_q && main != nullptr) {
    tm = main->query_with_draw(main_q->first, main_q->second, rng.derive(1).uniform_at(pos));
  }
  Transition tv = virt.query_with_draw(virt_q.first, virt_q.second, rng.derive(2).uniform_at(pos));
  return {tm, tv};
}

}  // namespace confident
