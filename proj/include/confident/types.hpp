#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

namespace confident {

/// Environment-defined state identifier. Environments must hand out
/// canonical ids: two observations of the same state compare equal.
struct StateId {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(StateId, StateId) = default;
};

/// Index into the finite action set, 0 <= index < action_count.
struct ActionId {
  std::size_t index = 0;

  friend constexpr auto operator<=>(ActionId, ActionId) = default;
};

inline std::string to_string(StateId s) { return std::to_string(s.value); }

using FeatureVector = Eigen::VectorXd;
using WeightVector = Eigen::VectorXd;

/// Features are expected inside the unit ball (up to this slack).
inline constexpr double kFeatureNormSlack = 1e-9;

/// One simulator step.
struct Transition {
  double reward = 0.0;
  StateId next_state;

  friend bool operator==(const Transition&, const Transition&) = default;
};

}  // namespace confident

template <>
struct std::hash<confident::StateId> {
  std::size_t operator()(confident::StateId s) const noexcept {
    return std::hash<std::uint64_t>{}(s.value);
  }
};
