#pragma once

#include <stdexcept>
#include <string>

namespace confident {

/// Vector or matrix dimensions disagree.
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration value is outside its admissible range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The simulator was queried at a state the agent has not observed.
/// Planner code never triggers this; seeing it means a bug.
class LocalAccessViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The core set outgrew its closed-form size cap.
class BoundViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

inline void require_dims(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " +
                            std::to_string(want) + ", got " +
                            std::to_string(got));
  }
}

}  // namespace detail
}  // namespace confident
