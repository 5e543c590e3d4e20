#pragma once

#include "confident/errors.hpp"
#include "confident/rng.hpp"
#include "confident/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace confident {

/// phi : S x A -> R^d. Evaluation must be deterministic and land in the
/// unit ball.
class FeatureMap {
 public:
  using Evaluator = std::function<FeatureVector(StateId, ActionId)>;

  FeatureMap(std::size_t dim, Evaluator evaluator)
      : dim_(dim), evaluator_(std::move(evaluator)) {
    if (dim_ == 0) throw ConfigError("feature map: dimension must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }

  FeatureVector operator()(StateId s, ActionId a) const {
    FeatureVector phi = evaluator_(s, a);
    detail::require_dims(static_cast<std::size_t>(phi.size()), dim_, "feature map");
    return phi;
  }

 private:
  std::size_t dim_;
  Evaluator evaluator_;
};

/// Pi_[0, 1/(1-gamma)](w^T phi).
inline double clipped_q(const WeightVector& w, const FeatureVector& phi, double gamma) {
  detail::require_dims(static_cast<std::size_t>(phi.size()), static_cast<std::size_t>(w.size()),
                       "clipped_q");
  return std::clamp(w.dot(phi), 0.0, 1.0 / (1.0 - gamma));
}

struct UniformPolicy {
  friend bool operator==(const UniformPolicy&, const UniformPolicy&) = default;
};

/// One-hot on argmax_a w^T phi(s, a); ties go to the smallest index.
struct GreedyPolicy {
  WeightVector w;

  friend bool operator==(const GreedyPolicy& a, const GreedyPolicy& b) {
    return a.w.size() == b.w.size() && a.w == b.w;
  }
};

/// Softmax of alpha * sum_j clip(w_j^T phi(s, a)) over the first `length`
/// weights of a shared history. Iterates of one planner loop share storage.
struct PolitexPolicy {
  std::shared_ptr<const std::vector<WeightVector>> history;
  std::size_t length = 0;
  double alpha = 1.0;
  double gamma = 0.9;

  std::span<const WeightVector> weights() const {
    if (!history || length == 0) return {};
    return std::span<const WeightVector>(history->data(), length);
  }

  friend bool operator==(const PolitexPolicy& a, const PolitexPolicy& b) {
    if (a.length != b.length || a.alpha != b.alpha || a.gamma != b.gamma) return false;
    const auto wa = a.weights();
    const auto wb = b.weights();
    for (std::size_t j = 0; j < wa.size(); ++j) {
      if (wa[j].size() != wb[j].size() || wa[j] != wb[j]) return false;
    }
    return true;
  }
};

using PolicySnapshot = std::variant<UniformPolicy, GreedyPolicy, PolitexPolicy>;

inline std::size_t greedy_action(const WeightVector& w, StateId s, const FeatureMap& fmap,
                                 std::size_t action_count) {
  std::size_t best = 0;
  double best_value = 0.0;
  for (std::size_t a = 0; a < action_count; ++a) {
    const double v = w.dot(fmap(s, ActionId{a}));
    if (a == 0 || v > best_value) {
      best = a;
      best_value = v;
    }
  }
  return best;
}

/// Max-shifted softmax; in-place on `logits`.
inline void softmax_in_place(std::vector<double>& logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    total += l;
  }
  for (double& l : logits) l /= total;
}

inline std::vector<double> politex_logits(const PolitexPolicy& p, StateId s,
                                          const FeatureMap& fmap, std::size_t action_count) {
  std::vector<double> logits(action_count, 0.0);
  const auto weights = p.weights();
  for (std::size_t a = 0; a < action_count; ++a) {
    const FeatureVector phi = fmap(s, ActionId{a});
    double sum = 0.0;
    for (const auto& w : weights) sum += clipped_q(w, phi, p.gamma);
    logits[a] = p.alpha * sum;
  }
  return logits;
}

inline std::vector<double> action_probabilities(const PolicySnapshot& policy, StateId s,
                                                const FeatureMap& fmap,
                                                std::size_t action_count) {
  if (action_count == 0) throw ConfigError("action_probabilities: no actions");
  return std::visit(
      [&](const auto& p) -> std::vector<double> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, UniformPolicy>) {
          return std::vector<double>(action_count, 1.0 / static_cast<double>(action_count));
        } else if constexpr (std::is_same_v<P, GreedyPolicy>) {
          std::vector<double> probs(action_count, 0.0);
          probs[greedy_action(p.w, s, fmap, action_count)] = 1.0;
          return probs;
        } else {
          if (p.weights().empty()) {
            return std::vector<double>(action_count, 1.0 / static_cast<double>(action_count));
          }
          auto probs = politex_logits(p, s, fmap, action_count);
          softmax_in_place(probs);
          return probs;
        }
      },
      policy);
}

/// Inverse CDF over action indices in increasing order.
inline ActionId sample_from(std::span<const double> probs, double u) {
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    if (probs[a] <= 0.0) continue;
    last_positive = a;
    cumulative += probs[a];
    if (u < cumulative) return ActionId{a};
  }
  return ActionId{last_positive};
}

inline ActionId sample_action(const PolicySnapshot& policy, StateId s, const FeatureMap& fmap,
                              std::size_t action_count, RngStream& rng) {
  if (const auto* g = std::get_if<GreedyPolicy>(&policy)) {
    return ActionId{greedy_action(g->w, s, fmap, action_count)};
  }
  const auto probs = action_probabilities(policy, s, fmap, action_count);
  return sample_from(probs, rng.next_uniform());
}

}  // namespace confident
