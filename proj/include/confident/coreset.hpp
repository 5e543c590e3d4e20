#pragma once

#include "confident/errors.hpp"
#include "confident/numerics.hpp"
#include "confident/policy.hpp"
#include "confident/types.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace confident {

/// z = (s, a, phi(s, a), q); q stays empty until a rollout estimates it.
struct CoreSetEntry {
  StateId state;
  ActionId action;
  FeatureVector feature;
  std::optional<double> q_estimate;

  friend bool operator==(const CoreSetEntry& x, const CoreSetEntry& y) {
    return x.state == y.state && x.action == y.action && x.feature.size() == y.feature.size() &&
           x.feature == y.feature && x.q_estimate == y.q_estimate;
  }
};

/// Closed-form cap on the core-set size:
///   e/(e-1) * (1+tau)/tau * d * (log(1 + 1/tau) + log(1 + 1/lambda)).
inline double c_max(std::size_t dim, double tau, double lambda) {
  constexpr double e = std::numbers::e;
  return e / (e - 1.0) * (1.0 + tau) / tau * static_cast<double>(dim) *
         (std::log1p(1.0 / tau) + std::log1p(1.0 / lambda));
}

/// Diagnostics for one core-set insertion.
struct InsertionRecord {
  std::size_t size_after = 0;
  double uncertainty = 0.0;
  double log_det_before = 0.0;
  double log_det_after = 0.0;
};

/// Ordered core set with its regularized Gram matrix. Entries are kept in
/// insertion order; nothing ever reorders them.
class CoreSet {
 public:
  CoreSet(std::size_t dim, double lambda, double tau)
      : gram_(dim, lambda), tau_(tau), cap_(c_max(dim, tau, lambda)) {
    if (!(tau > 0.0)) throw ConfigError("core set: tau must be positive");
  }

  std::size_t dim() const noexcept { return gram_.dim(); }
  double lambda() const noexcept { return gram_.lambda(); }
  double tau() const noexcept { return tau_; }
  double size_cap() const noexcept { return cap_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const GramState& gram() const noexcept { return gram_; }
  const std::vector<CoreSetEntry>& entries() const noexcept { return entries_; }
  CoreSetEntry& entry(std::size_t i) { return entries_.at(i); }

  double uncertainty(const FeatureVector& phi) const { return gram_.uncertainty(phi); }

  /// Good-set membership; ties (u == tau) count as confident.
  bool is_confident(const FeatureVector& phi) const { return !(uncertainty(phi) > tau_); }

  /// Appends and rank-one-updates the Gram matrix. Throws BoundViolation if
  /// the new size would exceed the cap.
  InsertionRecord add(CoreSetEntry e) {
    detail::require_dims(static_cast<std::size_t>(e.feature.size()), dim(), "core set add");
    if (static_cast<double>(entries_.size() + 1) > cap_) {
      throw BoundViolation("core set would grow to " + std::to_string(entries_.size() + 1) +
                           " entries, above the cap " + std::to_string(cap_));
    }
    InsertionRecord rec;
    rec.uncertainty = gram_.uncertainty(e.feature);
    rec.log_det_before = gram_.log_det();
    gram_ = gram_.updated(e.feature);
    rec.log_det_after = gram_.log_det();
    entries_.push_back(std::move(e));
    rec.size_after = entries_.size();
    return rec;
  }

  void reset_estimates() noexcept {
    for (auto& e : entries_) e.q_estimate.reset();
  }

  std::vector<FeatureVector> features() const {
    std::vector<FeatureVector> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.feature);
    return out;
  }

 private:
  GramState gram_;
  double tau_;
  double cap_;
  std::vector<CoreSetEntry> entries_;
};

inline bool is_confident(const CoreSet& c, const FeatureVector& phi) { return c.is_confident(phi); }

inline CoreSet add_entry(CoreSet c, CoreSetEntry e) {
  c.add(std::move(e));
  return c;
}

inline CoreSet reset_estimates(CoreSet c) {
  c.reset_estimates();
  return c;
}

/// Seeds the core set from the initial state: the first action always
/// enters, every later action enters iff it is uncertain at that point.
inline CoreSet initialize_core_set(StateId rho, const FeatureMap& fmap, std::size_t action_count,
                                   double lambda, double tau,
                                   std::vector<InsertionRecord>* insertions = nullptr) {
  CoreSet c(fmap.dim(), lambda, tau);
  for (std::size_t a = 0; a < action_count; ++a) {
    FeatureVector phi = fmap(rho, ActionId{a});
    if (c.empty() || c.uncertainty(phi) > tau) {
      auto rec = c.add(CoreSetEntry{rho, ActionId{a}, std::move(phi), std::nullopt});
      if (insertions != nullptr) insertions->push_back(rec);
    }
  }
  return c;
}

// Line-oriented dump: "state<TAB>action<TAB>f1,f2,...<TAB>q|none".

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string coreset_to_text(const CoreSet& c) {
  std::ostringstream out;
  for (const auto& e : c.entries()) {
    out << e.state.value << '\t' << e.action.index << '\t';
    for (Eigen::Index i = 0; i < e.feature.size(); ++i) {
      if (i > 0) out << ',';
      out << format_double(e.feature[i]);
    }
    out << '\t' << (e.q_estimate ? format_double(*e.q_estimate) : std::string("none")) << '\n';
  }
  return out.str();
}

/// Parses coreset_to_text() output into entries (the Gram state is rebuilt
/// by the caller through CoreSet::add).
inline std::vector<CoreSetEntry> coreset_entries_from_text(const std::string& text) {
  std::vector<CoreSetEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string state, action, feats, q;
    if (!std::getline(fields, state, '\t') || !std::getline(fields, action, '\t') ||
        !std::getline(fields, feats, '\t') || !std::getline(fields, q)) {
      throw ConfigError("core set text: malformed line " + std::to_string(line_no));
    }
    CoreSetEntry e;
    e.state = StateId{std::stoull(state)};
    e.action = ActionId{static_cast<std::size_t>(std::stoull(action))};
    std::vector<double> values;
    std::istringstream fs(feats);
    std::string tok;
    while (std::getline(fs, tok, ',')) values.push_back(std::stod(tok));
    e.feature = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                  static_cast<Eigen::Index>(values.size()));
    if (q != "none") e.q_estimate = std::stod(q);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace confident
