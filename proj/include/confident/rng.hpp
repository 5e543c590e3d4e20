#pragma once

#include <cstdint>

namespace confident {

/// Coordinates of a random stream. Every rollout step draws from the
/// stream addressed by where it sits in the planner's loop structure, so
/// the sample path does not depend on execution order.
struct StreamKey {
  std::uint64_t master_seed = 0;
  std::uint64_t loop = 0;
  std::uint64_t iteration = 0;
  std::uint64_t coreset_index = 0;
  std::uint64_t rollout_index = 0;
  std::uint64_t lane = 0;

  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

/// Well-known lanes inside one rollout.
enum class Lane : std::uint64_t { kTransition = 0, kAction = 1, kEvaluation = 2 };

namespace detail {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_key(const StreamKey& k) noexcept {
  std::uint64_t h = mix64(k.master_seed);
  h = mix64(h ^ mix64(k.loop + 0x1000));
  h = mix64(h ^ mix64(k.iteration + 0x2000));
  h = mix64(h ^ mix64(k.coreset_index + 0x3000));
  h = mix64(h ^ mix64(k.rollout_index + 0x4000));
  h = mix64(h ^ mix64(k.lane + 0x5000));
  return h;
}

}  // namespace detail

/// Counter-based uniform generator: the n-th draw is a pure function of
/// (key, n). Copies are cheap and independent.
class RngStream {
 public:
  RngStream() : RngStream(StreamKey{}) {}
  explicit RngStream(const StreamKey& key, std::uint64_t counter = 0)
      : key_(key), hash_(detail::hash_key(key)), counter_(counter) {}

  const StreamKey& key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void seek(std::uint64_t counter) noexcept { counter_ = counter; }

  /// Raw 64 bits at a given counter position.
  std::uint64_t bits_at(std::uint64_t counter) const noexcept {
    return detail::mix64(hash_ ^ detail::mix64(counter * 0xd1b54a32d192ed03ULL + 0x7f4a7c15ULL));
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform_at(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits_at(counter) >> 11) * 0x1.0p-53;
  }

  double next_uniform() noexcept { return uniform_at(counter_++); }

  /// An independent sub-stream; distinct salts give distinct streams.
  RngStream derive(std::uint64_t salt) const noexcept {
    RngStream out = *this;
    out.hash_ = detail::mix64(hash_ ^ detail::mix64(salt ^ 0xa5a5a5a5a5a5a5a5ULL));
    return out;
  }

 private:
  StreamKey key_;
  std::uint64_t hash_;
  std::uint64_t counter_;
};

}  // namespace confident
