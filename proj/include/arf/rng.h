// Counter-based random numbers. A stream is (key, counter); draws are a pure
// function of both, so substreams derived with split() are reproducible no
// matter in which order they are consumed.
#pragma once

#include <cstdint>
#include <string_view>

namespace arf {

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);
std::uint64_t hash_string(std::string_view s);

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t counter = 0)
      : key_(mix64(seed ^ 0x5851f42d4c957f2dULL)), counter_(counter) {}

  // Independent child stream, identified by a tag. Does not advance *this.
  Rng split(std::uint64_t tag) const;
  Rng split(std::string_view tag) const { return split(hash_string(tag)); }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  static Rng from_state(std::uint64_t key, std::uint64_t counter);

 private:
  Rng() = default;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace arf
