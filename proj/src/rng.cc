#include "arf/rng.h"

#include <cmath>

#include "arf/check.h"

namespace arf {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return mix64(seed ^ mix64(value + 0x632be59bd9b4e019ULL));
}

std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

Rng Rng::split(std::uint64_t tag) const {
  Rng child;
  child.key_ = hash_combine(key_, tag);
  child.counter_ = 0;
  return child;
}

Rng Rng::from_state(std::uint64_t key, std::uint64_t counter) {
  Rng r;
  r.key_ = key;
  r.counter_ = counter;
  return r;
}

std::uint64_t Rng::next_u64() {
  // Two rounds of mixing over (key, counter) decorrelate neighbouring counters.
  const std::uint64_t c = counter_++;
  return mix64(mix64(key_ + c * 0x9e3779b97f4a7c15ULL) ^ key_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int lo, int hi) {
  ARF_CHECK(lo <= hi, "empty integer range [" << lo << ", " << hi << "]");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return lo + static_cast<int>(x % span);
}

double Rng::normal() {
  // Box-Muller, one value per call so the stream position stays simple.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace arf
