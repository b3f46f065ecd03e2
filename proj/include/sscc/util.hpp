#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sscc {

// SplitMix64 finalizer. Used for seed derivation and content hashing where
// we need results that are stable across platforms and process runs.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Deterministic RNG. std::normal_distribution and friends are
// implementation-defined, so gaussian/bounded draws are done by hand to keep
// outputs identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in (0,1), never exactly 0 or 1
  double uniform01() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  uint64_t below(uint64_t n) { return next() % n; }

  double gaussian();

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Runs body(begin, end) over [0, n) split into contiguous chunks. With
// threads <= 1 the body runs inline. Chunking is purely index-based, so any
// computation whose output elements are disjoint per index is bit-deterministic
// regardless of the thread count.
void parallel_for(int64_t n, int threads, const std::function<void(int64_t, int64_t)>& body);

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 1469598103934665603ull);
inline uint64_t fnv1a64(const std::string& s, uint64_t seed = 1469598103934665603ull) {
  return fnv1a64(s.data(), s.size(), seed);
}

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace sscc
