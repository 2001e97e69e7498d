#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace nsmc {

// Mixing step of splitmix64; used to derive independent seeds from a path of keys.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Hierarchical seed: hash(master, k0, k1, ...). Order of keys matters.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(master);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  return h;
}

// Purposes of sub-streams within one time step. Part of the reproducibility contract:
// changing these values changes every seeded result.
enum class StreamTag : std::uint64_t {
  simulate = 1,
  forward = 2,     // per-particle inner procedure / eta
  resample = 3,    // outer ancestor draw
  propagate = 4,   // per-particle kappa / transition draw
  replicate = 5,
  method = 6,
};

inline std::uint64_t key(StreamTag tag) { return static_cast<std::uint64_t>(tag); }

// A private random stream. Never shared between threads.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Stream substream(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  return Stream(derive_seed(master, keys));
}

}  // namespace nsmc
