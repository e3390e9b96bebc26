#pragma once

#include <cstdint>
#include <random>

namespace ekinfer {

// splitmix64, used to derive independent per-particle rng streams from a
// base seed plus structural indices (iteration, particle, stage).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t next, Rest... rest) {
  return hash_combine(splitmix64(seed ^ splitmix64(next)), rest...);
}

// Stream for particle n at iteration j (and optional stage tag). Streams are
// independent of thread/worker assignment, which keeps runs reproducible
// under any EKINFER_THREADS setting.
template <typename... Idx>
std::mt19937_64 make_stream(std::uint64_t seed, Idx... idx) {
  return std::mt19937_64(hash_combine(seed, static_cast<std::uint64_t>(idx)...));
}

inline double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(std::mt19937_64& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace ekinfer
