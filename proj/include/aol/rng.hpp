#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace aol {

using rng_engine = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
  return mix64(seed ^ mix64(value));
}

/// Derives an independent sub-stream seed from a base seed and a list of salts.
/// Sub-streams depend only on their inputs, so work can be split across tasks
/// without changing results.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> salts) noexcept {
  std::uint64_t s = mix64(base);
  for (auto v : salts) s = hash_combine(s, v);
  return s;
}

inline rng_engine make_stream(std::uint64_t base, std::initializer_list<std::uint64_t> salts) {
  return rng_engine(derive_seed(base, salts));
}

/// Purpose tags that keep sub-streams of the same node apart.
enum class stream_tag : std::uint64_t {
  root_particles = 0x100,
  propagate = 0x200,
  observe = 0x300,
  environment = 0x400,
  planner = 0x500,
  rollout = 0x600,
  topology = 0x700,
};

constexpr std::uint64_t tag(stream_tag t) noexcept { return static_cast<std::uint64_t>(t); }

}  // namespace aol
