#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace gymgrid {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a base
/// seed and a stream id.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  return mix64(mix64(base) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Deterministic generator. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; the distributions below are written out
/// by hand because the std:: distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Box-Muller (no cached second value, so the stream
  /// position depends only on the number of calls).
  double normal();

  /// Textual engine state, round-trippable through `restore`.
  std::string serialize() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace gymgrid
