#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace muse {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace detail {

// splitmix64 output finalizer (Vigna 2015). Full-avalanche bijection on
// 64-bit words; two applications over distinct Weyl offsets give
// well-separated streams.
inline constexpr std::uint64_t GOLDEN = 0x9E3779B97F4A7C15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Deterministic random state. A (seed, stream) pair identifies an
/// unbounded sequence of draws; the i-th draw is a pure function of
/// (seed, stream, i), so draws never depend on call order and distinct
/// streams are independent.
struct RandomKey {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  /// Derive an unrelated child key. fork(a) and fork(b) for a != b index
  /// independent generators; forking is stable across runs.
  [[nodiscard]] RandomKey fork(std::uint64_t child) const {
    std::uint64_t child_seed =
        detail::mix64(detail::mix64(seed + detail::GOLDEN) ^
                      (stream * 0xBF58476D1CE4E5B9ull + 0x94D049BB133111EBull));
    return RandomKey{child_seed, child};
  }

  bool operator==(const RandomKey&) const = default;
};

namespace detail {

// Raw 64 bits for counter position i of a key.
inline std::uint64_t key_bits(const RandomKey& key, std::uint64_t i) {
  std::uint64_t base = mix64(key.seed + GOLDEN * (key.stream + 1));
  return mix64(base ^ (GOLDEN * i + 0x94D049BB133111EBull));
}

// Uniform in (0, 1]: 53-bit mantissa, shifted away from zero so that
// log() below is always finite.
inline double uniform_open(std::uint64_t bits) {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

// Uniform in [0, 1).
inline double uniform_halfopen(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// The i-th standard normal draw of `key`. Box-Muller on counter positions
/// (2i, 2i+1); every draw is independently addressable.
inline double standard_normal_at(const RandomKey& key, std::uint64_t i) {
  double u1 = detail::uniform_open(detail::key_bits(key, 2 * i));
  double u2 = detail::uniform_halfopen(detail::key_bits(key, 2 * i + 1));
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// n i.i.d. standard normal draws, a pure function of `key`.
inline Vec standard_normal_stream(const RandomKey& key, Eigen::Index n) {
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i)
    out[i] = standard_normal_at(key, static_cast<std::uint64_t>(i));
  return out;
}

/// Uniform draw in [0, 1) at counter position i.
inline double uniform_at(const RandomKey& key, std::uint64_t i) {
  return detail::uniform_halfopen(detail::key_bits(key, i));
}

}  // namespace muse
