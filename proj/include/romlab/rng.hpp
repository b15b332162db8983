#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

// Counter-based randomness: every draw is a pure function of (key, counter),
// so lattice disorder can be sampled lazily in any order and ensembles can be
// split across workers without sharing generator state.

namespace romlab::rng {

/// 64-bit finalizer (splitmix64 / Stafford variant 13).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Hash of a key and two signed lattice coordinates.
constexpr std::uint64_t hash3(std::uint64_t key, std::int64_t a,
                              std::int64_t b) noexcept {
  std::uint64_t h = mix64(key ^ 0x9e3779b97f4a7c15ULL);
  h = mix64(h + static_cast<std::uint64_t>(a) * 0xd1b54a32d192ed03ULL);
  h = mix64(h + static_cast<std::uint64_t>(b) * 0xabc98388fb8fac03ULL);
  return h;
}

/// Maps 64 random bits to the open interval (0, 1) with 52-bit resolution
/// (midpoints of 2^52 cells; with 53 bits the top midpoint rounds to 1).
constexpr double to_open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Inverse-CDF draw of an Exp(rate) variable from u in (0, 1).
inline double exponential_from_unit(double u, double rate) noexcept {
  return -std::log(u) / rate;
}

/// Per-task seed derived from a master seed; stable across worker counts.
constexpr std::uint64_t split_seed(std::uint64_t master,
                                   std::uint64_t task) noexcept {
  return hash3(master, static_cast<std::int64_t>(task), 0x5eed);
}

/// Sequential view of a counter-based stream. Satisfies
/// UniformRandomBitGenerator, but the library only uses `uniform()` and
/// `exponential()` so results never depend on the standard library's
/// distribution implementations.
class CounterStream {
public:
  using result_type = std::uint64_t;

  constexpr explicit CounterStream(std::uint64_t key,
                                   std::uint64_t stream = 0) noexcept
      : key_(key), stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    return hash3(key_, static_cast<std::int64_t>(stream_),
                 static_cast<std::int64_t>(counter_++));
  }

  constexpr double uniform() noexcept { return to_open_unit((*this)()); }
  double exponential(double rate) noexcept {
    return exponential_from_unit(uniform(), rate);
  }

  constexpr std::uint64_t position() const noexcept { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

} // namespace romlab::rng
