#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <gmpxx.h>

#include "cavsec/bytes.hpp"

namespace cavsec {

/// Seedable randomness source injected into every randomized operation.
///
/// Deterministic for a given seed so tests and scenario runs can pin all
/// randomness. This is a simulation generator (Mersenne Twister), not a
/// CSPRNG; see the README's note on non-goals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  Bytes bytes(std::size_t n);
  /// Uniform integer in [0, bound). bound must be positive.
  mpz_class below(const mpz_class& bound);
  /// Uniform integer in [1, bound).
  mpz_class nonzero_below(const mpz_class& bound);

  /// Independent child stream, derived from this stream and a label.
  Rng fork(std::string_view label);

 private:
  std::mt19937_64 engine_;
};

}  // namespace cavsec
