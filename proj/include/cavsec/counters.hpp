#pragma once

// Operation counters behind the cost contracts.
//
// Counters are thread-local: every thread accumulates its own totals, so a
// measurement taken with OpScope on one thread is exact regardless of what
// other threads do. Benchmarks and audits run their measured region on a
// single thread.
//
// What is counted:
//   exp          group exponentiation
//   group_mul    group multiplication (mod p)
//   scalar_mul   scalar multiplication (mod q)
//   group_inv    group inversion
//   scalar_inv   scalar inversion
//   hash         any hash evaluation: keyed MAC, plain hash, hash-to-scalar
//   cipher       symmetric encryption or decryption call
//   kdf          symmetric key derivation
//   sample       drawing a uniformly random group element
//   member_check subgroup-membership validation while decoding
//
// Random scalar draws, additions and subtractions are free. Group-element
// sampling and membership checks run their exponentiations with counting
// suspended and are reported in their own columns.

#include <cstdint>
#include <string>

namespace cavsec {

struct OpCounts {
  std::uint64_t exp = 0;
  std::uint64_t group_mul = 0;
  std::uint64_t scalar_mul = 0;
  std::uint64_t group_inv = 0;
  std::uint64_t scalar_inv = 0;
  std::uint64_t hash = 0;
  std::uint64_t cipher = 0;
  std::uint64_t kdf = 0;
  std::uint64_t sample = 0;
  std::uint64_t member_check = 0;

  /// Multiplicative operations (group and scalar).
  std::uint64_t mul() const { return group_mul + scalar_mul; }
  /// Hash-function evaluations.
  std::uint64_t prf() const { return hash; }
  /// Symmetric-key operations: cipher calls plus key derivations.
  std::uint64_t sym() const { return cipher + kdf; }

  OpCounts& operator+=(const OpCounts& o);
  friend OpCounts operator+(OpCounts a, const OpCounts& b) { return a += b; }
  friend OpCounts operator-(const OpCounts& a, const OpCounts& b);
  friend bool operator==(const OpCounts&, const OpCounts&) = default;

  std::string summary() const;
};

namespace counters {

/// Current totals for the calling thread.
const OpCounts& current();
void reset();

/// Mutable access used by the instrumented primitives.
OpCounts& tally();
bool suspended();

/// Counting is off for the lifetime of this guard (nests).
class Suspend {
 public:
  Suspend();
  ~Suspend();
  Suspend(const Suspend&) = delete;
  Suspend& operator=(const Suspend&) = delete;
};

}  // namespace counters

/// Captures the counter delta over its lifetime.
class OpScope {
 public:
  OpScope() : start_(counters::current()) {}
  OpCounts delta() const { return counters::current() - start_; }

 private:
  OpCounts start_;
};

#define CAVSEC_COUNT(field)                                   \
  do {                                                        \
    if (!::cavsec::counters::suspended()) ++::cavsec::counters::tally().field; \
  } while (0)

}  // namespace cavsec
