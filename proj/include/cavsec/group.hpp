#pragma once

// Prime-order subgroup arithmetic.
//
// All computation happens in the order-q subgroup of Z_p^* (q | p-1) generated
// by g. Exponents live in Z_q. Arithmetic is NOT constant time; this library is
// a simulation and measurement artifact, not hardened production crypto.

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include <gmpxx.h>

#include "cavsec/bytes.hpp"
#include "cavsec/random.hpp"

namespace cavsec {

enum class SecurityProfile {
  test,      // |p| = 512, |q| = 160
  standard,  // |p| = 3072, |q| = 256
};

SecurityProfile parse_profile(std::string_view name);
std::string_view profile_name(SecurityProfile profile);

/// Raised when elements or scalars from different parameter sets meet.
class ParamsMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GroupParams;
using Group = std::shared_ptr<const GroupParams>;

class GroupParams {
 public:
  /// Validates p, q prime (error < 2^-80), q | p-1, g in [2, p-1], g^q = 1.
  /// Throws std::invalid_argument on any violation.
  static Group create(mpz_class p, mpz_class q, mpz_class g);

  /// Reproducible parameter generation: the same (profile, seed) always
  /// yields the same parameters.
  static Group generate(SecurityProfile profile, std::uint64_t seed);

  /// p = 23, q = 11, g = 4. Only for known-answer tests.
  static Group toy();

  const mpz_class& p() const { return p_; }
  const mpz_class& q() const { return q_; }
  const mpz_class& g() const { return g_; }

  std::size_t p_bits() const;
  std::size_t q_bits() const;
  /// ceil(|p| / 8): width of an encoded group element.
  std::size_t element_bytes() const { return element_bytes_; }
  /// ceil(|q| / 8): width of an encoded scalar.
  std::size_t scalar_bytes() const { return scalar_bytes_; }

  /// 1 <= v < p and v^q = 1. Not instrumented.
  bool contains(const mpz_class& v) const;

  /// "p=<hex>\nq=<hex>\ng=<hex>\n", lowercase hex.
  std::string to_text() const;
  static Group from_text(std::string_view text);

  bool same_values(const GroupParams& other) const;

 private:
  GroupParams(mpz_class p, mpz_class q, mpz_class g);

  mpz_class p_, q_, g_;
  std::size_t element_bytes_ = 0;
  std::size_t scalar_bytes_ = 0;
};

/// Throws ParamsMismatch unless both handles describe the same group.
void require_same_group(const Group& a, const Group& b);

class Scalar {
 public:
  Scalar() = default;
  Scalar(Group group, long value);

  /// Reduces any integer (including negative) into [0, q).
  static Scalar from_integer(Group group, const mpz_class& value);
  static Scalar zero(Group group) { return Scalar(std::move(group), 0); }
  static Scalar one(Group group) { return Scalar(std::move(group), 1); }
  /// Uniform in [0, q).
  static Scalar random(Group group, Rng& rng);
  /// Uniform in [1, q).
  static Scalar random_nonzero(Group group, Rng& rng);

  /// Fixed-width big-endian decode; rejects values >= q.
  static Scalar decode(Group group, ByteView data);
  Bytes encode() const;

  const mpz_class& value() const { return v_; }
  const Group& group() const { return group_; }
  bool is_zero() const { return v_ == 0; }

  Scalar operator+(const Scalar& o) const;
  Scalar operator-(const Scalar& o) const;
  Scalar operator-() const;
  /// Counted as one scalar multiplication.
  Scalar operator*(const Scalar& o) const;
  /// Counted as one scalar inversion. Throws std::domain_error on zero.
  Scalar inverse() const;

  friend bool operator==(const Scalar& a, const Scalar& b);

 private:
  Scalar(Group group, mpz_class reduced, int);

  Group group_;
  mpz_class v_;
};

class GroupElement {
 public:
  GroupElement() = default;

  static GroupElement identity(Group group);
  static GroupElement generator(Group group);
  /// Checked construction: throws DecodeError when v is not a subgroup member.
  static GroupElement from_integer(Group group, const mpz_class& value);
  /// Uniformly random non-identity element. Counted under `sample`; the
  /// exponentiation it needs is not counted as `exp`.
  static GroupElement random(Group group, Rng& rng);

  /// Fixed-width big-endian decode with subgroup validation (counted under
  /// `member_check`). Throws DecodeError on bad width, range, or membership.
  static GroupElement decode(Group group, ByteView data);
  /// Range-checked decode for data already authenticated by a trusted peer.
  static GroupElement decode_trusted(Group group, ByteView data);
  Bytes encode() const;

  const mpz_class& value() const { return v_; }
  const Group& group() const { return group_; }
  bool is_identity() const { return v_ == 1; }

  /// Counted as one group multiplication.
  GroupElement operator*(const GroupElement& o) const;
  /// Counted as one group inversion.
  GroupElement inverse() const;
  /// Counted as one exponentiation.
  GroupElement pow(const Scalar& e) const;

  friend bool operator==(const GroupElement& a, const GroupElement& b);

 private:
  GroupElement(Group group, mpz_class value);

  Group group_;
  mpz_class v_;
};

inline GroupElement exp(const GroupElement& base, const Scalar& e) { return base.pow(e); }
inline GroupElement mul(const GroupElement& a, const GroupElement& b) { return a * b; }
inline GroupElement inv(const GroupElement& a) { return a.inverse(); }

/// Fixed-width big-endian export of a non-negative integer.
Bytes export_fixed(const mpz_class& v, std::size_t width);
mpz_class import_bytes(ByteView data);

}  // namespace cavsec
