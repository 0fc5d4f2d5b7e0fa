#pragma once

// Shared fixtures for the unit tests: the p=23 toy group, the fixed
// hash-to-scalar stub used by the known-answer vectors, and small hand-rolled
// generators for property checks.

#include <cstdint>
#include <vector>

#include "cavsec/abe.hpp"
#include "cavsec/group.hpp"
#include "cavsec/ibs.hpp"
#include "cavsec/random.hpp"

namespace cavsec::testing {

inline const Group& toy() {
  static const Group g = GroupParams::toy();
  return g;
}

inline const Group& test_group() {
  static const Group g = GroupParams::generate(SecurityProfile::test, 1);
  return g;
}

inline GroupElement el(long v) { return GroupElement::from_integer(toy(), v); }
inline Scalar sc(long v) { return Scalar(toy(), v); }

/// identity -> 5, message -> 7, cn token -> 4, user token -> 9.
inline H1Function toy_h1() {
  return [](H1Domain d, const H1Parts&) {
    switch (d) {
      case H1Domain::identity_key: return sc(5);
      case H1Domain::message_sig: return sc(7);
      case H1Domain::cn_token: return sc(4);
      case H1Domain::user_token: return sc(9);
    }
    return sc(0);
  };
}

/// Uniform ternary policy of length n with at least one +1.
inline Policy random_policy(Rng& rng, std::size_t n) {
  for (;;) {
    std::vector<int> marks(n);
    bool any = false;
    for (auto& m : marks) {
      m = static_cast<int>(rng.next_u64() % 3) - 1;
      any |= m == 1;
    }
    if (any) return Policy(marks);
  }
}

inline AttributeSet random_attrs(Rng& rng, std::size_t n) {
  const std::uint64_t full = n >= 64 ? ~0ull : (1ull << n) - 1;
  for (;;) {
    std::uint64_t mask = rng.next_u64() & full;
    if (mask) return AttributeSet::from_mask(mask, n);
  }
}

/// Smallest attribute set satisfying the policy: exactly the required indices.
inline AttributeSet required_set(const Policy& p) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p.at(i) == Mark::required) idx.push_back(i);
  return AttributeSet(idx, p.size());
}

inline Bytes random_bytes(Rng& rng, std::size_t max_len) {
  return rng.bytes(static_cast<std::size_t>(rng.next_u64() % (max_len + 1)));
}

}  // namespace cavsec::testing
