#include "cavsec/random.hpp"

#include <openssl/sha.h>

#include <stdexcept>

namespace cavsec {

Rng::Rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  engine_.seed(seq);
}

std::uint64_t Rng::next_u64() { return engine_(); }

Bytes Rng::bytes(std::size_t n) {
  Bytes out(n);
  std::size_t i = 0;
  while (i < n) {
    std::uint64_t w = engine_();
    for (int k = 0; k < 8 && i < n; ++k, ++i) out[i] = static_cast<std::uint8_t>(w >> (8 * k));
  }
  return out;
}

mpz_class Rng::below(const mpz_class& bound) {
  if (bound <= 0) throw std::invalid_argument("Rng::below: bound must be positive");
  const std::size_t bits = mpz_sizeinbase(bound.get_mpz_t(), 2);
  const std::size_t nbytes = (bits + 7) / 8;
  const unsigned excess = static_cast<unsigned>(nbytes * 8 - bits);
  mpz_class v;
  do {
    Bytes b = bytes(nbytes);
    b[0] &= static_cast<std::uint8_t>(0xff >> excess);
    mpz_import(v.get_mpz_t(), b.size(), 1, 1, 1, 0, b.data());
  } while (v >= bound);
  return v;
}

mpz_class Rng::nonzero_below(const mpz_class& bound) {
  if (bound <= 1) throw std::invalid_argument("Rng::nonzero_below: bound must exceed 1");
  mpz_class v;
  do {
    v = below(bound);
  } while (v == 0);
  return v;
}

Rng Rng::fork(std::string_view label) {
  Bytes material = to_bytes(label);
  put_u64(material, next_u64());
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(material.data(), material.size(), digest);
  std::uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) seed = (seed << 8) | digest[i];
  return Rng(seed);
}

}  // namespace cavsec
