#pragma once

// Pseudo-identities and the two Schnorr-style authentication tokens.
//
//   PID        = ID xor kdf(y_CN^alpha)
//   CN token   = (U = g^u, T_exp, z = u + x_CN * H1(U, T_exp, PID))
//   user token = (U, T_exp, z_sum = z + w + H1(U, T_cur) * kappa, W = g^w, B, T_cur)
//
// A user token verifies when
//   g^z_sum == U * W * y_CN^{H1(U, T_exp, PID)} * (B * X^{H1(B, PID)})^{H1(U, T_cur)}

#include <cstdint>
#include <stdexcept>

#include "cavsec/group.hpp"
#include "cavsec/ibs.hpp"
#include "cavsec/sym.hpp"

namespace cavsec {

struct PseudoIdentity {
  Bytes pid;
  GroupElement alpha_pub;  // g^alpha
};

PseudoIdentity make_pid(ByteView real_id, const GroupElement& y_cn, const Scalar& alpha);
/// Core-network side: pid xor kdf((g^alpha)^x_CN).
Bytes recover_real_id(ByteView pid, const GroupElement& alpha_pub, const Scalar& x_cn);

/// H(AK xor H(shared)), XOR over the shorter length.
Bytes ver_id(const SymKey& ak, const GroupElement& shared);

struct CnToken {
  GroupElement U;
  std::uint64_t t_exp = 0;
  Scalar z;

  Bytes encode() const;
  static CnToken decode(Group group, ByteView data);
  friend bool operator==(const CnToken&, const CnToken&) = default;
};

struct UserToken {
  GroupElement U;
  std::uint64_t t_exp = 0;
  Scalar z_sum;
  GroupElement W;
  GroupElement B;
  std::uint64_t t_cur = 0;

  Bytes encode() const;
  static UserToken decode(Group group, ByteView data);
  friend bool operator==(const UserToken&, const UserToken&) = default;
};

class TokenExpired : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

CnToken issue_cn_token(const IbsPublicKey& mspk, const Scalar& x_cn, ByteView pid,
                       std::uint64_t t_exp, Rng& rng);
CnToken issue_cn_token_with(const IbsPublicKey& mspk, const Scalar& x_cn, ByteView pid,
                            std::uint64_t t_exp, const Scalar& u);
bool verify_cn_token(const IbsPublicKey& mspk, const GroupElement& y_cn, ByteView pid,
                     const CnToken& tok);

/// Throws TokenExpired when t_cur > cn.t_exp.
UserToken derive_user_token(const IbsPublicKey& mspk, const CnToken& cn,
                            const IbsSigningKey& signer, std::uint64_t t_cur, Rng& rng);
UserToken derive_user_token_with(const IbsPublicKey& mspk, const CnToken& cn,
                                 const IbsSigningKey& signer, std::uint64_t t_cur,
                                 const Scalar& w);

enum class TokenVerdict { accepted, expired, stale, equation_failed };

std::string_view verdict_name(TokenVerdict v);

constexpr std::uint64_t kDefaultSkewSeconds = 5;
constexpr std::uint64_t kDefaultTokenLifetime = 3600;

TokenVerdict verify_user_token(const UserToken& tok, const IbsPublicKey& mspk,
                               const GroupElement& y_cn, ByteView pid, std::uint64_t now,
                               std::uint64_t skew = kDefaultSkewSeconds);

}  // namespace cavsec
