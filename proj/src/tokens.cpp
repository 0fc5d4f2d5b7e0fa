#include "cavsec/tokens.hpp"

#include "cavsec/counters.hpp"

namespace cavsec {

namespace {

Bytes u64_bytes(std::uint64_t v) {
  Bytes b;
  put_u64(b, v);
  return b;
}

Scalar cn_hash(const IbsPublicKey& mspk, const GroupElement& U, std::uint64_t t_exp, ByteView pid) {
  return mspk.h1(H1Domain::cn_token, {U.encode(), u64_bytes(t_exp), Bytes(pid.begin(), pid.end())});
}

Scalar user_hash(const IbsPublicKey& mspk, const GroupElement& U, std::uint64_t t_cur) {
  return mspk.h1(H1Domain::user_token, {U.encode(), u64_bytes(t_cur)});
}

}  // namespace

PseudoIdentity make_pid(ByteView real_id, const GroupElement& y_cn, const Scalar& alpha) {
  const auto shared = y_cn.pow(alpha);
  const Bytes mask = kdf_bytes(shared.encode(), KdfContext::pid_mask, real_id.size());
  return PseudoIdentity{xor_bytes(real_id, mask), GroupElement::generator(y_cn.group()).pow(alpha)};
}

Bytes recover_real_id(ByteView pid, const GroupElement& alpha_pub, const Scalar& x_cn) {
  const auto shared = alpha_pub.pow(x_cn);
  return xor_bytes(pid, kdf_bytes(shared.encode(), KdfContext::pid_mask, pid.size()));
}

Bytes ver_id(const SymKey& ak, const GroupElement& shared) {
  return hash(xor_bytes(ak.bytes(), hash(shared.encode())));
}

Bytes CnToken::encode() const {
  ByteWriter w;
  w.raw(U.encode()).u64(t_exp).raw(z.encode());
  return std::move(w).bytes();
}

CnToken CnToken::decode(Group group, ByteView data) {
  ByteReader r(data);
  CnToken t;
  t.U = GroupElement::decode(group, r.raw(group->element_bytes()));
  t.t_exp = r.u64();
  t.z = Scalar::decode(group, r.raw(group->scalar_bytes()));
  r.expect_done();
  return t;
}

Bytes UserToken::encode() const {
  ByteWriter w;
  w.raw(U.encode()).u64(t_exp).raw(z_sum.encode()).raw(W.encode()).raw(B.encode()).u64(t_cur);
  return std::move(w).bytes();
}

UserToken UserToken::decode(Group group, ByteView data) {
  ByteReader r(data);
  const std::size_t ew = group->element_bytes();
  UserToken t;
  t.U = GroupElement::decode(group, r.raw(ew));
  t.t_exp = r.u64();
  t.z_sum = Scalar::decode(group, r.raw(group->scalar_bytes()));
  t.W = GroupElement::decode(group, r.raw(ew));
  t.B = GroupElement::decode(group, r.raw(ew));
  t.t_cur = r.u64();
  r.expect_done();
  return t;
}

CnToken issue_cn_token(const IbsPublicKey& mspk, const Scalar& x_cn, ByteView pid,
                       std::uint64_t t_exp, Rng& rng) {
  return issue_cn_token_with(mspk, x_cn, pid, t_exp, Scalar::random_nonzero(mspk.group, rng));
}

CnToken issue_cn_token_with(const IbsPublicKey& mspk, const Scalar& x_cn, ByteView pid,
                            std::uint64_t t_exp, const Scalar& u) {
  CnToken t;
  t.U = GroupElement::generator(mspk.group).pow(u);
  t.t_exp = t_exp;
  t.z = u + x_cn * cn_hash(mspk, t.U, t_exp, pid);
  return t;
}

bool verify_cn_token(const IbsPublicKey& mspk, const GroupElement& y_cn, ByteView pid,
                     const CnToken& tok) {
  const auto g = GroupElement::generator(mspk.group);
  return g.pow(tok.z) == tok.U * y_cn.pow(cn_hash(mspk, tok.U, tok.t_exp, pid));
}

UserToken derive_user_token(const IbsPublicKey& mspk, const CnToken& cn,
                            const IbsSigningKey& signer, std::uint64_t t_cur, Rng& rng) {
  return derive_user_token_with(mspk, cn, signer, t_cur, Scalar::random_nonzero(mspk.group, rng));
}

UserToken derive_user_token_with(const IbsPublicKey& mspk, const CnToken& cn,
                                 const IbsSigningKey& signer, std::uint64_t t_cur,
                                 const Scalar& w) {
  if (t_cur > cn.t_exp) throw TokenExpired("core-network token expired");
  UserToken t;
  t.U = cn.U;
  t.t_exp = cn.t_exp;
  t.W = GroupElement::generator(mspk.group).pow(w);
  t.B = signer.B;
  t.t_cur = t_cur;
  t.z_sum = cn.z + w + user_hash(mspk, cn.U, t_cur) * signer.kappa;
  return t;
}

std::string_view verdict_name(TokenVerdict v) {
  switch (v) {
    case TokenVerdict::accepted: return "accepted";
    case TokenVerdict::expired: return "expired";
    case TokenVerdict::stale: return "stale";
    case TokenVerdict::equation_failed: return "equation_failed";
  }
  return "?";
}

TokenVerdict verify_user_token(const UserToken& tok, const IbsPublicKey& mspk,
                               const GroupElement& y_cn, ByteView pid, std::uint64_t now,
                               std::uint64_t skew) {
  if (now > tok.t_exp) return TokenVerdict::expired;
  const std::uint64_t drift = now > tok.t_cur ? now - tok.t_cur : tok.t_cur - now;
  if (drift > skew) return TokenVerdict::stale;

  const auto g = GroupElement::generator(mspk.group);
  const Scalar h_cn = cn_hash(mspk, tok.U, tok.t_exp, pid);
  const Scalar h_id = mspk.h1(H1Domain::identity_key, {tok.B.encode(), Bytes(pid.begin(), pid.end())});
  const Scalar h_cur = user_hash(mspk, tok.U, tok.t_cur);
  const GroupElement signer_pub = tok.B * mspk.X.pow(h_id);
  const GroupElement rhs = tok.U * tok.W * y_cn.pow(h_cn) * signer_pub.pow(h_cur);
  return g.pow(tok.z_sum) == rhs ? TokenVerdict::accepted : TokenVerdict::equation_failed;
}

}  // namespace cavsec
