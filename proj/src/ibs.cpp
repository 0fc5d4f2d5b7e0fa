#include "cavsec/ibs.hpp"

#include <openssl/sha.h>

#include <map>
#include <stdexcept>

#include "cavsec/counters.hpp"

namespace cavsec {

namespace {

constexpr std::uint8_t kDirect = 0x01;
constexpr std::uint8_t kOutsourced = 0x02;

Bytes h1_input(H1Domain domain, const H1Parts& parts) {
  ByteWriter w;
  w.var(to_bytes(h1_label(domain)));
  for (const auto& p : parts) w.var(p);
  return std::move(w).bytes();
}

Scalar message_hash(const IbsPublicKey& mspk, const GroupElement& nonce, const GroupElement& B,
                    ByteView msg) {
  return mspk.h1(H1Domain::message_sig, {nonce.encode(), B.encode(), Bytes(msg.begin(), msg.end())});
}

Scalar identity_hash(const IbsPublicKey& mspk, const GroupElement& B, ByteView id) {
  return mspk.h1(H1Domain::identity_key, {B.encode(), Bytes(id.begin(), id.end())});
}

IbsSignature decode_sig(const Group& group, ByteView data, bool trusted) {
  ByteReader r(data);
  const std::size_t ew = group->element_bytes();
  const std::size_t sw = group->scalar_bytes();
  auto elem = [&] {
    auto raw = r.raw(ew);
    return trusted ? GroupElement::decode_trusted(group, raw) : GroupElement::decode(group, raw);
  };
  auto scalar = [&] { return Scalar::decode(group, r.raw(sw)); };
  IbsSignature sig;
  switch (r.u8()) {
    case kDirect: {
      DirectSignature d;
      d.Y = elem();
      d.B = elem();
      d.z = scalar();
      sig.body = std::move(d);
      break;
    }
    case kOutsourced: {
      OutsourcedSignature o;
      o.Yp = elem();
      o.B = elem();
      o.wX = scalar();
      o.g_inv_omega = elem();
      o.Ysplit = scalar();
      sig.body = std::move(o);
      break;
    }
    default: throw DecodeError("unknown signature variant");
  }
  r.expect_done();
  return sig;
}

}  // namespace

std::string_view h1_label(H1Domain domain) {
  switch (domain) {
    case H1Domain::identity_key: return "cavsec h1 identity-key";
    case H1Domain::message_sig: return "cavsec h1 message-sig";
    case H1Domain::cn_token: return "cavsec h1 cn-token";
    case H1Domain::user_token: return "cavsec h1 user-token";
  }
  return "";
}

H1Function default_h1(Group group) {
  return [group](H1Domain domain, const H1Parts& parts) {
    const Bytes input = h1_input(domain, parts);
    Bytes wide;
    for (std::uint8_t ctr = 0; ctr < 2; ++ctr) {
      Bytes block = input;
      block.push_back(ctr);
      std::uint8_t digest[SHA256_DIGEST_LENGTH];
      SHA256(block.data(), block.size(), digest);
      wide.insert(wide.end(), digest, digest + SHA256_DIGEST_LENGTH);
    }
    return Scalar::from_integer(group, import_bytes(wide));
  };
}

Scalar IbsPublicKey::h1(H1Domain domain, const H1Parts& parts) const {
  CAVSEC_COUNT(hash);
  counters::Suspend quiet;
  return h1_fn(domain, parts);
}

bool IbsSigningKey::valid_for(const IbsPublicKey& mspk, ByteView id) const {
  counters::Suspend quiet;
  const auto g = GroupElement::generator(mspk.group);
  return g.pow(kappa) == B * mspk.X.pow(identity_hash(mspk, B, id));
}

Bytes IbsSigningKey::encode() const { return concat({B.encode(), kappa.encode()}); }

IbsSigningKey IbsSigningKey::decode(Group group, ByteView data) {
  ByteReader r(data);
  IbsSigningKey k;
  k.B = GroupElement::decode(group, r.raw(group->element_bytes()));
  k.kappa = Scalar::decode(group, r.raw(group->scalar_bytes()));
  r.expect_done();
  return k;
}

const GroupElement& IbsSignature::B() const {
  return std::visit([](const auto& s) -> const GroupElement& { return s.B; }, body);
}

const GroupElement& IbsSignature::nonce() const {
  if (auto d = std::get_if<DirectSignature>(&body)) return d->Y;
  return std::get<OutsourcedSignature>(body).Yp;
}

Bytes IbsSignature::encode() const {
  ByteWriter w;
  if (auto d = std::get_if<DirectSignature>(&body)) {
    w.u8(kDirect).raw(d->Y.encode()).raw(d->B.encode()).raw(d->z.encode());
  } else {
    const auto& o = std::get<OutsourcedSignature>(body);
    w.u8(kOutsourced)
        .raw(o.Yp.encode())
        .raw(o.B.encode())
        .raw(o.wX.encode())
        .raw(o.g_inv_omega.encode())
        .raw(o.Ysplit.encode());
  }
  return std::move(w).bytes();
}

IbsSignature IbsSignature::decode(Group group, ByteView data) {
  return decode_sig(group, data, false);
}

IbsSignature IbsSignature::decode_trusted(Group group, ByteView data) {
  return decode_sig(group, data, true);
}

IbsMasterKeys ibs_setup(Group group, Rng& rng, H1Function h1) {
  Scalar x = Scalar::random_nonzero(group, rng);
  return ibs_setup_with(std::move(group), std::move(x), std::move(h1));
}

IbsMasterKeys ibs_setup_with(Group group, Scalar x, H1Function h1) {
  if (x.is_zero()) throw std::invalid_argument("master signing secret must be nonzero");
  IbsMasterKeys mk;
  mk.mspk.group = group;
  mk.mspk.X = GroupElement::generator(group).pow(x);
  mk.mspk.h1_fn = h1 ? std::move(h1) : default_h1(group);
  mk.x = std::move(x);
  return mk;
}

IbsSigningKey ibs_keygen(const IbsMasterKeys& mk, ByteView id, Rng& rng) {
  return ibs_keygen_with(mk, id, Scalar::random_nonzero(mk.mspk.group, rng));
}

IbsSigningKey ibs_keygen_with(const IbsMasterKeys& mk, ByteView id, const Scalar& beta) {
  IbsSigningKey k;
  k.B = GroupElement::generator(mk.mspk.group).pow(beta);
  k.kappa = beta + identity_hash(mk.mspk, k.B, id) * mk.x;
  return k;
}

IbsSignature ibs_sign(const IbsPublicKey& mspk, const IbsSigningKey& key, ByteView msg, Rng& rng) {
  return ibs_sign_with(mspk, key, msg, Scalar::random_nonzero(mspk.group, rng));
}

IbsSignature ibs_sign_with(const IbsPublicKey& mspk, const IbsSigningKey& key, ByteView msg,
                           const Scalar& y) {
  DirectSignature d;
  d.Y = GroupElement::generator(mspk.group).pow(y);
  d.B = key.B;
  d.z = y + message_hash(mspk, d.Y, key.B, msg) * key.kappa;
  return IbsSignature{std::move(d)};
}

OfflineSignState ibs_offline_sign(const IbsPublicKey& mspk, Rng& rng) {
  Scalar y = Scalar::random_nonzero(mspk.group, rng);
  Scalar omega = Scalar::random_nonzero(mspk.group, rng);
  return ibs_offline_sign_with(mspk, y, omega);
}

OfflineSignState ibs_offline_sign_with(const IbsPublicKey& mspk, const Scalar& y,
                                       const Scalar& omega) {
  const auto g = GroupElement::generator(mspk.group);
  GroupElement Y = g.pow(y);
  GroupElement gio = g.pow(omega.inverse());
  return OfflineSignState(y, std::move(Y), omega, std::move(gio));
}

GroupElement ibs_out_sign1(const GroupElement& Y, const Scalar& x_t) {
  if (x_t.is_zero()) throw std::invalid_argument("out_sign1 needs a nonzero x_t");
  return Y.pow(x_t);
}

IbsSignature ibs_out_sign2(const IbsPublicKey& mspk, const IbsSigningKey& key,
                           const OfflineSignState& st, const Scalar& x_t, const GroupElement& Yp,
                           ByteView msg, Rng& rng) {
  return ibs_out_sign2_with(mspk, key, st, x_t, Yp, msg, Scalar::random(mspk.group, rng));
}

IbsSignature ibs_out_sign2_with(const IbsPublicKey& mspk, const IbsSigningKey& key,
                                const OfflineSignState& st, const Scalar& x_t,
                                const GroupElement& Yp, ByteView msg, const Scalar& x_split) {
  const Scalar h = message_hash(mspk, Yp, key.B, msg);
  const Scalar z = x_t * st.y() + h * key.kappa;
  OutsourcedSignature o;
  o.Yp = Yp;
  o.B = key.B;
  o.wX = st.omega() * x_split;
  o.g_inv_omega = st.g_inv_omega();
  o.Ysplit = z - x_split;
  return IbsSignature{std::move(o)};
}

bool ibs_verify(const IbsPublicKey& mspk, ByteView id, const IbsSignature& sig, ByteView msg) {
  const auto g = GroupElement::generator(mspk.group);
  GroupElement lhs;
  if (auto d = std::get_if<DirectSignature>(&sig.body)) {
    lhs = g.pow(d->z);
  } else {
    const auto& o = std::get<OutsourcedSignature>(sig.body);
    lhs = o.g_inv_omega.pow(o.wX) * g.pow(o.Ysplit);
  }
  const Scalar h = message_hash(mspk, sig.nonce(), sig.B(), msg);
  const Scalar hb = identity_hash(mspk, sig.B(), id);
  const GroupElement rhs = sig.nonce() * sig.B().pow(h) * mspk.X.pow(hb).pow(h);
  return lhs == rhs;
}

bool ibs_batch_verify(const IbsPublicKey& mspk, const std::vector<BatchItem>& items) {
  if (items.empty()) throw std::invalid_argument("batch verification needs at least one item");
  const Group& group = mspk.group;
  const auto g = GroupElement::generator(group);

  // Signers keyed by (id, B) so the aggregation order follows the sorted ids.
  struct Signer {
    GroupElement B;
    Scalar h_sum;
  };
  std::map<std::pair<Bytes, Bytes>, Signer> signers;
  std::map<Bytes, std::pair<GroupElement, Scalar>> blinds;
  Scalar z_sum = Scalar::zero(group);
  GroupElement nonce_product = GroupElement::identity(group);

  for (const auto& item : items) {
    const Scalar h = message_hash(mspk, item.sig.nonce(), item.sig.B(), item.msg);
    auto [it, fresh] = signers.try_emplace({item.id, item.sig.B().encode()},
                                           Signer{item.sig.B(), Scalar::zero(group)});
    it->second.h_sum = it->second.h_sum + h;
    nonce_product = nonce_product * item.sig.nonce();
    if (auto d = std::get_if<DirectSignature>(&item.sig.body)) {
      z_sum = z_sum + d->z;
    } else {
      const auto& o = std::get<OutsourcedSignature>(item.sig.body);
      z_sum = z_sum + o.Ysplit;
      auto [bt, new_blind] =
          blinds.try_emplace(o.g_inv_omega.encode(), o.g_inv_omega, Scalar::zero(group));
      bt->second.second = bt->second.second + o.wX;
    }
  }

  GroupElement lhs = g.pow(z_sum);
  for (const auto& [key, blind] : blinds) lhs = lhs * blind.first.pow(blind.second);

  GroupElement rhs = nonce_product;
  Scalar x_exponent = Scalar::zero(group);
  for (const auto& [key, s] : signers) {
    rhs = rhs * s.B.pow(s.h_sum);
    x_exponent = x_exponent + identity_hash(mspk, s.B, key.first) * s.h_sum;
  }
  rhs = rhs * mspk.X.pow(x_exponent);
  return lhs == rhs;
}

}  // namespace cavsec
