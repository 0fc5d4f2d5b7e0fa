#pragma once

// Identity-based signatures with offline precomputation and outsourced
// nonce exponentiation.
//
//   KeyGen:     B = g^beta, kappa = beta + H1(B, id) * x
//   Sign:       Y = g^y, z = y + h * kappa,               h = H1(Y, B, M)
//   Offline:    Y = g^y, g^{1/omega}
//   Out.Sign1:  Y' = Y^{x_t}                               (run by the assistant)
//   Out.Sign2:  z = x_t * y + h * kappa, z = X + Ysplit,   h = H1(Y', B, M)
//               publishes omega * X instead of X
//   Verify:     g^z == Y * B^h * (X^{H1(B, id)})^h

#include <functional>
#include <string_view>
#include <variant>
#include <vector>

#include "cavsec/group.hpp"

namespace cavsec {

/// Hash-to-scalar call sites. Each has its own domain label.
enum class H1Domain { identity_key, message_sig, cn_token, user_token };

std::string_view h1_label(H1Domain domain);

using H1Parts = std::vector<Bytes>;
using H1Function = std::function<Scalar(H1Domain, const H1Parts&)>;

/// SHA-256 in counter mode expanded to 512 bits, reduced mod q. Input is the
/// domain label followed by length-prefixed parts.
H1Function default_h1(Group group);

struct IbsPublicKey {
  Group group;
  GroupElement X;
  H1Function h1_fn;

  /// Counted as one hash.
  Scalar h1(H1Domain domain, const H1Parts& parts) const;
  Bytes encode() const { return X.encode(); }
};

struct IbsMasterKeys {
  IbsPublicKey mspk;
  Scalar x;
};

struct IbsSigningKey {
  GroupElement B;
  Scalar kappa;

  /// g^kappa == B * X^{H1(B, id)}.
  bool valid_for(const IbsPublicKey& mspk, ByteView id) const;
  Bytes encode() const;
  static IbsSigningKey decode(Group group, ByteView data);
};

/// Signer-side precomputation. Move-only: omega never leaves the signer.
class OfflineSignState {
 public:
  OfflineSignState(Scalar y, GroupElement Y, Scalar omega, GroupElement g_inv_omega)
      : y_(std::move(y)), Y_(std::move(Y)), omega_(std::move(omega)),
        g_inv_omega_(std::move(g_inv_omega)) {}
  OfflineSignState(OfflineSignState&&) = default;
  OfflineSignState& operator=(OfflineSignState&&) = default;
  OfflineSignState(const OfflineSignState&) = delete;
  OfflineSignState& operator=(const OfflineSignState&) = delete;

  const Scalar& y() const { return y_; }
  const GroupElement& Y() const { return Y_; }
  const Scalar& omega() const { return omega_; }
  const GroupElement& g_inv_omega() const { return g_inv_omega_; }

 private:
  Scalar y_;
  GroupElement Y_;
  Scalar omega_;
  GroupElement g_inv_omega_;
};

struct DirectSignature {
  GroupElement Y;
  GroupElement B;
  Scalar z;
  friend bool operator==(const DirectSignature&, const DirectSignature&) = default;
};

struct OutsourcedSignature {
  GroupElement Yp;
  GroupElement B;
  Scalar wX;  // omega * X mod q
  GroupElement g_inv_omega;
  Scalar Ysplit;
  friend bool operator==(const OutsourcedSignature&, const OutsourcedSignature&) = default;
};

struct IbsSignature {
  std::variant<DirectSignature, OutsourcedSignature> body;

  bool outsourced() const { return std::holds_alternative<OutsourcedSignature>(body); }
  const GroupElement& B() const;
  /// Y for direct, Y' for outsourced.
  const GroupElement& nonce() const;

  /// Variant byte (0x01 direct, 0x02 outsourced) then fixed-width fields.
  Bytes encode() const;
  static IbsSignature decode(Group group, ByteView data);
  static IbsSignature decode_trusted(Group group, ByteView data);
  friend bool operator==(const IbsSignature&, const IbsSignature&) = default;
};

IbsMasterKeys ibs_setup(Group group, Rng& rng, H1Function h1 = {});
IbsMasterKeys ibs_setup_with(Group group, Scalar x, H1Function h1 = {});

IbsSigningKey ibs_keygen(const IbsMasterKeys& mk, ByteView id, Rng& rng);
IbsSigningKey ibs_keygen_with(const IbsMasterKeys& mk, ByteView id, const Scalar& beta);

IbsSignature ibs_sign(const IbsPublicKey& mspk, const IbsSigningKey& key, ByteView msg, Rng& rng);
IbsSignature ibs_sign_with(const IbsPublicKey& mspk, const IbsSigningKey& key, ByteView msg,
                           const Scalar& y);

OfflineSignState ibs_offline_sign(const IbsPublicKey& mspk, Rng& rng);
OfflineSignState ibs_offline_sign_with(const IbsPublicKey& mspk, const Scalar& y,
                                       const Scalar& omega);

/// Throws std::invalid_argument when x_t is zero.
GroupElement ibs_out_sign1(const GroupElement& Y, const Scalar& x_t);

IbsSignature ibs_out_sign2(const IbsPublicKey& mspk, const IbsSigningKey& key,
                           const OfflineSignState& st, const Scalar& x_t, const GroupElement& Yp,
                           ByteView msg, Rng& rng);
IbsSignature ibs_out_sign2_with(const IbsPublicKey& mspk, const IbsSigningKey& key,
                                const OfflineSignState& st, const Scalar& x_t,
                                const GroupElement& Yp, ByteView msg, const Scalar& x_split);

bool ibs_verify(const IbsPublicKey& mspk, ByteView id, const IbsSignature& sig, ByteView msg);

struct BatchItem {
  Bytes id;
  IbsSignature sig;
  Bytes msg;
};

/// One aggregated check over all items. Throws std::invalid_argument when empty.
bool ibs_batch_verify(const IbsPublicKey& mspk, const std::vector<BatchItem>& items);

}  // namespace cavsec
