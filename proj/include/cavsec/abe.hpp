#pragma once

// Attribute-based encryption with hidden ternary policies and an outsourced
// encryption pipeline.
//
//   Encrypt:        C = (g^r, {p_i * PK_i^r}, g_d^r)
//   Out.Encrypt1:   MO(v) = (g^v, {PK_i^v}, g_d^v)
//   Out.Encrypt2:   pC = MO(v_a) * MO(v_b)          (componentwise)
//   Select.Policy:  C = pC with B_i multiplied by the message tuple p_i
//   Decrypt:        m = prod_{i in S} B_i / (A^sk1 * D^sk2)
//
// Attribute indices are 0-based throughout the API.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cavsec/group.hpp"

namespace cavsec {

struct AbePublicKey {
  Group group;
  GroupElement g_d;
  std::vector<GroupElement> pk_attrs;

  std::size_t n() const { return pk_attrs.size(); }
  Bytes encode() const;
  static AbePublicKey decode(Group group, ByteView data);
};

struct AbeSecretKey {
  Scalar d;
  std::vector<Scalar> a;
};

struct AbeMasterKeys {
  AbePublicKey mpk;
  AbeSecretKey msk;
};

enum class Mark : std::int8_t { forbidden = -1, irrelevant = 0, required = 1 };

class AttributeSet;

class Policy {
 public:
  /// Entries must be -1, 0 or +1 and at least one must be +1.
  explicit Policy(std::vector<int> marks);
  /// "+0-" notation, one character per attribute.
  static Policy parse(std::string_view text);

  std::size_t size() const { return marks_.size(); }
  Mark at(std::size_t i) const { return marks_[i]; }
  /// Highest +1 index; carries the correcting tuple.
  std::size_t anchor() const { return anchor_; }

  bool satisfied_by(const AttributeSet& attrs) const;
  std::string to_string() const;

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  std::vector<Mark> marks_;
  std::size_t anchor_ = 0;
};

class AttributeSet {
 public:
  /// Non-empty, every index below `universe`. Duplicates are collapsed.
  AttributeSet(std::vector<std::size_t> indices, std::size_t universe);
  /// Bit i of `mask` selects attribute i.
  static AttributeSet from_mask(std::uint64_t mask, std::size_t universe);

  const std::vector<std::size_t>& indices() const { return idx_; }
  std::size_t universe() const { return universe_; }
  std::size_t size() const { return idx_.size(); }
  bool contains(std::size_t i) const;

  friend bool operator==(const AttributeSet&, const AttributeSet&) = default;

 private:
  std::vector<std::size_t> idx_;
  std::size_t universe_ = 0;
};

struct AbeUserKey {
  Scalar sk1;
  Scalar sk2;
  AttributeSet attrs;

  Bytes encode() const;
  static AbeUserKey decode(Group group, ByteView data);
};

struct AbeCiphertext {
  GroupElement A;
  std::vector<GroupElement> B;
  GroupElement D;

  Bytes encode() const;
  static AbeCiphertext decode(Group group, ByteView data);
  /// Range-checked only; for ciphertexts carried inside authenticated envelopes.
  static AbeCiphertext decode_trusted(Group group, ByteView data);
  friend bool operator==(const AbeCiphertext&, const AbeCiphertext&) = default;
};

struct PartialCiphertext {
  GroupElement mo1;
  std::vector<GroupElement> mo2;
  GroupElement mo3;

  Bytes encode() const;
  static PartialCiphertext decode(Group group, ByteView data);
  static PartialCiphertext decode_trusted(Group group, ByteView data);
  friend bool operator==(const PartialCiphertext&, const PartialCiphertext&) = default;
};

struct PreliminaryCiphertext {
  GroupElement A;
  std::vector<GroupElement> Bp;
  GroupElement D;

  Bytes encode() const;
  friend bool operator==(const PreliminaryCiphertext&, const PreliminaryCiphertext&) = default;
};

/// OEM-precomputed partial ciphertext installed on an ECU. Single use.
class EncryptionMaterial {
 public:
  EncryptionMaterial(std::uint64_t serial, PartialCiphertext mo)
      : serial_(serial), mo_(std::move(mo)) {}

  std::uint64_t serial() const { return serial_; }
  bool used() const { return used_; }
  /// Read-only view for inventory audits.
  const PartialCiphertext& peek() const { return mo_; }
  /// Throws std::logic_error on the second call.
  const PartialCiphertext& consume();

 private:
  std::uint64_t serial_;
  PartialCiphertext mo_;
  bool used_ = false;
};

AbeMasterKeys abe_setup(Group group, std::size_t n_attrs, Rng& rng);
/// Setup with the secret exponents supplied by the caller.
AbeMasterKeys abe_setup_with(Group group, std::vector<Scalar> a, Scalar d);

AbeUserKey abe_keygen(const AbeMasterKeys& mk, const AttributeSet& attrs, Rng& rng);
/// Keygen with explicit shares: share1[k] + share2[k] splits a_{attrs[k]}
/// only in aggregate, i.e. sum(share1) + sum(share2) must equal the sum of a_i.
AbeUserKey abe_keygen_with(const AbeMasterKeys& mk, const AttributeSet& attrs,
                           const std::vector<Scalar>& share1, const std::vector<Scalar>& share2,
                           const Scalar& s);

/// Message tuples p_i with prod over required indices equal to m. Runs with
/// op counting suspended (reported under `sample`).
std::vector<GroupElement> split_message(const AbePublicKey& mpk, const Policy& policy,
                                        const GroupElement& m, Rng& rng);
/// `draws` supplies, in index order, one non-identity element for every
/// required index except the anchor and for every forbidden index.
std::vector<GroupElement> split_message_with(const AbePublicKey& mpk, const Policy& policy,
                                             const GroupElement& m,
                                             const std::vector<GroupElement>& draws);
/// Number of elements `split_message_with` expects.
std::size_t split_draw_count(const Policy& policy);

AbeCiphertext abe_encrypt(const AbePublicKey& mpk, const Policy& policy, const GroupElement& m,
                          Rng& rng);
AbeCiphertext abe_encrypt_with(const AbePublicKey& mpk, const std::vector<GroupElement>& tuples,
                               const Scalar& r);

/// Throws std::invalid_argument when v is zero.
PartialCiphertext abe_out_encrypt1(const AbePublicKey& mpk, const Scalar& v);
PreliminaryCiphertext abe_out_encrypt2(const AbePublicKey& mpk, const PartialCiphertext& a,
                                       const PartialCiphertext& b);
AbeCiphertext abe_select_policy(const PreliminaryCiphertext& pc, const Policy& policy,
                                const GroupElement& m, Rng& rng);
AbeCiphertext abe_select_policy_with(const PreliminaryCiphertext& pc,
                                     const std::vector<GroupElement>& tuples);

/// Always returns an element; a key that does not satisfy the policy yields an
/// unrelated one.
GroupElement abe_decrypt(const AbeCiphertext& c, const AbeUserKey& key);

}  // namespace cavsec
