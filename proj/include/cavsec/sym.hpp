#pragma once

// Symmetric primitives: keyed PRF (HMAC-SHA256), unkeyed hash (SHA-256),
// AEAD cipher (AES-GCM) and key derivation (HKDF-SHA256).
//
// Profile constants:
//   prf tag         32 bytes (v2x), 16 bytes (in_vehicle, leading bytes)
//   cipher nonce    12 bytes
//   cipher overhead 16 bytes (GCM tag appended to the ciphertext)
//   key lengths     16 bytes for CK/IK/AK/SEK/long-term keys, 32 for DataKey

#include <stdexcept>
#include <string_view>
#include <vector>

#include "cavsec/bytes.hpp"
#include "cavsec/random.hpp"

namespace cavsec {

class GroupElement;

enum class KeyRole { ck, ik, ak, sek, ltk_sa_ecu, ltk_oem_ecu, data_key };

std::size_t key_length(KeyRole role);
std::string_view key_role_name(KeyRole role);

class SymKey {
 public:
  SymKey() = default;
  /// Throws std::invalid_argument when the length does not fit the role.
  SymKey(KeyRole role, Bytes bytes);
  static SymKey random(KeyRole role, Rng& rng);

  KeyRole role() const { return role_; }
  const Bytes& bytes() const { return bytes_; }

  friend bool operator==(const SymKey&, const SymKey&) = default;

 private:
  KeyRole role_ = KeyRole::sek;
  Bytes bytes_;
};

enum class MacProfile { v2x, in_vehicle };

constexpr std::size_t kMacBytesV2x = 32;
constexpr std::size_t kMacBytesInVehicle = 16;
constexpr std::size_t kNonceBytes = 12;
constexpr std::size_t kCipherOverhead = 16;
constexpr std::size_t kHashBytes = 32;

/// Counted as one hash.
Bytes prf(const SymKey& key, ByteView data, MacProfile profile = MacProfile::v2x);
/// Uncounted keyed tag, used for link-layer frame authentication.
Bytes frame_mac(ByteView key, ByteView data);
/// Unkeyed SHA-256. Counted as one hash.
Bytes hash(ByteView data);

/// Constant-time comparison.
bool tags_equal(ByteView a, ByteView b);

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// AES-GCM (AES-128 or AES-256 by key length). Counted as one cipher call.
Bytes sym_encrypt(const SymKey& key, ByteView plaintext, ByteView nonce);
/// Throws IntegrityError when the tag does not verify.
Bytes sym_decrypt(const SymKey& key, ByteView ciphertext, ByteView nonce);

/// Derivation contexts. Each has a distinct label.
enum class KdfContext { data_key, pid_mask, em_transport };

std::string_view kdf_label(KdfContext ctx);
/// All domain labels used anywhere in the library (kdf contexts and
/// hash-to-scalar domains), for the uniqueness check.
std::vector<std::string_view> registered_labels();

/// HKDF-SHA256. Counted as one kdf.
Bytes kdf_bytes(ByteView input, KdfContext ctx, std::size_t length);
SymKey kdf(ByteView input, KdfContext ctx, KeyRole role);
SymKey kdf(const GroupElement& input, KdfContext ctx, KeyRole role);

}  // namespace cavsec
