#include "cavsec/sym.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/kdf.h>
#include <openssl/sha.h>

#include <memory>

#include "cavsec/counters.hpp"
#include "cavsec/group.hpp"
#include "cavsec/ibs.hpp"

namespace cavsec {

namespace {

struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
struct PkeyCtxFree {
  void operator()(EVP_PKEY_CTX* c) const { EVP_PKEY_CTX_free(c); }
};

const EVP_CIPHER* gcm_for(const SymKey& key) {
  switch (key.bytes().size()) {
    case 16: return EVP_aes_128_gcm();
    case 32: return EVP_aes_256_gcm();
    default: throw std::invalid_argument("cipher key must be 16 or 32 bytes");
  }
}

void check(int ok, const char* what) {
  if (ok != 1) throw std::runtime_error(std::string("openssl: ") + what);
}

Bytes hmac_sha256(ByteView key, ByteView data) {
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
            out.data(), &len))
    throw std::runtime_error("openssl: HMAC");
  out.resize(len);
  return out;
}

}  // namespace

std::size_t key_length(KeyRole role) { return role == KeyRole::data_key ? 32 : 16; }

std::string_view key_role_name(KeyRole role) {
  switch (role) {
    case KeyRole::ck: return "CK";
    case KeyRole::ik: return "IK";
    case KeyRole::ak: return "AK";
    case KeyRole::sek: return "SEK";
    case KeyRole::ltk_sa_ecu: return "K_SA_ECU";
    case KeyRole::ltk_oem_ecu: return "K_OEM_ECU";
    case KeyRole::data_key: return "DataKey";
  }
  return "?";
}

SymKey::SymKey(KeyRole role, Bytes bytes) : role_(role), bytes_(std::move(bytes)) {
  if (bytes_.size() != key_length(role))
    throw std::invalid_argument("key length does not match role " +
                                std::string(key_role_name(role)));
}

SymKey SymKey::random(KeyRole role, Rng& rng) { return SymKey(role, rng.bytes(key_length(role))); }

Bytes prf(const SymKey& key, ByteView data, MacProfile profile) {
  CAVSEC_COUNT(hash);
  Bytes tag = hmac_sha256(key.bytes(), data);
  if (profile == MacProfile::in_vehicle) tag.resize(kMacBytesInVehicle);
  return tag;
}

Bytes frame_mac(ByteView key, ByteView data) {
  Bytes tag = hmac_sha256(key, data);
  tag.resize(kMacBytesInVehicle);
  return tag;
}

Bytes hash(ByteView data) {
  CAVSEC_COUNT(hash);
  Bytes out(SHA256_DIGEST_LENGTH);
  SHA256(data.data(), data.size(), out.data());
  return out;
}

bool tags_equal(ByteView a, ByteView b) {
  return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

Bytes sym_encrypt(const SymKey& key, ByteView plaintext, ByteView nonce) {
  if (nonce.size() != kNonceBytes) throw std::invalid_argument("nonce must be 12 bytes");
  CAVSEC_COUNT(cipher);
  std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree> ctx(EVP_CIPHER_CTX_new());
  check(EVP_EncryptInit_ex(ctx.get(), gcm_for(key), nullptr, key.bytes().data(), nonce.data()),
        "EncryptInit");
  Bytes out(plaintext.size() + kCipherOverhead);
  int len = 0;
  if (!plaintext.empty())
    check(EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                            static_cast<int>(plaintext.size())),
          "EncryptUpdate");
  int fin = 0;
  check(EVP_EncryptFinal_ex(ctx.get(), out.data() + len, &fin), "EncryptFinal");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kCipherOverhead,
                            out.data() + plaintext.size()),
        "GetTag");
  return out;
}

Bytes sym_decrypt(const SymKey& key, ByteView ciphertext, ByteView nonce) {
  if (nonce.size() != kNonceBytes) throw std::invalid_argument("nonce must be 12 bytes");
  CAVSEC_COUNT(cipher);
  if (ciphertext.size() < kCipherOverhead) throw IntegrityError("ciphertext shorter than tag");
  const std::size_t body = ciphertext.size() - kCipherOverhead;
  std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree> ctx(EVP_CIPHER_CTX_new());
  check(EVP_DecryptInit_ex(ctx.get(), gcm_for(key), nullptr, key.bytes().data(), nonce.data()),
        "DecryptInit");
  Bytes out(body);
  int len = 0;
  if (body > 0)
    check(EVP_DecryptUpdate(ctx.get(), out.data(), &len, ciphertext.data(), static_cast<int>(body)),
          "DecryptUpdate");
  Bytes tag(ciphertext.begin() + static_cast<std::ptrdiff_t>(body), ciphertext.end());
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kCipherOverhead, tag.data()),
        "SetTag");
  int fin = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len, &fin) != 1)
    throw IntegrityError("authentication tag mismatch");
  return out;
}

std::string_view kdf_label(KdfContext ctx) {
  switch (ctx) {
    case KdfContext::data_key: return "cavsec kdf data-key";
    case KdfContext::pid_mask: return "cavsec kdf pid-mask";
    case KdfContext::em_transport: return "cavsec kdf em-transport";
  }
  return "";
}

std::vector<std::string_view> registered_labels() {
  std::vector<std::string_view> out = {kdf_label(KdfContext::data_key),
                                       kdf_label(KdfContext::pid_mask),
                                       kdf_label(KdfContext::em_transport)};
  for (auto d : {H1Domain::identity_key, H1Domain::message_sig, H1Domain::cn_token,
                 H1Domain::user_token})
    out.push_back(h1_label(d));
  return out;
}

Bytes kdf_bytes(ByteView input, KdfContext ctx, std::size_t length) {
  CAVSEC_COUNT(kdf);
  std::unique_ptr<EVP_PKEY_CTX, PkeyCtxFree> pctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
  const auto label = kdf_label(ctx);
  // HKDF rejects an empty IKM pointer; feed a single zero byte for empty input.
  static const std::uint8_t kZero = 0;
  const std::uint8_t* ikm = input.empty() ? &kZero : input.data();
  const int ikm_len = input.empty() ? 1 : static_cast<int>(input.size());
  check(EVP_PKEY_derive_init(pctx.get()), "derive_init");
  check(EVP_PKEY_CTX_set_hkdf_md(pctx.get(), EVP_sha256()), "hkdf_md");
  check(EVP_PKEY_CTX_set1_hkdf_key(pctx.get(), ikm, ikm_len), "hkdf_key");
  check(EVP_PKEY_CTX_add1_hkdf_info(pctx.get(), reinterpret_cast<const unsigned char*>(label.data()),
                                    static_cast<int>(label.size())),
        "hkdf_info");
  Bytes out(length);
  std::size_t out_len = length;
  check(EVP_PKEY_derive(pctx.get(), out.data(), &out_len), "derive");
  return out;
}

SymKey kdf(ByteView input, KdfContext ctx, KeyRole role) {
  return SymKey(role, kdf_bytes(input, ctx, key_length(role)));
}

SymKey kdf(const GroupElement& input, KdfContext ctx, KeyRole role) {
  return kdf(input.encode(), ctx, role);
}

}  // namespace cavsec
