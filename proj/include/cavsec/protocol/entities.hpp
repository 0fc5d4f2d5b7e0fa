#pragma once

// Entity state machines. Each entity consumes one WireMessage at a time,
// verifies it, mutates its own state and returns the messages it emits.
// Failures are thrown as ProtocolError with a typed reason.
//
// Roles: cn (UDM/ARPF), obu (security assistant), ecu (ADAS is ECU index 0),
// and the V2X nodes rsu, ue, oem.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cavsec/abe.hpp"
#include "cavsec/ibs.hpp"
#include "cavsec/protocol/messages.hpp"
#include "cavsec/simnet.hpp"
#include "cavsec/sym.hpp"
#include "cavsec/tokens.hpp"

namespace cavsec::proto {

using sim::Micros;

/// Simulated wall clock for token timestamps.
struct Clock {
  std::uint64_t epoch_s = 1'700'000'000;
  std::uint64_t seconds(Micros now) const { return epoch_s + static_cast<std::uint64_t>(now / 1'000'000); }
};

struct SystemPublic {
  Group group;
  AbePublicKey mpk;
  IbsPublicKey mspk;
  GroupElement y_cn;
};

using CredentialSet = std::set<std::string>;

/// Subscriber record shared between a device and the core network. The
/// AKA-derived keys are provisioned directly.
struct Subscription {
  Bytes supi;
  Bytes suci;
  SymKey ak, ck, ik;
};

/// Tamper-resistant module inside an ECU: holds a sealed copy of MSSK and
/// y_CN, and exposes only pseudonym and key derivation.
class Tpm {
 public:
  Tpm(IbsMasterKeys sealed, GroupElement y_cn) : mk_(std::move(sealed)), y_cn_(std::move(y_cn)) {}

  PseudoIdentity make_pid(ByteView real_id, Rng& rng) const;
  IbsSigningKey derive_key(ByteView pid, Rng& rng) const;
  CredentialSet contents() const { return {"MSSK(sealed)", "y_CN"}; }

 private:
  IbsMasterKeys mk_;
  GroupElement y_cn_;
};

struct SecretTrace {
  Bytes m;        // encoded group element behind K
  Bytes k;        // data-sharing key
  Bytes payload;  // plaintext M
};

struct Delivery {
  Micros time = 0;
  std::string via;  // network sender
  Bytes pid;        // signer's pseudonym
  Bytes payload;
};

class Entity {
 public:
  Entity(std::string name, std::string role, SystemPublic pub, Rng rng, Clock clock);
  virtual ~Entity() = default;

  virtual std::vector<WireMessage> handle(const WireMessage& msg, Micros now) = 0;
  /// Credential names held, in the vocabulary of the credential lists.
  virtual CredentialSet credentials() const = 0;

  const std::string& name() const { return name_; }
  const std::string& role() const { return role_; }
  const SystemPublic& pub() const { return pub_; }

  /// Every byte string this entity received or computed, when enabled.
  void record_observations(bool on) { observe_ = on; }
  const std::vector<Bytes>& observed() const { return observed_; }
  void observe(ByteView b);
  void observe(const WireMessage& m);

  Rng& rng() { return rng_; }
  std::uint64_t seconds(Micros now) const { return clock_.seconds(now); }
  Bytes nonce() { return rng_.bytes(kNonceBytes); }

  /// Throws nonce_replay when n was already seen in `set`.
  static void fresh(std::set<Bytes>& set, const Bytes& n, const char* what);

 protected:

  std::string name_;
  std::string role_;
  SystemPublic pub_;
  Rng rng_;
  Clock clock_;

 private:
  bool observe_ = false;
  std::vector<Bytes> observed_;
};

// ---------------------------------------------------------------------------

class CoreNetwork final : public Entity {
 public:
  CoreNetwork(std::string name, Group group, std::size_t n_attrs, Rng rng, Clock clock = {});

  /// Phase-1 issuance.
  Subscription enroll(const std::string& supi);
  AbeUserKey issue_abe_key(const AttributeSet& attrs);
  IbsSigningKey issue_signing_key(ByteView id);
  Tpm make_tpm() const;

  /// Traceability: PID -> SUPI.
  std::optional<Bytes> trace(ByteView pid) const;

  std::vector<WireMessage> handle(const WireMessage& msg, Micros now) override;
  CredentialSet credentials() const override;

  std::uint64_t token_lifetime_s = kDefaultTokenLifetime;

 private:
  WireMessage respond(const WireMessage& msg, Micros now);

  AbeMasterKeys abe_;
  IbsMasterKeys ibs_;
  Scalar x_cn_;
  std::map<Bytes, Subscription> by_suci_;
  std::map<Bytes, Bytes> pid_to_supi_;
  std::set<Bytes> seen_n1_;
};

/// Phase-2 state of a V2X subscriber (OBU, RSU, UE, OEM).
class Subscriber {
 public:
  WireMessage hello(Entity& self);
  void finish(Entity& self, const WireMessage& msg);

  bool ready() const { return token_.has_value(); }
  const Bytes& pid() const { return pid_; }
  const IbsSigningKey& key() const { return *key_; }
  const CnToken& cn_token() const { return *token_; }

  Subscription sub;
  std::string cn_name = "cn";

 private:
  std::optional<Bytes> pending_n1_;
  Bytes pending_pid_;
  Bytes pid_;
  std::optional<IbsSigningKey> key_;
  std::optional<CnToken> token_;
  std::set<Bytes> seen_n2_;
};

struct EcuLink {
  std::string addr;
  Bytes id;
  SymKey k_sa;
};

class Obu final : public Entity {
 public:
  Obu(std::string name, SystemPublic pub, Rng rng, Clock clock, Subscription sub,
      IbsSigningKey ssk, std::vector<EcuLink> ecus);

  std::vector<WireMessage> handle(const WireMessage& msg, Micros now) override;
  CredentialSet credentials() const override;
  std::size_t ecu_count() const { return ecus_.size(); }
  const Subscriber& subscriber() const { return subscriber_; }
  bool session_ready(const std::string& ecu) const;

 private:
  struct EcuSession {
    EcuLink link;
    Bytes n1j;
    Bytes n2j;
    std::optional<SymKey> sek;
    bool bundle_sent = false;
    std::optional<std::vector<Bytes>> uplink_dest;
    std::set<Bytes> seen;
  };

  std::vector<WireMessage> query_ecus(Micros now);
  WireMessage outsource(EcuSession& s, const WireMessage& msg);
  WireMessage assist(EcuSession& s, const WireMessage& msg);
  std::vector<WireMessage> forward_uplink(EcuSession& s, const WireMessage& msg, Micros now);
  std::vector<WireMessage> forward_downlink(const WireMessage& msg, Micros now);
  EcuSession& session(const std::string& addr);

  Subscriber subscriber_;
  IbsSigningKey ssk_;
  std::map<std::string, EcuSession> ecus_;
  std::set<Bytes> seen_downlink_;
};

struct EcuConfig {
  std::string addr;
  std::string obu;
  std::string role = "ecu";
  Bytes id;
  std::vector<Policy> policies;  // one per message type
  std::size_t em_threshold = 0;  // inventory below this raises the flag
};

class Ecu final : public Entity {
 public:
  Ecu(EcuConfig cfg, SystemPublic pub, Rng rng, Clock clock, AbeUserKey sk, IbsSigningKey ssk,
      SymKey k_sa, SymKey k_oem, Tpm tpm);

  std::vector<WireMessage> handle(const WireMessage& msg, Micros now) override;
  CredentialSet credentials() const override;

  std::size_t types() const { return cfg_.policies.size(); }
  std::size_t inventory() const { return em_.size(); }
  std::vector<std::pair<std::uint64_t, PartialCiphertext>> inventory_view() const;
  bool needs_em() const { return em_.size() < cfg_.em_threshold; }
  /// Phase-2 state present for type k and not yet used.
  bool prepared(std::size_t k) const;
  const Bytes& pid() const { return pid_.pid; }
  const Bytes& id() const { return cfg_.id; }
  const Tpm& tpm() const { return tpm_; }
  const std::vector<Delivery>& delivered() const { return delivered_; }
  const std::vector<SecretTrace>& secrets() const { return secrets_; }

 private:
  struct TypeState {
    PreliminaryCiphertext pc;
    OfflineSignState st;
    bool used = false;
  };
  struct PendingUplink {
    std::size_t type;
    SymKey k;
    AbeCiphertext c;
    Scalar x_t;
    Bytes payload;
    Bytes n1j;
  };

  void install(const WireMessage& msg);
  WireMessage respond(const WireMessage& msg);
  void finalize(const WireMessage& msg);
  std::optional<WireMessage> begin_uplink(Micros now);
  WireMessage emit(const WireMessage& msg);
  void accept_downlink(const WireMessage& msg, Micros now);

  EcuConfig cfg_;
  AbeUserKey sk_;
  IbsSigningKey ssk_;
  SymKey k_sa_;
  SymKey k_oem_;
  Tpm tpm_;
  std::deque<EncryptionMaterial> em_;
  std::optional<std::uint64_t> last_serial_;

  // session
  Bytes n1j_, n2j_;
  std::optional<SymKey> sek_;
  PseudoIdentity pid_;
  std::optional<IbsSigningKey> pid_key_;
  std::vector<Scalar> v_;
  std::vector<std::optional<TypeState>> states_;
  bool awaiting_bundle_ = false;
  std::set<Bytes> seen_;

  std::deque<WireMessage> requests_;
  std::optional<PendingUplink> pending_;
  std::vector<Delivery> delivered_;
  std::vector<SecretTrace> secrets_;
};

/// RSU, UE or OEM.
class V2xNode final : public Entity {
 public:
  V2xNode(std::string name, std::string role, SystemPublic pub, Rng rng, Clock clock,
          Subscription sub, AbeUserKey sk, IbsSigningKey ssk);

  std::vector<WireMessage> handle(const WireMessage& msg, Micros now) override;
  CredentialSet credentials() const override;

  /// OEM only: long-term keys and real identities of the ECUs it serves.
  void add_ecu(const std::string& addr, Bytes id, SymKey k_oem);
  /// Queued signatures are checked together once this many are pending;
  /// 0 verifies each message on arrival.
  std::size_t batch_size = 0;
  /// Verifies any queued signatures now.
  void flush(Micros now);

  struct EmRecord {
    std::string ecu;
    std::uint64_t serial;
    Scalar v;
  };
  const std::vector<EmRecord>& em_audit() const { return audit_; }
  const Subscriber& subscriber() const { return subscriber_; }
  const std::vector<Delivery>& delivered() const { return delivered_; }
  const std::vector<SecretTrace>& secrets() const { return secrets_; }
  /// Messages that failed inside a batch and were rejected individually.
  std::size_t batch_rejected() const { return batch_rejected_; }

 private:
  struct Queued {
    Delivery d;
    IbsSignature sig;
    Bytes signer;
  };
  struct OemEcu {
    Bytes id;
    SymKey k;
    std::uint64_t next_serial = 1;
  };

  WireMessage em_batch_for(const std::string& ecu, std::size_t count, std::uint8_t phase);
  void receive_uplink(const WireMessage& msg, Micros now);
  WireMessage send_downlink(const WireMessage& msg, Micros now);

  Subscriber subscriber_;
  AbeUserKey sk_;
  IbsSigningKey ssk_;
  std::map<std::string, OemEcu> oem_ecus_;
  std::vector<EmRecord> audit_;
  std::set<Bytes> seen_nm_;
  std::vector<Queued> queue_;
  std::vector<Delivery> delivered_;
  std::vector<SecretTrace> secrets_;
  std::size_t batch_rejected_ = 0;
};

/// Credential names expected for each role, per the device credential lists.
CredentialSet expected_credentials(const std::string& role);

}  // namespace cavsec::proto
