#include "cavsec/protocol/entities.hpp"

#include <algorithm>

namespace cavsec::proto {

namespace {

Bytes u64_bytes(std::uint64_t v) {
  Bytes b;
  put_u64(b, v);
  return b;
}

Bytes u32_bytes(std::uint32_t v) {
  Bytes b;
  put_u32(b, v);
  return b;
}

std::uint64_t read_u64(const Bytes& b) {
  if (b.size() != 8) throw ProtocolError(FailReason::decode_error, "expected 8-byte integer");
  ByteReader r(b);
  return r.u64();
}

std::uint32_t read_u32(const Bytes& b) {
  if (b.size() != 4) throw ProtocolError(FailReason::decode_error, "expected 4-byte integer");
  ByteReader r(b);
  return r.u32();
}

const Bytes& nonce_field(const WireMessage& m, std::string_view name) {
  const Bytes& n = m.get(name);
  if (n.size() != kNonceBytes) throw ProtocolError(FailReason::decode_error, std::string(name) + " has wrong width");
  return n;
}

void check_tag(ByteView expected, ByteView got, const char* what) {
  if (!tags_equal(expected, got)) throw ProtocolError(FailReason::mac_failure, std::string(what) + " does not verify");
}

Bytes open(const SymKey& key, ByteView ct, ByteView nonce, FailReason reason, const char* what) {
  try {
    return sym_decrypt(key, ct, nonce);
  } catch (const IntegrityError&) {
    throw ProtocolError(reason, std::string(what) + " failed to decrypt");
  }
}

std::vector<Bytes> fields(ByteView data, std::size_t expected, const char* what) {
  std::vector<Bytes> out;
  try {
    out = unpack(data);
  } catch (const DecodeError& e) {
    throw ProtocolError(FailReason::decode_error, std::string(what) + ": " + e.what());
  }
  if (expected != 0 && out.size() != expected)
    throw ProtocolError(FailReason::decode_error, std::string(what) + " has wrong field count");
  return out;
}

void echo(bool ok, const char* what) {
  if (!ok) throw ProtocolError(FailReason::bad_echo, what);
}

SymKey session_key(const SymKey& k_sa, ByteView id, ByteView n1j, ByteView n2j) {
  Bytes tag = prf(k_sa, concat({id, increment(n1j), increment(n2j)}));
  tag.resize(key_length(KeyRole::sek));
  return SymKey(KeyRole::sek, std::move(tag));
}

void require_token(const UserToken& tok, const SystemPublic& pub, ByteView pid, std::uint64_t now) {
  switch (verify_user_token(tok, pub.mspk, pub.y_cn, pid, now)) {
    case TokenVerdict::accepted: return;
    case TokenVerdict::expired: throw ProtocolError(FailReason::token_expired, "user token expired");
    case TokenVerdict::stale: throw ProtocolError(FailReason::token_stale, "user token timestamp outside skew");
    case TokenVerdict::equation_failed: throw ProtocolError(FailReason::token_equation, "user token does not verify");
  }
}

UserToken fresh_token(const SystemPublic& pub, const Subscriber& s, std::uint64_t now, Rng& rng) {
  try {
    return derive_user_token(pub.mspk, s.cn_token(), s.key(), now, rng);
  } catch (const TokenExpired& e) {
    throw ProtocolError(FailReason::token_expired, e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

PseudoIdentity Tpm::make_pid(ByteView real_id, Rng& rng) const {
  return cavsec::make_pid(real_id, y_cn_, Scalar::random_nonzero(y_cn_.group(), rng));
}

IbsSigningKey Tpm::derive_key(ByteView pid, Rng& rng) const { return ibs_keygen(mk_, pid, rng); }

Entity::Entity(std::string name, std::string role, SystemPublic pub, Rng rng, Clock clock)
    : name_(std::move(name)), role_(std::move(role)), pub_(std::move(pub)), rng_(std::move(rng)), clock_(clock) {}

void Entity::observe(ByteView b) {
  if (observe_) observed_.emplace_back(b.begin(), b.end());
}

void Entity::observe(const WireMessage& m) {
  if (!observe_) return;
  for (const auto& f : m.fields) observed_.push_back(f.value);
}

void Entity::fresh(std::set<Bytes>& set, const Bytes& n, const char* what) {
  if (!set.insert(n).second) throw ProtocolError(FailReason::nonce_replay, std::string(what) + " already seen");
}

// ---------------------------------------------------------------------------
// Core network (UDM/ARPF)

CoreNetwork::CoreNetwork(std::string name, Group group, std::size_t n_attrs, Rng rng, Clock clock)
    : Entity(std::move(name), "cn", {}, std::move(rng), clock) {
  abe_ = abe_setup(group, n_attrs, rng_);
  ibs_ = ibs_setup(group, rng_);
  x_cn_ = Scalar::random_nonzero(group, rng_);
  pub_ = SystemPublic{group, abe_.mpk, ibs_.mspk, GroupElement::generator(group).pow(x_cn_)};
}

Subscription CoreNetwork::enroll(const std::string& supi) {
  Subscription s{to_bytes(supi), rng_.bytes(16), SymKey::random(KeyRole::ak, rng_),
                 SymKey::random(KeyRole::ck, rng_), SymKey::random(KeyRole::ik, rng_)};
  while (by_suci_.count(s.suci)) s.suci = rng_.bytes(16);
  by_suci_[s.suci] = s;
  return s;
}

AbeUserKey CoreNetwork::issue_abe_key(const AttributeSet& attrs) {
  if (attrs.universe() != abe_.mpk.n())
    throw std::invalid_argument("attribute set universe does not match the system");
  return abe_keygen(abe_, attrs, rng_);
}

IbsSigningKey CoreNetwork::issue_signing_key(ByteView id) { return ibs_keygen(ibs_, id, rng_); }

Tpm CoreNetwork::make_tpm() const { return Tpm(ibs_, pub_.y_cn); }

std::optional<Bytes> CoreNetwork::trace(ByteView pid) const {
  auto it = pid_to_supi_.find(Bytes(pid.begin(), pid.end()));
  if (it == pid_to_supi_.end()) return std::nullopt;
  return it->second;
}

CredentialSet CoreNetwork::credentials() const {
  return {"MSK", "MSSK", "x_CN", "MPK", "MSPK", "y_CN"};
}

std::vector<WireMessage> CoreNetwork::handle(const WireMessage& msg, Micros now) {
  if (msg.is(2, 1)) return {respond(msg, now)};
  throw ProtocolError(FailReason::unknown_message_type, "core network cannot handle " + msg.tag());
}

WireMessage CoreNetwork::respond(const WireMessage& msg, Micros now) {
  const Group& group = pub_.group;
  const auto galpha = GroupElement::decode(group, msg.get("galpha"));
  const Bytes& pid = msg.get("pid");
  const Bytes& c1 = msg.get("c1");
  const Bytes& n1 = nonce_field(msg, "n1");

  const Bytes suci = recover_real_id(pid, galpha, x_cn_);
  auto sub = by_suci_.find(suci);
  if (sub == by_suci_.end()) throw ProtocolError(FailReason::unknown_identity, "no subscriber for recovered SUCI");
  const Subscription& s = sub->second;

  check_tag(prf(s.ik, concat({c1, n1, pid})), msg.get("sigma1"), "sigma1");
  fresh(seen_n1_, n1, "N1");
  auto f = fields(open(s.ck, c1, n1, FailReason::mac_failure, "C1"), 4, "C1");
  echo(f[0] == pid && f[3] == n1, "C1 does not repeat PID and N1");
  if (!tags_equal(f[1], ver_id(s.ak, galpha.pow(x_cn_))))
    throw ProtocolError(FailReason::verid_mismatch, "VerID does not match");

  const auto key = ibs_keygen(ibs_, pid, rng_);
  const auto token = issue_cn_token(pub_.mspk, x_cn_, pid, seconds(now) + token_lifetime_s, rng_);
  pid_to_supi_[pid] = s.supi;

  const Bytes n2 = nonce();
  const Bytes c2 = sym_encrypt(
      s.ck, pack({s.suci, key.B.encode(), key.kappa.encode(), token.encode(), increment(n1), n2}), n2);
  WireMessage out(2, 2, name_, msg.from);
  out.add("c2", c2).add("n2", n2).add("sigma2", prf(s.ik, concat({c2, n2, s.suci})));
  return out;
}

// ---------------------------------------------------------------------------
// Subscriber side of phase 2

WireMessage Subscriber::hello(Entity& self) {
  const auto& pub = self.pub();
  const Scalar alpha = Scalar::random_nonzero(pub.group, self.rng());
  const auto p = make_pid(sub.suci, pub.y_cn, alpha);
  const Bytes vid = ver_id(sub.ak, pub.y_cn.pow(alpha));
  const Bytes n1 = self.nonce();
  const Bytes comm = to_bytes("c-v2x");
  const Bytes c1 = sym_encrypt(sub.ck, pack({p.pid, vid, comm, n1}), n1);
  self.observe(vid);
  pending_n1_ = n1;
  pending_pid_ = p.pid;

  WireMessage out(2, 1, self.name(), cn_name);
  out.add("galpha", p.alpha_pub.encode()).add("pid", p.pid).add("c1", c1).add("n1", n1);
  out.add("sigma1", prf(sub.ik, concat({c1, n1, p.pid})));
  return out;
}

void Subscriber::finish(Entity& self, const WireMessage& msg) {
  if (!pending_n1_) throw ProtocolError(FailReason::unexpected_message, "no phase-2 exchange in progress");
  const auto& pub = self.pub();
  const Bytes& c2 = msg.get("c2");
  const Bytes& n2 = nonce_field(msg, "n2");
  check_tag(prf(sub.ik, concat({c2, n2, sub.suci})), msg.get("sigma2"), "sigma2");
  Entity::fresh(seen_n2_, n2, "N2");
  auto f = fields(open(sub.ck, c2, n2, FailReason::mac_failure, "C2"), 6, "C2");
  self.observe(pack(f));
  echo(f[0] == sub.suci, "C2 carries a different SUCI");
  echo(f[4] == increment(*pending_n1_), "N1+1 echo mismatch");
  echo(f[5] == n2, "C2 does not repeat N2");

  IbsSigningKey key{GroupElement::decode_trusted(pub.group, f[1]), Scalar::decode(pub.group, f[2])};
  if (!key.valid_for(pub.mspk, pending_pid_))
    throw ProtocolError(FailReason::signature_invalid, "issued signing key does not match PID");
  auto token = CnToken::decode(pub.group, f[3]);

  pid_ = pending_pid_;
  key_ = std::move(key);
  token_ = std::move(token);
  pending_n1_.reset();
}

// ---------------------------------------------------------------------------
// OBU

Obu::Obu(std::string name, SystemPublic pub, Rng rng, Clock clock, Subscription sub, IbsSigningKey ssk,
         std::vector<EcuLink> ecus)
    : Entity(std::move(name), "obu", std::move(pub), std::move(rng), clock), ssk_(std::move(ssk)) {
  subscriber_.sub = std::move(sub);
  for (auto& l : ecus) {
    const std::string addr = l.addr;
    ecus_[addr].link = std::move(l);
  }
}

CredentialSet Obu::credentials() const {
  CredentialSet c{"SUCI", "y_CN", "MPK", "MSPK", "SSK_U"};
  if (!ecus_.empty()) c.insert("K_SA_ECU");
  return c;
}

bool Obu::session_ready(const std::string& ecu) const {
  auto it = ecus_.find(ecu);
  return it != ecus_.end() && it->second.sek.has_value();
}

Obu::EcuSession& Obu::session(const std::string& addr) {
  auto it = ecus_.find(addr);
  if (it == ecus_.end()) throw ProtocolError(FailReason::unknown_identity, "no ECU at " + addr);
  return it->second;
}

std::vector<WireMessage> Obu::handle(const WireMessage& msg, Micros now) {
  observe(msg);
  std::vector<WireMessage> out;
  if (msg.is(2, 0)) {
    out.push_back(subscriber_.hello(*this));
  } else if (msg.is(2, 2)) {
    subscriber_.finish(*this, msg);
    out = query_ecus(now);
  } else if (msg.is(2, 4)) {
    out.push_back(outsource(session(msg.from), msg));
  } else if (msg.is(3, 1)) {
    out.push_back(assist(session(msg.from), msg));
  } else if (msg.is(3, 3)) {
    out = forward_uplink(session(msg.from), msg, now);
  } else if (msg.is(3, 6)) {
    out = forward_downlink(msg, now);
  } else {
    throw ProtocolError(FailReason::unknown_message_type, "OBU cannot handle " + msg.tag());
  }
  for (const auto& m : out) observe(m);
  return out;
}

std::vector<WireMessage> Obu::query_ecus(Micros) {
  std::vector<WireMessage> out;
  const Bytes req = to_bytes("types");
  for (auto& [addr, s] : ecus_) {
    s.n1j = nonce();
    s.n2j.clear();
    s.sek.reset();
    s.bundle_sent = false;
    s.uplink_dest.reset();
    WireMessage m(2, 3, name_, addr);
    m.add("id", s.link.id).add("sigma1j", prf(s.link.k_sa, concat({s.link.id, s.n1j, req}), MacProfile::in_vehicle));
    m.add("n1j", s.n1j).add("req_info", req);
    out.push_back(std::move(m));
  }
  return out;
}

WireMessage Obu::outsource(EcuSession& s, const WireMessage& msg) {
  if (s.n1j.empty() || s.bundle_sent) throw ProtocolError(FailReason::unexpected_message, "no ECU query outstanding");
  if (msg.get("id") != s.link.id) throw ProtocolError(FailReason::unknown_identity, "ECU id mismatch");
  const Bytes& n2j = nonce_field(msg, "n2j");
  const Bytes& c1j = msg.get("c1j");
  fresh(s.seen, n2j, "N2j");
  SymKey sek = session_key(s.link.k_sa, s.link.id, s.n1j, n2j);
  auto f = fields(open(sek, c1j, n2j, FailReason::mac_failure, "C1j"), 4, "C1j");
  observe(sek.bytes());
  observe(pack(f));
  echo(f[1] == s.link.id && f[3] == n2j, "C1j does not repeat ID and N2j");
  auto vs = fields(f[2], 0, "v list");
  if (vs.empty()) throw ProtocolError(FailReason::decode_error, "empty v list");
  check_tag(prf(s.link.k_sa, concat({c1j, f[0], vs[0]}), MacProfile::in_vehicle), msg.get("sigma2j"), "sigma2j");

  std::vector<Bytes> mos;
  for (const auto& v : vs) {
    const Scalar vk = Scalar::decode(pub_.group, v);
    if (vk.is_zero()) throw ProtocolError(FailReason::decode_error, "zero v");
    mos.push_back(abe_out_encrypt1(pub_.mpk, vk).encode());
  }
  const Bytes bundle = pack(mos);
  observe(bundle);
  const Bytes c2j = sym_encrypt(sek, bundle, increment(n2j));
  s.sek = std::move(sek);
  s.n2j = n2j;
  s.bundle_sent = true;

  WireMessage out(2, 5, name_, s.link.addr);
  out.add("c2j", c2j).add("sigma3j", prf(s.link.k_sa, concat({c2j, mos[0]}), MacProfile::in_vehicle));
  return out;
}

WireMessage Obu::assist(EcuSession& s, const WireMessage& msg) {
  if (!s.sek) throw ProtocolError(FailReason::unexpected_message, "no session with " + s.link.addr);
  const Bytes& n1j = nonce_field(msg, "n1j");
  const Bytes& c1j = msg.get("c1j");
  auto f = fields(open(*s.sek, c1j, n1j, FailReason::mac_failure, "C1j"), 6, "C1j");
  observe(pack(f));
  echo(f[5] == n1j, "C1j does not repeat N1j");
  check_tag(prf(*s.sek, concat({c1j, f[3]}), MacProfile::in_vehicle), msg.get("sigma1j"), "sigma1j");
  fresh(s.seen, n1j, "N1j");

  const auto Y = GroupElement::decode_trusted(pub_.group, f[2]);
  const auto x_t = Scalar::decode(pub_.group, f[3]);
  if (x_t.is_zero()) throw ProtocolError(FailReason::decode_error, "zero x");
  const Bytes yp = ibs_out_sign1(Y, x_t).encode();
  observe(yp);
  s.uplink_dest = fields(f[4], 0, "comm-info");

  const Bytes n2j = nonce();
  const Bytes c2j = sym_encrypt(*s.sek, pack({subscriber_.pid(), yp, n2j}), n2j);
  WireMessage out(3, 2, name_, s.link.addr);
  out.add("c2j", c2j).add("sigma2j", prf(*s.sek, concat({c2j, yp}), MacProfile::in_vehicle)).add("n2j", n2j);
  return out;
}

std::vector<WireMessage> Obu::forward_uplink(EcuSession& s, const WireMessage& msg, Micros now) {
  if (!s.uplink_dest) throw ProtocolError(FailReason::unexpected_message, "no uplink in progress for " + s.link.addr);
  const Bytes token = fresh_token(pub_, subscriber_, seconds(now), rng_).encode();
  std::vector<WireMessage> out;
  for (const auto& d : *s.uplink_dest) {
    WireMessage m(3, 4, name_, to_string(d));
    m.add("pid", subscriber_.pid()).add("c", msg.get("c")).add("cm", msg.get("cm"));
    m.add("sigmam", msg.get("sigmam")).add("nm", msg.get("nm")).add("token", token);
    out.push_back(std::move(m));
  }
  s.uplink_dest.reset();
  return out;
}

std::vector<WireMessage> Obu::forward_downlink(const WireMessage& msg, Micros now) {
  const Bytes& pid = msg.get("pid");
  require_token(UserToken::decode(pub_.group, msg.get("token")), pub_, pid, seconds(now));
  const Bytes& nm = nonce_field(msg, "nm");
  fresh(seen_downlink_, nm, "N_M");

  std::vector<std::string> targets;
  for (const auto& e : fields(msg.get("ecus"), 0, "ecu list")) targets.push_back(to_string(e));
  if (targets.empty())
    for (const auto& [addr, s] : ecus_) targets.push_back(addr);
  for (const auto& t : targets) {
    if (!session(t).sek) throw ProtocolError(FailReason::unexpected_message, "no session with " + t);
  }

  const Bytes inner = pack({pid, msg.get("c"), msg.get("cm"), msg.get("sigmam"), nm});
  std::vector<WireMessage> out;
  for (const auto& t : targets) {
    EcuSession& s = session(t);
    const Bytes n1j = nonce();
    const Bytes c1j = sym_encrypt(*s.sek, inner, n1j);
    WireMessage m(3, 7, name_, t);
    m.add("c1j", c1j).add("n1j", n1j).add("sigma1j", prf(*s.sek, concat({c1j, n1j}), MacProfile::in_vehicle));
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// ECU

Ecu::Ecu(EcuConfig cfg, SystemPublic pub, Rng rng, Clock clock, AbeUserKey sk, IbsSigningKey ssk, SymKey k_sa,
         SymKey k_oem, Tpm tpm)
    : Entity(cfg.addr, cfg.role, std::move(pub), std::move(rng), clock),
      cfg_(std::move(cfg)),
      sk_(std::move(sk)),
      ssk_(std::move(ssk)),
      k_sa_(std::move(k_sa)),
      k_oem_(std::move(k_oem)),
      tpm_(std::move(tpm)) {
  if (cfg_.policies.empty()) throw std::invalid_argument("an ECU needs at least one message type");
  for (const auto& p : cfg_.policies)
    if (p.size() != pub_.mpk.n()) throw std::invalid_argument("policy length does not match the system");
}

CredentialSet Ecu::credentials() const { return {"MPK", "MSPK", "SK_U", "SSK_U", "K_SA_ECU", "K_OEM_ECU"}; }

std::vector<std::pair<std::uint64_t, PartialCiphertext>> Ecu::inventory_view() const {
  std::vector<std::pair<std::uint64_t, PartialCiphertext>> out;
  for (const auto& em : em_) out.emplace_back(em.serial(), em.peek());
  return out;
}

bool Ecu::prepared(std::size_t k) const { return k < states_.size() && states_[k] && !states_[k]->used; }

std::vector<WireMessage> Ecu::handle(const WireMessage& msg, Micros now) {
  std::vector<WireMessage> out;
  if (msg.is(1, 1) || msg.is(4, 1)) {
    install(msg);
  } else if (msg.is(2, 3)) {
    out.push_back(respond(msg));
  } else if (msg.is(2, 5)) {
    finalize(msg);
    if (auto m = begin_uplink(now)) out.push_back(std::move(*m));
  } else if (msg.is(3, 0)) {
    requests_.push_back(msg);
    if (auto m = begin_uplink(now)) out.push_back(std::move(*m));
  } else if (msg.is(3, 2)) {
    out.push_back(emit(msg));
    if (auto m = begin_uplink(now)) out.push_back(std::move(*m));
  } else if (msg.is(3, 7)) {
    accept_downlink(msg, now);
  } else {
    throw ProtocolError(FailReason::unknown_message_type, "ECU cannot handle " + msg.tag());
  }
  return out;
}

void Ecu::install(const WireMessage& msg) {
  if (msg.get("id") != cfg_.id) throw ProtocolError(FailReason::unknown_identity, "EM batch for another ECU");
  const Bytes& nonce = nonce_field(msg, "nonce");
  const Bytes& c_em = msg.get("c_em");
  check_tag(prf(k_oem_, concat({cfg_.id, msg.get("serial"), msg.get("count"), nonce, c_em})), msg.get("sigma"),
            "EM batch MAC");
  const std::uint64_t serial = read_u64(msg.get("serial"));
  const std::uint32_t count = read_u32(msg.get("count"));
  if (last_serial_ && serial <= *last_serial_)
    throw ProtocolError(FailReason::serial_regression, "EM serial " + std::to_string(serial) + " not above " +
                                                            std::to_string(*last_serial_));
  auto mos = fields(open(k_oem_, c_em, nonce, FailReason::mac_failure, "EM batch"), count, "EM batch");
  if (count == 0) throw ProtocolError(FailReason::decode_error, "empty EM batch");
  for (std::uint32_t i = 0; i < count; ++i)
    em_.emplace_back(serial + i, PartialCiphertext::decode_trusted(pub_.group, mos[i]));
  last_serial_ = serial + count - 1;
}

WireMessage Ecu::respond(const WireMessage& msg) {
  if (msg.get("id") != cfg_.id) throw ProtocolError(FailReason::unknown_identity, "query for another ECU");
  const Bytes& n1j = nonce_field(msg, "n1j");
  check_tag(prf(k_sa_, concat({cfg_.id, n1j, msg.get("req_info")}), MacProfile::in_vehicle), msg.get("sigma1j"),
            "sigma1j");
  fresh(seen_, n1j, "N1j");

  // A new session discards the previous one.
  n1j_ = n1j;
  n2j_ = nonce();
  sek_ = session_key(k_sa_, cfg_.id, n1j_, n2j_);
  pid_ = tpm_.make_pid(cfg_.id, rng_);
  pid_key_ = tpm_.derive_key(pid_.pid, rng_);
  v_.clear();
  std::vector<Bytes> vs;
  for (std::size_t k = 0; k < types(); ++k) {
    v_.push_back(Scalar::random_nonzero(pub_.group, rng_));
    vs.push_back(v_.back().encode());
  }
  states_.clear();
  states_.resize(types());
  pending_.reset();
  awaiting_bundle_ = true;

  const Bytes c1j = sym_encrypt(*sek_, pack({pid_.pid, cfg_.id, pack(vs), n2j_}), n2j_);
  WireMessage out(2, 4, name_, cfg_.obu);
  out.add("id", cfg_.id).add("c1j", c1j).add("n2j", n2j_);
  out.add("sigma2j", prf(k_sa_, concat({c1j, pid_.pid, vs[0]}), MacProfile::in_vehicle));
  return out;
}

void Ecu::finalize(const WireMessage& msg) {
  if (!awaiting_bundle_) throw ProtocolError(FailReason::unexpected_message, "no partial bundle expected");
  const Bytes& c2j = msg.get("c2j");
  auto mos = fields(open(*sek_, c2j, increment(n2j_), FailReason::mac_failure, "C2j"), types(), "C2j");
  check_tag(prf(k_sa_, concat({c2j, mos[0]}), MacProfile::in_vehicle), msg.get("sigma3j"), "sigma3j");
  awaiting_bundle_ = false;
  if (em_.size() < types())
    throw ProtocolError(FailReason::em_exhausted,
                        std::to_string(em_.size()) + " encryption materials left for " + std::to_string(types()) +
                            " message types");
  for (std::size_t k = 0; k < types(); ++k) {
    const auto mo = PartialCiphertext::decode_trusted(pub_.group, mos[k]);
    auto pc = abe_out_encrypt2(pub_.mpk, mo, em_.front().consume());
    em_.pop_front();
    states_[k] = TypeState{std::move(pc), ibs_offline_sign(pub_.mspk, rng_), false};
  }
}

std::optional<WireMessage> Ecu::begin_uplink(Micros) {
  if (requests_.empty() || pending_ || awaiting_bundle_ || !sek_) return std::nullopt;
  WireMessage req = std::move(requests_.front());
  requests_.pop_front();

  const Bytes& type_field = req.get("type");
  if (type_field.size() != 1 || type_field[0] >= types())
    throw ProtocolError(FailReason::unknown_message_type, "no message type " + to_hex(type_field));
  const std::size_t k = type_field[0];
  if (!prepared(k))
    throw ProtocolError(FailReason::em_exhausted, "no preliminary ciphertext left for type " + std::to_string(k));
  TypeState& st = *states_[k];

  const auto m = GroupElement::random(pub_.group, rng_);
  const SymKey key = kdf(m, KdfContext::data_key, KeyRole::data_key);
  auto c = abe_select_policy(st.pc, cfg_.policies[k], m, rng_);
  st.used = true;
  const Scalar x_t = Scalar::random_nonzero(pub_.group, rng_);
  const Bytes n1j = nonce();
  secrets_.push_back({m.encode(), key.bytes(), req.get("payload")});

  const Bytes c1j = sym_encrypt(
      *sek_, pack({pid_.pid, pid_.alpha_pub.encode(), st.st.Y().encode(), x_t.encode(), req.get("dest"), n1j}),
      n1j);
  WireMessage out(3, 1, name_, cfg_.obu);
  out.add("c1j", c1j).add("sigma1j", prf(*sek_, concat({c1j, x_t.encode()}), MacProfile::in_vehicle)).add("n1j", n1j);
  pending_ = PendingUplink{k, key, std::move(c), x_t, req.get("payload"), n1j};
  return out;
}

WireMessage Ecu::emit(const WireMessage& msg) {
  if (!pending_) throw ProtocolError(FailReason::unexpected_message, "no uplink in progress");
  const Bytes& n2j = nonce_field(msg, "n2j");
  const Bytes& c2j = msg.get("c2j");
  auto f = fields(open(*sek_, c2j, n2j, FailReason::mac_failure, "C2j"), 3, "C2j");
  echo(f[2] == n2j, "C2j does not repeat N2j");
  check_tag(prf(*sek_, concat({c2j, f[1]}), MacProfile::in_vehicle), msg.get("sigma2j"), "sigma2j");
  fresh(seen_, n2j, "N2j");

  const auto yp = GroupElement::decode_trusted(pub_.group, f[1]);
  const PendingUplink& p = *pending_;
  const auto sig = ibs_out_sign2(pub_.mspk, *pid_key_, states_[p.type]->st, p.x_t, yp, p.payload, rng_);
  const Bytes nm = nonce();
  const Bytes cm = sym_encrypt(p.k, pack({pid_.pid, f[0], sig.encode(), p.payload, nm}), nm);
  const Bytes sigma_m = hash(concat({cm, p.payload}));

  WireMessage out(3, 3, name_, cfg_.obu);
  out.add("c", p.c.encode()).add("cm", cm).add("sigmam", sigma_m).add("nm", nm);
  pending_.reset();
  return out;
}

void Ecu::accept_downlink(const WireMessage& msg, Micros now) {
  if (!sek_) throw ProtocolError(FailReason::unexpected_message, "no session with the OBU");
  const Bytes& n1j = nonce_field(msg, "n1j");
  const Bytes& c1j = msg.get("c1j");
  check_tag(prf(*sek_, concat({c1j, n1j}), MacProfile::in_vehicle), msg.get("sigma1j"), "sigma1j");
  fresh(seen_, n1j, "N1j");
  auto f = fields(open(*sek_, c1j, n1j, FailReason::mac_failure, "C1j"), 5, "C1j");

  const auto c = AbeCiphertext::decode(pub_.group, f[1]);
  const SymKey key = kdf(abe_decrypt(c, sk_), KdfContext::data_key, KeyRole::data_key);
  auto g = fields(open(key, f[2], f[4], FailReason::access_denied, "C_M"), 5, "C_M");
  echo(g[0] == f[0] && g[4] == f[4], "C_M does not repeat PID and N_M");
  check_tag(hash(concat({f[2], g[2]})), f[3], "sigma_M");
  auto targets = fields(g[3], 0, "ecu list");
  if (!targets.empty() && std::find(targets.begin(), targets.end(), to_bytes(name_)) == targets.end())
    throw ProtocolError(FailReason::unexpected_message, "downlink not addressed to " + name_);
  const auto sig = IbsSignature::decode(pub_.group, g[1]);
  if (!ibs_verify(pub_.mspk, g[0], sig, g[2]))
    throw ProtocolError(FailReason::signature_invalid, "downlink signature does not verify");
  delivered_.push_back({now, msg.from, g[0], g[2]});
}

// ---------------------------------------------------------------------------
// RSU / UE / OEM

V2xNode::V2xNode(std::string name, std::string role, SystemPublic pub, Rng rng, Clock clock, Subscription sub,
                 AbeUserKey sk, IbsSigningKey ssk)
    : Entity(std::move(name), std::move(role), std::move(pub), std::move(rng), clock),
      sk_(std::move(sk)),
      ssk_(std::move(ssk)) {
  subscriber_.sub = std::move(sub);
}

CredentialSet V2xNode::credentials() const {
  CredentialSet c{"SUCI", "y_CN", "MPK", "MSPK", "SK_U", "SSK_U"};
  if (!oem_ecus_.empty()) c.insert("K_OEM_ECU");
  return c;
}

void V2xNode::add_ecu(const std::string& addr, Bytes id, SymKey k_oem) {
  if (role_ != "oem") throw std::logic_error("only the OEM serves ECUs");
  oem_ecus_[addr] = OemEcu{std::move(id), std::move(k_oem), 1};
}

std::vector<WireMessage> V2xNode::handle(const WireMessage& msg, Micros now) {
  if (msg.is(2, 0)) return {subscriber_.hello(*this)};
  if (msg.is(2, 2)) {
    subscriber_.finish(*this, msg);
    return {};
  }
  if (msg.is(3, 4)) {
    receive_uplink(msg, now);
    return {};
  }
  if (msg.is(3, 5)) return {send_downlink(msg, now)};
  if ((msg.is(1, 0) || msg.is(4, 0)) && role_ == "oem") {
    const std::size_t count = read_u32(msg.get("count"));
    return {em_batch_for(to_string(msg.get("ecu")), count, msg.phase)};
  }
  throw ProtocolError(FailReason::unknown_message_type, role_ + " cannot handle " + msg.tag());
}

WireMessage V2xNode::em_batch_for(const std::string& ecu, std::size_t count, std::uint8_t phase) {
  auto it = oem_ecus_.find(ecu);
  if (it == oem_ecus_.end()) throw ProtocolError(FailReason::unknown_identity, "OEM does not serve " + ecu);
  if (count == 0) throw ProtocolError(FailReason::decode_error, "empty EM batch requested");
  OemEcu& e = it->second;
  const std::uint64_t serial = e.next_serial;
  e.next_serial += count;
  std::vector<Bytes> mos;
  for (std::size_t i = 0; i < count; ++i) {
    const Scalar v = Scalar::random_nonzero(pub_.group, rng_);
    mos.push_back(abe_out_encrypt1(pub_.mpk, v).encode());
    audit_.push_back({ecu, serial + i, v});
  }
  const Bytes n = nonce();
  const Bytes c_em = sym_encrypt(e.k, pack(mos), n);
  const Bytes serial_b = u64_bytes(serial);
  const Bytes count_b = u32_bytes(static_cast<std::uint32_t>(count));
  WireMessage out(phase, 1, name_, ecu);
  out.add("id", e.id).add("serial", serial_b).add("count", count_b).add("nonce", n).add("c_em", c_em);
  out.add("sigma", prf(e.k, concat({e.id, serial_b, count_b, n, c_em})));
  return out;
}

void V2xNode::receive_uplink(const WireMessage& msg, Micros now) {
  const Bytes& pid = msg.get("pid");
  require_token(UserToken::decode(pub_.group, msg.get("token")), pub_, pid, seconds(now));
  const Bytes& nm = nonce_field(msg, "nm");
  fresh(seen_nm_, nm, "N_M");

  const auto c = AbeCiphertext::decode(pub_.group, msg.get("c"));
  const SymKey key = kdf(abe_decrypt(c, sk_), KdfContext::data_key, KeyRole::data_key);
  const Bytes& cm = msg.get("cm");
  auto f = fields(open(key, cm, nm, FailReason::access_denied, "C_M"), 5, "C_M");
  echo(f[1] == pid && f[4] == nm, "C_M does not repeat PID and N_M");
  check_tag(hash(concat({cm, f[3]})), msg.get("sigmam"), "sigma_M");
  auto sig = IbsSignature::decode(pub_.group, f[2]);

  Delivery d{now, msg.from, f[0], f[3]};
  if (batch_size > 0) {
    queue_.push_back({std::move(d), std::move(sig), f[0]});
    if (queue_.size() >= batch_size) flush(now);
    return;
  }
  if (!ibs_verify(pub_.mspk, f[0], sig, f[3]))
    throw ProtocolError(FailReason::signature_invalid, "uplink signature does not verify");
  delivered_.push_back(std::move(d));
}

void V2xNode::flush(Micros) {
  if (queue_.empty()) return;
  std::vector<BatchItem> items;
  for (const auto& q : queue_) items.push_back({q.signer, q.sig, q.d.payload});
  if (ibs_batch_verify(pub_.mspk, items)) {
    for (auto& q : queue_) delivered_.push_back(std::move(q.d));
  } else {
    for (auto& q : queue_) {
      if (ibs_verify(pub_.mspk, q.signer, q.sig, q.d.payload)) {
        delivered_.push_back(std::move(q.d));
      } else {
        ++batch_rejected_;
      }
    }
  }
  queue_.clear();
}

WireMessage V2xNode::send_downlink(const WireMessage& msg, Micros now) {
  if (!subscriber_.ready()) throw ProtocolError(FailReason::unexpected_message, "no pseudonym yet");
  const Policy policy = Policy::parse(to_string(msg.get("policy")));
  if (policy.size() != pub_.mpk.n()) throw ProtocolError(FailReason::decode_error, "policy length mismatch");
  const Bytes& payload = msg.get("payload");
  const Bytes& ecus = msg.get("ecus");

  const auto m = GroupElement::random(pub_.group, rng_);
  const SymKey key = kdf(m, KdfContext::data_key, KeyRole::data_key);
  const auto c = abe_encrypt(pub_.mpk, policy, m, rng_);
  const auto sig = ibs_sign(pub_.mspk, subscriber_.key(), payload, rng_);
  const Bytes nm = nonce();
  const Bytes cm = sym_encrypt(key, pack({subscriber_.pid(), sig.encode(), payload, ecus, nm}), nm);
  secrets_.push_back({m.encode(), key.bytes(), payload});

  WireMessage out(3, 6, name_, to_string(msg.get("cav")));
  out.add("pid", subscriber_.pid()).add("c", c.encode()).add("cm", cm);
  out.add("sigmam", hash(concat({cm, payload}))).add("nm", nm);
  out.add("token", fresh_token(pub_, subscriber_, seconds(now), rng_).encode()).add("ecus", ecus);
  return out;
}

// ---------------------------------------------------------------------------

CredentialSet expected_credentials(const std::string& role) {
  if (role == "cn") return {"MSK", "MSSK", "x_CN", "MPK", "MSPK", "y_CN"};
  if (role == "obu") return {"SUCI", "y_CN", "MPK", "MSPK", "SSK_U", "K_SA_ECU"};
  if (role == "ecu" || role == "adas") return {"MPK", "MSPK", "SK_U", "SSK_U", "K_SA_ECU", "K_OEM_ECU"};
  if (role == "rsu" || role == "ue") return {"SUCI", "y_CN", "MPK", "MSPK", "SK_U", "SSK_U"};
  if (role == "oem") return {"SUCI", "y_CN", "MPK", "MSPK", "SK_U", "SSK_U", "K_OEM_ECU"};
  throw std::invalid_argument("unknown role " + role);
}

}  // namespace cavsec::proto
