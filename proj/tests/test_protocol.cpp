#include <doctest.h>

#include <cmath>
#include <map>

#include "cavsec/sym.hpp"
#include "protocol_support.hpp"

using namespace cavsec;
using namespace cavsec::proto;
using namespace cavsec::testing;

namespace {

using Failure = sim::Failure;

std::vector<Failure> failures_at(const Scenario& s, const std::string& tag) {
  std::vector<Failure> out;
  for (const auto& f : s.report().failures)
    if (f.tag == tag) out.push_back(f);
  return out;
}

}  // namespace

TEST_CASE("provisioning: credential conformance and EM inventory") {
  auto cfg = small_config();
  Scenario s(cfg);
  s.provision();
  for (auto* e : s.entities()) {
    INFO(e->name());
    CHECK(e->credentials() == expected_credentials(e->role()));
  }
  CHECK(s.ecu(0, 0).role() == "adas");
  CHECK(s.ecu(0, 1).role() == "ecu");
  CHECK(s.obu().credentials().count("SK_U") == 0);
  CHECK(s.ecu(0, 1).tpm().contents() == CredentialSet{"MSSK(sealed)", "y_CN"});
  for (std::size_t j = 0; j < cfg.ecus; ++j) CHECK(s.ecu(0, j).inventory() == cfg.types);
  CHECK(s.report().failures.empty());
}

TEST_CASE("every installed EM matches the OEM audit log") {
  Scenario s(small_config(3));
  s.provision();
  std::map<std::pair<std::string, std::uint64_t>, Scalar> v;
  for (const auto& r : s.oem().em_audit()) v.emplace(std::make_pair(r.ecu, r.serial), r.v);
  const auto& mpk = s.oem().pub().mpk;
  std::size_t checked = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    const auto& ecu = s.ecu(0, j);
    for (const auto& [serial, pc] : ecu.inventory_view()) {
      const auto it = v.find({ecu.name(), serial});
      REQUIRE(it != v.end());
      CHECK(pc.encode() == abe_out_encrypt1(mpk, it->second).encode());
      ++checked;
    }
  }
  CHECK(checked == 6);
}

TEST_CASE("phase 2 with one ECU and two types leaves two prepared types") {
  ScenarioConfig cfg = small_config(5);
  cfg.ecus = 1;
  cfg.ecu_attrs = {{0, 1}};
  cfg.downlinks.clear();
  Scenario s(cfg);
  s.provision();
  s.run_phase2();
  CHECK(s.report().failures.empty());
  CHECK(s.ecu(0, 0).prepared(0));
  CHECK(s.ecu(0, 0).prepared(1));
  CHECK(s.ecu(0, 0).inventory() == 0);
  CHECK(s.ecu(0, 0).needs_em());
  CHECK(s.obu().session_ready("cav0.ecu00"));
  CHECK(matches_golden("phase2_1ecu_2types.txt", transcript_text(s.network())));

  const std::size_t before = s.network().transcript().size();
  s.uplink({"cav0.ecu00", 1, Bytes(48, 0x5a), {"rsu0"}});
  s.network().run();
  CHECK(s.report().failures.empty());
  REQUIRE(s.receiver("rsu0").delivered().size() == 1);
  CHECK(s.receiver("rsu0").delivered()[0].payload == Bytes(48, 0x5a));
  CHECK_FALSE(s.ecu(0, 0).prepared(1));
  std::string uplink;
  for (std::size_t i = before; i < s.network().transcript().size(); ++i) uplink += s.network().transcript()[i] + "\n";
  CHECK(matches_golden("uplink_1ecu.txt", uplink));
}

TEST_CASE("the core network can trace a pseudonym to its subscriber") {
  Scenario s(small_config());
  s.provision();
  s.run_phase2();
  const auto& sub = s.obu().subscriber();
  REQUIRE(sub.ready());
  const auto supi = s.cn().trace(sub.pid());
  REQUIRE(supi.has_value());
  CHECK(*supi == sub.sub.supi);
  CHECK_FALSE(s.cn().trace(Bytes(sub.pid().size(), 0)).has_value());
}

TEST_CASE("corrupted sigma1 aborts at the core network with a MAC failure") {
  const auto log = wire_log(small_config());
  const auto it = std::find_if(log.begin(), log.end(), [](const WireMessage& m) { return m.is(2, 1); });
  REQUIRE(it != log.end());
  const auto rep = run_with(small_config(), flip_bit(*it, "sigma1", 3));
  REQUIRE_FALSE(rep.failures.empty());
  CHECK(rep.failures[0].node == "cn");
  CHECK(rep.failures[0].tag == "2.1");
  CHECK(rep.failures[0].reason == FailReason::mac_failure);
}

TEST_CASE("a wrong N1+1 echo aborts the OBU at the end of phase 2") {
  Scenario s(small_config());
  const std::string obu = s.obu_addr(0);
  sim::Tap t;
  t.mode = sim::TapMode::inject;
  t.match = [&](const WireMessage& m) { return m.is(2, 2) && m.to == obu; };
  // A correctly authenticated reply whose echo is off by one bit.
  t.mutate = [&](WireMessage& m) {
    const auto& sub = s.obu().subscriber().sub;
    const Bytes n2 = m.get("n2");
    auto f = unpack(sym_decrypt(sub.ck, m.get("c2"), n2));
    f[4].back() ^= 1;
    m.at("c2") = sym_encrypt(sub.ck, pack(f), n2);
    m.at("sigma2") = prf(sub.ik, concat({m.get("c2"), n2, sub.suci}));
  };
  s.network().add_tap(t);
  s.provision();
  s.run_phase2();
  const auto f = failures_at(s, "2.2");
  REQUIRE(f.size() == 1);
  CHECK(f[0].node == obu);
  CHECK(f[0].reason == FailReason::bad_echo);
}

TEST_CASE("uplink reaches satisfying receivers and denies the others") {
  ScenarioConfig cfg = small_config();
  cfg.policies = {"+-000000", "++000000"};
  cfg.receivers = {{"rsu0", "rsu", {0, 1, 2}}, {"ue0", "ue", {0, 2}}};
  cfg.downlinks.clear();
  cfg.auto_uplinks = false;
  Scenario s(cfg);
  s.provision();
  s.run_phase2();
  s.uplink({"cav0.ecu01", 1, {}, {}});
  s.network().run();
  const auto rep = s.report();
  CHECK(s.receiver("rsu0").delivered().size() == 1);
  CHECK(s.receiver("ue0").delivered().empty());
  REQUIRE(rep.failures.size() == 1);
  CHECK(rep.failures[0].node == "ue0");
  CHECK(rep.failures[0].reason == FailReason::access_denied);
  CHECK(rep.expected_denials == 1);
  CHECK(rep.clean());

  // Type 0 forbids attribute 1, which rsu0 holds.
  s.uplink({"cav0.ecu02", 0, {}, {}});
  s.network().run();
  CHECK(s.receiver("ue0").delivered().size() == 1);
  CHECK(s.receiver("rsu0").delivered().size() == 1);
  CHECK(s.report().clean());
}

TEST_CASE("tampered C_M is rejected by the receiver") {
  const auto log = wire_log(small_config());
  const auto it = std::find_if(log.begin(), log.end(), [](const WireMessage& m) { return m.is(3, 4); });
  REQUIRE(it != log.end());
  const auto rep = run_with(small_config(), flip_bit(*it, "cm", 9));
  REQUIRE(rep.failures.size() == 1);
  CHECK(rep.failures[0].node == it->to);
  // AEAD decryption under K fails before sigma_M can be recomputed.
  CHECK(rep.failures[0].reason == FailReason::access_denied);
  CHECK(rep.unexplained_denials() == 1);
  CHECK_FALSE(rep.clean());

  const auto sig = run_with(small_config(), flip_bit(*it, "sigmam", 0));
  REQUIRE(sig.failures.size() == 1);
  CHECK(sig.failures[0].reason == FailReason::mac_failure);
}

TEST_CASE("downlink reaches exactly the ECUs whose attributes satisfy the policy") {
  ScenarioConfig cfg = small_config(9);
  cfg.ecus = 4;
  cfg.ecu_attrs = {{0, 1}, {0, 2}, {1, 2}, {0, 1, 7}};
  cfg.auto_uplinks = false;
  cfg.downlinks = {{"oem", "+000000-", "cav0.obu", {}, to_bytes("firmware 1.2")}};
  Scenario s(cfg);
  s.run();
  const Policy p = Policy::parse("+000000-");
  for (std::size_t j = 0; j < 4; ++j) {
    INFO("ecu " << j);
    const bool ok = p.satisfied_by(AttributeSet(cfg.ecu_attrs[j], 8));
    REQUIRE(s.ecu(0, j).delivered().size() == (ok ? 1u : 0u));
    if (ok) CHECK(s.ecu(0, j).delivered()[0].payload == to_bytes("firmware 1.2"));
  }
  const auto rep = s.report();
  CHECK(rep.access_denied == 2);
  CHECK(rep.expected_denials == 2);
  for (const auto& f : rep.failures) CHECK(f.reason == FailReason::access_denied);
  CHECK(rep.clean());
}

TEST_CASE("downlink addressed to a subset skips the others") {
  ScenarioConfig cfg = small_config(10);
  cfg.auto_uplinks = false;
  cfg.downlinks = {{"oem", "+0000000", "cav0.obu", {"cav0.ecu02"}, {}}};
  Scenario s(cfg);
  s.run();
  CHECK(s.ecu(0, 0).delivered().empty());
  CHECK(s.ecu(0, 1).delivered().empty());
  CHECK(s.ecu(0, 2).delivered().size() == 1);
  CHECK(s.report().failures.empty());
}

TEST_CASE("phase 4 restores inventory, rejects an old batch and the next session works") {
  ScenarioConfig cfg = small_config(4);
  cfg.sessions = 2;
  Scenario s(cfg);
  const auto idx = s.network().add_tap({});
  s.provision();
  s.run_phase2();
  for (std::size_t j = 0; j < 3; ++j) CHECK(s.ecu(0, j).needs_em());
  s.run_phase3();
  s.run_phase4();
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(s.ecu(0, j).inventory() == cfg.types);
    CHECK_FALSE(s.ecu(0, j).needs_em());
  }
  CHECK(s.report().em_updates == 3);

  const auto& log = s.network().tap(idx).log;
  const auto old = std::find_if(log.begin(), log.end(), [](const sim::Observed& o) { return o.tag == "1.1"; });
  REQUIRE(old != log.end());
  s.network().send(WireMessage::decode(old->message), s.network().now());
  s.network().run();
  auto f = failures_at(s, "1.1");
  REQUIRE(f.size() == 1);
  CHECK(f[0].reason == FailReason::serial_regression);

  const auto delivered = s.report().uplink_deliveries;
  s.run_phase2();
  s.run_phase3();
  CHECK(s.report().uplink_deliveries == delivered + 6);
  CHECK(s.report().verification_failures() == 1);
}

TEST_CASE("an ECU without EMs cannot finish phase 2") {
  ScenarioConfig cfg = small_config(6);
  cfg.auto_uplinks = false;
  cfg.downlinks.clear();
  Scenario s(cfg);
  s.provision();
  s.run_phase2();
  s.run_phase2();  // no phase 4 in between
  const auto f = failures_at(s, "2.5");
  CHECK(f.size() == 3);
  for (const auto& x : f) CHECK(x.reason == FailReason::em_exhausted);
}

TEST_CASE("an uplink of an already used type fails with em_exhausted") {
  ScenarioConfig cfg = small_config(6);
  cfg.auto_uplinks = false;
  cfg.downlinks.clear();
  Scenario s(cfg);
  s.provision();
  s.run_phase2();
  s.uplink({"cav0.ecu01", 0, {}, {}});
  s.network().run();
  s.uplink({"cav0.ecu01", 0, {}, {}});
  s.network().run();
  const auto f = failures_at(s, "3.0");
  REQUIRE(f.size() == 1);
  CHECK(f[0].reason == FailReason::em_exhausted);
}

TEST_CASE("replaying any recorded message is rejected") {
  const auto cfg = small_config(2);
  const auto base = Scenario(cfg).run();
  REQUIRE(base.failures.empty());
  const auto log = wire_log(cfg);
  CHECK(log.size() > 30);
  const std::set<FailReason> allowed{FailReason::nonce_replay, FailReason::unexpected_message,
                                     FailReason::serial_regression};
  for (const auto& m : log) {
    INFO(m.tag() << " " << m.from << "->" << m.to);
    const auto rep = run_with(cfg, replay_of(m));
    CHECK_FALSE(rep.failures.empty());
    CHECK(rep.uplink_deliveries == base.uplink_deliveries);
    CHECK(rep.downlink_deliveries == base.downlink_deliveries);
    for (const auto& f : rep.failures) CHECK(allowed.count(f.reason) == 1);
  }
}

TEST_CASE("flipping one bit of any wire field aborts at the first verifying step") {
  const auto cfg = small_config(8);
  const auto log = wire_log(cfg);
  Rng rng(8);
  for (const auto& m : log) {
    for (const auto& field : m.fields) {
      if (field.value.empty()) continue;
      INFO(m.tag() << " " << field.name);
      const auto rep = run_with(cfg, flip_bit(m, field.name, rng.next_u64() % (8 * field.value.size())));
      REQUIRE_FALSE(rep.failures.empty());
      CHECK_FALSE(rep.clean());
      CHECK(rep.failures[0].tag == first_verifier(m, field.name));
    }
  }
}

TEST_CASE("the OBU never sees m, K or the payload") {
  Scenario s(small_config(12));
  s.obu().record_observations(true);
  s.run();
  REQUIRE(s.report().failures.empty());
  std::vector<SecretTrace> secrets;
  for (std::size_t j = 0; j < 3; ++j)
    for (const auto& t : s.ecu(0, j).secrets()) secrets.push_back(t);
  for (const auto& t : s.oem().secrets()) secrets.push_back(t);
  REQUIRE(secrets.size() == 4);
  const auto& seen = s.obu().observed();
  CHECK(seen.size() > 20);
  for (const auto& t : secrets)
    for (const auto& b : seen) {
      CHECK_FALSE(contains(b, t.m));
      CHECK_FALSE(contains(b, t.k));
      CHECK_FALSE(contains(b, t.payload));
    }
}

TEST_CASE("two sessions of one OBU share no field value on the air") {
  ScenarioConfig cfg = small_config(13);
  cfg.sessions = 2;
  Scenario s(cfg);
  const auto idx = s.network().add_tap({});
  s.run();
  REQUIRE(s.report().failures.empty());
  const std::string obu = s.obu_addr(0);
  std::set<Bytes> first, second;
  std::size_t session = 0;
  for (const auto& o : s.network().tap(idx).log) {
    if (o.tag == "2.1" && o.from == obu) ++session;
    if (o.from != obu && o.to != obu) continue;
    if (o.frames.size()) continue;  // in-vehicle
    for (const auto& f : WireMessage::decode(o.message).fields) (session == 1 ? first : second).insert(f.value);
  }
  REQUIRE(session == 2);
  CHECK(first.size() > 10);
  // The empty ECU list of a broadcast downlink is a public constant.
  first.erase(pack({}));
  for (const auto& v : second) {
    INFO(to_hex(v));
    CHECK(first.count(v) == 0);
  }
}

TEST_CASE("batch verification path delivers the same payloads") {
  ScenarioConfig cfg = small_config(14);
  cfg.ecus = 4;
  cfg.ecu_attrs = {{0}, {0}, {0}, {0}};
  cfg.batch_size = 3;
  Scenario s(cfg);
  const auto rep = s.run();
  CHECK(rep.failures.empty());
  CHECK(rep.uplink_deliveries == 8);
  CHECK(s.receiver("rsu0").batch_rejected() == 0);
}

TEST_CASE("runs are reproducible bit for bit") {
  const auto a = Scenario(small_config(21)).run();
  const auto b = Scenario(small_config(21)).run();
  const auto c = Scenario(small_config(22)).run();
  CHECK(a.transcript_hash == b.transcript_hash);
  CHECK(a.transcript_hash != c.transcript_hash);
  for (std::size_t i = 0; i < a.phases.size(); ++i) CHECK(a.phases[i].end == b.phases[i].end);
}

TEST_CASE("scenario JSON round trip and rejection of unknown keys") {
  auto cfg = small_config(3);
  cfg.uplinks = {{"cav0.ecu01", 1, Bytes{1, 2, 3}, {"rsu0"}}};
  const auto back = ScenarioConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK_THROWS_AS(ScenarioConfig::from_json(R"({"sede": 1})"), std::invalid_argument);
  CHECK_THROWS_AS(ScenarioConfig::from_json(R"({"cost_mode": "psychic"})"), std::invalid_argument);
  CHECK_THROWS_AS(Scenario(ScenarioConfig::from_json(R"({"attributes": 1})")), std::invalid_argument);
}

TEST_CASE("access control matches the policy oracle exhaustively for N <= 6") {
  for (std::size_t n = 2; n <= 6; ++n) {
    ScenarioConfig cfg;
    cfg.seed = 40 + n;
    cfg.attributes = n;
    cfg.types = 1;
    cfg.policies = {"+" + std::string(n - 1, '0')};
    cfg.receivers = {{"rsu0", "rsu", {0}}};
    cfg.auto_uplinks = false;
    cfg.ecus = (1u << n) - 1;
    for (std::uint64_t mask = 1; mask < (1u << n); ++mask)
      cfg.ecu_attrs.push_back(AttributeSet::from_mask(mask, n).indices());
    std::vector<Policy> policies;
    for (std::uint64_t code = 0; code < static_cast<std::uint64_t>(std::pow(3, n)); ++code) {
      std::vector<int> marks;
      std::uint64_t c = code;
      for (std::size_t i = 0; i < n; ++i, c /= 3) marks.push_back(static_cast<int>(c % 3) - 1);
      if (std::count(marks.begin(), marks.end(), 1) == 0) continue;
      policies.push_back(Policy(marks));
      cfg.downlinks.push_back({"oem", policies.back().to_string(), "cav0.obu", {}, {}});
    }
    Scenario s(cfg);
    const auto rep = s.run();
    INFO("N=" << n);
    CHECK(rep.verification_failures() == 0);
    CHECK(rep.unexplained_denials() == 0);
    for (std::size_t j = 0; j < cfg.ecus; ++j) {
      const AttributeSet attrs(cfg.ecu_attrs[j], n);
      std::size_t expected = 0;
      for (const auto& p : policies) expected += p.satisfied_by(attrs);
      CHECK(s.ecu(0, j).delivered().size() == expected);
    }
  }
}
