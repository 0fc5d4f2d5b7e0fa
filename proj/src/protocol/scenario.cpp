#include "cavsec/protocol/scenario.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cavsec::proto {

using sim::Micros;
using json = nlohmann::json;

namespace {

Bytes u32_bytes(std::uint32_t v) {
  Bytes b;
  put_u32(b, v);
  return b;
}

Bytes pack_names(const std::vector<std::string>& names) {
  std::vector<Bytes> items;
  for (const auto& n : names) items.push_back(to_bytes(n));
  return pack(items);
}

std::string pad2(std::size_t j) { return (j < 10 ? "0" : "") + std::to_string(j); }

}  // namespace

std::vector<Policy> policies_for(const std::vector<std::vector<std::size_t>>& receivers, std::size_t n,
                                 std::size_t count, Rng& rng) {
  std::set<std::size_t> uni, common;
  for (std::size_t i = 0; i < n; ++i) common.insert(i);
  for (const auto& r : receivers) {
    std::set<std::size_t> s(r.begin(), r.end());
    uni.insert(s.begin(), s.end());
    std::set<std::size_t> keep;
    std::set_intersection(common.begin(), common.end(), s.begin(), s.end(), std::inserter(keep, keep.begin()));
    common = std::move(keep);
  }
  if (!receivers.empty() && common.empty())
    throw std::invalid_argument("receivers share no attribute; cannot generate policies all of them satisfy");
  std::vector<std::size_t> required(common.begin(), common.end());
  if (receivers.empty()) required = {0};
  std::vector<std::size_t> outside;
  for (std::size_t i = 0; i < n; ++i)
    if (!uni.count(i) && !receivers.empty()) outside.push_back(i);

  std::vector<Policy> out;
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<int> marks(n, 0);
    marks[required[rng.next_u64() % required.size()]] = 1;
    for (std::size_t i : required)
      if (rng.next_u64() % 2) marks[i] = 1;
    for (std::size_t i : outside)
      if (rng.next_u64() % 3 == 0) marks[i] = -1;
    out.emplace_back(std::move(marks));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t ScenarioReport::verification_failures() const {
  return static_cast<std::size_t>(std::count_if(failures.begin(), failures.end(), [](const sim::Failure& f) {
    return f.reason != FailReason::access_denied;
  }));
}

std::size_t ScenarioReport::unexplained_denials() const {
  return access_denied > expected_denials ? access_denied - expected_denials : 0;
}

Micros ScenarioReport::phase_time(int phase, std::size_t session) const {
  if (phase == 1) session = 0;
  for (const auto& p : phases)
    if (p.phase == phase && p.session == session) return p.duration();
  throw std::out_of_range("phase " + std::to_string(phase) + " of session " + std::to_string(session) +
                          " did not run");
}

std::string ScenarioReport::summary() const {
  std::ostringstream out;
  for (const auto& p : phases)
    out << "session " << p.session << " phase " << p.phase << ": " << p.duration() / 1000.0 << " ms\n";
  out << "uplinks sent " << uplinks_sent << ", receiver deliveries " << uplink_deliveries
      << ", downlink deliveries " << downlink_deliveries << ", access denied " << access_denied
      << ", EM updates " << em_updates << "\n";
  out << "verification failures " << verification_failures() << ", unexplained denials " << unexplained_denials()
      << "\n";
  for (const auto& f : failures) {
    if (f.reason == FailReason::access_denied) continue;
    out << "  t=" << f.time << " " << f.node << " " << f.tag << " " << reason_name(f.reason) << ": " << f.detail
        << "\n";
  }
  out << "transcript " << transcript_hash << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------

Scenario::Scenario(ScenarioConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) { resolve_defaults(); }

void Scenario::resolve_defaults() {
  const std::size_t n = cfg_.attributes;
  if (n < 2 || n > 64) throw std::invalid_argument("attributes must be in [2, 64]");
  if (cfg_.ecus == 0 || cfg_.cavs == 0 || cfg_.types == 0 || cfg_.types > 255)
    throw std::invalid_argument("need at least one CAV, ECU and message type (at most 255 types)");
  if (cfg_.em_inventory == 0) cfg_.em_inventory = cfg_.types;
  if (cfg_.em_inventory < cfg_.types) throw std::invalid_argument("EM inventory smaller than one session");

  Rng gen = rng_.fork("config");
  auto check_attrs = [n](const std::vector<std::size_t>& a, const std::string& who) {
    if (a.empty()) throw std::invalid_argument(who + " has no attributes");
    for (auto i : a)
      if (i >= n) throw std::invalid_argument(who + " has attribute " + std::to_string(i) + " outside the universe");
  };
  if (cfg_.receivers.empty()) {
    ReceiverSpec rsu{"rsu0", "rsu", {}}, ue{"ue0", "ue", {}};
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 2 == 0) rsu.attrs.push_back(i);
      if (i % 3 == 0) ue.attrs.push_back(i);
    }
    cfg_.receivers = {rsu, ue};
  }
  std::set<std::string> names{"cn", "oem", "app"};
  for (const auto& r : cfg_.receivers) {
    if (r.role != "rsu" && r.role != "ue") throw std::invalid_argument("receiver role must be rsu or ue");
    if (!names.insert(r.name).second) throw std::invalid_argument("duplicate node name " + r.name);
    check_attrs(r.attrs, r.name);
  }
  if (cfg_.oem_attrs.empty()) cfg_.oem_attrs = {0, 1};
  check_attrs(cfg_.oem_attrs, "oem");

  if (cfg_.policies.empty()) {
    std::vector<std::vector<std::size_t>> rx;
    for (const auto& r : cfg_.receivers) rx.push_back(r.attrs);
    policies_ = policies_for(rx, n, cfg_.types, gen);
  } else {
    if (cfg_.policies.size() != cfg_.types) throw std::invalid_argument("need one policy per message type");
    for (const auto& p : cfg_.policies) {
      policies_.push_back(Policy::parse(p));
      if (policies_.back().size() != n) throw std::invalid_argument("policy " + p + " has the wrong length");
    }
  }

  if (cfg_.ecu_attrs.empty()) {
    for (std::size_t j = 0; j < cfg_.ecus; ++j) {
      std::vector<std::size_t> a;
      while (a.empty())
        for (std::size_t i = 0; i < n; ++i)
          if (gen.next_u64() % 2) a.push_back(i);
      ecu_attrs_.push_back(std::move(a));
    }
  } else {
    if (cfg_.ecu_attrs.size() != cfg_.ecus) throw std::invalid_argument("need one attribute list per ECU");
    ecu_attrs_ = cfg_.ecu_attrs;
  }
  for (std::size_t j = 0; j < ecu_attrs_.size(); ++j) check_attrs(ecu_attrs_[j], "ECU " + std::to_string(j));
}

std::string Scenario::obu_addr(std::size_t cav) const { return "cav" + std::to_string(cav) + ".obu"; }

std::string Scenario::ecu_addr(std::size_t cav, std::size_t j) const {
  return "cav" + std::to_string(cav) + ".ecu" + pad2(j);
}

void Scenario::build() {
  group_ = GroupParams::generate(cfg_.profile, cfg_.group_seed);
  sim::CostModel cost;
  cost.mode = cfg_.cost_mode;
  if (cfg_.cost_table) cost.table = *cfg_.cost_table;
  net_ = std::make_unique<sim::Network>(std::move(cost));

  const std::size_t n = cfg_.attributes;
  cn_ = std::make_unique<CoreNetwork>("cn", group_, n, rng_.fork("cn"));
  const SystemPublic& pub = cn_->pub();

  auto attach = [this](Entity* e) {
    net_->add_node(e->name(), e->role(), [e](const WireMessage& m, Micros now) { return e->handle(m, now); });
  };
  attach(cn_.get());

  oem_ = std::make_unique<V2xNode>("oem", "oem", pub, rng_.fork("oem"), Clock{}, cn_->enroll("supi-oem"),
                                   cn_->issue_abe_key(AttributeSet(cfg_.oem_attrs, n)),
                                   cn_->issue_signing_key(to_bytes("oem")));
  oem_->batch_size = cfg_.batch_size;
  attach(oem_.get());
  for (const auto& r : cfg_.receivers) {
    auto node = std::make_unique<V2xNode>(r.name, r.role, pub, rng_.fork(r.name), Clock{},
                                          cn_->enroll("supi-" + r.name), cn_->issue_abe_key(AttributeSet(r.attrs, n)),
                                          cn_->issue_signing_key(to_bytes(r.name)));
    node->batch_size = cfg_.batch_size;
    attach(node.get());
    receivers_[r.name] = std::move(node);
  }

  for (std::size_t i = 0; i < cfg_.cavs; ++i) {
    const std::string obu = obu_addr(i);
    auto bus = net_->add_channel([&] {
      auto c = sim::ChannelConfig::in_vehicle();
      c.bandwidth_bps = cfg_.bus_bandwidth_bps;
      return c;
    }());
    auto service = net_->add_channel(sim::ChannelConfig::in_vehicle());

    std::vector<EcuLink> links;
    std::vector<std::unique_ptr<Ecu>> ecus;
    for (std::size_t j = 0; j < cfg_.ecus; ++j) {
      const std::string addr = ecu_addr(i, j);
      Rng er = rng_.fork(addr);
      const SymKey k_sa = SymKey::random(KeyRole::ltk_sa_ecu, er);
      const SymKey k_oem = SymKey::random(KeyRole::ltk_oem_ecu, er);
      EcuConfig ec{addr, obu, j == 0 ? "adas" : "ecu", to_bytes(addr), policies_, cfg_.types};
      auto e = std::make_unique<Ecu>(ec, pub, std::move(er), Clock{},
                                     cn_->issue_abe_key(AttributeSet(ecu_attrs_[j], n)),
                                     cn_->issue_signing_key(ec.id), k_sa, k_oem, cn_->make_tpm());
      oem_->add_ecu(addr, ec.id, k_oem);
      links.push_back({addr, ec.id, k_sa});
      attach(e.get());
      net_->link(obu, addr, bus, k_sa.bytes());
      net_->link("oem", addr, service, k_oem.bytes());
      ecus.push_back(std::move(e));
    }
    auto o = std::make_unique<Obu>(obu, pub, rng_.fork(obu), Clock{}, cn_->enroll("supi-" + obu),
                                   cn_->issue_signing_key(to_bytes(obu)), std::move(links));
    attach(o.get());
    obus_.push_back(std::move(o));
    ecus_.push_back(std::move(ecus));
  }

  std::vector<std::string> v2x{"cn", "oem"};
  for (const auto& r : cfg_.receivers) v2x.push_back(r.name);
  for (std::size_t i = 0; i < cfg_.cavs; ++i) v2x.push_back(obu_addr(i));
  for (std::size_t a = 0; a < v2x.size(); ++a)
    for (std::size_t b = a + 1; b < v2x.size(); ++b) {
      auto c = sim::ChannelConfig::v2x();
      c.latency_us = cfg_.v2x_latency_us;
      c.bandwidth_bps = cfg_.v2x_bandwidth_bps;
      net_->link(v2x[a], v2x[b], net_->add_channel(c));
    }
}

void Scenario::mark(int phase, Micros start) {
  phases_.push_back({phase == 1 ? 0 : session_, phase, start, std::max(start, net_->now())});
}

Bytes Scenario::payload() { return rng_.bytes(cfg_.payload_bytes); }

void Scenario::provision() {
  if (provisioned_) throw std::logic_error("already provisioned");
  if (!net_) build();
  provisioned_ = true;
  const Micros start = net_->now();
  for (std::size_t i = 0; i < cfg_.cavs; ++i)
    for (std::size_t j = 0; j < cfg_.ecus; ++j) {
      WireMessage m(1, 0, "app", "oem");
      m.add("ecu", to_bytes(ecu_addr(i, j))).add("count", u32_bytes(static_cast<std::uint32_t>(cfg_.em_inventory)));
      net_->post_local(std::move(m), start);
    }
  net_->run();
  mark(1, start);
}

void Scenario::run_phase2() {
  if (!provisioned_) provision();
  ++session_;
  const Micros start = net_->now();
  std::vector<std::string> subs{"oem"};
  for (const auto& r : cfg_.receivers) subs.push_back(r.name);
  for (std::size_t i = 0; i < cfg_.cavs; ++i) subs.push_back(obu_addr(i));
  for (const auto& s : subs) net_->post_local(WireMessage(2, 0, "app", s), start);
  net_->run();
  mark(2, start);
}

void Scenario::uplink(const UplinkSpec& u) {
  WireMessage m(3, 0, "app", u.ecu);
  std::vector<std::string> dest = u.dest;
  if (dest.empty())
    for (const auto& r : cfg_.receivers) dest.push_back(r.name);
  m.add("type", Bytes{static_cast<std::uint8_t>(u.type)});
  m.add("payload", u.payload.empty() ? payload() : u.payload);
  m.add("dest", pack_names(dest));
  for (const auto& name : dest) {
    const std::vector<std::size_t>* attrs = name == "oem" ? &cfg_.oem_attrs : nullptr;
    for (const auto& r : cfg_.receivers)
      if (r.name == name) attrs = &r.attrs;
    if (attrs && u.type < policies_.size() &&
        !policies_[u.type].satisfied_by(AttributeSet(*attrs, cfg_.attributes)))
      ++expected_denials_;
  }
  net_->post_local(std::move(m), net_->now());
  ++uplinks_sent_;
}

void Scenario::downlink(const DownlinkSpec& d) {
  WireMessage m(3, 5, "app", d.sender);
  m.add("policy", to_bytes(d.policy)).add("payload", d.payload.empty() ? payload() : d.payload);
  m.add("cav", to_bytes(d.cav)).add("ecus", pack_names(d.ecus));
  const Policy policy = Policy::parse(d.policy);
  for (std::size_t i = 0; i < cfg_.cavs; ++i) {
    if (obu_addr(i) != d.cav) continue;
    for (std::size_t j = 0; j < cfg_.ecus; ++j) {
      const bool targeted =
          d.ecus.empty() || std::find(d.ecus.begin(), d.ecus.end(), ecu_addr(i, j)) != d.ecus.end();
      if (targeted && !policy.satisfied_by(AttributeSet(ecu_attrs_[j], cfg_.attributes))) ++expected_denials_;
    }
  }
  net_->post_local(std::move(m), net_->now());
}

void Scenario::run_phase3() {
  const Micros start = net_->now();
  if (!cfg_.uplinks.empty()) {
    for (const auto& u : cfg_.uplinks) uplink(u);
  } else if (cfg_.auto_uplinks) {
    for (std::size_t i = 0; i < cfg_.cavs; ++i)
      for (std::size_t j = 0; j < cfg_.ecus; ++j) uplink({ecu_addr(i, j), j % cfg_.types, {}, {}});
  }
  for (const auto& d : cfg_.downlinks) downlink(d);
  net_->run();
  for (auto* e : entities())
    if (auto* v = dynamic_cast<V2xNode*>(e)) v->flush(net_->now());
  mark(3, start);
}

void Scenario::run_phase4() {
  const Micros start = net_->now();
  for (auto& cav : ecus_)
    for (auto& e : cav)
      if (e->needs_em()) {
        WireMessage m(4, 0, "app", "oem");
        m.add("ecu", to_bytes(e->name()));
        m.add("count", u32_bytes(static_cast<std::uint32_t>(cfg_.em_inventory - e->inventory())));
        net_->post_local(std::move(m), start);
        ++em_updates_;
      }
  net_->run();
  mark(4, start);
}

ScenarioReport Scenario::run() {
  provision();
  for (std::size_t s = 0; s < cfg_.sessions; ++s) {
    run_phase2();
    run_phase3();
    run_phase4();
  }
  return report();
}

ScenarioReport Scenario::report() const {
  ScenarioReport r;
  r.phases = phases_;
  if (!net_) return r;
  r.failures = net_->failures();
  r.uplinks_sent = uplinks_sent_;
  r.em_updates = em_updates_;
  for (const auto& [name, v] : receivers_) r.uplink_deliveries += v->delivered().size();
  r.uplink_deliveries += oem_->delivered().size();
  for (const auto& cav : ecus_)
    for (const auto& e : cav) r.downlink_deliveries += e->delivered().size();
  r.access_denied = r.failures.size() - r.verification_failures();
  r.expected_denials = expected_denials_;
  r.transcript_hash = net_->transcript_hash();
  return r;
}

sim::Network& Scenario::network() {
  if (!net_) build();
  return *net_;
}

CoreNetwork& Scenario::cn() {
  network();
  return *cn_;
}

V2xNode& Scenario::oem() {
  network();
  return *oem_;
}

V2xNode& Scenario::receiver(const std::string& name) {
  network();
  if (name == "oem") return *oem_;
  return *receivers_.at(name);
}

Obu& Scenario::obu(std::size_t cav) {
  network();
  return *obus_.at(cav);
}

Ecu& Scenario::ecu(std::size_t cav, std::size_t j) {
  network();
  return *ecus_.at(cav).at(j);
}

Ecu& Scenario::ecu(const std::string& addr) {
  network();
  for (auto& cav : ecus_)
    for (auto& e : cav)
      if (e->name() == addr) return *e;
  throw std::out_of_range("no ECU " + addr);
}

std::vector<Entity*> Scenario::entities() {
  network();
  std::vector<Entity*> out{cn_.get(), oem_.get()};
  for (auto& [n, r] : receivers_) out.push_back(r.get());
  for (auto& o : obus_) out.push_back(o.get());
  for (auto& cav : ecus_)
    for (auto& e : cav) out.push_back(e.get());
  return out;
}

// ---------------------------------------------------------------------------
// Config file

namespace {

const std::set<std::string> kKeys{
    "seed",         "profile",      "group_seed", "attributes",     "cavs",           "ecus",
    "types",        "policies",     "ecu_attrs",  "oem_attrs",      "em_inventory",   "receivers",
    "uplinks",      "auto_uplinks", "downlinks",  "sessions",       "payload_bytes",  "batch_size",
    "v2x_latency_us", "v2x_bandwidth_bps", "bus_bandwidth_bps", "cost_mode", "cost_table"};

Bytes payload_of(const json& j) { return j.contains("payload") ? from_hex(j.at("payload").get<std::string>()) : Bytes{}; }

}  // namespace

ScenarioConfig ScenarioConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("scenario config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!kKeys.count(k)) throw std::invalid_argument("scenario config: unknown key " + k);

  ScenarioConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.profile = parse_profile(j.value("profile", std::string(profile_name(c.profile))));
    c.group_seed = j.value("group_seed", c.group_seed);
    c.attributes = j.value("attributes", c.attributes);
    c.cavs = j.value("cavs", c.cavs);
    c.ecus = j.value("ecus", c.ecus);
    c.types = j.value("types", c.types);
    c.policies = j.value("policies", c.policies);
    c.ecu_attrs = j.value("ecu_attrs", c.ecu_attrs);
    c.oem_attrs = j.value("oem_attrs", c.oem_attrs);
    c.em_inventory = j.value("em_inventory", c.em_inventory);
    c.auto_uplinks = j.value("auto_uplinks", c.auto_uplinks);
    c.sessions = j.value("sessions", c.sessions);
    c.payload_bytes = j.value("payload_bytes", c.payload_bytes);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.v2x_latency_us = j.value("v2x_latency_us", c.v2x_latency_us);
    c.v2x_bandwidth_bps = j.value("v2x_bandwidth_bps", c.v2x_bandwidth_bps);
    c.bus_bandwidth_bps = j.value("bus_bandwidth_bps", c.bus_bandwidth_bps);
    const std::string mode = j.value("cost_mode", std::string("synthetic"));
    if (mode == "synthetic") {
      c.cost_mode = sim::CostMode::synthetic;
    } else if (mode == "measured") {
      c.cost_mode = sim::CostMode::measured;
    } else {
      throw std::invalid_argument("cost_mode must be synthetic or measured");
    }
    if (j.contains("cost_table")) c.cost_table = sim::CostTable::from_text(j.at("cost_table").get<std::string>());
    for (const auto& r : j.value("receivers", json::array()))
      c.receivers.push_back({r.at("name").get<std::string>(), r.value("role", std::string("rsu")),
                             r.at("attrs").get<std::vector<std::size_t>>()});
    for (const auto& u : j.value("uplinks", json::array()))
      c.uplinks.push_back({u.at("ecu").get<std::string>(), u.value("type", std::size_t{0}), payload_of(u),
                           u.value("dest", std::vector<std::string>{})});
    for (const auto& d : j.value("downlinks", json::array()))
      c.downlinks.push_back({d.value("sender", std::string("oem")), d.at("policy").get<std::string>(),
                             d.value("cav", std::string("cav0.obu")), d.value("ecus", std::vector<std::string>{}),
                             payload_of(d)});
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario config: ") + e.what());
  }
  return c;
}

std::string ScenarioConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["profile"] = std::string(profile_name(profile));
  j["group_seed"] = group_seed;
  j["attributes"] = attributes;
  j["cavs"] = cavs;
  j["ecus"] = ecus;
  j["types"] = types;
  j["policies"] = policies;
  j["ecu_attrs"] = ecu_attrs;
  j["oem_attrs"] = oem_attrs;
  j["em_inventory"] = em_inventory;
  j["auto_uplinks"] = auto_uplinks;
  j["sessions"] = sessions;
  j["payload_bytes"] = payload_bytes;
  j["batch_size"] = batch_size;
  j["v2x_latency_us"] = v2x_latency_us;
  j["v2x_bandwidth_bps"] = v2x_bandwidth_bps;
  j["bus_bandwidth_bps"] = bus_bandwidth_bps;
  j["cost_mode"] = cost_mode == sim::CostMode::synthetic ? "synthetic" : "measured";
  if (cost_table) j["cost_table"] = cost_table->to_text();
  j["receivers"] = json::array();
  for (const auto& r : receivers) j["receivers"].push_back({{"name", r.name}, {"role", r.role}, {"attrs", r.attrs}});
  j["uplinks"] = json::array();
  for (const auto& u : uplinks)
    j["uplinks"].push_back({{"ecu", u.ecu}, {"type", u.type}, {"payload", to_hex(u.payload)}, {"dest", u.dest}});
  j["downlinks"] = json::array();
  for (const auto& d : downlinks)
    j["downlinks"].push_back({{"sender", d.sender}, {"policy", d.policy}, {"cav", d.cav}, {"ecus", d.ecus},
                              {"payload", to_hex(d.payload)}});
  return j.dump(2);
}

}  // namespace cavsec::proto
