#include "cavsec/bench.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>

#include "cavsec/abe.hpp"
#include "cavsec/ibs.hpp"
#include "cavsec/protocol/scenario.hpp"
#include "cavsec/sym.hpp"
#include "cavsec/tokens.hpp"

namespace cavsec::bench {

namespace {

using Clock = std::chrono::steady_clock;

volatile std::size_t g_sink = 0;

template <class Setup, class Run>
Row measure(const std::string& op, const std::string& role, std::size_t n, const Options& o, Setup setup,
            Run run) {
  Row row{op, role, n, 0, 0, {}, true, o.iters, o.seed};
  std::vector<double> times;
  times.reserve(o.iters);
  for (std::size_t i = 0; i < o.iters; ++i) {
    auto state = [&] {
      counters::Suspend quiet;
      return setup();
    }();
    OpScope scope;
    const auto t0 = Clock::now();
    g_sink = g_sink + run(state);
    const auto t1 = Clock::now();
    const OpCounts d = scope.delta();
    if (i == 0) {
      row.counts = d;
    } else if (!(d == row.counts)) {
      row.counts_stable = false;
    }
    times.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  row.mean_us = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
  std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
  row.median_us = times[times.size() / 2];
  return row;
}

bool wanted(const Options& o, const std::string& op) {
  return o.ops.empty() || std::find(o.ops.begin(), o.ops.end(), op) != o.ops.end();
}

// Repeating +, 0, - so the share of each mark stays fixed across the sweep.
Policy sweep_policy(std::size_t n) {
  std::vector<int> marks(n);
  for (std::size_t i = 0; i < n; ++i) marks[i] = 1 - static_cast<int>(i % 3);
  return Policy(marks);
}

std::vector<std::size_t> first(std::size_t k) {
  std::vector<std::size_t> v(k);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

struct Nothing {};

}  // namespace

std::string csv_header() { return "op,role,n,mean_us,exp,mul,prf,sym,iters,seed"; }

const Row& Report::row(const std::string& op, std::size_t n) const {
  for (const auto& r : rows)
    if (r.op == op && r.n == n) return r;
  throw std::out_of_range("no benchmark row " + op + " n=" + std::to_string(n));
}

bool Report::audit_passed() const {
  return std::none_of(audit.begin(), audit.end(), [](const std::string& a) { return a.find("FAIL") != std::string::npos; });
}

std::string Report::csv() const {
  std::ostringstream out;
  out << csv_header() << "\n";
  out.setf(std::ios::fixed);
  out.precision(3);
  for (const auto& r : rows)
    out << r.op << ',' << r.role << ',' << r.n << ',' << r.mean_us << ',' << r.counts.exp << ',' << r.counts.mul()
        << ',' << r.counts.prf() << ',' << r.counts.sym() << ',' << r.iters << ',' << r.seed << "\n";
  for (const auto& a : audit) out << "# " << a << "\n";
  return out.str();
}

Report bench_primitives(const Options& opts) {
  if (opts.attrs.empty()) throw std::invalid_argument("empty attribute sweep");
  for (auto n : opts.attrs)
    if (n < 1 || n > 64) throw std::invalid_argument("sweep value " + std::to_string(n) + " outside [1, 64]");
  if (opts.iters == 0) throw std::invalid_argument("iterations must be positive");

  Report rep;
  rep.options = opts;
  const Group group = GroupParams::generate(opts.profile, opts.group_seed);
  Rng rng(opts.seed);
  const std::size_t n_max = *std::max_element(opts.attrs.begin(), opts.attrs.end());

  for (std::size_t n : opts.attrs) {
    const auto mk = abe_setup(group, n, rng);
    const Policy policy = sweep_policy(n);
    const auto some = AttributeSet(first(std::max<std::size_t>(1, n / 2)), n);
    const auto mo_a = abe_out_encrypt1(mk.mpk, Scalar::random_nonzero(group, rng));
    const auto mo_b = abe_out_encrypt1(mk.mpk, Scalar::random_nonzero(group, rng));
    const auto pc = abe_out_encrypt2(mk.mpk, mo_a, mo_b);

    if (wanted(opts, "abe_keygen"))
      rep.rows.push_back(measure("abe_keygen", "cn", n, opts, [] { return Nothing{}; },
                                 [&](Nothing&) { return abe_keygen(mk, some, rng).attrs.size(); }));
    if (wanted(opts, "abe_encrypt"))
      rep.rows.push_back(measure("abe_encrypt", "rsu", n, opts, [&] { return GroupElement::random(group, rng); },
                                 [&](GroupElement& m) { return abe_encrypt(mk.mpk, policy, m, rng).B.size(); }));
    if (wanted(opts, "abe_out_encrypt1"))
      rep.rows.push_back(measure("abe_out_encrypt1", "obu", n, opts,
                                 [&] { return Scalar::random_nonzero(group, rng); },
                                 [&](Scalar& v) { return abe_out_encrypt1(mk.mpk, v).mo2.size(); }));
    if (wanted(opts, "abe_out_encrypt2"))
      rep.rows.push_back(measure("abe_out_encrypt2", "ecu", n, opts, [] { return Nothing{}; },
                                 [&](Nothing&) { return abe_out_encrypt2(mk.mpk, mo_a, mo_b).Bp.size(); }));
    if (wanted(opts, "abe_select_policy"))
      rep.rows.push_back(measure("abe_select_policy", "ecu", n, opts, [&] { return GroupElement::random(group, rng); },
                                 [&](GroupElement& m) { return abe_select_policy(pc, policy, m, rng).B.size(); }));
  }

  if (wanted(opts, "abe_decrypt")) {
    // Receiver-attribute sweep in a system of the largest size.
    const auto mk = abe_setup(group, n_max, rng);
    const auto c = abe_encrypt(mk.mpk, Policy::parse("+" + std::string(n_max - 1, '0')),
                               GroupElement::random(group, rng), rng);
    for (std::size_t n_r : opts.attrs) {
      const auto key = abe_keygen(mk, AttributeSet(first(n_r), n_max), rng);
      rep.rows.push_back(measure("abe_decrypt", "rsu", n_r, opts, [] { return Nothing{}; },
                                 [&](Nothing&) { return abe_decrypt(c, key).is_identity() ? 1u : 0u; }));
    }
  }

  const auto imk = ibs_setup(group, rng);
  const Bytes id = to_bytes("bench-signer");
  const auto key = ibs_keygen(imk, id, rng);
  const Bytes msg = rng.bytes(48);
  const auto direct = ibs_sign(imk.mspk, key, msg, rng);
  if (wanted(opts, "ibs_sign"))
    rep.rows.push_back(measure("ibs_sign", "rsu", 0, opts, [] { return Nothing{}; },
                               [&](Nothing&) { return ibs_sign(imk.mspk, key, msg, rng).encode().size(); }));
  if (wanted(opts, "ibs_offline_sign"))
    rep.rows.push_back(measure("ibs_offline_sign", "ecu", 0, opts, [] { return Nothing{}; },
                               [&](Nothing&) { return ibs_offline_sign(imk.mspk, rng).Y().is_identity() ? 1u : 0u; }));
  struct SignState {
    OfflineSignState st;
    Scalar x;
    GroupElement yp;
  };
  auto sign_state = [&] {
    auto st = ibs_offline_sign(imk.mspk, rng);
    const auto x = Scalar::random_nonzero(group, rng);
    const auto yp = ibs_out_sign1(st.Y(), x);
    return SignState{std::move(st), x, yp};
  };
  if (wanted(opts, "ibs_out_sign1"))
    rep.rows.push_back(measure("ibs_out_sign1", "obu", 0, opts, sign_state,
                               [&](SignState& s) { return ibs_out_sign1(s.st.Y(), s.x).is_identity() ? 1u : 0u; }));
  if (wanted(opts, "ibs_out_sign2"))
    rep.rows.push_back(measure("ibs_out_sign2", "ecu", 0, opts, sign_state, [&](SignState& s) {
      return ibs_out_sign2(imk.mspk, key, s.st, s.x, s.yp, msg, rng).encode().size();
    }));
  if (wanted(opts, "ibs_verify"))
    rep.rows.push_back(measure("ibs_verify", "rsu", 0, opts, [] { return Nothing{}; },
                               [&](Nothing&) { return ibs_verify(imk.mspk, id, direct, msg) ? 1u : 0u; }));
  if (wanted(opts, "ibs_batch_verify")) {
    std::vector<BatchItem> batch;
    for (int i = 0; i < 10; ++i) batch.push_back({id, ibs_sign(imk.mspk, key, msg, rng), msg});
    rep.rows.push_back(measure("ibs_batch_verify", "rsu", batch.size(), opts, [] { return Nothing{}; },
                               [&](Nothing&) { return ibs_batch_verify(imk.mspk, batch) ? 1u : 0u; }));
  }
  if (wanted(opts, "token_derive") || wanted(opts, "token_verify")) {
    const Scalar x_cn = Scalar::random_nonzero(group, rng);
    const auto y_cn = GroupElement::generator(group).pow(x_cn);
    const auto cn = issue_cn_token(imk.mspk, x_cn, id, 10'000, rng);
    const auto ut = derive_user_token(imk.mspk, cn, key, 100, rng);
    if (wanted(opts, "token_derive"))
      rep.rows.push_back(measure("token_derive", "obu", 0, opts, [] { return Nothing{}; },
                                 [&](Nothing&) { return derive_user_token(imk.mspk, cn, key, 100, rng).t_cur; }));
    if (wanted(opts, "token_verify"))
      rep.rows.push_back(measure("token_verify", "rsu", 0, opts, [] { return Nothing{}; }, [&](Nothing&) {
        return static_cast<std::size_t>(verify_user_token(ut, imk.mspk, y_cn, id, 100));
      }));
  }

  auto check = [&](const std::string& name, bool ok, const std::string& detail) {
    rep.audit.push_back(name + ": " + (ok ? "pass" : "FAIL " + detail));
  };
  for (const auto& r : rep.rows) {
    const std::string at = r.op + " n=" + std::to_string(r.n);
    if (r.op == "abe_decrypt") check(at + " exp=2", r.counts.exp == 2, "exp=" + std::to_string(r.counts.exp));
    if (r.op == "abe_encrypt")
      check(at + " exp=N+2 mul=N", r.counts.exp == r.n + 2 && r.counts.mul() == r.n, r.counts.summary());
    if (r.op == "abe_out_encrypt1") check(at + " exp=N+2", r.counts.exp == r.n + 2, r.counts.summary());
    if (r.op == "abe_out_encrypt2")
      check(at + " mul=N+2 exp=0", r.counts.mul() == r.n + 2 && r.counts.exp == 0, r.counts.summary());
    if (r.op == "abe_select_policy")
      check(at + " mul=N exp=0", r.counts.mul() == r.n && r.counts.exp == 0, r.counts.summary());
  }
  return rep;
}

// ---------------------------------------------------------------------------

std::string AuditLine::diff() const {
  std::ostringstream out;
  auto one = [&](const char* name, std::uint64_t got, std::uint64_t want) {
    if (got != want) out << ' ' << name << " expected " << want << " got " << got;
  };
  one("exp", measured.exp, expected.exp);
  one("mul", measured.mul(), expected.mul);
  one("prf", measured.prf(), expected.prf);
  one("sym", measured.sym(), expected.sym);
  return out.str();
}

bool AuditResult::pass() const {
  return !lines.empty() && std::all_of(lines.begin(), lines.end(), [](const AuditLine& l) { return l.pass; });
}

std::string AuditResult::text() const {
  std::ostringstream out;
  for (const auto& l : lines) {
    out << (l.pass ? "pass " : "FAIL ") << l.what << ": exp=" << l.measured.exp << " mul=" << l.measured.mul()
        << " prf=" << l.measured.prf() << " sym=" << l.measured.sym();
    if (!l.pass) out << " |" << l.diff();
    out << "\n";
  }
  return out.str();
}

AuditResult audit_costs(std::size_t n_s, std::size_t n_r, std::uint64_t seed, SecurityProfile profile) {
  if (n_s < 1 || n_r < 1 || n_r > n_s || n_s > 64)
    throw std::invalid_argument("need 1 <= N_r <= N_s <= 64");
  proto::ScenarioConfig c;
  c.seed = seed;
  c.profile = profile;
  c.attributes = n_s;
  c.ecus = 1;
  c.types = 1;
  c.policies = {"+" + std::string(n_s - 1, '0')};
  c.ecu_attrs = {{0}};
  c.receivers = {{"rx", "rsu", first(n_r)}};
  c.auto_uplinks = false;
  proto::Scenario s(c);
  s.provision();
  s.run_phase2();

  const std::size_t before = s.network().records().size();
  const std::string ecu = s.ecu_addr(0, 0);
  s.uplink({ecu, 0, {}, {"rx"}});
  s.network().run();

  OpCounts sender, receiver;
  for (std::size_t i = before; i < s.network().records().size(); ++i) {
    const auto& r = s.network().records()[i];
    if (r.node == ecu && (r.tag == "3.0" || r.tag == "3.2")) sender += r.counts;
    if (r.node == "rx" && r.tag == "3.4") receiver += r.counts;
  }
  if (!s.network().failures().empty())
    throw std::runtime_error("audit uplink failed: " + s.network().failures().front().detail);
  if (s.receiver("rx").delivered().size() != 1) throw std::runtime_error("audit uplink was not delivered");

  AuditResult res;
  res.n_s = n_s;
  res.n_r = n_r;
  auto line = [](std::string what, const OpCounts& got, Expected want) {
    AuditLine l{std::move(what), got, want, false};
    l.pass = got.exp == want.exp && got.mul() == want.mul && got.prf() == want.prf && got.sym() == want.sym;
    return l;
  };
  res.lines.push_back(line("sender N_s=" + std::to_string(n_s), sender, {0, n_s + 3, 3, 4}));
  res.lines.push_back(line("receiver N_r=" + std::to_string(n_r), receiver, {11, n_r + 8, 6, 2}));
  return res;
}

// ---------------------------------------------------------------------------

sim::CostTable calibrate(SecurityProfile profile, std::size_t iters, double obu_scale, double ecu_scale,
                         std::uint64_t seed) {
  if (iters == 0) throw std::invalid_argument("iterations must be positive");
  Options o;
  o.iters = iters;
  o.seed = seed;
  const Group group = GroupParams::generate(profile, 1);
  Rng rng(seed);
  const auto g = GroupElement::generator(group);
  const auto a = GroupElement::random(group, rng);
  const auto s = Scalar::random_nonzero(group, rng);
  const auto t = Scalar::random_nonzero(group, rng);
  const Bytes data = rng.bytes(48);
  const SymKey key = SymKey::random(KeyRole::sek, rng);
  const Bytes nonce = rng.bytes(kNonceBytes);
  const Bytes enc = a.encode();

  auto us = [&](auto fn) {
    return measure("", "", 0, o, [] { return Nothing{}; }, [&](Nothing&) { return fn(); }).mean_us;
  };
  sim::OpCosts c;
  c.exp = us([&] { return g.pow(s).is_identity() ? 1u : 0u; });
  c.group_mul = us([&] { return (a * g).is_identity() ? 1u : 0u; });
  c.scalar_mul = us([&] { return (s * t).is_zero() ? 1u : 0u; });
  c.group_inv = us([&] { return a.inverse().is_identity() ? 1u : 0u; });
  c.scalar_inv = us([&] { return s.inverse().is_zero() ? 1u : 0u; });
  c.hash = us([&] { return prf(key, data).size(); });
  c.cipher = us([&] { return sym_encrypt(key, data, nonce).size(); });
  c.kdf = us([&] { return kdf_bytes(data, KdfContext::data_key, 32).size(); });
  c.sample = us([&] { return GroupElement::random(group, rng).is_identity() ? 1u : 0u; });
  c.member_check = us([&] { return GroupElement::decode(group, enc).is_identity() ? 1u : 0u; });

  auto scaled = [&](double f) {
    sim::OpCosts r = c;
    for (double* v : {&r.exp, &r.group_mul, &r.scalar_mul, &r.group_inv, &r.scalar_inv, &r.hash, &r.cipher, &r.kdf,
                      &r.sample, &r.member_check})
      *v *= f;
    return r;
  };
  sim::CostTable table;
  for (const char* role : {"adas", "cn", "rsu", "ue", "oem"}) table.set(role, c);
  table.set("obu", scaled(obu_scale));
  table.set("ecu", scaled(ecu_scale));
  return table;
}

}  // namespace cavsec::bench
