#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cavsec/bench.hpp"
#include "cavsec/protocol/scenario.hpp"

using namespace cavsec;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spill(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

SecurityProfile default_profile() {
  const char* env = std::getenv("CAVSEC_PROFILE");
  return env ? parse_profile(env) : SecurityProfile::test;
}

// "3.4:cm" flips the low bit of the first byte of field cm in the first 3.4 message.
sim::Tap tamper_tap(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("--tamper expects TAG:FIELD");
  const std::string tag = spec.substr(0, colon), field = spec.substr(colon + 1);
  sim::Tap t;
  t.mode = sim::TapMode::inject;
  t.match = [tag, field](const WireMessage& m) { return m.tag() == tag && m.has(field); };
  t.mutate = [field](WireMessage& m) {
    Bytes& v = m.at(field);
    if (v.empty()) v.push_back(1);
    else v[0] ^= 1;
  };
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cavsec: attribute-based vehicular messaging toolkit"};
  app.require_subcommand(1);
  std::string profile_name_opt;
  app.add_option("--profile", profile_name_opt, "test | standard (default: $CAVSEC_PROFILE or test)");

  auto* params = app.add_subcommand("params", "Generate and print group parameters");
  std::uint64_t group_seed = 1;
  params->add_option("--group-seed", group_seed);

  auto* bench = app.add_subcommand("bench", "Benchmark every primitive across an attribute sweep");
  bench::Options bopt;
  std::string bench_out = "-";
  bench->add_option("--attrs", bopt.attrs, "Sweep values")->delimiter(',');
  bench->add_option("--iters", bopt.iters, "Iterations per point");
  bench->add_option("--seed", bopt.seed);
  bench->add_option("--ops", bopt.ops, "Restrict to these ops")->delimiter(',');
  bench->add_option("--out", bench_out, "CSV destination ('-' for stdout)");

  auto* run = app.add_subcommand("run", "Run phases 1-4 of a scenario");
  std::string config_path, transcript_path, costs_path, tamper;
  std::optional<std::uint64_t> run_seed;
  run->add_option("--config", config_path, "Scenario JSON")->check(CLI::ExistingFile);
  run->add_option("--seed", run_seed);
  run->add_option("--transcript", transcript_path, "Write the transcript here");
  run->add_option("--costs", costs_path, "Cost table file")->check(CLI::ExistingFile);
  run->add_option("--tamper", tamper, "TAG:FIELD to flip one bit in flight");

  auto* audit = app.add_subcommand("audit", "Compare uplink operation counts to the closed-form costs");
  std::size_t n_s = 16, n_r = 8;
  std::string audit_scenario;
  audit->add_option("--ns", n_s, "System attributes");
  audit->add_option("--nr", n_r, "Receiver attributes");
  audit->add_option("--scenario", audit_scenario, "Take N_s and N_r from a scenario JSON")->check(CLI::ExistingFile);

  auto* calib = app.add_subcommand("calibrate", "Measure per-op costs and print a cost table");
  std::size_t calib_iters = 1000;
  double obu_scale = 1.9, ecu_scale = 1950;
  calib->add_option("--iters", calib_iters);
  calib->add_option("--obu-scale", obu_scale);
  calib->add_option("--ecu-scale", ecu_scale);
  bool synthetic = false;
  calib->add_flag("--synthetic", synthetic, "Print the built-in synthetic table instead");

  CLI11_PARSE(app, argc, argv);

  try {
    const SecurityProfile profile = profile_name_opt.empty() ? default_profile() : parse_profile(profile_name_opt);

    if (*params) {
      const Group g = GroupParams::generate(profile, group_seed);
      std::cout << "profile " << profile_name(profile) << "\np " << g->p().get_str(16) << "\nq " << g->q().get_str(16)
                << "\ng " << g->g().get_str(16) << "\n|p|=" << g->p_bits() << " |q|=" << g->q_bits() << "\n";
      return 0;
    }

    if (*bench) {
      bopt.profile = profile;
      const auto rep = bench::bench_primitives(bopt);
      spill(bench_out, rep.csv());
      return rep.audit_passed() ? 0 : 1;
    }

    if (*run) {
      proto::ScenarioConfig cfg;
      if (!config_path.empty()) cfg = proto::ScenarioConfig::from_json(slurp(config_path));
      if (!profile_name_opt.empty()) cfg.profile = profile;
      if (run_seed) cfg.seed = *run_seed;
      if (!costs_path.empty()) cfg.cost_table = sim::CostTable::from_text(slurp(costs_path));
      proto::Scenario s(cfg);
      if (!tamper.empty()) s.network().add_tap(tamper_tap(tamper));
      s.provision();
      for (std::size_t i = 0; i < cfg.sessions; ++i) {
        s.run_phase2();
        s.run_phase3();
        s.run_phase4();
      }
      const auto rep = s.report();
      std::cout << rep.summary();
      if (!transcript_path.empty()) {
        std::string text;
        for (const auto& line : s.network().transcript()) text += line + "\n";
        spill(transcript_path, text);
      }
      return rep.clean() ? 0 : 2;
    }

    if (*audit) {
      if (!audit_scenario.empty()) {
        const auto cfg = proto::ScenarioConfig::from_json(slurp(audit_scenario));
        n_s = cfg.attributes;
        if (!cfg.receivers.empty()) n_r = cfg.receivers.front().attrs.size();
      }
      const auto res = bench::audit_costs(n_s, n_r, 1, profile);
      std::cout << res.text();
      return res.pass() ? 0 : 1;
    }

    if (*calib) {
      if (synthetic) {
        std::cout << sim::CostTable::synthetic_default().to_text();
        return 0;
      }
      std::cout << bench::calibrate(profile, calib_iters, obu_scale, ecu_scale).to_text();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
