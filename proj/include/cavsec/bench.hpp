#pragma once

// Primitive benchmarks, operation-count audits and cost-table calibration.
//
// CSV columns: op,role,n,mean_us,exp,mul,prf,sym,iters,seed
// Counter columns are per call. Lines starting with '#' carry the counter
// audit that follows the rows.

#include <cstdint>
#include <string>
#include <vector>

#include "cavsec/counters.hpp"
#include "cavsec/group.hpp"
#include "cavsec/simnet.hpp"

namespace cavsec::bench {

struct Row {
  std::string op;
  std::string role;
  std::size_t n = 0;
  double mean_us = 0;
  double median_us = 0;
  OpCounts counts;
  /// False when the counters differed between iterations.
  bool counts_stable = true;
  std::size_t iters = 0;
  std::uint64_t seed = 0;
};

struct Options {
  std::vector<std::size_t> attrs{4, 8, 16, 32};
  std::size_t iters = 10000;
  SecurityProfile profile = SecurityProfile::test;
  std::uint64_t seed = 1;
  std::uint64_t group_seed = 1;
  /// Restrict to these op names; empty runs everything.
  std::vector<std::string> ops;
};

struct Report {
  std::vector<Row> rows;
  std::vector<std::string> audit;  // "name: pass|FAIL detail"
  Options options;

  const Row& row(const std::string& op, std::size_t n) const;
  bool audit_passed() const;
  std::string csv() const;
};

/// Throws std::invalid_argument on an empty sweep, a value outside [1, 64],
/// or zero iterations.
Report bench_primitives(const Options& opts);

std::string csv_header();

// ---------------------------------------------------------------------------

struct Expected {
  std::uint64_t exp, mul, prf, sym;
};

struct AuditLine {
  std::string what;
  OpCounts measured;
  Expected expected;
  bool pass = false;
  std::string diff() const;
};

struct AuditResult {
  std::size_t n_s = 0;
  std::size_t n_r = 0;
  std::vector<AuditLine> lines;
  bool pass() const;
  std::string text() const;
};

/// Runs one uplink over a fresh one-ECU scenario and compares the ECU's
/// online cost and the receiver's cost to the closed-form formulas:
///   sender   (N_s + 3) mul, 3 prf, 4 sym, 0 exp
///   receiver 11 exp, (N_r + 8) mul, 6 prf, 2 sym
AuditResult audit_costs(std::size_t n_s, std::size_t n_r, std::uint64_t seed = 1,
                        SecurityProfile profile = SecurityProfile::test);

/// Measures per-op costs on this machine. Desktop roles get the measured
/// values, the OBU and ECUs get them multiplied by the given factors.
sim::CostTable calibrate(SecurityProfile profile, std::size_t iters, double obu_scale = 1.9,
                         double ecu_scale = 1950.0, std::uint64_t seed = 1);

}  // namespace cavsec::bench
