#pragma once

// Fleet construction and end-to-end runs of phases 1-4 over the simulator.
//
// Addresses: "cn", "oem", receivers by name, "cav<i>.obu", "cav<i>.ecu<jj>"
// (ecu00 is the ADAS). Each CAV has one in-vehicle bus shared by its OBU
// and ECUs, plus a separate service bus from the OEM to its ECUs. Every
// V2X pair gets its own link.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cavsec/group.hpp"
#include "cavsec/protocol/entities.hpp"
#include "cavsec/simnet.hpp"

namespace cavsec::proto {

struct ReceiverSpec {
  std::string name;
  std::string role = "rsu";  // rsu | ue
  std::vector<std::size_t> attrs;
};

struct UplinkSpec {
  std::string ecu;
  std::size_t type = 0;
  Bytes payload;
  std::vector<std::string> dest;
};

struct DownlinkSpec {
  std::string sender = "oem";
  std::string policy;
  std::string cav = "cav0.obu";
  std::vector<std::string> ecus;  // empty: every ECU of the CAV
  Bytes payload;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  SecurityProfile profile = SecurityProfile::test;
  std::uint64_t group_seed = 1;
  std::size_t attributes = 16;
  std::size_t cavs = 1;
  std::size_t ecus = 3;   // per CAV, ADAS included
  std::size_t types = 5;  // message types per ECU
  /// One "+0-" string per type; generated when empty.
  std::vector<std::string> policies;
  /// Attribute indices per ECU index; generated when empty.
  std::vector<std::vector<std::size_t>> ecu_attrs;
  std::vector<std::size_t> oem_attrs;
  /// EMs installed per ECU; 0 means one per message type.
  std::size_t em_inventory = 0;
  /// Generated (rsu0, ue0) when empty.
  std::vector<ReceiverSpec> receivers;
  /// Uplinks per session. When empty and auto_uplinks is set, every ECU
  /// sends one message of type (index mod types) to every receiver.
  std::vector<UplinkSpec> uplinks;
  bool auto_uplinks = true;
  std::vector<DownlinkSpec> downlinks;
  /// Number of phase 2/3/4 rounds after provisioning.
  std::size_t sessions = 1;
  std::size_t payload_bytes = 48;
  std::size_t batch_size = 0;

  sim::Micros v2x_latency_us = 1000;
  double v2x_bandwidth_bps = 100e6;
  double bus_bandwidth_bps = 8e6;
  sim::CostMode cost_mode = sim::CostMode::synthetic;
  std::optional<sim::CostTable> cost_table;

  /// Throws std::invalid_argument on unknown keys or bad values.
  static ScenarioConfig from_json(std::string_view text);
  std::string to_json() const;
};

struct PhaseTiming {
  std::size_t session = 0;  // 0 for provisioning
  int phase = 0;
  sim::Micros start = 0;
  sim::Micros end = 0;
  sim::Micros duration() const { return end - start; }
};

struct ScenarioReport {
  std::vector<PhaseTiming> phases;
  std::vector<sim::Failure> failures;
  std::size_t uplinks_sent = 0;
  std::size_t uplink_deliveries = 0;
  std::size_t downlink_deliveries = 0;
  std::size_t access_denied = 0;
  /// Denials explained by policy semantics: recipients whose attributes do
  /// not satisfy the policy they were sent under.
  std::size_t expected_denials = 0;
  std::size_t em_updates = 0;
  std::string transcript_hash;

  /// Failures other than access_denied.
  std::size_t verification_failures() const;
  /// Denials beyond the expected ones; a tampered C_M lands here.
  std::size_t unexplained_denials() const;
  bool clean() const { return verification_failures() == 0 && unexplained_denials() == 0; }
  sim::Micros phase_time(int phase, std::size_t session = 1) const;
  std::string summary() const;
};

class Scenario {
 public:
  explicit Scenario(ScenarioConfig cfg);

  /// Builds the fleet and installs phase-1 credentials and EM batches.
  void provision();
  /// Runs phase 2 for every subscriber (session counter advances).
  void run_phase2();
  /// Runs the configured uplinks and downlinks.
  void run_phase3();
  /// Replenishes every ECU whose inventory fell below one session's worth.
  void run_phase4();
  /// provision + sessions x (2, 3, 4).
  ScenarioReport run();

  /// Queues an uplink or downlink trigger at the current time. Call
  /// network().run() to process it.
  void uplink(const UplinkSpec& u);
  void downlink(const DownlinkSpec& d);

  ScenarioReport report() const;

  const ScenarioConfig& config() const { return cfg_; }
  /// Builds the fleet on first use, so taps can be installed before phase 1.
  sim::Network& network();
  // Entity accessors also build the fleet on first use.
  CoreNetwork& cn();
  V2xNode& oem();
  V2xNode& receiver(const std::string& name);
  Obu& obu(std::size_t cav = 0);
  Ecu& ecu(std::size_t cav, std::size_t j);
  Ecu& ecu(const std::string& addr);
  std::vector<Entity*> entities();
  const std::vector<Policy>& policies() const { return policies_; }
  std::vector<std::size_t> ecu_attributes(std::size_t j) const { return ecu_attrs_.at(j); }
  std::string ecu_addr(std::size_t cav, std::size_t j) const;
  std::string obu_addr(std::size_t cav) const;
  std::size_t session() const { return session_; }

 private:
  void resolve_defaults();
  void build();
  void mark(int phase, sim::Micros start);
  Bytes payload();

  ScenarioConfig cfg_;
  Rng rng_;
  Group group_;
  std::vector<Policy> policies_;
  std::vector<std::vector<std::size_t>> ecu_attrs_;
  std::unique_ptr<sim::Network> net_;
  std::unique_ptr<CoreNetwork> cn_;
  std::unique_ptr<V2xNode> oem_;
  std::map<std::string, std::unique_ptr<V2xNode>> receivers_;
  std::vector<std::unique_ptr<Obu>> obus_;
  std::vector<std::vector<std::unique_ptr<Ecu>>> ecus_;
  std::vector<PhaseTiming> phases_;
  std::size_t session_ = 0;
  std::size_t uplinks_sent_ = 0;
  std::size_t em_updates_ = 0;
  std::size_t expected_denials_ = 0;
  bool provisioned_ = false;
};

/// Policies over `n` attributes that every receiver attribute set satisfies:
/// attribute 0 required plus a few forbidden attributes outside every set.
std::vector<Policy> policies_for(const std::vector<std::vector<std::size_t>>& receivers, std::size_t n,
                                 std::size_t count, Rng& rng);

}  // namespace cavsec::proto
