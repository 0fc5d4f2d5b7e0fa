#pragma once

// Deterministic discrete-event network.
//
// Two channel classes: a V2X link and an in-vehicle bus with CAN-FD style
// framing. Events are ordered by (time, sequence). Each node processes its
// deliveries one at a time; computation is charged from a per-role cost
// table (synthetic) or from wall-clock time (measured). Adversary taps see
// messages before framing.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cavsec/bytes.hpp"
#include "cavsec/counters.hpp"
#include "cavsec/protocol/messages.hpp"

namespace cavsec::sim {

using Micros = std::int64_t;

enum class ChannelClass { in_vehicle, v2x };

struct ChannelConfig {
  ChannelClass cls = ChannelClass::v2x;
  Micros latency_us = 1000;
  double bandwidth_bps = 100e6;
  /// 0 disables framing.
  std::size_t max_frame_payload = 0;
  bool fragmentation = true;

  static ChannelConfig v2x();
  static ChannelConfig in_vehicle();
};

// In-vehicle frame: 2-byte message id, 2-byte index, 2-byte total, up to 64
// data bytes, then a 16-byte truncated MAC over header and data.
constexpr std::size_t kFrameHeaderBytes = 6;
constexpr std::size_t kFrameMacBytes = 16;
constexpr std::size_t kFramePayloadBytes = 64;

class FramingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Frame {
  std::uint16_t msg_id = 0;
  std::uint16_t index = 0;
  std::uint16_t total = 0;
  Bytes data;
  Bytes mac;

  Bytes encode() const;
  static Frame decode(ByteView bytes);
  std::size_t wire_size() const { return kFrameHeaderBytes + data.size() + mac.size(); }
};

/// Throws FramingError when the message needs more than one frame and
/// fragmentation is disabled, or when it needs more than 65535 frames.
std::vector<Frame> fragment(ByteView message, std::uint16_t msg_id, ByteView link_key,
                            std::size_t max_payload = kFramePayloadBytes,
                            bool allow_fragmentation = true);
/// Verifies every frame MAC, order and count. Throws FramingError.
Bytes reassemble(const std::vector<Frame>& frames, ByteView link_key);

/// ceil(bytes * 8 / bandwidth) in microseconds.
Micros transmission_time(std::size_t bytes, double bandwidth_bps);

// ---------------------------------------------------------------------------
// Cost model

struct OpCosts {
  double exp = 0, group_mul = 0, scalar_mul = 0, group_inv = 0, scalar_inv = 0;
  double hash = 0, cipher = 0, kdf = 0, sample = 0, member_check = 0;

  double charge(const OpCounts& c) const;
};

enum class CostMode { synthetic, measured };

/// Per-role microsecond costs. Text form: one "role op micros" entry per
/// line, '#' starts a comment. Op names match the OpCounts fields.
class CostTable {
 public:
  static CostTable synthetic_default();
  static CostTable from_text(std::string_view text);
  std::string to_text() const;

  void set(const std::string& role, const OpCosts& costs) { roles_[role] = costs; }
  /// Throws std::out_of_range for an unknown role.
  const OpCosts& role(const std::string& name) const;
  bool has(const std::string& name) const { return roles_.count(name) != 0; }

 private:
  std::map<std::string, OpCosts> roles_;
};

struct CostModel {
  CostMode mode = CostMode::synthetic;
  CostTable table = CostTable::synthetic_default();

  Micros charge(const std::string& role, const OpCounts& counts, Micros wall_us) const;
};

// ---------------------------------------------------------------------------
// Adversary taps

enum class TapMode { eavesdrop, inject, replay, drop };

struct Observed {
  Micros time = 0;
  std::string from, to, tag;
  Bytes message;              // encoded WireMessage as sent
  std::vector<Bytes> frames;  // encoded frames, in-vehicle links only
};

struct Tap {
  TapMode mode = TapMode::eavesdrop;
  std::function<bool(const WireMessage&)> match;
  /// inject: rewrites the message in flight.
  std::function<void(WireMessage&)> mutate;
  /// replay: re-delivery delay after the original arrival.
  Micros replay_delay_us = 0;
  /// Active modes fire at most this many times (negative: unlimited).
  int max_hits = 1;

  int hits = 0;
  std::vector<Observed> log;
};

// ---------------------------------------------------------------------------
// Network

using Handler = std::function<std::vector<WireMessage>(const WireMessage&, Micros now)>;

struct Failure {
  Micros time = 0;
  std::string node;
  std::string tag;
  FailReason reason = FailReason::decode_error;
  std::string detail;
};

struct HandlerRecord {
  std::string node;
  std::string tag;
  Micros start = 0;
  Micros end = 0;
  OpCounts counts;
};

class Network {
 public:
  explicit Network(CostModel cost = {});

  std::size_t add_channel(const ChannelConfig& cfg);
  void add_node(const std::string& name, const std::string& role, Handler handler);
  /// Bidirectional link. In-vehicle frames are tagged under frame_key.
  void link(const std::string& a, const std::string& b, std::size_t channel, Bytes frame_key = {});
  bool linked(const std::string& a, const std::string& b) const;

  /// Queues transmission of msg from msg.from at time `at`.
  void send(WireMessage msg, Micros at);
  /// Delivers msg to msg.to at time `at` without a channel (application trigger).
  void post_local(WireMessage msg, Micros at);

  std::size_t add_tap(Tap tap);
  Tap& tap(std::size_t index) { return taps_.at(index); }
  void clear_taps() { taps_.clear(); }

  /// Processes events until the queue is empty. Returns the time of the last
  /// completed activity.
  Micros run();
  Micros now() const { return now_; }

  /// One line per delivery: "<time_us> <tag> <from>-><to> name=hex ...".
  const std::vector<std::string>& transcript() const { return transcript_; }
  std::string transcript_hash() const;
  const std::vector<Failure>& failures() const { return failures_; }
  const std::vector<HandlerRecord>& records() const { return records_; }
  Micros busy_until(const std::string& node) const;
  const ChannelConfig& channel(std::size_t id) const { return channels_.at(id).cfg; }

 private:
  enum class Kind { transmit, deliver };
  struct Event {
    Micros time;
    std::uint64_t seq;
    Kind kind;
    WireMessage msg;
    std::vector<Frame> frames;
    bool local = false;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  struct Channel {
    ChannelConfig cfg;
    Micros busy_until = 0;
  };
  struct Node {
    std::string role;
    Handler handler;
    Micros busy_until = 0;
  };
  struct Link {
    std::size_t channel;
    Bytes key;
  };

  void push(Micros time, Kind kind, WireMessage msg, std::vector<Frame> frames = {},
            bool local = false);
  void transmit(Event& ev);
  void deliver(Event& ev);
  const Link& link_for(const std::string& a, const std::string& b) const;

  CostModel cost_;
  std::vector<Channel> channels_;
  std::map<std::string, Node> nodes_;
  std::map<std::pair<std::string, std::string>, Link> links_;
  std::vector<Tap> taps_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t seq_ = 0;
  std::uint16_t next_msg_id_ = 0;
  Micros now_ = 0;
  std::vector<std::string> transcript_;
  std::vector<Failure> failures_;
  std::vector<HandlerRecord> records_;
};

}  // namespace cavsec::sim
