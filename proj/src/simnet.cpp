#include "cavsec/simnet.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "cavsec/sym.hpp"

namespace cavsec::sim {

ChannelConfig ChannelConfig::v2x() { return {ChannelClass::v2x, 1000, 100e6, 0, true}; }

ChannelConfig ChannelConfig::in_vehicle() {
  return {ChannelClass::in_vehicle, 0, 8e6, kFramePayloadBytes, true};
}

namespace {

Bytes frame_header(std::uint16_t id, std::uint16_t index, std::uint16_t total) {
  Bytes h;
  put_u16(h, id);
  put_u16(h, index);
  put_u16(h, total);
  return h;
}

Bytes frame_tag(ByteView key, const Bytes& header, ByteView data) {
  return frame_mac(key, concat({header, data}));
}

}  // namespace

Bytes Frame::encode() const {
  Bytes out = frame_header(msg_id, index, total);
  out.insert(out.end(), data.begin(), data.end());
  out.insert(out.end(), mac.begin(), mac.end());
  return out;
}

Frame Frame::decode(ByteView bytes) {
  if (bytes.size() < kFrameHeaderBytes + kFrameMacBytes) throw FramingError("short frame");
  ByteReader r(bytes);
  Frame f;
  f.msg_id = r.u16();
  f.index = r.u16();
  f.total = r.u16();
  auto data = r.raw(bytes.size() - kFrameHeaderBytes - kFrameMacBytes);
  auto mac = r.raw(kFrameMacBytes);
  f.data.assign(data.begin(), data.end());
  f.mac.assign(mac.begin(), mac.end());
  return f;
}

std::vector<Frame> fragment(ByteView message, std::uint16_t msg_id, ByteView link_key,
                            std::size_t max_payload, bool allow_fragmentation) {
  if (max_payload == 0) throw std::invalid_argument("max_payload must be positive");
  const std::size_t count = std::max<std::size_t>(1, (message.size() + max_payload - 1) / max_payload);
  if (count > 1 && !allow_fragmentation)
    throw FramingError("message of " + std::to_string(message.size()) +
                       " bytes exceeds a single frame");
  if (count > 0xffff) throw FramingError("message too large to fragment");
  std::vector<Frame> frames;
  frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Frame f;
    f.msg_id = msg_id;
    f.index = static_cast<std::uint16_t>(i);
    f.total = static_cast<std::uint16_t>(count);
    const std::size_t begin = i * max_payload;
    const std::size_t end = std::min(message.size(), begin + max_payload);
    f.data.assign(message.begin() + begin, message.begin() + end);
    f.mac = frame_tag(link_key, frame_header(f.msg_id, f.index, f.total), f.data);
    frames.push_back(std::move(f));
  }
  return frames;
}

Bytes reassemble(const std::vector<Frame>& frames, ByteView link_key) {
  if (frames.empty()) throw FramingError("no frames");
  const auto id = frames.front().msg_id;
  const auto total = frames.front().total;
  if (frames.size() != total) throw FramingError("frame count mismatch");
  Bytes out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.msg_id != id || f.total != total || f.index != i) throw FramingError("frame out of sequence");
    if (!tags_equal(f.mac, frame_tag(link_key, frame_header(f.msg_id, f.index, f.total), f.data)))
      throw FramingError("frame MAC mismatch");
    out.insert(out.end(), f.data.begin(), f.data.end());
  }
  return out;
}

Micros transmission_time(std::size_t bytes, double bandwidth_bps) {
  if (bandwidth_bps <= 0) return 0;
  return static_cast<Micros>(std::ceil(static_cast<double>(bytes) * 8.0 * 1e6 / bandwidth_bps));
}

// ---------------------------------------------------------------------------

double OpCosts::charge(const OpCounts& c) const {
  return exp * c.exp + group_mul * c.group_mul + scalar_mul * c.scalar_mul +
         group_inv * c.group_inv + scalar_inv * c.scalar_inv + hash * c.hash + cipher * c.cipher +
         kdf * c.kdf + sample * c.sample + member_check * c.member_check;
}

namespace {

struct OpField {
  const char* name;
  double OpCosts::*field;
};

constexpr OpField kOpFields[] = {
    {"exp", &OpCosts::exp},
    {"group_mul", &OpCosts::group_mul},
    {"scalar_mul", &OpCosts::scalar_mul},
    {"group_inv", &OpCosts::group_inv},
    {"scalar_inv", &OpCosts::scalar_inv},
    {"hash", &OpCosts::hash},
    {"cipher", &OpCosts::cipher},
    {"kdf", &OpCosts::kdf},
    {"sample", &OpCosts::sample},
    {"member_check", &OpCosts::member_check},
};

OpCosts profile(double exp, double gmul, double smul, double inv, double sinv, double sym,
                double sample) {
  return {exp, gmul, smul, inv, sinv, sym, sym, sym, sample, sample};
}

}  // namespace

CostTable CostTable::synthetic_default() {
  // Micro-controller figures are laptop figures scaled by the ratio seen for
  // hashing and AES on the controller.
  CostTable t;
  const OpCosts mcu = profile(142150, 1625, 400, 3250, 800, 400, 142150);
  const OpCosts laptop = profile(140, 5, 2, 10, 5, 3, 140);
  const OpCosts desktop = profile(73, 3, 1, 6, 3, 2, 73);
  t.set("ecu", mcu);
  t.set("obu", laptop);
  for (const char* r : {"adas", "cn", "rsu", "ue", "oem"}) t.set(r, desktop);
  return t;
}

CostTable CostTable::from_text(std::string_view text) {
  CostTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash_pos = line.find('#'); hash_pos != std::string::npos) line.erase(hash_pos);
    std::istringstream ls(line);
    std::string role, op;
    double value = 0;
    if (!(ls >> role)) continue;
    if (!(ls >> op >> value))
      throw std::invalid_argument("cost table line " + std::to_string(lineno) + ": expected 'role op micros'");
    bool found = false;
    for (const auto& f : kOpFields) {
      if (op == f.name) {
        t.roles_[role].*(f.field) = value;
        found = true;
      }
    }
    if (!found) throw std::invalid_argument("cost table line " + std::to_string(lineno) + ": unknown op " + op);
  }
  return t;
}

std::string CostTable::to_text() const {
  std::ostringstream out;
  for (const auto& [role, c] : roles_)
    for (const auto& f : kOpFields) out << role << ' ' << f.name << ' ' << c.*(f.field) << '\n';
  return out.str();
}

const OpCosts& CostTable::role(const std::string& name) const {
  auto it = roles_.find(name);
  if (it == roles_.end()) throw std::out_of_range("no cost profile for role " + name);
  return it->second;
}

Micros CostModel::charge(const std::string& role, const OpCounts& counts, Micros wall_us) const {
  if (mode == CostMode::measured) return wall_us;
  return static_cast<Micros>(std::llround(table.role(role).charge(counts)));
}

// ---------------------------------------------------------------------------

Network::Network(CostModel cost) : cost_(std::move(cost)) {}

std::size_t Network::add_channel(const ChannelConfig& cfg) {
  channels_.push_back({cfg, 0});
  return channels_.size() - 1;
}

void Network::add_node(const std::string& name, const std::string& role, Handler handler) {
  if (!nodes_.emplace(name, Node{role, std::move(handler), 0}).second)
    throw std::invalid_argument("duplicate node " + name);
}

void Network::link(const std::string& a, const std::string& b, std::size_t channel, Bytes frame_key) {
  if (channel >= channels_.size()) throw std::out_of_range("unknown channel");
  links_[{a, b}] = Link{channel, frame_key};
  links_[{b, a}] = Link{channel, std::move(frame_key)};
}

bool Network::linked(const std::string& a, const std::string& b) const {
  return links_.count({a, b}) != 0;
}

const Network::Link& Network::link_for(const std::string& a, const std::string& b) const {
  auto it = links_.find({a, b});
  if (it == links_.end()) throw std::out_of_range("no link " + a + " -> " + b);
  return it->second;
}

void Network::push(Micros time, Kind kind, WireMessage msg, std::vector<Frame> frames, bool local) {
  queue_.push(Event{time, seq_++, kind, std::move(msg), std::move(frames), local});
}

void Network::send(WireMessage msg, Micros at) { push(at, Kind::transmit, std::move(msg)); }

void Network::post_local(WireMessage msg, Micros at) {
  push(at, Kind::deliver, std::move(msg), {}, true);
}

std::size_t Network::add_tap(Tap tap) {
  taps_.push_back(std::move(tap));
  return taps_.size() - 1;
}

void Network::transmit(Event& ev) {
  const Link& l = link_for(ev.msg.from, ev.msg.to);
  Channel& ch = channels_[l.channel];

  WireMessage msg = std::move(ev.msg);
  bool dropped = false;
  std::vector<Micros> replays;
  for (auto& tap : taps_) {
    if (tap.match && !tap.match(msg)) continue;
    const bool active = tap.mode != TapMode::eavesdrop;
    if (active && tap.max_hits >= 0 && tap.hits >= tap.max_hits) continue;
    if (active) ++tap.hits;
    switch (tap.mode) {
      case TapMode::eavesdrop: break;
      case TapMode::drop: dropped = true; break;
      case TapMode::inject:
        if (tap.mutate) tap.mutate(msg);
        break;
      case TapMode::replay: replays.push_back(tap.replay_delay_us); break;
    }
  }

  Bytes encoded = msg.encode();
  std::vector<Frame> frames;
  std::size_t wire_bytes = encoded.size();
  if (ch.cfg.max_frame_payload > 0) {
    try {
      frames = fragment(encoded, next_msg_id_++, l.key, ch.cfg.max_frame_payload, ch.cfg.fragmentation);
    } catch (const FramingError& e) {
      failures_.push_back({ev.time, msg.from, msg.tag(), FailReason::decode_error, e.what()});
      return;
    }
    wire_bytes = 0;
    for (const auto& f : frames) wire_bytes += f.wire_size();
  }

  for (auto& tap : taps_) {
    if (tap.match && !tap.match(msg)) continue;
    Observed o{ev.time, msg.from, msg.to, msg.tag(), encoded, {}};
    for (const auto& f : frames) o.frames.push_back(f.encode());
    tap.log.push_back(std::move(o));
  }
  if (dropped) return;

  const Micros start = std::max(ev.time, ch.busy_until);
  ch.busy_until = start + transmission_time(wire_bytes, ch.cfg.bandwidth_bps);
  const Micros arrival = ch.busy_until + ch.cfg.latency_us;
  for (Micros delay : replays) push(arrival + delay, Kind::deliver, msg, frames);
  push(arrival, Kind::deliver, std::move(msg), std::move(frames));
}

void Network::deliver(Event& ev) {
  auto it = nodes_.find(ev.msg.to);
  if (it == nodes_.end()) throw std::out_of_range("no node " + ev.msg.to);
  Node& node = it->second;
  WireMessage msg = std::move(ev.msg);
  if (!ev.frames.empty()) {
    try {
      auto bytes = reassemble(ev.frames, link_for(msg.from, msg.to).key);
      msg = WireMessage::decode(bytes);
    } catch (const FramingError& e) {
      failures_.push_back({ev.time, msg.to, msg.tag(), FailReason::mac_failure, e.what()});
      return;
    }
  }

  const Micros start = std::max(ev.time, node.busy_until);
  transcript_.push_back(std::to_string(start) + " " + msg.tag() + " " + msg.from + "->" + msg.to +
                        (msg.fields.empty() ? "" : " " + msg.field_text()));

  std::vector<WireMessage> out;
  std::optional<Failure> failure;
  OpScope scope;
  const auto wall_start = std::chrono::steady_clock::now();
  try {
    out = node.handler(msg, start);
  } catch (const ProtocolError& e) {
    failure = Failure{start, msg.to, msg.tag(), e.reason(), e.what()};
  } catch (const DecodeError& e) {
    failure = Failure{start, msg.to, msg.tag(), FailReason::decode_error, e.what()};
  } catch (const IntegrityError& e) {
    failure = Failure{start, msg.to, msg.tag(), FailReason::mac_failure, e.what()};
  }
  const auto wall = std::chrono::duration_cast<std::chrono::microseconds>(
                        std::chrono::steady_clock::now() - wall_start)
                        .count();
  const OpCounts counts = scope.delta();
  const Micros end = start + cost_.charge(node.role, counts, wall);
  node.busy_until = end;
  now_ = std::max(now_, end);
  records_.push_back({msg.to, msg.tag(), start, end, counts});
  if (failure) {
    failure->time = end;
    failures_.push_back(std::move(*failure));
  }
  for (auto& m : out) {
    if (m.from.empty()) m.from = msg.to;
    if (m.to == m.from) {
      push(end, Kind::deliver, std::move(m), {}, true);
    } else {
      push(end, Kind::transmit, std::move(m));
    }
  }
}

Micros Network::run() {
  while (!queue_.empty()) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = std::max(now_, ev.time);
    if (ev.kind == Kind::transmit) {
      transmit(ev);
    } else {
      deliver(ev);
    }
  }
  return now_;
}

Micros Network::busy_until(const std::string& node) const { return nodes_.at(node).busy_until; }

std::string Network::transcript_hash() const {
  Bytes all;
  for (const auto& line : transcript_) {
    all.insert(all.end(), line.begin(), line.end());
    all.push_back('\n');
  }
  counters::Suspend quiet;
  return to_hex(hash(all));
}

}  // namespace cavsec::sim
