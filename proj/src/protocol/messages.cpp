#include "cavsec/protocol/messages.hpp"

#include <algorithm>

namespace cavsec {

std::string_view reason_name(FailReason r) {
  switch (r) {
    case FailReason::mac_failure: return "mac_failure";
    case FailReason::nonce_replay: return "nonce_replay";
    case FailReason::verid_mismatch: return "verid_mismatch";
    case FailReason::em_exhausted: return "em_exhausted";
    case FailReason::unknown_message_type: return "unknown_message_type";
    case FailReason::bad_echo: return "bad_echo";
    case FailReason::token_expired: return "token_expired";
    case FailReason::token_stale: return "token_stale";
    case FailReason::token_equation: return "token_equation";
    case FailReason::access_denied: return "access_denied";
    case FailReason::signature_invalid: return "signature_invalid";
    case FailReason::decode_error: return "decode_error";
    case FailReason::unexpected_message: return "unexpected_message";
    case FailReason::serial_regression: return "serial_regression";
    case FailReason::unknown_identity: return "unknown_identity";
  }
  return "?";
}

ProtocolError::ProtocolError(FailReason reason, const std::string& detail)
    : std::runtime_error(std::string(reason_name(reason)) + ": " + detail), reason_(reason) {}

WireMessage& WireMessage::add(std::string name, Bytes value) {
  fields.push_back({std::move(name), std::move(value)});
  return *this;
}

bool WireMessage::has(std::string_view name) const {
  return std::any_of(fields.begin(), fields.end(), [&](const auto& f) { return f.name == name; });
}

const Bytes& WireMessage::get(std::string_view name) const {
  for (const auto& f : fields)
    if (f.name == name) return f.value;
  throw ProtocolError(FailReason::decode_error, "message " + tag() + " lacks field " + std::string(name));
}

Bytes& WireMessage::at(std::string_view name) {
  for (auto& f : fields)
    if (f.name == name) return f.value;
  throw ProtocolError(FailReason::decode_error, "message " + tag() + " lacks field " + std::string(name));
}

std::string WireMessage::tag() const { return std::to_string(phase) + "." + std::to_string(step); }

Bytes WireMessage::encode() const {
  ByteWriter w;
  w.u8(phase).u8(step).var(to_bytes(from)).var(to_bytes(to)).u16(static_cast<std::uint16_t>(fields.size()));
  for (const auto& f : fields) w.var(to_bytes(f.name)).var(f.value);
  return std::move(w).bytes();
}

WireMessage WireMessage::decode(ByteView data) {
  try {
    ByteReader r(data);
    WireMessage m;
    m.phase = r.u8();
    m.step = r.u8();
    m.from = to_string(r.var());
    m.to = to_string(r.var());
    const std::size_t n = r.u16();
    for (std::size_t i = 0; i < n; ++i) {
      std::string name = to_string(r.var());
      auto value = r.var();
      m.fields.push_back({std::move(name), Bytes(value.begin(), value.end())});
    }
    r.expect_done();
    return m;
  } catch (const DecodeError& e) {
    throw ProtocolError(FailReason::decode_error, e.what());
  }
}

std::string WireMessage::field_text() const {
  std::string out;
  for (const auto& f : fields) {
    if (!out.empty()) out.push_back(' ');
    out += f.name + "=" + to_hex(f.value);
  }
  return out;
}

Bytes pack(const std::vector<Bytes>& items) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (const auto& it : items) w.var(it);
  return std::move(w).bytes();
}

std::vector<Bytes> unpack(ByteView data) {
  ByteReader r(data);
  const std::size_t n = r.u32();
  if (n > data.size()) throw DecodeError("implausible list length");
  std::vector<Bytes> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto v = r.var();
    out.emplace_back(v.begin(), v.end());
  }
  r.expect_done();
  return out;
}

}  // namespace cavsec
