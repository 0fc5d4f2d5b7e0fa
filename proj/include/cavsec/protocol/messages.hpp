#pragma once

// Wire messages and typed protocol failures.
//
// A WireMessage is an ordered list of named byte fields plus a (phase, step)
// tag and the sender/receiver addresses. Steps follow the figures:
//
//   1.1  OEM -> ECU   EM batch            id, serial, count, nonce, c_em, sigma
//   2.1  OBU -> CN    hello               galpha, pid, c1, n1, sigma1
//   2.2  CN  -> OBU   response            c2, n2, sigma2
//   2.3  OBU -> ECU   query               id, sigma1j, n1j, req_info
//   2.4  ECU -> OBU   values              id, c1j, n2j, sigma2j
//   2.5  OBU -> ECU   partial bundle      c2j, sigma3j
//   3.0  app -> ECU   uplink request      type, payload, dest     (local)
//   3.1  ECU -> OBU   sign request        c1j, sigma1j, n1j
//   3.2  OBU -> ECU   sign assist         c2j, sigma2j, n2j
//   3.3  ECU -> OBU   sealed message      c, cm, sigmam, nm
//   3.4  OBU -> V2X   forwarded message   pid, c, cm, sigmam, nm, token
//   3.5  app -> V2X   downlink request    policy, payload, cav, ecus (local)
//   3.6  V2X -> OBU   downlink message    pid, c, cm, sigmam, nm, token, ecus
//   3.7  OBU -> ECU   downlink forward    c1j, n1j, sigma1j
//   4.0  app -> OEM   update request      ecu                     (local)
//   4.1  OEM -> ECU   EM batch            as 1.1

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cavsec/bytes.hpp"

namespace cavsec {

enum class FailReason {
  mac_failure,
  nonce_replay,
  verid_mismatch,
  em_exhausted,
  unknown_message_type,
  bad_echo,
  token_expired,
  token_stale,
  token_equation,
  access_denied,
  signature_invalid,
  decode_error,
  unexpected_message,
  serial_regression,
  unknown_identity,
};

std::string_view reason_name(FailReason r);

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(FailReason reason, const std::string& detail);
  FailReason reason() const { return reason_; }

 private:
  FailReason reason_;
};

struct WireField {
  std::string name;
  Bytes value;
};

struct WireMessage {
  std::uint8_t phase = 0;
  std::uint8_t step = 0;
  std::string from;
  std::string to;
  std::vector<WireField> fields;

  WireMessage() = default;
  WireMessage(std::uint8_t phase, std::uint8_t step, std::string from, std::string to)
      : phase(phase), step(step), from(std::move(from)), to(std::move(to)) {}

  WireMessage& add(std::string name, Bytes value);
  bool has(std::string_view name) const;
  /// Throws ProtocolError(decode_error) when absent.
  const Bytes& get(std::string_view name) const;
  Bytes& at(std::string_view name);

  /// "2.1"
  std::string tag() const;
  bool is(std::uint8_t p, std::uint8_t s) const { return phase == p && step == s; }

  Bytes encode() const;
  /// Throws ProtocolError(decode_error) on malformed input.
  static WireMessage decode(ByteView data);

  /// "name=hex name=hex ..."
  std::string field_text() const;

  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

/// Length-prefixed list of byte strings.
Bytes pack(const std::vector<Bytes>& items);
std::vector<Bytes> unpack(ByteView data);

}  // namespace cavsec
