// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace lsm::mqtt {

/// Malformed or disallowed MQTT 3.1.1 input; the connection must be closed.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PacketType : std::uint8_t {
  Connect = 1, Connack, Publish, Puback, Pubrec, Pubrel, Pubcomp,
  Subscribe, Suback, Unsubscribe, Unsuback, Pingreq, Pingresp, Disconnect
};

inline constexpr std::uint32_t kMaxRemainingLength = 268'435'455;

struct Will {
  std::string topic;
  std::string message;
  std::uint8_t qos = 0;
  bool retain = false;
  friend bool operator==(const Will&, const Will&) = default;
};

struct Connect {
  /// 4 for MQTT 3.1.1; other levels decode so the broker can refuse them.
  std::uint8_t protocol_level = 4;
  std::string client_id;
  bool clean_session = true;
  std::uint16_t keep_alive = 60;
  std::optional<Will> will;
  std::optional<std::string> username;
  std::optional<std::string> password;
  friend bool operator==(const Connect&, const Connect&) = default;
};

enum class ConnectReturn : std::uint8_t {
  Accepted = 0, BadProtocol = 1, IdentifierRejected = 2, Unavailable = 3, BadCredentials = 4, NotAuthorized = 5
};

struct Connack {
  bool session_present = false;
  ConnectReturn code = ConnectReturn::Accepted;
  friend bool operator==(const Connack&, const Connack&) = default;
};

struct Publish {
  std::string topic;
  std::string payload;
  std::uint8_t qos = 0;
  bool retain = false;
  bool dup = false;
  /// Present only for QoS > 0.
  std::uint16_t packet_id = 0;
  friend bool operator==(const Publish&, const Publish&) = default;
};

struct Puback { std::uint16_t packet_id = 0; friend bool operator==(const Puback&, const Puback&) = default; };
struct Pubrec { std::uint16_t packet_id = 0; friend bool operator==(const Pubrec&, const Pubrec&) = default; };
struct Pubrel { std::uint16_t packet_id = 0; friend bool operator==(const Pubrel&, const Pubrel&) = default; };
struct Pubcomp { std::uint16_t packet_id = 0; friend bool operator==(const Pubcomp&, const Pubcomp&) = default; };

struct Subscribe {
  std::uint16_t packet_id = 0;
  std::vector<std::pair<std::string, std::uint8_t>> filters;
  friend bool operator==(const Subscribe&, const Subscribe&) = default;
};

inline constexpr std::uint8_t kSubackFailure = 0x80;

struct Suback {
  std::uint16_t packet_id = 0;
  std::vector<std::uint8_t> codes;
  friend bool operator==(const Suback&, const Suback&) = default;
};

struct Unsubscribe {
  std::uint16_t packet_id = 0;
  std::vector<std::string> filters;
  friend bool operator==(const Unsubscribe&, const Unsubscribe&) = default;
};

struct Unsuback { std::uint16_t packet_id = 0; friend bool operator==(const Unsuback&, const Unsuback&) = default; };
struct Pingreq { friend bool operator==(const Pingreq&, const Pingreq&) = default; };
struct Pingresp { friend bool operator==(const Pingresp&, const Pingresp&) = default; };
struct Disconnect { friend bool operator==(const Disconnect&, const Disconnect&) = default; };

using Packet = std::variant<Connect, Connack, Publish, Puback, Pubrec, Pubrel, Pubcomp, Subscribe, Suback,
                            Unsubscribe, Unsuback, Pingreq, Pingresp, Disconnect>;

PacketType type_of(const Packet& packet);

std::string encode_remaining_length(std::uint32_t length);
/// Decodes the varint at the start of `bytes`. Returns (length, bytes used),
/// or nullopt when more input is needed. Throws on a fifth continuation byte.
std::optional<std::pair<std::uint32_t, std::size_t>> decode_remaining_length(std::string_view bytes);

std::string encode(const Packet& packet);
/// Decodes exactly one complete frame.
Packet decode(std::string_view frame);

/// Splits a byte stream into complete frames.
class FrameReader {
 public:
  explicit FrameReader(std::uint32_t max_remaining_length = kMaxRemainingLength)
      : max_remaining_length_(max_remaining_length) {}

  void feed(std::string_view bytes) { buffer_.append(bytes); }
  std::optional<std::string> next();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::string buffer_;
  std::uint32_t max_remaining_length_;
};

/// Well-formed UTF-8 without U+0000, as MQTT requires of every string.
bool valid_mqtt_string(std::string_view text);

}  // namespace lsm::mqtt
