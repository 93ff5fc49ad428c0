// SPDX-License-Identifier: Apache-2.0
#include "lsm/mqtt/codec.hpp"

#include "lsm/mqtt/topic.hpp"

namespace lsm::mqtt {

namespace {

class Writer {
 public:
  void byte(std::uint8_t b) { out_.push_back(static_cast<char>(b)); }
  void u16(std::uint16_t v) {
    byte(static_cast<std::uint8_t>(v >> 8));
    byte(static_cast<std::uint8_t>(v & 0xff));
  }
  void str(std::string_view s) {
    if (s.size() > 0xffff) throw ProtocolError("string longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string frame(std::uint8_t first) const {
    if (out_.size() > kMaxRemainingLength) throw ProtocolError("packet too large");
    std::string f(1, static_cast<char>(first));
    f += encode_remaining_length(static_cast<std::uint32_t>(out_.size()));
    f += out_;
    return f;
  }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint8_t byte() {
    need(1);
    const auto b = static_cast<std::uint8_t>(in_[0]);
    in_.remove_prefix(1);
    return b;
  }
  std::uint16_t u16() {
    const auto hi = byte();
    return static_cast<std::uint16_t>((hi << 8) | byte());
  }
  std::string bytes() {
    const auto n = u16();
    need(n);
    std::string s(in_.substr(0, n));
    in_.remove_prefix(n);
    return s;
  }
  std::string str() {
    auto s = bytes();
    if (!valid_mqtt_string(s)) throw ProtocolError("string is not valid UTF-8");
    return s;
  }
  std::string rest() {
    std::string s(in_);
    in_ = {};
    return s;
  }
  bool done() const { return in_.empty(); }
  void finish() const {
    if (!in_.empty()) throw ProtocolError("trailing bytes in packet");
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() < n) throw ProtocolError("packet truncated");
  }
  std::string_view in_;
};

std::uint16_t packet_id(Reader& r) {
  const auto id = r.u16();
  if (id == 0) throw ProtocolError("packet identifier must be nonzero");
  return id;
}

void expect_flags(std::uint8_t flags, std::uint8_t expected, const char* what) {
  if (flags != expected) throw ProtocolError(std::string("invalid fixed header flags for ") + what);
}

template <class T>
std::string encode_id_only(PacketType type, std::uint8_t flags, const T& p) {
  Writer w;
  w.u16(p.packet_id);
  return w.frame(static_cast<std::uint8_t>((static_cast<std::uint8_t>(type) << 4) | flags));
}

}  // namespace

PacketType type_of(const Packet& packet) { return static_cast<PacketType>(packet.index() + 1); }

std::string encode_remaining_length(std::uint32_t length) {
  if (length > kMaxRemainingLength) throw ProtocolError("remaining length too large");
  std::string out;
  do {
    std::uint8_t b = length % 128;
    length /= 128;
    if (length > 0) b |= 0x80;
    out.push_back(static_cast<char>(b));
  } while (length > 0);
  return out;
}

std::optional<std::pair<std::uint32_t, std::size_t>> decode_remaining_length(std::string_view bytes) {
  std::uint32_t value = 0;
  std::uint32_t multiplier = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i >= bytes.size()) return std::nullopt;
    const auto b = static_cast<std::uint8_t>(bytes[i]);
    value += (b & 0x7f) * multiplier;
    if ((b & 0x80) == 0) {
      // Non-minimal encodings (trailing zero groups) are tolerated.
      return std::make_pair(value, i + 1);
    }
    multiplier *= 128;
  }
  throw ProtocolError("malformed remaining length");
}

std::string encode(const Packet& packet) {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        Writer w;
        if constexpr (std::is_same_v<T, Connect>) {
          w.str("MQTT");
          w.byte(p.protocol_level);
          std::uint8_t flags = 0;
          if (p.clean_session) flags |= 0x02;
          if (p.will) {
            flags |= 0x04;
            flags |= static_cast<std::uint8_t>((p.will->qos & 0x3) << 3);
            if (p.will->retain) flags |= 0x20;
          }
          if (p.password) flags |= 0x40;
          if (p.username) flags |= 0x80;
          w.byte(flags);
          w.u16(p.keep_alive);
          w.str(p.client_id);
          if (p.will) {
            w.str(p.will->topic);
            w.str(p.will->message);
          }
          if (p.username) w.str(*p.username);
          if (p.password) w.str(*p.password);
          return w.frame(0x10);
        } else if constexpr (std::is_same_v<T, Connack>) {
          w.byte(p.session_present ? 1 : 0);
          w.byte(static_cast<std::uint8_t>(p.code));
          return w.frame(0x20);
        } else if constexpr (std::is_same_v<T, Publish>) {
          if (p.qos > 2) throw ProtocolError("invalid QoS");
          w.str(p.topic);
          if (p.qos > 0) w.u16(p.packet_id);
          w.raw(p.payload);
          std::uint8_t first = 0x30 | static_cast<std::uint8_t>(p.qos << 1);
          if (p.dup) first |= 0x08;
          if (p.retain) first |= 0x01;
          return w.frame(first);
        } else if constexpr (std::is_same_v<T, Puback>) {
          return encode_id_only(PacketType::Puback, 0, p);
        } else if constexpr (std::is_same_v<T, Pubrec>) {
          return encode_id_only(PacketType::Pubrec, 0, p);
        } else if constexpr (std::is_same_v<T, Pubrel>) {
          return encode_id_only(PacketType::Pubrel, 2, p);
        } else if constexpr (std::is_same_v<T, Pubcomp>) {
          return encode_id_only(PacketType::Pubcomp, 0, p);
        } else if constexpr (std::is_same_v<T, Subscribe>) {
          w.u16(p.packet_id);
          for (const auto& [filter, qos] : p.filters) {
            w.str(filter);
            w.byte(qos);
          }
          return w.frame(0x82);
        } else if constexpr (std::is_same_v<T, Suback>) {
          w.u16(p.packet_id);
          for (auto c : p.codes) w.byte(c);
          return w.frame(0x90);
        } else if constexpr (std::is_same_v<T, Unsubscribe>) {
          w.u16(p.packet_id);
          for (const auto& f : p.filters) w.str(f);
          return w.frame(0xa2);
        } else if constexpr (std::is_same_v<T, Unsuback>) {
          return encode_id_only(PacketType::Unsuback, 0, p);
        } else if constexpr (std::is_same_v<T, Pingreq>) {
          return w.frame(0xc0);
        } else if constexpr (std::is_same_v<T, Pingresp>) {
          return w.frame(0xd0);
        } else {
          return w.frame(0xe0);
        }
      },
      packet);
}

Packet decode(std::string_view frame) {
  if (frame.empty()) throw ProtocolError("empty frame");
  const auto first = static_cast<std::uint8_t>(frame[0]);
  const auto length = decode_remaining_length(frame.substr(1));
  if (!length) throw ProtocolError("truncated fixed header");
  if (1 + length->second + length->first != frame.size()) throw ProtocolError("remaining length mismatch");
  Reader r(frame.substr(1 + length->second));
  const std::uint8_t flags = first & 0x0f;

  switch (first >> 4) {
    case 1: {
      expect_flags(flags, 0, "CONNECT");
      Connect c;
      if (r.str() != "MQTT") throw ProtocolError("unknown protocol name");
      c.protocol_level = r.byte();
      const auto cf = r.byte();
      if (cf & 0x01) throw ProtocolError("reserved connect flag set");
      c.clean_session = cf & 0x02;
      const bool will = cf & 0x04;
      const std::uint8_t will_qos = (cf >> 3) & 0x3;
      const bool will_retain = cf & 0x20;
      if (!will && (will_qos != 0 || will_retain)) throw ProtocolError("will flags without a will");
      if (will_qos == 3) throw ProtocolError("invalid will QoS");
      const bool has_password = cf & 0x40;
      const bool has_username = cf & 0x80;
      if (has_password && !has_username) throw ProtocolError("password without username");
      c.keep_alive = r.u16();
      c.client_id = r.str();
      if (will) {
        Will w;
        w.topic = r.str();
        if (!valid_topic_name(w.topic)) throw ProtocolError("invalid will topic");
        w.message = r.bytes();
        w.qos = will_qos;
        w.retain = will_retain;
        c.will = std::move(w);
      }
      if (has_username) c.username = r.str();
      if (has_password) c.password = r.bytes();
      r.finish();
      return c;
    }
    case 2: {
      expect_flags(flags, 0, "CONNACK");
      Connack c;
      const auto ack = r.byte();
      if (ack & 0xfe) throw ProtocolError("reserved connack flags set");
      c.session_present = ack & 1;
      const auto code = r.byte();
      if (code > 5) throw ProtocolError("unknown connect return code");
      c.code = static_cast<ConnectReturn>(code);
      r.finish();
      return c;
    }
    case 3: {
      Publish p;
      p.dup = flags & 0x08;
      p.qos = (flags >> 1) & 0x3;
      p.retain = flags & 0x01;
      if (p.qos == 3) throw ProtocolError("invalid QoS");
      if (p.qos == 0 && p.dup) throw ProtocolError("DUP set on QoS 0 publish");
      p.topic = r.str();
      if (!valid_topic_name(p.topic)) throw ProtocolError("invalid publish topic");
      if (p.qos > 0) p.packet_id = packet_id(r);
      p.payload = r.rest();
      return p;
    }
    case 4: { expect_flags(flags, 0, "PUBACK"); Puback p{packet_id(r)}; r.finish(); return p; }
    case 5: { expect_flags(flags, 0, "PUBREC"); Pubrec p{packet_id(r)}; r.finish(); return p; }
    case 6: { expect_flags(flags, 2, "PUBREL"); Pubrel p{packet_id(r)}; r.finish(); return p; }
    case 7: { expect_flags(flags, 0, "PUBCOMP"); Pubcomp p{packet_id(r)}; r.finish(); return p; }
    case 8: {
      expect_flags(flags, 2, "SUBSCRIBE");
      Subscribe s;
      s.packet_id = packet_id(r);
      while (!r.done()) {
        auto filter = r.str();
        const auto qos = r.byte();
        if (qos > 2) throw ProtocolError("invalid requested QoS");
        s.filters.emplace_back(std::move(filter), qos);
      }
      if (s.filters.empty()) throw ProtocolError("SUBSCRIBE without filters");
      return s;
    }
    case 9: {
      expect_flags(flags, 0, "SUBACK");
      Suback s;
      s.packet_id = packet_id(r);
      while (!r.done()) {
        const auto code = r.byte();
        if (code > 2 && code != kSubackFailure) throw ProtocolError("invalid SUBACK return code");
        s.codes.push_back(code);
      }
      return s;
    }
    case 10: {
      expect_flags(flags, 2, "UNSUBSCRIBE");
      Unsubscribe u;
      u.packet_id = packet_id(r);
      while (!r.done()) u.filters.push_back(r.str());
      if (u.filters.empty()) throw ProtocolError("UNSUBSCRIBE without filters");
      return u;
    }
    case 11: { expect_flags(flags, 0, "UNSUBACK"); Unsuback u{packet_id(r)}; r.finish(); return u; }
    case 12: expect_flags(flags, 0, "PINGREQ"); r.finish(); return Pingreq{};
    case 13: expect_flags(flags, 0, "PINGRESP"); r.finish(); return Pingresp{};
    case 14: expect_flags(flags, 0, "DISCONNECT"); r.finish(); return Disconnect{};
    default: throw ProtocolError("reserved packet type");
  }
}

std::optional<std::string> FrameReader::next() {
  if (buffer_.size() < 2) return std::nullopt;
  const auto length = decode_remaining_length(std::string_view(buffer_).substr(1));
  if (!length) return std::nullopt;
  if (length->first > max_remaining_length_) throw ProtocolError("packet exceeds the size limit");
  const std::size_t total = 1 + length->second + length->first;
  if (buffer_.size() < total) return std::nullopt;
  std::string frame = buffer_.substr(0, total);
  buffer_.erase(0, total);
  return frame;
}

bool valid_mqtt_string(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c == 0) return false;
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      extra = 1;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      extra = 2;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= text.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    static constexpr std::uint32_t minimum[] = {0, 0x80, 0x800, 0x10000};
    if (cp < minimum[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += extra + 1;
  }
  return true;
}

}  // namespace lsm::mqtt
