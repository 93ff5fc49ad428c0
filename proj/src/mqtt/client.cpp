// SPDX-License-Identifier: Apache-2.0
#include "lsm/mqtt/client.hpp"

#include <spdlog/spdlog.h>

#include <random>

namespace lsm::mqtt {

using namespace std::chrono_literals;

namespace {

std::string random_client_id() {
  static constexpr char digits[] = "0123456789abcdef";
  std::random_device rd;
  std::string id = "lsm-";
  for (int i = 0; i < 12; ++i) id.push_back(digits[rd() % 16]);
  return id;
}

}  // namespace

Client::Client(Options options, Handler handler)
    : options_(std::move(options)), handler_(std::move(handler)), inbox_(options_.queue_capacity) {
  if (options_.client_id.empty()) options_.client_id = random_client_id();
  stream_ = net::TcpStream::connect(options_.host, options_.port, options_.timeout);

  Connect c;
  c.client_id = options_.client_id;
  c.keep_alive = options_.keep_alive;
  c.username = options_.username;
  c.password = options_.password;
  stream_.write_all(encode(c));

  auto& reader = frames_;
  const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  while (true) {
    if (auto frame = reader.next()) {
      const auto packet = decode(*frame);
      const auto* ack = std::get_if<Connack>(&packet);
      if (!ack) throw ProtocolError("expected CONNACK");
      if (ack->code != ConnectReturn::Accepted) {
        throw ConnectRefused(ack->code, "connection refused, return code " + std::to_string(static_cast<int>(ack->code)));
      }
      break;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left <= 0ms) throw net::SocketError("timed out waiting for CONNACK");
    auto chunk = stream_.read_some(left);
    if (chunk && chunk->empty()) throw net::SocketError("connection closed before CONNACK");
    if (chunk) reader.feed(*chunk);
  }
  connected_ = true;
  reader_ = std::thread([this] { read_loop(); });
}

Client::~Client() { disconnect(); }

void Client::disconnect() {
  if (stopping_.exchange(true)) return;
  if (connected_) {
    try {
      send(Disconnect{});
    } catch (const std::exception&) {
    }
  }
  stream_.shutdown();
  if (reader_.joinable()) reader_.join();
  stream_.close();
  inbox_.close();
}

void Client::send(const Packet& packet) {
  std::lock_guard lock(write_mutex_);
  if (!connected_) throw net::SocketError("not connected");
  stream_.write_all(encode(packet));
}

std::uint16_t Client::next_id() {
  std::lock_guard lock(ack_mutex_);
  if (++last_id_ == 0) last_id_ = 1;
  return last_id_;
}

Packet Client::await_ack(std::uint16_t id) {
  std::unique_lock lock(ack_mutex_);
  if (!ack_ready_.wait_for(lock, options_.timeout, [&] { return acks_.count(id) > 0 || !connected_; })) {
    throw net::SocketError("timed out waiting for acknowledgement");
  }
  auto it = acks_.find(id);
  if (it == acks_.end()) throw net::SocketError("connection lost");
  auto packet = std::move(it->second);
  acks_.erase(it);
  return packet;
}

std::vector<std::uint8_t> Client::subscribe(const std::vector<std::string>& filters) {
  Subscribe s;
  s.packet_id = next_id();
  for (const auto& f : filters) s.filters.emplace_back(f, 0);
  send(s);
  auto ack = await_ack(s.packet_id);
  auto* suback = std::get_if<Suback>(&ack);
  if (!suback) throw ProtocolError("expected SUBACK");
  return suback->codes;
}

void Client::unsubscribe(const std::vector<std::string>& filters) {
  Unsubscribe u;
  u.packet_id = next_id();
  u.filters = filters;
  send(u);
  auto ack = await_ack(u.packet_id);
  if (!std::holds_alternative<Unsuback>(ack)) throw ProtocolError("expected UNSUBACK");
}

void Client::publish(const std::string& topic, const std::string& payload, bool retain) {
  Publish p;
  p.topic = topic;
  p.payload = payload;
  p.retain = retain;
  send(p);
}

std::optional<Message> Client::next(std::chrono::milliseconds timeout) { return inbox_.pop_for(timeout); }

void Client::read_loop() {
  auto& reader = frames_;
  auto last_sent = std::chrono::steady_clock::now();
  try {
    while (!stopping_) {
      auto chunk = stream_.read_some(250ms);
      if (options_.keep_alive > 0 &&
          std::chrono::steady_clock::now() - last_sent > std::chrono::seconds(options_.keep_alive) / 2) {
        send(Pingreq{});
        last_sent = std::chrono::steady_clock::now();
      }
      if (!chunk) continue;
      if (chunk->empty()) break;
      reader.feed(*chunk);
      while (auto frame = reader.next()) {
        auto packet = decode(*frame);
        if (auto* p = std::get_if<Publish>(&packet)) {
          Message m{std::move(p->topic), std::move(p->payload), p->retain};
          if (handler_) {
            handler_(m);
          } else if (!inbox_.push(std::move(m))) {
            spdlog::warn("mqtt client: inbox full, dropped the oldest message");
          }
        } else if (auto* s = std::get_if<Suback>(&packet)) {
          std::lock_guard lock(ack_mutex_);
          acks_[s->packet_id] = packet;
          ack_ready_.notify_all();
        } else if (auto* u = std::get_if<Unsuback>(&packet)) {
          std::lock_guard lock(ack_mutex_);
          acks_[u->packet_id] = packet;
          ack_ready_.notify_all();
        }
      }
    }
  } catch (const std::exception& e) {
    if (!stopping_) spdlog::debug("mqtt client: connection ended: {}", e.what());
  }
  {
    std::lock_guard lock(ack_mutex_);
    connected_ = false;
  }
  ack_ready_.notify_all();
  inbox_.close();
}

}  // namespace lsm::mqtt
