// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/bounded_queue.hpp"
#include "lsm/mqtt/codec.hpp"
#include "lsm/net/socket.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace lsm::mqtt {

struct Message {
  std::string topic;
  std::string payload;
  bool retain = false;
};

class ConnectRefused : public std::runtime_error {
 public:
  ConnectRefused(ConnectReturn code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ConnectReturn code() const { return code_; }

 private:
  ConnectReturn code_;
};

/// Minimal blocking MQTT 3.1.1 client, QoS 0.
class Client {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    std::uint16_t port = 1883;
    std::string client_id;
    std::optional<std::string> username;
    std::optional<std::string> password;
    std::uint16_t keep_alive = 30;
    std::chrono::milliseconds timeout = std::chrono::seconds(5);
    std::size_t queue_capacity = 65536;
  };
  /// Runs on the reader thread; it must not wait on this client.
  using Handler = std::function<void(const Message&)>;

  /// Connects and waits for CONNACK. Throws net::SocketError, ConnectRefused
  /// or ProtocolError.
  explicit Client(Options options, Handler handler = {});
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  /// Returns the SUBACK codes; throws on timeout or disconnect.
  std::vector<std::uint8_t> subscribe(const std::vector<std::string>& filters);
  void unsubscribe(const std::vector<std::string>& filters);
  void publish(const std::string& topic, const std::string& payload, bool retain = false);

  /// Next message, when no handler was given.
  std::optional<Message> next(std::chrono::milliseconds timeout);

  bool connected() const { return connected_; }
  void disconnect();

 private:
  void send(const Packet& packet);
  void read_loop();
  std::uint16_t next_id();
  Packet await_ack(std::uint16_t id);

  Options options_;
  Handler handler_;
  net::TcpStream stream_;
  FrameReader frames_;
  std::mutex write_mutex_;
  std::thread reader_;
  std::atomic<bool> connected_{false};
  std::atomic<bool> stopping_{false};

  std::mutex ack_mutex_;
  std::condition_variable ack_ready_;
  std::map<std::uint16_t, Packet> acks_;
  std::uint16_t last_id_ = 0;

  BoundedQueue<Message> inbox_;
};

}  // namespace lsm::mqtt
