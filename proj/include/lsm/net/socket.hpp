// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lsm::net {

class SocketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Owning, move-only TCP connection.
class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  TcpStream(TcpStream&& other) noexcept;
  TcpStream& operator=(TcpStream&& other) noexcept;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;
  ~TcpStream();

  static TcpStream connect(const std::string& host, std::uint16_t port,
                           std::chrono::milliseconds timeout = std::chrono::seconds(5));

  bool valid() const { return fd_ >= 0; }
  /// Waits up to `timeout` for data. Returns nullopt on timeout, an empty
  /// string when the peer closed the connection.
  std::optional<std::string> read_some(std::chrono::milliseconds timeout);
  /// Throws SocketError when the connection is gone.
  void write_all(std::string_view bytes);
  /// Wakes a blocked reader; safe to call from another thread.
  void shutdown();
  void close();

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  /// Port 0 picks an ephemeral port.
  TcpListener(const std::string& host, std::uint16_t port);
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener();

  std::uint16_t port() const { return port_; }
  /// Returns an invalid stream on timeout.
  TcpStream accept(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace lsm::net
