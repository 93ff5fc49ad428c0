// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/action_pipeline.hpp"
#include "lsm/mqtt/codec.hpp"
#include "lsm/mqtt/topic.hpp"
#include "lsm/net/socket.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace lsm::mqtt {

struct BrokerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 1883;
  /// user -> password. When empty every CONNECT is accepted and acts as
  /// `anonymous_user` (or its own username when that is unset).
  std::map<std::string, std::string> credentials;
  /// User for connections without a username; refused when unset.
  std::optional<std::string> anonymous_user;
  /// Outbound publishes buffered per session before the oldest is dropped.
  std::size_t queue_capacity = 4096;
  /// When set and false, CONNECT is refused with "server unavailable".
  std::function<bool()> available;
};

/// Embedded MQTT 3.1.1 broker (QoS 0) in front of a pipeline.
///
/// Topics: `<device>/<id>` carries the retained envelope of variable `<id>`;
/// `<device>/<id>/invoke|update|create|delete` take requests whose reply goes
/// to `<device>/<id>/result/<nonce>`; `<device>/$model` holds the model
/// document. Other topics are routed as a plain broker would.
class Broker {
 public:
  Broker(Pipeline& pipeline, std::string device_id, BrokerOptions options = {});
  ~Broker();
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  /// Binds and starts accepting; returns the bound port.
  std::uint16_t start();
  void stop();
  std::uint16_t port() const { return port_; }

  /// Retained payload of a topic, if any.
  std::optional<std::string> retained(const std::string& topic) const;
  std::size_t session_count() const;

  /// Publishes as the broker itself (routing and retained store).
  void publish(const std::string& topic, const std::string& payload, bool retain);

 private:
  class Session;
  class SessionRecipient;
  struct Guard;
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

  void accept_loop();
  void run_session(std::shared_ptr<Session> session);
  bool handle_connect(const std::shared_ptr<Session>& session, const Connect& connect);
  void handle_subscribe(const std::shared_ptr<Session>& session, const Subscribe& subscribe);
  void handle_unsubscribe(const std::shared_ptr<Session>& session, const Unsubscribe& unsubscribe);
  void handle_publish(const std::shared_ptr<Session>& session, const Publish& publish);
  void handle_request(const std::shared_ptr<Session>& session, const ResourceId& id, Action action,
                      const std::string& payload);
  void end_session(const std::shared_ptr<Session>& session);
  void release_hold(Session& session, const std::vector<std::string>& granted);
  void on_topology(const ResourceId& id, bool added);
  void reap_workers(bool all);

  /// Device-relative resource id of a value topic, if the topic is one.
  std::optional<ResourceId> variable_of(std::string_view topic) const;
  std::string topic_of(const ResourceId& id) const;
  std::vector<ResourceId> variable_ids() const;
  void route(const std::string& topic, const std::string& payload);
  void publish_model();

  Pipeline& pipeline_;
  std::string device_id_;
  BrokerOptions options_;
  std::uint16_t port_ = 0;

  std::unique_ptr<net::TcpListener> listener_;
  std::thread acceptor_;
  std::atomic<bool> running_{false};

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::vector<std::shared_ptr<Session>> all_sessions_;
  SubscriptionTrie trie_;
  std::map<std::string, std::string> retained_;
  std::uint64_t next_session_ = 0;
  std::shared_ptr<Guard> guard_;

  std::mutex workers_mutex_;
  std::vector<Worker> workers_;
};

}  // namespace lsm::mqtt
