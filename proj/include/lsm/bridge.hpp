// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/action_pipeline.hpp"
#include "lsm/http_adapter.hpp"
#include "lsm/mqtt/broker.hpp"
#include "lsm/remote.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace lsm {

struct BridgeOptions {
  Endpoint upstream;
  Credentials credentials;
  /// Device id for the local MQTT side; defaults to the upstream's for MQTT
  /// upstreams and to "dev1" otherwise.
  std::optional<std::string> device_id;
  std::string host = "127.0.0.1";
  std::optional<std::uint16_t> listen_http;
  std::optional<std::uint16_t> listen_mqtt;
  std::chrono::milliseconds timeout = std::chrono::seconds(5);
  /// How often an HTTP upstream is polled for changes; zero disables polling.
  std::chrono::milliseconds poll_period = std::chrono::milliseconds(500);
};

/// Mirrors an upstream device's whole resource tree and forwards every action to
/// it. Envelopes are stored and re-serialized canonically, so they pass
/// through byte for byte. Authorization is the upstream's business: local
/// clients act with the bridge's upstream credentials.
class Bridge {
 public:
  /// Connects upstream and builds the mirror. Throws RemoteError when the
  /// upstream cannot be reached.
  explicit Bridge(BridgeOptions options);
  ~Bridge();
  Bridge(const Bridge&) = delete;
  Bridge& operator=(const Bridge&) = delete;

  void start();
  void stop();

  std::optional<std::uint16_t> http_port() const { return http_port_; }
  std::optional<std::uint16_t> mqtt_port() const { return mqtt_port_; }
  bool upstream_available() const;
  Pipeline& pipeline() { return *pipeline_; }
  const std::string& device_id() const { return device_id_; }

 private:
  struct Pending {
    std::promise<std::string> reply;
  };

  nlohmann::json fetch_model();
  nlohmann::json fetch_http_tree(const ResourceId& id);
  NodePtr build(const nlohmann::json& doc, const ResourceId& id);
  void load_values(const ResourceId& prefix);

  /// Sends a request upstream and returns the reply envelope.
  std::string forward(const ResourceId& id, Action action, nlohmann::json payload, const std::string& nonce);
  std::string forward_mqtt(const ResourceId& id, const std::string& verb, nlohmann::json payload, const std::string& nonce);
  void on_upstream_message(const mqtt::Message& message);
  /// Stores an upstream envelope into the mirror; ignores repeats.
  void absorb(const ResourceId& id, const std::string& envelope);
  VariableNode::Snapshot refresh_from_http(const ResourceId& id);
  void poll_loop();

  BridgeOptions options_;
  std::string device_id_;
  std::unique_ptr<HttpRemote> http_upstream_;
  std::unique_ptr<mqtt::Client> mqtt_upstream_;
  std::atomic<bool> http_reachable_{true};

  /// Guards the maps below and serializes stores into the mirror.
  std::mutex mirror_mutex_;
  std::condition_variable absorbed_cv_;
  std::map<ResourceId, VariablePtr> variables_;
  std::map<ResourceId, std::string> last_envelope_;
  /// Envelopes that arrived before their variable was mirrored.
  std::map<ResourceId, std::string> stash_;

  std::mutex pending_mutex_;
  std::map<std::string, std::shared_ptr<Pending>> pending_;

  std::mutex model_mutex_;
  std::condition_variable model_cv_;
  std::optional<std::string> model_;

  std::unique_ptr<Pipeline> pipeline_;
  std::unique_ptr<HttpAdapter> http_adapter_;
  std::unique_ptr<HttpServer> http_server_;
  std::unique_ptr<mqtt::Broker> broker_;
  std::optional<std::uint16_t> http_port_, mqtt_port_;

  std::thread poller_;
  std::mutex poll_mutex_;
  std::condition_variable poll_cv_;
  bool stopping_ = false;
};

}  // namespace lsm
