// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/http_adapter.hpp"
#include "lsm/mqtt/client.hpp"
#include "lsm/resource_model.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace httplib {
class Client;
}

namespace lsm {

/// `http://host[:port]/api/v1/<id>` or `mqtt://host[:port]/<device>[/<id>]`.
struct Endpoint {
  enum class Scheme { Http, Mqtt };
  Scheme scheme = Scheme::Http;
  std::string host;
  std::uint16_t port = 0;
  std::string device_id;  // mqtt only
  ResourceId resource;    // root when the URL names no resource
};

/// Throws std::invalid_argument with a readable message.
Endpoint parse_endpoint(const std::string& url);

struct Credentials {
  std::optional<std::string> token;
  std::optional<std::string> username;
  std::optional<std::string> password;
};

class RemoteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thin HTTP client for the REST mapping. Connection failures raise RemoteError.
class HttpRemote {
 public:
  HttpRemote(std::string host, std::uint16_t port, std::optional<std::string> token,
             std::chrono::milliseconds timeout = std::chrono::seconds(5));
  ~HttpRemote();

  HttpResponse request(const std::string& method, const ResourceId& id, const std::string& body = {});

 private:
  std::unique_ptr<httplib::Client> client_;
  std::optional<std::string> token_;
  std::mutex mutex_;
};

/// Request/reply and subscriptions over the broker's topic scheme. Not
/// thread safe.
class MqttRemote {
 public:
  MqttRemote(const std::string& host, std::uint16_t port, std::string device_id, const Credentials& credentials,
             std::chrono::milliseconds timeout = std::chrono::seconds(5));

  /// Retained envelope of a variable.
  std::string read(const ResourceId& id);
  /// `verb` is invoke, update, create or delete. A nonce is added when the
  /// payload has none. Returns the reply envelope.
  std::string request(const ResourceId& id, const std::string& verb, nlohmann::json payload);
  /// The retained model document.
  std::string model();
  /// Calls `on_message` for every message matching `filter` until it
  /// returns false.
  void subscribe(const std::string& filter, const std::function<bool(const mqtt::Message&)>& on_message);

  std::string topic(const ResourceId& id) const;

 private:
  mqtt::Message await(const std::function<bool(const mqtt::Message&)>& match);

  std::string device_id_;
  std::chrono::milliseconds timeout_;
  mqtt::Client client_;
};

}  // namespace lsm
