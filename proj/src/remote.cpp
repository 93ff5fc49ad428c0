// SPDX-License-Identifier: Apache-2.0
#include "lsm/remote.hpp"

#include "lsm/mqtt/topic.hpp"

#include <httplib.h>

#include <random>
#include <regex>

namespace lsm {

Endpoint parse_endpoint(const std::string& url) {
  static const std::regex pattern(R"(^(http|mqtt)://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) throw std::invalid_argument("expected http://host[:port]/... or mqtt://host[:port]/..., got '" + url + "'");
  Endpoint e;
  e.scheme = m[1] == "http" ? Endpoint::Scheme::Http : Endpoint::Scheme::Mqtt;
  e.host = m[2];
  if (m[3].matched) {
    const auto port = std::stoul(m[3]);
    if (port == 0 || port > 65535) throw std::invalid_argument("port out of range in '" + url + "'");
    e.port = static_cast<std::uint16_t>(port);
  } else {
    e.port = e.scheme == Endpoint::Scheme::Http ? 80 : 1883;
  }
  std::string path = m[4].matched ? m[4].str() : "/";
  while (path.size() > 1 && path.back() == '/') path.pop_back();

  auto parse_id = [&](const std::string& text) {
    if (text.empty()) return ResourceId{};
    try {
      return ResourceId::parse(text);
    } catch (const std::exception& ex) {
      throw std::invalid_argument("bad resource path in '" + url + "': " + ex.what());
    }
  };
  if (e.scheme == Endpoint::Scheme::Http) {
    const std::string prefix(kApiPrefix);
    if (path != prefix && !path.starts_with(prefix + "/")) throw std::invalid_argument("HTTP URLs start with " + prefix + ": '" + url + "'");
    e.resource = parse_id(path.size() > prefix.size() ? path.substr(prefix.size() + 1) : "");
  } else {
    if (path == "/") throw std::invalid_argument("MQTT URLs name the device: mqtt://host/<device>/...");
    path.erase(0, 1);
    const auto slash = path.find('/');
    e.device_id = path.substr(0, slash);
    e.resource = parse_id(slash == std::string::npos ? "" : path.substr(slash + 1));
  }
  return e;
}

HttpRemote::HttpRemote(std::string host, std::uint16_t port, std::optional<std::string> token,
                       std::chrono::milliseconds timeout)
    : client_(std::make_unique<httplib::Client>(host, port)), token_(std::move(token)) {
  const auto seconds = static_cast<time_t>(timeout.count() / 1000);
  const auto micros = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client_->set_connection_timeout(seconds, micros);
  client_->set_read_timeout(seconds, micros);
  client_->set_write_timeout(seconds, micros);
  client_->set_keep_alive(true);
}

HttpRemote::~HttpRemote() = default;

HttpResponse HttpRemote::request(const std::string& method, const ResourceId& id, const std::string& body) {
  const std::string path = std::string(kApiPrefix) + "/" + (id.is_root() ? "" : id.str());
  httplib::Headers headers;
  if (token_) headers.emplace("Authorization", "Bearer " + *token_);
  std::lock_guard lock(mutex_);
  httplib::Result result;
  if (method == "GET") {
    result = client_->Get(path, headers);
  } else if (method == "PUT") {
    result = client_->Put(path, headers, body, "application/json");
  } else if (method == "POST") {
    result = client_->Post(path, headers, body, "application/json");
  } else if (method == "DELETE") {
    result = client_->Delete(path, headers, body, "application/json");
  } else {
    throw std::invalid_argument("unsupported method " + method);
  }
  if (!result) throw RemoteError("http request failed: " + httplib::to_string(result.error()));
  return {result->status, result->body};
}

namespace {

std::string fresh_nonce() {
  static constexpr char digits[] = "0123456789abcdef";
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::string out(32, '0');
  for (auto& c : out) c = digits[rng() % 16];
  return out;
}

mqtt::Client::Options client_options(const std::string& host, std::uint16_t port, const Credentials& credentials,
                                     std::chrono::milliseconds timeout) {
  mqtt::Client::Options o;
  o.host = host;
  o.port = port;
  o.username = credentials.username;
  o.password = credentials.password;
  o.timeout = timeout;
  return o;
}

}  // namespace

MqttRemote::MqttRemote(const std::string& host, std::uint16_t port, std::string device_id,
                       const Credentials& credentials, std::chrono::milliseconds timeout)
    : device_id_(std::move(device_id)), timeout_(timeout), client_(client_options(host, port, credentials, timeout)) {}

std::string MqttRemote::topic(const ResourceId& id) const {
  return id.is_root() ? device_id_ : device_id_ + "/" + id.str();
}

mqtt::Message MqttRemote::await(const std::function<bool(const mqtt::Message&)>& match) {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (true) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw RemoteError("timed out waiting for the device");
    auto message = client_.next(left);
    if (!message) {
      if (!client_.connected()) throw RemoteError("connection to the broker lost");
      continue;
    }
    if (match(*message)) return *message;
  }
}

std::string MqttRemote::read(const ResourceId& id) {
  const auto t = topic(id);
  const auto codes = client_.subscribe({t});
  if (codes.empty() || codes[0] == mqtt::kSubackFailure) {
    throw RemoteError("subscription to " + t + " refused");
  }
  auto message = await([&](const mqtt::Message& m) { return m.topic == t; });
  client_.unsubscribe({t});
  return message.payload;
}

std::string MqttRemote::request(const ResourceId& id, const std::string& verb, nlohmann::json payload) {
  if (!payload.is_object()) throw std::invalid_argument("request payload must be a JSON object");
  if (!payload.contains("nonce")) payload["nonce"] = fresh_nonce();
  const auto base = topic(id) + "/result/";
  const auto reply_filter = base + "+";
  const auto codes = client_.subscribe({reply_filter});
  if (codes.empty() || codes[0] == mqtt::kSubackFailure) throw RemoteError("subscription to replies refused");
  std::string reply_topic = base + "_invalid";
  if (payload["nonce"].is_string()) reply_topic = base + payload["nonce"].get<std::string>();
  client_.publish(topic(id) + "/" + verb, payload.dump());
  auto message = await([&](const mqtt::Message& m) { return m.topic == reply_topic || m.topic == base + "_invalid"; });
  client_.unsubscribe({reply_filter});
  return message.payload;
}

std::string MqttRemote::model() {
  const auto t = device_id_ + "/$model";
  client_.subscribe({t});
  auto message = await([&](const mqtt::Message& m) { return m.topic == t; });
  client_.unsubscribe({t});
  return message.payload;
}

void MqttRemote::subscribe(const std::string& filter, const std::function<bool(const mqtt::Message&)>& on_message) {
  const auto codes = client_.subscribe({filter});
  if (codes.empty() || codes[0] == mqtt::kSubackFailure) throw RemoteError("subscription to " + filter + " refused");
  while (true) {
    auto message = client_.next(std::chrono::milliseconds(500));
    if (!message) {
      if (!client_.connected()) throw RemoteError("connection to the broker lost");
      continue;
    }
    if (!mqtt::topic_matches(filter, message->topic)) continue;
    if (!on_message(*message)) break;
  }
}

}  // namespace lsm
