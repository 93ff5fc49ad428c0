// SPDX-License-Identifier: Apache-2.0
#include "lsm/bridge.hpp"

#include <spdlog/spdlog.h>

#include <random>

namespace lsm {

namespace {

using nlohmann::json;

constexpr const char* kBridgeUser = "bridge";

Value default_value(const ValueKind& kind) {
  switch (kind.type) {
    case ValueType::Bool: return Value(false);
    case ValueType::Int64: return Value(std::int64_t{0});
    case ValueType::Float64: return Value(0.0);
    case ValueType::Text: return Value(std::string());
    case ValueType::Enum: return Value(EnumSymbol{kind.symbols.empty() ? std::string() : kind.symbols.front()});
    case ValueType::Vector3: return Value(Eigen::Vector3d::Zero().eval());
    case ValueType::Vector4: return Value(identity_quaternion());
    case ValueType::Matrix3: return Value(Eigen::Matrix3d::Zero().eval());
  }
  return Value();
}

ActionException unavailable(const std::string& why) {
  return ActionException(std::string(errc::unavailable), "upstream unavailable: " + why);
}

/// Parses an upstream reply; error envelopes are rethrown so the local
/// pipeline serializes them unchanged.
ActionResponse expect(const std::string& envelope, const std::optional<ValueKind>& kind,
                      const ParamList* returns = nullptr) {
  auto response = deserialize_response(envelope, kind, returns);
  if (!response.ok()) throw ActionException(response.error().code, response.error().message);
  return response;
}

bool valid_reply_nonce(const std::string& nonce) {
  return !nonce.empty() && nonce.size() <= 256 && mqtt::valid_topic_name(nonce) &&
         nonce.find('/') == std::string::npos;
}

const json& subtree(const json& doc, const ResourceId& id) {
  const json* node = &doc;
  for (const auto& segment : id.segments()) {
    const json* next = nullptr;
    for (const auto& child : node->at("children")) {
      if (child.at("name") == segment) next = &child;
    }
    if (!next) throw RemoteError("upstream model has no '" + id.str() + "'");
    node = next;
  }
  return *node;
}

std::string client_id() {
  std::mt19937_64 rng{std::random_device{}()};
  return "lsm-bridge-" + std::to_string(rng() % 1000000000ULL);
}

}  // namespace

Bridge::Bridge(BridgeOptions options) : options_(std::move(options)) {
  const auto& up = options_.upstream;
  json doc;
  if (up.scheme == Endpoint::Scheme::Http) {
    device_id_ = options_.device_id.value_or("dev1");
    http_upstream_ = std::make_unique<HttpRemote>(up.host, up.port, options_.credentials.token, options_.timeout);
    doc = fetch_http_tree(ResourceId::root());
  } else {
    device_id_ = options_.device_id.value_or(up.device_id);
    mqtt::Client::Options o;
    o.host = up.host;
    o.port = up.port;
    o.client_id = client_id();
    o.username = options_.credentials.username;
    o.password = options_.credentials.password;
    o.timeout = options_.timeout;
    try {
      mqtt_upstream_ = std::make_unique<mqtt::Client>(o, [this](const mqtt::Message& m) { on_upstream_message(m); });
    } catch (const std::exception& e) {
      throw RemoteError("cannot connect to mqtt://" + up.host + ":" + std::to_string(up.port) + ": " + e.what());
    }
    doc = fetch_model();
  }
  auto root = std::static_pointer_cast<ObjectNode>(build(doc, ResourceId::root()));
  pipeline_ = std::make_unique<Pipeline>(root, Policy::allow_all(kBridgeUser), std::make_shared<SystemClock>(),
                                         std::make_shared<NonceSource>());
  load_values(ResourceId::root());

  auto available = [this] { return upstream_available(); };
  if (options_.listen_http) {
    HttpAdapterOptions http;
    http.anonymous_user = kBridgeUser;
    http.available = available;
    http_adapter_ = std::make_unique<HttpAdapter>(*pipeline_, std::move(http));
  }
  if (options_.listen_mqtt) {
    mqtt::BrokerOptions mqtt;
    mqtt.host = options_.host;
    mqtt.port = *options_.listen_mqtt;
    mqtt.anonymous_user = kBridgeUser;
    mqtt.available = available;
    broker_ = std::make_unique<mqtt::Broker>(*pipeline_, device_id_, std::move(mqtt));
  }
}

Bridge::~Bridge() { stop(); }

void Bridge::start() {
  if (http_adapter_) {
    http_server_ = std::make_unique<HttpServer>(*http_adapter_, options_.host, *options_.listen_http);
    http_port_ = http_server_->start();
  }
  if (broker_) mqtt_port_ = broker_->start();
  if (http_upstream_ && options_.poll_period.count() > 0) poller_ = std::thread([this] { poll_loop(); });
}

void Bridge::stop() {
  {
    std::lock_guard lock(poll_mutex_);
    stopping_ = true;
  }
  poll_cv_.notify_all();
  if (poller_.joinable()) poller_.join();
  if (http_server_) http_server_->stop();
  if (broker_) broker_->stop();
  if (mqtt_upstream_) mqtt_upstream_->disconnect();
}

bool Bridge::upstream_available() const {
  if (mqtt_upstream_) return mqtt_upstream_->connected();
  return http_reachable_;
}

json Bridge::fetch_model() {
  const auto topic = options_.upstream.device_id + "/$model";
  {
    std::lock_guard lock(model_mutex_);
    model_.reset();
  }
  const auto codes = mqtt_upstream_->subscribe({topic});
  if (codes.empty() || codes[0] == mqtt::kSubackFailure) throw RemoteError("subscription to " + topic + " refused");
  std::unique_lock lock(model_mutex_);
  if (!model_cv_.wait_for(lock, options_.timeout, [&] { return model_.has_value(); })) {
    throw RemoteError("no model document on " + topic);
  }
  return json::parse(*model_);
}

json Bridge::fetch_http_tree(const ResourceId& id) {
  HttpResponse response;
  try {
    response = http_upstream_->request("GET", id);
  } catch (const RemoteError& e) {
    http_reachable_ = false;
    throw;
  }
  if (response.status != 200) {
    throw RemoteError("browsing '" + id.str() + "' upstream failed with " + std::to_string(response.status) + ": " +
                      response.body);
  }
  json doc = json::parse(response.body);
  doc.erase("href");
  if (doc.contains("children")) {
    for (auto& child : doc["children"]) {
      const auto name = child.at("name").get<std::string>();
      if (child.at("kind") == "object") {
        child = fetch_http_tree(id.child(name));
        child["name"] = name;
      }
      child.erase("href");
    }
  }
  return doc;
}

NodePtr Bridge::build(const json& doc, const ResourceId& id) {
  const auto kind = doc.at("kind").get<std::string>();
  if (kind == "variable") {
    std::vector<std::string> symbols;
    if (doc.contains("symbols")) symbols = doc.at("symbols").get<std::vector<std::string>>();
    const auto value_kind = ValueKind::from_name(doc.at("value_kind").get<std::string>(), std::move(symbols));
    const bool writable = doc.value("writable", false);
    auto var = std::make_shared<VariableNode>(value_kind, default_value(value_kind), writable,
                                              doc.value("measured", false));
    var->set_refresher([this, id] {
      if (http_upstream_) {
        refresh_from_http(id);
      } else if (!mqtt_upstream_->connected()) {
        throw unavailable("broker connection lost");
      }
    });
    if (writable) {
      var->set_update_handler([this, id, value_kind](const Value& value, CallContext& ctx) {
        const auto envelope = forward(id, Action::Update, json{{"value", to_json(value)}}, ctx.nonce);
        auto response = expect(envelope, value_kind);
        absorb(id, envelope);
        return VariableNode::Snapshot{std::get<Value>(response.result().value), response.result().meta};
      });
    }
    std::lock_guard lock(mirror_mutex_);
    variables_[id] = var;
    return var;
  }

  if (kind == "function") {
    Signature signature{params_from_json(doc.at("args")), params_from_json(doc.at("returns"))};
    auto handler = [this, id, signature](const ValueMap& args, CallContext& ctx) {
      json payload = json::object();
      for (const auto& [name, value] : args) {
        if (name != "nonce") payload[name] = to_json(value);
      }
      const auto envelope = forward(id, Action::OnInvoke, std::move(payload), ctx.nonce);
      auto response = expect(envelope, std::nullopt, &signature.returns);
      return FunctionResult{std::get<ValueMap>(response.result().value), response.result().meta};
    };
    return std::make_shared<FunctionNode>(signature, std::move(handler));
  }

  if (kind != "object") throw RemoteError("unknown node kind '" + kind + "' in the upstream model");
  auto object = std::make_shared<ObjectNode>();
  for (const auto& child : doc.at("children")) {
    const auto name = child.at("name").get<std::string>();
    object->add(name, build(child, id.child(name)));
  }
  if (doc.contains("create_args")) {
    object->set_create_handler(params_from_json(doc.at("create_args")), [this, id](const ValueMap& args,
                                                                                    CallContext& ctx) {
      json payload = json::object();
      for (const auto& [name, value] : args) {
        if (name != "nonce") payload[name] = to_json(value);
      }
      static const ParamList returns{{"name", ValueKind::text()}};
      auto response = expect(forward(id, Action::Create, std::move(payload), ctx.nonce), std::nullopt, &returns);
      const auto name = std::get<ValueMap>(response.result().value).at("name").get<std::string>();
      ctx.reply_meta = response.result().meta;
      const auto child = id.child(name);
      // The upstream republishes its model before it replies, so the cached
      // document already holds the new subtree.
      json child_doc;
      try {
        if (http_upstream_) {
          child_doc = fetch_http_tree(child);
        } else {
          std::lock_guard lock(model_mutex_);
          child_doc = subtree(json::parse(model_.value_or("{}")), child);
        }
      } catch (const std::exception& e) {
        throw unavailable(std::string("cannot mirror '") + child.str() + "': " + e.what());
      }
      ObjectNode::Created created{name, build(child_doc, child)};
      load_values(child);
      return created;
    });
  }
  if (doc.value("deletable", false)) {
    object->set_delete_handler([this, id](CallContext& ctx) {
      static const ParamList returns{{"name", ValueKind::text()}};
      auto response = expect(forward(id, Action::Delete, json::object(), ctx.nonce), std::nullopt, &returns);
      ctx.reply_meta = response.result().meta;
      std::lock_guard lock(mirror_mutex_);
      std::erase_if(variables_, [&](const auto& entry) { return entry.first.starts_with(id); });
      std::erase_if(last_envelope_, [&](const auto& entry) { return entry.first.starts_with(id); });
      std::erase_if(stash_, [&](const auto& entry) { return entry.first.starts_with(id); });
    });
  }
  return object;
}

void Bridge::load_values(const ResourceId& prefix) {
  std::vector<ResourceId> ids;
  std::vector<std::pair<ResourceId, std::string>> stashed;
  {
    std::lock_guard lock(mirror_mutex_);
    for (const auto& [id, var] : variables_) {
      if (!id.starts_with(prefix)) continue;
      ids.push_back(id);
      if (auto it = stash_.find(id); it != stash_.end()) {
        stashed.emplace_back(id, std::move(it->second));
        stash_.erase(it);
      }
    }
  }
  for (const auto& [id, envelope] : stashed) absorb(id, envelope);

  if (http_upstream_) {
    for (const auto& id : ids) {
      try {
        refresh_from_http(id);
      } catch (const ActionException& e) {
        spdlog::warn("bridge: cannot read '{}' upstream: {}", id.str(), e.what());
      }
    }
    return;
  }

  // Subscribing delivers every retained envelope below the prefix.
  const auto& device = options_.upstream.device_id;
  const auto filter = prefix.is_root() ? device + "/#" : device + "/" + prefix.str() + "/#";
  const auto codes = mqtt_upstream_->subscribe({filter});
  if (codes.empty() || codes[0] == mqtt::kSubackFailure) throw RemoteError("subscription to " + filter + " refused");
  std::unique_lock lock(mirror_mutex_);
  const bool complete = absorbed_cv_.wait_for(lock, options_.timeout, [&] {
    for (const auto& id : ids) {
      if (!last_envelope_.count(id)) return false;
    }
    return true;
  });
  if (!complete) spdlog::warn("bridge: some values below '{}' never arrived", prefix.str());
}

std::string Bridge::forward(const ResourceId& id, Action action, json payload, const std::string& nonce) {
  payload["nonce"] = nonce;
  if (mqtt_upstream_) {
    static const std::map<Action, std::string> verbs{
        {Action::Update, "update"}, {Action::OnInvoke, "invoke"}, {Action::Create, "create"}, {Action::Delete, "delete"}};
    return forward_mqtt(id, verbs.at(action), std::move(payload), nonce);
  }
  static const std::map<Action, std::string> methods{
      {Action::Update, "PUT"}, {Action::OnInvoke, "POST"}, {Action::Create, "POST"}, {Action::Delete, "DELETE"}};
  try {
    auto response = http_upstream_->request(methods.at(action), id, payload.dump());
    http_reachable_ = true;
    return response.body;
  } catch (const RemoteError& e) {
    http_reachable_ = false;
    throw unavailable(e.what());
  }
}

std::string Bridge::forward_mqtt(const ResourceId& id, const std::string& verb, json payload,
                                 const std::string& nonce) {
  if (!valid_reply_nonce(nonce)) {
    throw ActionException(std::string(errc::bad_payload), "request needs a text nonce usable as a topic level");
  }
  if (!mqtt_upstream_->connected()) throw unavailable("broker connection lost");
  auto pending = std::make_shared<Pending>();
  auto reply = pending->reply.get_future();
  {
    std::lock_guard lock(pending_mutex_);
    pending_[nonce] = pending;
  }
  auto forget = [&] {
    std::lock_guard lock(pending_mutex_);
    if (auto it = pending_.find(nonce); it != pending_.end() && it->second == pending) pending_.erase(it);
  };
  const auto base = options_.upstream.device_id + "/" + (id.is_root() ? std::string() : id.str() + "/");
  try {
    mqtt_upstream_->publish(base + verb, payload.dump());
  } catch (const std::exception& e) {
    forget();
    throw unavailable(e.what());
  }
  if (reply.wait_for(options_.timeout) != std::future_status::ready) {
    forget();
    throw unavailable("no reply within " + std::to_string(options_.timeout.count()) + " ms");
  }
  return reply.get();
}

void Bridge::on_upstream_message(const mqtt::Message& message) {
  const auto prefix = options_.upstream.device_id + "/";
  if (!message.topic.starts_with(prefix)) return;
  const auto rest = message.topic.substr(prefix.size());
  if (rest == "$model") {
    {
      std::lock_guard lock(model_mutex_);
      model_ = message.payload;
    }
    model_cv_.notify_all();
    return;
  }
  if (const auto pos = rest.find("result/"); pos != std::string::npos && (pos == 0 || rest[pos - 1] == '/')) {
    const auto nonce = rest.substr(pos + 7);
    std::shared_ptr<Pending> pending;
    {
      std::lock_guard lock(pending_mutex_);
      if (auto it = pending_.find(nonce); it != pending_.end()) {
        pending = it->second;
        pending_.erase(it);
      }
    }
    if (pending) pending->reply.set_value(message.payload);
    return;
  }
  // Requests published by other clients share the namespace; only envelopes count.
  if (!message.payload.starts_with("{\"meta\":")) return;
  ResourceId id;
  try {
    id = ResourceId::parse(rest);
  } catch (const MalformedId&) {
    return;
  }
  absorb(id, message.payload);
}

void Bridge::absorb(const ResourceId& id, const std::string& envelope) {
  {
    std::lock_guard lock(mirror_mutex_);
    auto it = variables_.find(id);
    if (it == variables_.end()) {
      stash_[id] = envelope;
      return;
    }
    auto& last = last_envelope_[id];
    if (last == envelope) return;
    try {
      auto response = deserialize_response(envelope, it->second->value_kind());
      if (!response.ok()) return;
      it->second->store(std::get<Value>(response.result().value), response.result().meta);
      last = envelope;
    } catch (const std::exception& e) {
      spdlog::warn("bridge: dropping envelope for '{}': {}", id.str(), e.what());
      return;
    }
  }
  absorbed_cv_.notify_all();
}

VariableNode::Snapshot Bridge::refresh_from_http(const ResourceId& id) {
  HttpResponse response;
  try {
    response = http_upstream_->request("GET", id);
  } catch (const RemoteError& e) {
    http_reachable_ = false;
    throw unavailable(e.what());
  }
  http_reachable_ = true;
  VariablePtr var;
  {
    std::lock_guard lock(mirror_mutex_);
    auto it = variables_.find(id);
    if (it == variables_.end()) throw ActionException(std::string(errc::not_found), "'" + id.str() + "' is gone");
    var = it->second;
  }
  expect(response.body, var->value_kind());
  absorb(id, response.body);
  return var->snapshot();
}

void Bridge::poll_loop() {
  std::unique_lock lock(poll_mutex_);
  while (!poll_cv_.wait_for(lock, options_.poll_period, [&] { return stopping_; })) {
    lock.unlock();
    std::vector<ResourceId> ids;
    {
      std::lock_guard mirror(mirror_mutex_);
      for (const auto& [id, var] : variables_) ids.push_back(id);
    }
    for (const auto& id : ids) {
      try {
        refresh_from_http(id);
      } catch (const std::exception&) {
        if (!http_reachable_) break;
      }
    }
    lock.lock();
  }
}

}  // namespace lsm
