// SPDX-License-Identifier: Apache-2.0
#include "lsm/mqtt/broker.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <set>
#include <shared_mutex>

namespace lsm::mqtt {

using namespace std::chrono_literals;

namespace {

const std::map<std::string_view, Action> kRequestVerbs{{"invoke", Action::OnInvoke},
                                                       {"update", Action::Update},
                                                       {"create", Action::Create},
                                                       {"delete", Action::Delete}};

bool valid_nonce(const std::string& nonce) {
  return !nonce.empty() && nonce.size() <= 256 && valid_topic_name(nonce) && nonce.find('/') == std::string::npos;
}

}  // namespace

// Listeners registered on the pipeline outlive the broker; they go through this.
struct Broker::Guard {
  std::shared_mutex mutex;
  Broker* broker = nullptr;
};

class Broker::Session {
 public:
  Session(net::TcpStream stream, std::string key, std::size_t capacity)
      : stream_(std::move(stream)), key_(std::move(key)), capacity_(capacity) {}

  const std::string& key() const { return key_; }
  net::TcpStream& stream() { return stream_; }

  std::string client_id;
  std::string user;
  std::atomic<bool> connected{false};
  std::uint16_t keep_alive = 0;
  std::set<std::string> filters;  // touched only by the session's reader thread
  std::shared_ptr<SessionRecipient> recipient;

  void send_control(const Packet& packet) {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    queue_.push_back({true, encode(packet)});
    ready_.notify_one();
  }

  /// Live variable change; held back while a SUBSCRIBE is being processed.
  bool deliver_live(const std::string& topic, const std::string& envelope) {
    std::lock_guard lock(mutex_);
    if (closed_) return false;
    if (holding_) {
      pending_.emplace_back(topic, envelope);
      return true;
    }
    push_variable_locked(topic, envelope, false);
    return true;
  }

  void deliver(const std::string& topic, const std::string& payload, bool retain) {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    push_locked(topic, payload, retain);
  }

  void hold() {
    std::lock_guard lock(mutex_);
    holding_ = true;
  }

  /// Sends the retained snapshot, then the changes that arrived meanwhile,
  /// skipping ones the snapshot already covers.
  template <class Snapshot>
  void release(Snapshot&& snapshot) {
    std::lock_guard lock(mutex_);
    std::set<std::string> covered;
    for (const auto& [topic, payload, variable] : snapshot()) {
      if (closed_) break;
      push_locked(topic, payload, true);
      if (variable) {
        last_[topic] = payload;
        covered.insert(topic);
      }
    }
    for (auto& [topic, envelope] : pending_) {
      if (closed_ || covered.count(topic)) continue;
      push_variable_locked(topic, envelope, false);
    }
    pending_.clear();
    holding_ = false;
  }

  void forget(const std::string& topic) {
    std::lock_guard lock(mutex_);
    last_.erase(topic);
  }

  /// Writer loop; returns when the queue is closed and drained or the socket fails.
  void write_loop() {
    while (true) {
      std::string frame;
      {
        std::unique_lock lock(mutex_);
        ready_.wait(lock, [&] { return !queue_.empty() || closed_; });
        if (queue_.empty()) break;
        frame = std::move(queue_.front().second);
        queue_.pop_front();
      }
      try {
        stream_.write_all(frame);
      } catch (const std::exception& e) {
        spdlog::debug("mqtt session {}: write failed: {}", client_id, e.what());
        close();
        break;
      }
    }
    stream_.shutdown();
  }

  /// Stops accepting output; the writer drains what is queued and exits.
  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    ready_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }

 private:
  void push_variable_locked(const std::string& topic, const std::string& envelope, bool retain) {
    auto& last = last_[topic];
    if (last == envelope) return;  // same change already delivered
    last = envelope;
    push_locked(topic, envelope, retain);
  }

  void push_locked(const std::string& topic, const std::string& payload, bool retain) {
    Publish p;
    p.topic = topic;
    p.payload = payload;
    p.retain = retain;
    std::size_t publishes = 0;
    for (const auto& item : queue_) publishes += item.first ? 0 : 1;
    if (publishes >= capacity_) {
      for (auto it = queue_.begin(); it != queue_.end(); ++it) {
        if (!it->first) {
          queue_.erase(it);
          break;
        }
      }
      if (dropped_++ % 1000 == 0) {
        spdlog::warn("mqtt session {}: outbound queue full, dropped {} publish(es)", client_id, dropped_);
      }
    }
    queue_.push_back({false, encode(p)});
    ready_.notify_one();
  }

  net::TcpStream stream_;
  std::string key_;
  std::size_t capacity_;

  mutable std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<std::pair<bool, std::string>> queue_;  // (control, frame)
  bool closed_ = false;
  bool holding_ = false;
  std::vector<std::pair<std::string, std::string>> pending_;
  std::map<std::string, std::string> last_;
  std::uint64_t dropped_ = 0;
};

class Broker::SessionRecipient final : public Recipient {
 public:
  SessionRecipient(std::weak_ptr<Session> session, std::string prefix)
      : session_(std::move(session)), prefix_(std::move(prefix)) {}

  bool deliver(const ResourceId& id, const std::string& envelope) override {
    auto session = session_.lock();
    if (!session) return false;
    return session->deliver_live(prefix_ + id.str(), envelope);
  }

 private:
  std::weak_ptr<Session> session_;
  std::string prefix_;
};

Broker::Broker(Pipeline& pipeline, std::string device_id, BrokerOptions options)
    : pipeline_(pipeline), device_id_(std::move(device_id)), options_(std::move(options)) {
  if (!valid_topic_name(device_id_) || device_id_.find('/') != std::string::npos || device_id_.starts_with('$')) {
    throw std::invalid_argument("device id '" + device_id_ + "' is not a single topic level");
  }
  guard_ = std::make_shared<Guard>();
  guard_->broker = this;

  std::weak_ptr<Guard> weak = guard_;
  pipeline_.add_change_listener([weak](const ResourceId& id, const std::string& envelope) {
    auto guard = weak.lock();
    if (!guard) return;
    std::shared_lock lock(guard->mutex);
    if (!guard->broker) return;
    std::lock_guard state(guard->broker->mutex_);
    guard->broker->retained_[guard->broker->topic_of(id)] = envelope;
  });
  pipeline_.add_topology_listener([weak](const ResourceId& id, bool added) {
    auto guard = weak.lock();
    if (!guard) return;
    std::shared_lock lock(guard->mutex);
    if (guard->broker) guard->broker->on_topology(id, added);
  });

  std::vector<std::pair<std::string, std::string>> initial;
  pipeline_.for_each_variable([&](const ResourceId& id, const VariablePtr& var) {
    auto snap = var->snapshot();
    initial.emplace_back(topic_of(id), serialize_envelope(snap.value, snap.meta));
  });
  auto model = canonical_json(pipeline_.model_document());
  std::lock_guard lock(mutex_);
  for (auto& [topic, envelope] : initial) retained_.try_emplace(topic, std::move(envelope));
  retained_[device_id_ + "/$model"] = std::move(model);
}

Broker::~Broker() {
  stop();
  std::lock_guard lock(guard_->mutex);
  guard_->broker = nullptr;
}

std::uint16_t Broker::start() {
  // Members added to the tree before start are part of the published model.
  auto model = canonical_json(pipeline_.model_document());
  {
    std::lock_guard lock(mutex_);
    retained_[device_id_ + "/$model"] = std::move(model);
  }
  listener_ = std::make_unique<net::TcpListener>(options_.host, options_.port);
  port_ = listener_->port();
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  spdlog::info("mqtt broker for '{}' listening on {}:{}", device_id_, options_.host, port_);
  return port_;
}

void Broker::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  if (listener_) listener_->close();
  std::vector<std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(mutex_);
    sessions = all_sessions_;
  }
  for (auto& s : sessions) s->close();
  reap_workers(true);
}

void Broker::reap_workers(bool all) {
  std::vector<Worker> finished;
  {
    std::lock_guard lock(workers_mutex_);
    for (auto it = workers_.begin(); it != workers_.end();) {
      if (all || it->done->load()) {
        finished.push_back(std::move(*it));
        it = workers_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& w : finished) {
    if (w.thread.joinable()) w.thread.join();
  }
}

void Broker::accept_loop() {
  while (running_) {
    auto stream = listener_->accept(200ms);
    reap_workers(false);
    if (!stream.valid()) continue;
    std::shared_ptr<Session> session;
    {
      std::lock_guard lock(mutex_);
      session = std::make_shared<Session>(std::move(stream), "s" + std::to_string(next_session_++),
                                          options_.queue_capacity);
      all_sessions_.push_back(session);
    }
    session->recipient = std::make_shared<SessionRecipient>(session, device_id_ + "/");
    auto done = std::make_shared<std::atomic<bool>>(false);
    std::lock_guard lock(workers_mutex_);
    workers_.push_back({std::thread([this, session, done] {
                          run_session(session);
                          *done = true;
                        }),
                        done});
  }
}

void Broker::run_session(std::shared_ptr<Session> session) {
  std::thread writer([session] { session->write_loop(); });
  FrameReader reader;
  auto last_activity = std::chrono::steady_clock::now();
  const auto connect_deadline = last_activity + 10s;
  try {
    while (!session->closed()) {
      auto chunk = session->stream().read_some(250ms);
      const auto now = std::chrono::steady_clock::now();
      if (!chunk) {
        if (!session->connected && now > connect_deadline) throw ProtocolError("no CONNECT received");
        if (session->keep_alive > 0 && now - last_activity > std::chrono::milliseconds(session->keep_alive * 1500)) {
          throw ProtocolError("keep-alive expired");
        }
        continue;
      }
      if (chunk->empty()) break;
      last_activity = now;
      reader.feed(*chunk);
      while (auto frame = reader.next()) {
        const Packet packet = decode(*frame);
        if (!session->connected) {
          const auto* connect = std::get_if<Connect>(&packet);
          if (!connect) throw ProtocolError("first packet must be CONNECT");
          if (!handle_connect(session, *connect)) throw ProtocolError("connection refused");
          continue;
        }
        std::visit(
            [&](const auto& p) {
              using T = std::decay_t<decltype(p)>;
              if constexpr (std::is_same_v<T, Connect>) {
                throw ProtocolError("second CONNECT");
              } else if constexpr (std::is_same_v<T, Subscribe>) {
                handle_subscribe(session, p);
              } else if constexpr (std::is_same_v<T, Unsubscribe>) {
                handle_unsubscribe(session, p);
              } else if constexpr (std::is_same_v<T, Publish>) {
                // Inbound QoS 1/2 is acknowledged; everything is forwarded at QoS 0.
                if (p.qos == 1) session->send_control(Puback{p.packet_id});
                if (p.qos == 2) session->send_control(Pubrec{p.packet_id});
                handle_publish(session, p);
              } else if constexpr (std::is_same_v<T, Pubrel>) {
                session->send_control(Pubcomp{p.packet_id});
              } else if constexpr (std::is_same_v<T, Pingreq>) {
                session->send_control(Pingresp{});
              } else if constexpr (std::is_same_v<T, Disconnect>) {
                session->close();
              } else if constexpr (std::is_same_v<T, Puback> || std::is_same_v<T, Pubrec> ||
                                   std::is_same_v<T, Pubcomp>) {
                // Nothing is sent at QoS > 0, so there is nothing to acknowledge.
              } else {
                throw ProtocolError("unexpected packet from client");
              }
            },
            packet);
        if (session->closed()) break;
      }
    }
  } catch (const std::exception& e) {
    spdlog::debug("mqtt session {}: closing: {}", session->client_id, e.what());
  }
  end_session(session);
  writer.join();
}

bool Broker::handle_connect(const std::shared_ptr<Session>& session, const Connect& connect) {
  auto refuse = [&](ConnectReturn code) {
    session->send_control(Connack{false, code});
    return false;
  };
  if (connect.protocol_level != 4) return refuse(ConnectReturn::BadProtocol);
  if (connect.client_id.empty() && !connect.clean_session) return refuse(ConnectReturn::IdentifierRejected);
  if (options_.available && !options_.available()) return refuse(ConnectReturn::Unavailable);

  // Without a credential table every client acts as the anonymous user.
  std::string user;
  if (options_.credentials.empty()) {
    user = options_.anonymous_user.value_or(connect.username.value_or("anonymous"));
  } else if (connect.username) {
    auto it = options_.credentials.find(*connect.username);
    if (it == options_.credentials.end() || it->second != connect.password.value_or("")) {
      return refuse(ConnectReturn::BadCredentials);
    }
    user = *connect.username;
  } else if (options_.anonymous_user) {
    user = *options_.anonymous_user;
  } else {
    return refuse(ConnectReturn::NotAuthorized);
  }

  session->user = user;
  session->keep_alive = connect.keep_alive;
  session->client_id = connect.client_id.empty() ? "auto-" + session->key() : connect.client_id;
  if (connect.will) spdlog::debug("mqtt session {}: will message ignored", session->client_id);

  std::shared_ptr<Session> replaced;
  {
    std::lock_guard lock(mutex_);
    auto& slot = sessions_[session->client_id];
    replaced = slot;
    slot = session;
  }
  if (replaced) {
    spdlog::info("mqtt client id '{}' reconnected; closing the previous session", session->client_id);
    replaced->close();
  }
  session->connected = true;
  session->send_control(Connack{false, ConnectReturn::Accepted});
  return true;
}

std::string Broker::topic_of(const ResourceId& id) const { return device_id_ + "/" + id.str(); }

std::optional<ResourceId> Broker::variable_of(std::string_view topic) const {
  if (!topic.starts_with(device_id_) || topic.size() <= device_id_.size() + 1 || topic[device_id_.size()] != '/') {
    return std::nullopt;
  }
  try {
    auto id = ResourceId::parse(topic.substr(device_id_.size() + 1));
    if (pipeline_.kind_of(id) == NodeKind::Variable) return id;
  } catch (const MalformedId&) {
  }
  return std::nullopt;
}

void Broker::handle_subscribe(const std::shared_ptr<Session>& session, const Subscribe& subscribe) {
  Suback ack{subscribe.packet_id, {}};
  std::vector<std::string> granted;
  const auto variables = variable_ids();
  session->hold();
  for (const auto& [filter, qos] : subscribe.filters) {
    if (!valid_topic_filter(filter)) {
      ack.codes.push_back(kSubackFailure);
      continue;
    }
    std::size_t matched = 0, authorized = 0;
    for (const auto& id : variables) {
      if (!topic_matches(filter, topic_of(id))) continue;
      ++matched;
      ActionRequest request{session->user, id, Action::OnSubscribe, {}, std::nullopt, session->recipient};
      if (pipeline_.dispatch(request).ok()) ++authorized;
    }
    if (matched > 0 && authorized == 0) {
      ack.codes.push_back(kSubackFailure);
      continue;
    }
    session->filters.insert(filter);
    {
      std::lock_guard lock(mutex_);
      trie_.insert(filter, session->key());
    }
    granted.push_back(filter);
    ack.codes.push_back(0);
  }
  session->send_control(ack);
  release_hold(*session, granted);
}

void Broker::release_hold(Session& session, const std::vector<std::string>& granted) {
  const bool sees_model = pipeline_.authorize(session.user, ResourceId{}, Action::Read) != AuthzDecision::Deny;
  const std::string prefix = device_id_ + "/";
  const std::string model_topic = prefix + "$model";
  // Runs under the session lock, so it must not touch the resource tree.
  session.release([&] {
    std::vector<std::tuple<std::string, std::string, bool>> out;
    std::lock_guard lock(mutex_);
    for (const auto& [topic, payload] : retained_) {
      bool matches = false;
      for (const auto& f : granted) matches = matches || topic_matches(f, topic);
      if (!matches) continue;
      if (topic == model_topic) {
        if (sees_model) out.emplace_back(topic, payload, false);
      } else if (topic.starts_with(prefix)) {
        // The device namespace retains only variables; deliver those the session holds.
        const auto id = ResourceId::parse(std::string_view(topic).substr(prefix.size()));
        if (pipeline_.registry().subscribed(id, session.recipient)) out.emplace_back(topic, payload, true);
      } else {
        out.emplace_back(topic, payload, false);
      }
    }
    return out;
  });
}

void Broker::handle_unsubscribe(const std::shared_ptr<Session>& session, const Unsubscribe& unsubscribe) {
  std::vector<std::string> removed;
  for (const auto& filter : unsubscribe.filters) {
    if (session->filters.erase(filter) == 0) continue;
    removed.push_back(filter);
    std::lock_guard lock(mutex_);
    trie_.erase(filter, session->key());
  }
  if (!removed.empty()) {
    for (const auto& id : variable_ids()) {
      const auto topic = topic_of(id);
      bool was = false, still = false;
      for (const auto& f : removed) was = was || topic_matches(f, topic);
      if (!was) continue;
      for (const auto& f : session->filters) still = still || topic_matches(f, topic);
      if (still) continue;
      ActionRequest request{session->user, id, Action::OnUnsubscribe, {}, std::nullopt, session->recipient};
      pipeline_.dispatch(request);
      session->forget(topic);
    }
  }
  session->send_control(Unsuback{unsubscribe.packet_id});
}

void Broker::handle_publish(const std::shared_ptr<Session>& session, const Publish& publish) {
  const std::string_view topic = publish.topic;
  const std::string prefix = device_id_ + "/";
  if (!topic.starts_with(prefix)) {
    this->publish(publish.topic, publish.payload, publish.retain);
    return;
  }
  if (variable_of(topic)) {
    spdlog::debug("mqtt: ignoring client publish on value topic {}", publish.topic);
    return;
  }
  const auto slash = topic.rfind('/');
  const auto verb = kRequestVerbs.find(topic.substr(slash + 1));
  if (slash <= device_id_.size() || verb == kRequestVerbs.end()) {
    spdlog::debug("mqtt: ignoring client publish in the device namespace: {}", publish.topic);
    return;
  }
  const auto path = topic.substr(prefix.size(), slash - prefix.size());
  std::optional<ResourceId> id;
  try {
    id = ResourceId::parse(path);
  } catch (const MalformedId&) {
  }
  if (!id) {
    spdlog::debug("mqtt: request on malformed resource path {}", publish.topic);
    return;
  }
  handle_request(session, *id, verb->second, publish.payload);
}

void Broker::handle_request(const std::shared_ptr<Session>& session, const ResourceId& id, Action action,
                            const std::string& payload) {
  const std::string reply_base = topic_of(id) + "/result/";
  std::string nonce;
  try {
    const auto body = nlohmann::json::parse(payload);
    if (body.is_object() && body.contains("nonce") && body["nonce"].is_string()) nonce = body["nonce"].get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  if (!valid_nonce(nonce)) {
    route(reply_base + "_invalid",
          serialize_envelope(ActionResponse::error(errc::bad_payload, "request needs a text nonce usable as a topic level")));
    return;
  }
  ActionRequest request{session->user, id, action, {}, payload, session->recipient};
  route(reply_base + nonce, serialize_envelope(pipeline_.dispatch(request)));
}

void Broker::publish(const std::string& topic, const std::string& payload, bool retain) {
  if (retain) {
    std::lock_guard lock(mutex_);
    if (payload.empty()) {
      retained_.erase(topic);
    } else {
      retained_[topic] = payload;
    }
  }
  route(topic, payload);
}

void Broker::route(const std::string& topic, const std::string& payload) {
  std::vector<std::shared_ptr<Session>> targets;
  {
    std::lock_guard lock(mutex_);
    const auto keys = trie_.match(topic);
    if (keys.empty()) return;
    for (const auto& s : all_sessions_) {
      if (keys.count(s->key())) targets.push_back(s);
    }
  }
  for (auto& s : targets) s->deliver(topic, payload, false);
}

void Broker::on_topology(const ResourceId& id, bool added) {
  const auto model = canonical_json(pipeline_.model_document());
  const auto prefix = topic_of(id);
  std::vector<std::pair<ResourceId, std::string>> fresh;
  if (added) {
    pipeline_.for_each_variable(id, [&](const ResourceId& var_id, const VariablePtr& var) {
      auto snap = var->snapshot();
      fresh.emplace_back(var_id, serialize_envelope(snap.value, snap.meta));
    });
  }
  std::vector<std::shared_ptr<Session>> sessions;
  std::vector<std::pair<std::shared_ptr<Session>, ResourceId>> extend;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [var_id, envelope] : fresh) retained_.try_emplace(topic_of(var_id), envelope);
    if (!added) {
      for (auto it = retained_.lower_bound(prefix); it != retained_.end() && it->first.starts_with(prefix);) {
        if (it->first.size() == prefix.size() || it->first[prefix.size()] == '/') {
          it = retained_.erase(it);
        } else {
          ++it;
        }
      }
    }
    // Existing wildcard subscriptions extend to new variables.
    for (const auto& [var_id, envelope] : fresh) {
      const auto keys = trie_.match(topic_of(var_id));
      for (const auto& s : all_sessions_) {
        if (s->connected && keys.count(s->key())) extend.emplace_back(s, var_id);
      }
    }
  }
  for (const auto& [s, var_id] : extend) {
    ActionRequest request{s->user, var_id, Action::OnSubscribe, {}, std::nullopt, s->recipient};
    pipeline_.dispatch(request);
  }
  publish(device_id_ + "/$model", model, true);
}

std::vector<ResourceId> Broker::variable_ids() const {
  std::vector<ResourceId> ids;
  pipeline_.for_each_variable([&](const ResourceId& id, const VariablePtr&) { ids.push_back(id); });
  return ids;
}

void Broker::end_session(const std::shared_ptr<Session>& session) {
  session->close();
  pipeline_.registry().remove_recipient(session->recipient);
  std::lock_guard lock(mutex_);
  trie_.erase_key(session->key());
  if (auto it = sessions_.find(session->client_id); it != sessions_.end() && it->second == session) {
    sessions_.erase(it);
  }
  std::erase(all_sessions_, session);
}

std::optional<std::string> Broker::retained(const std::string& topic) const {
  std::lock_guard lock(mutex_);
  auto it = retained_.find(topic);
  if (it == retained_.end()) return std::nullopt;
  return it->second;
}

std::size_t Broker::session_count() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& s : all_sessions_) n += s->connected ? 1 : 0;
  return n;
}

}  // namespace lsm::mqtt
