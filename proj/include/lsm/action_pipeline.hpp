// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/clock.hpp"
#include "lsm/envelope.hpp"
#include "lsm/resource_model.hpp"

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lsm {

enum class Action { Read, Update, Create, Delete, OnSubscribe, OnUnsubscribe, Notify, OnInvoke };

inline constexpr std::array<Action, 8> all_actions{Action::Read,        Action::Update,        Action::Create,
                                                   Action::Delete,      Action::OnSubscribe,   Action::OnUnsubscribe,
                                                   Action::Notify,      Action::OnInvoke};

std::string_view to_string(Action action);
std::optional<Action> action_from_string(std::string_view text);

/// Variables: READ UPDATE ON_SUBSCRIBE ON_UNSUBSCRIBE NOTIFY; objects: CREATE
/// DELETE; functions: ON_INVOKE.
bool action_applies(NodeKind kind, Action action);

enum class AuthzDecision { Allow, ReadOnly, Deny };
std::string_view to_string(AuthzDecision decision);

/// ReadOnly admits READ, ON_SUBSCRIBE and ON_UNSUBSCRIBE only.
bool permits(AuthzDecision decision, Action action);

/// Authorization rules, one per line: `user:allow|readonly|deny:<pattern>`.
///
/// A pattern is `**`, `<id>/**` (the id and everything below it) or an exact
/// id. The rule with the longest matching prefix wins; an exact match beats a
/// `/**` match of the same length. Users without rules are denied.
class Policy {
 public:
  struct Rule {
    std::string user;
    AuthzDecision decision = AuthzDecision::Deny;
    ResourceId prefix;
    bool recursive = true;

    std::string str() const;
  };

  static Rule parse_rule(std::string_view line);
  /// Blank lines and lines starting with `#` are skipped.
  static Policy parse(std::string_view text);
  static Policy from_rules(const std::vector<std::string>& lines);
  static Policy allow_all(const std::string& user);

  /// Throws std::invalid_argument on a duplicate (user, pattern).
  void add(Rule rule);

  AuthzDecision authorize(std::string_view user, const ResourceId& id, Action action) const;
  bool knows(std::string_view user) const;
  std::vector<std::string> lines() const;

 private:
  std::vector<Rule> rules_;
};

/// Opaque sink for serialized notification envelopes.
class Recipient {
 public:
  virtual ~Recipient() = default;
  /// Must not block. Returning false marks the recipient as failed; it is
  /// then dropped from every subscription.
  virtual bool deliver(const ResourceId& id, const std::string& envelope) = 0;
};

class SubscriptionRegistry {
 public:
  /// Returns false if the recipient was already subscribed.
  bool subscribe(const ResourceId& id, std::shared_ptr<Recipient> recipient);
  /// Unknown recipients are ignored; returns whether one was removed.
  bool unsubscribe(const ResourceId& id, const std::shared_ptr<Recipient>& recipient);
  void remove_recipient(const std::shared_ptr<Recipient>& recipient);
  void remove_prefix(const ResourceId& prefix);

  /// Delivers to every recipient subscribed when the call starts and returns
  /// their number. Failed recipients count but are removed afterwards.
  std::size_t notify(const ResourceId& id, const std::string& envelope);
  std::size_t notify(const ResourceId& id, const Value& value, const Metadata& meta);

  std::size_t subscriber_count(const ResourceId& id) const;
  bool subscribed(const ResourceId& id, const std::shared_ptr<Recipient>& recipient) const;

 private:
  mutable std::mutex mutex_;
  std::map<ResourceId, std::vector<std::shared_ptr<Recipient>>> subscriptions_;
};

struct ActionRequest {
  std::string user;
  ResourceId resource;
  Action action = Action::Read;
  ValueMap payload;
  /// JSON body from an adapter; decoded against the resource's signature
  /// after authorization. Takes precedence over `payload` when set.
  std::optional<std::string> raw_payload;
  std::shared_ptr<Recipient> recipient;
};

/// Protocol-neutral dispatcher: resolve, authorize, check the action against
/// the resource kind, execute, stamp metadata. Handler failures come back as
/// error responses.
class Pipeline {
 public:
  using ChangeListener = std::function<void(const ResourceId&, const std::string& envelope)>;
  using TopologyListener = std::function<void(const ResourceId&, bool added)>;

  Pipeline(ObjectPtr root, Policy policy, std::shared_ptr<Clock> clock, std::shared_ptr<NonceSource> nonces);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  ActionResponse dispatch(const ActionRequest& request);

  /// Model browsing; needs any decision other than Deny.
  std::variant<NodeDescription, ActionError> browse(const std::string& user, const ResourceId& id) const;

  std::optional<NodeKind> kind_of(const ResourceId& id) const;
  std::optional<ValueKind> variable_kind(const ResourceId& id) const;
  std::optional<Signature> function_signature(const ResourceId& id) const;
  nlohmann::json model_document() const;
  void for_each_variable(const std::function<void(const ResourceId&, const VariablePtr&)>& fn) const;
  void for_each_variable(const ResourceId& prefix,
                         const std::function<void(const ResourceId&, const VariablePtr&)>& fn) const;

  AuthzDecision authorize(const std::string& user, const ResourceId& id, Action action) const;

  /// Called with the serialized envelope of every variable change, before
  /// subscribers are notified.
  void add_change_listener(ChangeListener listener);
  /// Called after CREATE (added=true) or DELETE (added=false) completes.
  void add_topology_listener(TopologyListener listener);

  SubscriptionRegistry& registry() { return registry_; }
  Clock& clock() { return *clock_; }
  NonceSource& nonces() { return *nonces_; }
  const ObjectPtr& root() const { return root_; }

 private:
  ActionResponse execute(const ActionRequest& request, const NodePtr& node, std::string& nonce);
  ValueMap decode_payload(const ActionRequest& request, const Node& node) const;
  void attach(const ObjectNode& object, const ResourceId& base);
  void detach(const ObjectNode& object);
  void on_change(const ResourceId& id, const Value& value, const Metadata& meta);
  Metadata stamp(std::string nonce);

  ObjectPtr root_;
  Policy policy_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<NonceSource> nonces_;
  SubscriptionRegistry registry_;

  mutable std::shared_mutex tree_mutex_;
  mutable std::shared_mutex listener_mutex_;
  std::vector<ChangeListener> change_listeners_;
  std::vector<TopologyListener> topology_listeners_;
};

}  // namespace lsm
