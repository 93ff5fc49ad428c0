// SPDX-License-Identifier: Apache-2.0
#include "lsm/action_pipeline.hpp"

#include <spdlog/spdlog.h>

namespace lsm {

namespace {

ActionResponse fail(std::string_view code, std::string message) { return ActionResponse::error(code, std::move(message)); }

void check_typed(const ValueMap& payload, const ParamList& expected) {
  for (const auto& p : expected) {
    auto it = payload.find(p.name);
    if (it == payload.end()) throw ActionException(std::string(errc::bad_payload), "missing argument '" + p.name + "'");
    if (!it->second.is(p.kind)) {
      throw ActionException(std::string(errc::bad_payload), "argument '" + p.name + "' is not " + p.kind.name());
    }
  }
  for (const auto& [key, value] : payload) {
    const bool declared = std::any_of(expected.begin(), expected.end(), [&](const Param& p) { return p.name == key; });
    if (!declared && !(key == "nonce" && value.is(ValueKind::text()))) {
      throw ActionException(std::string(errc::bad_payload), "unexpected argument '" + key + "'");
    }
  }
}

}  // namespace

Pipeline::Pipeline(ObjectPtr root, Policy policy, std::shared_ptr<Clock> clock, std::shared_ptr<NonceSource> nonces)
    : root_(std::move(root)), policy_(std::move(policy)), clock_(std::move(clock)), nonces_(std::move(nonces)) {
  if (!root_) throw std::invalid_argument("pipeline needs a root object");
  if (!clock_) clock_ = std::make_shared<SystemClock>();
  if (!nonces_) nonces_ = std::make_shared<NonceSource>();
  attach(*root_, ResourceId::root());
}

Pipeline::~Pipeline() { detach(*root_); }

void Pipeline::attach(const ObjectNode& object, const ResourceId& base) {
  lsm::for_each_variable(object, base, [this](const ResourceId& id, const VariablePtr& var) {
    var->set_observer([this, id](const Value& v, const Metadata& m) { on_change(id, v, m); });
  });
}

void Pipeline::detach(const ObjectNode& object) {
  lsm::for_each_variable(object, ResourceId::root(),
                         [](const ResourceId&, const VariablePtr& var) { var->set_observer(nullptr); });
}

void Pipeline::on_change(const ResourceId& id, const Value& value, const Metadata& meta) {
  const auto envelope = serialize_envelope(value, meta);
  {
    std::shared_lock lock(listener_mutex_);
    for (const auto& l : change_listeners_) l(id, envelope);
  }
  registry_.notify(id, envelope);
}

void Pipeline::add_change_listener(ChangeListener listener) {
  std::unique_lock lock(listener_mutex_);
  change_listeners_.push_back(std::move(listener));
}

void Pipeline::add_topology_listener(TopologyListener listener) {
  std::unique_lock lock(listener_mutex_);
  topology_listeners_.push_back(std::move(listener));
}

Metadata Pipeline::stamp(std::string nonce) {
  Metadata meta;
  meta.timestamp_ns = clock_->now_ns();
  meta.nonce = std::move(nonce);
  return meta;
}

AuthzDecision Pipeline::authorize(const std::string& user, const ResourceId& id, Action action) const {
  return policy_.authorize(user, id, action);
}

ValueMap Pipeline::decode_payload(const ActionRequest& request, const Node& node) const {
  ParamList expected;
  bool nonce_allowed = true;
  switch (request.action) {
    case Action::Update:
      expected = {{"value", static_cast<const VariableNode&>(node).value_kind()}};
      break;
    case Action::OnInvoke:
      expected = static_cast<const FunctionNode&>(node).signature().args;
      break;
    case Action::Create:
      expected = static_cast<const ObjectNode&>(node).create_args();
      break;
    case Action::Delete:
      break;
    default:
      nonce_allowed = false;
      break;
  }
  if (request.raw_payload) {
    if (nonce_allowed) return deserialize_payload(*request.raw_payload, expected, {"nonce"});
    return deserialize_payload(*request.raw_payload, expected, {});
  }
  if (!nonce_allowed) {
    if (!request.payload.empty()) {
      throw ActionException(std::string(errc::bad_payload),
                            std::string(to_string(request.action)) + " takes no payload");
    }
    return {};
  }
  check_typed(request.payload, expected);
  return request.payload;
}

ActionResponse Pipeline::dispatch(const ActionRequest& request) {
  const bool structural = request.action == Action::Create || request.action == Action::Delete;
  std::shared_lock<std::shared_mutex> shared(tree_mutex_, std::defer_lock);
  std::unique_lock<std::shared_mutex> exclusive(tree_mutex_, std::defer_lock);
  if (structural) {
    exclusive.lock();
  } else {
    shared.lock();
  }

  NodePtr node;
  try {
    node = resolve(root_, request.resource);
  } catch (const std::exception& e) {
    return fail(errc::not_found, e.what());
  }

  auto decision = policy_.authorize(request.user, request.resource, request.action);
  if (decision == AuthzDecision::Allow && node->kind() == NodeKind::Variable &&
      !static_cast<const VariableNode&>(*node).writable()) {
    decision = AuthzDecision::ReadOnly;
  }
  if (!permits(decision, request.action)) {
    return fail(errc::forbidden, "user '" + request.user + "' may not " + std::string(to_string(request.action)) + " '" +
                                     request.resource.str() + "'");
  }

  if (!action_applies(node->kind(), request.action)) {
    return fail(errc::invalid_action, std::string(to_string(request.action)) + " is not valid on " +
                                          std::string(to_string(node->kind())) + " '" + request.resource.str() + "'");
  }

  std::string nonce;
  std::optional<ResourceId> topology_change;
  bool added = false;
  ActionResponse response = fail(errc::internal, "no response");
  try {
    ActionRequest typed = request;
    typed.payload = decode_payload(request, *node);
    typed.raw_payload.reset();
    if (auto it = typed.payload.find("nonce"); it != typed.payload.end() && it->second.is(ValueKind::text())) {
      nonce = it->second.get<std::string>();
    }
    if (nonce.empty()) nonce = nonces_->next();

    response = execute(typed, node, nonce);
    if (response.ok() && structural) {
      if (request.action == Action::Create) {
        const auto& created = std::get<ValueMap>(response.result().value);
        topology_change = request.resource.child(created.at("name").get<std::string>());
        added = true;
      } else {
        topology_change = request.resource;
      }
    }
  } catch (const ActionException& e) {
    response = fail(e.code(), e.what());
  } catch (const std::exception& e) {
    response = fail(errc::internal, e.what());
  } catch (...) {
    response = fail(errc::internal, "unknown failure");
  }

  if (topology_change) {
    exclusive.unlock();
    std::vector<TopologyListener> listeners;
    {
      std::shared_lock lock(listener_mutex_);
      listeners = topology_listeners_;
    }
    for (const auto& l : listeners) l(*topology_change, added);
  }
  return response;
}

ActionResponse Pipeline::execute(const ActionRequest& request, const NodePtr& node, std::string& nonce) {
  CallContext ctx{request.user, nonce, request.recipient, std::nullopt};
  switch (request.action) {
    case Action::Read: {
      auto& var = static_cast<VariableNode&>(*node);
      var.refresh();
      auto snap = var.snapshot();
      return ActionResult{std::move(snap.value), std::move(snap.meta)};
    }
    case Action::Update: {
      auto& var = static_cast<VariableNode&>(*node);
      const auto& value = request.payload.at("value");
      if (var.update_handler()) {
        auto snap = var.update_handler()(value, ctx);
        return ActionResult{std::move(snap.value), std::move(snap.meta)};
      }
      if (var.update_hook()) var.update_hook()(value);
      Metadata meta = stamp(nonce);
      if (var.has_covariance()) meta.covariance = var.snapshot().meta.covariance;
      try {
        var.store(value, std::move(meta));
      } catch (const std::invalid_argument& e) {
        throw ActionException(std::string(errc::bad_payload), e.what());
      }
      auto snap = var.snapshot();
      return ActionResult{std::move(snap.value), std::move(snap.meta)};
    }
    case Action::OnSubscribe:
    case Action::OnUnsubscribe: {
      if (!request.recipient) throw ActionException(std::string(errc::bad_payload), "no recipient to subscribe");
      const bool changed = request.action == Action::OnSubscribe
                               ? registry_.subscribe(request.resource, request.recipient)
                               : registry_.unsubscribe(request.resource, request.recipient);
      return ActionResult{Value(changed), stamp(nonce)};
    }
    case Action::Notify: {
      auto snap = static_cast<VariableNode&>(*node).snapshot();
      const auto count = registry_.notify(request.resource, snap.value, snap.meta);
      return ActionResult{Value(static_cast<std::int64_t>(count)), stamp(nonce)};
    }
    case Action::OnInvoke: {
      auto result = static_cast<const FunctionNode&>(*node).invoke(request.payload, ctx);
      Metadata meta = result.meta ? std::move(*result.meta) : stamp(nonce);
      return ActionResult{std::move(result.returns), std::move(meta)};
    }
    case Action::Create: {
      auto& object = static_cast<ObjectNode&>(*node);
      if (!object.create_handler()) {
        throw ActionException(std::string(errc::forbidden), "'" + request.resource.str() + "' does not accept new resources");
      }
      auto created = object.create_handler()(request.payload, ctx);
      if (!created.node) throw ActionException(std::string(errc::internal), "create handler produced no resource");
      try {
        object.add(created.name, created.node);
      } catch (const std::invalid_argument& e) {
        throw ActionException(std::string(errc::bad_payload), e.what());
      }
      if (created.node->kind() == NodeKind::Object) {
        attach(static_cast<const ObjectNode&>(*created.node), request.resource.child(created.name));
      }
      return ActionResult{ValueMap{{"name", Value(created.name)}}, ctx.reply_meta ? *ctx.reply_meta : stamp(nonce)};
    }
    case Action::Delete: {
      auto& object = static_cast<ObjectNode&>(*node);
      if (!object.delete_handler() || request.resource.is_root()) {
        throw ActionException(std::string(errc::forbidden), "'" + request.resource.str() + "' cannot be deleted");
      }
      object.delete_handler()(ctx);
      auto parent = std::static_pointer_cast<ObjectNode>(resolve(root_, request.resource.parent()));
      auto removed = parent->remove(request.resource.leaf());
      if (removed && removed->kind() == NodeKind::Object) detach(static_cast<const ObjectNode&>(*removed));
      registry_.remove_prefix(request.resource);
      return ActionResult{ValueMap{{"name", Value(request.resource.leaf())}},
                          ctx.reply_meta ? *ctx.reply_meta : stamp(nonce)};
    }
  }
  throw ActionException(std::string(errc::internal), "unhandled action");
}

std::variant<NodeDescription, ActionError> Pipeline::browse(const std::string& user, const ResourceId& id) const {
  std::shared_lock lock(tree_mutex_);
  NodePtr node;
  try {
    node = resolve(root_, id);
  } catch (const std::exception& e) {
    return ActionError{std::string(errc::not_found), e.what()};
  }
  if (policy_.authorize(user, id, Action::Read) == AuthzDecision::Deny) {
    return ActionError{std::string(errc::forbidden), "user '" + user + "' may not browse '" + id.str() + "'"};
  }
  return lsm::browse(*node);
}

std::optional<NodeKind> Pipeline::kind_of(const ResourceId& id) const {
  std::shared_lock lock(tree_mutex_);
  try {
    return resolve(root_, id)->kind();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<ValueKind> Pipeline::variable_kind(const ResourceId& id) const {
  std::shared_lock lock(tree_mutex_);
  try {
    auto node = resolve(root_, id);
    if (node->kind() != NodeKind::Variable) return std::nullopt;
    return static_cast<const VariableNode&>(*node).value_kind();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<Signature> Pipeline::function_signature(const ResourceId& id) const {
  std::shared_lock lock(tree_mutex_);
  try {
    auto node = resolve(root_, id);
    if (node->kind() != NodeKind::Function) return std::nullopt;
    return static_cast<const FunctionNode&>(*node).signature();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

nlohmann::json Pipeline::model_document() const {
  std::shared_lock lock(tree_mutex_);
  return describe_tree(*root_);
}

void Pipeline::for_each_variable(const std::function<void(const ResourceId&, const VariablePtr&)>& fn) const {
  std::shared_lock lock(tree_mutex_);
  lsm::for_each_variable(*root_, ResourceId::root(), fn);
}

void Pipeline::for_each_variable(const ResourceId& prefix,
                                 const std::function<void(const ResourceId&, const VariablePtr&)>& fn) const {
  std::shared_lock lock(tree_mutex_);
  NodePtr node;
  try {
    node = resolve(root_, prefix);
  } catch (const std::exception&) {
    return;
  }
  if (node->kind() == NodeKind::Variable) {
    fn(prefix, std::static_pointer_cast<VariableNode>(node));
  } else if (node->kind() == NodeKind::Object) {
    lsm::for_each_variable(static_cast<const ObjectNode&>(*node), prefix, fn);
  }
}

}  // namespace lsm
