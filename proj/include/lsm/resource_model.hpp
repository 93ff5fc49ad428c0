// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/value.hpp"

#include <Eigen/Core>

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lsm {

class MalformedId : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Path identifier of a node in the resource tree, e.g. `lsm/entities/smr1/position`.
///
/// Segments match `[a-z0-9_-]+` so that the canonical text form is valid both
/// as a URL path and as an MQTT topic. The default-constructed id has no
/// segments and denotes the tree root; it has no text form that `parse` accepts.
class ResourceId {
 public:
  ResourceId() = default;

  static ResourceId parse(std::string_view text);
  static bool valid_segment(std::string_view segment);
  static ResourceId root() { return {}; }

  const std::vector<std::string>& segments() const { return segments_; }
  bool is_root() const { return segments_.empty(); }
  std::size_t size() const { return segments_.size(); }
  const std::string& leaf() const { return segments_.back(); }

  std::string str() const;
  ResourceId child(std::string_view segment) const;
  ResourceId parent() const;
  bool starts_with(const ResourceId& prefix) const;

  friend auto operator<=>(const ResourceId&, const ResourceId&) = default;
  friend bool operator==(const ResourceId&, const ResourceId&) = default;

 private:
  std::vector<std::string> segments_;
};

/// Metadata attached to every value that leaves the pipeline.
struct Metadata {
  std::int64_t timestamp_ns = 0;
  std::string nonce;
  /// Position covariance in m^2; present only on measured positions.
  std::optional<Eigen::Matrix3d> covariance;

  friend bool operator==(const Metadata& a, const Metadata& b);
};

enum class NodeKind { Object, Function, Variable };
std::string_view to_string(NodeKind kind);

struct Signature {
  ParamList args;
  ParamList returns;
  friend bool operator==(const Signature&, const Signature&) = default;
};

class Recipient;
class ObjectNode;
class Node;
using NodePtr = std::shared_ptr<Node>;

/// Per-call information handed to function, create and delete handlers.
struct CallContext {
  std::string user;
  std::string nonce;
  std::shared_ptr<Recipient> recipient;
  /// Create and delete handlers that already know the outgoing metadata
  /// (proxies) set this; otherwise the pipeline stamps it.
  std::optional<Metadata> reply_meta;
};

/// Error raised from inside an action handler; becomes an error envelope.
class ActionException : public std::runtime_error {
 public:
  ActionException(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

namespace errc {
inline constexpr std::string_view not_found = "not_found";
inline constexpr std::string_view forbidden = "forbidden";
inline constexpr std::string_view invalid_action = "invalid_action";
inline constexpr std::string_view bad_payload = "bad_payload";
inline constexpr std::string_view internal = "internal";
inline constexpr std::string_view unauthorized = "unauthorized";
inline constexpr std::string_view unavailable = "unavailable";
}  // namespace errc

class Node {
 public:
  virtual ~Node() = default;
  virtual NodeKind kind() const = 0;

  const ObjectNode* parent() const { return parent_; }

 private:
  friend class ObjectNode;
  const ObjectNode* parent_ = nullptr;
};

class ObjectNode : public Node {
 public:
  struct Created {
    std::string name;
    NodePtr node;
  };
  using CreateHandler = std::function<Created(const ValueMap& args, CallContext& ctx)>;
  using DeleteHandler = std::function<void(CallContext& ctx)>;

  NodeKind kind() const override { return NodeKind::Object; }

  /// Throws std::invalid_argument on an invalid or duplicate name, or when
  /// `child` already has a parent.
  void add(const std::string& name, NodePtr child);
  NodePtr remove(const std::string& name);
  NodePtr find(const std::string& name) const;

  const std::map<std::string, NodePtr>& children() const { return children_; }

  /// CREATE support: payload signature and handler. Objects without a
  /// handler refuse CREATE.
  void set_create_handler(ParamList args, CreateHandler handler) {
    create_args_ = std::move(args);
    on_create_ = std::move(handler);
  }
  const ParamList& create_args() const { return create_args_; }
  const CreateHandler& create_handler() const { return on_create_; }

  /// DELETE of this object is allowed only when a handler is installed.
  void set_delete_handler(DeleteHandler handler) { on_delete_ = std::move(handler); }
  const DeleteHandler& delete_handler() const { return on_delete_; }

 private:
  std::map<std::string, NodePtr> children_;
  ParamList create_args_;
  CreateHandler on_create_;
  DeleteHandler on_delete_;
};

struct FunctionResult {
  ValueMap returns;
  /// Handlers that already know the outgoing metadata (proxies) set this;
  /// otherwise the pipeline stamps it.
  std::optional<Metadata> meta;
};

class FunctionNode : public Node {
 public:
  using Handler = std::function<FunctionResult(const ValueMap& args, CallContext& ctx)>;

  FunctionNode(Signature signature, Handler handler)
      : signature_(std::move(signature)), handler_(std::move(handler)) {}

  NodeKind kind() const override { return NodeKind::Function; }
  const Signature& signature() const { return signature_; }
  FunctionResult invoke(const ValueMap& args, CallContext& ctx) const { return handler_(args, ctx); }

 private:
  Signature signature_;
  Handler handler_;
};

/// A typed variable holding the current value and its metadata.
///
/// `store` updates value and metadata together and then reports the change
/// to the observer while still holding the publish lock, so observers see
/// changes of one variable in store order.
class VariableNode : public Node {
 public:
  using Observer = std::function<void(const Value&, const Metadata&)>;

  struct Snapshot {
    Value value;
    Metadata meta;
  };

  VariableNode(ValueKind kind, Value initial, bool writable = false, bool has_covariance = false);

  NodeKind kind() const override { return NodeKind::Variable; }
  const ValueKind& value_kind() const { return kind_; }
  bool writable() const { return writable_; }
  bool has_covariance() const { return has_covariance_; }

  Snapshot snapshot() const;

  /// Throws std::invalid_argument on a kind mismatch, a covariance on a
  /// non-measured variable (or a missing one on a measured one) and on
  /// invalid quaternions or covariances. Timestamps are clamped so they
  /// never go backwards.
  void store(Value value, Metadata meta);

  void set_observer(Observer observer);

  /// Called before a READ, e.g. to refresh a clock or poll an upstream.
  void set_refresher(std::function<void()> refresh) { refresher_ = std::move(refresh); }
  void refresh() const {
    if (refresher_) refresher_();
  }

  /// Called on UPDATE before the value is stored; may throw ActionException.
  void set_update_hook(std::function<void(const Value&)> hook) { update_hook_ = std::move(hook); }
  const std::function<void(const Value&)>& update_hook() const { return update_hook_; }

  /// Replaces the local store on UPDATE; the returned snapshot is the result.
  /// Used by proxies whose value lives elsewhere.
  using UpdateHandler = std::function<Snapshot(const Value&, CallContext&)>;
  void set_update_handler(UpdateHandler handler) { update_handler_ = std::move(handler); }
  const UpdateHandler& update_handler() const { return update_handler_; }

 private:
  ValueKind kind_;
  bool writable_;
  bool has_covariance_;

  mutable std::mutex data_mutex_;
  Value value_;
  Metadata meta_;

  std::mutex publish_mutex_;
  Observer observer_;
  std::function<void()> refresher_;
  std::function<void(const Value&)> update_hook_;
  UpdateHandler update_handler_;
};

using ObjectPtr = std::shared_ptr<ObjectNode>;
using FunctionPtr = std::shared_ptr<FunctionNode>;
using VariablePtr = std::shared_ptr<VariableNode>;

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotAnObject : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Walks `id` from `root`. Throws NotFound or NotAnObject.
NodePtr resolve(const ObjectPtr& root, const ResourceId& id);

/// Requirement set of an object class. An object instantiates the class when
/// it has every listed member with a matching signature or value kind; extra
/// members are allowed.
struct ClassDefinition {
  struct FunctionRequirement {
    std::string name;
    Signature signature;
  };
  struct VariableRequirement {
    std::string name;
    ValueKind kind;
  };
  struct ObjectRequirement {
    std::string name;
    std::shared_ptr<const ClassDefinition> definition;
  };

  std::string name;
  std::vector<FunctionRequirement> functions;
  std::vector<VariableRequirement> variables;
  std::vector<ObjectRequirement> objects;

  /// Throws std::invalid_argument if member names repeat.
  void validate() const;
};

bool conforms(const ObjectNode& node, const ClassDefinition& definition);

/// Structural description of a node; never contains current values.
struct NodeDescription {
  struct Child {
    std::string name;
    NodeKind kind;
    std::shared_ptr<const NodeDescription> detail;  // set for functions and variables
  };

  NodeKind kind = NodeKind::Object;
  std::vector<Child> children;
  /// Objects: arguments of CREATE when the object accepts it, and whether
  /// DELETE is possible.
  std::optional<ParamList> create_args;
  bool deletable = false;
  Signature signature;
  ValueKind value_kind;
  bool writable = false;
  bool measured = false;
};

NodeDescription browse(const Node& node);
nlohmann::json to_json(const NodeDescription& description);
nlohmann::json to_json(const Signature& signature);
nlohmann::json to_json(const ParamList& params);
ParamList params_from_json(const nlohmann::json& j);

/// Full recursive model document of a subtree.
nlohmann::json describe_tree(const Node& node);

/// Calls `fn(id, variable)` for every variable below `node` (depth-first,
/// children in name order).
void for_each_variable(const ObjectNode& node, const ResourceId& base,
                       const std::function<void(const ResourceId&, const VariablePtr&)>& fn);

}  // namespace lsm
