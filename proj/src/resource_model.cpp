// SPDX-License-Identifier: Apache-2.0
#include "lsm/resource_model.hpp"

#include <algorithm>
#include <set>

namespace lsm {

using nlohmann::json;

// --- ResourceId -------------------------------------------------------------

bool ResourceId::valid_segment(std::string_view segment) {
  if (segment.empty()) return false;
  return std::all_of(segment.begin(), segment.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

ResourceId ResourceId::parse(std::string_view text) {
  if (text.empty()) throw MalformedId("empty resource id");
  ResourceId id;
  std::size_t start = 0;
  while (true) {
    const auto slash = text.find('/', start);
    const auto segment = text.substr(start, slash == std::string_view::npos ? text.npos : slash - start);
    if (!valid_segment(segment)) {
      throw MalformedId("malformed resource id '" + std::string(text) + "'");
    }
    id.segments_.emplace_back(segment);
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return id;
}

std::string ResourceId::str() const {
  std::string out;
  for (const auto& s : segments_) {
    if (!out.empty()) out += '/';
    out += s;
  }
  return out;
}

ResourceId ResourceId::child(std::string_view segment) const {
  if (!valid_segment(segment)) throw MalformedId("malformed segment '" + std::string(segment) + "'");
  ResourceId out = *this;
  out.segments_.emplace_back(segment);
  return out;
}

ResourceId ResourceId::parent() const {
  ResourceId out = *this;
  if (!out.segments_.empty()) out.segments_.pop_back();
  return out;
}

bool ResourceId::starts_with(const ResourceId& prefix) const {
  if (prefix.segments_.size() > segments_.size()) return false;
  return std::equal(prefix.segments_.begin(), prefix.segments_.end(), segments_.begin());
}

// --- Metadata ---------------------------------------------------------------

bool operator==(const Metadata& a, const Metadata& b) {
  if (a.timestamp_ns != b.timestamp_ns || a.nonce != b.nonce) return false;
  if (a.covariance.has_value() != b.covariance.has_value()) return false;
  return !a.covariance || a.covariance->cwiseEqual(*b.covariance).all();
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Object: return "object";
    case NodeKind::Function: return "function";
    case NodeKind::Variable: return "variable";
  }
  return "unknown";
}

// --- ObjectNode -------------------------------------------------------------

void ObjectNode::add(const std::string& name, NodePtr child) {
  if (!ResourceId::valid_segment(name)) throw std::invalid_argument("invalid child name '" + name + "'");
  if (!child) throw std::invalid_argument("null child '" + name + "'");
  if (child->parent_ != nullptr) throw std::invalid_argument("node '" + name + "' already has a parent");
  if (children_.count(name) != 0) throw std::invalid_argument("duplicate child name '" + name + "'");
  child->parent_ = this;
  children_.emplace(name, std::move(child));
}

NodePtr ObjectNode::remove(const std::string& name) {
  auto it = children_.find(name);
  if (it == children_.end()) return nullptr;
  auto node = std::move(it->second);
  children_.erase(it);
  node->parent_ = nullptr;
  return node;
}

NodePtr ObjectNode::find(const std::string& name) const {
  auto it = children_.find(name);
  return it == children_.end() ? nullptr : it->second;
}

// --- VariableNode -----------------------------------------------------------

VariableNode::VariableNode(ValueKind kind, Value initial, bool writable, bool has_covariance)
    : kind_(std::move(kind)), writable_(writable), has_covariance_(has_covariance), value_(std::move(initial)) {
  if (!value_.is(kind_)) throw std::invalid_argument("initial value does not match kind " + kind_.name());
  if (has_covariance_) meta_.covariance = Eigen::Matrix3d::Zero();
}

VariableNode::Snapshot VariableNode::snapshot() const {
  std::lock_guard lock(data_mutex_);
  return {value_, meta_};
}

void VariableNode::store(Value value, Metadata meta) {
  if (!value.is(kind_)) throw std::invalid_argument("value does not match kind " + kind_.name());
  if (has_covariance_ != meta.covariance.has_value()) {
    throw std::invalid_argument(has_covariance_ ? "measured variable requires a covariance"
                                                : "covariance on a non-measured variable");
  }
  if (meta.covariance && !is_valid_covariance(*meta.covariance)) {
    throw std::invalid_argument("covariance is not symmetric positive semi-definite");
  }
  if (const auto* q = value.get_if<Eigen::Vector4d>(); q && !is_unit_quaternion(*q)) {
    throw std::invalid_argument("quaternion is not unit norm");
  }

  std::lock_guard publish(publish_mutex_);
  {
    std::lock_guard lock(data_mutex_);
    meta.timestamp_ns = std::max(meta.timestamp_ns, meta_.timestamp_ns);
    value_ = std::move(value);
    meta_ = std::move(meta);
  }
  if (observer_) {
    auto snap = snapshot();
    observer_(snap.value, snap.meta);
  }
}

void VariableNode::set_observer(Observer observer) {
  std::lock_guard publish(publish_mutex_);
  observer_ = std::move(observer);
}

// --- resolve ----------------------------------------------------------------

NodePtr resolve(const ObjectPtr& root, const ResourceId& id) {
  NodePtr current = root;
  std::string walked;
  for (const auto& segment : id.segments()) {
    if (current->kind() != NodeKind::Object) {
      throw NotAnObject("'" + walked + "' is a " + std::string(to_string(current->kind())) + " and has no children");
    }
    auto next = static_cast<const ObjectNode&>(*current).find(segment);
    if (!walked.empty()) walked += '/';
    walked += segment;
    if (!next) throw NotFound("no resource '" + walked + "'");
    current = std::move(next);
  }
  return current;
}

// --- classes ----------------------------------------------------------------

void ClassDefinition::validate() const {
  std::set<std::string> names;
  auto check = [&](const std::string& n) {
    if (!names.insert(n).second) throw std::invalid_argument("class " + name + ": duplicate member '" + n + "'");
  };
  for (const auto& f : functions) check(f.name);
  for (const auto& v : variables) check(v.name);
  for (const auto& o : objects) check(o.name);
}

bool conforms(const ObjectNode& node, const ClassDefinition& definition) {
  for (const auto& req : definition.functions) {
    auto child = node.find(req.name);
    if (!child || child->kind() != NodeKind::Function) return false;
    if (static_cast<const FunctionNode&>(*child).signature() != req.signature) return false;
  }
  for (const auto& req : definition.variables) {
    auto child = node.find(req.name);
    if (!child || child->kind() != NodeKind::Variable) return false;
    if (static_cast<const VariableNode&>(*child).value_kind() != req.kind) return false;
  }
  for (const auto& req : definition.objects) {
    auto child = node.find(req.name);
    if (!child || child->kind() != NodeKind::Object) return false;
    if (req.definition && !conforms(static_cast<const ObjectNode&>(*child), *req.definition)) return false;
  }
  return true;
}

// --- browsing ---------------------------------------------------------------

NodeDescription browse(const Node& node) {
  NodeDescription d;
  d.kind = node.kind();
  switch (node.kind()) {
    case NodeKind::Object: {
      const auto& object = static_cast<const ObjectNode&>(node);
      if (object.create_handler()) d.create_args = object.create_args();
      d.deletable = static_cast<bool>(object.delete_handler());
      for (const auto& [name, child] : object.children()) {
        NodeDescription::Child entry{name, child->kind(), nullptr};
        if (child->kind() != NodeKind::Object) entry.detail = std::make_shared<NodeDescription>(browse(*child));
        d.children.push_back(std::move(entry));
      }
      break;
    }
    case NodeKind::Function:
      d.signature = static_cast<const FunctionNode&>(node).signature();
      break;
    case NodeKind::Variable: {
      const auto& var = static_cast<const VariableNode&>(node);
      d.value_kind = var.value_kind();
      d.writable = var.writable();
      d.measured = var.has_covariance();
      break;
    }
  }
  return d;
}

namespace {

json kind_json(const ValueKind& kind, json out) {
  out["kind"] = kind.name();
  if (kind.type == ValueType::Enum) out["symbols"] = kind.symbols;
  return out;
}

void leaf_fields(const NodeDescription& d, json& out) {
  if (d.kind == NodeKind::Function) {
    out["args"] = to_json(d.signature.args);
    out["returns"] = to_json(d.signature.returns);
  } else if (d.kind == NodeKind::Variable) {
    out["value_kind"] = d.value_kind.name();
    if (d.value_kind.type == ValueType::Enum) out["symbols"] = d.value_kind.symbols;
    out["writable"] = d.writable;
    out["measured"] = d.measured;
  }
}

void object_fields(const NodeDescription& d, json& out) {
  if (d.create_args) out["create_args"] = to_json(*d.create_args);
  if (d.deletable) out["deletable"] = true;
}

}  // namespace

json to_json(const ParamList& params) {
  json arr = json::array();
  for (const auto& p : params) arr.push_back(kind_json(p.kind, json{{"name", p.name}}));
  return arr;
}

json to_json(const Signature& signature) {
  return json{{"args", to_json(signature.args)}, {"returns", to_json(signature.returns)}};
}

ParamList params_from_json(const json& j) {
  ParamList out;
  for (const auto& p : j) {
    std::vector<std::string> symbols;
    if (p.contains("symbols")) symbols = p.at("symbols").get<std::vector<std::string>>();
    out.push_back({p.at("name").get<std::string>(),
                   ValueKind::from_name(p.at("kind").get<std::string>(), std::move(symbols))});
  }
  return out;
}

json to_json(const NodeDescription& d) {
  json out{{"kind", to_string(d.kind)}};
  if (d.kind == NodeKind::Object) {
    json children = json::array();
    for (const auto& c : d.children) {
      json entry{{"name", c.name}, {"kind", to_string(c.kind)}};
      if (c.detail) leaf_fields(*c.detail, entry);
      children.push_back(std::move(entry));
    }
    out["children"] = std::move(children);
    object_fields(d, out);
  } else {
    leaf_fields(d, out);
  }
  return out;
}

json describe_tree(const Node& node) {
  if (node.kind() != NodeKind::Object) return to_json(browse(node));
  json children = json::array();
  for (const auto& [name, child] : static_cast<const ObjectNode&>(node).children()) {
    json entry = describe_tree(*child);
    entry["name"] = name;
    children.push_back(std::move(entry));
  }
  json out{{"kind", "object"}, {"children", std::move(children)}};
  object_fields(browse(node), out);
  return out;
}

void for_each_variable(const ObjectNode& node, const ResourceId& base,
                       const std::function<void(const ResourceId&, const VariablePtr&)>& fn) {
  for (const auto& [name, child] : node.children()) {
    const auto id = base.child(name);
    if (child->kind() == NodeKind::Variable) {
      fn(id, std::static_pointer_cast<VariableNode>(child));
    } else if (child->kind() == NodeKind::Object) {
      for_each_variable(static_cast<const ObjectNode&>(*child), id, fn);
    }
  }
}

}  // namespace lsm
