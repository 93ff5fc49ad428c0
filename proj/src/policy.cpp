// SPDX-License-Identifier: Apache-2.0
#include "lsm/action_pipeline.hpp"

#include <algorithm>
#include <sstream>

namespace lsm {

std::string_view to_string(Action action) {
  switch (action) {
    case Action::Read: return "READ";
    case Action::Update: return "UPDATE";
    case Action::Create: return "CREATE";
    case Action::Delete: return "DELETE";
    case Action::OnSubscribe: return "ON_SUBSCRIBE";
    case Action::OnUnsubscribe: return "ON_UNSUBSCRIBE";
    case Action::Notify: return "NOTIFY";
    case Action::OnInvoke: return "ON_INVOKE";
  }
  return "UNKNOWN";
}

std::optional<Action> action_from_string(std::string_view text) {
  for (auto a : all_actions) {
    if (to_string(a) == text) return a;
  }
  return std::nullopt;
}

bool action_applies(NodeKind kind, Action action) {
  switch (kind) {
    case NodeKind::Variable:
      return action == Action::Read || action == Action::Update || action == Action::OnSubscribe ||
             action == Action::OnUnsubscribe || action == Action::Notify;
    case NodeKind::Object:
      return action == Action::Create || action == Action::Delete;
    case NodeKind::Function:
      return action == Action::OnInvoke;
  }
  return false;
}

std::string_view to_string(AuthzDecision decision) {
  switch (decision) {
    case AuthzDecision::Allow: return "allow";
    case AuthzDecision::ReadOnly: return "readonly";
    case AuthzDecision::Deny: return "deny";
  }
  return "deny";
}

bool permits(AuthzDecision decision, Action action) {
  switch (decision) {
    case AuthzDecision::Allow: return true;
    case AuthzDecision::ReadOnly:
      return action == Action::Read || action == Action::OnSubscribe || action == Action::OnUnsubscribe;
    case AuthzDecision::Deny: return false;
  }
  return false;
}

std::string Policy::Rule::str() const {
  std::string pattern = prefix.str();
  if (recursive) pattern = pattern.empty() ? "**" : pattern + "/**";
  return user + ":" + std::string(to_string(decision)) + ":" + pattern;
}

Policy::Rule Policy::parse_rule(std::string_view line) {
  const auto first = line.find(':');
  const auto second = first == line.npos ? line.npos : line.find(':', first + 1);
  if (second == line.npos) throw std::invalid_argument("policy rule '" + std::string(line) + "': expected user:decision:pattern");

  Rule rule;
  rule.user = std::string(line.substr(0, first));
  if (rule.user.empty()) throw std::invalid_argument("policy rule '" + std::string(line) + "': empty user");

  const auto decision = line.substr(first + 1, second - first - 1);
  if (decision == "allow") {
    rule.decision = AuthzDecision::Allow;
  } else if (decision == "readonly") {
    rule.decision = AuthzDecision::ReadOnly;
  } else if (decision == "deny") {
    rule.decision = AuthzDecision::Deny;
  } else {
    throw std::invalid_argument("policy rule '" + std::string(line) + "': unknown decision '" + std::string(decision) + "'");
  }

  auto pattern = line.substr(second + 1);
  if (pattern == "**") {
    rule.recursive = true;
  } else if (pattern.size() > 3 && pattern.substr(pattern.size() - 3) == "/**") {
    rule.prefix = ResourceId::parse(pattern.substr(0, pattern.size() - 3));
    rule.recursive = true;
  } else {
    rule.prefix = ResourceId::parse(pattern);
    rule.recursive = false;
  }
  return rule;
}

Policy Policy::parse(std::string_view text) {
  Policy policy;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos || line[begin] == '#') continue;
    const auto end = line.find_last_not_of(" \t\r");
    policy.add(parse_rule(std::string_view(line).substr(begin, end - begin + 1)));
  }
  return policy;
}

Policy Policy::from_rules(const std::vector<std::string>& lines) {
  Policy policy;
  for (const auto& l : lines) policy.add(parse_rule(l));
  return policy;
}

Policy Policy::allow_all(const std::string& user) {
  Policy policy;
  policy.add(Rule{user, AuthzDecision::Allow, ResourceId::root(), true});
  return policy;
}

void Policy::add(Rule rule) {
  for (const auto& r : rules_) {
    if (r.user == rule.user && r.prefix == rule.prefix && r.recursive == rule.recursive) {
      throw std::invalid_argument("duplicate policy rule for '" + rule.str() + "'");
    }
  }
  rules_.push_back(std::move(rule));
}

AuthzDecision Policy::authorize(std::string_view user, const ResourceId& id, Action /*action*/) const {
  const Rule* best = nullptr;
  auto rank = [](const Rule& r) { return r.prefix.size() * 2 + (r.recursive ? 0 : 1); };
  for (const auto& r : rules_) {
    if (r.user != user) continue;
    const bool match = r.recursive ? id.starts_with(r.prefix) : id == r.prefix;
    if (match && (!best || rank(r) > rank(*best))) best = &r;
  }
  return best ? best->decision : AuthzDecision::Deny;
}

bool Policy::knows(std::string_view user) const {
  return std::any_of(rules_.begin(), rules_.end(), [&](const Rule& r) { return r.user == user; });
}

std::vector<std::string> Policy::lines() const {
  std::vector<std::string> out;
  for (const auto& r : rules_) out.push_back(r.str());
  return out;
}

}  // namespace lsm
