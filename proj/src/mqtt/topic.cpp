// SPDX-License-Identifier: Apache-2.0
#include "lsm/mqtt/topic.hpp"

#include "lsm/mqtt/codec.hpp"

namespace lsm::mqtt {

std::vector<std::string_view> split_levels(std::string_view topic) {
  std::vector<std::string_view> levels;
  std::size_t start = 0;
  while (true) {
    const auto slash = topic.find('/', start);
    if (slash == std::string_view::npos) {
      levels.push_back(topic.substr(start));
      return levels;
    }
    levels.push_back(topic.substr(start, slash - start));
    start = slash + 1;
  }
}

bool valid_topic_name(std::string_view topic) {
  if (topic.empty() || topic.size() > 0xffff || !valid_mqtt_string(topic)) return false;
  return topic.find_first_of("+#") == std::string_view::npos;
}

bool valid_topic_filter(std::string_view filter) {
  if (filter.empty() || filter.size() > 0xffff || !valid_mqtt_string(filter)) return false;
  const auto levels = split_levels(filter);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto level = levels[i];
    if (level == "#") {
      if (i + 1 != levels.size()) return false;
    } else if (level != "+" && level.find_first_of("+#") != std::string_view::npos) {
      return false;
    }
  }
  return true;
}

bool topic_matches(std::string_view filter, std::string_view topic) {
  if (!topic.empty() && topic.front() == '$' && !filter.empty() && (filter.front() == '+' || filter.front() == '#')) {
    return false;
  }
  const auto f = split_levels(filter);
  const auto t = split_levels(topic);
  std::size_t i = 0;
  for (; i < f.size(); ++i) {
    if (f[i] == "#") return true;
    if (i >= t.size()) return false;
    if (f[i] != "+" && f[i] != t[i]) return false;
  }
  return i == t.size();
}

bool SubscriptionTrie::insert(std::string_view filter, const std::string& key) {
  Node* node = &root_;
  for (auto level : split_levels(filter)) {
    auto it = node->children.find(level);
    if (it == node->children.end()) it = node->children.emplace(std::string(level), std::make_unique<Node>()).first;
    node = it->second.get();
  }
  return node->keys.insert(key).second;
}

bool SubscriptionTrie::erase(std::string_view filter, const std::string& key) {
  std::vector<std::pair<Node*, std::string>> path;
  Node* node = &root_;
  for (auto level : split_levels(filter)) {
    auto it = node->children.find(level);
    if (it == node->children.end()) return false;
    path.emplace_back(node, std::string(level));
    node = it->second.get();
  }
  if (node->keys.erase(key) == 0) return false;
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    auto child = it->first->children.find(it->second);
    if (!child->second->keys.empty() || !child->second->children.empty()) break;
    it->first->children.erase(child);
  }
  return true;
}

bool SubscriptionTrie::prune(Node& node, const std::string& key) {
  node.keys.erase(key);
  for (auto it = node.children.begin(); it != node.children.end();) {
    if (prune(*it->second, key)) {
      it = node.children.erase(it);
    } else {
      ++it;
    }
  }
  return node.keys.empty() && node.children.empty();
}

void SubscriptionTrie::erase_key(const std::string& key) { prune(root_, key); }

void SubscriptionTrie::collect(const Node& node, const std::vector<std::string_view>& levels, std::size_t depth,
                               std::set<std::string>& out) {
  // `#` also matches the parent level ("a/#" matches "a").
  if (auto hash = node.children.find("#"); hash != node.children.end()) {
    if (!(depth == 0 && !levels.empty() && levels[0].starts_with('$'))) {
      out.insert(hash->second->keys.begin(), hash->second->keys.end());
    }
  }
  if (depth == levels.size()) {
    out.insert(node.keys.begin(), node.keys.end());
    return;
  }
  if (auto exact = node.children.find(levels[depth]); exact != node.children.end()) {
    collect(*exact->second, levels, depth + 1, out);
  }
  if (auto plus = node.children.find("+"); plus != node.children.end()) {
    if (!(depth == 0 && levels[0].starts_with('$'))) collect(*plus->second, levels, depth + 1, out);
  }
}

std::set<std::string> SubscriptionTrie::match(std::string_view topic) const {
  std::set<std::string> out;
  collect(root_, split_levels(topic), 0, out);
  return out;
}

bool SubscriptionTrie::empty() const { return root_.keys.empty() && root_.children.empty(); }

}  // namespace lsm::mqtt
