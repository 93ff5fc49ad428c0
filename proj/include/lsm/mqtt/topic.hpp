// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace lsm::mqtt {

/// Non-empty, no wildcard characters.
bool valid_topic_name(std::string_view topic);
/// `#` only as the whole last level, `+` only as a whole level.
bool valid_topic_filter(std::string_view filter);

std::vector<std::string_view> split_levels(std::string_view topic);

/// MQTT 3.1.1 matching, including the rule that wildcards in the first level
/// never match topics starting with `$`.
bool topic_matches(std::string_view filter, std::string_view topic);

/// Subscription trie: filter levels along the edges, subscriber keys at the
/// nodes. Not synchronized.
class SubscriptionTrie {
 public:
  /// Returns false if the key already held this filter.
  bool insert(std::string_view filter, const std::string& key);
  bool erase(std::string_view filter, const std::string& key);
  void erase_key(const std::string& key);
  std::set<std::string> match(std::string_view topic) const;
  bool empty() const;

 private:
  struct Node {
    std::map<std::string, std::unique_ptr<Node>, std::less<>> children;
    std::set<std::string> keys;
  };

  static void collect(const Node& node, const std::vector<std::string_view>& levels, std::size_t depth,
                      std::set<std::string>& out);
  static bool prune(Node& node, const std::string& key);

  Node root_;
};

}  // namespace lsm::mqtt
