// SPDX-License-Identifier: Apache-2.0
#include "lsm/action_pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

namespace lsm {

bool SubscriptionRegistry::subscribe(const ResourceId& id, std::shared_ptr<Recipient> recipient) {
  std::lock_guard lock(mutex_);
  auto& list = subscriptions_[id];
  if (std::find(list.begin(), list.end(), recipient) != list.end()) return false;
  list.push_back(std::move(recipient));
  return true;
}

bool SubscriptionRegistry::unsubscribe(const ResourceId& id, const std::shared_ptr<Recipient>& recipient) {
  std::lock_guard lock(mutex_);
  auto it = subscriptions_.find(id);
  if (it == subscriptions_.end()) return false;
  auto& list = it->second;
  auto pos = std::find(list.begin(), list.end(), recipient);
  if (pos == list.end()) return false;
  list.erase(pos);
  if (list.empty()) subscriptions_.erase(it);
  return true;
}

void SubscriptionRegistry::remove_recipient(const std::shared_ptr<Recipient>& recipient) {
  std::lock_guard lock(mutex_);
  for (auto it = subscriptions_.begin(); it != subscriptions_.end();) {
    auto& list = it->second;
    list.erase(std::remove(list.begin(), list.end(), recipient), list.end());
    it = list.empty() ? subscriptions_.erase(it) : std::next(it);
  }
}

void SubscriptionRegistry::remove_prefix(const ResourceId& prefix) {
  std::lock_guard lock(mutex_);
  for (auto it = subscriptions_.begin(); it != subscriptions_.end();) {
    it = it->first.starts_with(prefix) ? subscriptions_.erase(it) : std::next(it);
  }
}

std::size_t SubscriptionRegistry::notify(const ResourceId& id, const std::string& envelope) {
  std::vector<std::shared_ptr<Recipient>> targets;
  {
    std::lock_guard lock(mutex_);
    auto it = subscriptions_.find(id);
    if (it == subscriptions_.end()) return 0;
    targets = it->second;
  }
  for (const auto& r : targets) {
    bool ok = false;
    try {
      ok = r->deliver(id, envelope);
    } catch (const std::exception& e) {
      spdlog::warn("recipient for '{}' threw: {}", id.str(), e.what());
    }
    if (!ok) {
      spdlog::warn("dropping failed recipient of '{}'", id.str());
      remove_recipient(r);
    }
  }
  return targets.size();
}

std::size_t SubscriptionRegistry::notify(const ResourceId& id, const Value& value, const Metadata& meta) {
  if (subscriber_count(id) == 0) return 0;
  return notify(id, serialize_envelope(value, meta));
}

std::size_t SubscriptionRegistry::subscriber_count(const ResourceId& id) const {
  std::lock_guard lock(mutex_);
  auto it = subscriptions_.find(id);
  return it == subscriptions_.end() ? 0 : it->second.size();
}

bool SubscriptionRegistry::subscribed(const ResourceId& id, const std::shared_ptr<Recipient>& recipient) const {
  std::lock_guard lock(mutex_);
  auto it = subscriptions_.find(id);
  return it != subscriptions_.end() && std::find(it->second.begin(), it->second.end(), recipient) != it->second.end();
}

}  // namespace lsm
