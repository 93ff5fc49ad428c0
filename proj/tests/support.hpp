// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the test binaries.
#pragma once

#include "lsm/action_pipeline.hpp"
#include "lsm/config.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace lsm::test {

inline std::string fixture_path(const std::string& name) { return std::string(LSM_FIXTURE_DIR) + "/" + name; }

inline ServiceConfig fixture_config(const std::string& name) { return load_config(fixture_path(name)); }

/// Records every delivery; thread safe.
class CollectingRecipient : public Recipient {
 public:
  bool deliver(const ResourceId& id, const std::string& envelope) override {
    {
      std::lock_guard lock(mutex_);
      items_.emplace_back(id, envelope);
    }
    cv_.notify_all();
    return accept_;
  }

  std::vector<std::pair<ResourceId, std::string>> items() const {
    std::lock_guard lock(mutex_);
    return items_;
  }

  std::size_t count(const ResourceId& id) const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [i, e] : items_) n += i == id;
    return n;
  }

  bool wait_for_count(std::size_t n, std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return items_.size() >= n; });
  }

  void clear() {
    std::lock_guard lock(mutex_);
    items_.clear();
  }

  void set_accept(bool accept) { accept_ = accept; }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::pair<ResourceId, std::string>> items_;
  bool accept_ = true;
};

inline ActionRequest request(const std::string& user, const std::string& id, Action action,
                             std::optional<nlohmann::json> body = std::nullopt,
                             std::shared_ptr<Recipient> recipient = nullptr) {
  ActionRequest r;
  r.user = user;
  r.resource = id.empty() ? ResourceId::root() : ResourceId::parse(id);
  r.action = action;
  if (body) r.raw_payload = body->dump();
  r.recipient = std::move(recipient);
  return r;
}

inline std::string error_code(const ActionResponse& response) {
  return response.ok() ? std::string("ok") : response.error().code;
}

/// Polls `predicate` until it holds or the timeout passes.
template <class Predicate>
bool eventually(Predicate predicate, std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    if (predicate()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return predicate();
}

}  // namespace lsm::test
