// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <random>
#include <string>

namespace lsm {

class Clock {
 public:
  virtual ~Clock() = default;
  /// Nanoseconds since the Unix epoch, UTC. Never decreases.
  virtual std::int64_t now_ns() = 0;
};

/// Wall clock, clamped so successive readings never go backwards.
class SystemClock final : public Clock {
 public:
  std::int64_t now_ns() override {
    const auto wall = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
    auto last = last_.load();
    while (true) {
      const auto next = wall > last ? wall : last;
      if (last_.compare_exchange_weak(last, next)) return next;
    }
  }

 private:
  std::atomic<std::int64_t> last_{0};
};

/// Virtual time that only moves when advanced; used by simulations and tests.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(std::int64_t start_ns = 0) : now_(start_ns) {}
  std::int64_t now_ns() override { return now_.load(); }
  void advance(std::int64_t dt_ns) { now_.fetch_add(dt_ns); }
  void set(std::int64_t t_ns) { now_.store(t_ns); }

 private:
  std::atomic<std::int64_t> now_;
};

/// 128-bit hex nonces from a seeded generator; reproducible for a fixed seed.
class NonceSource {
 public:
  explicit NonceSource(std::uint64_t seed = std::random_device{}()) : rng_(seed) {}

  std::string next() {
    static constexpr char digits[] = "0123456789abcdef";
    std::lock_guard lock(mutex_);
    std::string out(32, '0');
    for (int half = 0; half < 2; ++half) {
      auto bits = rng_();
      for (int i = 0; i < 16; ++i, bits >>= 4) out[half * 16 + i] = digits[bits & 0xf];
    }
    return out;
  }

 private:
  std::mutex mutex_;
  std::mt19937_64 rng_;
};

}  // namespace lsm
