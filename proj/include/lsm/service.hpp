// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/action_pipeline.hpp"
#include "lsm/config.hpp"
#include "lsm/http_adapter.hpp"
#include "lsm/lsm_model.hpp"
#include "lsm/mqtt/broker.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

namespace lsm {

std::shared_ptr<InstrumentBackend> make_backend(const ServiceConfig& config);

/// A simulated device with its pipeline and protocol adapters.
class Service {
 public:
  /// `notification_sink` receives "<resource-id> <envelope>" for every
  /// variable change, in order.
  explicit Service(ServiceConfig config, std::function<void(const std::string&)> notification_sink = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Starts the adapters and, on the system clock, the simulation ticker.
  void start();
  void stop();
  /// Blocks until the device's `shutdown` function runs or stop() is called.
  void wait();
  bool wait_for(std::chrono::milliseconds timeout);

  std::optional<std::uint16_t> http_port() const { return http_port_; }
  std::optional<std::uint16_t> mqtt_port() const { return mqtt_port_; }

  const ServiceConfig& config() const { return config_; }
  Device& device() { return *device_; }
  Pipeline& pipeline() { return *pipeline_; }
  InstrumentBackend& backend() { return *backend_; }
  mqtt::Broker* broker() { return broker_.get(); }
  const HttpAdapter* http_adapter() const { return http_adapter_.get(); }

 private:
  void request_shutdown();
  void tick_loop();

  ServiceConfig config_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<ManualClock> sim_clock_;
  std::shared_ptr<NonceSource> nonces_;
  std::shared_ptr<InstrumentBackend> backend_;
  std::unique_ptr<Device> device_;
  std::unique_ptr<Pipeline> pipeline_;
  std::unique_ptr<HttpAdapter> http_adapter_;
  std::unique_ptr<HttpServer> http_server_;
  std::unique_ptr<mqtt::Broker> broker_;
  std::optional<std::uint16_t> http_port_, mqtt_port_;

  std::thread ticker_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool shutdown_ = false;
  bool running_ = false;
};

}  // namespace lsm
