// SPDX-License-Identifier: Apache-2.0
#include "lsm/service.hpp"

#include "lsm/sim/laser_tracker.hpp"
#include "lsm/sim/multilateration_sim.hpp"

#include <spdlog/spdlog.h>

namespace lsm {

std::shared_ptr<InstrumentBackend> make_backend(const ServiceConfig& config) {
  const auto& inst = config.instrument;
  // The noise stream is seeded apart from the nonce stream so neither shifts the other.
  const std::uint64_t noise_seed = config.seed ^ 0x9e3779b97f4a7c15ULL;
  if (inst.kind == InstrumentKind::LaserTracker) {
    sim::LaserTrackerOptions options;
    options.noise = {inst.sigma_d, inst.sigma_az, inst.sigma_el};
    options.search_radius = inst.search_radius;
    options.seed = noise_seed;
    return std::make_shared<sim::LaserTrackerSim>(options);
  }
  sim::MultilaterationOptions options;
  options.sigma_range = inst.sigma_r;
  options.seed = noise_seed;
  return std::make_shared<sim::MultilaterationSim>(options);
}

Service::Service(ServiceConfig config, std::function<void(const std::string&)> notification_sink)
    : config_(std::move(config)) {
  if (config_.virtual_clock) {
    sim_clock_ = std::make_shared<ManualClock>(0);
    clock_ = sim_clock_;
  } else {
    clock_ = std::make_shared<SystemClock>();
  }
  nonces_ = std::make_shared<NonceSource>(config_.seed);
  backend_ = make_backend(config_);

  DeviceOptions options;
  options.clock = clock_;
  options.nonces = nonces_;
  options.sim_clock = sim_clock_;
  options.on_shutdown = [this] { request_shutdown(); };
  device_ = std::make_unique<Device>(device_config(config_), backend_, options);

  pipeline_ = std::make_unique<Pipeline>(device_->root(), Policy::from_rules(config_.policy), clock_, nonces_);
  device_->bind_registry(&pipeline_->registry());
  if (notification_sink) {
    pipeline_->add_change_listener([sink = std::move(notification_sink)](const ResourceId& id, const std::string& envelope) {
      sink(id.str() + " " + envelope);
    });
  }

  if (config_.http) {
    HttpAdapterOptions http;
    http.tokens = config_.http->tokens;
    http.anonymous_user = config_.http->anonymous_user;
    http_adapter_ = std::make_unique<HttpAdapter>(*pipeline_, std::move(http));
  }
  if (config_.mqtt) {
    mqtt::BrokerOptions mqtt;
    mqtt.host = config_.mqtt->host;
    mqtt.port = config_.mqtt->port;
    mqtt.credentials = config_.mqtt->credentials;
    mqtt.anonymous_user = config_.mqtt->anonymous_user;
    broker_ = std::make_unique<mqtt::Broker>(*pipeline_, config_.device_id, std::move(mqtt));
  }
}

Service::~Service() { stop(); }

void Service::start() {
  if (http_adapter_) {
    http_server_ = std::make_unique<HttpServer>(*http_adapter_, config_.http->host, config_.http->port);
    http_port_ = http_server_->start();
  }
  if (broker_) mqtt_port_ = broker_->start();
  {
    std::lock_guard lock(mutex_);
    running_ = true;
  }
  if (!sim_clock_) ticker_ = std::thread([this] { tick_loop(); });
}

void Service::tick_loop() {
  const auto period = std::chrono::milliseconds(config_.tick_ms);
  auto last = std::chrono::steady_clock::now();
  std::unique_lock lock(mutex_);
  while (running_) {
    cv_.wait_for(lock, period, [&] { return !running_; });
    if (!running_) break;
    const auto now = std::chrono::steady_clock::now();
    const auto dt = std::chrono::duration_cast<std::chrono::nanoseconds>(now - last).count();
    last = now;
    lock.unlock();
    try {
      device_->step_simulation(dt);
    } catch (const std::exception& e) {
      spdlog::warn("simulation step failed: {}", e.what());
    }
    lock.lock();
  }
}

void Service::request_shutdown() {
  {
    std::lock_guard lock(mutex_);
    shutdown_ = true;
  }
  cv_.notify_all();
}

void Service::wait() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return shutdown_ || !running_; });
}

bool Service::wait_for(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  return cv_.wait_for(lock, timeout, [&] { return shutdown_ || !running_; });
}

void Service::stop() {
  {
    std::lock_guard lock(mutex_);
    running_ = false;
  }
  cv_.notify_all();
  if (ticker_.joinable()) ticker_.join();
  if (broker_) broker_->stop();
  if (http_server_) http_server_->stop();
}

}  // namespace lsm
