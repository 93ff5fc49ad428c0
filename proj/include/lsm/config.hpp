// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/lsm_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lsm {

/// Invalid configuration; the message starts with the offending key path.
class ConfigError : public InvalidConfig {
 public:
  using InvalidConfig::InvalidConfig;
};

enum class InstrumentKind { LaserTracker, Multilateration };

struct InstrumentConfig {
  InstrumentKind kind = InstrumentKind::LaserTracker;
  std::vector<BaseStationSpec> bases;
  std::vector<TargetSpec> targets;
  // Laser tracker: distance (m) and encoder (rad) standard deviations.
  double sigma_d = 1e-5;
  double sigma_az = 4.848e-6;
  double sigma_el = 4.848e-6;
  // Multilateration: range standard deviation (m).
  double sigma_r = 1e-3;
  double rate_hz = 10.0;
  double search_radius = 0.05;
};

struct HttpConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;
  std::map<std::string, std::string> tokens;  // token -> user
  std::optional<std::string> anonymous_user;
};

struct MqttConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 1883;
  std::map<std::string, std::string> credentials;  // user -> password
  std::optional<std::string> anonymous_user;
};

struct ServiceConfig {
  std::string device_id = "dev1";
  std::string manufacturer = "unknown";
  std::uint64_t seed = 1;
  /// Virtual time only moves through the device's `advance_clock` function.
  bool virtual_clock = false;
  std::uint32_t tick_ms = 10;
  InstrumentConfig instrument;
  std::optional<HttpConfig> http;
  std::optional<MqttConfig> mqtt;
  std::vector<std::string> policy;
};

ServiceConfig parse_config(const nlohmann::json& j);
/// Throws ConfigError, including for malformed JSON.
ServiceConfig parse_config_text(const std::string& text);
ServiceConfig load_config(const std::filesystem::path& path);
nlohmann::json render_config(const ServiceConfig& config);

DeviceConfig device_config(const ServiceConfig& config);

}  // namespace lsm
