// SPDX-License-Identifier: Apache-2.0
// lsmctl: run a simulated device, talk to one, or bridge protocols.

#include "lsm/bridge.hpp"
#include "lsm/config.hpp"
#include "lsm/remote.hpp"
#include "lsm/service.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void install_signal_handlers() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

std::optional<std::string> env(const char* name) {
  const char* value = std::getenv(name);
  if (!value || !*value) return std::nullopt;
  return std::string(value);
}

struct ClientFlags {
  std::string url;
  std::string body;
  std::optional<std::string> token, username, password;
  int timeout_ms = 5000;
  int count = 0;

  lsm::Credentials credentials() const {
    return {token ? token : env("LSM_TOKEN"), username ? username : env("LSM_USERNAME"),
            password ? password : env("LSM_PASSWORD")};
  }
};

/// Prints an envelope; error envelopes make the command fail.
int emit(const std::string& envelope) {
  std::cout << envelope << std::endl;
  try {
    const auto j = json::parse(envelope);
    if (j.is_object() && j.contains("error")) return kRuntime;
  } catch (const json::exception&) {
    return kRuntime;
  }
  return kOk;
}

json parse_body(const std::string& text) {
  if (text.empty()) return json::object();
  return json::parse(text);
}

/// `write` accepts the bare value or a full {"value":..} body.
json update_body(const std::string& text) {
  auto j = json::parse(text);
  if (j.is_object()) return j;
  return json{{"value", std::move(j)}};
}

std::unique_ptr<lsm::MqttRemote> mqtt_remote(const lsm::Endpoint& e, const ClientFlags& f) {
  return std::make_unique<lsm::MqttRemote>(e.host, e.port, e.device_id, f.credentials(),
                                           std::chrono::milliseconds(f.timeout_ms));
}

lsm::HttpRemote http_remote(const lsm::Endpoint& e, const ClientFlags& f) {
  return lsm::HttpRemote(e.host, e.port, f.credentials().token, std::chrono::milliseconds(f.timeout_ms));
}

int run_client(const std::string& command, const ClientFlags& f) {
  const auto endpoint = lsm::parse_endpoint(f.url);
  const bool http = endpoint.scheme == lsm::Endpoint::Scheme::Http;

  if (command == "browse") {
    if (http) {
      auto remote = http_remote(endpoint, f);
      const auto response = remote.request("GET", endpoint.resource);
      std::cout << response.body << std::endl;
      return response.status == 200 ? kOk : kRuntime;
    }
    auto model = json::parse(mqtt_remote(endpoint, f)->model());
    for (const auto& segment : endpoint.resource.segments()) {
      std::optional<json> next;
      if (model.contains("children")) {
        for (const auto& child : model["children"]) {
          if (child.at("name") == segment) next = child;
        }
      }
      if (!next) return emit(lsm::serialize_envelope(
                 lsm::ActionResponse::error(lsm::errc::not_found, "no resource '" + endpoint.resource.str() + "'")));
      model = std::move(*next);
    }
    std::cout << lsm::canonical_json(model) << std::endl;
    return kOk;
  }

  if (command == "read") {
    if (http) return emit(http_remote(endpoint, f).request("GET", endpoint.resource).body);
    return emit(mqtt_remote(endpoint, f)->read(endpoint.resource));
  }

  if (command == "write" || command == "call") {
    const bool write = command == "write";
    const auto body = write ? update_body(f.body) : parse_body(f.body);
    if (http) return emit(http_remote(endpoint, f).request(write ? "PUT" : "POST", endpoint.resource, body.dump()).body);
    return emit(mqtt_remote(endpoint, f)->request(endpoint.resource, write ? "update" : "invoke", body));
  }

  // subscribe
  int seen = 0;
  int status = kOk;
  auto done = [&] { return (f.count > 0 && seen >= f.count) || g_interrupted; };
  if (http) {
    // HTTP has no push; poll and print changes.
    auto remote = http_remote(endpoint, f);
    std::string last;
    while (!done()) {
      const auto response = remote.request("GET", endpoint.resource);
      if (response.body != last) {
        last = response.body;
        ++seen;
        if (emit(response.body) != kOk) return kRuntime;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return kOk;
  }
  auto remote = mqtt_remote(endpoint, f);
  remote->subscribe(remote->topic(endpoint.resource), [&](const lsm::mqtt::Message& m) {
    ++seen;
    status = std::max(status, emit(m.payload));
    return !done();
  });
  return status;
}

int run_serve(const std::string& config_path, const std::string& notify_log) {
  const auto config = lsm::load_config(config_path);
  std::ofstream log;
  std::function<void(const std::string&)> sink;
  if (!notify_log.empty()) {
    log.open(notify_log, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open notification log '" + notify_log + "'");
    sink = [&log](const std::string& line) { log << line << '\n' << std::flush; };
  }
  lsm::Service service(config, sink);
  install_signal_handlers();
  service.start();
  if (service.http_port()) std::cout << "http " << *service.http_port() << std::endl;
  if (service.mqtt_port()) std::cout << "mqtt " << *service.mqtt_port() << std::endl;

  while (!service.wait_for(std::chrono::milliseconds(100))) {
    if (g_interrupted) break;
  }
  // Give the reply to a shutdown call time to leave before sockets close.
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  service.stop();
  return kOk;
}

int run_bridge(const std::string& upstream, std::optional<int> listen_http, std::optional<int> listen_mqtt,
               const std::string& host, int timeout_ms, std::optional<std::string> device_id,
               const ClientFlags& flags) {
  if (!listen_http && !listen_mqtt) throw CLI::ValidationError("bridge", "give --listen-http and/or --listen-mqtt");
  lsm::BridgeOptions options;
  options.upstream = lsm::parse_endpoint(upstream);
  options.credentials = flags.credentials();
  options.device_id = std::move(device_id);
  options.host = host;
  if (listen_http) options.listen_http = static_cast<std::uint16_t>(*listen_http);
  if (listen_mqtt) options.listen_mqtt = static_cast<std::uint16_t>(*listen_mqtt);
  options.timeout = std::chrono::milliseconds(timeout_ms);

  lsm::Bridge bridge(options);
  install_signal_handlers();
  bridge.start();
  if (bridge.http_port()) std::cout << "http " << *bridge.http_port() << std::endl;
  if (bridge.mqtt_port()) std::cout << "mqtt " << *bridge.mqtt_port() << std::endl;
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  bridge.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run, query and bridge large-scale metrology devices"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  std::string config_path, notify_log;
  auto* serve = app.add_subcommand("serve", "Run a simulated device with its adapters");
  serve->add_option("--config", config_path, "Device configuration (JSON)")->required()->check(CLI::ExistingFile);
  serve->add_option("--notify-log", notify_log, "Append every variable change to this file");

  ClientFlags flags;
  auto add_auth = [&](CLI::App* cmd) {
    cmd->add_option("--token", flags.token, "Bearer token (default $LSM_TOKEN)");
    cmd->add_option("--username", flags.username, "MQTT user (default $LSM_USERNAME)");
    cmd->add_option("--password", flags.password, "MQTT password (default $LSM_PASSWORD)");
  };

  auto* client = app.add_subcommand("client", "Talk to a device over http:// or mqtt://");
  client->require_subcommand(1);
  std::string command;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"browse", "Print the model below a resource"},
           {"read", "Print a variable's envelope"},
           {"write", "Update a variable with a JSON value"},
           {"call", "Invoke a function with JSON arguments"},
           {"subscribe", "Print envelopes as the variable changes"}}) {
    auto* sub = client->add_subcommand(name, help);
    sub->add_option("url", flags.url, "Resource URL")->required();
    add_auth(sub);
    sub->add_option("--timeout", flags.timeout_ms, "Reply timeout in ms")->capture_default_str();
    if (name == "write") sub->add_option("value", flags.body, "JSON value or body")->required();
    if (name == "call") sub->add_option("args", flags.body, "JSON arguments");
    if (name == "subscribe") sub->add_option("--count", flags.count, "Exit after N envelopes")->check(CLI::PositiveNumber);
    sub->callback([&command, name] { command = name; });
  }

  std::string upstream, bridge_host = "127.0.0.1";
  std::optional<int> listen_http, listen_mqtt;
  std::optional<std::string> bridge_device;
  int bridge_timeout = 5000;
  auto* bridge = app.add_subcommand("bridge", "Expose a device over the other protocol");
  bridge->add_option("--upstream", upstream, "http://host:port/api/v1 or mqtt://host:port/<device>")->required();
  bridge->add_option("--listen-http", listen_http, "Local HTTP port (0 picks one)")->check(CLI::Range(0, 65535));
  bridge->add_option("--listen-mqtt", listen_mqtt, "Local MQTT port (0 picks one)")->check(CLI::Range(0, 65535));
  bridge->add_option("--host", bridge_host, "Local bind address")->capture_default_str();
  bridge->add_option("--timeout", bridge_timeout, "Upstream reply timeout in ms")->capture_default_str();
  bridge->add_option("--device-id", bridge_device, "Device id on the local MQTT side");
  add_auth(bridge);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  // stdout carries envelopes and port lines; logs go to stderr.
  spdlog::set_default_logger(spdlog::stderr_color_mt("lsmctl"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (serve->parsed()) return run_serve(config_path, notify_log);
    if (client->parsed()) return run_client(command, flags);
    return run_bridge(upstream, listen_http, listen_mqtt, bridge_host, bridge_timeout, bridge_device, flags);
  } catch (const lsm::ConfigError& e) {
    std::cerr << "lsmctl: invalid config: " << e.what() << '\n';
    return kRuntime;
  } catch (const json::exception& e) {
    std::cerr << "lsmctl: bad JSON argument: " << e.what() << '\n';
    return kUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "lsmctl: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "lsmctl: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "lsmctl: " << e.what() << '\n';
    return kRuntime;
  }
}
