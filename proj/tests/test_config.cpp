// SPDX-License-Identifier: Apache-2.0
#include "lsm/config.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace lsm;
using nlohmann::json;

namespace {

json fixture_json(const std::string& name) {
  std::ifstream in(test::fixture_path(name));
  return json::parse(in);
}

/// The ConfigError message for `j`, or "ok".
std::string error_of(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "ok";
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

TEST_CASE("the tracker fixture parses") {
  const auto c = test::fixture_config("tracker.json");
  CHECK(c.device_id == "dev1");
  CHECK(c.manufacturer == "Acme Metrology");
  CHECK(c.seed == 42);
  CHECK(c.virtual_clock);
  CHECK(c.instrument.kind == InstrumentKind::LaserTracker);
  CHECK(c.instrument.bases.size() == 1);
  REQUIRE(c.instrument.targets.size() == 5);
  CHECK(c.instrument.targets[0].home);
  CHECK_FALSE(c.instrument.targets[0].measures_orientation);
  CHECK(c.instrument.targets[4].measures_orientation);
  CHECK(c.instrument.targets[3].velocity == Eigen::Vector3d(0.01, 0, 0));
  REQUIRE(c.http);
  CHECK(c.http->port == 0);
  CHECK(c.http->tokens.at("admin-token") == "admin");
  REQUIRE(c.mqtt);
  CHECK(c.mqtt->credentials.at("viewer") == "viewer-pass");
  CHECK(c.policy.size() == 6);
  const auto d = device_config(c);
  CHECK(d.targets.size() == 5);
  CHECK(d.rate_hz == 10.0);
}

TEST_CASE("configs survive a render and parse cycle") {
  for (const char* name : {"tracker.json", "mlat.json"}) {
    CAPTURE(name);
    const auto first = render_config(test::fixture_config(name));
    const auto second = render_config(parse_config(first));
    CHECK(first == second);
  }
}

TEST_CASE("errors name the offending key") {
  const auto base = fixture_json("tracker.json");
  const std::vector<std::pair<std::string, std::function<void(json&)>>> cases{
      {"device_id", [](json& j) { j.erase("device_id"); }},
      {"device_id", [](json& j) { j["device_id"] = "Dev 1"; }},
      {"colour", [](json& j) { j["colour"] = "red"; }},
      {"clock", [](json& j) { j["clock"] = "sundial"; }},
      {"seed", [](json& j) { j["seed"] = -1; }},
      {"instrument.kind", [](json& j) { j["instrument"]["kind"] = "theodolite"; }},
      {"instrument.bases", [](json& j) { j["instrument"]["bases"] = json::array(); }},
      {"instrument.targets[1].position", [](json& j) { j["instrument"]["targets"][1]["position"] = {1, 2}; }},
      {"instrument.targets[1].name", [](json& j) { j["instrument"]["targets"][1]["name"] = "smr0"; }},
      {"instrument.targets[4].quaternion", [](json& j) { j["instrument"]["targets"][4]["quaternion"] = {1, 1, 0, 0}; }},
      {"instrument.noise.sigma_d", [](json& j) { j["instrument"]["noise"]["sigma_d"] = 0; }},
      {"adapters.http.port", [](json& j) { j["adapters"]["http"]["port"] = 70000; }},
      {"adapters.mqtt.port", [](json& j) {
         j["adapters"]["http"]["port"] = 8000;
         j["adapters"]["mqtt"]["port"] = 8000;
       }},
      {"policy[0]", [](json& j) { j["policy"][0] = "admin:sometimes:**"; }},
      {"adapters.http.tokens.viewer-token", [](json& j) { j["policy"].erase(1); }},
  };
  for (const auto& [key, mutate] : cases) {
    json j = base;
    mutate(j);
    const auto message = error_of(j);
    CAPTURE(key);
    CAPTURE(message);
    CHECK(starts_with(message, key + ":"));
  }
  CHECK(error_of(base) == "ok");
}

TEST_CASE("malformed text and missing files are config errors") {
  CHECK_THROWS_AS(parse_config_text("{ not json"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}
