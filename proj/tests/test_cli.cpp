// SPDX-License-Identifier: Apache-2.0
#include "process.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace lsm::test;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

const std::string kLsmctl = LSMCTL_PATH;

/// A running `lsmctl serve` with its announced ports.
struct Served {
  Child child;
  std::uint16_t http = 0, mqtt = 0;

  explicit Served(const std::string& config, std::vector<std::string> extra = {})
      : child([&] {
          std::vector<std::string> args{kLsmctl, "serve", "--config", config};
          args.insert(args.end(), extra.begin(), extra.end());
          return args;
        }()) {
    for (int i = 0; i < 2; ++i) {
      const auto l = child.line();
      if (!l) throw std::runtime_error("serve printed no ports: " + child.err());
      if (l->rfind("http ", 0) == 0) http = static_cast<std::uint16_t>(std::stoi(l->substr(5)));
      if (l->rfind("mqtt ", 0) == 0) mqtt = static_cast<std::uint16_t>(std::stoi(l->substr(5)));
    }
  }

  std::string http_url(const std::string& id) const { return "http://127.0.0.1:" + std::to_string(http) + "/api/v1/" + id; }
  std::string mqtt_url(const std::string& id) const { return "mqtt://127.0.0.1:" + std::to_string(mqtt) + "/dev1/" + id; }
};

std::string temp_config(const json& j) {
  const auto path = std::filesystem::temp_directory_path() / ("lsm-config-" + std::to_string(getpid()) + ".json");
  std::ofstream(path) << j.dump(2);
  return path.string();
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run({kLsmctl}).code == 1);
  CHECK(run({kLsmctl, "frobnicate"}).code == 1);
  CHECK(run({kLsmctl, "client", "read"}).code == 1);
  CHECK(run({kLsmctl, "client", "read", "ftp://x/y"}).code == 1);
  CHECK(run({kLsmctl, "serve", "--config", "/nonexistent.json"}).code == 1);
  CHECK(run({kLsmctl, "--help"}).code == 0);
}

TEST_CASE("an invalid config names the offending key") {
  std::ifstream in(fixture_path("tracker.json"));
  auto j = json::parse(in);
  j["instrument"]["targets"][2]["position"] = {1, 2};
  const auto path = temp_config(j);
  const auto r = run({kLsmctl, "serve", "--config", path});
  std::filesystem::remove(path);
  CHECK(r.code == 2);
  CHECK(r.err.find("instrument.targets[2].position") != std::string::npos);
}

TEST_CASE("client commands against a served device") {
  Served served(fixture_path("tracker.json"));
  REQUIRE(served.http != 0);
  REQUIRE(served.mqtt != 0);

  auto r = run({kLsmctl, "client", "read", served.http_url("manufacturer")});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out)["value"] == "Acme Metrology");
  const auto via_mqtt = run({kLsmctl, "client", "read", served.mqtt_url("manufacturer")});
  CHECK(via_mqtt.code == 0);
  CHECK(via_mqtt.out == r.out);

  r = run({kLsmctl, "client", "browse", served.http_url("lsm/entities/smr0")});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out)["kind"] == "object");
  r = run({kLsmctl, "client", "browse", served.mqtt_url("lsm/entities/smr0"), "--username", "admin", "--password",
           "admin-pass"});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out)["kind"] == "object");

  // Guests may not call functions; the error envelope fails the command.
  r = run({kLsmctl, "client", "call", served.http_url("lsm/entities/smr0/trigger"), R"({"count":1,"nonce":"g"})"});
  CHECK(r.code == 2);
  CHECK(json::parse(r.out)["error"]["code"] == "forbidden");

  r = run({kLsmctl, "client", "write", served.http_url("lsm/entities/smr1/name"), "\"renamed\"", "--token",
           "admin-token"});
  CHECK(r.code == 0);
  r = run({kLsmctl, "client", "read", served.mqtt_url("lsm/entities/smr1/name")});
  CHECK(json::parse(r.out)["value"] == "renamed");

  CHECK(run({kLsmctl, "client", "call", served.http_url("reset"), "{not json", "--token", "admin-token"}).code == 1);

  // subscribe --count 3: the retained envelope plus two triggered measurements.
  Child subscriber({kLsmctl, "client", "subscribe", served.mqtt_url("lsm/entities/smr0/position"), "--count", "3",
                    "--username", "admin", "--password", "admin-pass"});
  REQUIRE(subscriber.line());
  r = run({kLsmctl, "client", "call", served.mqtt_url("lsm/entities/smr0/trigger"), R"({"count":2,"nonce":"sub"})",
           "--username", "admin", "--password", "admin-pass"});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out)["meta"]["nonce"] == "sub");
  const auto second = subscriber.line();
  const auto third = subscriber.line();
  REQUIRE(second);
  REQUIRE(third);
  CHECK(json::parse(*second)["meta"]["nonce"] == "sub");
  CHECK(json::parse(*third)["meta"]["nonce"] == "sub");
  CHECK(subscriber.wait() == 0);

  // Credentials also come from the environment.
  setenv("LSM_TOKEN", "admin-token", 1);
  r = run({kLsmctl, "client", "read", served.http_url("system_time")});
  unsetenv("LSM_TOKEN");
  CHECK(r.code == 0);

  r = run({kLsmctl, "client", "call", served.http_url("shutdown"), "{}", "--token", "admin-token"});
  CHECK(r.code == 0);
  CHECK(served.child.wait() == 0);
}

TEST_CASE("serve stops cleanly on SIGTERM") {
  Served served(fixture_path("mlat.json"));
  served.child.signal(SIGTERM);
  CHECK(served.child.wait() == 0);
}

TEST_CASE("bridge command") {
  Served served(fixture_path("tracker.json"));
  Child bridge({kLsmctl, "bridge", "--upstream", "mqtt://127.0.0.1:" + std::to_string(served.mqtt) + "/dev1",
                "--listen-http", "0", "--username", "admin", "--password", "admin-pass"});
  const auto announced = bridge.line();
  REQUIRE(announced);
  REQUIRE(announced->rfind("http ", 0) == 0);
  const auto port = announced->substr(5);
  const auto r = run({kLsmctl, "client", "read", "http://127.0.0.1:" + port + "/api/v1/manufacturer"});
  CHECK(r.code == 0);
  const auto direct = run({kLsmctl, "client", "read", served.http_url("manufacturer")});
  CHECK(r.out == direct.out);
  bridge.signal(SIGINT);
  CHECK(bridge.wait() == 0);
  CHECK(run({kLsmctl, "bridge", "--upstream", "http://127.0.0.1:1/api/v1"}).code == 1);
  served.child.signal(SIGTERM);
  CHECK(served.child.wait() == 0);
}
