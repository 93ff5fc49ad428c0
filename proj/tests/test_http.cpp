// SPDX-License-Identifier: Apache-2.0
#include "lsm/http_adapter.hpp"
#include "lsm/remote.hpp"
#include "lsm/service.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace lsm;
using nlohmann::json;

namespace {

struct Rest {
  std::unique_ptr<Service> service;
  std::unique_ptr<HttpAdapter> adapter;

  Rest() {
    auto config = test::fixture_config("tracker.json");
    config.mqtt.reset();
    service = std::make_unique<Service>(config);
    service->pipeline().root()->add(
        "boom", std::make_shared<FunctionNode>(Signature{}, [](const ValueMap&, CallContext&) -> FunctionResult {
          throw std::runtime_error("injected failure");
        }));
    adapter = std::make_unique<HttpAdapter>(service->pipeline(),
                                            HttpAdapterOptions{config.http->tokens, config.http->anonymous_user, {}});
  }

  HttpResponse send(const std::string& method, const std::string& path, const std::string& body = {},
                    const std::optional<std::string>& token = "admin-token") {
    HttpRequest r{method, std::string(kApiPrefix) + path, {}, body};
    if (token) r.headers["Authorization"] = "Bearer " + *token;
    return adapter->handle(r);
  }
};

std::string code_of(const HttpResponse& r) {
  const auto j = json::parse(r.body);
  return j.contains("error") ? j["error"]["code"].get<std::string>() : "ok";
}

}  // namespace

TEST_CASE("error codes map to statuses") {
  CHECK(http_status("bad_payload") == 400);
  CHECK(http_status("unauthorized") == 401);
  CHECK(http_status("forbidden") == 403);
  CHECK(http_status("not_found") == 404);
  CHECK(http_status("invalid_action") == 405);
  CHECK(http_status("internal") == 500);
  CHECK(http_status("unavailable") == 503);
}

TEST_CASE("GET reads variables and browses the rest") {
  Rest rest;
  auto r = rest.send("GET", "/manufacturer");
  CHECK(r.status == 200);
  CHECK(r.body == R"({"meta":{"nonce":")" +
                      rest.service->pipeline().dispatch(test::request("admin", "manufacturer", Action::Read)).result().meta.nonce +
                      R"(","ts":0},"value":"Acme Metrology"})");
  r = rest.send("GET", "/lsm/entities");
  CHECK(r.status == 200);
  const auto doc = json::parse(r.body);
  CHECK(doc["href"] == "/api/v1/lsm/entities");
  CHECK(doc["kind"] == "object");
  CHECK(doc["children"].size() == 5);
  CHECK(doc["children"][0]["href"] == "/api/v1/lsm/entities/probe");
  CHECK(rest.send("GET", "").status == 200);
  CHECK(rest.send("GET", "/").status == 200);
  CHECK(rest.send("GET", "/lsm/entities/smr0/trigger").status == 200);
}

TEST_CASE("PUT, POST and DELETE map to update, invoke, create and delete") {
  Rest rest;
  auto r = rest.send("PUT", "/lsm/entities/smr1/name", R"({"value":"renamed","nonce":"p1"})");
  CHECK(r.status == 200);
  CHECK(json::parse(r.body)["meta"]["nonce"] == "p1");
  CHECK(json::parse(rest.send("GET", "/lsm/entities/smr1/name").body)["value"] == "renamed");

  r = rest.send("POST", "/lsm/entities/smr0/trigger", R"({"count":2,"nonce":"trig"})");
  CHECK(r.status == 200);
  CHECK(r.body == R"({"meta":{"nonce":"trig","ts":0},"value":{}})");

  r = rest.send("POST", "/lsm/entities", R"({"name":"smr7","type":"smr","position":[1.0,2.0,3.0]})");
  CHECK(r.status == 200);
  CHECK(rest.send("GET", "/lsm/entities/smr7/state").status == 200);
  CHECK(rest.send("DELETE", "/lsm/entities/smr7").status == 200);
  CHECK(rest.send("GET", "/lsm/entities/smr7/state").status == 404);
}

TEST_CASE("failures come back as error envelopes with matching statuses") {
  Rest rest;
  const std::vector<std::tuple<std::string, std::string, std::string, int>> cases{
      {"GET", "/nope", "", 404},
      {"GET", "/Bad Id", "", 404},
      {"POST", "/manufacturer", "{}", 405},
      {"PUT", "/manufacturer", R"({"value":"x"})", 403},
      {"PATCH", "/manufacturer", "{}", 405},
      {"PUT", "/lsm/entities/smr1/name", "not json", 400},
      {"PUT", "/lsm/entities/smr1/name", R"({"value":5})", 400},
      {"POST", "/lsm/entities/smr0/trigger", R"({"count":0,"nonce":"x"})", 400},
      {"POST", "/lsm/entities/smr1/trigger", R"({"count":1,"nonce":"x"})", 405},
      {"DELETE", "/lsm/entities/smr0", "", 403},
      {"POST", "/boom", "{}", 500},
  };
  for (const auto& [method, path, body, status] : cases) {
    CAPTURE(method);
    CAPTURE(path);
    const auto r = rest.send(method, path, body);
    CHECK(r.status == status);
    const auto j = json::parse(r.body);
    REQUIRE(j.contains("error"));
    CHECK(j["error"]["code"].is_string());
    CHECK(j["error"]["message"].is_string());
    CHECK(j.size() == 1);
    CHECK(http_status(j["error"]["code"].get<std::string>()) == status);
  }
  CHECK(rest.send("POST", "/boom", "{}").body == R"({"error":{"code":"internal","message":"injected failure"}})");
}

TEST_CASE("bearer tokens select the user") {
  Rest rest;
  CHECK(rest.send("GET", "/manufacturer", {}, std::nullopt).status == 200);
  CHECK(rest.send("GET", "/system_time", {}, std::nullopt).status == 403);
  CHECK(rest.send("GET", "/system_time", {}, "viewer-token").status == 200);
  CHECK(rest.send("POST", "/reset", "{}", "viewer-token").status == 403);
  CHECK(rest.send("GET", "/manufacturer", {}, "forged").status == 401);
  HttpRequest basic{"GET", "/api/v1/manufacturer", {{"authorization", "Basic abc"}}, {}};
  CHECK(code_of(rest.adapter->handle(basic)) == "unauthorized");
  HttpRequest lower{"GET", "/api/v1/system_time", {{"authorization", "bearer admin-token"}}, {}};
  CHECK(rest.adapter->handle(lower).status == 200);
  CHECK(rest.send("GET", "", {}, std::nullopt).status == 403);

  HttpAdapter strict(rest.service->pipeline(), HttpAdapterOptions{{{"t", "admin"}}, std::nullopt, {}});
  CHECK(strict.handle(HttpRequest{"GET", "/api/v1/manufacturer", {}, {}}).status == 401);
  HttpAdapter down(rest.service->pipeline(), HttpAdapterOptions{{}, "admin", [] { return false; }});
  CHECK(down.handle(HttpRequest{"GET", "/api/v1/manufacturer", {}, {}}).status == 503);
}

TEST_CASE("paths outside the API prefix are not found") {
  Rest rest;
  CHECK(rest.adapter->handle(HttpRequest{"GET", "/api/v2/manufacturer", {}, {}}).status == 404);
  CHECK(rest.adapter->handle(HttpRequest{"GET", "/api/v1manufacturer", {}, {}}).status == 404);
}

TEST_CASE("the server speaks HTTP") {
  auto config = test::fixture_config("tracker.json");
  config.mqtt.reset();
  Service service(config);
  service.pipeline().root()->add(
      "boom", std::make_shared<FunctionNode>(Signature{}, [](const ValueMap&, CallContext&) -> FunctionResult {
        throw std::runtime_error("injected failure");
      }));
  service.start();
  REQUIRE(service.http_port());
  HttpRemote remote("127.0.0.1", *service.http_port(), std::string("admin-token"));
  auto r = remote.request("GET", ResourceId::parse("api_version"));
  CHECK(r.status == 200);
  CHECK(json::parse(r.body)["value"].is_number_integer());
  r = remote.request("POST", ResourceId::parse("boom"), "{}");
  CHECK(r.status == 500);
  CHECK(r.body == R"({"error":{"code":"internal","message":"injected failure"}})");
  r = remote.request("POST", ResourceId::parse("lsm/entities/smr0/trigger"), R"({"count":3,"nonce":"wire"})");
  CHECK(r.status == 200);
  CHECK(json::parse(remote.request("GET", ResourceId::parse("lsm/entities/smr0/position")).body)["meta"]["nonce"] ==
        "wire");

  // Concurrent clients.
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      HttpRemote own("127.0.0.1", *service.http_port(), std::string("viewer-token"));
      for (int i = 0; i < 25; ++i) ok += own.request("GET", ResourceId::parse("lsm/entities/smr0/state")).status == 200;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(ok == 200);
  service.stop();
  CHECK_THROWS_AS(remote.request("GET", ResourceId::parse("api_version")), RemoteError);
}
