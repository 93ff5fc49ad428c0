// SPDX-License-Identifier: Apache-2.0
#include "lsm/lsm_model.hpp"
#include "lsm/service.hpp"
#include "lsm/sim/laser_tracker.hpp"
#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace lsm;
using nlohmann::json;
using test::CollectingRecipient;
using test::error_code;
using test::request;

namespace {

/// Fixture service without network adapters.
struct Offline {
  std::unique_ptr<Service> service;
  std::string user;

  explicit Offline(const std::string& fixture = "tracker.json", std::string as = "admin") : user(std::move(as)) {
    auto config = test::fixture_config(fixture);
    config.http.reset();
    config.mqtt.reset();
    service = std::make_unique<Service>(config);
  }

  Pipeline& pipeline() { return service->pipeline(); }
  Device& device() { return service->device(); }

  ActionResponse call(const std::string& id, json args = json::object(), Action action = Action::OnInvoke) {
    return pipeline().dispatch(request(user, id, action, std::move(args)));
  }

  std::string entity_state(const std::string& name) {
    auto r = pipeline().dispatch(request(user, "lsm/entities/" + name + "/state", Action::Read));
    return std::get<Value>(r.result().value).get<EnumSymbol>().symbol;
  }

  std::vector<std::string> measuring() {
    std::vector<std::string> out;
    for (const auto& name : device().entity_names()) {
      if (is_measuring(device().state(name))) out.push_back(name);
    }
    return out;
  }
};

std::string entity(const std::string& name, const std::string& member) { return "lsm/entities/" + name + "/" + member; }

}  // namespace

TEST_CASE("startup activates the home target only") {
  Offline o;
  CHECK(o.entity_state("smr0") == "TRIGGERED");
  for (const char* other : {"smr1", "smr2", "smr3", "probe"}) CHECK(o.entity_state(other) == "INACTIVE");
  CHECK(o.measuring() == std::vector<std::string>{"smr0"});
  auto r = o.pipeline().dispatch(request("admin", "state", Action::Read));
  CHECK(std::get<Value>(r.result().value).get<EnumSymbol>().symbol == "OPERATIONAL");
}

TEST_CASE("activation moves the single measuring slot") {
  Offline o;
  CHECK(o.call(entity("smr2", "activate"), {{"active", true}}).ok());
  CHECK(o.measuring() == std::vector<std::string>{"smr2"});
  CHECK(o.entity_state("smr0") == "INACTIVE");
  CHECK(o.call(entity("smr2", "acquisition"), {{"mode", "CONTINUOUS"}, {"nonce", "m"}}).ok());
  CHECK(o.entity_state("smr2") == "CONTINUOUS");
  CHECK(o.call(entity("smr2", "activate"), {{"active", false}}).ok());
  CHECK(o.measuring().empty());
  // Mode survives deactivation.
  CHECK(o.call(entity("smr2", "activate"), {{"active", true}}).ok());
  CHECK(o.entity_state("smr2") == "CONTINUOUS");
}

TEST_CASE("property: random call sequences never leave two entities measuring") {
  std::mt19937 rng(77);
  const std::vector<std::string> modes{"CONTINUOUS", "TRIGGERED", "EXTERNAL"};
  for (int sequence = 0; sequence < 100; ++sequence) {
    Offline o;
    const auto names = o.device().entity_names();
    for (int step = 0; step < 30; ++step) {
      const auto& name = names[rng() % names.size()];
      switch (rng() % 5) {
        case 0:
        case 1: o.call(entity(name, "activate"), {{"active", rng() % 4 != 0}}); break;
        case 2: o.call(entity(name, "reset")); break;
        case 3: o.call(entity(name, "acquisition"), {{"mode", modes[rng() % 3]}, {"nonce", "s"}}); break;
        default: o.call(rng() % 2 ? "reset" : "lsm/reset"); break;
      }
      REQUIRE(o.measuring().size() <= 1);
    }
  }
}

TEST_CASE("trigger emits exactly count measurements with the caller's nonce") {
  Offline o;
  auto sink = std::make_shared<CollectingRecipient>();
  o.pipeline().dispatch(request("admin", entity("smr0", "position"), Action::OnSubscribe, std::nullopt, sink));
  std::mt19937 rng(5);
  for (int round = 0; round < 20; ++round) {
    sink->clear();
    const auto count = 1 + int(rng() % 100);
    const auto nonce = "t" + std::to_string(rng());
    REQUIRE(o.call(entity("smr0", "trigger"), {{"count", count}, {"nonce", nonce}}).ok());
    int tagged = 0;
    for (const auto& [id, envelope] : sink->items()) tagged += json::parse(envelope)["meta"]["nonce"] == nonce;
    CHECK(tagged == count);
    CHECK(sink->items().size() == std::size_t(count));
  }
}

TEST_CASE("trigger preconditions") {
  Offline o;
  CHECK(error_code(o.call(entity("smr0", "trigger"), {{"count", 0}, {"nonce", "x"}})) == "bad_payload");
  CHECK(error_code(o.call(entity("smr1", "trigger"), {{"count", 0}, {"nonce", "x"}})) == "bad_payload");
  CHECK(error_code(o.call(entity("smr1", "trigger"), {{"count", 1}, {"nonce", "x"}})) == "invalid_action");
  CHECK(error_code(o.call(entity("smr0", "trigger"), {{"count", 1}})) == "bad_payload");
  o.call(entity("smr0", "acquisition"), {{"mode", "CONTINUOUS"}, {"nonce", "x"}});
  CHECK(error_code(o.call(entity("smr0", "trigger"), {{"count", 1}, {"nonce", "x"}})) == "invalid_action");
}

TEST_CASE("continuous mode streams at the configured rate") {
  Offline o;
  auto sink = std::make_shared<CollectingRecipient>();
  o.pipeline().dispatch(request("admin", entity("smr3", "position"), Action::OnSubscribe, std::nullopt, sink));
  o.call(entity("smr3", "activate"), {{"active", true}});
  o.call(entity("smr3", "acquisition"), {{"mode", "CONTINUOUS"}, {"nonce", "stream"}});
  sink->clear();
  for (int i = 0; i < 100; ++i) REQUIRE(o.call("advance_clock", {{"dt_ns", 10'000'000}}).ok());
  CHECK(sink->items().size() == 10);
  // The target moves at 1 cm/s along x.
  const auto last = json::parse(sink->items().back().second);
  CHECK(last["value"][0].get<double>() == doctest::Approx(4.01).epsilon(1e-3));
  CHECK(last["meta"]["ts"] == 1'000'000'000);
}

TEST_CASE("hardware triggers need EXTERNAL mode") {
  Offline o;
  auto sink = std::make_shared<CollectingRecipient>();
  o.pipeline().dispatch(request("admin", entity("smr0", "position"), Action::OnSubscribe, std::nullopt, sink));
  CHECK(error_code(o.call(entity("smr0", "inject_trigger"))) == "invalid_action");
  o.call(entity("smr0", "acquisition"), {{"mode", "CONTINUOUS"}, {"nonce", "x"}});
  CHECK(error_code(o.call(entity("smr0", "inject_trigger"))) == "invalid_action");
  o.call(entity("smr0", "acquisition"), {{"mode", "EXTERNAL"}, {"nonce", "ext"}});
  CHECK(o.entity_state("smr0") == "EXTERNAL");
  sink->clear();
  CHECK(o.call(entity("smr0", "inject_trigger")).ok());
  CHECK(sink->items().size() == 1);
}

TEST_CASE("position-only targets report the identity quaternion") {
  Offline o;
  const json identity = json::array({1.0, 0.0, 0.0, 0.0});
  auto quaternion = [&](const std::string& name) {
    return json::parse(serialize_envelope(o.pipeline().dispatch(request("admin", entity(name, "quaternion"), Action::Read))))["value"];
  };
  for (const char* name : {"smr0", "smr1", "smr2", "smr3"}) {
    CHECK(quaternion(name) == identity);
    o.call(entity(name, "activate"), {{"active", true}});
    o.call(entity(name, "trigger"), {{"count", 5}, {"nonce", "q"}});
    CHECK(quaternion(name) == identity);
  }
  CHECK(quaternion("probe") != identity);
}

TEST_CASE("measured positions carry a covariance") {
  Offline o;
  o.call(entity("smr0", "trigger"), {{"count", 1}, {"nonce", "c"}});
  const auto r = o.pipeline().dispatch(request("admin", entity("smr0", "position"), Action::Read));
  REQUIRE(r.result().meta.covariance.has_value());
  CHECK(is_valid_covariance(*r.result().meta.covariance));
  CHECK((*r.result().meta.covariance)(0, 0) == doctest::Approx(1e-10).epsilon(1e-6));
}

TEST_CASE("a lost target fails its search") {
  Offline o;
  auto& tracker = dynamic_cast<sim::LaserTrackerSim&>(o.service->backend());
  tracker.displace("smr1", Eigen::Vector3d(0.2, 0, 0));
  const auto r = o.call(entity("smr1", "activate"), {{"active", true}});
  CHECK(error_code(r) == "internal");
  CHECK(o.entity_state("smr1") == "ERROR");
  CHECK(o.measuring().empty());
  // A small displacement stays within the search radius.
  tracker.displace("smr2", Eigen::Vector3d(0.01, 0, 0));
  CHECK(o.call(entity("smr2", "activate"), {{"active", true}}).ok());
}

TEST_CASE("entity reset restores the nominal pose and triggered mode") {
  Offline o;
  o.call(entity("smr0", "trigger"), {{"count", 3}, {"nonce", "n"}});
  o.call(entity("smr0", "acquisition"), {{"mode", "CONTINUOUS"}, {"nonce", "n"}});
  CHECK(o.call(entity("smr0", "reset"), {{"nonce", "r"}}).ok());
  CHECK(o.entity_state("smr0") == "TRIGGERED");
  const auto p = o.pipeline().dispatch(request("admin", entity("smr0", "position"), Action::Read));
  CHECK(std::get<Value>(p.result().value) == Value(Eigen::Vector3d(2, 0, 0)));
  CHECK(p.result().meta.nonce == "r");
}

TEST_CASE("entities are created and deleted through the tree") {
  Offline o;
  std::vector<std::pair<std::string, bool>> topology;
  o.pipeline().add_topology_listener([&](const ResourceId& id, bool added) { topology.emplace_back(id.str(), added); });
  auto r = o.call("lsm/entities", {{"name", "smr9"}, {"type", "smr"}, {"position", {1.0, 1.0, 1.0}}}, Action::Create);
  REQUIRE(r.ok());
  CHECK(o.entity_state("smr9") == "INACTIVE");
  auto node = std::static_pointer_cast<ObjectNode>(resolve(o.device().root(), ResourceId::parse("lsm/entities/smr9")));
  CHECK(conforms(*node, entity_class()));
  CHECK(error_code(o.call("lsm/entities", {{"name", "smr9"}, {"type", "smr"}, {"position", {1.0, 1.0, 1.0}}},
                          Action::Create)) == "bad_payload");
  CHECK(error_code(o.call("lsm/entities", {{"name", "smr8"}}, Action::Create)) == "bad_payload");

  CHECK(o.call(entity("smr9", "activate"), {{"active", true}}).ok());
  CHECK(error_code(o.call("lsm/entities/smr9", json::object(), Action::Delete)) == "forbidden");
  o.call(entity("smr9", "activate"), {{"active", false}});
  CHECK(o.call("lsm/entities/smr9", json::object(), Action::Delete).ok());
  CHECK_FALSE(o.pipeline().kind_of(ResourceId::parse("lsm/entities/smr9")).has_value());
  CHECK(error_code(o.call("lsm/entities/smr0", json::object(), Action::Delete)) == "forbidden");
  CHECK(topology == std::vector<std::pair<std::string, bool>>{{"lsm/entities/smr9", true}, {"lsm/entities/smr9", false}});
}

TEST_CASE("tracker head members") {
  Offline o;
  const auto before = o.pipeline().dispatch(request("admin", "lsm/bases/tracker/beam_direction", Action::Read));
  CHECK(o.call("lsm/bases/tracker/jog", {{"d_azimuth", 0.1}, {"d_elevation", 0.0}}).ok());
  const auto after = o.pipeline().dispatch(request("admin", "lsm/bases/tracker/beam_direction", Action::Read));
  CHECK(std::get<Value>(before.result().value) != std::get<Value>(after.result().value));
  CHECK(o.call("lsm/bases/tracker/set_camera", {{"on", true}}).ok());
  CHECK(std::get<Value>(o.pipeline().dispatch(request("admin", "lsm/bases/tracker/camera", Action::Read)).result().value) ==
        Value(true));
}

TEST_CASE("deactivating the tracker head releases the active target") {
  Offline o;
  CHECK(o.call("lsm/bases/tracker/activate", {{"active", false}}).ok());
  CHECK(o.measuring().empty());
  CHECK(o.call("reset").ok());
  CHECK(o.measuring() == std::vector<std::string>{"smr0"});
}

TEST_CASE("multilateration tags may all be active") {
  Offline o("mlat.json", "operator");
  CHECK(o.call(entity("t1", "activate"), {{"active", true}}).ok());
  CHECK(o.measuring().size() == 2);
  CHECK(o.call(entity("t1", "trigger"), {{"count", 1}, {"nonce", "m"}}).ok());
  const auto p = o.pipeline().dispatch(request("operator", entity("t1", "position"), Action::Read));
  const auto v = std::get<Value>(p.result().value).get<Eigen::Vector3d>();
  CHECK((v - Eigen::Vector3d(6, 3, 1)).norm() < 0.02);
  CHECK(p.result().meta.covariance.has_value());
  // Three anchors cannot fix a position.
  CHECK(o.call("lsm/bases/a3/activate", {{"active", false}}).ok());
  CHECK(error_code(o.call(entity("t1", "trigger"), {{"count", 1}, {"nonce", "m"}})) == "internal");
}
