// SPDX-License-Identifier: Apache-2.0
#include "lsm/lsm_model.hpp"
#include "lsm/resource_model.hpp"
#include "lsm/sim/laser_tracker.hpp"
#include "lsm/sim/multilateration_sim.hpp"
#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace lsm;

namespace {

VariablePtr text_var(const std::string& v = "") { return std::make_shared<VariableNode>(ValueKind::text(), Value(v)); }

FunctionPtr noop(Signature s = {}) {
  return std::make_shared<FunctionNode>(std::move(s), [](const ValueMap&, CallContext&) { return FunctionResult{}; });
}

std::unique_ptr<Device> tracker_device() {
  auto config = device_config(test::fixture_config("tracker.json"));
  DeviceOptions options;
  options.sim_clock = std::make_shared<ManualClock>(0);
  options.nonces = std::make_shared<NonceSource>(1);
  return std::make_unique<Device>(config, std::make_shared<sim::LaserTrackerSim>(), options);
}

ObjectPtr object_at(const Device& device, const std::string& id) {
  return std::static_pointer_cast<ObjectNode>(resolve(device.root(), ResourceId::parse(id)));
}

std::vector<std::string> member_names(const ClassDefinition& d) {
  std::vector<std::string> out;
  for (const auto& f : d.functions) out.push_back(f.name);
  for (const auto& v : d.variables) out.push_back(v.name);
  for (const auto& o : d.objects) out.push_back(o.name);
  return out;
}

}  // namespace

TEST_CASE("resource ids parse and print") {
  const auto id = ResourceId::parse("lsm/entities/smr1/position");
  CHECK(id.size() == 4);
  CHECK(id.leaf() == "position");
  CHECK(id.str() == "lsm/entities/smr1/position");
  CHECK(id.parent().str() == "lsm/entities/smr1");
  CHECK(id.starts_with(ResourceId::parse("lsm/entities")));
  CHECK_FALSE(id.starts_with(ResourceId::parse("lsm/entity")));
  CHECK(id.starts_with(ResourceId::root()));
  CHECK(ResourceId::root().is_root());
  CHECK(ResourceId::root().child("a").str() == "a");
  for (const char* bad : {"", "/", "a/", "/a", "a//b", "A", "a b", "a/+", "a/#", "a/$model", "é"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(ResourceId::parse(bad), MalformedId);
  }
}

TEST_CASE("property: id text round-trips") {
  std::mt19937 rng(5);
  const std::string alphabet = "abcxyz0189_-";
  for (int i = 0; i < 500; ++i) {
    std::vector<std::string> segments(1 + rng() % 5);
    std::string text;
    for (auto& s : segments) {
      for (int n = 1 + int(rng() % 6); n > 0; --n) s += alphabet[rng() % alphabet.size()];
      text += (text.empty() ? "" : "/") + s;
    }
    const auto id = ResourceId::parse(text);
    CHECK(id.segments() == segments);
    CHECK(ResourceId::parse(id.str()) == id);
  }
}

TEST_CASE("objects own their children") {
  auto root = std::make_shared<ObjectNode>();
  auto child = text_var("x");
  root->add("a", child);
  CHECK(child->parent() == root.get());
  CHECK_THROWS_AS(root->add("a", text_var()), std::invalid_argument);
  auto other = std::make_shared<ObjectNode>();
  CHECK_THROWS_AS(other->add("b", child), std::invalid_argument);
  CHECK_THROWS_AS(root->add("Bad", text_var()), std::invalid_argument);
  CHECK(root->remove("a") == child);
  CHECK(child->parent() == nullptr);
  CHECK(root->remove("a") == nullptr);
  other->add("b", child);
  CHECK(resolve(other, ResourceId::parse("b")) == child);
  CHECK_THROWS_AS(resolve(other, ResourceId::parse("c")), NotFound);
  CHECK_THROWS_AS(resolve(other, ResourceId::parse("b/c")), NotAnObject);
}

TEST_CASE("variables validate what they store") {
  VariableNode plain(ValueKind::int64(), Value(std::int64_t{1}));
  CHECK_THROWS_AS(plain.store(Value("x"), {}), std::invalid_argument);
  Metadata with_cov;
  with_cov.covariance = Eigen::Matrix3d::Identity();
  CHECK_THROWS_AS(plain.store(Value(std::int64_t{2}), with_cov), std::invalid_argument);

  VariableNode measured(ValueKind::vector3(), Value(Eigen::Vector3d::Zero().eval()), false, true);
  CHECK(measured.snapshot().meta.covariance.has_value());
  CHECK_THROWS_AS(measured.store(Value(Eigen::Vector3d::Ones().eval()), {}), std::invalid_argument);
  Metadata bad_cov;
  bad_cov.covariance = -Eigen::Matrix3d::Identity();
  CHECK_THROWS_AS(measured.store(Value(Eigen::Vector3d::Ones().eval()), bad_cov), std::invalid_argument);

  VariableNode quat(ValueKind::vector4(), Value(identity_quaternion()));
  CHECK_THROWS_AS(quat.store(Value(Eigen::Vector4d(1, 1, 0, 0)), {}), std::invalid_argument);
}

TEST_CASE("timestamps never go backwards and observers see stores in order") {
  VariableNode v(ValueKind::int64(), Value(std::int64_t{0}));
  std::vector<std::int64_t> seen;
  v.set_observer([&](const Value& value, const Metadata& meta) {
    seen.push_back(value.get<std::int64_t>());
    CHECK(meta.timestamp_ns >= 0);
  });
  v.store(Value(std::int64_t{1}), Metadata{100, "a", std::nullopt});
  v.store(Value(std::int64_t{2}), Metadata{50, "b", std::nullopt});
  CHECK(v.snapshot().meta.timestamp_ns == 100);
  CHECK(seen == std::vector<std::int64_t>{1, 2});
}

TEST_CASE("browse describes structure without values") {
  auto root = std::make_shared<ObjectNode>();
  root->add("v", std::make_shared<VariableNode>(ValueKind::enumeration({"A", "B"}), Value(EnumSymbol{"A"}), true));
  root->add("f", noop({{{"x", ValueKind::float64()}}, {{"y", ValueKind::int64()}}}));
  root->add("o", std::make_shared<ObjectNode>());
  const auto doc = to_json(browse(*root));
  CHECK(doc.dump() ==
        R"({"children":[{"args":[{"kind":"float64","name":"x"}],"kind":"function","name":"f","returns":[{"kind":"int64","name":"y"}]},)"
        R"({"kind":"object","name":"o"},)"
        R"({"kind":"variable","measured":false,"name":"v","symbols":["A","B"],"value_kind":"enum","writable":true}],"kind":"object"})");
  CHECK(params_from_json(doc["children"][0]["args"]) == ParamList{{"x", ValueKind::float64()}});
  const auto tree = describe_tree(*root);
  CHECK(tree["children"][1]["children"].is_array());
}

TEST_CASE("for_each_variable walks depth first in name order") {
  auto device = tracker_device();
  std::vector<std::string> ids;
  for_each_variable(*device->root(), ResourceId::root(), [&](const ResourceId& id, const VariablePtr&) { ids.push_back(id.str()); });
  auto index = [&](const std::string& id) { return std::find(ids.begin(), ids.end(), id) - ids.begin(); };
  CHECK(index("api_version") < index("lsm/bases/tracker/name"));
  CHECK(index("lsm/bases/tracker/name") < index("lsm/entities/probe/name"));
  CHECK(index("lsm/entities/smr3/type") < index("manufacturer"));
  CHECK(std::find(ids.begin(), ids.end(), "lsm/entities/smr1/position") != ids.end());
  CHECK(std::find(ids.begin(), ids.end(), "lsm/bases/tracker/beam_direction") != ids.end());
  CHECK(ids.size() >= 20);
}

TEST_CASE("class definitions reject repeated member names") {
  ClassDefinition d{"x", {{"a", {}}}, {{"a", ValueKind::text()}}, {}};
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  CHECK_NOTHROW(entity_class().validate());
  CHECK_NOTHROW(generic_device_class().validate());
}

TEST_CASE("device fixtures instantiate their classes") {
  auto device = tracker_device();
  CHECK(conforms(*device->root(), generic_device_class()));
  CHECK(conforms(*object_at(*device, "lsm"), lsm_object_class()));
  for (const auto& name : device->entity_names()) {
    CAPTURE(name);
    CHECK(conforms(*object_at(*device, "lsm/entities/" + name), entity_class()));
  }
  CHECK(conforms(*object_at(*device, "lsm/bases/tracker"), base_station_class()));

  DeviceOptions options;
  options.sim_clock = std::make_shared<ManualClock>(0);
  Device mlat(device_config(test::fixture_config("mlat.json")), std::make_shared<sim::MultilaterationSim>(), options);
  for (const char* base : {"a0", "a1", "a2", "a3"}) {
    CHECK(conforms(*object_at(mlat, std::string("lsm/bases/") + base), base_station_class()));
  }
}

TEST_CASE("removing any required member breaks conformance") {
  auto device = tracker_device();
  const std::vector<std::pair<std::string, ClassDefinition>> cases{
      {"lsm/entities/smr1", entity_class()},
      {"lsm/entities/probe", entity_class()},
      {"lsm/bases/tracker", base_station_class()},
      {"lsm", lsm_object_class()}};
  for (const auto& [path, definition] : cases) {
    auto object = object_at(*device, path);
    for (const auto& member : member_names(definition)) {
      CAPTURE(path);
      CAPTURE(member);
      auto removed = object->remove(member);
      REQUIRE(removed);
      CHECK_FALSE(conforms(*object, definition));
      object->add(member, removed);
      CHECK(conforms(*object, definition));
    }
  }
}

TEST_CASE("a member of the wrong kind or signature breaks conformance") {
  auto device = tracker_device();
  auto entity = object_at(*device, "lsm/entities/smr2");
  auto removed = entity->remove("activate");
  entity->add("activate", noop({{{"on", ValueKind::boolean()}}, {}}));
  CHECK_FALSE(conforms(*entity, entity_class()));
  entity->remove("activate");
  entity->add("activate", text_var());
  CHECK_FALSE(conforms(*entity, entity_class()));
  entity->remove("activate");
  entity->add("activate", removed);

  auto state = entity->remove("state");
  entity->add("state", std::make_shared<VariableNode>(ValueKind::enumeration({"ON", "OFF"}), Value(EnumSymbol{"ON"})));
  CHECK_FALSE(conforms(*entity, entity_class()));
  entity->remove("state");
  entity->add("state", state);
  CHECK(conforms(*entity, entity_class()));
}

TEST_CASE("property: extra members never break conformance") {
  auto device = tracker_device();
  auto entity = object_at(*device, "lsm/entities/smr3");
  std::mt19937 rng(17);
  for (int i = 0; i < 200; ++i) {
    const auto name = "extra_" + std::to_string(i);
    switch (rng() % 3) {
      case 0: entity->add(name, text_var()); break;
      case 1: entity->add(name, noop({{{"p", ValueKind::int64()}}, {}})); break;
      default: {
        auto nested = std::make_shared<ObjectNode>();
        nested->add("activate", noop());
        entity->add(name, nested);
      }
    }
    CHECK(conforms(*entity, entity_class()));
  }
  CHECK(conforms(*device->root(), generic_device_class()));
}
