// SPDX-License-Identifier: Apache-2.0
#include "lsm/envelope.hpp"
#include "lsm/value.hpp"

#include <doctest.h>

#include <random>

using namespace lsm;
using nlohmann::json;

namespace {

const std::vector<std::string> kSymbols{"RED", "GREEN", "BLUE"};

std::vector<ValueKind> all_kinds() {
  return {ValueKind::boolean(), ValueKind::int64(),   ValueKind::float64(), ValueKind::text(),
          ValueKind::enumeration(kSymbols), ValueKind::vector3(), ValueKind::vector4(), ValueKind::matrix3()};
}

Value random_value(const ValueKind& kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> real(-1e6, 1e6);
  std::uniform_int_distribution<std::int64_t> integer(INT64_MIN, INT64_MAX);
  switch (kind.type) {
    case ValueType::Bool: return Value(rng() % 2 == 0);
    case ValueType::Int64: return Value(integer(rng));
    case ValueType::Float64: return Value(real(rng) * std::pow(10.0, double(int(rng() % 40)) - 20.0));
    case ValueType::Text: {
      static const std::vector<std::string> alphabet{"a", "b", "c", " ", "X", "\"", "\\", "/", "\n", "\t", "é", "中"};
      std::string s;
      for (int i = int(rng() % 12); i > 0; --i) s += alphabet[rng() % alphabet.size()];
      return Value(s);
    }
    case ValueType::Enum: return Value(EnumSymbol{kind.symbols[rng() % kind.symbols.size()]});
    case ValueType::Vector3: return Value(Eigen::Vector3d(real(rng), real(rng), real(rng)));
    case ValueType::Vector4: {
      Eigen::Vector4d q(real(rng), real(rng), real(rng), real(rng));
      return Value(Eigen::Vector4d(q.normalized()));
    }
    case ValueType::Matrix3: {
      Eigen::Matrix3d m;
      for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = real(rng);
      return Value(m);
    }
  }
  return Value();
}

}  // namespace

TEST_CASE("kind names round-trip") {
  for (const auto& kind : all_kinds()) {
    CHECK(ValueKind::from_name(kind.name(), kind.symbols) == kind);
  }
  CHECK(ValueKind::vector3().name() == "float64[3]");
  CHECK(ValueKind::matrix3().name() == "float64[3x3]");
  CHECK_THROWS(ValueKind::from_name("float32"));
}

TEST_CASE("enum kinds compare their symbols") {
  CHECK(ValueKind::enumeration({"A", "B"}) != ValueKind::enumeration({"B", "A"}));
  CHECK(ValueKind::enumeration({"A"}).admits("A"));
  CHECK_FALSE(ValueKind::enumeration({"A"}).admits("B"));
}

TEST_CASE("typed decoding is strict") {
  CHECK(value_from_json(json(3), ValueKind::float64()) == Value(3.0));
  CHECK_THROWS_AS(value_from_json(json(3.5), ValueKind::int64()), ValueError);
  CHECK_THROWS_AS(value_from_json(json("1"), ValueKind::int64()), ValueError);
  CHECK_THROWS_AS(value_from_json(json(true), ValueKind::int64()), ValueError);
  CHECK_THROWS_AS(value_from_json(json("PURPLE"), ValueKind::enumeration(kSymbols)), ValueError);
  CHECK_THROWS_AS(value_from_json(json::array({1, 2}), ValueKind::vector3()), ValueError);
  CHECK_THROWS_AS(value_from_json(json::array({1, 2, 3}), ValueKind::vector4()), ValueError);
  CHECK_THROWS_AS(value_from_json(json::array({json::array({1, 2, 3}), json::array({1, 2, 3})}), ValueKind::matrix3()),
                  ValueError);
}

TEST_CASE("untyped decoding infers the natural kind") {
  CHECK(value_from_json(json(7)).type() == ValueType::Int64);
  CHECK(value_from_json(json(7.5)).type() == ValueType::Float64);
  CHECK(value_from_json(json("x")).type() == ValueType::Text);
  CHECK(value_from_json(json::array({1.0, 2.0, 3.0})).type() == ValueType::Vector3);
  CHECK(value_from_json(json::array({1.0, 0.0, 0.0, 0.0})).type() == ValueType::Vector4);
}

TEST_CASE("quaternion and covariance validity") {
  CHECK(is_unit_quaternion(identity_quaternion()));
  CHECK_FALSE(is_unit_quaternion(Eigen::Vector4d(1, 1, 0, 0)));
  CHECK(is_valid_covariance(Eigen::Matrix3d::Identity()));
  Eigen::Matrix3d asym = Eigen::Matrix3d::Identity();
  asym(0, 1) = 0.5;
  CHECK_FALSE(is_valid_covariance(asym));
  CHECK_FALSE(is_valid_covariance(-Eigen::Matrix3d::Identity()));
}

TEST_CASE("envelope layout is canonical") {
  Metadata meta;
  meta.timestamp_ns = 1700000000000000000;
  meta.nonce = "n1";
  CHECK(serialize_envelope(Value("INACTIVE"), meta) ==
        R"({"meta":{"nonce":"n1","ts":1700000000000000000},"value":"INACTIVE"})");
  meta.covariance = Eigen::Matrix3d::Identity() * 1e-10;
  CHECK(serialize_envelope(Value(Eigen::Vector3d(1, 2, 3)), meta) ==
        R"({"meta":{"cov":[[1e-10,0.0,0.0],[0.0,1e-10,0.0],[0.0,0.0,1e-10]],"nonce":"n1","ts":1700000000000000000},)"
        R"("value":[1.0,2.0,3.0]})");
  CHECK(serialize_envelope(ActionResponse::error(errc::not_found, "nope")) ==
        R"({"error":{"code":"not_found","message":"nope"}})");
  CHECK(serialize_envelope(ActionResult{ValueMap{}, Metadata{5, "x", std::nullopt}}) ==
        R"({"meta":{"nonce":"x","ts":5},"value":{}})");
}

TEST_CASE("property: envelopes round-trip for every kind") {
  std::mt19937_64 rng(2024);
  for (const auto& kind : all_kinds()) {
    for (int i = 0; i < 300; ++i) {
      const Value v = random_value(kind, rng);
      Metadata meta;
      meta.timestamp_ns = std::int64_t(rng() >> 2);
      meta.nonce = std::to_string(rng());
      if (kind.type == ValueType::Vector3 && i % 2 == 0) {
        Eigen::Matrix3d a = Eigen::Matrix3d::Random();
        meta.covariance = a * a.transpose();
      }
      const auto text = serialize_envelope(v, meta);
      const auto back = deserialize_response(text, kind);
      REQUIRE(back.ok());
      CHECK(std::get<Value>(back.result().value) == v);
      CHECK(back.result().meta == meta);
      CHECK(serialize_envelope(back) == text);
    }
  }
}

TEST_CASE("property: function results round-trip through their signature") {
  std::mt19937_64 rng(99);
  ParamList returns{{"a", ValueKind::int64()}, {"b", ValueKind::vector3()}, {"c", ValueKind::enumeration(kSymbols)}};
  for (int i = 0; i < 200; ++i) {
    ValueMap m;
    for (const auto& p : returns) m[p.name] = random_value(p.kind, rng);
    ActionResult r{m, Metadata{std::int64_t(i), "nonce" + std::to_string(i), std::nullopt}};
    const auto text = serialize_envelope(r);
    const auto back = deserialize_response(text, std::nullopt, &returns);
    REQUIRE(back.ok());
    CHECK(std::get<ValueMap>(back.result().value) == m);
    CHECK(serialize_envelope(back) == text);
  }
}

TEST_CASE("error envelopes round-trip") {
  const auto text = serialize_envelope(ActionResponse::error(errc::unavailable, "down \"hard\""));
  const auto back = deserialize_response(text);
  REQUIRE_FALSE(back.ok());
  CHECK(back.error() == ActionError{"unavailable", "down \"hard\""});
}

TEST_CASE("malformed envelopes are bad payloads") {
  for (const char* text : {"", "{", "[]", R"({"value":1})", R"({"meta":{"ts":0},"value":1})",
                           R"({"meta":{"nonce":"","ts":"0"},"value":1})", R"({"error":{"code":"x"}})"}) {
    CAPTURE(text);
    CHECK_THROWS_AS(deserialize_response(text, ValueKind::int64()), ActionException);
  }
}

TEST_CASE("request payloads are checked against the parameters") {
  const ParamList expected{{"count", ValueKind::int64()}, {"mode", ValueKind::enumeration(kSymbols)}};
  auto ok = deserialize_payload(R"({"count":3,"mode":"RED","nonce":"n"})", expected);
  CHECK(ok.at("count") == Value(std::int64_t{3}));
  CHECK(ok.at("nonce") == Value("n"));
  auto code_of = [&](std::string_view body) {
    try {
      deserialize_payload(body, expected);
    } catch (const ActionException& e) {
      return e.code();
    }
    return std::string("ok");
  };
  CHECK(code_of(R"({"count":3})") == "bad_payload");
  CHECK(code_of(R"({"count":3,"mode":"RED","extra":1})") == "bad_payload");
  CHECK(code_of(R"({"count":"3","mode":"RED"})") == "bad_payload");
  CHECK(code_of(R"({"count":3,"mode":"RED","nonce":5})") == "bad_payload");
  CHECK(code_of("not json") == "bad_payload");
  CHECK(code_of("[1]") == "bad_payload");
}
