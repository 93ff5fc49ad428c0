// SPDX-License-Identifier: Apache-2.0
#include "lsm/envelope.hpp"

#include <algorithm>

namespace lsm {

using nlohmann::json;

namespace {

json meta_json(const Metadata& meta) {
  json m{{"ts", meta.timestamp_ns}, {"nonce", meta.nonce}};
  if (meta.covariance) m["cov"] = to_json(Value(*meta.covariance));
  return m;
}

json value_map_json(const ValueMap& map) {
  json obj = json::object();
  for (const auto& [k, v] : map) obj[k] = to_json(v);
  return obj;
}

[[noreturn]] void bad(const std::string& message) { throw ActionException(std::string(errc::bad_payload), message); }

json parse(std::string_view bytes) {
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    bad(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

std::string canonical_json(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string serialize_envelope(const Value& value, const Metadata& meta) {
  return canonical_json(json{{"value", to_json(value)}, {"meta", meta_json(meta)}});
}

std::string serialize_envelope(const ActionResponse& response) {
  if (!response.ok()) {
    const auto& e = response.error();
    return canonical_json(json{{"error", {{"code", e.code}, {"message", e.message}}}});
  }
  const auto& r = response.result();
  json value = std::visit(
      [](const auto& v) -> json {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, ValueMap>) {
          return value_map_json(v);
        } else {
          return to_json(v);
        }
      },
      r.value);
  return canonical_json(json{{"value", std::move(value)}, {"meta", meta_json(r.meta)}});
}

ValueMap deserialize_payload(std::string_view bytes, const ParamList& expected,
                             std::initializer_list<std::string_view> optional_extras) {
  json body = bytes.empty() ? json::object() : parse(bytes);
  if (!body.is_object()) bad("payload must be a JSON object");
  ValueMap out;
  for (const auto& p : expected) {
    auto it = body.find(p.name);
    if (it == body.end()) bad("missing argument '" + p.name + "'");
    try {
      out.emplace(p.name, value_from_json(*it, p.kind));
    } catch (const ValueError& e) {
      bad("argument '" + p.name + "': " + e.what());
    }
  }
  for (const auto& [key, v] : body.items()) {
    if (out.count(key) != 0) continue;
    if (std::find(optional_extras.begin(), optional_extras.end(), key) == optional_extras.end()) {
      bad("unexpected argument '" + key + "'");
    }
    if (!v.is_string()) bad("argument '" + key + "' must be text");
    out.emplace(key, v.get<std::string>());
  }
  return out;
}

ActionResponse deserialize_response(std::string_view bytes, const std::optional<ValueKind>& kind,
                                    const ParamList* returns) {
  json doc = parse(bytes);
  if (!doc.is_object()) bad("envelope must be a JSON object");
  try {
    if (doc.contains("error")) {
      const auto& e = doc.at("error");
      if (doc.size() != 1 || !e.is_object() || e.size() != 2) bad("malformed error envelope");
      return ActionError{e.at("code").get<std::string>(), e.at("message").get<std::string>()};
    }
    if (doc.size() != 2 || !doc.contains("value") || !doc.contains("meta")) bad("malformed result envelope");
    const auto& m = doc.at("meta");
    Metadata meta;
    meta.timestamp_ns = m.at("ts").get<std::int64_t>();
    meta.nonce = m.at("nonce").get<std::string>();
    if (m.contains("cov")) meta.covariance = value_from_json(m.at("cov"), ValueKind::matrix3()).get<Eigen::Matrix3d>();
    if (m.size() != (meta.covariance ? 3u : 2u)) bad("unexpected metadata field");

    const auto& v = doc.at("value");
    if (v.is_object()) {
      ValueMap map;
      for (const auto& [key, item] : v.items()) {
        const Param* param = nullptr;
        if (returns) {
          auto it = std::find_if(returns->begin(), returns->end(), [&](const Param& p) { return p.name == key; });
          if (it != returns->end()) param = &*it;
        }
        map.emplace(key, param ? value_from_json(item, param->kind) : value_from_json(item));
      }
      return ActionResult{std::move(map), std::move(meta)};
    }
    return ActionResult{kind ? value_from_json(v, *kind) : value_from_json(v), std::move(meta)};
  } catch (const ValueError& e) {
    bad(e.what());
  } catch (const json::exception& e) {
    bad(std::string("malformed envelope: ") + e.what());
  }
}

}  // namespace lsm
