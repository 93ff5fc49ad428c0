// SPDX-License-Identifier: Apache-2.0
#include "lsm/config.hpp"

#include "lsm/action_pipeline.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace lsm {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ConfigError(path + ": " + message);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) fail(join(path, key), "unknown key");
  }
}

const json* optional_field(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

const json& required_field(const json& j, const std::string& path, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) fail(join(path, key), "missing");
  return *it;
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected text");
  return j.get<std::string>();
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

double positive(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (!(v > 0)) fail(path, "must be positive");
  return v;
}

std::uint64_t unsigned_integer(const json& j, const std::string& path, std::uint64_t max) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    fail(path, "expected a non-negative integer");
  }
  const auto v = j.get<std::uint64_t>();
  if (v > max) fail(path, "out of range");
  return v;
}

template <int N>
Eigen::Matrix<double, N, 1> vector(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != N) fail(path, "expected " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

std::map<std::string, std::string> string_map(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : j.items()) out[key] = text(value, join(path, key));
  return out;
}

std::string name(const json& j, const std::string& path) {
  auto n = text(required_field(j, path, "name"), join(path, "name"));
  if (!ResourceId::valid_segment(n)) fail(join(path, "name"), "'" + n + "' is not a valid identifier");
  return n;
}

json vec_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

InstrumentConfig parse_instrument(const json& j) {
  const std::string path = "instrument";
  only_keys(j, path, {"kind", "bases", "targets", "noise", "rate_hz", "search_radius"});
  InstrumentConfig out;
  const auto kind = text(required_field(j, path, "kind"), "instrument.kind");
  if (kind == "laser_tracker") {
    out.kind = InstrumentKind::LaserTracker;
  } else if (kind == "multilateration") {
    out.kind = InstrumentKind::Multilateration;
  } else {
    fail("instrument.kind", "expected laser_tracker or multilateration, got '" + kind + "'");
  }

  if (const auto* noise = optional_field(j, "noise")) {
    if (out.kind == InstrumentKind::LaserTracker) {
      only_keys(*noise, "instrument.noise", {"sigma_d", "sigma_az", "sigma_el"});
      if (const auto* v = optional_field(*noise, "sigma_d")) out.sigma_d = positive(*v, "instrument.noise.sigma_d");
      if (const auto* v = optional_field(*noise, "sigma_az")) out.sigma_az = positive(*v, "instrument.noise.sigma_az");
      if (const auto* v = optional_field(*noise, "sigma_el")) out.sigma_el = positive(*v, "instrument.noise.sigma_el");
    } else {
      only_keys(*noise, "instrument.noise", {"sigma_r"});
      if (const auto* v = optional_field(*noise, "sigma_r")) out.sigma_r = positive(*v, "instrument.noise.sigma_r");
    }
  }
  if (const auto* v = optional_field(j, "rate_hz")) out.rate_hz = positive(*v, "instrument.rate_hz");
  if (const auto* v = optional_field(j, "search_radius")) out.search_radius = positive(*v, "instrument.search_radius");

  const auto& bases = required_field(j, path, "bases");
  if (!bases.is_array() || bases.empty()) fail("instrument.bases", "expected a non-empty list");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < bases.size(); ++i) {
    const auto p = "instrument.bases[" + std::to_string(i) + "]";
    only_keys(bases[i], p, {"name", "position", "quaternion"});
    BaseStationSpec b;
    b.name = name(bases[i], p);
    if (!seen.insert(b.name).second) fail(p + ".name", "duplicate '" + b.name + "'");
    if (const auto* v = optional_field(bases[i], "position")) b.pose.position = vector<3>(*v, p + ".position");
    if (const auto* v = optional_field(bases[i], "quaternion")) {
      b.pose.quaternion = vector<4>(*v, p + ".quaternion");
      if (!is_unit_quaternion(b.pose.quaternion)) fail(p + ".quaternion", "not a unit quaternion");
    }
    out.bases.push_back(std::move(b));
  }

  const auto& targets = required_field(j, path, "targets");
  if (!targets.is_array()) fail("instrument.targets", "expected a list");
  seen.clear();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto p = "instrument.targets[" + std::to_string(i) + "]";
    only_keys(targets[i], p, {"name", "type", "position", "quaternion", "home", "velocity"});
    TargetSpec t;
    t.name = name(targets[i], p);
    if (!seen.insert(t.name).second) fail(p + ".name", "duplicate '" + t.name + "'");
    if (const auto* v = optional_field(targets[i], "type")) t.type = text(*v, p + ".type");
    t.pose.position = vector<3>(required_field(targets[i], p, "position"), p + ".position");
    if (const auto* v = optional_field(targets[i], "quaternion")) {
      t.pose.quaternion = vector<4>(*v, p + ".quaternion");
      if (!is_unit_quaternion(t.pose.quaternion)) fail(p + ".quaternion", "not a unit quaternion");
      t.measures_orientation = true;
    }
    if (const auto* v = optional_field(targets[i], "home")) {
      if (!v->is_boolean()) fail(p + ".home", "expected true or false");
      t.home = v->get<bool>();
    }
    if (const auto* v = optional_field(targets[i], "velocity")) t.velocity = vector<3>(*v, p + ".velocity");
    out.targets.push_back(std::move(t));
  }
  return out;
}

std::uint16_t port(const json& j, const std::string& path) {
  return static_cast<std::uint16_t>(unsigned_integer(j, path, 65535));
}

}  // namespace

ServiceConfig parse_config(const json& j) {
  only_keys(j, "", {"device_id", "manufacturer", "seed", "clock", "tick_ms", "instrument", "adapters", "policy"});
  ServiceConfig c;
  c.device_id = text(required_field(j, "", "device_id"), "device_id");
  if (!ResourceId::valid_segment(c.device_id)) fail("device_id", "'" + c.device_id + "' is not a valid identifier");
  if (const auto* v = optional_field(j, "manufacturer")) c.manufacturer = text(*v, "manufacturer");
  if (const auto* v = optional_field(j, "seed")) c.seed = unsigned_integer(*v, "seed", UINT64_MAX);
  if (const auto* v = optional_field(j, "clock")) {
    const auto clock = text(*v, "clock");
    if (clock != "system" && clock != "virtual") fail("clock", "expected system or virtual, got '" + clock + "'");
    c.virtual_clock = clock == "virtual";
  }
  if (const auto* v = optional_field(j, "tick_ms")) {
    c.tick_ms = static_cast<std::uint32_t>(unsigned_integer(*v, "tick_ms", 60'000));
    if (c.tick_ms == 0) fail("tick_ms", "must be positive");
  }
  c.instrument = parse_instrument(required_field(j, "", "instrument"));

  if (const auto* adapters = optional_field(j, "adapters")) {
    only_keys(*adapters, "adapters", {"http", "mqtt"});
    if (const auto* h = optional_field(*adapters, "http")) {
      only_keys(*h, "adapters.http", {"host", "port", "tokens", "anonymous_user"});
      HttpConfig http;
      if (const auto* v = optional_field(*h, "host")) http.host = text(*v, "adapters.http.host");
      if (const auto* v = optional_field(*h, "port")) http.port = port(*v, "adapters.http.port");
      if (const auto* v = optional_field(*h, "tokens")) http.tokens = string_map(*v, "adapters.http.tokens");
      if (const auto* v = optional_field(*h, "anonymous_user")) http.anonymous_user = text(*v, "adapters.http.anonymous_user");
      c.http = std::move(http);
    }
    if (const auto* m = optional_field(*adapters, "mqtt")) {
      only_keys(*m, "adapters.mqtt", {"host", "port", "credentials", "anonymous_user"});
      MqttConfig mqtt;
      if (const auto* v = optional_field(*m, "host")) mqtt.host = text(*v, "adapters.mqtt.host");
      if (const auto* v = optional_field(*m, "port")) mqtt.port = port(*v, "adapters.mqtt.port");
      if (const auto* v = optional_field(*m, "credentials")) mqtt.credentials = string_map(*v, "adapters.mqtt.credentials");
      if (const auto* v = optional_field(*m, "anonymous_user")) mqtt.anonymous_user = text(*v, "adapters.mqtt.anonymous_user");
      c.mqtt = std::move(mqtt);
    }
  }
  if (c.http && c.mqtt && c.http->port != 0 && c.http->port == c.mqtt->port) {
    fail("adapters.mqtt.port", "same port as adapters.http.port");
  }

  Policy policy;
  if (const auto* p = optional_field(j, "policy")) {
    if (!p->is_array()) fail("policy", "expected a list of rules");
    for (std::size_t i = 0; i < p->size(); ++i) {
      const auto path = "policy[" + std::to_string(i) + "]";
      auto line = text((*p)[i], path);
      try {
        policy.add(Policy::parse_rule(line));
      } catch (const std::exception& e) {
        fail(path, e.what());
      }
      c.policy.push_back(std::move(line));
    }
  }
  auto check_user = [&](const std::string& user, const std::string& path) {
    if (!policy.knows(user)) fail(path, "user '" + user + "' has no policy rule");
  };
  if (c.http) {
    for (const auto& [token, user] : c.http->tokens) check_user(user, "adapters.http.tokens." + token);
    if (c.http->anonymous_user) check_user(*c.http->anonymous_user, "adapters.http.anonymous_user");
  }
  if (c.mqtt) {
    for (const auto& [user, password] : c.mqtt->credentials) check_user(user, "adapters.mqtt.credentials." + user);
    if (c.mqtt->anonymous_user) check_user(*c.mqtt->anonymous_user, "adapters.mqtt.anonymous_user");
  }
  return c;
}

ServiceConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("<json>: ") + e.what());
  }
  return parse_config(j);
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

json render_config(const ServiceConfig& c) {
  json instrument{{"kind", c.instrument.kind == InstrumentKind::LaserTracker ? "laser_tracker" : "multilateration"},
                  {"rate_hz", c.instrument.rate_hz},
                  {"search_radius", c.instrument.search_radius}};
  if (c.instrument.kind == InstrumentKind::LaserTracker) {
    instrument["noise"] = {{"sigma_d", c.instrument.sigma_d},
                           {"sigma_az", c.instrument.sigma_az},
                           {"sigma_el", c.instrument.sigma_el}};
  } else {
    instrument["noise"] = {{"sigma_r", c.instrument.sigma_r}};
  }
  json bases = json::array();
  for (const auto& b : c.instrument.bases) {
    bases.push_back({{"name", b.name}, {"position", vec_json(b.pose.position)}, {"quaternion", vec_json(b.pose.quaternion)}});
  }
  instrument["bases"] = std::move(bases);
  json targets = json::array();
  for (const auto& t : c.instrument.targets) {
    json entry{{"name", t.name}, {"type", t.type}, {"position", vec_json(t.pose.position)}, {"home", t.home}};
    if (t.measures_orientation) entry["quaternion"] = vec_json(t.pose.quaternion);
    if (!t.velocity.isZero()) entry["velocity"] = vec_json(t.velocity);
    targets.push_back(std::move(entry));
  }
  instrument["targets"] = std::move(targets);

  json out{{"device_id", c.device_id},
           {"manufacturer", c.manufacturer},
           {"seed", c.seed},
           {"clock", c.virtual_clock ? "virtual" : "system"},
           {"tick_ms", c.tick_ms},
           {"instrument", std::move(instrument)},
           {"policy", c.policy}};
  json adapters = json::object();
  if (c.http) {
    adapters["http"] = {{"host", c.http->host}, {"port", c.http->port}, {"tokens", c.http->tokens}};
    if (c.http->anonymous_user) adapters["http"]["anonymous_user"] = *c.http->anonymous_user;
  }
  if (c.mqtt) {
    adapters["mqtt"] = {{"host", c.mqtt->host}, {"port", c.mqtt->port}, {"credentials", c.mqtt->credentials}};
    if (c.mqtt->anonymous_user) adapters["mqtt"]["anonymous_user"] = *c.mqtt->anonymous_user;
  }
  out["adapters"] = std::move(adapters);
  return out;
}

DeviceConfig device_config(const ServiceConfig& c) {
  DeviceConfig d;
  d.device_id = c.device_id;
  d.manufacturer = c.manufacturer;
  d.bases = c.instrument.bases;
  d.targets = c.instrument.targets;
  d.rate_hz = c.instrument.rate_hz;
  return d;
}

}  // namespace lsm
