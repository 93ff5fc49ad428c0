// SPDX-License-Identifier: Apache-2.0
#include "lsm/lsm_model.hpp"

#include "lsm/action_pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace lsm {

namespace {

const std::vector<std::string>& device_state_symbols() {
  static const std::vector<std::string> symbols{"OPERATIONAL", "WARNING", "ERROR", "MAINTENANCE", "SHUTDOWN"};
  return symbols;
}

const std::string kInternal{errc::internal};
const std::string kInvalidAction{errc::invalid_action};
const std::string kBadPayload{errc::bad_payload};
const std::string kForbidden{errc::forbidden};
const std::string kNotFound{errc::not_found};

Signature sig(ParamList args = {}) { return Signature{std::move(args), {}}; }

FunctionPtr function(Signature signature, FunctionNode::Handler handler) {
  return std::make_shared<FunctionNode>(std::move(signature), std::move(handler));
}

VariablePtr variable(ValueKind kind, Value initial, bool writable = false, bool measured = false) {
  return std::make_shared<VariableNode>(std::move(kind), std::move(initial), writable, measured);
}

Signature activate_sig() { return sig({{"active", ValueKind::boolean()}}); }

}  // namespace

// --- enumerations -----------------------------------------------------------

std::string_view to_string(AcquisitionMode mode) { return acquisition_mode_symbols()[static_cast<int>(mode)]; }
std::string_view to_string(EntityState state) { return entity_state_symbols()[static_cast<int>(state)]; }
std::string_view to_string(BaseState state) { return base_state_symbols()[static_cast<int>(state)]; }

const std::vector<std::string>& acquisition_mode_symbols() {
  static const std::vector<std::string> symbols{"CONTINUOUS", "TRIGGERED", "EXTERNAL"};
  return symbols;
}

const std::vector<std::string>& entity_state_symbols() {
  static const std::vector<std::string> symbols{"TRIGGERED", "CONTINUOUS", "INACTIVE", "EXTERNAL",
                                                "WARNING",   "ERROR",      "MAINTENANCE"};
  return symbols;
}

const std::vector<std::string>& base_state_symbols() {
  static const std::vector<std::string> symbols{"ACTIVE", "INACTIVE", "WARNING", "ERROR", "MAINTENANCE"};
  return symbols;
}

std::optional<AcquisitionMode> acquisition_mode_from_string(std::string_view text) {
  const auto& s = acquisition_mode_symbols();
  auto it = std::find(s.begin(), s.end(), text);
  if (it == s.end()) return std::nullopt;
  return static_cast<AcquisitionMode>(it - s.begin());
}

std::optional<EntityState> entity_state_from_string(std::string_view text) {
  const auto& s = entity_state_symbols();
  auto it = std::find(s.begin(), s.end(), text);
  if (it == s.end()) return std::nullopt;
  return static_cast<EntityState>(it - s.begin());
}

EntityState measuring_state(AcquisitionMode mode) {
  switch (mode) {
    case AcquisitionMode::Continuous: return EntityState::Continuous;
    case AcquisitionMode::Triggered: return EntityState::Triggered;
    case AcquisitionMode::External: return EntityState::External;
  }
  return EntityState::Triggered;
}

bool is_measuring(EntityState state) {
  return state == EntityState::Continuous || state == EntityState::Triggered || state == EntityState::External;
}

// --- class definitions ------------------------------------------------------

ClassDefinition calibration_class() { return ClassDefinition{"calibration", {}, {}, {}}; }

ClassDefinition entity_class() {
  auto calibration = std::make_shared<const ClassDefinition>(calibration_class());
  return ClassDefinition{
      "entity",
      {{"activate", activate_sig()},
       {"reset", sig()},
       {"trigger", sig({{"count", ValueKind::int64()}, {"nonce", ValueKind::text()}})},
       {"acquisition", sig({{"mode", ValueKind::enumeration(acquisition_mode_symbols())}, {"nonce", ValueKind::text()}})}},
      {{"name", ValueKind::text()},
       {"position", ValueKind::vector3()},
       {"quaternion", ValueKind::vector4()},
       {"type", ValueKind::text()},
       {"state", ValueKind::enumeration(entity_state_symbols())}},
      {{"calibration", calibration}}};
}

ClassDefinition base_station_class() {
  auto calibration = std::make_shared<const ClassDefinition>(calibration_class());
  return ClassDefinition{"base_station",
                         {{"activate", activate_sig()}},
                         {{"name", ValueKind::text()},
                          {"position", ValueKind::vector3()},
                          {"quaternion", ValueKind::vector4()},
                          {"state", ValueKind::enumeration(base_state_symbols())}},
                         {{"calibration", calibration}}};
}

ClassDefinition lsm_object_class() {
  auto calibration = std::make_shared<const ClassDefinition>(calibration_class());
  auto list = std::make_shared<const ClassDefinition>(ClassDefinition{"list", {}, {}, {}});
  return ClassDefinition{"lsm",
                         {{"reset", sig()}},
                         {},
                         {{"calibration", calibration}, {"bases", list}, {"entities", list}}};
}

ClassDefinition generic_device_class() {
  return ClassDefinition{"device",
                         {{"reset", sig()},
                          {"shutdown", sig()},
                          {"add_raw_data_client", sig()},
                          {"remove_raw_data_client", sig()}},
                         {{"state", ValueKind::enumeration(device_state_symbols())},
                          {"manufacturer", ValueKind::text()},
                          {"api_version", ValueKind::int64()},
                          {"system_time", ValueKind::int64()}},
                         {{"lsm", std::make_shared<const ClassDefinition>(lsm_object_class())}}};
}

// --- Device -----------------------------------------------------------------

Device::Device(DeviceConfig config, std::shared_ptr<InstrumentBackend> backend, DeviceOptions options)
    : config_(std::move(config)), backend_(std::move(backend)), options_(std::move(options)) {
  if (!backend_) throw InvalidConfig("no instrument backend");
  if (!options_.clock) options_.clock = options_.sim_clock ? std::shared_ptr<Clock>(options_.sim_clock)
                                                           : std::make_shared<SystemClock>();
  if (!options_.nonces) options_.nonces = std::make_shared<NonceSource>();

  if (!ResourceId::valid_segment(config_.device_id)) throw InvalidConfig("device_id: '" + config_.device_id + "' is not a valid identifier");
  if (config_.bases.empty()) throw InvalidConfig("bases: at least one base station is required");
  if (!(config_.rate_hz > 0)) throw InvalidConfig("rate_hz: must be positive");
  if (backend_->centralized() && config_.bases.size() != 1) {
    throw InvalidConfig("bases: a centralized instrument has exactly one base station");
  }
  stream_period_ns_ = static_cast<std::int64_t>(std::llround(1e9 / config_.rate_hz));

  std::set<std::string> names;
  for (const auto& b : config_.bases) {
    if (!ResourceId::valid_segment(b.name)) throw InvalidConfig("bases: invalid name '" + b.name + "'");
    if (!names.insert(b.name).second) throw InvalidConfig("bases: duplicate name '" + b.name + "'");
    if (!is_unit_quaternion(b.pose.quaternion)) throw InvalidConfig("bases: quaternion of '" + b.name + "' is not unit");
  }
  names.clear();
  std::size_t homes = 0;
  for (const auto& t : config_.targets) {
    if (!ResourceId::valid_segment(t.name)) throw InvalidConfig("targets: invalid name '" + t.name + "'");
    if (!names.insert(t.name).second) throw InvalidConfig("targets: duplicate name '" + t.name + "'");
    if (!is_unit_quaternion(t.pose.quaternion)) throw InvalidConfig("targets: quaternion of '" + t.name + "' is not unit");
    if (t.home) {
      ++homes;
      home_ = t.name;
    }
  }
  if (homes > 1) throw InvalidConfig("targets: more than one home target");
  if (backend_->centralized() && homes != 1) throw InvalidConfig("targets: a centralized instrument needs exactly one home target");

  try {
    for (const auto& b : config_.bases) backend_->add_base(b);
    for (const auto& t : config_.targets) backend_->add_target(t);
  } catch (const InvalidConfig&) {
    throw;
  } catch (const std::exception& e) {
    throw InvalidConfig(e.what());
  }

  build_tree();
  for (auto& [name, b] : bases_) {
    if (backend_->tracker_head(name)) extend_tracker_head(name);
  }
  reset_instrument();
}

Metadata Device::meta(const std::string& nonce) {
  Metadata m;
  m.timestamp_ns = options_.clock->now_ns();
  m.nonce = nonce;
  return m;
}

std::string Device::nonce_or_new(const std::string& nonce) { return nonce.empty() ? options_.nonces->next() : nonce; }

ObjectPtr Device::make_calibration_node() const {
  auto node = std::make_shared<ObjectNode>();
  node->add("status", variable(ValueKind::text(), Value("uncalibrated")));
  return node;
}

void Device::build_tree() {
  root_ = std::make_shared<ObjectNode>();

  root_->add("reset", function(sig(), [this](const ValueMap&, CallContext& ctx) {
               reset_instrument(ctx.nonce);
               device_state_->store(EnumSymbol{"OPERATIONAL"}, meta(ctx.nonce));
               return FunctionResult{};
             }));
  root_->add("shutdown", function(sig(), [this](const ValueMap&, CallContext& ctx) {
               {
                 std::lock_guard lock(mutex_);
                 shutdown_ = true;
               }
               device_state_->store(EnumSymbol{"SHUTDOWN"}, meta(ctx.nonce));
               if (options_.on_shutdown) options_.on_shutdown();
               return FunctionResult{};
             }));
  auto raw_client = [this](bool add) {
    return [this, add](const ValueMap&, CallContext& ctx) {
      if (!registry_) throw ActionException(kInternal, "raw data stream is not connected");
      if (!ctx.recipient) throw ActionException(kBadPayload, "raw data clients need a publish/subscribe transport");
      const auto id = ResourceId::parse("raw_data");
      if (add) {
        registry_->subscribe(id, ctx.recipient);
      } else {
        registry_->unsubscribe(id, ctx.recipient);
      }
      return FunctionResult{};
    };
  };
  root_->add("add_raw_data_client", function(sig(), raw_client(true)));
  root_->add("remove_raw_data_client", function(sig(), raw_client(false)));

  device_state_ = variable(ValueKind::enumeration(device_state_symbols()), EnumSymbol{"OPERATIONAL"});
  root_->add("state", device_state_);
  root_->add("manufacturer", variable(ValueKind::text(), Value(config_.manufacturer)));
  root_->add("api_version", variable(ValueKind::int64(), Value(std::int64_t{1})));
  system_time_ = variable(ValueKind::int64(), Value(std::int64_t{0}));
  system_time_->set_refresher([this] {
    const auto now = options_.clock->now_ns();
    if (system_time_->snapshot().value != Value(now)) system_time_->store(Value(now), meta(options_.nonces->next()));
  });
  root_->add("system_time", system_time_);
  raw_data_ = variable(ValueKind::text(), Value("{}"));
  root_->add("raw_data", raw_data_);

  if (options_.sim_clock) {
    root_->add("advance_clock", function(sig({{"dt_ns", ValueKind::int64()}}), [this](const ValueMap& args, CallContext&) {
                 const auto dt = args.at("dt_ns").get<std::int64_t>();
                 if (dt < 0) throw ActionException(kBadPayload, "dt_ns must not be negative");
                 step_simulation(dt);
                 return FunctionResult{};
               }));
  }

  auto lsm = std::make_shared<ObjectNode>();
  root_->add("lsm", lsm);
  lsm->add("reset", function(sig(), [this](const ValueMap&, CallContext& ctx) {
             reset_instrument(ctx.nonce);
             return FunctionResult{};
           }));
  lsm->add("calibration", make_calibration_node());

  auto bases = std::make_shared<ObjectNode>();
  lsm->add("bases", bases);
  for (const auto& spec : config_.bases) {
    auto& b = bases_[spec.name];
    b.spec = spec;
    bases->add(spec.name, make_base_node(b));
  }

  entities_node_ = std::make_shared<ObjectNode>();
  lsm->add("entities", entities_node_);
  for (const auto& spec : config_.targets) {
    auto& e = entities_[spec.name];
    e.spec = spec;
    e.last_known = spec.pose.position;
    entities_node_->add(spec.name, make_entity_node(e));
  }

  entities_node_->set_create_handler(
      {{"name", ValueKind::text()}, {"type", ValueKind::text()}, {"position", ValueKind::vector3()}},
      [this](const ValueMap& args, CallContext& ctx) {
        TargetSpec spec;
        spec.name = args.at("name").get<std::string>();
        spec.type = args.at("type").get<std::string>();
        spec.pose.position = args.at("position").get<Eigen::Vector3d>();
        if (!ResourceId::valid_segment(spec.name)) throw ActionException(kBadPayload, "invalid entity name '" + spec.name + "'");
        std::lock_guard lock(mutex_);
        if (entities_.count(spec.name)) throw ActionException(kBadPayload, "entity '" + spec.name + "' already exists");
        backend_->add_target(spec);
        auto& e = entities_[spec.name];
        e.spec = spec;
        e.last_known = spec.pose.position;
        e.nonce = ctx.nonce;
        auto node = make_entity_node(e);
        store_nominal_pose(e, ctx.nonce);
        return ObjectNode::Created{spec.name, node};
      });
}

ObjectPtr Device::make_base_node(Base& b) {
  auto node = std::make_shared<ObjectNode>();
  const auto name = b.spec.name;
  node->add("activate", function(activate_sig(), [this, name](const ValueMap& args, CallContext& ctx) {
              set_base_active(name, args.at("active").get<bool>(), ctx.nonce);
              return FunctionResult{};
            }));
  node->add("name", variable(ValueKind::text(), Value(name), true));
  node->add("position", variable(ValueKind::vector3(), Value(b.spec.pose.position)));
  node->add("quaternion", variable(ValueKind::vector4(), Value(b.spec.pose.quaternion)));
  b.state_var = variable(ValueKind::enumeration(base_state_symbols()), EnumSymbol{std::string(to_string(b.state))});
  node->add("state", b.state_var);
  node->add("calibration", make_calibration_node());
  b.node = node;
  return node;
}

ObjectPtr Device::make_entity_node(Entity& e) {
  auto node = std::make_shared<ObjectNode>();
  const auto name = e.spec.name;

  node->add("activate", function(activate_sig(), [this, name](const ValueMap& args, CallContext& ctx) {
              activate(name, args.at("active").get<bool>(), ctx.nonce);
              return FunctionResult{};
            }));
  node->add("reset", function(sig(), [this, name](const ValueMap&, CallContext& ctx) {
              reset_entity(name, ctx.nonce);
              return FunctionResult{};
            }));
  node->add("trigger", function(sig({{"count", ValueKind::int64()}, {"nonce", ValueKind::text()}}),
                                [this, name](const ValueMap& args, CallContext&) {
                                  trigger(name, args.at("count").get<std::int64_t>(), args.at("nonce").get<std::string>());
                                  return FunctionResult{};
                                }));
  node->add("acquisition",
            function(sig({{"mode", ValueKind::enumeration(acquisition_mode_symbols())}, {"nonce", ValueKind::text()}}),
                     [this, name](const ValueMap& args, CallContext&) {
                       const auto mode = acquisition_mode_from_string(args.at("mode").get<EnumSymbol>().symbol);
                       set_acquisition(name, *mode, args.at("nonce").get<std::string>());
                       return FunctionResult{};
                     }));
  node->add("inject_trigger", function(sig(), [this, name](const ValueMap&, CallContext&) {
              inject_hardware_trigger(name);
              return FunctionResult{};
            }));

  node->add("name", variable(ValueKind::text(), Value(name), true));
  e.position = variable(ValueKind::vector3(), Value(e.spec.pose.position), false, true);
  node->add("position", e.position);
  const Eigen::Vector4d q = e.spec.measures_orientation ? e.spec.pose.quaternion : identity_quaternion();
  e.quaternion = variable(ValueKind::vector4(), Value(q));
  node->add("quaternion", e.quaternion);
  node->add("type", variable(ValueKind::text(), Value(e.spec.type)));
  e.state_var = variable(ValueKind::enumeration(entity_state_symbols()), EnumSymbol{std::string(to_string(e.state))});
  node->add("state", e.state_var);
  node->add("calibration", make_calibration_node());

  node->set_delete_handler([this, name](CallContext&) {
    std::lock_guard lock(mutex_);
    auto it = entities_.find(name);
    if (it == entities_.end()) throw ActionException(kNotFound, "no entity '" + name + "'");
    if (it->second.spec.home) throw ActionException(kForbidden, "the home entity cannot be removed");
    if (it->second.state != EntityState::Inactive) {
      throw ActionException(kForbidden, "entity '" + name + "' must be inactive to be removed");
    }
    backend_->remove_target(name);
    entities_.erase(it);
  });

  e.node = node;
  return node;
}

void Device::extend_tracker_head(const std::string& name) {
  auto* head = backend_->tracker_head(name);
  if (!head) throw ActionException(kInvalidAction, "base station '" + name + "' is not a laser tracker head");
  auto& b = base(name);
  if (b.camera) return;

  b.beam_direction = variable(ValueKind::vector3(), Value(head->beam_direction()));
  b.camera = variable(ValueKind::boolean(), Value(head->camera()));
  b.node->add("beam_direction", b.beam_direction);
  b.node->add("camera", b.camera);
  b.node->add("jog", function(sig({{"d_azimuth", ValueKind::float64()}, {"d_elevation", ValueKind::float64()}}),
                              [this, name](const ValueMap& args, CallContext& ctx) {
                                std::lock_guard lock(mutex_);
                                auto* h = backend_->tracker_head(name);
                                h->jog(args.at("d_azimuth").get<double>(), args.at("d_elevation").get<double>());
                                base(name).beam_direction->store(Value(h->beam_direction()), meta(ctx.nonce));
                                return FunctionResult{};
                              }));
  b.node->add("set_camera", function(sig({{"on", ValueKind::boolean()}}), [this, name](const ValueMap& args, CallContext& ctx) {
                std::lock_guard lock(mutex_);
                auto* h = backend_->tracker_head(name);
                h->set_camera(args.at("on").get<bool>());
                base(name).camera->store(Value(h->camera()), meta(ctx.nonce));
                return FunctionResult{};
              }));
}

void Device::bind_registry(SubscriptionRegistry* registry) {
  std::lock_guard lock(mutex_);
  registry_ = registry;
}

Device::Entity& Device::entity(const std::string& name) {
  auto it = entities_.find(name);
  if (it == entities_.end()) throw ActionException(kNotFound, "no entity '" + name + "'");
  return it->second;
}

const Device::Entity& Device::entity(const std::string& name) const {
  auto it = entities_.find(name);
  if (it == entities_.end()) throw ActionException(kNotFound, "no entity '" + name + "'");
  return it->second;
}

Device::Base& Device::base(const std::string& name) {
  auto it = bases_.find(name);
  if (it == bases_.end()) throw ActionException(kNotFound, "no base station '" + name + "'");
  return it->second;
}

void Device::set_state(Entity& e, EntityState state, const std::string& nonce) {
  e.state = state;
  e.state_var->store(EnumSymbol{std::string(to_string(state))}, meta(nonce));
}

void Device::store_nominal_pose(Entity& e, const std::string& nonce) {
  Metadata m = meta(nonce);
  m.covariance = backend_->model_covariance(e.spec.pose.position);
  e.position->store(Value(e.spec.pose.position), std::move(m));
  const Eigen::Vector4d q = e.spec.measures_orientation ? e.spec.pose.quaternion : identity_quaternion();
  e.quaternion->store(Value(q), meta(nonce));
}

void Device::deactivate_others(const std::string& keep, const std::string& nonce) {
  for (auto& [name, other] : entities_) {
    if (name == keep) continue;
    if (is_measuring(other.state)) {
      backend_->release(name);
      set_state(other, EntityState::Inactive, nonce);
    }
  }
}

void Device::activate_locked(Entity& e, const std::string& nonce) {
  if (backend_->centralized()) deactivate_others(e.spec.name, nonce);
  if (!backend_->search(e.spec.name, e.last_known)) {
    set_state(e, EntityState::Error, nonce);
    throw ActionException(kInternal, "search failed for '" + e.spec.name + "'");
  }
  e.stream_elapsed_ns = 0;
  set_state(e, measuring_state(e.mode), nonce);
}

void Device::activate(const std::string& name, bool active, const std::string& nonce) {
  std::lock_guard lock(mutex_);
  auto& e = entity(name);
  const auto n = nonce_or_new(nonce);
  if (active) {
    activate_locked(e, n);
  } else {
    backend_->release(name);
    set_state(e, EntityState::Inactive, n);
  }
}

void Device::reset_locked(Entity& e, const std::string& nonce) {
  const bool engaged = is_measuring(e.state) || e.state == EntityState::Error;
  e.last_known = e.spec.pose.position;
  e.mode = AcquisitionMode::Triggered;
  e.nonce = nonce;
  store_nominal_pose(e, nonce);
  if (engaged) {
    activate_locked(e, nonce);
  } else {
    set_state(e, e.state, nonce);
  }
}

void Device::reset_entity(const std::string& name, const std::string& nonce) {
  std::lock_guard lock(mutex_);
  reset_locked(entity(name), nonce_or_new(nonce));
}

void Device::reset_instrument(const std::string& nonce) {
  std::lock_guard lock(mutex_);
  const auto n = nonce_or_new(nonce);
  for (auto& [name, b] : bases_) {
    backend_->set_base_active(name, true);
    b.state = BaseState::Active;
    b.state_var->store(EnumSymbol{std::string(to_string(b.state))}, meta(n));
  }
  for (auto& [name, e] : entities_) {
    backend_->release(name);
    e.last_known = e.spec.pose.position;
    e.mode = AcquisitionMode::Triggered;
    e.nonce = n;
    store_nominal_pose(e, n);
    set_state(e, EntityState::Inactive, n);
  }
  if (!home_.empty()) activate_locked(entity(home_), n);
}

void Device::trigger(const std::string& name, std::int64_t count, const std::string& nonce) {
  if (count < 1) throw ActionException(kBadPayload, "count must be at least 1");
  std::lock_guard lock(mutex_);
  auto& e = entity(name);
  if (!is_measuring(e.state) || e.mode != AcquisitionMode::Triggered) {
    throw ActionException(kInvalidAction, "trigger needs an active entity in TRIGGERED mode; '" + name + "' is " +
                                              std::string(to_string(e.state)));
  }
  e.nonce = nonce_or_new(nonce);
  for (std::int64_t i = 0; i < count; ++i) emit_measurement(e);
}

void Device::set_acquisition(const std::string& name, AcquisitionMode mode, const std::string& nonce) {
  std::lock_guard lock(mutex_);
  auto& e = entity(name);
  e.mode = mode;
  e.nonce = nonce_or_new(nonce);
  if (is_measuring(e.state)) {
    e.stream_elapsed_ns = 0;
    set_state(e, measuring_state(mode), e.nonce);
  }
}

void Device::inject_hardware_trigger(const std::string& name) {
  std::lock_guard lock(mutex_);
  auto& e = entity(name);
  if (!is_measuring(e.state) || e.mode != AcquisitionMode::External) {
    throw ActionException(kInvalidAction, "hardware trigger needs an active entity in EXTERNAL mode; '" + name +
                                              "' is " + std::string(to_string(e.state)));
  }
  emit_measurement(e);
}

void Device::set_base_active(const std::string& name, bool active, const std::string& nonce) {
  std::lock_guard lock(mutex_);
  auto& b = base(name);
  const auto n = nonce_or_new(nonce);
  backend_->set_base_active(name, active);
  b.state = active ? BaseState::Active : BaseState::Inactive;
  b.state_var->store(EnumSymbol{std::string(to_string(b.state))}, meta(n));
  if (!active && backend_->centralized()) {
    for (auto& [ename, e] : entities_) {
      if (!is_measuring(e.state)) continue;
      backend_->release(ename);
      set_state(e, EntityState::Inactive, n);
    }
  }
}

void Device::emit_measurement(Entity& e) {
  Measurement m;
  try {
    m = backend_->measure(e.spec.name);
  } catch (const std::exception& ex) {
    set_state(e, EntityState::Error, e.nonce);
    throw ActionException(kInternal, "measurement of '" + e.spec.name + "' failed: " + ex.what());
  }
  e.last_known = m.position;

  Metadata pm = meta(e.nonce);
  pm.covariance = m.covariance;
  e.position->store(Value(m.position), std::move(pm));
  if (e.spec.measures_orientation) e.quaternion->store(Value(m.quaternion), meta(e.nonce));

  nlohmann::json raw = m.raw;
  raw["entity"] = e.spec.name;
  raw_data_->store(Value(raw.dump()), meta(e.nonce));

  for (auto& [name, b] : bases_) {
    auto* head = backend_->tracker_head(name);
    if (!head || !b.beam_direction) continue;
    const Value direction(head->beam_direction());
    if (b.beam_direction->snapshot().value != direction) b.beam_direction->store(direction, meta(e.nonce));
  }
}

void Device::step_simulation(std::int64_t dt_ns) {
  if (dt_ns < 0) throw std::invalid_argument("negative simulation step");
  std::lock_guard lock(mutex_);
  if (options_.sim_clock) options_.sim_clock->advance(dt_ns);
  backend_->advance(dt_ns);
  for (auto& [name, e] : entities_) {
    if (e.state != EntityState::Continuous) continue;
    e.stream_elapsed_ns += dt_ns;
    while (e.stream_elapsed_ns >= stream_period_ns_) {
      e.stream_elapsed_ns -= stream_period_ns_;
      try {
        emit_measurement(e);
      } catch (const std::exception& ex) {
        spdlog::warn("continuous measurement stopped: {}", ex.what());
        break;
      }
    }
  }
}

EntityState Device::state(const std::string& name) const {
  std::lock_guard lock(mutex_);
  return entity(name).state;
}

AcquisitionMode Device::mode(const std::string& name) const {
  std::lock_guard lock(mutex_);
  return entity(name).mode;
}

std::vector<std::string> Device::entity_names() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, e] : entities_) out.push_back(name);
  return out;
}

bool Device::shutdown_requested() const {
  std::lock_guard lock(mutex_);
  return shutdown_;
}

}  // namespace lsm
