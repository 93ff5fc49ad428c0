// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/clock.hpp"
#include "lsm/resource_model.hpp"

#include <Eigen/Core>

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lsm {

class SubscriptionRegistry;

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class AcquisitionMode { Continuous, Triggered, External };
enum class EntityState { Triggered, Continuous, Inactive, External, Warning, Error, Maintenance };
enum class BaseState { Active, Inactive, Warning, Error, Maintenance };

std::string_view to_string(AcquisitionMode mode);
std::string_view to_string(EntityState state);
std::string_view to_string(BaseState state);
std::optional<AcquisitionMode> acquisition_mode_from_string(std::string_view text);
std::optional<EntityState> entity_state_from_string(std::string_view text);

const std::vector<std::string>& acquisition_mode_symbols();
const std::vector<std::string>& entity_state_symbols();
const std::vector<std::string>& base_state_symbols();

/// The state an active entity reports in a given acquisition mode.
EntityState measuring_state(AcquisitionMode mode);
bool is_measuring(EntityState state);

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  /// (w, x, y, z); identity when orientation is not measured.
  Eigen::Vector4d quaternion = identity_quaternion();
};

struct BaseStationSpec {
  std::string name;
  Pose pose;
};

struct TargetSpec {
  std::string name;
  std::string type = "smr";
  Pose pose;
  bool home = false;
  /// Targets that do not measure orientation always report (1, 0, 0, 0).
  bool measures_orientation = false;
  /// Linear motion of the true position in m/s (static when zero).
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
};

struct Measurement {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector4d quaternion = identity_quaternion();
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  /// Instrument-native observation, published on the device raw stream.
  nlohmann::json raw;
};

/// Pointing and camera control of a laser tracker head.
class TrackerHead {
 public:
  virtual ~TrackerHead() = default;
  virtual void jog(double d_azimuth, double d_elevation) = 0;
  /// Unit vector of the beam in the tracker frame.
  virtual Eigen::Vector3d beam_direction() const = 0;
  virtual void set_camera(bool on) = 0;
  virtual bool camera() const = 0;
};

/// Hardware side of an instrument. Implementations need not be thread safe;
/// the device serializes all calls.
class InstrumentBackend {
 public:
  virtual ~InstrumentBackend() = default;

  /// Centralized systems (one measuring station) allow a single active entity.
  virtual bool centralized() const = 0;

  virtual void add_base(const BaseStationSpec& spec) = 0;
  virtual void set_base_active(const std::string& base, bool active) = 0;
  virtual void add_target(const TargetSpec& spec) = 0;
  virtual void remove_target(const std::string& target) = 0;

  /// Runs the search routine from `last_known`; on success the target is locked.
  virtual bool search(const std::string& target, const Eigen::Vector3d& last_known) = 0;
  virtual void release(const std::string& target) = 0;
  /// Throws ActionException(invalid_action) if the target is not locked.
  virtual Measurement measure(const std::string& target) = 0;
  /// Model covariance for a nominal (unmeasured) position.
  virtual Eigen::Matrix3d model_covariance(const Eigen::Vector3d& position) const = 0;

  /// Advances target motion by `dt_ns` of simulated time.
  virtual void advance(std::int64_t dt_ns) = 0;

  virtual TrackerHead* tracker_head(const std::string& /*base*/) { return nullptr; }
};

struct DeviceConfig {
  std::string device_id = "dev1";
  std::string manufacturer = "unknown";
  std::vector<BaseStationSpec> bases;
  std::vector<TargetSpec> targets;
  /// Continuous-mode measurement rate.
  double rate_hz = 10.0;
};

struct DeviceOptions {
  std::shared_ptr<Clock> clock;
  std::shared_ptr<NonceSource> nonces;
  /// When set, simulation steps advance this clock and the device exposes an
  /// `advance_clock` function.
  std::shared_ptr<ManualClock> sim_clock;
  std::function<void()> on_shutdown;
};

ClassDefinition calibration_class();
ClassDefinition entity_class();
ClassDefinition base_station_class();
ClassDefinition lsm_object_class();
ClassDefinition generic_device_class();

/// The instrument's resource tree and the entity state machine behind it.
///
/// Tree layout:
///   reset shutdown add_raw_data_client remove_raw_data_client
///   state manufacturer api_version system_time raw_data
///   lsm/reset lsm/calibration lsm/bases/<base> lsm/entities/<target>
class Device {
 public:
  Device(DeviceConfig config, std::shared_ptr<InstrumentBackend> backend, DeviceOptions options = {});
  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  const ObjectPtr& root() const { return root_; }
  const DeviceConfig& config() const { return config_; }
  InstrumentBackend& backend() { return *backend_; }

  void activate(const std::string& entity, bool active, const std::string& nonce = {});
  void reset_entity(const std::string& entity, const std::string& nonce = {});
  /// Home target logged in and triggered, every other target inactive.
  void reset_instrument(const std::string& nonce = {});
  void trigger(const std::string& entity, std::int64_t count, const std::string& nonce);
  void set_acquisition(const std::string& entity, AcquisitionMode mode, const std::string& nonce);
  /// Hardware trigger pulse; valid for an active entity in EXTERNAL mode.
  void inject_hardware_trigger(const std::string& entity);
  void set_base_active(const std::string& base, bool active, const std::string& nonce = {});

  /// Advances the simulation and emits due continuous-mode measurements.
  void step_simulation(std::int64_t dt_ns);

  /// Adds jog/camera members to a tracker head. Throws
  /// ActionException(invalid_action) for other base stations.
  void extend_tracker_head(const std::string& base);

  /// Registry used by add/remove_raw_data_client; bound once the pipeline exists.
  void bind_registry(SubscriptionRegistry* registry);

  EntityState state(const std::string& entity) const;
  AcquisitionMode mode(const std::string& entity) const;
  std::vector<std::string> entity_names() const;
  bool shutdown_requested() const;

 private:
  struct Entity {
    TargetSpec spec;
    AcquisitionMode mode = AcquisitionMode::Triggered;
    EntityState state = EntityState::Inactive;
    std::string nonce;
    Eigen::Vector3d last_known = Eigen::Vector3d::Zero();
    std::int64_t stream_elapsed_ns = 0;
    ObjectPtr node;
    VariablePtr position, quaternion, state_var;
  };
  struct Base {
    BaseStationSpec spec;
    BaseState state = BaseState::Active;
    ObjectPtr node;
    VariablePtr state_var;
    VariablePtr beam_direction, camera;
  };

  void build_tree();
  ObjectPtr make_entity_node(Entity& entity);
  ObjectPtr make_base_node(Base& base);
  ObjectPtr make_calibration_node() const;

  Entity& entity(const std::string& name);
  const Entity& entity(const std::string& name) const;
  Base& base(const std::string& name);

  Metadata meta(const std::string& nonce);
  std::string nonce_or_new(const std::string& nonce);
  void set_state(Entity& e, EntityState state, const std::string& nonce);
  void deactivate_others(const std::string& keep, const std::string& nonce);
  void activate_locked(Entity& e, const std::string& nonce);
  void emit_measurement(Entity& e);
  void store_nominal_pose(Entity& e, const std::string& nonce);
  void reset_locked(Entity& e, const std::string& nonce);

  DeviceConfig config_;
  std::shared_ptr<InstrumentBackend> backend_;
  DeviceOptions options_;
  std::int64_t stream_period_ns_;

  mutable std::mutex mutex_;
  std::map<std::string, Entity> entities_;
  std::map<std::string, Base> bases_;
  std::string home_;
  bool shutdown_ = false;
  SubscriptionRegistry* registry_ = nullptr;

  ObjectPtr root_;
  ObjectPtr entities_node_;
  VariablePtr device_state_, system_time_, raw_data_;
};

}  // namespace lsm
