// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/lsm_model.hpp"
#include "lsm/sim/spherical.hpp"

#include <map>
#include <random>

namespace lsm::sim {

struct LaserTrackerOptions {
  TrackerNoise<double> noise{1e-5, 4.848e-6, 4.848e-6};
  double search_radius = 0.05;
  std::uint64_t seed = 1;
};

/// Centralized instrument: one tracker head observing SMRs in spherical
/// coordinates. World positions are mapped into the head frame through the
/// base pose.
class LaserTrackerSim final : public InstrumentBackend, public TrackerHead {
 public:
  explicit LaserTrackerSim(LaserTrackerOptions options = {});

  bool centralized() const override { return true; }
  void add_base(const BaseStationSpec& spec) override;
  void set_base_active(const std::string& base, bool active) override;
  void add_target(const TargetSpec& spec) override;
  void remove_target(const std::string& target) override;
  bool search(const std::string& target, const Eigen::Vector3d& last_known) override;
  void release(const std::string& target) override;
  Measurement measure(const std::string& target) override;
  Eigen::Matrix3d model_covariance(const Eigen::Vector3d& position) const override;
  void advance(std::int64_t dt_ns) override;
  TrackerHead* tracker_head(const std::string& base) override;

  void jog(double d_azimuth, double d_elevation) override;
  Eigen::Vector3d beam_direction() const override;
  void set_camera(bool on) override { camera_ = on; }
  bool camera() const override { return camera_; }

  /// Moves a target without the instrument noticing; breaks the lock when the
  /// target leaves the search radius.
  void displace(const std::string& target, const Eigen::Vector3d& offset);
  Eigen::Vector3d true_position(const std::string& target) const;
  bool locked(const std::string& target) const;

 private:
  struct Target {
    Eigen::Vector3d position;
    Eigen::Vector3d velocity;
    bool locked = false;
  };

  Target& find(const std::string& name);
  const Target& find(const std::string& name) const;
  Eigen::Vector3d to_head(const Eigen::Vector3d& world) const;
  Eigen::Matrix3d rotation() const;
  void point_at(const Eigen::Vector3d& head_frame);

  LaserTrackerOptions options_;
  std::mt19937_64 rng_;
  std::string base_;
  Pose base_pose_;
  bool base_active_ = true;
  std::map<std::string, Target> targets_;
  double azimuth_ = 0.0, elevation_ = 0.0;
  bool camera_ = false;
};

}  // namespace lsm::sim
