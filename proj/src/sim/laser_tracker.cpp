// SPDX-License-Identifier: Apache-2.0
#include "lsm/sim/laser_tracker.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lsm::sim {

namespace {

Eigen::Matrix3d rotation_of(const Eigen::Vector4d& q) {
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

}  // namespace

LaserTrackerSim::LaserTrackerSim(LaserTrackerOptions options) : options_(options), rng_(options.seed) {
  if (!options_.noise.valid()) throw InvalidConfig("noise: standard deviations must be positive");
  if (!(options_.search_radius > 0)) throw InvalidConfig("search_radius: must be positive");
}

void LaserTrackerSim::add_base(const BaseStationSpec& spec) {
  if (!base_.empty()) throw InvalidConfig("bases: a laser tracker has exactly one head");
  base_ = spec.name;
  base_pose_ = spec.pose;
}

void LaserTrackerSim::set_base_active(const std::string& base, bool active) {
  if (base != base_) throw ActionException(std::string(errc::not_found), "no base station '" + base + "'");
  base_active_ = active;
  if (!active) {
    for (auto& [name, t] : targets_) t.locked = false;
  }
}

void LaserTrackerSim::add_target(const TargetSpec& spec) {
  if (targets_.count(spec.name)) throw InvalidConfig("targets: duplicate name '" + spec.name + "'");
  targets_[spec.name] = Target{spec.pose.position, spec.velocity, false};
}

void LaserTrackerSim::remove_target(const std::string& target) { targets_.erase(target); }

LaserTrackerSim::Target& LaserTrackerSim::find(const std::string& name) {
  auto it = targets_.find(name);
  if (it == targets_.end()) throw ActionException(std::string(errc::not_found), "no target '" + name + "'");
  return it->second;
}

const LaserTrackerSim::Target& LaserTrackerSim::find(const std::string& name) const {
  auto it = targets_.find(name);
  if (it == targets_.end()) throw ActionException(std::string(errc::not_found), "no target '" + name + "'");
  return it->second;
}

Eigen::Matrix3d LaserTrackerSim::rotation() const { return rotation_of(base_pose_.quaternion); }

Eigen::Vector3d LaserTrackerSim::to_head(const Eigen::Vector3d& world) const {
  return rotation().transpose() * (world - base_pose_.position);
}

void LaserTrackerSim::point_at(const Eigen::Vector3d& head_frame) {
  if (head_frame.norm() == 0.0) return;
  const auto r = cartesian_to_spherical<double>(head_frame);
  azimuth_ = r.azimuth;
  elevation_ = r.elevation;
}

bool LaserTrackerSim::search(const std::string& target, const Eigen::Vector3d& last_known) {
  auto& t = find(target);
  point_at(to_head(last_known));
  t.locked = base_active_ && tracker_search<double>(last_known, t.position, options_.search_radius);
  if (t.locked) point_at(to_head(t.position));
  return t.locked;
}

void LaserTrackerSim::release(const std::string& target) {
  if (auto it = targets_.find(target); it != targets_.end()) it->second.locked = false;
}

Measurement LaserTrackerSim::measure(const std::string& target) {
  auto& t = find(target);
  if (!t.locked) throw ActionException(std::string(errc::invalid_action), "target '" + target + "' is not locked on");
  const Eigen::Vector3d local = to_head(t.position);
  const auto m = tracker_measure<double>(local, options_.noise, rng_);
  point_at(local);

  const Eigen::Matrix3d r = rotation();
  Measurement out;
  out.position = r * m.position + base_pose_.position;
  // Exact passthrough for an identity head pose keeps noiseless runs bit-exact.
  if (base_pose_.position.isZero() && r.isIdentity()) out.position = m.position;
  out.covariance = r * m.covariance * r.transpose();
  out.covariance = (out.covariance + out.covariance.transpose()) / 2.0;
  out.raw = {{"distance", m.raw.distance}, {"azimuth", m.raw.azimuth}, {"elevation", m.raw.elevation}};
  return out;
}

Eigen::Matrix3d LaserTrackerSim::model_covariance(const Eigen::Vector3d& position) const {
  const Eigen::Matrix3d r = rotation();
  const Eigen::Matrix3d local = covariance_propagate<double>(cartesian_to_spherical<double>(to_head(position)), options_.noise);
  const Eigen::Matrix3d world = r * local * r.transpose();
  return (world + world.transpose()) / 2.0;
}

void LaserTrackerSim::advance(std::int64_t dt_ns) {
  const double dt = static_cast<double>(dt_ns) * 1e-9;
  for (auto& [name, t] : targets_) {
    if (t.velocity.isZero()) continue;
    t.position += t.velocity * dt;
  }
}

TrackerHead* LaserTrackerSim::tracker_head(const std::string& base) { return base == base_ ? this : nullptr; }

void LaserTrackerSim::jog(double d_azimuth, double d_elevation) {
  if (!std::isfinite(d_azimuth) || !std::isfinite(d_elevation)) {
    throw ActionException(std::string(errc::bad_payload), "jog angles must be finite");
  }
  azimuth_ = wrap_angle(azimuth_ + d_azimuth);
  elevation_ = std::clamp(elevation_ + d_elevation, -std::numbers::pi / 2, std::numbers::pi / 2);
}

Eigen::Vector3d LaserTrackerSim::beam_direction() const {
  return spherical_to_cartesian<double>({1.0, azimuth_, elevation_});
}

void LaserTrackerSim::displace(const std::string& target, const Eigen::Vector3d& offset) {
  auto& t = find(target);
  t.position += offset;
  if (offset.norm() > options_.search_radius) t.locked = false;
}

Eigen::Vector3d LaserTrackerSim::true_position(const std::string& target) const { return find(target).position; }

bool LaserTrackerSim::locked(const std::string& target) const { return find(target).locked; }

}  // namespace lsm::sim
