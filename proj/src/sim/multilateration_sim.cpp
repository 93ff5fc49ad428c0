// SPDX-License-Identifier: Apache-2.0
#include "lsm/sim/multilateration_sim.hpp"

namespace lsm::sim {

MultilaterationSim::MultilaterationSim(MultilaterationOptions options) : options_(options), rng_(options.seed) {
  if (!(options_.sigma_range > 0)) throw InvalidConfig("sigma_r: must be positive");
}

void MultilaterationSim::add_base(const BaseStationSpec& spec) {
  if (anchors_.count(spec.name)) throw InvalidConfig("bases: duplicate name '" + spec.name + "'");
  anchors_[spec.name] = Anchor{spec.pose.position, true};
}

void MultilaterationSim::set_base_active(const std::string& base, bool active) {
  auto it = anchors_.find(base);
  if (it == anchors_.end()) throw ActionException(std::string(errc::not_found), "no base station '" + base + "'");
  it->second.active = active;
}

void MultilaterationSim::add_target(const TargetSpec& spec) {
  if (tags_.count(spec.name)) throw InvalidConfig("targets: duplicate name '" + spec.name + "'");
  tags_[spec.name] = Tag{spec.pose.position, spec.velocity, spec.pose.position, false};
}

void MultilaterationSim::remove_target(const std::string& target) { tags_.erase(target); }

Anchors<double> MultilaterationSim::active_anchors() const {
  std::vector<Eigen::Vector3d> active;
  for (const auto& [name, a] : anchors_) {
    if (a.active) active.push_back(a.position);
  }
  Anchors<double> out(3, static_cast<Eigen::Index>(active.size()));
  for (std::size_t i = 0; i < active.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = active[i];
  return out;
}

bool MultilaterationSim::search(const std::string& target, const Eigen::Vector3d& last_known) {
  auto it = tags_.find(target);
  if (it == tags_.end()) throw ActionException(std::string(errc::not_found), "no target '" + target + "'");
  // Radio tags need no pointing; acquisition only requires a solvable geometry.
  const auto anchors = active_anchors();
  it->second.locked = anchors_span_space(anchors);
  if (it->second.locked) it->second.estimate = last_known;
  return it->second.locked;
}

void MultilaterationSim::release(const std::string& target) {
  if (auto it = tags_.find(target); it != tags_.end()) it->second.locked = false;
}

Measurement MultilaterationSim::measure(const std::string& target) {
  auto it = tags_.find(target);
  if (it == tags_.end()) throw ActionException(std::string(errc::not_found), "no target '" + target + "'");
  auto& tag = it->second;
  if (!tag.locked) throw ActionException(std::string(errc::invalid_action), "tag '" + target + "' is not active");

  const auto anchors = active_anchors();
  std::normal_distribution<double> noise(0.0, options_.sigma_range);
  VectorX<double> ranges(anchors.cols());
  nlohmann::json raw_ranges = nlohmann::json::array();
  for (Eigen::Index i = 0; i < anchors.cols(); ++i) {
    ranges[i] = (tag.position - anchors.col(i)).norm() + noise(rng_);
    raw_ranges.push_back(ranges[i]);
  }
  const auto fix = gauss_newton_solve<double>(anchors, ranges, tag.estimate, options_.sigma_range);
  tag.estimate = fix.position;

  Measurement out;
  out.position = fix.position;
  out.covariance = fix.covariance;
  out.raw = {{"ranges", raw_ranges}, {"iterations", fix.iterations}};
  return out;
}

Eigen::Matrix3d MultilaterationSim::model_covariance(const Eigen::Vector3d& position) const {
  const auto anchors = active_anchors();
  if (!anchors_span_space(anchors)) return Eigen::Matrix3d::Zero();
  try {
    VectorX<double> ranges = VectorX<double>::Zero(anchors.cols());
    const auto rj = mlat_residual_jacobian<double>(anchors, ranges, position);
    const Eigen::Matrix3d jtj = rj.jacobian.transpose() * rj.jacobian;
    if (condition_number<double, 3>(jtj) > 1e12) return Eigen::Matrix3d::Zero();
    const Eigen::Matrix3d inverse = jtj.ldlt().solve(Eigen::Matrix3d::Identity());
    return options_.sigma_range * options_.sigma_range * (inverse + inverse.transpose()) / 2.0;
  } catch (const MultilaterationError&) {
    return Eigen::Matrix3d::Zero();
  }
}

void MultilaterationSim::advance(std::int64_t dt_ns) {
  const double dt = static_cast<double>(dt_ns) * 1e-9;
  for (auto& [name, t] : tags_) t.position += t.velocity * dt;
}

}  // namespace lsm::sim
