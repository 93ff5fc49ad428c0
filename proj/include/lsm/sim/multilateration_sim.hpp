// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/lsm_model.hpp"
#include "lsm/sim/multilateration.hpp"

#include <map>
#include <random>

namespace lsm::sim {

struct MultilaterationOptions {
  double sigma_range = 1e-3;
  std::uint64_t seed = 1;
};

/// Distributed instrument: anchors range to tags, positions come from a
/// Gauss-Newton fix over the active anchors. Every tag may be active at once.
class MultilaterationSim final : public InstrumentBackend {
 public:
  explicit MultilaterationSim(MultilaterationOptions options = {});

  bool centralized() const override { return false; }
  void add_base(const BaseStationSpec& spec) override;
  void set_base_active(const std::string& base, bool active) override;
  void add_target(const TargetSpec& spec) override;
  void remove_target(const std::string& target) override;
  bool search(const std::string& target, const Eigen::Vector3d& last_known) override;
  void release(const std::string& target) override;
  Measurement measure(const std::string& target) override;
  /// Zero when the active anchors cannot fix a position.
  Eigen::Matrix3d model_covariance(const Eigen::Vector3d& position) const override;
  void advance(std::int64_t dt_ns) override;

  Anchors<double> active_anchors() const;

 private:
  struct Anchor {
    Eigen::Vector3d position;
    bool active = true;
  };
  struct Tag {
    Eigen::Vector3d position;
    Eigen::Vector3d velocity;
    Eigen::Vector3d estimate;
    bool locked = false;
  };

  MultilaterationOptions options_;
  std::mt19937_64 rng_;
  std::map<std::string, Anchor> anchors_;
  std::map<std::string, Tag> tags_;
};

}  // namespace lsm::sim
