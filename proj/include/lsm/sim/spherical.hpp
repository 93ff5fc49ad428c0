// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <random>

namespace lsm::sim {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/// Raw tracker observation: distance in metres, azimuth in (-pi, pi],
/// elevation in [-pi/2, pi/2], both in radians.
template <typename Scalar>
struct SphericalReading {
  Scalar distance{0};
  Scalar azimuth{0};
  Scalar elevation{0};
};

/// Standard deviations of the distance meter and the two angle encoders.
template <typename Scalar>
struct TrackerNoise {
  Scalar sigma_distance{0};
  Scalar sigma_azimuth{0};
  Scalar sigma_elevation{0};

  bool valid() const { return sigma_distance > 0 && sigma_azimuth > 0 && sigma_elevation > 0; }
};

template <typename Scalar>
Vector3<Scalar> spherical_to_cartesian(const SphericalReading<Scalar>& r) {
  using std::cos;
  using std::sin;
  const Scalar horizontal = r.distance * cos(r.elevation);
  return {horizontal * cos(r.azimuth), horizontal * sin(r.azimuth), r.distance * sin(r.elevation)};
}

template <typename Scalar>
SphericalReading<Scalar> cartesian_to_spherical(const Vector3<Scalar>& p) {
  using std::atan2;
  using std::sqrt;
  const Scalar horizontal = sqrt(p.x() * p.x() + p.y() * p.y());
  SphericalReading<Scalar> r;
  r.distance = p.norm();
  r.azimuth = atan2(p.y(), p.x());
  r.elevation = atan2(p.z(), horizontal);
  return r;
}

/// d(x, y, z) / d(distance, azimuth, elevation).
template <typename Scalar>
Matrix3<Scalar> spherical_jacobian(const SphericalReading<Scalar>& r) {
  using std::cos;
  using std::sin;
  const Scalar ca = cos(r.azimuth), sa = sin(r.azimuth);
  const Scalar ce = cos(r.elevation), se = sin(r.elevation);
  const Scalar d = r.distance;
  Matrix3<Scalar> j;
  j << ce * ca, -d * ce * sa, -d * se * ca,
       ce * sa,  d * ce * ca, -d * se * sa,
       se,       Scalar(0),    d * ce;
  return j;
}

/// First-order propagation of encoder and distance noise to a Cartesian
/// position covariance (m^2).
template <typename Scalar>
Matrix3<Scalar> covariance_propagate(const SphericalReading<Scalar>& r, const TrackerNoise<Scalar>& n) {
  const Matrix3<Scalar> j = spherical_jacobian(r);
  const Vector3<Scalar> variances(n.sigma_distance * n.sigma_distance, n.sigma_azimuth * n.sigma_azimuth,
                                  n.sigma_elevation * n.sigma_elevation);
  const Matrix3<Scalar> sigma = j * variances.asDiagonal() * j.transpose();
  return (sigma + sigma.transpose()) / Scalar(2);
}

/// The search routine locks on when the target lies within `radius` of the
/// last known position (inclusive).
template <typename Scalar>
bool tracker_search(const Vector3<Scalar>& last_known, const Vector3<Scalar>& true_position, Scalar radius) {
  return (last_known - true_position).norm() <= radius;
}

template <typename Scalar>
struct TrackerMeasurement {
  Vector3<Scalar> position;
  Matrix3<Scalar> covariance;
  SphericalReading<Scalar> raw;
};

/// Noisy observation of `true_position` (tracker frame). Noise is added per
/// spherical axis; the covariance belongs to the noiseless reading.
template <typename Scalar, class Rng>
TrackerMeasurement<Scalar> tracker_measure(const Vector3<Scalar>& true_position, const TrackerNoise<Scalar>& noise,
                                           Rng& rng) {
  const auto exact = cartesian_to_spherical(true_position);
  std::normal_distribution<double> unit(0.0, 1.0);
  SphericalReading<Scalar> noisy = exact;
  // Zero sigmas draw nothing so noiseless setups stay bit-exact.
  if (noise.sigma_distance > 0) noisy.distance += noise.sigma_distance * Scalar(unit(rng));
  if (noise.sigma_azimuth > 0) noisy.azimuth += noise.sigma_azimuth * Scalar(unit(rng));
  if (noise.sigma_elevation > 0) noisy.elevation += noise.sigma_elevation * Scalar(unit(rng));

  TrackerMeasurement<Scalar> m;
  m.position = (noise.sigma_distance > 0 || noise.sigma_azimuth > 0 || noise.sigma_elevation > 0)
                   ? spherical_to_cartesian(noisy)
                   : true_position;
  m.covariance = covariance_propagate(exact, noise);
  m.raw = noisy;
  return m;
}

}  // namespace lsm::sim
