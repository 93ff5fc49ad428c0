// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsm/sim/spherical.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <limits>
#include <stdexcept>
#include <string>

namespace lsm::sim {

template <typename Scalar>
using Anchors = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class MultilaterationError : public std::runtime_error {
 public:
  enum class Kind { Singular, DegenerateGeometry, NoConvergence };

  MultilaterationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

template <typename Scalar>
struct ResidualJacobian {
  VectorX<Scalar> residual;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> jacobian;
};

/// residual_i = |x - a_i| - range_i, row i of the Jacobian = (x - a_i)^T / |x - a_i|.
template <typename Scalar>
ResidualJacobian<Scalar> mlat_residual_jacobian(const Anchors<Scalar>& anchors, const VectorX<Scalar>& ranges,
                                                const Vector3<Scalar>& x) {
  const auto n = anchors.cols();
  if (ranges.size() != n) throw std::invalid_argument("one range per anchor required");
  ResidualJacobian<Scalar> out;
  out.residual.resize(n);
  out.jacobian.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector3<Scalar> delta = x - anchors.col(i);
    const Scalar distance = delta.norm();
    if (!(distance > Scalar(0))) {
      throw MultilaterationError(MultilaterationError::Kind::Singular,
                                 "position coincides with anchor " + std::to_string(i));
    }
    out.residual[i] = distance - ranges[i];
    out.jacobian.row(i) = delta.transpose() / distance;
  }
  return out;
}

/// Ratio of largest to smallest eigenvalue of a symmetric PSD matrix.
template <typename Scalar, int N>
Scalar condition_number(const Eigen::Matrix<Scalar, N, N>& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, N, N>> solver(symmetric, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  const Scalar smallest = ev.minCoeff();
  if (!(smallest > Scalar(0))) return std::numeric_limits<Scalar>::infinity();
  return ev.maxCoeff() / smallest;
}

template <typename Scalar>
struct MultilaterationFix {
  Vector3<Scalar> position;
  /// sigma_r^2 (J^T J)^-1 at the solution.
  Matrix3<Scalar> covariance;
  int iterations = 0;
};

struct GaussNewtonOptions {
  double step_tolerance = 1e-12;
  int max_iterations = 50;
  double max_condition = 1e12;
};

/// True unless the anchors are (numerically) coplanar or collinear.
template <typename Scalar>
bool anchors_span_space(const Anchors<Scalar>& anchors, double max_condition = 1e12) {
  if (anchors.cols() < 4) return false;
  const Vector3<Scalar> centroid = anchors.rowwise().mean();
  const Anchors<Scalar> centered = anchors.colwise() - centroid;
  const Matrix3<Scalar> scatter = centered * centered.transpose();
  return condition_number<Scalar, 3>(scatter) <= Scalar(max_condition);
}

/// Undamped Gauss-Newton on the range residuals.
///
/// Throws MultilaterationError: DegenerateGeometry for fewer than four
/// anchors, coplanar anchors or an ill-conditioned normal matrix;
/// NoConvergence when the iteration budget runs out; Singular when an iterate
/// lands on an anchor.
template <typename Scalar>
MultilaterationFix<Scalar> gauss_newton_solve(const Anchors<Scalar>& anchors, const VectorX<Scalar>& ranges,
                                              const Vector3<Scalar>& x0, Scalar sigma_range,
                                              const GaussNewtonOptions& options = {}) {
  using Kind = MultilaterationError::Kind;
  if (anchors.cols() < 4) throw MultilaterationError(Kind::DegenerateGeometry, "at least four anchors required");
  if (!anchors_span_space(anchors, options.max_condition)) {
    throw MultilaterationError(Kind::DegenerateGeometry, "anchors are coplanar");
  }

  auto normal_matrix = [&](const ResidualJacobian<Scalar>& rj) {
    const Matrix3<Scalar> jtj = rj.jacobian.transpose() * rj.jacobian;
    if (condition_number<Scalar, 3>(jtj) > Scalar(options.max_condition)) {
      throw MultilaterationError(Kind::DegenerateGeometry, "normal matrix is ill-conditioned");
    }
    return jtj;
  };

  MultilaterationFix<Scalar> fix;
  fix.position = x0;
  bool converged = false;
  while (fix.iterations < options.max_iterations) {
    const auto rj = mlat_residual_jacobian(anchors, ranges, fix.position);
    const Matrix3<Scalar> jtj = normal_matrix(rj);
    const Vector3<Scalar> step = jtj.ldlt().solve(rj.jacobian.transpose() * rj.residual);
    fix.position -= step;
    ++fix.iterations;
    if (step.norm() < Scalar(options.step_tolerance)) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw MultilaterationError(Kind::NoConvergence,
                               "no convergence after " + std::to_string(options.max_iterations) + " iterations");
  }

  const auto rj = mlat_residual_jacobian(anchors, ranges, fix.position);
  const Matrix3<Scalar> jtj = normal_matrix(rj);
  const Matrix3<Scalar> inverse = jtj.ldlt().solve(Matrix3<Scalar>::Identity());
  fix.covariance = sigma_range * sigma_range * (inverse + inverse.transpose()) / Scalar(2);
  return fix;
}

}  // namespace lsm::sim
