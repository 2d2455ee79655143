#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace plate_support {

struct SO3Projection {
  double distance = 0.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
};

/// Frobenius distance from F to SO(3) and the nearest rotation.
/// R = U diag(1, 1, det(U V^T)) V^T; the smallest singular direction flips
/// when F reverses orientation.
inline SO3Projection dist_SO3(const Eigen::Matrix3d& F) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& U = svd.matrixU();
  const Eigen::Matrix3d& V = svd.matrixV();
  const Eigen::Vector3d s = svd.singularValues();
  const double sign = (U * V.transpose()).determinant() < 0 ? -1.0 : 1.0;
  SO3Projection out;
  out.R = U * Eigen::Vector3d(1.0, 1.0, sign).asDiagonal() * V.transpose();
  const double a = s[0] - 1.0, b = s[1] - 1.0, c = s[2] - sign;
  out.distance = std::sqrt(a * a + b * b + c * c);
  return out;
}

/// W(F) = 1/2 dist^2(F, SO(3)).
inline double elastic_density(const Eigen::Matrix3d& F) {
  const double d = dist_SO3(F).distance;
  return 0.5 * d * d;
}

/// Rotation about a unit axis (Rodrigues).
inline Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace plate_support
