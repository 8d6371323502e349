// mbslam - SE(3) poses, se(3) twists and joint projection operators
// SPDX-License-Identifier: MIT
//
// Twist ordering convention used throughout the library: xi = (v, w) with the
// linear part first (meters) and the angular part second (radians). Twists of
// objects are expressed in the world frame and act by left multiplication:
//   T(i+1) = exp(xi) * T(i)

#ifndef MBSLAM_CORE_SE3_HPP
#define MBSLAM_CORE_SE3_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <cmath>

#include "mbslam/core/errors.hpp"

namespace mbslam {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// se(3) coordinates, ordered (v, w).
using Twist = Vector6d;

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  // clang-format off
  s <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return s;
}

/// Rigid transform in SE(3), stored as rotation matrix + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) : rotation(r), translation(t) {}

  static Pose identity() { return Pose(); }

  /// Apply to a 3D point: R*p + t (homogeneous transform semantics).
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  Pose operator*(const Pose& other) const {
    return Pose(rotation * other.rotation, rotation * other.translation + translation);
  }

  Pose inverse() const {
    Eigen::Matrix3d rt = rotation.transpose();
    return Pose(rt, -(rt * translation));
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.block<3, 3>(0, 0) = rotation;
    m.block<3, 1>(0, 3) = translation;
    return m;
  }

  static Pose from_matrix(const Eigen::Matrix4d& m) {
    return Pose(m.block<3, 3>(0, 0), m.block<3, 1>(0, 3));
  }

  /// Max-abs deviation of R^T R from identity.
  double orthogonality_error() const {
    return (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
        .cwiseAbs()
        .maxCoeff();
  }

  /// Nearest rotation by polar decomposition (via SVD).
  Pose orthonormalized() const {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(rotation,
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
      Eigen::Matrix3d u = svd.matrixU();
      u.col(2) *= -1.0;
      r = u * svd.matrixV().transpose();
    }
    return Pose(r, translation);
  }
};

namespace detail {

// Series-expanded coefficients of the Rodrigues / V-matrix formulas.
// a = sin(t)/t, b = (1-cos(t))/t^2, c = (t-sin(t))/t^3, evaluated stably
// near t = 0 with second-order Taylor expansions.
struct ExpCoeffs {
  double a, b, c;
};

inline ExpCoeffs exp_coeffs(double theta) {
  ExpCoeffs k{};
  const double t2 = theta * theta;
  if (theta < 1e-8) {
    k.a = 1.0 - t2 / 6.0;
    k.b = 0.5 - t2 / 24.0;
    k.c = 1.0 / 6.0 - t2 / 120.0;
  } else {
    const double s = std::sin(theta);
    const double co = std::cos(theta);
    k.a = s / theta;
    k.b = (1.0 - co) / t2;
    k.c = (theta - s) / (t2 * theta);
  }
  return k;
}

}  // namespace detail

/// SO(3) exponential (Rodrigues).
inline Eigen::Matrix3d exp_so3(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  const auto k = detail::exp_coeffs(theta);
  const Eigen::Matrix3d w = skew(omega);
  return Eigen::Matrix3d::Identity() + k.a * w + k.b * w * w;
}

/// Left Jacobian of SO(3); also the V matrix of the SE(3) exponential.
inline Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  const auto k = detail::exp_coeffs(theta);
  const Eigen::Matrix3d w = skew(omega);
  return Eigen::Matrix3d::Identity() + k.b * w + k.c * w * w;
}

inline Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  const double t2 = theta * theta;
  double d;
  if (theta < 1e-8) {
    d = 1.0 / 12.0 + t2 / 720.0;
  } else {
    d = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  const Eigen::Matrix3d w = skew(omega);
  return Eigen::Matrix3d::Identity() - 0.5 * w + d * w * w;
}

/// SO(3) logarithm. Throws NearPiRotation for angles >= pi - 1e-6.
inline Eigen::Vector3d log_so3(const Eigen::Matrix3d& r) {
  const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta >= M_PI - 1e-6) {
    throw NearPiRotation();
  }
  Eigen::Vector3d v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  double s;
  if (theta < 1e-8) {
    s = 0.5 + theta * theta / 12.0;
  } else {
    s = theta / (2.0 * std::sin(theta));
  }
  return s * v;
}

/// SE(3) exponential map: twist (v, w) -> rigid transform.
inline Pose exp_se3(const Twist& xi) {
  const Eigen::Vector3d v = xi.head<3>();
  const Eigen::Vector3d w = xi.tail<3>();
  return Pose(exp_so3(w), so3_left_jacobian(w) * v);
}

/// SE(3) logarithm. Throws NearPiRotation when the rotation angle is >= pi - 1e-6.
inline Twist log_se3(const Pose& pose) {
  const Eigen::Vector3d w = log_so3(pose.rotation);
  Twist xi;
  xi.head<3>() = so3_left_jacobian_inverse(w) * pose.translation;
  xi.tail<3>() = w;
  return xi;
}

/// Twist mapping T_prev to T_next by left multiplication: log(T_next * T_prev^-1).
inline Twist relative_twist(const Pose& next, const Pose& prev) {
  return log_se3(next * prev.inverse());
}

/// Adjoint of a pose on (v, w)-ordered twists: Ad(T) xi = coords of T exp(xi) T^-1.
inline Matrix6d adjoint(const Pose& pose) {
  Matrix6d ad = Matrix6d::Zero();
  ad.block<3, 3>(0, 0) = pose.rotation;
  ad.block<3, 3>(0, 3) = skew(pose.translation) * pose.rotation;
  ad.block<3, 3>(3, 3) = pose.rotation;
  return ad;
}

namespace detail {

// Q block of the SE(3) left Jacobian (Barfoot-style closed form) for the
// (v, w) ordering, with Taylor fallbacks for small angles.
inline Eigen::Matrix3d se3_jacobian_q(const Eigen::Vector3d& v, const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const double t2 = theta * theta;
  double q2, q3, q4;
  if (theta < 1e-4) {
    q2 = 1.0 / 6.0 - t2 / 120.0;
    q3 = 1.0 / 24.0 - t2 / 720.0;
    q4 = 1.0 / 120.0 - t2 / 2520.0;
  } else {
    const double s = std::sin(theta);
    const double co = std::cos(theta);
    const double t4 = t2 * t2;
    q2 = (theta - s) / (t2 * theta);
    q3 = (t2 + 2.0 * co - 2.0) / (2.0 * t4);
    q4 = (2.0 * theta - 3.0 * s + theta * co) / (2.0 * t4 * theta);
  }
  const Eigen::Matrix3d p = skew(v);
  const Eigen::Matrix3d f = skew(w);
  const Eigen::Matrix3d fp = f * p;
  const Eigen::Matrix3d pf = p * f;
  const Eigen::Matrix3d fpf = fp * f;
  return 0.5 * p + q2 * (fp + pf + fpf) + q3 * (f * fp + pf * f - 3.0 * fpf) +
         q4 * (fpf * f + f * fpf);
}

}  // namespace detail

/// SE(3) left Jacobian: exp(xi + dxi) ~= exp(Jl(xi) dxi) * exp(xi).
inline Matrix6d se3_left_jacobian(const Twist& xi) {
  const Eigen::Vector3d v = xi.head<3>();
  const Eigen::Vector3d w = xi.tail<3>();
  const Eigen::Matrix3d j = so3_left_jacobian(w);
  Matrix6d out = Matrix6d::Zero();
  out.block<3, 3>(0, 0) = j;
  out.block<3, 3>(0, 3) = detail::se3_jacobian_q(v, w);
  out.block<3, 3>(3, 3) = j;
  return out;
}

inline Matrix6d se3_left_jacobian_inverse(const Twist& xi) {
  const Eigen::Vector3d v = xi.head<3>();
  const Eigen::Vector3d w = xi.tail<3>();
  const Eigen::Matrix3d jinv = so3_left_jacobian_inverse(w);
  const Eigen::Matrix3d q = detail::se3_jacobian_q(v, w);
  Matrix6d out = Matrix6d::Zero();
  out.block<3, 3>(0, 0) = jinv;
  out.block<3, 3>(0, 3) = -jinv * q * jinv;
  out.block<3, 3>(3, 3) = jinv;
  return out;
}

/// Right Jacobian inverse, Jr^-1(xi) = Jl^-1(-xi).
inline Matrix6d se3_right_jacobian_inverse(const Twist& xi) {
  return se3_left_jacobian_inverse(-xi);
}

/// Mechanical joint restricting the degrees of freedom of an object twist. The
/// basis holds one orthonormal column per allowed DOF; the projection operator
/// is basis * basis^T.
struct JointModel {
  enum class Kind { kFree, kPlanar, kFixed };

  Kind kind = Kind::kFree;
  Eigen::Matrix<double, 6, Eigen::Dynamic> basis;

  JointModel() : basis(Matrix6d::Identity()) {}

  static JointModel free() { return JointModel(); }

  static JointModel fixed() {
    JointModel j;
    j.kind = Kind::kFixed;
    j.basis.resize(6, 0);
    return j;
  }

  /// Planar joint: translation in the plane plus rotation about its normal.
  static JointModel planar(const Eigen::Vector3d& normal) {
    JointModel j;
    j.kind = Kind::kPlanar;
    const Eigen::Vector3d n = normal.normalized();
    // Any orthonormal pair spanning the plane.
    Eigen::Vector3d u = n.unitOrthogonal();
    Eigen::Vector3d w = n.cross(u);
    j.basis.resize(6, 3);
    j.basis.setZero();
    j.basis.block<3, 1>(0, 0) = u;
    j.basis.block<3, 1>(0, 1) = w;
    j.basis.block<3, 1>(3, 2) = n;
    return j;
  }

  int dof() const { return static_cast<int>(basis.cols()); }

  /// Projection operator as a 6x6 matrix.
  Matrix6d projection_matrix() const {
    if (kind == Kind::kFree) return Matrix6d::Identity();
    return basis * basis.transpose();
  }

  Twist project(const Twist& xi) const {
    if (kind == Kind::kFree) return xi;
    if (kind == Kind::kFixed) return Twist::Zero();
    return basis * (basis.transpose() * xi);
  }
};

inline Twist project_twist(const Twist& xi, const JointModel& joint) {
  return joint.project(xi);
}

}  // namespace mbslam

#endif  // MBSLAM_CORE_SE3_HPP
