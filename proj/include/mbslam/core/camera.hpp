// mbslam - pinhole stereo camera model
// SPDX-License-Identifier: MIT

#ifndef MBSLAM_CORE_CAMERA_HPP
#define MBSLAM_CORE_CAMERA_HPP

#include <Eigen/Core>
#include <cmath>

namespace mbslam {

/// Rectified stereo pinhole camera. Observations are (u_left, v, u_right) with
/// a shared scanline; monocular observations use the first two components.
struct StereoCamera {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  double baseline = 0.5;  // meters
  int width = 640;
  int height = 480;

  /// Stereo projection of a camera-frame point (z > 0).
  Eigen::Vector3d project(const Eigen::Vector3d& p) const {
    const double iz = 1.0 / p.z();
    const double ul = fx * p.x() * iz + cx;
    const double v = fy * p.y() * iz + cy;
    const double ur = ul - fx * baseline * iz;
    return {ul, v, ur};
  }

  Eigen::Vector2d project_mono(const Eigen::Vector3d& p) const {
    const double iz = 1.0 / p.z();
    return {fx * p.x() * iz + cx, fy * p.y() * iz + cy};
  }

  /// d(stereo projection)/d(camera point).
  Eigen::Matrix3d projection_jacobian(const Eigen::Vector3d& p) const {
    const double iz = 1.0 / p.z();
    const double iz2 = iz * iz;
    Eigen::Matrix3d j;
    // clang-format off
    j << fx * iz,       0, -fx * p.x() * iz2,
               0, fy * iz, -fy * p.y() * iz2,
         fx * iz,       0, -fx * (p.x() - baseline) * iz2;
    // clang-format on
    return j;
  }

  Eigen::Matrix<double, 2, 3> projection_jacobian_mono(const Eigen::Vector3d& p) const {
    const double iz = 1.0 / p.z();
    const double iz2 = iz * iz;
    Eigen::Matrix<double, 2, 3> j;
    // clang-format off
    j << fx * iz,       0, -fx * p.x() * iz2,
               0, fy * iz, -fy * p.y() * iz2;
    // clang-format on
    return j;
  }

  /// Closed-form triangulation of a stereo observation back to the camera frame.
  Eigen::Vector3d triangulate(const Eigen::Vector3d& uvr) const {
    const double disparity = uvr(0) - uvr(2);
    const double z = fx * baseline / disparity;
    const double x = (uvr(0) - cx) * z / fx;
    const double y = (uvr(1) - cy) * z / fy;
    return {x, y, z};
  }

  bool in_image(double u, double v) const {
    return u >= 0.0 && u < width && v >= 0.0 && v < height;
  }
};

}  // namespace mbslam

#endif  // MBSLAM_CORE_CAMERA_HPP
