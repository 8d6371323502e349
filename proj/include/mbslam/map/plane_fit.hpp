// mbslam - RANSAC + SVD plane fitting
// SPDX-License-Identifier: MIT

#ifndef MBSLAM_MAP_PLANE_FIT_HPP
#define MBSLAM_MAP_PLANE_FIT_HPP

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "mbslam/core/errors.hpp"
#include "mbslam/core/rng.hpp"
#include "mbslam/map/types.hpp"

namespace mbslam {

struct PlaneFitResult {
  Plane plane;
  std::vector<int> inlier_ids;
};

namespace detail {

/// Least-squares plane through a point subset: smallest singular vector of the
/// centered point matrix.
inline std::optional<Plane> svd_plane(const std::vector<Eigen::Vector3d>& points,
                                      const std::vector<int>& ids) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i : ids) centroid += points[i];
  centroid /= static_cast<double>(ids.size());
  Eigen::MatrixXd centered(ids.size(), 3);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    centered.row(r) = (points[ids[r]] - centroid).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  if (svd.singularValues()(1) < 1e-12) return std::nullopt;  // collinear
  Eigen::Vector3d n = svd.matrixV().col(2);
  Plane plane;
  plane.coeffs.head<3>() = n.normalized();
  plane.coeffs(3) = -plane.normal().dot(centroid);
  return plane;
}

}  // namespace detail

/// RANSAC plane fit (sample size 3, early exit at confidence 0.999) with a
/// final SVD refit on the consensus set. Inlier ids are recomputed against the
/// refit plane so every returned inlier is within the threshold. When
/// orient_toward is given, the sign of the coefficients is chosen so that
/// point has positive signed distance.
inline PlaneFitResult fit_plane_ransac(
    const std::vector<Eigen::Vector3d>& points, int iterations, double inlier_threshold,
    std::uint64_t seed = 0,
    const std::optional<Eigen::Vector3d>& orient_toward = std::nullopt) {
  const int n = static_cast<int>(points.size());
  if (n < 3) throw DegenerateInput("plane fit needs at least 3 points");

  Rng rng(mix_seed(seed, 0x9137));
  int best_count = -1;
  Plane best_plane;
  int needed = iterations;

  for (int it = 0; it < needed && it < iterations; ++it) {
    const int a = rng.uniform_int(0, n - 1);
    const int b = rng.uniform_int(0, n - 1);
    const int c = rng.uniform_int(0, n - 1);
    if (a == b || b == c || a == c) continue;
    const Eigen::Vector3d normal =
        (points[b] - points[a]).cross(points[c] - points[a]);
    const double len = normal.norm();
    if (len < 1e-12) continue;
    Plane cand;
    cand.coeffs.head<3>() = normal / len;
    cand.coeffs(3) = -cand.normal().dot(points[a]);
    int count = 0;
    for (const auto& p : points) {
      if (std::abs(cand.signed_distance(p)) <= inlier_threshold) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_plane = cand;
      const double w = static_cast<double>(count) / n;
      const double denom = std::log(std::max(1e-12, 1.0 - w * w * w));
      if (denom < 0) {
        needed = std::min(iterations,
                          static_cast<int>(std::ceil(std::log(1e-3) / denom)));
      }
    }
  }
  if (best_count < 3) throw DegenerateInput("no non-degenerate plane sample found");

  std::vector<int> inliers;
  for (int i = 0; i < n; ++i) {
    if (std::abs(best_plane.signed_distance(points[i])) <= inlier_threshold) {
      inliers.push_back(i);
    }
  }
  const auto refit = detail::svd_plane(points, inliers);
  Plane final_plane = refit.value_or(best_plane);

  std::vector<int> final_inliers;
  for (int i = 0; i < n; ++i) {
    if (std::abs(final_plane.signed_distance(points[i])) <= inlier_threshold) {
      final_inliers.push_back(i);
    }
  }
  if (orient_toward && final_plane.signed_distance(*orient_toward) < 0.0) {
    final_plane.coeffs = -final_plane.coeffs;
  }
  return {final_plane, std::move(final_inliers)};
}

}  // namespace mbslam

#endif  // MBSLAM_MAP_PLANE_FIT_HPP
