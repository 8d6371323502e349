// mbslam - generalized (plane-to-plane) ICP
// SPDX-License-Identifier: MIT
//
// Per-point covariances come from the k nearest neighbors with the eigenvalue
// spectrum flattened to (epsilon, 1, 1), epsilon on the surface normal. Each
// outer iteration re-associates by nearest neighbor under a distance gate and
// takes damped Gauss-Newton steps on the summed Mahalanobis pair cost; steps
// that do not reduce the cost on the fixed correspondence set are rejected.

#ifndef MBSLAM_LIDAR_GICP_HPP
#define MBSLAM_LIDAR_GICP_HPP

#include <Eigen/Dense>
#include <vector>

#include "mbslam/core/errors.hpp"
#include "mbslam/core/se3.hpp"
#include "mbslam/lidar/kdtree.hpp"

namespace mbslam {

struct GicpOptions {
  int k_neighbors = 10;
  double covariance_epsilon = 1e-3;
  double max_correspondence_distance = 1.0;  // meters
  int max_iterations = 50;
  double update_tolerance = 1e-6;
};

struct RegistrationResult {
  Pose transform;       // maps source points onto target points
  double fitness = 0.0; // fraction of source points with a gated correspondence
  double rmse = 0.0;    // Euclidean RMSE over final correspondences
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline std::vector<Eigen::Matrix3d> gicp_covariances(const KdTree3& tree,
                                                     const GicpOptions& opts) {
  std::vector<Eigen::Matrix3d> covs(tree.size());
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto nn = tree.knn(tree.point(static_cast<int>(i)), opts.k_neighbors);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int j : nn) mean += tree.point(j);
    mean /= static_cast<double>(nn.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nn) {
      const Eigen::Vector3d d = tree.point(j) - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nn.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    // eigenvalues ascending: smallest direction is the local surface normal
    Eigen::Matrix3d values = Eigen::Matrix3d::Zero();
    values(0, 0) = opts.covariance_epsilon;
    values(1, 1) = 1.0;
    values(2, 2) = 1.0;
    covs[i] = eig.eigenvectors() * values * eig.eigenvectors().transpose();
  }
  return covs;
}

}  // namespace detail

/// Registers source onto target: returns T with target ~= T * source.
inline RegistrationResult gicp_register(const std::vector<Eigen::Vector3d>& source,
                                        const std::vector<Eigen::Vector3d>& target,
                                        const Pose& init, const GicpOptions& opts = {}) {
  if (source.size() < 20 || target.size() < 20) {
    throw TooFewPoints("gicp needs at least 20 points per cloud");
  }
  const KdTree3 source_tree(source);
  const KdTree3 target_tree(target);
  const auto source_covs = detail::gicp_covariances(source_tree, opts);
  const auto target_covs = detail::gicp_covariances(target_tree, opts);

  RegistrationResult result;
  Pose t = init;
  double lambda = 1e-6;

  struct Pair {
    int src;
    int tgt;
    Eigen::Matrix3d info;  // (C_tgt + R C_src R^T)^-1
  };

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    ++result.iterations;
    std::vector<Pair> pairs;
    pairs.reserve(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
      const Eigen::Vector3d moved = t * source[i];
      const int j = target_tree.nearest(moved, opts.max_correspondence_distance);
      if (j < 0) continue;
      Pair pair;
      pair.src = static_cast<int>(i);
      pair.tgt = j;
      const Eigen::Matrix3d combined =
          target_covs[j] + t.rotation * source_covs[i] * t.rotation.transpose();
      pair.info = combined.inverse();
      pairs.push_back(std::move(pair));
    }
    if (pairs.size() < 6) break;

    const auto cost_at = [&](const Pose& pose) {
      double c = 0.0;
      for (const auto& p : pairs) {
        const Eigen::Vector3d d = target[p.tgt] - pose * source[p.src];
        c += d.dot(p.info * d);
      }
      return c;
    };

    double cost = cost_at(t);
    Matrix6d h = Matrix6d::Zero();
    Vector6d b = Vector6d::Zero();
    for (const auto& p : pairs) {
      const Eigen::Vector3d moved = t * source[p.src];
      const Eigen::Vector3d d = target[p.tgt] - moved;
      Eigen::Matrix<double, 3, 6> j;
      j.leftCols<3>() = -Eigen::Matrix3d::Identity();
      j.rightCols<3>() = skew(moved);
      h.noalias() += j.transpose() * p.info * j;
      b.noalias() += j.transpose() * p.info * d;
    }

    double step_norm = 0.0;
    bool accepted = false;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Matrix6d damped = h;
      damped.diagonal() += lambda * h.diagonal();
      const Vector6d delta = damped.ldlt().solve(-b);
      const Pose trial = exp_se3(delta) * t;
      if (cost_at(trial) <= cost) {
        t = trial;
        step_norm = delta.norm();
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
    if (step_norm < opts.update_tolerance) {
      result.converged = true;
      break;
    }
  }

  // final correspondence statistics
  int matched = 0;
  double sq_sum = 0.0;
  for (const auto& p : source) {
    const Eigen::Vector3d moved = t * p;
    double dist = 0.0;
    if (target_tree.nearest(moved, opts.max_correspondence_distance, &dist) >= 0) {
      ++matched;
      sq_sum += dist * dist;
    }
  }
  result.transform = t;
  result.fitness = static_cast<double>(matched) / static_cast<double>(source.size());
  result.rmse = matched > 0 ? std::sqrt(sq_sum / matched) : 0.0;
  return result;
}

}  // namespace mbslam

#endif  // MBSLAM_LIDAR_GICP_HPP
