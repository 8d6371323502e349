// mbslam - per-frame camera and object tracking
// SPDX-License-Identifier: MIT
//
// Camera pose is estimated from static-cluster observations, object motion
// from dynamic-cluster observations as a twist restricted to the cluster's
// joint subspace. Both run Levenberg-Marquardt with Huber-weighted whitened
// reprojection residuals and left-multiplied local updates on the manifold.

#ifndef MBSLAM_TRACK_TRACKING_HPP
#define MBSLAM_TRACK_TRACKING_HPP

#include <Eigen/Dense>
#include <vector>

#include "mbslam/core/camera.hpp"
#include "mbslam/core/errors.hpp"
#include "mbslam/core/robust.hpp"
#include "mbslam/core/se3.hpp"
#include "mbslam/map/map.hpp"

namespace mbslam {

struct TrackingOptions {
  double huber_delta = 1.345;      // in whitened residual units
  int max_iterations = 20;
  double lambda_init = 1e-4;
  double update_tolerance = 1e-10;
  double rematch_radius_px = 4.0;  // second-pass gating radius
};

struct TrackResult {
  Pose pose;                   // camera tracking: estimated world-to-camera
  Twist twist = Twist::Zero(); // object tracking: estimated frame-to-frame twist
  int inliers = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// One reprojection measurement: a (possibly stereo) pixel, its whitening
/// weights, and the 3D point it observes.
struct ReprojectionMeasurement {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::VectorXd pixel;      // 2 or 3 components
  Eigen::VectorXd inv_sigma;  // same size as pixel
};

namespace detail {

inline Eigen::VectorXd project_any(const StereoCamera& cam, const Eigen::Vector3d& p_cam,
                                   Eigen::Index dim) {
  if (dim == 3) return cam.project(p_cam);
  return cam.project_mono(p_cam);
}

inline Eigen::MatrixXd projection_jacobian_any(const StereoCamera& cam,
                                               const Eigen::Vector3d& p_cam,
                                               Eigen::Index dim) {
  if (dim == 3) return cam.projection_jacobian(p_cam);
  return cam.projection_jacobian_mono(p_cam);
}

// Shared LM loop over a pose-like state updated by left-multiplied local
// twists restricted to a basis. Returns the accumulated local update product.
struct LmProblem {
  // residual/jacobian evaluation for the current state
  // fills whitened residual r and J = dr/d(local delta)
  virtual void evaluate(std::vector<Eigen::VectorXd>& residuals,
                        std::vector<Eigen::MatrixXd>* jacobians) const = 0;
  virtual void apply_step(const Eigen::VectorXd& delta) = 0;
  virtual void save_state() = 0;
  virtual void restore_state() = 0;
  virtual ~LmProblem() = default;
};

struct LmSummary {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int inliers = 0;
  bool converged = false;
};

inline LmSummary run_lm(LmProblem& problem, int dim, const TrackingOptions& opts) {
  const RobustKernel kernel{opts.huber_delta};
  const auto cost_of = [&](const std::vector<Eigen::VectorXd>& residuals) {
    double c = 0.0;
    for (const auto& r : residuals) c += kernel.cost(r.norm());
    return c;
  };

  LmSummary summary;
  std::vector<Eigen::VectorXd> residuals;
  std::vector<Eigen::MatrixXd> jacobians;
  problem.evaluate(residuals, &jacobians);
  double cost = cost_of(residuals);
  summary.initial_cost = cost;
  double lambda = opts.lambda_init;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    ++summary.iterations;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < residuals.size(); ++i) {
      const double w = kernel.weight(residuals[i].norm());
      h.noalias() += w * jacobians[i].transpose() * jacobians[i];
      b.noalias() += w * jacobians[i].transpose() * residuals[i];
    }
    if (b.norm() < 1e-14) {
      summary.converged = true;
      break;
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 10; ++attempt) {
      Eigen::MatrixXd damped = h;
      for (int d = 0; d < dim; ++d) {
        damped(d, d) += lambda * std::max(h(d, d), 1e-12);
      }
      const Eigen::VectorXd delta = damped.ldlt().solve(-b);
      problem.save_state();
      problem.apply_step(delta);
      std::vector<Eigen::VectorXd> trial_residuals;
      problem.evaluate(trial_residuals, nullptr);
      const double trial_cost = cost_of(trial_residuals);
      if (trial_cost <= cost) {
        cost = trial_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        problem.evaluate(residuals, &jacobians);
        if (delta.norm() < opts.update_tolerance) {
          summary.converged = true;
          iter = opts.max_iterations;
        }
        break;
      }
      problem.restore_state();
      lambda *= 10.0;
    }
    if (!accepted) {
      summary.converged = cost <= summary.initial_cost;
      break;
    }
    summary.converged = true;
  }

  summary.final_cost = cost;
  for (const auto& r : residuals) {
    if (r.norm() <= opts.huber_delta) ++summary.inliers;
  }
  return summary;
}

struct CameraLmProblem final : LmProblem {
  const std::vector<ReprojectionMeasurement>* measurements;
  const StereoCamera* camera;
  Pose state;
  Pose saved;

  void evaluate(std::vector<Eigen::VectorXd>& residuals,
                std::vector<Eigen::MatrixXd>* jacobians) const override {
    residuals.clear();
    if (jacobians) jacobians->clear();
    for (const auto& m : *measurements) {
      const Eigen::Vector3d p_cam = state * m.point;
      const Eigen::Index dim = m.pixel.size();
      Eigen::VectorXd r = m.pixel - project_any(*camera, p_cam, dim);
      r.array() *= m.inv_sigma.array();
      residuals.push_back(r);
      if (jacobians) {
        Eigen::Matrix<double, 3, 6> dp;
        dp.leftCols<3>() = Eigen::Matrix3d::Identity();
        dp.rightCols<3>() = -skew(p_cam);
        Eigen::MatrixXd j =
            -(m.inv_sigma.asDiagonal() * projection_jacobian_any(*camera, p_cam, dim) * dp);
        jacobians->push_back(std::move(j));
      }
    }
  }

  void apply_step(const Eigen::VectorXd& delta) override {
    state = exp_se3(delta) * state;
  }
  void save_state() override { saved = state; }
  void restore_state() override { state = saved; }
};

struct ObjectLmProblem final : LmProblem {
  const std::vector<ReprojectionMeasurement>* measurements;  // object-frame points
  const StereoCamera* camera;
  Pose camera_pose;  // T_cw, fixed
  Eigen::Matrix<double, 6, Eigen::Dynamic> basis;
  Pose state;  // current effective object-to-world pose
  Pose saved;

  void evaluate(std::vector<Eigen::VectorXd>& residuals,
                std::vector<Eigen::MatrixXd>* jacobians) const override {
    residuals.clear();
    if (jacobians) jacobians->clear();
    for (const auto& m : *measurements) {
      const Eigen::Vector3d p_world = state * m.point;
      const Eigen::Vector3d p_cam = camera_pose * p_world;
      const Eigen::Index dim = m.pixel.size();
      Eigen::VectorXd r = m.pixel - project_any(*camera, p_cam, dim);
      r.array() *= m.inv_sigma.array();
      residuals.push_back(r);
      if (jacobians) {
        Eigen::Matrix<double, 3, 6> dp;
        dp.leftCols<3>() = Eigen::Matrix3d::Identity();
        dp.rightCols<3>() = -skew(p_world);
        Eigen::MatrixXd j = -(m.inv_sigma.asDiagonal() *
                              projection_jacobian_any(*camera, p_cam, dim) *
                              camera_pose.rotation * dp * basis);
        jacobians->push_back(std::move(j));
      }
    }
  }

  void apply_step(const Eigen::VectorXd& delta) override {
    state = exp_se3(basis * delta) * state;
  }
  void save_state() override { saved = state; }
  void restore_state() override { state = saved; }
};

}  // namespace detail

/// Robust camera pose estimation from matched static-map observations.
inline TrackResult track_camera(const std::vector<ReprojectionMeasurement>& measurements,
                                const StereoCamera& camera, const Pose& init,
                                const TrackingOptions& opts = {}) {
  if (measurements.size() < 6) {
    throw InsufficientMatches("camera tracking needs at least 6 matches, got " +
                              std::to_string(measurements.size()));
  }
  detail::CameraLmProblem problem;
  problem.measurements = &measurements;
  problem.camera = &camera;
  problem.state = init;
  const auto summary = detail::run_lm(problem, 6, opts);
  if (summary.final_cost > summary.initial_cost) {
    throw Diverged("camera tracking did not reduce the cost");
  }
  TrackResult result;
  result.pose = problem.state;
  result.inliers = summary.inliers;
  result.initial_cost = summary.initial_cost;
  result.final_cost = summary.final_cost;
  result.iterations = summary.iterations;
  result.converged = summary.converged;
  return result;
}

/// Convenience overload assembling measurements from a frame and the static
/// clusters of a map.
inline TrackResult track_camera(const Frame& frame, const SceneMap& map,
                                const StereoCamera& camera, const Pose& init,
                                const TrackingOptions& opts = {}) {
  std::vector<ReprojectionMeasurement> measurements;
  for (const auto& obs : frame.observations) {
    if (!obs.is_matched()) continue;
    for (const auto* cluster : map.static_clusters()) {
      const auto it = cluster->points.find(obs.point_id);
      if (it == cluster->points.end()) continue;
      ReprojectionMeasurement m;
      m.point = it->second.position;
      m.pixel = obs.pixel;
      m.inv_sigma = obs.covariance_diagonal.cwiseSqrt().cwiseInverse();
      measurements.push_back(std::move(m));
      break;
    }
  }
  return track_camera(measurements, camera, init, opts);
}

/// Object twist estimation over the joint-restricted subspace, including the
/// second matching pass: after the first optimization, map points are
/// reprojected, unmatched keypoints of the cluster's instance are matched
/// within a pixel radius, and the cost is optimized again. On success the
/// cluster pose history is advanced via the pose update rule.
inline TrackResult track_object(Frame& frame, Cluster& cluster, int t, const Twist& init_xi,
                                const StereoCamera& camera, const TrackingOptions& opts = {}) {
  if (!cluster.has_pose(t - 1)) {
    throw MissingPreviousPose("object " + std::to_string(cluster.id) + " at t=" +
                              std::to_string(t - 1));
  }
  const Pose prev_pose = cluster.pose_at(t - 1);
  const Pose t_cw = frame.camera_pose;

  auto gather = [&]() {
    std::vector<ReprojectionMeasurement> ms;
    std::vector<Eigen::VectorXd> raw_residuals;
    const Pose guess = exp_se3(cluster.joint.project(init_xi)) * prev_pose;
    for (const auto& obs : frame.observations) {
      if (!obs.is_matched()) continue;
      const auto it = cluster.points.find(obs.point_id);
      if (it == cluster.points.end()) continue;
      ReprojectionMeasurement m;
      m.point = it->second.position;
      m.pixel = obs.pixel;
      m.inv_sigma = Eigen::VectorXd::Ones(obs.pixel.size());
      ms.push_back(std::move(m));
      const Eigen::Vector3d p_cam = t_cw * (guess * it->second.position);
      if (p_cam.z() > 1e-6) {
        raw_residuals.push_back(obs.pixel -
                                detail::project_any(camera, p_cam, obs.pixel.size()));
      }
    }
    // MAD-based whitening shared by the cluster's measurements
    if (raw_residuals.size() >= 2) {
      const Eigen::VectorXd var = mad_covariance_diagonal(raw_residuals);
      const Eigen::VectorXd inv_sigma = var.cwiseSqrt().cwiseInverse();
      for (auto& m : ms) m.inv_sigma = inv_sigma;
    }
    return ms;
  };

  std::vector<ReprojectionMeasurement> measurements = gather();
  if (measurements.size() < 3) {
    throw InsufficientMatches("object tracking needs at least 3 matches, got " +
                              std::to_string(measurements.size()));
  }

  detail::ObjectLmProblem problem;
  problem.measurements = &measurements;
  problem.camera = &camera;
  problem.camera_pose = t_cw;
  problem.basis = cluster.joint.basis;
  problem.state = exp_se3(cluster.joint.project(init_xi)) * prev_pose;

  const int dof = cluster.joint.dof();
  detail::LmSummary summary;
  if (dof > 0) {
    summary = detail::run_lm(problem, dof, opts);
  } else {
    summary.converged = true;
  }

  // Second pass: re-match unmatched keypoints of this instance against the
  // reprojected map points, then optimize again.
  int rematched = 0;
  for (auto& obs : frame.observations) {
    if (obs.is_matched() || obs.instance_id != cluster.instance_id) continue;
    int best_id = -1;
    double best_dist = opts.rematch_radius_px;
    for (const auto& [pid, mp] : cluster.points) {
      const Eigen::Vector3d p_cam = t_cw * (problem.state * mp.position);
      if (p_cam.z() < 1e-6) continue;
      const Eigen::VectorXd proj = detail::project_any(camera, p_cam, obs.pixel.size());
      const double d = (proj.head<2>() - obs.pixel.head<2>()).norm();
      if (d < best_dist) {
        best_dist = d;
        best_id = pid;
      }
    }
    if (best_id >= 0) {
      obs.point_id = best_id;
      ++rematched;
    }
  }
  if (rematched > 0 && dof > 0) {
    measurements = gather();
    problem.measurements = &measurements;
    summary = detail::run_lm(problem, dof, opts);
  }

  if (summary.final_cost > summary.initial_cost) {
    throw Diverged("object tracking did not reduce the cost");
  }

  TrackResult result;
  result.twist = (dof > 0) ? relative_twist(problem.state, prev_pose) : Twist::Zero();
  result.pose = update_object_pose(cluster, t, result.twist);
  result.inliers = summary.inliers;
  result.initial_cost = summary.initial_cost;
  result.final_cost = summary.final_cost;
  result.iterations = summary.iterations;
  result.converged = summary.converged;
  return result;
}

}  // namespace mbslam

#endif  // MBSLAM_TRACK_TRACKING_HPP
