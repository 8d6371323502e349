// mbslam - tracking tests
// SPDX-License-Identifier: MIT

#include "mbslam/track/tracking.hpp"

#include <gtest/gtest.h>

#include "mbslam/core/rng.hpp"
#include "mbslam/sim/simulator.hpp"

using namespace mbslam;

namespace {

ScenarioConfig base_config() {
  ScenarioConfig cfg;
  cfg.seed = 21;
  cfg.noise_seed = 21;
  cfg.duration = 4;
  cfg.static_points = 160;
  cfg.camera_twists = {{0, (Twist() << 0.6, 0, 0, 0, 0, 0).finished()}};
  ObjectSpec car;
  car.shape.kind = ShapeKind::kBox;
  car.shape.half_extents = Eigen::Vector3d(2.0, 0.9, 0.75);
  car.initial_pose = Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(14, 0.5, 0.75));
  car.twist_program = {{0, (Twist() << 0.5, 0, 0, 0, 0, 0).finished()}};
  car.keypoints = 40;
  cfg.objects.push_back(car);
  cfg.lidar_rays_per_object = 0;
  cfg.lidar_ground_rays = 0;
  return cfg;
}

// Builds camera measurements for a frame directly from ground truth.
std::vector<ReprojectionMeasurement> static_measurements(const Scenario& s, int frame) {
  std::vector<ReprojectionMeasurement> ms;
  for (std::size_t k = 0; k < s.frames[frame].observations.size(); ++k) {
    const auto& obs = s.frames[frame].observations[k];
    const int pid = s.truth.obs_truth[frame][k].point_id;
    if (s.truth.point_owner.at(pid) != -1 || !obs.is_matched()) continue;
    ReprojectionMeasurement m;
    m.point = s.truth.point_positions.at(pid);
    m.pixel = obs.pixel;
    m.inv_sigma = obs.covariance_diagonal.cwiseSqrt().cwiseInverse();
    ms.push_back(std::move(m));
  }
  return ms;
}

Cluster make_cluster_from_truth(const Scenario& s, int object_index, int upto_frame) {
  Cluster c;
  c.id = 0;
  c.instance_id = 10 + object_index;
  c.label = ClassLabel::kCar;
  c.mobility = Mobility::kDynamic;
  c.joint = JointModel::free();
  for (const auto& [pid, owner] : s.truth.point_owner) {
    if (owner == object_index) {
      c.points[pid] = {pid, s.truth.point_positions.at(pid), 1};
    }
  }
  for (int t = 0; t <= upto_frame; ++t) {
    c.pose_history[t] = s.truth.object_poses.at(object_index)[t];
  }
  return c;
}

Pose perturb(const Pose& p, double trans, double rot_rad, Rng& rng) {
  Twist d;
  Eigen::Vector3d axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
  axis.normalize();
  Eigen::Vector3d dir(rng.gaussian(), rng.gaussian(), rng.gaussian());
  dir.normalize();
  d.head<3>() = trans * dir;
  d.tail<3>() = rot_rad * axis;
  return exp_se3(d) * p;
}

}  // namespace

TEST(MadCovariance, HandValues) {
  std::vector<Eigen::VectorXd> residuals;
  for (double v : {-1.0, 0.0, 1.0}) {
    residuals.push_back(Eigen::Vector2d(v, v));
  }
  const Eigen::VectorXd var = mad_covariance_diagonal(residuals);
  EXPECT_NEAR(var(0), 1.4826 * 1.4826, 1e-12);
  EXPECT_NEAR(var(1), 1.4826 * 1.4826, 1e-12);
}

TEST(MadCovariance, AllEqualClampsToFloor) {
  std::vector<Eigen::VectorXd> residuals(5, Eigen::Vector2d(3.0, -2.0));
  const Eigen::VectorXd var = mad_covariance_diagonal(residuals);
  EXPECT_DOUBLE_EQ(var(0), 1e-6);
  EXPECT_DOUBLE_EQ(var(1), 1e-6);
}

TEST(MadCovariance, StatisticalConsistencyOnGaussian) {
  Rng rng(5);
  std::vector<Eigen::VectorXd> residuals;
  for (int i = 0; i < 100000; ++i) {
    residuals.push_back(Eigen::Vector2d(rng.gaussian(), rng.gaussian()));
  }
  const Eigen::VectorXd var = mad_covariance_diagonal(residuals);
  EXPECT_NEAR(std::sqrt(var(0)), 1.0, 0.02);
  EXPECT_NEAR(std::sqrt(var(1)), 1.0, 0.02);
}

TEST(MadCovariance, ThrowsOnSingleResidual) {
  std::vector<Eigen::VectorXd> residuals(1, Eigen::Vector2d(1.0, 1.0));
  EXPECT_THROW(mad_covariance_diagonal(residuals), InsufficientData);
}

TEST(HuberKernel, InfluenceBound) {
  const RobustKernel kernel{1.345};
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const double e = rng.uniform(0.0, 100.0);
    EXPECT_LE(kernel.weight(e) * e, kernel.delta + 1e-12);
  }
  EXPECT_DOUBLE_EQ(kernel.cost(0.0), 0.0);
}

TEST(TrackCamera, ZeroNoiseGroundTruthInitIsFixedPoint) {
  const auto s = generate_scenario(base_config());
  const int frame = 2;
  const auto ms = static_measurements(s, frame);
  const Pose gt = s.truth.camera_to_world[frame].inverse();
  const auto res = track_camera(ms, base_config().camera, gt);
  EXPECT_NEAR(res.final_cost, 0.0, 1e-12);
  EXPECT_LT((res.pose.matrix() - gt.matrix()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TrackCamera, RecoversFromPerturbedInit) {
  const auto s = generate_scenario(base_config());
  const int frame = 2;
  const auto ms = static_measurements(s, frame);
  const Pose gt = s.truth.camera_to_world[frame].inverse();
  Rng rng(7);
  const Pose init = perturb(gt, 0.1, 2.0 * M_PI / 180.0, rng);
  const auto res = track_camera(ms, base_config().camera, init);
  EXPECT_TRUE(res.converged);
  EXPECT_LT((res.pose.translation - gt.translation).norm(), 1e-6);
  const double rot_err = std::acos(std::clamp(
      ((res.pose.rotation.transpose() * gt.rotation).trace() - 1.0) / 2.0, -1.0, 1.0));
  EXPECT_LT(rot_err, 1e-5);
}

TEST(TrackCamera, RobustToOutliersAndNoise) {
  auto cfg = base_config();
  cfg.keypoint_noise_sigma = 0.5;
  cfg.keypoint_outlier_rate = 0.2;
  const auto s = generate_scenario(cfg);
  const int frame = 2;
  const auto ms = static_measurements(s, frame);
  const Pose gt = s.truth.camera_to_world[frame].inverse();
  Rng rng(8);
  const Pose init = perturb(gt, 0.05, 1.0 * M_PI / 180.0, rng);
  const auto res = track_camera(ms, cfg.camera, init);
  EXPECT_TRUE(res.converged);
  EXPECT_LT((res.pose.translation - gt.translation).norm(), 0.02);
}

TEST(TrackCamera, ThrowsOnTooFewMatches) {
  std::vector<ReprojectionMeasurement> ms(5);
  EXPECT_THROW(track_camera(ms, StereoCamera{}, Pose::identity()), InsufficientMatches);
}

TEST(TrackObject, StaticObjectZeroNoiseGivesZeroTwist) {
  auto cfg = base_config();
  cfg.objects[0].twist_program = {{0, Twist::Zero()}};
  auto s = generate_scenario(cfg);
  const int t = 1;
  Cluster c = make_cluster_from_truth(s, 0, t - 1);
  Frame f;
  f.id = t;
  f.camera_pose = s.truth.camera_to_world[t].inverse();
  f.observations = s.frames[t].observations;
  const auto res = track_object(f, c, t, Twist::Zero(), cfg.camera);
  EXPECT_TRUE(res.converged);
  EXPECT_LT(res.twist.norm(), 1e-10);
}

TEST(TrackObject, RecoversTranslationTwistFreeJoint) {
  auto cfg = base_config();
  auto s = generate_scenario(cfg);
  const int t = 1;
  Cluster c = make_cluster_from_truth(s, 0, t - 1);
  Frame f;
  f.id = t;
  f.camera_pose = s.truth.camera_to_world[t].inverse();
  f.observations = s.frames[t].observations;
  const auto res = track_object(f, c, t, Twist::Zero(), cfg.camera);
  const Twist expected = (Twist() << 0.5, 0, 0, 0, 0, 0).finished();
  EXPECT_LT((res.twist - expected).norm(), 1e-8);
  // pose history advanced by the update rule
  EXPECT_LT((c.pose_history[t].matrix() -
             (exp_se3(res.twist) * c.pose_history[t - 1]).matrix())
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(TrackObject, PlanarJointZeroesOutOfPlaneComponents) {
  auto cfg = base_config();
  auto s = generate_scenario(cfg);
  const int t = 1;
  Cluster c = make_cluster_from_truth(s, 0, t - 1);
  c.joint = JointModel::planar(Eigen::Vector3d(0, 0, 1));
  Frame f;
  f.id = t;
  f.camera_pose = s.truth.camera_to_world[t].inverse();
  f.observations = s.frames[t].observations;
  // inject a spurious out-of-plane component into the init
  Twist init;
  init << 0.4, 0, 0.3, 0.1, 0.1, 0;
  const auto res = track_object(f, c, t, init, cfg.camera);
  const Twist expected = (Twist() << 0.5, 0, 0, 0, 0, 0).finished();
  EXPECT_LT((res.twist - expected).norm(), 1e-8);
  EXPECT_NEAR(res.twist(2), 0.0, 1e-12);  // z translation
  EXPECT_NEAR(res.twist(3), 0.0, 1e-12);  // roll
  EXPECT_NEAR(res.twist(4), 0.0, 1e-12);  // pitch
  // converged twist lies in the joint column space
  const Twist projected = c.joint.project(res.twist);
  EXPECT_LT((projected - res.twist).norm(), 1e-10);
}

TEST(TrackObject, SecondPassRecoversDroppedMatches) {
  auto cfg = base_config();
  cfg.match_dropout_rate = 0.4;
  auto s = generate_scenario(cfg);
  const int t = 1;
  Cluster c = make_cluster_from_truth(s, 0, t - 1);
  Frame f;
  f.id = t;
  f.camera_pose = s.truth.camera_to_world[t].inverse();
  f.observations = s.frames[t].observations;
  int matched_before = 0;
  for (const auto& o : f.observations) {
    if (o.is_matched() && c.points.count(o.point_id)) ++matched_before;
  }
  const auto res = track_object(f, c, t, Twist::Zero(), cfg.camera);
  int matched_after = 0;
  for (const auto& o : f.observations) {
    if (o.is_matched() && c.points.count(o.point_id)) ++matched_after;
  }
  EXPECT_GT(matched_after, matched_before);
  const Twist expected = (Twist() << 0.5, 0, 0, 0, 0, 0).finished();
  EXPECT_LT((res.twist - expected).norm(), 1e-8);
}

TEST(TrackObject, ThrowsOnTooFewMatches) {
  auto cfg = base_config();
  auto s = generate_scenario(cfg);
  Cluster c = make_cluster_from_truth(s, 0, 0);
  c.points.clear();
  Frame f;
  f.id = 1;
  f.camera_pose = s.truth.camera_to_world[1].inverse();
  f.observations = s.frames[1].observations;
  EXPECT_THROW(track_object(f, c, 1, Twist::Zero(), cfg.camera), InsufficientMatches);
}

// Analytic Jacobians of both reprojection residual types vs central finite
// differences on random configurations.
TEST(Jacobians, CameraResidualMatchesFiniteDifferences) {
  Rng rng(9);
  const StereoCamera cam;
  const double eps = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    Twist xi;
    xi << rng.gaussian(0.5), rng.gaussian(0.5), rng.gaussian(0.5), rng.gaussian(0.2),
        rng.gaussian(0.2), rng.gaussian(0.2);
    const Pose t_cw = exp_se3(xi);
    Eigen::Vector3d p_world = t_cw.inverse() * Eigen::Vector3d(rng.gaussian(2.0),
                                                               rng.gaussian(2.0),
                                                               rng.uniform(4.0, 20.0));
    std::vector<ReprojectionMeasurement> ms(1);
    ms[0].point = p_world;
    ms[0].pixel = cam.project(t_cw * p_world) + Eigen::Vector3d(0.5, -0.3, 0.2);
    ms[0].inv_sigma = Eigen::Vector3d(2.0, 1.5, 1.0);

    detail::CameraLmProblem problem;
    problem.measurements = &ms;
    problem.camera = &cam;
    problem.state = t_cw;
    std::vector<Eigen::VectorXd> r0;
    std::vector<Eigen::MatrixXd> jac;
    problem.evaluate(r0, &jac);

    for (int d = 0; d < 6; ++d) {
      Twist delta = Twist::Zero();
      delta(d) = eps;
      detail::CameraLmProblem plus = problem;
      plus.state = exp_se3(delta) * t_cw;
      detail::CameraLmProblem minus = problem;
      minus.state = exp_se3(-delta) * t_cw;
      std::vector<Eigen::VectorXd> rp, rm;
      plus.evaluate(rp, nullptr);
      minus.evaluate(rm, nullptr);
      const Eigen::VectorXd fd = (rp[0] - rm[0]) / (2.0 * eps);
      const double rel = (jac[0].col(d) - fd).norm() / std::max(1.0, fd.norm());
      EXPECT_LT(rel, 1e-5);
    }
  }
}

TEST(Jacobians, ObjectResidualMatchesFiniteDifferences) {
  Rng rng(10);
  const StereoCamera cam;
  const double eps = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const JointModel joint = (trial % 2 == 0)
                                 ? JointModel::free()
                                 : JointModel::planar(Eigen::Vector3d(0, 0, 1));
    Twist xi;
    xi << rng.gaussian(0.3), rng.gaussian(0.3), rng.gaussian(0.3), rng.gaussian(0.1),
        rng.gaussian(0.1), rng.gaussian(0.1);
    const Pose obj_pose = exp_se3(xi) * Pose(Eigen::Matrix3d::Identity(),
                                             Eigen::Vector3d(12, 0, 1));
    Eigen::Matrix3d r0m;
    r0m << 0, 0, 1, -1, 0, 0, 0, -1, 0;
    const Pose t_cw = Pose(r0m, Eigen::Vector3d(0, 0, 1.5)).inverse();

    std::vector<ReprojectionMeasurement> ms(1);
    ms[0].point = Eigen::Vector3d(rng.gaussian(0.8), rng.gaussian(0.4), rng.gaussian(0.3));
    ms[0].pixel =
        cam.project(t_cw * (obj_pose * ms[0].point)) + Eigen::Vector3d(-0.4, 0.6, 0.1);
    ms[0].inv_sigma = Eigen::Vector3d(1.0, 2.0, 0.5);

    detail::ObjectLmProblem problem;
    problem.measurements = &ms;
    problem.camera = &cam;
    problem.camera_pose = t_cw;
    problem.basis = joint.basis;
    problem.state = obj_pose;
    std::vector<Eigen::VectorXd> r0;
    std::vector<Eigen::MatrixXd> jac;
    problem.evaluate(r0, &jac);

    for (int d = 0; d < joint.dof(); ++d) {
      Eigen::VectorXd delta = Eigen::VectorXd::Zero(joint.dof());
      delta(d) = eps;
      detail::ObjectLmProblem plus = problem;
      plus.state = exp_se3(joint.basis * delta) * obj_pose;
      detail::ObjectLmProblem minus = problem;
      minus.state = exp_se3(-(joint.basis * delta)) * obj_pose;
      std::vector<Eigen::VectorXd> rp, rm;
      plus.evaluate(rp, nullptr);
      minus.evaluate(rm, nullptr);
      const Eigen::VectorXd fd = (rp[0] - rm[0]) / (2.0 * eps);
      const double rel = (jac[0].col(d) - fd).norm() / std::max(1.0, fd.norm());
      EXPECT_LT(rel, 1e-5);
    }
  }
}
