// mbslam - simulator tests
// SPDX-License-Identifier: MIT

#include "mbslam/sim/simulator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mbslam/sim/scenario_io.hpp"

using namespace mbslam;

namespace {

ScenarioConfig straight_road_config() {
  ScenarioConfig cfg;
  cfg.seed = 11;
  cfg.noise_seed = 11;
  cfg.duration = 20;
  cfg.static_points = 120;
  cfg.camera_twists = {{0, (Twist() << 0.8, 0, 0, 0, 0, 0).finished()}};
  ObjectSpec car;
  car.shape.kind = ShapeKind::kBox;
  car.shape.half_extents = Eigen::Vector3d(2.0, 0.9, 0.75);
  car.initial_pose = Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(15, 0, 0.75));
  car.twist_program = {{0, (Twist() << 1.0, 0, 0, 0, 0, 0).finished()}};
  car.label = ClassLabel::kCar;
  car.keypoints = 25;
  cfg.objects.push_back(car);
  cfg.lidar_rays_per_object = 150;
  cfg.lidar_ground_rays = 100;
  return cfg;
}

nlohmann::json frame_fingerprint(const SimFrame& f) {
  nlohmann::json j;
  j["id"] = f.id;
  for (const auto& o : f.observations) {
    j["obs"].push_back({o.pixel(0), o.pixel(1), o.pixel(2), o.point_id, o.instance_id});
  }
  for (const auto& p : f.scan) {
    j["scan"].push_back({p.position.x(), p.position.y(), p.position.z()});
  }
  for (const auto& d : f.detections) {
    j["det"].push_back({d.pose.translation.x(), d.pose.translation.y(),
                        d.pose.translation.z(), d.score});
  }
  return j;
}

}  // namespace

TEST(Simulator, ZeroNoiseObservationsReprojectExactly) {
  const auto cfg = straight_road_config();
  const auto s = generate_scenario(cfg);
  ASSERT_EQ(s.frames.size(), 20u);
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    const auto& f = s.frames[i];
    const Pose world_to_cam = s.truth.camera_to_world[i].inverse();
    ASSERT_EQ(f.observations.size(), s.truth.obs_truth[i].size());
    for (std::size_t k = 0; k < f.observations.size(); ++k) {
      const auto& obs = f.observations[k];
      const int pid = s.truth.obs_truth[i][k].point_id;
      Eigen::Vector3d p_world = s.truth.point_positions.at(pid);
      const int owner = s.truth.point_owner.at(pid);
      if (owner >= 0) p_world = s.truth.object_poses.at(owner)[i] * p_world;
      const Eigen::Vector3d expected = cfg.camera.project(world_to_cam * p_world);
      EXPECT_LT((obs.pixel - expected).norm(), 1e-9);
    }
  }
}

TEST(Simulator, SameSeedBitIdentical) {
  const auto cfg = straight_road_config();
  const auto a = generate_scenario(cfg);
  const auto b = generate_scenario(cfg);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    EXPECT_EQ(frame_fingerprint(a.frames[i]).dump(), frame_fingerprint(b.frames[i]).dump());
  }
}

TEST(Simulator, NoiseSeedSplitKeepsGeometry) {
  auto cfg = straight_road_config();
  cfg.keypoint_noise_sigma = 0.5;
  cfg.lidar_noise_sigma = 0.02;
  auto cfg2 = cfg;
  cfg2.noise_seed = 999;
  const auto a = generate_scenario(cfg);
  const auto b = generate_scenario(cfg2);
  // identical ground truth geometry
  for (std::size_t i = 0; i < a.truth.camera_to_world.size(); ++i) {
    EXPECT_EQ((a.truth.camera_to_world[i].matrix() - b.truth.camera_to_world[i].matrix())
                  .cwiseAbs()
                  .maxCoeff(),
              0.0);
  }
  for (const auto& [id, pos] : a.truth.point_positions) {
    EXPECT_EQ((pos - b.truth.point_positions.at(id)).norm(), 0.0);
  }
  // but different noise draws
  bool any_diff = false;
  for (std::size_t k = 0; k < a.frames[0].observations.size(); ++k) {
    if ((a.frames[0].observations[k].pixel - b.frames[0].observations[k].pixel).norm() >
        1e-12) {
      any_diff = true;
    }
  }
  EXPECT_TRUE(any_diff);
}

TEST(Simulator, GroundTruthTwistsSatisfyPoseUpdate) {
  const auto cfg = straight_road_config();
  const auto s = generate_scenario(cfg);
  const auto& poses = s.truth.object_poses.at(0);
  const auto& twists = s.truth.object_twists.at(0);
  const Twist expected = (Twist() << 1.0, 0, 0, 0, 0, 0).finished();
  for (std::size_t t = 1; t < poses.size(); ++t) {
    EXPECT_LT((twists[t] - expected).norm(), 1e-15);
    const Twist rel = relative_twist(poses[t], poses[t - 1]);
    EXPECT_LT((rel - expected).norm(), 1e-12);
  }
}

TEST(Simulator, StaticWorldZeroCameraTwistGivesConstantFrames) {
  ScenarioConfig cfg;
  cfg.duration = 3;
  cfg.static_points = 50;
  const auto s = generate_scenario(cfg);
  for (std::size_t i = 1; i < s.frames.size(); ++i) {
    ASSERT_EQ(s.frames[i].observations.size(), s.frames[0].observations.size());
    for (std::size_t k = 0; k < s.frames[i].observations.size(); ++k) {
      EXPECT_LT(
          (s.frames[i].observations[k].pixel - s.frames[0].observations[k].pixel).norm(),
          1e-12);
    }
  }
}

TEST(SampleShapeSurface, CleanSamplesLieOnSurface) {
  ShapeParams box;
  box.kind = ShapeKind::kBox;
  box.half_extents = Eigen::Vector3d(2.0, 0.9, 0.75);
  const Pose pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(10, 2, 0.75));
  const auto pts = sample_shape_surface(box, pose, Eigen::Vector3d(0, 0, 1.5), 500, 0.0, 77);
  ASSERT_GT(pts.size(), 400u);
  for (const auto& p : pts) {
    EXPECT_LT(std::abs(sdf_eval(box, pose.inverse() * p)), 1e-6);
  }
}

TEST(SampleShapeSurface, VisibilityNormalsFaceSensor) {
  ShapeParams box;
  box.kind = ShapeKind::kBox;
  box.half_extents = Eigen::Vector3d(1.0, 1.0, 1.0);
  const Pose pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(8, 0, 0));
  const Eigen::Vector3d sensor(0, 0, 0);  // sensor at -x of the box
  const auto pts = sample_shape_surface(box, pose, sensor, 400, 0.0, 78);
  ASSERT_GT(pts.size(), 300u);
  for (const auto& p : pts) {
    const Eigen::Vector3d dir = (p - sensor).normalized();
    const Eigen::Vector3d n_world =
        pose.rotation * sdf_gradient(box, pose.inverse() * p);
    EXPECT_LT(n_world.dot(dir), 1e-9);
  }
}

TEST(SampleShapeSurface, NoiseSigmaReflectedInSdfSpread) {
  ShapeParams box;
  box.kind = ShapeKind::kBox;
  box.half_extents = Eigen::Vector3d(2.0, 1.0, 0.75);
  const Pose pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(15, 0, 0.75));
  const double sigma = 0.02;
  const auto pts =
      sample_shape_surface(box, pose, Eigen::Vector3d(0, 0, 1.5), 1500, sigma, 79);
  ASSERT_GE(pts.size(), 1000u);
  double sum = 0.0, sum2 = 0.0;
  for (const auto& p : pts) {
    const double s = sdf_eval(box, pose.inverse() * p);
    sum += s;
    sum2 += s * s;
  }
  const double n = static_cast<double>(pts.size());
  const double stddev = std::sqrt(std::max(0.0, sum2 / n - (sum / n) * (sum / n)));
  EXPECT_NEAR(stddev, sigma, 0.2 * sigma);
}

TEST(SampleShapeSurface, ObjectBehindSensorYieldsEmpty) {
  ShapeParams box;
  box.half_extents = Eigen::Vector3d(1, 1, 1);
  const Pose behind(Eigen::Matrix3d::Identity(), Eigen::Vector3d(-10, 0, 0));
  const auto pts = sample_shape_surface(box, behind, Eigen::Vector3d(0, 0, 0), 50, 0.0, 80,
                                        Eigen::Vector3d(1, 0, 0));
  EXPECT_TRUE(pts.empty());

  const Pose out_of_range(Eigen::Matrix3d::Identity(), Eigen::Vector3d(1e4, 0, 0));
  const auto far_pts =
      sample_shape_surface(box, out_of_range, Eigen::Vector3d(0, 0, 0), 50, 0.0, 81);
  EXPECT_TRUE(far_pts.empty());
}

TEST(ScenarioConfig, ValidationErrors) {
  ScenarioConfig cfg;
  cfg.duration = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.duration = 10;
  cfg.keypoint_outlier_rate = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.keypoint_outlier_rate = 0.0;
  cfg.camera.baseline = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ScenarioIo, ParseRejectsBadSchemaAndNamesKeys) {
  nlohmann::json j;
  j["duration"] = 10;
  EXPECT_THROW(scenario_from_json(j), ConfigError);  // missing schema_version
  j["schema_version"] = 1;
  EXPECT_NO_THROW(scenario_from_json(j));
  j["objects"] = nlohmann::json::array({nlohmann::json::object()});
  try {
    scenario_from_json(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("objects[0]"), std::string::npos);
  }
}

TEST(ScenarioIo, DatasetWriteProducesExpectedFiles) {
  namespace fs = std::filesystem;
  const auto cfg = straight_road_config();
  const auto s = generate_scenario(cfg);
  const auto dir = fs::temp_directory_path() / "mbslam_dataset_test";
  fs::remove_all(dir);
  write_dataset(s, dir.string());
  EXPECT_TRUE(fs::exists(dir / "frames.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "gt_camera.txt"));
  EXPECT_TRUE(fs::exists(dir / "gt_obj_0.txt"));
  EXPECT_TRUE(fs::exists(dir / "scans" / "0000.ply"));
  const auto traj = read_tum((dir / "gt_camera.txt").string());
  ASSERT_EQ(traj.size(), s.frames.size());
  EXPECT_LT((traj[5].pose.matrix() - s.truth.camera_to_world[5].matrix()).cwiseAbs().maxCoeff(),
            1e-12);
  const auto scan = read_ply_scan((dir / "scans" / "0000.ply").string());
  EXPECT_EQ(scan.size(), s.frames[0].scan.size());
  fs::remove_all(dir);
}
