// mbslam - deterministic synthetic world generator
// SPDX-License-Identifier: MIT
//
// Replaces the learned front-end stack: emits stereo keypoint observations
// with a match oracle, LiDAR scans ray-sampled from analytic shape surfaces,
// and noisy 3D detections, together with full ground truth. A scenario is a
// pure function of its seeds: the world layout depends on `seed` only, the
// noise streams on `noise_seed` only.

#ifndef MBSLAM_SIM_SIMULATOR_HPP
#define MBSLAM_SIM_SIMULATOR_HPP

#include <Eigen/Geometry>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "mbslam/core/camera.hpp"
#include "mbslam/core/errors.hpp"
#include "mbslam/core/rng.hpp"
#include "mbslam/core/se3.hpp"
#include "mbslam/map/types.hpp"
#include "mbslam/shape/sdf.hpp"

namespace mbslam {

/// Piecewise-constant world-frame twist program: the segment with the largest
/// from_frame <= i is active at frame i.
struct TwistSegment {
  int from_frame = 0;
  Twist twist = Twist::Zero();
};

inline Twist twist_at(const std::vector<TwistSegment>& program, int frame) {
  Twist active = Twist::Zero();
  for (const auto& seg : program) {
    if (seg.from_frame <= frame) active = seg.twist;
  }
  return active;
}

struct ObjectSpec {
  ShapeParams shape;
  Pose initial_pose;  // T_wo at frame 0, canonical frame at the box center
  std::vector<TwistSegment> twist_program;
  ClassLabel label = ClassLabel::kCar;
  int keypoints = 30;
};

struct ScenarioConfig {
  int schema_version = 1;
  std::string name = "scenario";
  std::uint64_t seed = 1;
  std::uint64_t noise_seed = 1;  // split from `seed`: world layout vs noise
  int duration = 50;
  double frame_dt = 0.1;  // seconds between frames
  double camera_height = 1.5;
  std::vector<TwistSegment> camera_twists;
  std::vector<ObjectSpec> objects;

  int static_points = 200;
  double world_length = 60.0;  // static points spread over [2, world_length] ahead
  double corridor_half_width = 8.0;

  double keypoint_noise_sigma = 0.0;   // pixels
  double keypoint_outlier_rate = 0.0;  // fraction of matches replaced by wrong pixels
  double match_dropout_rate = 0.0;     // fraction of observations left unmatched
  double label_error_rate = 0.0;       // fraction of observations with a wrong class vote

  double lidar_noise_sigma = 0.0;  // meters along the ray
  int lidar_rays_per_object = 300;
  int lidar_ground_rays = 400;

  double detection_position_sigma = 0.0;  // meters, ground-plane components
  double detection_yaw_sigma = 0.0;       // radians about world z
  double detection_dropout_rate = 0.0;

  StereoCamera camera;

  void validate() const {
    auto check_rate = [](double r, const char* name) {
      if (r < 0.0 || r > 1.0) throw ConfigError(std::string(name) + " must be in [0,1]");
    };
    auto check_sigma = [](double s, const char* name) {
      if (s < 0.0) throw ConfigError(std::string(name) + " must be >= 0");
    };
    if (duration < 1) throw ConfigError("duration must be >= 1");
    if (camera.baseline <= 0.0) throw ConfigError("stereo baseline must be > 0");
    check_sigma(keypoint_noise_sigma, "keypoint_noise_sigma");
    check_sigma(lidar_noise_sigma, "lidar_noise_sigma");
    check_sigma(detection_position_sigma, "detection_position_sigma");
    check_sigma(detection_yaw_sigma, "detection_yaw_sigma");
    check_rate(keypoint_outlier_rate, "keypoint_outlier_rate");
    check_rate(match_dropout_rate, "match_dropout_rate");
    check_rate(detection_dropout_rate, "detection_dropout_rate");
    check_rate(label_error_rate, "label_error_rate");
    for (const auto& obj : objects) {
      if ((obj.shape.half_extents.array() <= 0.0).any()) {
        throw ConfigError("object half extents must be positive");
      }
    }
  }

  /// Camera-to-world pose at frame 0: optical axis along world +x, world z up,
  /// camera at (0, 0, camera_height). Shared with the pipeline as calibration.
  Pose initial_camera_to_world() const {
    Eigen::Matrix3d r;
    // columns: world coords of the camera x (right), y (down), z (forward) axes
    r << 0, 0, 1, -1, 0, 0, 0, -1, 0;
    return Pose(r, Eigen::Vector3d(0, 0, camera_height));
  }
};

/// Raw per-frame sensor record, everything expressed in the camera frame.
struct SimFrame {
  int id = 0;
  double timestamp = 0.0;
  std::vector<Observation> observations;
  std::vector<LidarPoint> scan;        // camera-frame positions
  std::vector<Detection> detections;   // object-to-camera poses
};

struct ObsTruth {
  int point_id = -1;
  bool is_outlier = false;
};

struct GroundTruth {
  std::vector<Pose> camera_to_world;                // per frame
  std::map<int, std::vector<Pose>> object_poses;    // object id -> T_wo per frame
  std::map<int, std::vector<Twist>> object_twists;  // twist[t] maps pose t-1 -> t; twist[0] = 0
  std::map<int, Eigen::Vector3d> point_positions;   // world (static) or object frame
  std::map<int, int> point_owner;                   // -1 for static points
  std::map<int, ClassLabel> point_class;
  std::vector<std::vector<ObsTruth>> obs_truth;     // aligned with SimFrame::observations
};

/// Samples visible surface points of a posed shape by sphere tracing rays from
/// the sensor origin, then perturbs each hit along its ray by N(0, sigma^2).
/// Backfaces are never produced: the march stops at the first crossing. When a
/// forward axis is given, hits behind the sensor plane are discarded, so
/// objects fully behind the sensor yield an empty list; hits beyond max_range
/// are discarded either way.
inline std::vector<Eigen::Vector3d> sample_shape_surface(
    const ShapeParams& shape, const Pose& pose, const Eigen::Vector3d& sensor_origin,
    int rays, double noise_sigma, std::uint64_t seed,
    const std::optional<Eigen::Vector3d>& forward = std::nullopt, double max_range = 150.0) {
  std::vector<Eigen::Vector3d> out;
  if (rays <= 0) return out;
  Rng rng(seed);
  const Pose world_to_obj = pose.inverse();
  const Eigen::Vector3d origin_obj = world_to_obj * sensor_origin;
  const Eigen::Vector3d h = shape.half_extents;
  out.reserve(rays);
  int attempts = 0;
  const int max_attempts = rays * 8;
  while (static_cast<int>(out.size()) < rays && attempts++ < max_attempts) {
    // aim at a random point inside the bounding box of the shape
    const Eigen::Vector3d target(rng.uniform(-h.x(), h.x()), rng.uniform(-h.y(), h.y()),
                                 rng.uniform(-h.z(), h.z()));
    Eigen::Vector3d dir = target - origin_obj;
    const double dist = dir.norm();
    if (dist < 1e-9 || dist > max_range) break;
    dir /= dist;
    const double t = sdf_raycast(shape, origin_obj, dir, dist + 4.0 * h.norm());
    if (t <= 0.0) continue;
    Eigen::Vector3d hit_obj = origin_obj + t * dir;
    if (noise_sigma > 0.0) {
      hit_obj += rng.gaussian(noise_sigma) * dir;
    }
    const Eigen::Vector3d hit_world = pose * hit_obj;
    if (forward && (hit_world - sensor_origin).dot(*forward) <= 0.0) continue;
    out.push_back(hit_world);
  }
  return out;
}

namespace detail {

// Deterministic surface keypoints: bisection along rays cast outward from the
// shape center.
inline Eigen::Vector3d surface_point(const ShapeParams& shape, const Eigen::Vector3d& dir) {
  const Eigen::Vector3d u = dir.normalized();
  double lo = 0.0, hi = 4.0 * shape.half_extents.maxCoeff();
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (sdf_eval(shape, mid * u) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) * u;
}

inline int instance_of_static(ClassLabel label) {
  return static_cast<int>(label);  // one static instance per class
}

}  // namespace detail

struct Scenario {
  std::vector<SimFrame> frames;
  GroundTruth truth;
};

inline Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  Scenario s;
  auto& gt = s.truth;

  // --- world layout (geometry seed only) ---
  Rng geo(mix_seed(cfg.seed, 1));
  struct StaticPoint {
    int id;
    Eigen::Vector3d pos;
    ClassLabel label;
  };
  std::vector<StaticPoint> static_pts;
  int next_id = 0;
  for (int i = 0; i < cfg.static_points; ++i) {
    StaticPoint p;
    p.id = next_id++;
    if (i % 2 == 0) {
      p.label = ClassLabel::kRoad;
      p.pos = Eigen::Vector3d(geo.uniform(2.0, cfg.world_length),
                              geo.uniform(-cfg.corridor_half_width, cfg.corridor_half_width),
                              0.0);
    } else {
      p.label = ClassLabel::kBuilding;
      const double side = geo.uniform() < 0.5 ? -1.0 : 1.0;
      p.pos = Eigen::Vector3d(geo.uniform(0.0, cfg.world_length),
                              side * cfg.corridor_half_width, geo.uniform(0.5, 5.0));
    }
    gt.point_positions[p.id] = p.pos;
    gt.point_owner[p.id] = -1;
    gt.point_class[p.id] = p.label;
    static_pts.push_back(p);
  }

  struct ObjectState {
    int index;
    const ObjectSpec* spec;
    Pose pose;  // T_wo
    std::vector<std::pair<int, Eigen::Vector3d>> keypoints;  // id, object-frame position
  };
  std::vector<ObjectState> objects;
  for (std::size_t k = 0; k < cfg.objects.size(); ++k) {
    ObjectState st;
    st.index = static_cast<int>(k);
    st.spec = &cfg.objects[k];
    st.pose = cfg.objects[k].initial_pose;
    Rng obj_geo(mix_seed(cfg.seed, 100 + k));
    for (int i = 0; i < cfg.objects[k].keypoints; ++i) {
      Eigen::Vector3d dir(obj_geo.gaussian(), obj_geo.gaussian(), obj_geo.gaussian());
      if (dir.norm() < 1e-9) dir = Eigen::Vector3d::UnitX();
      const Eigen::Vector3d p_obj = detail::surface_point(cfg.objects[k].shape, dir);
      const int id = next_id++;
      st.keypoints.emplace_back(id, p_obj);
      gt.point_positions[id] = p_obj;
      gt.point_owner[id] = st.index;
      gt.point_class[id] = cfg.objects[k].label;
    }
    objects.push_back(std::move(st));
    gt.object_poses[static_cast<int>(k)] = {};
    gt.object_twists[static_cast<int>(k)] = {};
  }

  Pose cam_to_world = cfg.initial_camera_to_world();

  for (int frame = 0; frame < cfg.duration; ++frame) {
    if (frame > 0) {
      cam_to_world = exp_se3(twist_at(cfg.camera_twists, frame - 1)) * cam_to_world;
      for (auto& obj : objects) {
        const Twist xi = twist_at(obj.spec->twist_program, frame - 1);
        obj.pose = exp_se3(xi) * obj.pose;
        gt.object_twists[obj.index].push_back(xi);
      }
    } else {
      for (auto& obj : objects) gt.object_twists[obj.index].push_back(Twist::Zero());
    }
    gt.camera_to_world.push_back(cam_to_world);
    for (auto& obj : objects) gt.object_poses[obj.index].push_back(obj.pose);

    SimFrame f;
    f.id = frame;
    f.timestamp = frame * cfg.frame_dt;
    const Pose world_to_cam = cam_to_world.inverse();

    // --- keypoint observations ---
    Rng obs_rng(mix_seed(cfg.noise_seed, 3000000ULL + frame));
    std::vector<ObsTruth> truth_row;
    auto emit_observation = [&](int point_id, const Eigen::Vector3d& p_world,
                                ClassLabel label, int instance) {
      const Eigen::Vector3d p_cam = world_to_cam * p_world;
      if (p_cam.z() < 0.2) return;
      Eigen::Vector3d uvr = cfg.camera.project(p_cam);
      if (!cfg.camera.in_image(uvr(0), uvr(1)) || !cfg.camera.in_image(uvr(2), uvr(1))) return;

      Observation obs;
      obs.frame_id = frame;
      ObsTruth ot;
      ot.point_id = point_id;

      const bool dropped = obs_rng.uniform() < cfg.match_dropout_rate;
      const bool outlier = !dropped && obs_rng.uniform() < cfg.keypoint_outlier_rate;
      if (outlier) {
        uvr(0) = obs_rng.uniform(0.0, cfg.camera.width);
        uvr(1) = obs_rng.uniform(0.0, cfg.camera.height);
        uvr(2) = uvr(0) - obs_rng.uniform(1.0, 50.0);
        ot.is_outlier = true;
      } else if (cfg.keypoint_noise_sigma > 0.0) {
        uvr(0) += obs_rng.gaussian(cfg.keypoint_noise_sigma);
        uvr(1) += obs_rng.gaussian(cfg.keypoint_noise_sigma);
        uvr(2) += obs_rng.gaussian(cfg.keypoint_noise_sigma);
      }
      obs.pixel = uvr;
      obs.point_id = dropped ? -1 : point_id;
      const double var = std::max(cfg.keypoint_noise_sigma * cfg.keypoint_noise_sigma, 1e-8);
      obs.covariance_diagonal = Eigen::Vector3d::Constant(var);
      obs.class_label = label;
      obs.instance_id = instance;
      if (cfg.label_error_rate > 0.0 && obs_rng.uniform() < cfg.label_error_rate) {
        obs.class_label = static_cast<ClassLabel>(obs_rng.uniform_int(0, 6));
      }
      f.observations.push_back(std::move(obs));
      truth_row.push_back(ot);
    };

    for (const auto& sp : static_pts) {
      emit_observation(sp.id, sp.pos, sp.label, detail::instance_of_static(sp.label));
    }
    for (const auto& obj : objects) {
      for (const auto& [id, p_obj] : obj.keypoints) {
        emit_observation(id, obj.pose * p_obj, obj.spec->label, 10 + obj.index);
      }
    }

    // --- LiDAR scan (camera frame) ---
    Rng lidar_rng(mix_seed(cfg.noise_seed, 4000000ULL + frame));
    const Eigen::Vector3d sensor_w = cam_to_world.translation;
    for (int i = 0; i < cfg.lidar_ground_rays; ++i) {
      // exact ray-plane hits on z = 0, sampled ahead of the camera
      const double range = lidar_rng.uniform(3.0, 0.8 * cfg.world_length);
      const double bearing = lidar_rng.uniform(-1.0, 1.0);  // radians about forward
      const Eigen::Vector3d fwd = cam_to_world.rotation.col(2);  // optical axis in world
      Eigen::Vector3d dir_w(std::cos(bearing) * fwd.x() - std::sin(bearing) * fwd.y(),
                            std::sin(bearing) * fwd.x() + std::cos(bearing) * fwd.y(), 0.0);
      if (dir_w.norm() < 1e-9) continue;
      dir_w.normalize();
      Eigen::Vector3d target = sensor_w + range * dir_w;
      target.z() = 0.0;
      Eigen::Vector3d ray = target - sensor_w;
      const double dist = ray.norm();
      if (dist < 1e-6 || std::abs(ray.z()) < 1e-9) continue;
      ray /= dist;
      Eigen::Vector3d hit = target;
      if (cfg.lidar_noise_sigma > 0.0) hit += lidar_rng.gaussian(cfg.lidar_noise_sigma) * ray;
      LidarPoint lp;
      lp.position = world_to_cam * hit;
      lp.label = ClassLabel::kRoad;
      lp.score = lidar_rng.uniform(0.7, 1.0);
      f.scan.push_back(lp);
    }
    for (const auto& obj : objects) {
      const auto samples = sample_shape_surface(
          obj.spec->shape, obj.pose, sensor_w, cfg.lidar_rays_per_object,
          cfg.lidar_noise_sigma, mix_seed(cfg.noise_seed, 5000000ULL + frame * 64 + obj.index),
          cam_to_world.rotation.col(2));
      for (const auto& p_world : samples) {
        LidarPoint lp;
        lp.position = world_to_cam * p_world;
        lp.label = obj.spec->label;
        lp.score = lidar_rng.uniform(0.7, 1.0);
        f.scan.push_back(lp);
      }
    }

    // --- detections (camera frame) ---
    Rng det_rng(mix_seed(cfg.noise_seed, 6000000ULL + frame));
    for (const auto& obj : objects) {
      if (det_rng.uniform() < cfg.detection_dropout_rate) continue;
      Pose noisy = obj.pose;
      if (cfg.detection_position_sigma > 0.0) {
        noisy.translation.x() += det_rng.gaussian(cfg.detection_position_sigma);
        noisy.translation.y() += det_rng.gaussian(cfg.detection_position_sigma);
      }
      if (cfg.detection_yaw_sigma > 0.0) {
        const double yaw = det_rng.gaussian(cfg.detection_yaw_sigma);
        Eigen::Matrix3d rz;
        rz << std::cos(yaw), -std::sin(yaw), 0, std::sin(yaw), std::cos(yaw), 0, 0, 0, 1;
        noisy.rotation = rz * noisy.rotation;
      }
      Detection det;
      det.pose = world_to_cam * noisy;
      det.dimensions = 2.0 * obj.spec->shape.half_extents;
      det.score = det_rng.uniform(0.6, 1.0);
      f.detections.push_back(det);
    }

    gt.obs_truth.push_back(std::move(truth_row));
    s.frames.push_back(std::move(f));
  }
  return s;
}

}  // namespace mbslam

#endif  // MBSLAM_SIM_SIMULATOR_HPP
