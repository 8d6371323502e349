// mbslam - map, frame and observation types
// SPDX-License-Identifier: MIT

#ifndef MBSLAM_MAP_TYPES_HPP
#define MBSLAM_MAP_TYPES_HPP

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mbslam/core/se3.hpp"
#include "mbslam/shape/sdf.hpp"

namespace mbslam {

enum class ClassLabel : int {
  kRoad = 0,
  kBuilding = 1,
  kCar = 2,
  kBike = 3,
  kHuman = 4,
  kBus = 5,
  kUnknown = 6,
};

enum class Mobility { kStatic, kDynamic };

inline const char* to_string(ClassLabel c) {
  switch (c) {
    case ClassLabel::kRoad: return "road";
    case ClassLabel::kBuilding: return "building";
    case ClassLabel::kCar: return "car";
    case ClassLabel::kBike: return "bike";
    case ClassLabel::kHuman: return "human";
    case ClassLabel::kBus: return "bus";
    case ClassLabel::kUnknown: return "unknown";
  }
  return "unknown";
}

inline ClassLabel class_from_string(const std::string& s) {
  if (s == "road") return ClassLabel::kRoad;
  if (s == "building") return ClassLabel::kBuilding;
  if (s == "car") return ClassLabel::kCar;
  if (s == "bike") return ClassLabel::kBike;
  if (s == "human") return ClassLabel::kHuman;
  if (s == "bus") return ClassLabel::kBus;
  return ClassLabel::kUnknown;
}

/// Default class -> mobility table: road/building/unknown anchor the static
/// map, everything else is a priori dynamic.
inline Mobility default_mobility(ClassLabel c) {
  switch (c) {
    case ClassLabel::kRoad:
    case ClassLabel::kBuilding:
    case ClassLabel::kUnknown:
      return Mobility::kStatic;
    default:
      return Mobility::kDynamic;
  }
}

/// One 3D landmark. World frame for static clusters, object frame for dynamic
/// clusters.
struct MapPoint {
  int id = -1;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  int observation_count = 0;
};

/// 3D plane ax + by + cz + d = 0 with unit normal (a, b, c).
struct Plane {
  Eigen::Vector4d coeffs = Eigen::Vector4d(0, 0, 1, 0);

  Eigen::Vector3d normal() const { return coeffs.head<3>(); }
  double signed_distance(const Eigen::Vector3d& p) const {
    return coeffs.head<3>().dot(p) + coeffs(3);
  }
};

/// A keypoint observation. pixel is (u, v) monocular or (u_left, v, u_right)
/// stereo; the covariance is diagonal with per-component variances.
struct Observation {
  int frame_id = -1;
  int point_id = -1;  // -1: keypoint detected but not matched to a map point
  Eigen::VectorXd pixel;
  Eigen::VectorXd covariance_diagonal;
  ClassLabel class_label = ClassLabel::kUnknown;
  int instance_id = -1;

  bool is_matched() const { return point_id >= 0; }
  bool is_stereo() const { return pixel.size() == 3; }
};

/// One 3D object detection, pose mapping the canonical object frame to the
/// frame the detection is expressed in (sensor frame in datasets, world frame
/// once anchored by a camera pose).
struct Detection {
  Pose pose;
  Eigen::Vector3d dimensions = Eigen::Vector3d::Ones();  // full lengths l, w, h
  double score = 1.0;
};

/// One LiDAR return plus the semantic label/score of the image pixel it
/// projects to.
struct LidarPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  ClassLabel label = ClassLabel::kUnknown;
  double score = 1.0;
};

/// Per-timestamp working state of the pipeline. camera_pose maps world to
/// camera (the convention used inside the reprojection functions); the scan
/// holds world-frame points once the frame has been anchored.
struct Frame {
  int id = -1;
  double timestamp = 0.0;
  Pose camera_pose;  // T_cw, world -> camera
  std::vector<Observation> observations;
  std::vector<LidarPoint> scan;
  std::vector<Detection> detections;
  bool is_keyframe = false;
};

/// One scene object: its landmarks, trajectory and optional shape surface.
/// Static clusters keep world-frame points and empty histories. Dynamic
/// clusters keep object-frame points, a pose per timestamp and the twist that
/// produced each pose; twist_history[t] maps pose(t-1) to pose(t) by left
/// multiplication.
struct Cluster {
  int id = -1;
  int instance_id = -1;  // segmentation instance this cluster was built from
  ClassLabel label = ClassLabel::kUnknown;
  Mobility mobility = Mobility::kStatic;
  std::map<int, MapPoint> points;
  std::map<int, Pose> pose_history;
  std::map<int, Twist> twist_history;
  std::optional<Eigen::Vector3d> box_dimensions;
  JointModel joint;
  std::optional<ShapeParams> shape;
  std::optional<Plane> plane;
  // World-frame support points appended by LiDAR augmentation, used for
  // plane refits alongside the triangulated map points.
  std::vector<Eigen::Vector3d> plane_support;

  bool has_pose(int t) const { return pose_history.count(t) > 0; }

  const Pose& pose_at(int t) const { return pose_history.at(t); }

  const Pose& latest_pose() const { return pose_history.rbegin()->second; }

  int latest_pose_time() const { return pose_history.rbegin()->first; }

  /// World-frame centroid of the cluster points at timestamp t (dynamic) or
  /// as stored (static).
  Eigen::Vector3d centroid(int t) const {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    if (points.empty()) return c;
    for (const auto& [id, mp] : points) c += mp.position;
    c /= static_cast<double>(points.size());
    if (mobility == Mobility::kDynamic && has_pose(t)) {
      c = pose_at(t) * c;
    }
    return c;
  }
};

}  // namespace mbslam

#endif  // MBSLAM_MAP_TYPES_HPP
