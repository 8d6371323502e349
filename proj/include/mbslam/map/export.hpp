// mbslam - map export: PLY point cloud + JSON cluster metadata
// SPDX-License-Identifier: MIT

#ifndef MBSLAM_MAP_EXPORT_HPP
#define MBSLAM_MAP_EXPORT_HPP

#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "mbslam/io/ply.hpp"
#include "mbslam/map/map.hpp"

namespace mbslam {

/// All map points as a colored cloud; dynamic cluster points are placed with
/// the cluster's latest pose.
inline void export_map_ply(const SceneMap& map, const std::string& path) {
  std::vector<PlyColorPoint> pts;
  for (const auto& [id, cluster] : map.clusters) {
    const auto rgb = class_color(cluster.label);
    for (const auto& [pid, mp] : cluster.points) {
      Eigen::Vector3d pos = mp.position;
      if (cluster.mobility == Mobility::kDynamic && !cluster.pose_history.empty()) {
        pos = cluster.latest_pose() * pos;
      }
      pts.push_back({pos, rgb});
    }
  }
  write_ply_colored(path, pts);
}

inline nlohmann::json pose_to_json_3x4(const Pose& pose) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rows.push_back(pose.rotation(r, c));
    rows.push_back(pose.translation(r));
  }
  return rows;
}

/// Cluster metadata: id, class, box dimensions, fitted shape and the pose
/// history as 3x4 row-major matrices keyed by timestamp.
inline nlohmann::json cluster_metadata_json(const SceneMap& map) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [id, cluster] : map.clusters) {
    nlohmann::json c;
    c["id"] = cluster.id;
    c["class"] = to_string(cluster.label);
    c["mobility"] = cluster.mobility == Mobility::kStatic ? "static" : "dynamic";
    c["num_points"] = cluster.points.size();
    if (cluster.box_dimensions) {
      c["box_dimensions"] = {(*cluster.box_dimensions)(0), (*cluster.box_dimensions)(1),
                             (*cluster.box_dimensions)(2)};
    }
    if (cluster.shape) {
      nlohmann::json s;
      s["kind"] = cluster.shape->kind == ShapeKind::kBox
                      ? "box"
                      : (cluster.shape->kind == ShapeKind::kEllipsoid ? "ellipsoid"
                                                                      : "rounded_box");
      s["half_extents"] = {cluster.shape->half_extents(0), cluster.shape->half_extents(1),
                           cluster.shape->half_extents(2)};
      s["exponent"] = cluster.shape->exponent;
      c["shape"] = s;
    }
    nlohmann::json poses = nlohmann::json::object();
    for (const auto& [t, pose] : cluster.pose_history) {
      poses[std::to_string(t)] = pose_to_json_3x4(pose);
    }
    c["poses"] = poses;
    out.push_back(c);
  }
  return out;
}

inline void export_cluster_metadata(const SceneMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << cluster_metadata_json(map).dump(2) << "\n";
}

}  // namespace mbslam

#endif  // MBSLAM_MAP_EXPORT_HPP
