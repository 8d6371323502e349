// mbslam - scenario config parsing and dataset export
// SPDX-License-Identifier: MIT
//
// Scenario files are versioned JSON. Parse errors name the offending key.
// A generated dataset directory contains:
//   frames.jsonl    one JSON object per frame (observations, detections)
//   scans/NNNN.ply  camera-frame LiDAR scan per frame
//   gt_camera.txt   TUM-format camera-to-world ground truth
//   gt_obj_<k>.txt  TUM-format object-to-world ground truth per object

#ifndef MBSLAM_SIM_SCENARIO_IO_HPP
#define MBSLAM_SIM_SCENARIO_IO_HPP

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "mbslam/eval/trajectory_io.hpp"
#include "mbslam/io/ply.hpp"
#include "mbslam/sim/simulator.hpp"

namespace mbslam {

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& j, const std::string& key,
                                         const std::string& ctx) {
  if (!j.contains(key)) {
    throw ConfigError("missing key '" + (ctx.empty() ? key : ctx + "." + key) + "'");
  }
  return j.at(key);
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

inline Twist parse_twist(const nlohmann::json& arr, const std::string& ctx) {
  if (!arr.is_array() || arr.size() != 6) {
    throw ConfigError("'" + ctx + "' must be a 6-element array (v, w)");
  }
  Twist xi;
  for (int i = 0; i < 6; ++i) xi(i) = arr[i].get<double>();
  return xi;
}

inline Eigen::Vector3d parse_vec3(const nlohmann::json& arr, const std::string& ctx) {
  if (!arr.is_array() || arr.size() != 3) {
    throw ConfigError("'" + ctx + "' must be a 3-element array");
  }
  return {arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()};
}

inline std::vector<TwistSegment> parse_program(const nlohmann::json& arr,
                                               const std::string& ctx) {
  std::vector<TwistSegment> program;
  for (const auto& seg : arr) {
    TwistSegment ts;
    ts.from_frame = get_or<int>(seg, "from", 0);
    ts.twist = parse_twist(require_key(seg, "twist", ctx), ctx + ".twist");
    program.push_back(ts);
  }
  return program;
}

inline ShapeKind parse_shape_kind(const std::string& s, const std::string& ctx) {
  if (s == "box") return ShapeKind::kBox;
  if (s == "ellipsoid") return ShapeKind::kEllipsoid;
  if (s == "rounded_box") return ShapeKind::kRoundedBox;
  throw ConfigError("'" + ctx + ".kind' must be box|ellipsoid|rounded_box, got '" + s + "'");
}

inline const char* shape_kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::kBox: return "box";
    case ShapeKind::kEllipsoid: return "ellipsoid";
    case ShapeKind::kRoundedBox: return "rounded_box";
  }
  return "box";
}

}  // namespace detail

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  using detail::get_or;
  using detail::require_key;
  ScenarioConfig cfg;
  const int version = get_or<int>(j, "schema_version", -1);
  if (version != 1) {
    throw ConfigError("'schema_version' must be 1");
  }
  cfg.name = get_or<std::string>(j, "name", "scenario");
  cfg.seed = get_or<std::uint64_t>(j, "seed", 1);
  cfg.noise_seed = get_or<std::uint64_t>(j, "noise_seed", cfg.seed);
  cfg.duration = require_key(j, "duration", "").get<int>();
  cfg.frame_dt = get_or<double>(j, "frame_dt", 0.1);
  cfg.camera_height = get_or<double>(j, "camera_height", 1.5);
  cfg.static_points = get_or<int>(j, "static_points", 200);
  cfg.world_length = get_or<double>(j, "world_length", 60.0);
  cfg.corridor_half_width = get_or<double>(j, "corridor_half_width", 8.0);

  if (j.contains("camera")) {
    const auto& cam = j.at("camera");
    cfg.camera.fx = get_or<double>(cam, "fx", cfg.camera.fx);
    cfg.camera.fy = get_or<double>(cam, "fy", cfg.camera.fy);
    cfg.camera.cx = get_or<double>(cam, "cx", cfg.camera.cx);
    cfg.camera.cy = get_or<double>(cam, "cy", cfg.camera.cy);
    cfg.camera.baseline = get_or<double>(cam, "baseline", cfg.camera.baseline);
    cfg.camera.width = get_or<int>(cam, "width", cfg.camera.width);
    cfg.camera.height = get_or<int>(cam, "height", cfg.camera.height);
  }
  if (j.contains("camera_twists")) {
    cfg.camera_twists = detail::parse_program(j.at("camera_twists"), "camera_twists");
  }
  if (j.contains("objects")) {
    int idx = 0;
    for (const auto& jo : j.at("objects")) {
      const std::string ctx = "objects[" + std::to_string(idx++) + "]";
      ObjectSpec spec;
      const auto& shape = require_key(jo, "shape", ctx);
      spec.shape.kind = detail::parse_shape_kind(
          require_key(shape, "kind", ctx + ".shape").get<std::string>(), ctx + ".shape");
      spec.shape.half_extents = detail::parse_vec3(
          require_key(shape, "half_extents", ctx + ".shape"), ctx + ".shape.half_extents");
      spec.shape.exponent = get_or<double>(shape, "exponent", 4.0);
      const auto& pose = require_key(jo, "initial_pose", ctx);
      const Eigen::Vector3d t =
          detail::parse_vec3(require_key(pose, "translation", ctx + ".initial_pose"),
                             ctx + ".initial_pose.translation");
      const double yaw = get_or<double>(pose, "yaw", 0.0);
      Eigen::Matrix3d rz;
      rz << std::cos(yaw), -std::sin(yaw), 0, std::sin(yaw), std::cos(yaw), 0, 0, 0, 1;
      spec.initial_pose = Pose(rz, t);
      if (jo.contains("twist_program")) {
        spec.twist_program =
            detail::parse_program(jo.at("twist_program"), ctx + ".twist_program");
      }
      spec.label = class_from_string(get_or<std::string>(jo, "class", "car"));
      spec.keypoints = get_or<int>(jo, "keypoints", 30);
      cfg.objects.push_back(std::move(spec));
    }
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    cfg.keypoint_noise_sigma = get_or<double>(n, "keypoint_sigma_px", 0.0);
    cfg.keypoint_outlier_rate = get_or<double>(n, "keypoint_outlier_rate", 0.0);
    cfg.match_dropout_rate = get_or<double>(n, "match_dropout_rate", 0.0);
    cfg.label_error_rate = get_or<double>(n, "label_error_rate", 0.0);
    cfg.lidar_noise_sigma = get_or<double>(n, "lidar_sigma_m", 0.0);
    cfg.detection_position_sigma = get_or<double>(n, "detection_position_sigma_m", 0.0);
    cfg.detection_yaw_sigma = get_or<double>(n, "detection_yaw_sigma_rad", 0.0);
    cfg.detection_dropout_rate = get_or<double>(n, "detection_dropout_rate", 0.0);
  }
  if (j.contains("lidar")) {
    const auto& l = j.at("lidar");
    cfg.lidar_rays_per_object = get_or<int>(l, "rays_per_object", 300);
    cfg.lidar_ground_rays = get_or<int>(l, "ground_rays", 400);
  }
  cfg.validate();
  return cfg;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  // accept either a bare scenario or a file with a "scenario" section
  if (j.contains("scenario")) return scenario_from_json(j.at("scenario"));
  return scenario_from_json(j);
}

inline nlohmann::json pose_to_tum_json(const Pose& p) {
  const Eigen::Quaterniond q(p.rotation);
  return nlohmann::json::array(
      {p.translation.x(), p.translation.y(), p.translation.z(), q.x(), q.y(), q.z(), q.w()});
}

/// Writes a generated scenario to a dataset directory.
inline void write_dataset(const Scenario& s, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "scans");

  std::ofstream frames_out(fs::path(dir) / "frames.jsonl");
  if (!frames_out) throw Error("cannot write frames.jsonl in " + dir);
  for (const auto& f : s.frames) {
    nlohmann::json jf;
    jf["id"] = f.id;
    jf["timestamp"] = f.timestamp;
    nlohmann::json obs_arr = nlohmann::json::array();
    for (const auto& o : f.observations) {
      nlohmann::json jo;
      jo["pixel"] = {o.pixel(0), o.pixel(1), o.pixel(2)};
      jo["point_id"] = o.point_id;
      jo["class"] = to_string(o.class_label);
      jo["instance"] = o.instance_id;
      jo["variance"] = o.covariance_diagonal(0);
      obs_arr.push_back(std::move(jo));
    }
    jf["observations"] = std::move(obs_arr);
    nlohmann::json det_arr = nlohmann::json::array();
    for (const auto& d : f.detections) {
      nlohmann::json jd;
      jd["pose"] = pose_to_tum_json(d.pose);
      jd["dimensions"] = {d.dimensions(0), d.dimensions(1), d.dimensions(2)};
      jd["score"] = d.score;
      det_arr.push_back(std::move(jd));
    }
    jf["detections"] = std::move(det_arr);
    frames_out << jf.dump() << "\n";

    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << f.id << ".ply";
    write_ply_scan((fs::path(dir) / "scans" / name.str()).string(), f.scan);
  }

  Trajectory cam;
  for (std::size_t i = 0; i < s.truth.camera_to_world.size(); ++i) {
    cam.push_back({s.frames[i].timestamp, s.truth.camera_to_world[i]});
  }
  write_tum((fs::path(dir) / "gt_camera.txt").string(), cam);
  for (const auto& [obj_id, poses] : s.truth.object_poses) {
    Trajectory traj;
    for (std::size_t i = 0; i < poses.size(); ++i) {
      traj.push_back({s.frames[i].timestamp, poses[i]});
    }
    write_tum((fs::path(dir) / ("gt_obj_" + std::to_string(obj_id) + ".txt")).string(), traj);
  }
}

}  // namespace mbslam

#endif  // MBSLAM_SIM_SCENARIO_IO_HPP
