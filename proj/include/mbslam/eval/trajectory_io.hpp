// mbslam - trajectory file I/O (TUM and KITTI pose formats)
// SPDX-License-Identifier: MIT

#ifndef MBSLAM_EVAL_TRAJECTORY_IO_HPP
#define MBSLAM_EVAL_TRAJECTORY_IO_HPP

#include <Eigen/Geometry>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mbslam/core/errors.hpp"
#include "mbslam/core/se3.hpp"

namespace mbslam {

/// Timestamped entity-to-world poses, timestamps strictly increasing.
struct TrajectoryEntry {
  double timestamp = 0.0;
  Pose pose;
};
using Trajectory = std::vector<TrajectoryEntry>;

/// TUM format: `t tx ty tz qx qy qz qw`, '#' starts a comment.
inline void write_tum(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << std::setprecision(17);
  for (const auto& e : traj) {
    const Eigen::Quaterniond q(e.pose.rotation);
    out << e.timestamp << " " << e.pose.translation.x() << " " << e.pose.translation.y()
        << " " << e.pose.translation.z() << " " << q.x() << " " << q.y() << " " << q.z()
        << " " << q.w() << "\n";
  }
}

inline Trajectory read_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    TrajectoryEntry e;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> e.timestamp >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) continue;
    Eigen::Quaterniond q(qw, qx, qy, qz);
    q.normalize();
    e.pose = Pose(q.toRotationMatrix(), Eigen::Vector3d(tx, ty, tz));
    traj.push_back(e);
  }
  return traj;
}

/// KITTI pose format: 12 floats per line, the 3x4 transform row-major.
inline void write_kitti(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << std::setprecision(17);
  for (const auto& e : traj) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << e.pose.rotation(r, c) << " ";
      out << e.pose.translation(r) << (r == 2 ? "" : " ");
    }
    out << "\n";
  }
}

}  // namespace mbslam

#endif  // MBSLAM_EVAL_TRAJECTORY_IO_HPP
