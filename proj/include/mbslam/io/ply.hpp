// mbslam - minimal binary PLY point cloud I/O
// SPDX-License-Identifier: MIT
//
// Two layouts are produced: map exports carry xyz + RGB by class, LiDAR scans
// carry xyz + semantic class + score. The reader parses any binary
// little-endian header made of float/uchar scalar properties and picks out the
// fields it knows by name.

#ifndef MBSLAM_IO_PLY_HPP
#define MBSLAM_IO_PLY_HPP

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mbslam/core/errors.hpp"
#include "mbslam/map/types.hpp"

namespace mbslam {

struct PlyColorPoint {
  Eigen::Vector3d position;
  std::array<std::uint8_t, 3> rgb;
};

inline void write_ply_colored(const std::string& path, const std::vector<PlyColorPoint>& pts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << pts.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  for (const auto& p : pts) {
    const float xyz[3] = {static_cast<float>(p.position.x()),
                          static_cast<float>(p.position.y()),
                          static_cast<float>(p.position.z())};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    out.write(reinterpret_cast<const char*>(p.rgb.data()), 3);
  }
}

inline void write_ply_scan(const std::string& path, const std::vector<LidarPoint>& scan) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << scan.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar class\nproperty float score\n"
      << "end_header\n";
  for (const auto& p : scan) {
    const float xyz[3] = {static_cast<float>(p.position.x()),
                          static_cast<float>(p.position.y()),
                          static_cast<float>(p.position.z())};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    const std::uint8_t cls = static_cast<std::uint8_t>(p.label);
    out.write(reinterpret_cast<const char*>(&cls), 1);
    const float score = static_cast<float>(p.score);
    out.write(reinterpret_cast<const char*>(&score), sizeof(score));
  }
}

inline std::vector<LidarPoint> read_ply_scan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw Error(path + ": not a PLY file");

  std::size_t count = 0;
  struct Prop {
    std::string type;
    std::string name;
  };
  std::vector<Prop> props;
  bool binary_le = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      binary_le = (fmt == "binary_little_endian");
    } else if (tok == "element") {
      std::string name;
      ss >> name >> count;
      if (name != "vertex") throw Error(path + ": unsupported element " + name);
    } else if (tok == "property") {
      Prop p;
      ss >> p.type >> p.name;
      props.push_back(p);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!binary_le) throw Error(path + ": expected binary little-endian PLY");

  std::vector<LidarPoint> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    LidarPoint& lp = out[i];
    for (const auto& p : props) {
      double value = 0.0;
      if (p.type == "float" || p.type == "float32") {
        float v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        value = v;
      } else if (p.type == "uchar" || p.type == "uint8") {
        std::uint8_t v;
        in.read(reinterpret_cast<char*>(&v), 1);
        value = v;
      } else if (p.type == "double" || p.type == "float64") {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        value = v;
      } else {
        throw Error(path + ": unsupported property type " + p.type);
      }
      if (p.name == "x") lp.position.x() = value;
      else if (p.name == "y") lp.position.y() = value;
      else if (p.name == "z") lp.position.z() = value;
      else if (p.name == "class") lp.label = static_cast<ClassLabel>(static_cast<int>(value));
      else if (p.name == "score") lp.score = value;
    }
  }
  if (!in) throw Error(path + ": truncated payload");
  return out;
}

/// Fixed display colors per semantic class for map exports.
inline std::array<std::uint8_t, 3> class_color(ClassLabel c) {
  switch (c) {
    case ClassLabel::kRoad: return {90, 90, 90};
    case ClassLabel::kBuilding: return {170, 120, 60};
    case ClassLabel::kCar: return {30, 120, 220};
    case ClassLabel::kBike: return {220, 60, 160};
    case ClassLabel::kHuman: return {230, 40, 40};
    case ClassLabel::kBus: return {40, 180, 90};
    case ClassLabel::kUnknown: return {200, 200, 200};
  }
  return {200, 200, 200};
}

}  // namespace mbslam

#endif  // MBSLAM_IO_PLY_HPP
