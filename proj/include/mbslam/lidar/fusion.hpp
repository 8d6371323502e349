// mbslam - scan-derived constraints: detection association, box fusion,
// point clustering and registration/detection twists
// SPDX-License-Identifier: MIT

#ifndef MBSLAM_LIDAR_FUSION_HPP
#define MBSLAM_LIDAR_FUSION_HPP

#include <algorithm>
#include <set>
#include <vector>

#include "mbslam/core/se3.hpp"
#include "mbslam/lidar/gicp.hpp"
#include "mbslam/map/types.hpp"

namespace mbslam {

/// Detection-to-cluster distance gate from the association rule: a detection
/// is valid for a cluster only within 2 meters of its centroid.
inline constexpr double kAssociationGate = 2.0;

struct Association {
  int cluster_id;
  int detection_index;
  double distance;
};

/// Greedy one-to-one assignment by ascending center-to-centroid distance,
/// pairs at or beyond the gate discarded. Deterministic: ties break on cluster
/// id, then detection index.
inline std::vector<Association> associate_detections(
    const std::vector<Detection>& detections,
    const std::vector<std::pair<int, Eigen::Vector3d>>& cluster_centroids,
    double gate = kAssociationGate) {
  struct Cand {
    double dist;
    int cluster_pos;
    int det_index;
  };
  std::vector<Cand> cands;
  for (std::size_t c = 0; c < cluster_centroids.size(); ++c) {
    for (std::size_t d = 0; d < detections.size(); ++d) {
      const double dist =
          (detections[d].pose.translation - cluster_centroids[c].second).norm();
      if (dist < gate) {
        cands.push_back({dist, static_cast<int>(c), static_cast<int>(d)});
      }
    }
  }
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.cluster_pos != b.cluster_pos) return a.cluster_pos < b.cluster_pos;
    return a.det_index < b.det_index;
  });
  std::set<int> used_clusters, used_dets;
  std::vector<Association> out;
  for (const auto& cand : cands) {
    if (used_clusters.count(cand.cluster_pos) || used_dets.count(cand.det_index)) continue;
    used_clusters.insert(cand.cluster_pos);
    used_dets.insert(cand.det_index);
    out.push_back({cluster_centroids[cand.cluster_pos].first, cand.det_index, cand.dist});
  }
  return out;
}

/// Twist linking two world-frame detections of the same object. Computed from
/// absolute detections only, so it carries no accumulated tracking drift.
inline Twist detection_twist(const Detection& next, const Detection& prev) {
  return log_se3(next.pose * prev.pose.inverse());
}

/// Component-wise median of a dimension history; even counts take the lower
/// median so the result is always an observed value.
inline Eigen::Vector3d fuse_dimensions(const std::vector<Eigen::Vector3d>& history) {
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  if (history.empty()) return out;
  std::vector<double> comp(history.size());
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < history.size(); ++i) comp[i] = history[i](c);
    const std::size_t k = (comp.size() - 1) / 2;
    std::nth_element(comp.begin(), comp.begin() + k, comp.end());
    out(c) = comp[k];
  }
  return out;
}

/// World-frame scan points whose object-frame coordinates lie inside the box
/// grown by the margin. Returns indices into the scan.
inline std::vector<int> crop_points_in_box(const std::vector<LidarPoint>& scan,
                                           const Pose& pose, const Eigen::Vector3d& dims,
                                           double margin = 0.1) {
  const Pose world_to_obj = pose.inverse();
  const Eigen::Vector3d bound = 0.5 * dims + Eigen::Vector3d::Constant(margin);
  std::vector<int> out;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const Eigen::Vector3d p_obj = world_to_obj * scan[i].position;
    if ((p_obj.cwiseAbs().array() <= bound.array()).all()) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

/// World-frame twist implied by an object-frame registration increment:
/// the object-frame transform is transported through the previous pose, so
/// exp(result) * pose_prev is the registered next pose.
inline Twist registration_twist(const RegistrationResult& reg, const Pose& pose_prev) {
  if (!reg.converged) {
    throw NotConverged("registration twist requested from a non-converged result");
  }
  return log_se3(pose_prev * reg.transform * pose_prev.inverse());
}

/// Appends scan points carrying the cluster's class at score >= threshold to
/// the cluster's plane support set. The caller guarantees the cluster class is
/// in the configured planar-class set.
inline std::size_t augment_plane_points(const std::vector<LidarPoint>& scan, Cluster& cluster,
                                        double score_threshold) {
  std::size_t added = 0;
  for (const auto& p : scan) {
    if (p.label == cluster.label && p.score >= score_threshold) {
      cluster.plane_support.push_back(p.position);
      ++added;
    }
  }
  return added;
}

}  // namespace mbslam

#endif  // MBSLAM_LIDAR_FUSION_HPP
