// mbslam - scene map operations
// SPDX-License-Identifier: MIT

#ifndef MBSLAM_MAP_MAP_HPP
#define MBSLAM_MAP_MAP_HPP

#include <algorithm>
#include <map>
#include <utility>
#include <vector>

#include "mbslam/core/errors.hpp"
#include "mbslam/map/types.hpp"

namespace mbslam {

/// The map: clusters keyed by id. Single-writer structure; the BA snapshots
/// poses and points, optimizes, then writes back.
struct SceneMap {
  std::map<int, Cluster> clusters;
  int next_cluster_id = 0;
  int next_point_id = 0;

  Cluster& add_cluster(ClassLabel label, Mobility mobility) {
    Cluster c;
    c.id = next_cluster_id++;
    c.label = label;
    c.mobility = mobility;
    return clusters.emplace(c.id, std::move(c)).first->second;
  }

  std::vector<const Cluster*> static_clusters() const {
    std::vector<const Cluster*> out;
    for (const auto& [id, c] : clusters) {
      if (c.mobility == Mobility::kStatic) out.push_back(&c);
    }
    return out;
  }

  std::vector<Cluster*> dynamic_clusters() {
    std::vector<Cluster*> out;
    for (auto& [id, c] : clusters) {
      if (c.mobility == Mobility::kDynamic) out.push_back(&c);
    }
    return out;
  }

  /// Cluster owning a given point id, or nullptr.
  const Cluster* cluster_of_point(int point_id) const {
    for (const auto& [id, c] : clusters) {
      if (c.points.count(point_id)) return &c;
    }
    return nullptr;
  }
};

/// Advances a dynamic cluster by one timestamp: stores and returns
/// pose(t) = exp(xi) * pose(t-1). Re-orthonormalizes the rotation when
/// composition drift exceeds 1e-7.
inline Pose update_object_pose(Cluster& cluster, int t, const Twist& xi) {
  const auto it = cluster.pose_history.find(t - 1);
  if (it == cluster.pose_history.end()) {
    throw MissingPreviousPose("cluster " + std::to_string(cluster.id) +
                              " has no pose at t=" + std::to_string(t - 1));
  }
  Pose next = exp_se3(xi) * it->second;
  if (next.orthogonality_error() > 1e-7) {
    next = next.orthonormalized();
  }
  cluster.pose_history[t] = next;
  cluster.twist_history[t] = xi;
  return next;
}

/// One semantic vote from a 2D observation.
struct SemanticVote {
  ClassLabel label;
  int instance_id;
};

/// Fuses per-observation votes into a (class, instance) decision: majority
/// class first, then majority instance within that class. Ties break to the
/// lowest instance id (and lowest class value).
inline SemanticVote fuse_point_semantics(const std::vector<SemanticVote>& votes) {
  if (votes.empty()) throw InsufficientData("fuse_point_semantics needs at least one vote");
  std::map<int, int> class_counts;
  for (const auto& v : votes) class_counts[static_cast<int>(v.label)]++;
  int best_class = -1, best_class_count = 0;
  for (const auto& [cls, count] : class_counts) {
    if (count > best_class_count) {
      best_class = cls;
      best_class_count = count;
    }
  }
  std::map<int, int> instance_counts;
  for (const auto& v : votes) {
    if (static_cast<int>(v.label) == best_class) instance_counts[v.instance_id]++;
  }
  int best_inst = -1, best_inst_count = 0;
  for (const auto& [inst, count] : instance_counts) {
    if (count > best_inst_count) {
      best_inst = inst;
      best_inst_count = count;
    }
  }
  return {static_cast<ClassLabel>(best_class), best_inst};
}

}  // namespace mbslam

#endif  // MBSLAM_MAP_MAP_HPP
