// mbslam - 3D kd-tree for nearest-neighbor queries
// SPDX-License-Identifier: MIT

#ifndef MBSLAM_LIDAR_KDTREE_HPP
#define MBSLAM_LIDAR_KDTREE_HPP

#include <Eigen/Core>
#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

namespace mbslam {

/// Median-split kd-tree over a fixed point set. Built once, queried read-only.
class KdTree3 {
 public:
  explicit KdTree3(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
    std::vector<int> indices(points_.size());
    std::iota(indices.begin(), indices.end(), 0);
    nodes_.reserve(points_.size());
    root_ = build(indices, 0, static_cast<int>(indices.size()), 0);
  }

  std::size_t size() const { return points_.size(); }
  const Eigen::Vector3d& point(int i) const { return points_[i]; }

  /// Index of the nearest point within max_dist, or -1.
  int nearest(const Eigen::Vector3d& query, double max_dist,
              double* dist_out = nullptr) const {
    int best = -1;
    double best_sq = max_dist * max_dist;
    search_nearest(root_, query, best, best_sq);
    if (dist_out && best >= 0) *dist_out = std::sqrt(best_sq);
    return best;
  }

  /// Indices of the k nearest points (unordered).
  std::vector<int> knn(const Eigen::Vector3d& query, int k) const {
    std::priority_queue<std::pair<double, int>> heap;  // max-heap on distance
    search_knn(root_, query, k, heap);
    std::vector<int> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
      out.push_back(heap.top().second);
      heap.pop();
    }
    return out;
  }

 private:
  struct Node {
    int point = -1;
    int left = -1;
    int right = -1;
    int axis = 0;
  };

  int build(std::vector<int>& indices, int lo, int hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const int mid = (lo + hi) / 2;
    std::nth_element(indices.begin() + lo, indices.begin() + mid, indices.begin() + hi,
                     [&](int a, int b) { return points_[a](axis) < points_[b](axis); });
    Node node;
    node.point = indices[mid];
    node.axis = axis;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    nodes_[id].left = build(indices, lo, mid, depth + 1);
    nodes_[id].right = build(indices, mid + 1, hi, depth + 1);
    return id;
  }

  void search_nearest(int node_id, const Eigen::Vector3d& q, int& best,
                      double& best_sq) const {
    if (node_id < 0) return;
    const Node& node = nodes_[node_id];
    const double d_sq = (points_[node.point] - q).squaredNorm();
    if (d_sq < best_sq) {
      best_sq = d_sq;
      best = node.point;
    }
    const double delta = q(node.axis) - points_[node.point](node.axis);
    const int near_side = delta < 0 ? node.left : node.right;
    const int far_side = delta < 0 ? node.right : node.left;
    search_nearest(near_side, q, best, best_sq);
    if (delta * delta < best_sq) search_nearest(far_side, q, best, best_sq);
  }

  void search_knn(int node_id, const Eigen::Vector3d& q, int k,
                  std::priority_queue<std::pair<double, int>>& heap) const {
    if (node_id < 0) return;
    const Node& node = nodes_[node_id];
    const double d_sq = (points_[node.point] - q).squaredNorm();
    if (static_cast<int>(heap.size()) < k) {
      heap.emplace(d_sq, node.point);
    } else if (d_sq < heap.top().first) {
      heap.pop();
      heap.emplace(d_sq, node.point);
    }
    const double delta = q(node.axis) - points_[node.point](node.axis);
    const int near_side = delta < 0 ? node.left : node.right;
    const int far_side = delta < 0 ? node.right : node.left;
    search_knn(near_side, q, k, heap);
    if (static_cast<int>(heap.size()) < k || delta * delta < heap.top().first) {
      search_knn(far_side, q, k, heap);
    }
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace mbslam

#endif  // MBSLAM_LIDAR_KDTREE_HPP
