// mbslam - LiDAR fusion and registration tests
// SPDX-License-Identifier: MIT

#include "mbslam/lidar/fusion.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "mbslam/core/rng.hpp"
#include "mbslam/lidar/kdtree.hpp"
#include "mbslam/sim/simulator.hpp"

using namespace mbslam;

namespace {

std::vector<Eigen::Vector3d> box_scan(int rays, double noise, std::uint64_t seed) {
  ShapeParams box;
  box.kind = ShapeKind::kBox;
  box.half_extents = Eigen::Vector3d(2.0, 0.9, 0.75);
  const Pose pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(10, 1, 0.75));
  // oblique viewpoint: three orthogonal faces visible, so the transform is
  // fully constrained
  return sample_shape_surface(box, pose, Eigen::Vector3d(0, -6, 4), rays, noise, seed);
}

double rotation_angle_deg(const Eigen::Matrix3d& r) {
  return std::acos(std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0)) * 180.0 / M_PI;
}

Pose yaw_translation(double yaw_rad, const Eigen::Vector3d& t) {
  Eigen::Matrix3d rz;
  rz << std::cos(yaw_rad), -std::sin(yaw_rad), 0, std::sin(yaw_rad), std::cos(yaw_rad), 0, 0,
      0, 1;
  return Pose(rz, t);
}

}  // namespace

TEST(KdTree, NearestMatchesBruteForce) {
  Rng rng(51);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 500; ++i) {
    pts.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
  }
  const KdTree3 tree(pts);
  for (int q = 0; q < 200; ++q) {
    const Eigen::Vector3d query(rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-6, 6));
    int brute = -1;
    double brute_d = 1e18;
    for (int i = 0; i < 500; ++i) {
      const double d = (pts[i] - query).squaredNorm();
      if (d < brute_d) {
        brute_d = d;
        brute = i;
      }
    }
    EXPECT_EQ(tree.nearest(query, 1e9), brute);
  }
}

TEST(KdTree, KnnContainsTrueNeighbors) {
  Rng rng(52);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 300; ++i) {
    pts.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
  }
  const KdTree3 tree(pts);
  const Eigen::Vector3d query(0.5, -0.25, 1.0);
  auto ids = tree.knn(query, 10);
  ASSERT_EQ(ids.size(), 10u);
  std::vector<std::pair<double, int>> brute;
  for (int i = 0; i < 300; ++i) brute.emplace_back((pts[i] - query).squaredNorm(), i);
  std::sort(brute.begin(), brute.end());
  std::sort(ids.begin(), ids.end());
  std::vector<int> expected;
  for (int i = 0; i < 10; ++i) expected.push_back(brute[i].second);
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(ids, expected);
}

TEST(AssociateDetections, DetectionAtCentroid) {
  Detection det;
  det.pose = Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(3, 1, 0));
  const auto pairs =
      associate_detections({det}, {{7, Eigen::Vector3d(3, 1, 0)}});
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].cluster_id, 7);
  EXPECT_EQ(pairs[0].detection_index, 0);
  EXPECT_NEAR(pairs[0].distance, 0.0, 1e-12);
}

TEST(AssociateDetections, GateAtTwoMeters) {
  Detection det;
  det.pose = Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(2.5, 0, 0));
  const auto pairs = associate_detections({det}, {{0, Eigen::Vector3d::Zero()}});
  EXPECT_TRUE(pairs.empty());
}

TEST(AssociateDetections, GreedyCrossedConfigurationIsOptimal) {
  // c1 at origin, c2 at (0.8, 0, 0); d1 nearest to c2, d2 nearest to c1.
  const std::vector<std::pair<int, Eigen::Vector3d>> clusters = {
      {1, Eigen::Vector3d(0, 0, 0)}, {2, Eigen::Vector3d(0.8, 0, 0)}};
  Detection d1, d2;
  d1.pose.translation = Eigen::Vector3d(0.5, 0, 0);   // 0.5 from c1, 0.3 from c2
  d2.pose.translation = Eigen::Vector3d(0.0, 0.4, 0); // 0.4 from c1, ~0.894 from c2
  const auto pairs = associate_detections({d1, d2}, clusters);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].cluster_id, 2);
  EXPECT_EQ(pairs[0].detection_index, 0);
  EXPECT_NEAR(pairs[0].distance, 0.3, 1e-12);
  EXPECT_EQ(pairs[1].cluster_id, 1);
  EXPECT_EQ(pairs[1].detection_index, 1);
  EXPECT_NEAR(pairs[1].distance, 0.4, 1e-12);
  // brute force over the two full assignments confirms greedy is optimal here
  const double greedy_total = pairs[0].distance + pairs[1].distance;
  const double other_total = (d1.pose.translation - clusters[0].second).norm() +
                             (d2.pose.translation - clusters[1].second).norm();
  EXPECT_LT(greedy_total, other_total);
}

TEST(AssociateDetections, OneToOne) {
  Rng rng(53);
  std::vector<Detection> dets(5);
  std::vector<std::pair<int, Eigen::Vector3d>> clusters;
  for (int i = 0; i < 5; ++i) {
    dets[i].pose.translation = Eigen::Vector3d(rng.uniform(0, 4), rng.uniform(0, 4), 0);
    clusters.emplace_back(i, Eigen::Vector3d(rng.uniform(0, 4), rng.uniform(0, 4), 0));
  }
  const auto pairs = associate_detections(dets, clusters);
  std::set<int> seen_c, seen_d;
  for (const auto& p : pairs) {
    EXPECT_TRUE(seen_c.insert(p.cluster_id).second);
    EXPECT_TRUE(seen_d.insert(p.detection_index).second);
    EXPECT_LT(p.distance, kAssociationGate);
  }
}

TEST(DetectionTwist, IdenticalDetectionsGiveZero) {
  Detection d;
  d.pose = yaw_translation(0.3, Eigen::Vector3d(2, 1, 0));
  EXPECT_LT(detection_twist(d, d).norm(), 1e-12);
}

TEST(DetectionTwist, PureTranslationStep) {
  Detection prev, next;
  next.pose.translation = Eigen::Vector3d(1, 0, 0);
  const Twist xi = detection_twist(next, prev);
  Twist expected;
  expected << 1, 0, 0, 0, 0, 0;
  EXPECT_LT((xi - expected).norm(), 1e-15);
}

TEST(DetectionTwist, UnbiasedUnderPositionNoise) {
  // Monte-Carlo: noisy detections of a ground-truth screw step have a twist
  // error distribution with zero mean (within 3 standard errors).
  Rng rng(54);
  const Pose p1 = yaw_translation(0.4, Eigen::Vector3d(5, 2, 0.75));
  Twist step;
  step << 1.0, 0.2, 0, 0, 0, 0.05;
  const Pose p2 = exp_se3(step) * p1;
  const double sigma = 0.1;
  const int trials = 1000;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_sq = Eigen::Vector3d::Zero();
  for (int i = 0; i < trials; ++i) {
    Detection d1, d2;
    d1.pose = p1;
    d2.pose = p2;
    d1.pose.translation += Eigen::Vector3d(rng.gaussian(sigma), rng.gaussian(sigma), 0);
    d2.pose.translation += Eigen::Vector3d(rng.gaussian(sigma), rng.gaussian(sigma), 0);
    const Eigen::Vector3d err = (detection_twist(d2, d1) - step).head<3>();
    mean += err;
    mean_sq += err.cwiseProduct(err);
  }
  mean /= trials;
  mean_sq /= trials;
  for (int c = 0; c < 3; ++c) {
    const double variance = mean_sq(c) - mean(c) * mean(c);
    const double stderr_c = std::sqrt(variance / trials);
    EXPECT_LE(std::abs(mean(c)), 3.0 * stderr_c + 1e-12);
  }
}

TEST(FuseDimensions, SingleEntry) {
  const Eigen::Vector3d d(4, 2, 1.5);
  EXPECT_EQ(fuse_dimensions({d}), d);
}

TEST(FuseDimensions, MedianRejectsOutlier) {
  const auto fused = fuse_dimensions(
      {Eigen::Vector3d(4, 2, 1.5), Eigen::Vector3d(4.1, 2, 1.5), Eigen::Vector3d(9, 9, 9)});
  EXPECT_EQ(fused, Eigen::Vector3d(4.1, 2, 1.5));
}

TEST(FuseDimensions, LowerMedianOnEvenCount) {
  const auto fused =
      fuse_dimensions({Eigen::Vector3d(4, 2, 1.5), Eigen::Vector3d(4.2, 2.2, 1.7)});
  EXPECT_EQ(fused, Eigen::Vector3d(4, 2, 1.5));
}

TEST(CropPointsInBox, CenterAndBoundary) {
  std::vector<LidarPoint> scan(3);
  scan[0].position = Eigen::Vector3d(0, 0, 0);
  scan[1].position = Eigen::Vector3d(1.05, 0, 0);  // half extent 1 + 0.05
  scan[2].position = Eigen::Vector3d(1.15, 0, 0);  // beyond margin
  const auto ids =
      crop_points_in_box(scan, Pose::identity(), Eigen::Vector3d(2, 2, 2), 0.1);
  EXPECT_EQ(ids, (std::vector<int>{0, 1}));
}

TEST(CropPointsInBox, MatchesBruteForceOnRotatedBox) {
  const Pose pose = yaw_translation(M_PI / 4.0, Eigen::Vector3d(2, -1, 0.5));
  const Eigen::Vector3d dims(4, 2, 1.5);
  const double margin = 0.1;
  Rng rng(55);
  std::vector<LidarPoint> scan(10000);
  for (auto& p : scan) {
    p.position = Eigen::Vector3d(rng.uniform(-2, 6), rng.uniform(-5, 3), rng.uniform(-2, 3));
  }
  const auto ids = crop_points_in_box(scan, pose, dims, margin);
  std::set<int> crop_set(ids.begin(), ids.end());
  const Pose inv = pose.inverse();
  int inside_rotated_outside_aabb = 0;
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector3d q = inv * scan[i].position;
    const bool inside = std::abs(q.x()) <= dims.x() / 2 + margin &&
                        std::abs(q.y()) <= dims.y() / 2 + margin &&
                        std::abs(q.z()) <= dims.z() / 2 + margin;
    EXPECT_EQ(crop_set.count(i) > 0, inside);
    const Eigen::Vector3d rel = scan[i].position - pose.translation;
    const bool inside_aabb = std::abs(rel.x()) <= dims.x() / 2 + margin &&
                             std::abs(rel.y()) <= dims.y() / 2 + margin &&
                             std::abs(rel.z()) <= dims.z() / 2 + margin;
    if (inside && !inside_aabb) ++inside_rotated_outside_aabb;
  }
  EXPECT_GT(inside_rotated_outside_aabb, 0);  // the rotation matters
}

TEST(Gicp, IdentityOnIdenticalClouds) {
  const auto cloud = box_scan(400, 0.0, 61);
  ASSERT_GE(cloud.size(), 300u);
  const auto res = gicp_register(cloud, cloud, Pose::identity());
  EXPECT_TRUE(res.converged);
  EXPECT_LT(res.transform.translation.norm(), 1e-9);
  EXPECT_LT(rotation_angle_deg(res.transform.rotation), 1e-9);
  EXPECT_NEAR(res.rmse, 0.0, 1e-9);
  EXPECT_NEAR(res.fitness, 1.0, 1e-12);
}

TEST(Gicp, RecoversKnownTransformOnCleanClouds) {
  const auto source = box_scan(600, 0.0, 62);
  ASSERT_GE(source.size(), 500u);
  const Pose truth = yaw_translation(5.0 * M_PI / 180.0, Eigen::Vector3d(0.3, 0, 0));
  std::vector<Eigen::Vector3d> target;
  for (const auto& p : source) target.push_back(truth * p);
  const auto res = gicp_register(source, target, Pose::identity());
  EXPECT_TRUE(res.converged);
  EXPECT_LT((res.transform.translation - truth.translation).norm(), 1e-3);
  EXPECT_LT(rotation_angle_deg(res.transform.rotation.transpose() * truth.rotation), 0.01);
}

TEST(Gicp, RecoversTransformUnderNoise) {
  auto source = box_scan(1500, 0.02, 63);
  ASSERT_GE(source.size(), 1000u);
  const Pose truth = yaw_translation(5.0 * M_PI / 180.0, Eigen::Vector3d(0.3, 0, 0));
  auto target_base = box_scan(1500, 0.02, 64);  // independent sampling + noise
  std::vector<Eigen::Vector3d> target;
  for (const auto& p : target_base) target.push_back(truth * p);
  const auto res = gicp_register(source, target, Pose::identity());
  EXPECT_LT((res.transform.translation - truth.translation).norm(), 0.02);
  EXPECT_LT(rotation_angle_deg(res.transform.rotation.transpose() * truth.rotation), 0.5);
}

TEST(Gicp, ThrowsOnTinyClouds) {
  std::vector<Eigen::Vector3d> tiny(5, Eigen::Vector3d::Zero());
  EXPECT_THROW(gicp_register(tiny, tiny, Pose::identity()), TooFewPoints);
}

TEST(RegistrationTwist, IdentityRegistrationGivesZero) {
  RegistrationResult reg;
  reg.converged = true;
  const Pose prev = yaw_translation(1.0, Eigen::Vector3d(4, 5, 0));
  EXPECT_LT(registration_twist(reg, prev).norm(), 1e-12);
}

TEST(RegistrationTwist, FramesCoincide) {
  RegistrationResult reg;
  reg.converged = true;
  reg.transform.translation = Eigen::Vector3d(1, 0, 0);
  const Twist xi = registration_twist(reg, Pose::identity());
  Twist expected;
  expected << 1, 0, 0, 0, 0, 0;
  EXPECT_LT((xi - expected).norm(), 1e-15);
}

TEST(RegistrationTwist, AdjointTransportMatchesDirectComposition) {
  RegistrationResult reg;
  reg.converged = true;
  reg.transform.translation = Eigen::Vector3d(1, 0, 0);  // object-frame step
  const Pose prev = yaw_translation(M_PI / 2.0, Eigen::Vector3d::Zero());
  const Twist xi = registration_twist(reg, prev);
  EXPECT_NEAR(xi(0), 0.0, 1e-12);
  EXPECT_NEAR(xi(1), 1.0, 1e-12);
  EXPECT_NEAR(xi.tail<4>().norm(), 0.0, 1e-12);
  // exp(xi) * prev equals the registered next pose
  const Pose next = prev * reg.transform;
  EXPECT_LT(((exp_se3(xi) * prev).matrix() - next.matrix()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(RegistrationTwist, ThrowsWhenNotConverged) {
  RegistrationResult reg;
  reg.converged = false;
  EXPECT_THROW(registration_twist(reg, Pose::identity()), NotConverged);
}

TEST(AugmentPlanePoints, EmptyScanLeavesClusterUnchanged) {
  Cluster road;
  road.label = ClassLabel::kRoad;
  EXPECT_EQ(augment_plane_points({}, road, 0.8), 0u);
  EXPECT_TRUE(road.plane_support.empty());
}

TEST(AugmentPlanePoints, AppendsMatchingClassAboveThreshold) {
  Cluster road;
  road.label = ClassLabel::kRoad;
  std::vector<LidarPoint> scan(500);
  Rng rng(56);
  for (auto& p : scan) {
    p.position = Eigen::Vector3d(rng.uniform(0, 10), rng.uniform(-3, 3), 0);
    p.label = ClassLabel::kRoad;
    p.score = 0.9;
  }
  scan[0].label = ClassLabel::kCar;      // wrong class
  scan[1].score = 0.5;                   // below threshold
  EXPECT_EQ(augment_plane_points(scan, road, 0.8), 498u);
  EXPECT_EQ(road.plane_support.size(), 498u);
}
