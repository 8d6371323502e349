// mbslam - sliding-window dynamic bundle adjustment
// SPDX-License-Identifier: MIT
//
// Six residual families over camera poses, joint-restricted object twists and
// static/dynamic points:
//   static reprojection, dynamic reprojection, constant-velocity twist
//   difference, detection-twist prior, registration-twist prior, and surface
//   anchors on dynamic points.
// Object twist variables act as left-multiplied corrections on the tracked
// pose of their keyframe; the twist linking two corrected consecutive poses is
// compared against its neighbors (constant velocity) and against measured
// detection/registration twists. Points are Schur-eliminated from the LM
// normal equations and the reduced system is solved by sparse Cholesky.

#ifndef MBSLAM_BA_BA_HPP
#define MBSLAM_BA_BA_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <map>
#include <vector>

#include "mbslam/core/camera.hpp"
#include "mbslam/core/errors.hpp"
#include "mbslam/core/robust.hpp"
#include "mbslam/core/se3.hpp"
#include "mbslam/map/map.hpp"

namespace mbslam {

struct BAWeights {
  Vector6d w_const = (Vector6d() << 1, 1, 1, 10, 10, 10).finished();
  double detection_sigma = 0.1;  // meters; W_det = sigma^-2 I
  double geo_weight = 25.0;      // W_geo = geo_weight * I  (sigma = 0.2 m)
  double geo_gate = 0.5;         // meters; anchors beyond the gate emit nothing
  double huber_delta = 1.345;

  Vector6d det_diag() const {
    const double s = std::max(detection_sigma, 1e-3);
    return Vector6d::Constant(1.0 / (s * s));
  }
};

/// Twist linking two corrected consecutive poses:
/// log( exp(Pi xi_i) T_i (exp(Pi xi_prev) T_prev)^-1 ).
inline Twist tilde_twist(const Twist& xi_i, const Pose& pose_i, const Twist& xi_prev,
                         const Pose& pose_prev, const JointModel& joint = JointModel::free()) {
  const Pose next = exp_se3(joint.project(xi_i)) * pose_i;
  const Pose prev = exp_se3(joint.project(xi_prev)) * pose_prev;
  return relative_twist(next, prev);
}

/// Measured twist prior between two keyframes of one object.
struct TwistPrior {
  int object_id = -1;
  int frame_prev = -1;
  int frame_next = -1;
  Twist twist = Twist::Zero();
  double rmse = 0.0;  // registration priors only; drives the weight
};

/// Surface anchor for a dynamic point: the point is pulled toward its
/// projection on the fitted shape.
struct SurfaceAnchor {
  int point_id = -1;
  Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
};

/// Fixed-stride keyframe policy: every stride-th frame, capped to the most
/// recent `length` keyframes (length <= 0 keeps all).
inline std::vector<int> marginalize_window(const std::vector<int>& frame_ids, int stride,
                                           int length) {
  std::vector<int> keyframes;
  for (int id : frame_ids) {
    if (stride <= 1 || id % stride == 0) keyframes.push_back(id);
  }
  if (length > 0 && static_cast<int>(keyframes.size()) > length) {
    keyframes.erase(keyframes.begin(), keyframes.end() - length);
  }
  return keyframes;
}

class BAProblem {
 public:
  struct CameraBlock {
    int frame_id = -1;
    Pose pose;  // T_cw
    bool fixed = false;
    int offset = -1;
  };
  struct TwistBlock {
    int object_id = -1;
    int frame_id = -1;
    Pose base_pose;   // tracked pose the twist corrects
    Pose pose;        // current effective pose exp(basis * y) * base_pose
    Eigen::Matrix<double, 6, Eigen::Dynamic> basis;
    Matrix6d projector = Matrix6d::Identity();
    bool fixed = false;
    int offset = -1;
    int dof = 0;
  };
  struct PointBlock {
    int point_id = -1;
    int cluster_id = -1;
    bool dynamic = false;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    int offset = -1;
  };

  struct ReprojResidual {
    int camera = -1;
    int twist = -1;  // -1 for static reprojection
    int point = -1;
    Eigen::VectorXd pixel;
    Eigen::VectorXd inv_sigma;
  };
  enum class TwistResidualKind { kConstVelocity, kDetection, kRegistration };
  struct TwistResidual {
    TwistResidualKind kind = TwistResidualKind::kConstVelocity;
    // const-velocity: blocks (prev, mid, next); priors: (mid, next) with prev = -1
    int t_prev = -1;
    int t_mid = -1;
    int t_next = -1;
    Twist measured = Twist::Zero();
    Vector6d w_sqrt = Vector6d::Ones();
  };
  struct AnchorResidual {
    int point = -1;
    Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
    double w_sqrt = 1.0;
  };

  StereoCamera camera_model;
  RobustKernel kernel;
  std::vector<CameraBlock> cameras;
  std::vector<TwistBlock> twists;
  std::vector<PointBlock> points;
  std::vector<ReprojResidual> reprojections;
  std::vector<TwistResidual> twist_residuals;
  std::vector<AnchorResidual> anchors;

  int pose_dim = 0;   // cameras + twist blocks
  int point_dim = 0;  // 3 * free points

  void assign_offsets() {
    pose_dim = 0;
    for (auto& c : cameras) {
      c.offset = c.fixed ? -1 : pose_dim;
      if (!c.fixed) pose_dim += 6;
    }
    for (auto& t : twists) {
      const bool free_block = !t.fixed && t.dof > 0;
      t.offset = free_block ? pose_dim : -1;
      if (free_block) pose_dim += t.dof;
    }
    point_dim = 0;
    for (auto& p : points) {
      p.offset = point_dim;
      point_dim += 3;
    }
  }

  /// Per-residual evaluation: whitened residual and jacobians w.r.t. the
  /// involved blocks, keyed by ('c' camera, 't' twist, 'p' point, block index).
  struct Eval {
    Eigen::VectorXd r;
    std::vector<std::tuple<char, int, Eigen::MatrixXd>> jacobians;
  };

  Eval eval_reprojection(const ReprojResidual& res, bool with_jacobians) const {
    Eval out;
    const CameraBlock& cam = cameras[res.camera];
    const PointBlock& pt = points[res.point];
    Eigen::Vector3d p_world = pt.position;
    const TwistBlock* tb = res.twist >= 0 ? &twists[res.twist] : nullptr;
    if (tb) p_world = tb->pose * pt.position;
    const Eigen::Vector3d p_cam = cam.pose * p_world;
    const Eigen::Index dim = res.pixel.size();
    Eigen::VectorXd predicted(dim);
    Eigen::MatrixXd jproj;
    if (dim == 3) {
      predicted = camera_model.project(p_cam);
      if (with_jacobians) jproj = camera_model.projection_jacobian(p_cam);
    } else {
      predicted = camera_model.project_mono(p_cam);
      if (with_jacobians) jproj = camera_model.projection_jacobian_mono(p_cam);
    }
    out.r = (res.pixel - predicted).cwiseProduct(res.inv_sigma);
    if (!with_jacobians) return out;

    const Eigen::MatrixXd w_jproj = res.inv_sigma.asDiagonal() * jproj;
    if (!cam.fixed) {
      Eigen::Matrix<double, 3, 6> dp;
      dp.leftCols<3>() = Eigen::Matrix3d::Identity();
      dp.rightCols<3>() = -skew(p_cam);
      out.jacobians.emplace_back('c', res.camera, -(w_jproj * dp));
    }
    if (tb && !tb->fixed && tb->dof > 0) {
      Eigen::Matrix<double, 3, 6> dp;
      dp.leftCols<3>() = Eigen::Matrix3d::Identity();
      dp.rightCols<3>() = -skew(p_world);
      out.jacobians.emplace_back('t', res.twist,
                                 -(w_jproj * cam.pose.rotation * dp * tb->basis));
    }
    const Eigen::Matrix3d dpoint =
        tb ? (cam.pose.rotation * tb->pose.rotation).eval() : cam.pose.rotation;
    out.jacobians.emplace_back('p', res.point, -(w_jproj * dpoint));
    return out;
  }

  Eval eval_twist_residual(const TwistResidual& res, bool with_jacobians) const {
    Eval out;
    const TwistBlock& mid = twists[res.t_mid];
    const TwistBlock& next = twists[res.t_next];
    const Matrix6d& proj = next.projector;
    const Twist tilde_next = relative_twist(next.pose, mid.pose);

    if (res.kind == TwistResidualKind::kConstVelocity) {
      const TwistBlock& prev = twists[res.t_prev];
      const Twist tilde_mid = relative_twist(mid.pose, prev.pose);
      out.r = res.w_sqrt.cwiseProduct(proj * (tilde_next - tilde_mid));
      if (!with_jacobians) return out;
      const Matrix6d w_proj = res.w_sqrt.asDiagonal() * proj;
      if (!next.fixed && next.dof > 0) {
        out.jacobians.emplace_back(
            't', res.t_next, w_proj * se3_left_jacobian_inverse(tilde_next) * next.basis);
      }
      if (!mid.fixed && mid.dof > 0) {
        const Eigen::MatrixXd j =
            w_proj * (-se3_right_jacobian_inverse(tilde_next) -
                      se3_left_jacobian_inverse(tilde_mid)) *
            mid.basis;
        out.jacobians.emplace_back('t', res.t_mid, j);
      }
      if (!prev.fixed && prev.dof > 0) {
        out.jacobians.emplace_back(
            't', res.t_prev, w_proj * se3_right_jacobian_inverse(tilde_mid) * prev.basis);
      }
      return out;
    }

    // detection / registration twist prior
    out.r = res.w_sqrt.cwiseProduct(proj * (res.measured - tilde_next));
    if (!with_jacobians) return out;
    const Matrix6d w_proj = res.w_sqrt.asDiagonal() * proj;
    if (!next.fixed && next.dof > 0) {
      out.jacobians.emplace_back(
          't', res.t_next, -(w_proj * se3_left_jacobian_inverse(tilde_next) * next.basis));
    }
    if (!mid.fixed && mid.dof > 0) {
      out.jacobians.emplace_back(
          't', res.t_mid, w_proj * se3_right_jacobian_inverse(tilde_next) * mid.basis);
    }
    return out;
  }

  Eval eval_anchor(const AnchorResidual& res, bool with_jacobians) const {
    Eval out;
    out.r = res.w_sqrt * (res.anchor - points[res.point].position);
    if (with_jacobians) {
      out.jacobians.emplace_back('p', res.point,
                                 (-res.w_sqrt * Eigen::Matrix3d::Identity()).eval());
    }
    return out;
  }

  template <typename Fn>
  void for_each_residual(bool with_jacobians, Fn&& fn) const {
    for (const auto& r : reprojections) fn(eval_reprojection(r, with_jacobians));
    for (const auto& r : twist_residuals) fn(eval_twist_residual(r, with_jacobians));
    for (const auto& r : anchors) fn(eval_anchor(r, with_jacobians));
  }

  double total_cost() const {
    double cost = 0.0;
    for_each_residual(false, [&](const Eval& e) { cost += kernel.cost(e.r.norm()); });
    return cost;
  }

  /// Applies a combined (pose-part, point-part) update.
  void apply_update(const Eigen::VectorXd& pose_delta, const Eigen::VectorXd& point_delta) {
    for (auto& c : cameras) {
      if (c.offset >= 0) c.pose = exp_se3(pose_delta.segment<6>(c.offset)) * c.pose;
    }
    for (auto& t : twists) {
      if (t.offset >= 0) {
        t.pose = exp_se3(t.basis * pose_delta.segment(t.offset, t.dof)) * t.pose;
      }
    }
    for (auto& p : points) {
      p.position += point_delta.segment<3>(p.offset);
    }
  }

  /// Correction twist currently applied to a twist block.
  Twist correction(const TwistBlock& t) const { return relative_twist(t.pose, t.base_pose); }
};

struct BuildInput {
  std::vector<const Frame*> keyframes;  // ascending frame ids
  std::vector<TwistPrior> detection_priors;
  std::vector<TwistPrior> registration_priors;
  std::vector<SurfaceAnchor> surface_anchors;
  BAWeights weights;
  StereoCamera camera_model;
};

/// Instantiates the six residual families over a keyframe window. The first
/// window camera is held fixed (gauge); each object's earliest in-window twist
/// block is fixed as the anchor of its trajectory chain.
inline BAProblem build_problem(const BuildInput& in, const SceneMap& map) {
  if (in.keyframes.empty()) throw InconsistentWindow("empty keyframe window");
  BAProblem problem;
  problem.camera_model = in.camera_model;
  problem.kernel.delta = in.weights.huber_delta;

  std::map<int, int> camera_index;  // frame id -> block
  for (const auto* f : in.keyframes) {
    BAProblem::CameraBlock cam;
    cam.frame_id = f->id;
    cam.pose = f->camera_pose;
    cam.fixed = problem.cameras.empty();
    camera_index[f->id] = static_cast<int>(problem.cameras.size());
    problem.cameras.push_back(cam);
  }

  // point id -> owning cluster
  std::map<int, const Cluster*> owner;
  for (const auto& [cid, cluster] : map.clusters) {
    for (const auto& [pid, mp] : cluster.points) owner[pid] = &cluster;
  }

  // twist blocks for every dynamic cluster pose inside the window
  std::map<std::pair<int, int>, int> twist_index;  // (cluster, frame) -> block
  for (const auto& [cid, cluster] : map.clusters) {
    if (cluster.mobility != Mobility::kDynamic) continue;
    bool first_in_window = true;
    for (const auto* f : in.keyframes) {
      if (!cluster.has_pose(f->id)) continue;
      BAProblem::TwistBlock tb;
      tb.object_id = cid;
      tb.frame_id = f->id;
      tb.base_pose = cluster.pose_at(f->id);
      tb.pose = tb.base_pose;
      tb.basis = cluster.joint.basis;
      tb.projector = cluster.joint.projection_matrix();
      tb.dof = cluster.joint.dof();
      tb.fixed = first_in_window;
      first_in_window = false;
      twist_index[{cid, f->id}] = static_cast<int>(problem.twists.size());
      problem.twists.push_back(std::move(tb));
    }
  }

  // reprojection residuals + point blocks; MAD whitening per dynamic cluster
  std::map<int, int> point_index;
  std::map<int, std::vector<Eigen::VectorXd>> dyn_raw_residuals;  // cluster -> residuals
  struct PendingDyn {
    int camera;
    int twist;
    int point;
    Eigen::VectorXd pixel;
    int cluster_id;
  };
  std::vector<PendingDyn> pending_dynamic;

  for (const auto* f : in.keyframes) {
    const int cam_block = camera_index.at(f->id);
    for (const auto& obs : f->observations) {
      if (!obs.is_matched()) continue;
      const auto owner_it = owner.find(obs.point_id);
      if (owner_it == owner.end()) continue;
      const Cluster& cluster = *owner_it->second;

      if (!point_index.count(obs.point_id)) {
        BAProblem::PointBlock pb;
        pb.point_id = obs.point_id;
        pb.cluster_id = cluster.id;
        pb.dynamic = cluster.mobility == Mobility::kDynamic;
        pb.position = cluster.points.at(obs.point_id).position;
        point_index[obs.point_id] = static_cast<int>(problem.points.size());
        problem.points.push_back(pb);
      }
      const int point_block = point_index.at(obs.point_id);

      if (cluster.mobility == Mobility::kStatic) {
        BAProblem::ReprojResidual res;
        res.camera = cam_block;
        res.twist = -1;
        res.point = point_block;
        res.pixel = obs.pixel;
        res.inv_sigma = obs.covariance_diagonal.cwiseSqrt().cwiseInverse();
        problem.reprojections.push_back(std::move(res));
      } else {
        const auto t_it = twist_index.find({cluster.id, f->id});
        if (t_it == twist_index.end()) {
          throw InconsistentWindow("cluster " + std::to_string(cluster.id) +
                                   " observed at frame " + std::to_string(f->id) +
                                   " without a pose");
        }
        PendingDyn pd;
        pd.camera = cam_block;
        pd.twist = t_it->second;
        pd.point = point_block;
        pd.pixel = obs.pixel;
        pd.cluster_id = cluster.id;
        pending_dynamic.push_back(pd);
        // raw residual at the build state for the MAD scale
        const Eigen::Vector3d p_world =
            problem.twists[t_it->second].pose * cluster.points.at(obs.point_id).position;
        const Eigen::Vector3d p_cam = f->camera_pose * p_world;
        if (p_cam.z() > 1e-6) {
          Eigen::VectorXd predicted =
              obs.pixel.size() == 3
                  ? Eigen::VectorXd(in.camera_model.project(p_cam))
                  : Eigen::VectorXd(in.camera_model.project_mono(p_cam));
          dyn_raw_residuals[cluster.id].push_back(obs.pixel - predicted);
        }
      }
    }
  }
  std::map<int, Eigen::VectorXd> dyn_inv_sigma;
  for (const auto& [cid, residuals] : dyn_raw_residuals) {
    if (residuals.size() >= 2) {
      dyn_inv_sigma[cid] = mad_covariance_diagonal(residuals).cwiseSqrt().cwiseInverse();
    }
  }
  for (auto& pd : pending_dynamic) {
    BAProblem::ReprojResidual res;
    res.camera = pd.camera;
    res.twist = pd.twist;
    res.point = pd.point;
    res.pixel = pd.pixel;
    const auto it = dyn_inv_sigma.find(pd.cluster_id);
    res.inv_sigma = it != dyn_inv_sigma.end()
                        ? it->second
                        : Eigen::VectorXd::Ones(pd.pixel.size());
    problem.reprojections.push_back(std::move(res));
  }

  // constant-velocity residuals over consecutive keyframe triples
  for (const auto& [cid, cluster] : map.clusters) {
    if (cluster.mobility != Mobility::kDynamic) continue;
    std::vector<int> blocks;
    for (const auto* f : in.keyframes) {
      const auto it = twist_index.find({cid, f->id});
      if (it != twist_index.end()) blocks.push_back(it->second);
    }
    for (std::size_t i = 2; i < blocks.size(); ++i) {
      BAProblem::TwistResidual res;
      res.kind = BAProblem::TwistResidualKind::kConstVelocity;
      res.t_prev = blocks[i - 2];
      res.t_mid = blocks[i - 1];
      res.t_next = blocks[i];
      res.w_sqrt = in.weights.w_const.cwiseSqrt();
      problem.twist_residuals.push_back(res);
    }
  }

  const auto add_prior = [&](const TwistPrior& prior, BAProblem::TwistResidualKind kind,
                             const Vector6d& weight_diag) {
    const auto a = twist_index.find({prior.object_id, prior.frame_prev});
    const auto b = twist_index.find({prior.object_id, prior.frame_next});
    if (a == twist_index.end() || b == twist_index.end()) return;
    BAProblem::TwistResidual res;
    res.kind = kind;
    res.t_mid = a->second;
    res.t_next = b->second;
    res.measured = prior.twist;
    res.w_sqrt = weight_diag.cwiseSqrt();
    problem.twist_residuals.push_back(res);
  };
  for (const auto& p : in.detection_priors) {
    add_prior(p, BAProblem::TwistResidualKind::kDetection, in.weights.det_diag());
  }
  for (const auto& p : in.registration_priors) {
    const double rmse = std::max(p.rmse, 1e-3);
    add_prior(p, BAProblem::TwistResidualKind::kRegistration,
              Vector6d::Constant(1.0 / (rmse * rmse)));
  }

  // geometry anchors, gated on the current distance to the anchor
  for (const auto& a : in.surface_anchors) {
    const auto it = point_index.find(a.point_id);
    if (it == point_index.end()) continue;
    const BAProblem::PointBlock& pb = problem.points[it->second];
    if (!pb.dynamic) continue;
    if ((a.anchor - pb.position).norm() >= in.weights.geo_gate) continue;
    BAProblem::AnchorResidual res;
    res.point = it->second;
    res.anchor = a.anchor;
    res.w_sqrt = std::sqrt(in.weights.geo_weight);
    problem.anchors.push_back(res);
  }

  problem.assign_offsets();
  return problem;
}

struct SolveOptions {
  int max_iterations = 50;
  double lambda_init = 1e-4;
  double cost_tolerance = 1e-8;    // relative decrease
  double update_tolerance = 1e-8;  // step norm
  bool use_schur = true;
};

struct SolveReport {
  std::vector<double> cost_trace;  // accepted costs, strictly decreasing
  int iterations = 0;
  bool converged = false;
};

namespace detail {

struct NormalEquations {
  Eigen::MatrixXd h_pp;
  Eigen::MatrixXd h_pl;
  std::vector<Eigen::Matrix3d> h_ll;  // per-point blocks
  Eigen::VectorXd b_p;
  Eigen::VectorXd b_l;
};

inline NormalEquations linearize(const BAProblem& problem) {
  NormalEquations eq;
  const int pd = problem.pose_dim;
  const int ld = problem.point_dim;
  eq.h_pp = Eigen::MatrixXd::Zero(pd, pd);
  eq.h_pl = Eigen::MatrixXd::Zero(pd, ld);
  eq.h_ll.assign(problem.points.size(), Eigen::Matrix3d::Zero());
  eq.b_p = Eigen::VectorXd::Zero(pd);
  eq.b_l = Eigen::VectorXd::Zero(ld);

  problem.for_each_residual(true, [&](const BAProblem::Eval& e) {
    const double w = problem.kernel.weight(e.r.norm());
    for (std::size_t i = 0; i < e.jacobians.size(); ++i) {
      const auto& [kind_i, idx_i, jac_i] = e.jacobians[i];
      const int off_i = kind_i == 'c'   ? problem.cameras[idx_i].offset
                        : kind_i == 't' ? problem.twists[idx_i].offset
                                        : problem.points[idx_i].offset;
      if (kind_i != 'p' && off_i < 0) continue;
      // gradient
      if (kind_i == 'p') {
        eq.b_l.segment<3>(off_i) += w * jac_i.transpose() * e.r;
      } else {
        eq.b_p.segment(off_i, jac_i.cols()) += w * jac_i.transpose() * e.r;
      }
      for (std::size_t j = 0; j < e.jacobians.size(); ++j) {
        const auto& [kind_j, idx_j, jac_j] = e.jacobians[j];
        const int off_j = kind_j == 'c'   ? problem.cameras[idx_j].offset
                          : kind_j == 't' ? problem.twists[idx_j].offset
                                          : problem.points[idx_j].offset;
        if (kind_j != 'p' && off_j < 0) continue;
        const Eigen::MatrixXd block = w * jac_i.transpose() * jac_j;
        if (kind_i == 'p' && kind_j == 'p') {
          eq.h_ll[idx_i] += block;
        } else if (kind_i != 'p' && kind_j == 'p') {
          eq.h_pl.block(off_i, off_j, jac_i.cols(), 3) += block;
        } else if (kind_i != 'p' && kind_j != 'p') {
          eq.h_pp.block(off_i, off_j, jac_i.cols(), jac_j.cols()) += block;
        }
        // (point, pose) blocks are the transpose of (pose, point); skip
      }
    }
  });
  return eq;
}

}  // namespace detail

/// One damped step of the normal equations, either via the Schur complement
/// (point blocks eliminated, reduced system solved by sparse Cholesky) or via
/// the full dense system. Returns (pose_delta, point_delta).
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> compute_step(const BAProblem& problem,
                                                                double lambda,
                                                                bool use_schur) {
  const auto eq = detail::linearize(problem);
  const int pd = problem.pose_dim;
  const int ld = problem.point_dim;

  Eigen::MatrixXd h_pp = eq.h_pp;
  for (int i = 0; i < pd; ++i) h_pp(i, i) += lambda * std::max(h_pp(i, i), 1e-9);
  std::vector<Eigen::Matrix3d> h_ll = eq.h_ll;
  for (auto& block : h_ll) {
    for (int i = 0; i < 3; ++i) block(i, i) += lambda * std::max(block(i, i), 1e-9);
  }

  if (!use_schur) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(pd + ld, pd + ld);
    h.topLeftCorner(pd, pd) = h_pp;
    h.topRightCorner(pd, ld) = eq.h_pl;
    h.bottomLeftCorner(ld, pd) = eq.h_pl.transpose();
    for (std::size_t i = 0; i < h_ll.size(); ++i) {
      h.block<3, 3>(pd + 3 * i, pd + 3 * i) = h_ll[i];
    }
    Eigen::VectorXd b(pd + ld);
    b << eq.b_p, eq.b_l;
    const Eigen::VectorXd delta = h.ldlt().solve(-b);
    return {delta.head(pd), delta.tail(ld)};
  }

  // Schur complement: eliminate the block-diagonal point part.
  std::vector<Eigen::Matrix3d> h_ll_inv(h_ll.size());
  for (std::size_t i = 0; i < h_ll.size(); ++i) h_ll_inv[i] = h_ll[i].inverse();

  Eigen::MatrixXd s = h_pp;
  Eigen::VectorXd rhs = -eq.b_p;
  for (std::size_t i = 0; i < h_ll.size(); ++i) {
    const int off = problem.points[i].offset;
    const Eigen::MatrixXd strip = eq.h_pl.middleCols<3>(off) * h_ll_inv[i];
    s.noalias() -= strip * eq.h_pl.middleCols<3>(off).transpose();
    rhs.noalias() += strip * eq.b_l.segment<3>(off);
  }

  Eigen::SparseMatrix<double> s_sparse = s.sparseView(1.0, 1e-300);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> chol(s_sparse);
  if (chol.info() != Eigen::Success) {
    throw RankDeficient("reduced pose system not positive definite");
  }
  const Eigen::VectorXd pose_delta = chol.solve(rhs);

  Eigen::VectorXd point_delta(ld);
  for (std::size_t i = 0; i < h_ll.size(); ++i) {
    const int off = problem.points[i].offset;
    point_delta.segment<3>(off) =
        h_ll_inv[i] * (-eq.b_l.segment<3>(off) -
                       eq.h_pl.middleCols<3>(off).transpose() * pose_delta);
  }
  return {pose_delta, point_delta};
}

/// Levenberg-Marquardt driver. Accepted steps strictly decrease the robust
/// cost; a rank-deficient reduced system escalates damping up to ten times
/// before giving up.
inline SolveReport solve(BAProblem& problem, const SolveOptions& opts = {}) {
  SolveReport report;
  double cost = problem.total_cost();
  report.cost_trace.push_back(cost);
  double lambda = opts.lambda_init;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    ++report.iterations;
    bool accepted = false;
    int rank_escalations = 0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      std::pair<Eigen::VectorXd, Eigen::VectorXd> delta;
      try {
        delta = compute_step(problem, lambda, opts.use_schur);
      } catch (const RankDeficient&) {
        if (++rank_escalations > 10) throw;
        lambda *= 10.0;
        continue;
      }
      // snapshot, apply, check
      BAProblem trial = problem;
      trial.apply_update(delta.first, delta.second);
      const double trial_cost = trial.total_cost();
      if (trial_cost < cost) {
        problem = std::move(trial);
        const double decrease = (cost - trial_cost) / std::max(cost, 1e-300);
        cost = trial_cost;
        report.cost_trace.push_back(cost);
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        const double step_norm =
            std::sqrt(delta.first.squaredNorm() + delta.second.squaredNorm());
        if (decrease < opts.cost_tolerance || step_norm < opts.update_tolerance) {
          report.converged = true;
          iter = opts.max_iterations;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      report.converged = true;  // no descent direction left at this damping
      break;
    }
  }
  return report;
}

/// Writes optimized state back: camera poses per keyframe, object pose
/// histories at the optimized keyframes, and twist histories re-derived from
/// consecutive stored poses.
inline void write_back(const BAProblem& problem, SceneMap& map,
                       std::map<int, Pose>* camera_poses) {
  if (camera_poses) {
    for (const auto& cam : problem.cameras) {
      (*camera_poses)[cam.frame_id] = cam.pose;
    }
  }
  for (const auto& tb : problem.twists) {
    map.clusters.at(tb.object_id).pose_history[tb.frame_id] = tb.pose;
  }
  for (const auto& pb : problem.points) {
    map.clusters.at(pb.cluster_id).points.at(pb.point_id).position = pb.position;
  }
  // keep stored twists consistent with the updated poses
  for (const auto& tb : problem.twists) {
    Cluster& cluster = map.clusters.at(tb.object_id);
    for (int t : {tb.frame_id, tb.frame_id + 1}) {
      const auto cur = cluster.pose_history.find(t);
      const auto prev = cluster.pose_history.find(t - 1);
      if (cur != cluster.pose_history.end() && prev != cluster.pose_history.end()) {
        cluster.twist_history[t] = relative_twist(cur->second, prev->second);
      }
    }
  }
}

}  // namespace mbslam

#endif  // MBSLAM_BA_BA_HPP
