// mbslam - analytic signed-distance shape models
// SPDX-License-Identifier: MIT
//
// Parametric stand-ins for a learned shape decoder: boxes are exact distance
// fields, ellipsoids and superellipsoid rounded boxes use the first-order
// estimate f/|grad f| of their implicit surface function. Gradients are the
// analytic derivatives of the SDF expressions themselves, so finite-difference
// checks against sdf_eval hold everywhere away from box ridges.

#ifndef MBSLAM_SHAPE_SDF_HPP
#define MBSLAM_SHAPE_SDF_HPP

#include <Eigen/Core>
#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "mbslam/core/errors.hpp"
#include "mbslam/core/robust.hpp"

namespace mbslam {

enum class ShapeKind { kBox, kEllipsoid, kRoundedBox };

/// Shape parameters in the object frame. Pose and scale of the object are
/// handled outside the shape model and stay fixed during fitting.
struct ShapeParams {
  ShapeKind kind = ShapeKind::kBox;
  Eigen::Vector3d half_extents = Eigen::Vector3d::Ones();
  double exponent = 4.0;  // rounded box only, >= 2
};

struct ProjectionConfig {
  int steps = 10;
  double acceptance_threshold = 0.5;  // meters; callers gate on the initial |SDF|
};

namespace detail {

inline double sdf_box(const Eigen::Vector3d& h, const Eigen::Vector3d& p,
                      Eigen::Vector3d* grad) {
  const Eigen::Vector3d q = p.cwiseAbs() - h;
  const Eigen::Vector3d qp = q.cwiseMax(0.0);
  const double outside = qp.norm();
  if (outside > 0.0) {
    if (grad) {
      for (int i = 0; i < 3; ++i) {
        (*grad)(i) = (p(i) < 0.0 ? -1.0 : 1.0) * qp(i) / outside;
      }
    }
    return outside;
  }
  // Inside: distance to the nearest face; ties resolved to the lowest axis.
  int k = 0;
  for (int i = 1; i < 3; ++i) {
    if (q(i) > q(k)) k = i;
  }
  if (grad) {
    grad->setZero();
    (*grad)(k) = p(k) < 0.0 ? -1.0 : 1.0;
  }
  return q(k);
}

inline double sdf_ellipsoid(const Eigen::Vector3d& h, const Eigen::Vector3d& p,
                            Eigen::Vector3d* grad) {
  const Eigen::Vector3d w = p.cwiseQuotient(h.cwiseProduct(h));
  const double k0 = p.cwiseQuotient(h).norm();
  const double k1 = w.norm();
  if (k0 < 1e-12) {
    if (grad) {
      grad->setZero();
      int k;
      h.minCoeff(&k);
      (*grad)(k) = 1.0;
    }
    return -h.minCoeff();
  }
  const double sdf = k0 * (k0 - 1.0) / k1;
  if (grad) {
    const Eigen::Vector3d dk0 = w / k0;
    const Eigen::Vector3d dk1 =
        w.cwiseQuotient(h.cwiseProduct(h)) / k1;
    *grad = ((2.0 * k0 - 1.0) * dk0 * k1 - k0 * (k0 - 1.0) * dk1) / (k1 * k1);
  }
  return sdf;
}

inline double sdf_superellipsoid(const Eigen::Vector3d& h, double n,
                                 const Eigen::Vector3d& p, Eigen::Vector3d* grad) {
  const Eigen::Vector3d u = p.cwiseQuotient(h);
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += std::pow(std::abs(u(i)), n);
  if (s < 1e-30) {
    if (grad) {
      grad->setZero();
      int k;
      h.minCoeff(&k);
      (*grad)(k) = 1.0;
    }
    return -h.minCoeff();
  }
  const double g0 = std::pow(s, 1.0 / n);
  // a_i = |u_i|^(n-1) sgn(p_i) / h_i ;  gradient of g0 is s^(1/n - 1) * a
  Eigen::Vector3d a;
  for (int i = 0; i < 3; ++i) {
    const double sgn = p(i) < 0.0 ? -1.0 : 1.0;
    a(i) = std::pow(std::abs(u(i)), n - 1.0) * sgn / h(i);
  }
  const double sp = std::pow(s, 1.0 / n - 1.0);
  const Eigen::Vector3d g = sp * a;
  const double m = g.norm();
  const double sdf = (g0 - 1.0) / m;
  if (grad) {
    // Hessian of g0: (1-n) s^(1/n-2) a a^T + s^(1/n-1) diag((n-1)|u_i|^(n-2)/h_i^2)
    Eigen::Matrix3d hess = (1.0 - n) * std::pow(s, 1.0 / n - 2.0) * (a * a.transpose());
    for (int i = 0; i < 3; ++i) {
      hess(i, i) += sp * (n - 1.0) * std::pow(std::abs(u(i)), n - 2.0) / (h(i) * h(i));
    }
    const Eigen::Vector3d dm = hess * g / m;
    *grad = g / m - (g0 - 1.0) * dm / (m * m);
  }
  return sdf;
}

}  // namespace detail

/// Signed distance at an object-frame point: negative inside, zero on the
/// surface, positive outside. Exact for boxes, first-order surface-normalized
/// estimates for ellipsoids and rounded boxes.
inline double sdf_eval(const ShapeParams& shape, const Eigen::Vector3d& x) {
  switch (shape.kind) {
    case ShapeKind::kBox:
      return detail::sdf_box(shape.half_extents, x, nullptr);
    case ShapeKind::kEllipsoid:
      return detail::sdf_ellipsoid(shape.half_extents, x, nullptr);
    case ShapeKind::kRoundedBox:
      return detail::sdf_superellipsoid(shape.half_extents, shape.exponent, x, nullptr);
  }
  return 0.0;
}

/// Analytic gradient of sdf_eval. On box ridges the max-branch tie resolves to
/// the lowest axis index.
inline Eigen::Vector3d sdf_gradient(const ShapeParams& shape, const Eigen::Vector3d& x) {
  Eigen::Vector3d g;
  switch (shape.kind) {
    case ShapeKind::kBox:
      detail::sdf_box(shape.half_extents, x, &g);
      break;
    case ShapeKind::kEllipsoid:
      detail::sdf_ellipsoid(shape.half_extents, x, &g);
      break;
    case ShapeKind::kRoundedBox:
      detail::sdf_superellipsoid(shape.half_extents, shape.exponent, x, &g);
      break;
  }
  return g;
}

/// Iterative point projection onto the shape surface: cfg.steps Newton-style
/// steps of length sdf(x) along the unit gradient. Exact in one step on true
/// distance fields.
inline Eigen::Vector3d project_to_surface(const ShapeParams& shape, const Eigen::Vector3d& x,
                                          const ProjectionConfig& cfg = {}) {
  Eigen::Vector3d p = x;
  for (int k = 0; k < cfg.steps; ++k) {
    const double s = sdf_eval(shape, p);
    if (s == 0.0) break;
    const Eigen::Vector3d g = sdf_gradient(shape, p);
    const double gn = g.norm();
    if (gn < 1e-12) break;
    p -= s * g / gn;
  }
  return p;
}

/// Sphere-traces a ray (object frame) against the shape. Returns the hit
/// distance along the unit direction, or a negative value on miss. The march
/// is finished with Newton steps on the ray parameter, so hits satisfy
/// |sdf| < 1e-9 even on the approximate fields.
inline double sdf_raycast(const ShapeParams& shape, const Eigen::Vector3d& origin,
                          const Eigen::Vector3d& dir, double max_t = 1e3) {
  double t = 0.0;
  for (int i = 0; i < 512; ++i) {
    const Eigen::Vector3d p = origin + t * dir;
    const double s = sdf_eval(shape, p);
    if (s < 1e-7) {
      // Newton refinement along the ray: ds/dt = grad . dir
      double tn = t;
      for (int k = 0; k < 8; ++k) {
        const Eigen::Vector3d q = origin + tn * dir;
        const double sv = sdf_eval(shape, q);
        const double dv = sdf_gradient(shape, q).dot(dir);
        if (std::abs(dv) < 1e-12) break;
        tn -= sv / dv;
      }
      if (std::abs(sdf_eval(shape, origin + tn * dir)) < 1e-9 && tn > 0.0) return tn;
      return -1.0;
    }
    t += 0.95 * s;
    if (t > max_t) break;
  }
  return -1.0;
}

/// Fits the half extents of a shape to an object-frame scan by robust LM on
/// the SDF values. Pose, scale and the rounding exponent stay fixed.
inline ShapeParams fit_shape(const std::vector<Eigen::Vector3d>& scan, ShapeKind kind,
                             const Eigen::Vector3d& init_half_extents,
                             double exponent = 4.0) {
  if (scan.size() < 30) {
    throw TooFewPoints("fit_shape needs at least 30 points");
  }
  ShapeParams shape;
  shape.kind = kind;
  shape.half_extents = init_half_extents;
  shape.exponent = exponent;

  const RobustKernel kernel{0.1};
  const auto total_cost = [&](const Eigen::Vector3d& h) {
    ShapeParams s = shape;
    s.half_extents = h;
    double c = 0.0;
    for (const auto& p : scan) c += kernel.cost(sdf_eval(s, p));
    return c;
  };

  Eigen::Vector3d h = init_half_extents;
  double cost = total_cost(h);
  double lambda = 1e-4;

  for (int iter = 0; iter < 50; ++iter) {
    Eigen::Matrix3d hess = Eigen::Matrix3d::Zero();
    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
    ShapeParams cur = shape;
    cur.half_extents = h;
    for (const auto& p : scan) {
      const double r = sdf_eval(cur, p);
      // central differences over the three extents
      Eigen::Vector3d jrow;
      for (int k = 0; k < 3; ++k) {
        const double step = 1e-6 * std::max(1.0, h(k));
        ShapeParams sp = cur;
        sp.half_extents(k) += step;
        ShapeParams sm = cur;
        sm.half_extents(k) -= step;
        jrow(k) = (sdf_eval(sp, p) - sdf_eval(sm, p)) / (2.0 * step);
      }
      const double w = kernel.weight(r);
      hess += w * jrow * jrow.transpose();
      grad += w * jrow * r;
    }
    if (grad.norm() < 1e-12) break;

    bool accepted = false;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::Matrix3d damped = hess;
      damped.diagonal() += lambda * hess.diagonal();
      const Eigen::Vector3d delta = damped.ldlt().solve(-grad);
      const Eigen::Vector3d trial = (h + delta).cwiseMax(0.01);
      const double trial_cost = total_cost(trial);
      if (trial_cost < cost) {
        h = trial;
        cost = trial_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        if (delta.norm() < 1e-10) iter = 50;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      if (iter == 0 && grad.norm() > 1e-6) {
        throw Diverged("fit_shape could not reduce the cost");
      }
      break;
    }
  }
  shape.half_extents = h;
  return shape;
}

}  // namespace mbslam

#endif  // MBSLAM_SHAPE_SDF_HPP
