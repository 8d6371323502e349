// mbslam - robust cost functions and scale estimation
// SPDX-License-Identifier: MIT

#ifndef MBSLAM_CORE_ROBUST_HPP
#define MBSLAM_CORE_ROBUST_HPP

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "mbslam/core/errors.hpp"

namespace mbslam {

/// Huber kernel on the (whitened) residual norm e >= 0:
///   rho(e) = e^2 / 2             for e <= delta
///   rho(e) = delta*(e - delta/2) for e >  delta
/// The IRLS weight rho'(e)/e caps the gradient contribution of any single
/// residual at delta.
struct RobustKernel {
  double delta = 1.345;

  double cost(double e) const {
    const double a = std::abs(e);
    if (a <= delta) return 0.5 * a * a;
    return delta * (a - 0.5 * delta);
  }

  /// IRLS weight w(e) = rho'(e)/e, with w(0) = 1.
  double weight(double e) const {
    const double a = std::abs(e);
    if (a <= delta) return 1.0;
    return delta / a;
  }
};

inline double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t k = (n - 1) / 2;  // lower median for even counts
  std::nth_element(v.begin(), v.begin() + k, v.end());
  return v[k];
}

/// Robust per-component covariance from residuals via the median absolute
/// deviation: sigma_c = 1.4826 * MAD_c. Returns the diagonal of the covariance
/// (sigma_c^2), with entries clamped below at 1e-6.
inline Eigen::VectorXd mad_covariance_diagonal(const std::vector<Eigen::VectorXd>& residuals) {
  if (residuals.size() < 2) {
    throw InsufficientData("mad_covariance needs at least 2 residuals");
  }
  const Eigen::Index dim = residuals.front().size();
  Eigen::VectorXd out(dim);
  std::vector<double> comp(residuals.size());
  for (Eigen::Index c = 0; c < dim; ++c) {
    for (std::size_t i = 0; i < residuals.size(); ++i) comp[i] = residuals[i](c);
    std::vector<double> tmp = comp;
    const double med = median_inplace(tmp);
    for (std::size_t i = 0; i < residuals.size(); ++i) comp[i] = std::abs(comp[i] - med);
    const double mad = median_inplace(comp);
    const double sigma = 1.4826 * mad;
    out(c) = std::max(sigma * sigma, 1e-6);
  }
  return out;
}

}  // namespace mbslam

#endif  // MBSLAM_CORE_ROBUST_HPP
