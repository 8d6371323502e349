// mbslam - error types shared across the library
// SPDX-License-Identifier: MIT

#ifndef MBSLAM_CORE_ERRORS_HPP
#define MBSLAM_CORE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mbslam {

/// Base class for all mbslam exceptions.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Rotation angle too close to pi; the log map is ill-conditioned there.
struct NearPiRotation : Error {
  explicit NearPiRotation(const std::string& msg = "rotation angle too close to pi for log map")
      : Error(msg) {}
};

/// Input degenerate for the requested fit (e.g. collinear points for a plane).
struct DegenerateInput : Error {
  explicit DegenerateInput(const std::string& msg) : Error(msg) {}
};

/// Not enough samples to compute a statistic.
struct InsufficientData : Error {
  explicit InsufficientData(const std::string& msg) : Error(msg) {}
};

/// Not enough matched observations to run an estimator.
struct InsufficientMatches : Error {
  explicit InsufficientMatches(const std::string& msg) : Error(msg) {}
};

/// Iterative optimization failed to reduce the cost within its budget.
struct Diverged : Error {
  explicit Diverged(const std::string& msg) : Error(msg) {}
};

/// Point cloud too small for registration or shape fitting.
struct TooFewPoints : Error {
  explicit TooFewPoints(const std::string& msg) : Error(msg) {}
};

/// Registration result requested from a non-converged run.
struct NotConverged : Error {
  explicit NotConverged(const std::string& msg) : Error(msg) {}
};

/// Object has no pose at the previous timestamp.
struct MissingPreviousPose : Error {
  explicit MissingPreviousPose(const std::string& msg) : Error(msg) {}
};

/// Scenario or run configuration violates its schema.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Optimization window references a pose that does not exist.
struct InconsistentWindow : Error {
  explicit InconsistentWindow(const std::string& msg) : Error(msg) {}
};

/// Reduced linear system not positive definite after damping escalation.
struct RankDeficient : Error {
  explicit RankDeficient(const std::string& msg) : Error(msg) {}
};

/// Two trajectories share no timestamps.
struct NoOverlap : Error {
  explicit NoOverlap(const std::string& msg) : Error(msg) {}
};

}  // namespace mbslam

#endif  // MBSLAM_CORE_ERRORS_HPP
