#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace restune {

struct DiffDriveParams {
  double wheel_radius = 0.03;      // m
  double wheel_base = 0.10;        // m, left-to-right wheel distance
  double wheel_speed_scale = 10.0; // rad/s at full command

  void validate() const {
    if (wheel_radius <= 0.0 || wheel_base <= 0.0 || wheel_speed_scale <= 0.0) {
      throw std::invalid_argument("DiffDriveParams: all parameters must be > 0");
    }
  }

  // The yaw row of the kinematic matrix carries no wheel-speed scale, so the
  // achievable rates are:
  double max_forward_speed() const { return wheel_radius * wheel_speed_scale; }
  double max_yaw_rate() const { return 2.0 * wheel_radius / wheel_base; }
};

inline double wrap_angle(double theta) {
  theta = std::remainder(theta, 2.0 * std::numbers::pi);
  if (theta <= -std::numbers::pi) theta += 2.0 * std::numbers::pi;
  return theta;
}

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

// Unit wheel commands in [-1, 1].
struct WheelCommand {
  double left = 0.0;
  double right = 0.0;

  static WheelCommand clamped(double l, double r) {
    return {std::clamp(l, -1.0, 1.0), std::clamp(r, -1.0, 1.0)};
  }
};

// Body rates (xd, yd, thetad) of the differential-drive kinematic model plus
// an additive velocity residual.
inline Eigen::Vector3d diff_drive_rate(const Pose2& pose, const WheelCommand& u,
                                       const DiffDriveParams& p,
                                       const Eigen::Vector3d& residual) {
  const double half_rv = 0.5 * p.wheel_radius * p.wheel_speed_scale;
  const double sum = u.left + u.right;
  Eigen::Vector3d rate;
  rate[0] = half_rv * std::cos(pose.theta) * sum + residual[0];
  rate[1] = half_rv * std::sin(pose.theta) * sum + residual[1];
  rate[2] = (p.wheel_radius / p.wheel_base) * (u.right - u.left) + residual[2];
  return rate;
}

}  // namespace restune
