#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "restune/arm.hpp"
#include "restune/diff_drive.hpp"

namespace restune {

enum class TrajectoryKind { SpinInPlace, LineX, Circle2dWithChord, Circle3d };

inline std::string to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::SpinInPlace: return "spin-in-place";
    case TrajectoryKind::LineX: return "line-x";
    case TrajectoryKind::Circle2dWithChord: return "circle-2d-with-chord";
    case TrajectoryKind::Circle3d: return "circle-3d";
  }
  return "unknown";
}

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::SpinInPlace;
  double amplitude = 2.0;  // rad/s for spin, m/s for line, circle radius in m
  double period = 8.0;     // s
  double duration = 60.0;  // s
  double dt = 0.01;        // s

  void validate() const {
    if (dt <= 0.0) throw std::invalid_argument("TrajectorySpec: dt must be > 0");
    if (period <= 0.0) throw std::invalid_argument("TrajectorySpec: period must be > 0");
    if (duration <= 0.0) throw std::invalid_argument("TrajectorySpec: duration must be > 0");
    if (amplitude <= 0.0) throw std::invalid_argument("TrajectorySpec: amplitude must be > 0");
  }

  int step_count() const { return static_cast<int>(std::floor(duration / dt + 1e-9)); }
};

namespace detail {
inline void check_time(const TrajectorySpec& spec, double t) {
  if (t < 0.0 || t > spec.duration + 1e-9) {
    throw std::out_of_range("trajectory: t outside [0, duration]");
  }
}
}  // namespace detail

// Commanded rates at time t. Spin and line fill the yaw / x slot; the circle
// kinds give task-space velocities for the arm. Periodic in `period`.
inline Eigen::Vector3d trajectory_rate(const TrajectorySpec& spec, double t) {
  detail::check_time(spec, t);
  const double phase = std::fmod(t, spec.period);
  const double omega = 2.0 * std::numbers::pi / spec.period;
  switch (spec.kind) {
    case TrajectoryKind::SpinInPlace:
      return {0.0, 0.0, spec.amplitude * std::sin(omega * phase)};
    case TrajectoryKind::LineX:
      return {spec.amplitude * std::sin(omega * phase), 0.0, 0.0};
    case TrajectoryKind::Circle2dWithChord: {
      // One revolution over the first 3/4 of the period, then a straight
      // out-and-back pass along the x diameter. The loop closes each period.
      const double r = spec.amplitude;
      const double circle_time = 0.75 * spec.period;
      if (phase < circle_time) {
        const double w = 2.0 * std::numbers::pi / circle_time;
        const double ang = std::numbers::pi + w * phase;
        return {-r * w * std::sin(ang), r * w * std::cos(ang), 0.0};
      }
      const double leg_time = 0.125 * spec.period;
      const double chord_speed = 2.0 * r / leg_time;
      const double s = phase - circle_time;
      return {s < leg_time ? chord_speed : -chord_speed, 0.0, 0.0};
    }
    case TrajectoryKind::Circle3d: {
      const double r = spec.amplitude;
      const double ang = omega * phase;
      return {-r * omega * std::sin(ang), r * omega * std::cos(ang),
              0.5 * r * omega * std::cos(ang)};
    }
  }
  throw std::logic_error("trajectory_rate: unhandled kind");
}

inline bool trajectory_for_arm(TrajectoryKind k) {
  return k == TrajectoryKind::Circle2dWithChord || k == TrajectoryKind::Circle3d;
}

// Wheel commands realizing the commanded rate through the inverse kinematic
// relations, clamped to the unit range.
inline WheelCommand diff_drive_input(const TrajectorySpec& spec, double t,
                                     const DiffDriveParams& p) {
  if (trajectory_for_arm(spec.kind)) {
    throw std::invalid_argument("diff_drive_input: trajectory kind needs the arm plant");
  }
  const Eigen::Vector3d rate = trajectory_rate(spec, t);
  if (spec.kind == TrajectoryKind::SpinInPlace) {
    const double u = rate[2] * p.wheel_base / (2.0 * p.wheel_radius);
    return WheelCommand::clamped(-u, u);
  }
  const double u = rate[0] / (p.wheel_radius * p.wheel_speed_scale);
  return WheelCommand::clamped(u, u);
}

// Joint-rate command tracking the task-space trajectory via damped least
// squares on the numeric Jacobian at the current joints.
inline Vector6d arm_joint_command(const TrajectorySpec& spec, double t,
                                  const Vector6d& joints, const ArmParams& p,
                                  double damping = 0.01) {
  if (!trajectory_for_arm(spec.kind)) {
    throw std::invalid_argument("arm_joint_command: trajectory kind needs the wheeled plant");
  }
  const Eigen::Vector3d v = trajectory_rate(spec, t);
  const Eigen::Matrix<double, 3, 6> jac = numeric_jacobian(joints, p);
  const Eigen::Matrix3d jjt =
      jac * jac.transpose() + damping * damping * Eigen::Matrix3d::Identity();
  Vector6d rates = jac.transpose() * jjt.ldlt().solve(v);
  return rates.cwiseMax(-p.joint_velocity_limit).cwiseMin(p.joint_velocity_limit);
}

}  // namespace restune
