#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <stdexcept>

namespace restune {

using Vector6d = Eigen::Matrix<double, 6, 1>;

// Standard Denavit-Hartenberg row; theta_offset is added to the joint angle.
struct DhRow {
  double a = 0.0;
  double alpha = 0.0;
  double d = 0.0;
  double theta_offset = 0.0;
};

struct ArmParams {
  std::array<DhRow, 6> dh{};
  double delta_t = 1e-4;               // finite-difference step for task velocities, s
  double joint_position_limit = 3.0;   // symmetric per-joint bound, rad
  double joint_velocity_limit = 3.0;   // symmetric per-joint bound, rad/s
  Vector6d home = Vector6d::Zero();

  void validate() const {
    if (delta_t <= 0.0) {
      throw std::invalid_argument("ArmParams: delta_t must be > 0");
    }
    for (const auto& row : dh) {
      if (!std::isfinite(row.a) || !std::isfinite(row.alpha) || !std::isfinite(row.d) ||
          !std::isfinite(row.theta_offset)) {
        throw std::invalid_argument("ArmParams: DH rows must be finite");
      }
    }
  }

  // Generic elbow-style 6-DOF serial arm with a spherical wrist.
  static ArmParams generic_6dof() {
    ArmParams p;
    const double pi2 = 1.5707963267948966;
    p.dh = {DhRow{0.00, pi2, 0.30, 0.0},  DhRow{0.35, 0.0, 0.00, 0.0},
            DhRow{0.05, pi2, 0.00, 0.0},  DhRow{0.00, -pi2, 0.30, 0.0},
            DhRow{0.00, pi2, 0.00, 0.0},  DhRow{0.00, 0.0, 0.08, 0.0}};
    p.home << 0.3, -0.7, 0.9, 0.4, 0.6, -0.3;
    return p;
  }
};

inline Eigen::Matrix4d dh_transform(const DhRow& row, double theta) {
  const double th = theta + row.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  Eigen::Matrix4d t;
  t << ct, -st * ca, st * sa, row.a * ct,
       st, ct * ca, -ct * sa, row.a * st,
       0.0, sa, ca, row.d,
       0.0, 0.0, 0.0, 1.0;
  return t;
}

inline bool within_joint_limits(const Vector6d& joints, const ArmParams& p) {
  return (joints.cwiseAbs().array() <= p.joint_position_limit).all();
}

// End-effector position from the chained DH transforms.
inline Eigen::Vector3d arm_fk(const Vector6d& joints, const ArmParams& p) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (int i = 0; i < 6; ++i) {
    t = t * dh_transform(p.dh[static_cast<std::size_t>(i)], joints[i]);
  }
  return t.block<3, 1>(0, 3);
}

// Task-space velocity by forward finite difference of the FK over delta_t,
// plus an additive residual.
inline Eigen::Vector3d fk_velocity(const Vector6d& joints, const Vector6d& joint_rates,
                                   const ArmParams& p, const Eigen::Vector3d& residual) {
  if (p.delta_t <= 0.0) {
    throw std::invalid_argument("fk_velocity: delta_t must be > 0");
  }
  const Eigen::Vector3d now = arm_fk(joints, p);
  const Eigen::Vector3d ahead = arm_fk(joints + joint_rates * p.delta_t, p);
  return (ahead - now) / p.delta_t + residual;
}

// Central-difference position Jacobian (3x6). Used for mapping task commands
// to joint rates; accuracy is plenty for command generation.
inline Eigen::Matrix<double, 3, 6> numeric_jacobian(const Vector6d& joints,
                                                    const ArmParams& p,
                                                    double eps = 1e-6) {
  Eigen::Matrix<double, 3, 6> jac;
  for (int i = 0; i < 6; ++i) {
    Vector6d plus = joints, minus = joints;
    plus[i] += eps;
    minus[i] -= eps;
    jac.col(i) = (arm_fk(plus, p) - arm_fk(minus, p)) / (2.0 * eps);
  }
  return jac;
}

}  // namespace restune
