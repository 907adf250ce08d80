#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "restune/arm.hpp"
#include "restune/csv.hpp"
#include "restune/diff_drive.hpp"
#include "restune/ground_truth.hpp"
#include "restune/trajectory.hpp"

namespace restune {

enum class RobotKind { DiffDrive, Arm6Dof };

inline std::string to_string(RobotKind k) {
  return k == RobotKind::DiffDrive ? "diff-drive" : "arm-6dof";
}

// Network input builders. The reference plants evaluate their injected
// residual on exactly these vectors, so learner and plant see the same z.
inline Eigen::VectorXd diff_drive_net_input(const Eigen::Vector3d& prev_rate,
                                            const WheelCommand& u) {
  Eigen::VectorXd z(5);
  z << prev_rate[0], prev_rate[1], prev_rate[2], u.left, u.right;
  return z;
}

inline Eigen::VectorXd arm_net_input(const Vector6d& joint_rates) {
  return joint_rates;
}

inline int net_input_width(RobotKind k) { return k == RobotKind::DiffDrive ? 5 : 6; }

// One tick of a reference system: the commanded input, the state the base
// model should be evaluated at, and the observed rates.
struct TickRecord {
  double t = 0.0;
  Eigen::VectorXd input;        // wheel commands (2) or joint rates (6)
  Eigen::VectorXd model_state;  // (x, y, theta) or joint angles (6), pre-step
  Eigen::Vector3d task_state = Eigen::Vector3d::Zero();  // pose or tool position
  Eigen::Vector3d observed_rate = Eigen::Vector3d::Zero();
};

class RateSource {
public:
  virtual ~RateSource() = default;
  virtual std::optional<TickRecord> next() = 0;
  virtual RobotKind robot() const = 0;
  virtual double dt() const = 0;
};

// Synthetic differential-drive reference plant: kinematic base plus injected
// ground-truth residual plus measurement noise on the reported rates. The
// pose integrates the noiseless motion with explicit Euler.
class DiffDrivePlant final : public RateSource {
public:
  DiffDrivePlant(DiffDriveParams params, GroundTruthSpec truth, TrajectorySpec traj)
      : params_(params), traj_(traj), truth_(truth, net_input_width(RobotKind::DiffDrive)) {
    params_.validate();
    traj_.validate();
    steps_ = traj_.step_count();
  }

  std::optional<TickRecord> next() override {
    if (k_ >= steps_) return std::nullopt;
    const double t = k_ * traj_.dt;
    const WheelCommand u = diff_drive_input(traj_, t, params_);
    const Eigen::VectorXd z = diff_drive_net_input(prev_observed_, u);

    const Eigen::Vector3d base = diff_drive_rate(pose_, u, params_, Eigen::Vector3d::Zero());
    const Eigen::Vector3d truth_rate = base + truth_.residual(z);
    const Eigen::Vector3d observed = truth_rate + truth_.sample_noise();

    TickRecord rec;
    rec.t = t;
    rec.input = Eigen::Vector2d(u.left, u.right);
    rec.model_state = Eigen::Vector3d(pose_.x, pose_.y, pose_.theta);
    rec.task_state = rec.model_state;
    rec.observed_rate = observed;

    pose_.x += truth_rate[0] * traj_.dt;
    pose_.y += truth_rate[1] * traj_.dt;
    pose_.theta = wrap_angle(pose_.theta + truth_rate[2] * traj_.dt);
    prev_observed_ = observed;
    ++k_;
    return rec;
  }

  RobotKind robot() const override { return RobotKind::DiffDrive; }
  double dt() const override { return traj_.dt; }
  GroundTruthResidual& truth() { return truth_; }
  const DiffDriveParams& params() const { return params_; }

private:
  DiffDriveParams params_;
  TrajectorySpec traj_;
  GroundTruthResidual truth_;
  Pose2 pose_{};
  Eigen::Vector3d prev_observed_ = Eigen::Vector3d::Zero();
  int k_ = 0;
  int steps_ = 0;
};

// Synthetic 6-DOF arm reference plant. Joints track the commanded rates; the
// injected residual and noise live on the task-space velocities.
class ArmPlant final : public RateSource {
public:
  ArmPlant(ArmParams params, GroundTruthSpec truth, TrajectorySpec traj)
      : params_(params), traj_(traj), truth_(truth, net_input_width(RobotKind::Arm6Dof)),
        joints_(params.home) {
    params_.validate();
    traj_.validate();
    steps_ = traj_.step_count();
  }

  std::optional<TickRecord> next() override {
    if (k_ >= steps_) return std::nullopt;
    const double t = k_ * traj_.dt;
    const Vector6d rates = arm_joint_command(traj_, t, joints_, params_);
    const Eigen::VectorXd z = arm_net_input(rates);

    const Eigen::Vector3d base = fk_velocity(joints_, rates, params_, Eigen::Vector3d::Zero());
    const Eigen::Vector3d truth_rate = base + truth_.residual(z);
    const Eigen::Vector3d observed = truth_rate + truth_.sample_noise();

    TickRecord rec;
    rec.t = t;
    rec.input = rates;
    rec.model_state = joints_;
    rec.task_state = arm_fk(joints_, params_);
    rec.observed_rate = observed;

    joints_ += rates * traj_.dt;
    if (!within_joint_limits(joints_, params_)) ++limit_violations_;
    ++k_;
    return rec;
  }

  RobotKind robot() const override { return RobotKind::Arm6Dof; }
  double dt() const override { return traj_.dt; }
  GroundTruthResidual& truth() { return truth_; }
  int limit_violations() const { return limit_violations_; }
  const Vector6d& joints() const { return joints_; }

private:
  ArmParams params_;
  TrajectorySpec traj_;
  GroundTruthResidual truth_;
  Vector6d joints_;
  int k_ = 0;
  int steps_ = 0;
  int limit_violations_ = 0;
};

// ---------------------------------------------------------------------------
// Recorded streams. Column layout:
//   diff-drive: t,x,y,theta,xd,yd,thetad,u_l,u_r,stream_tag
//   arm-6dof:   t,x,y,z,xd,yd,zd,thd1..thd6,stream_tag
// Files in this format can replace a synthetic plant as a reference source.
// ---------------------------------------------------------------------------

inline std::vector<std::string> stream_header(RobotKind kind) {
  if (kind == RobotKind::DiffDrive) {
    return {"t", "x", "y", "theta", "xd", "yd", "thetad", "u_l", "u_r", "stream_tag"};
  }
  return {"t", "x",    "y",    "z",    "xd",   "yd",   "zd",
          "thd1", "thd2", "thd3", "thd4", "thd5", "thd6", "stream_tag"};
}

inline void write_stream_csv(const std::string& path, RobotKind kind,
                             const std::vector<TickRecord>& records,
                             const std::string& tag) {
  CsvWriter w(path);
  w.header(stream_header(kind));
  for (const auto& r : records) {
    std::vector<std::string> cols;
    cols.push_back(fmt_double(r.t));
    for (int i = 0; i < 3; ++i) cols.push_back(fmt_double(r.task_state[i]));
    for (int i = 0; i < 3; ++i) cols.push_back(fmt_double(r.observed_rate[i]));
    for (Eigen::Index i = 0; i < r.input.size(); ++i) cols.push_back(fmt_double(r.input[i]));
    cols.push_back(tag);
    w.row_strings(cols);
  }
}

// Replays a recorded stream. For arm files the joint angles are not part of
// the format, so they are reconstructed by integrating the recorded joint
// rates from a home pose.
class RecordedStream final : public RateSource {
public:
  explicit RecordedStream(const std::string& path, Vector6d arm_home = Vector6d::Zero()) {
    const CsvTable table = read_csv(path);
    const auto dd_header = stream_header(RobotKind::DiffDrive);
    const auto arm_header = stream_header(RobotKind::Arm6Dof);
    if (table.header == dd_header) {
      kind_ = RobotKind::DiffDrive;
    } else if (table.header == arm_header) {
      kind_ = RobotKind::Arm6Dof;
    } else {
      throw std::runtime_error("recorded stream " + path + ": unrecognized header");
    }
    if (table.rows.empty()) {
      throw std::runtime_error("recorded stream " + path + ": no records");
    }
    const int inputs = kind_ == RobotKind::DiffDrive ? 2 : 6;
    for (std::size_t n = 0; n < table.rows.size(); ++n) {
      const auto& row = table.rows[n];
      if (static_cast<int>(row.size()) != static_cast<int>(table.header.size())) {
        throw std::runtime_error("recorded stream " + path + ": row " + std::to_string(n) +
                                 " has wrong field count");
      }
      TickRecord rec;
      rec.t = parse_double(row[0], "t");
      for (int i = 0; i < 3; ++i) rec.task_state[i] = parse_double(row[1 + i], "state");
      for (int i = 0; i < 3; ++i) rec.observed_rate[i] = parse_double(row[4 + i], "rate");
      rec.input.resize(inputs);
      for (int i = 0; i < inputs; ++i) rec.input[i] = parse_double(row[7 + i], "input");
      if (kind_ == RobotKind::DiffDrive) rec.model_state = rec.task_state;
      records_.push_back(std::move(rec));
    }
    dt_ = records_.size() > 1 ? records_[1].t - records_[0].t : 0.01;
    if (kind_ == RobotKind::Arm6Dof) {
      Vector6d q = arm_home;
      for (auto& rec : records_) {
        rec.model_state = q;
        q += Vector6d(rec.input) * dt_;
      }
    }
  }

  std::optional<TickRecord> next() override {
    if (k_ >= records_.size()) return std::nullopt;
    return records_[k_++];
  }

  RobotKind robot() const override { return kind_; }
  double dt() const override { return dt_; }
  std::size_t size() const { return records_.size(); }

private:
  RobotKind kind_ = RobotKind::DiffDrive;
  std::vector<TickRecord> records_;
  std::size_t k_ = 0;
  double dt_ = 0.01;
};

}  // namespace restune
