#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "restune/pipeline.hpp"
#include "restune/sources.hpp"

namespace restune {

// Configuration problems carry the JSON pointer of the offending value so the
// message pinpoints the spot in the document.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
  ConfigError(const std::string& path, const std::string& msg)
      : std::runtime_error("config error at " + path + ": " + msg) {}
};

struct ExperimentConfig {
  RobotKind robot = RobotKind::DiffDrive;
  std::uint64_t seed = 0;
  std::optional<std::string> output_dir;
  DiffDriveParams diff_drive;
  ArmParams arm = ArmParams::generic_6dof();
  GroundTruthSpec sim_truth;
  GroundTruthSpec real_truth;
  std::vector<StageConfig> stages;
  nlohmann::json raw;  // original document, kept for the run-directory copy
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& path,
                                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.contains(it.key())) {
      throw ConfigError(path + "/" + it.key(), "unknown key");
    }
  }
}

inline double get_number(const nlohmann::json& j, const std::string& path,
                         const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(path + "/" + key, "expected a number");
  return v.get<double>();
}

inline std::uint64_t get_seed(const nlohmann::json& j, const std::string& path,
                              const std::string& key, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ConfigError(path + "/" + key, "expected an integer seed");
  }
  return v.get<std::uint64_t>();
}

inline int get_int(const nlohmann::json& j, const std::string& path,
                   const std::string& key, int fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(path + "/" + key, "expected an integer");
  return v.get<int>();
}

inline bool get_bool(const nlohmann::json& j, const std::string& path,
                     const std::string& key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(path + "/" + key, "expected a boolean");
  return v.get<bool>();
}

inline std::string get_string(const nlohmann::json& j, const std::string& path,
                              const std::string& key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

inline Eigen::Vector3d get_vector3(const nlohmann::json& j, const std::string& path,
                                   const std::string& key,
                                   const Eigen::Vector3d& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_number()) return Eigen::Vector3d::Constant(v.get<double>());
  if (!v.is_array() || v.size() != 3) {
    throw ConfigError(path + "/" + key, "expected a number or an array of 3 numbers");
  }
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) {
      throw ConfigError(path + "/" + key, "expected numeric entries");
    }
    out[i] = v[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

inline NoiseSpec parse_noise(const nlohmann::json& j, const std::string& path) {
  reject_unknown_keys(j, path, {"kind", "sigma", "outlier_scale", "outlier_prob"});
  NoiseSpec n;
  const std::string kind = get_string(j, path, "kind", "none");
  if (kind == "none") n.kind = NoiseKind::None;
  else if (kind == "gaussian") n.kind = NoiseKind::Gaussian;
  else if (kind == "mixture") n.kind = NoiseKind::Mixture;
  else throw ConfigError(path + "/kind", "unknown noise kind '" + kind + "'");
  n.sigma = get_vector3(j, path, "sigma", Eigen::Vector3d::Zero());
  if ((n.sigma.array() < 0.0).any()) {
    throw ConfigError(path + "/sigma", "must be >= 0");
  }
  n.outlier_scale = get_number(j, path, "outlier_scale", 4.0);
  n.outlier_prob = get_number(j, path, "outlier_prob", 0.1);
  if (n.outlier_prob < 0.0 || n.outlier_prob > 1.0) {
    throw ConfigError(path + "/outlier_prob", "must be in [0, 1]");
  }
  return n;
}

inline GroundTruthSpec parse_truth(const nlohmann::json& j, const std::string& path) {
  reject_unknown_keys(j, path, {"kind", "bias", "magnitude", "seed", "noise"});
  GroundTruthSpec g;
  const std::string kind = get_string(j, path, "kind", "none");
  if (kind == "none") g.kind = ResidualKind::None;
  else if (kind == "constant-bias") g.kind = ResidualKind::ConstantBias;
  else if (kind == "random-net") g.kind = ResidualKind::RandomNet;
  else if (kind == "analytic") g.kind = ResidualKind::Analytic;
  else throw ConfigError(path + "/kind", "unknown residual kind '" + kind + "'");
  g.bias = get_vector3(j, path, "bias", Eigen::Vector3d::Zero());
  g.magnitude = get_number(j, path, "magnitude", 0.0);
  if (g.magnitude < 0.0) throw ConfigError(path + "/magnitude", "must be >= 0");
  g.seed = get_seed(j, path, "seed", 0);
  if (j.contains("noise")) g.noise = parse_noise(j.at("noise"), path + "/noise");
  return g;
}

inline TrajectorySpec parse_trajectory(const nlohmann::json& j, const std::string& path,
                                       RobotKind robot) {
  reject_unknown_keys(j, path, {"kind", "amplitude", "period", "duration", "dt"});
  TrajectorySpec t;
  const std::string kind = get_string(j, path, "kind", "");
  if (kind == "spin-in-place") t.kind = TrajectoryKind::SpinInPlace;
  else if (kind == "line-x") t.kind = TrajectoryKind::LineX;
  else if (kind == "circle-2d-with-chord") t.kind = TrajectoryKind::Circle2dWithChord;
  else if (kind == "circle-3d") t.kind = TrajectoryKind::Circle3d;
  else throw ConfigError(path + "/kind", "unknown trajectory kind '" + kind + "'");
  if (trajectory_for_arm(t.kind) != (robot == RobotKind::Arm6Dof)) {
    throw ConfigError(path + "/kind",
                      "trajectory '" + kind + "' does not fit robot '" + to_string(robot) + "'");
  }
  t.amplitude = get_number(j, path, "amplitude", t.amplitude);
  t.period = get_number(j, path, "period", t.period);
  t.duration = get_number(j, path, "duration", t.duration);
  t.dt = get_number(j, path, "dt", t.dt);
  try {
    t.validate();
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
  return t;
}

inline TunerConfig parse_tuner(const nlohmann::json& j, const std::string& path) {
  reject_unknown_keys(j, path,
                      {"alpha", "beta", "kappa", "process_noise", "measurement_noise",
                       "initial_covariance"});
  TunerConfig t;
  t.alpha = get_number(j, path, "alpha", t.alpha);
  t.beta = get_number(j, path, "beta", t.beta);
  t.kappa = get_number(j, path, "kappa", t.kappa);
  t.process_noise = get_number(j, path, "process_noise", t.process_noise);
  t.measurement_noise = get_number(j, path, "measurement_noise", t.measurement_noise);
  t.initial_covariance = get_number(j, path, "initial_covariance", t.initial_covariance);
  if (t.alpha <= 0.0) throw ConfigError(path + "/alpha", "must be > 0");
  if (t.process_noise < 0.0) throw ConfigError(path + "/process_noise", "must be >= 0");
  if (t.measurement_noise <= 0.0) {
    throw ConfigError(path + "/measurement_noise", "must be > 0");
  }
  if (t.initial_covariance < 0.0) {
    throw ConfigError(path + "/initial_covariance", "must be >= 0");
  }
  return t;
}

inline StageConfig parse_stage(const nlohmann::json& j, const std::string& path,
                               RobotKind robot) {
  reject_unknown_keys(j, path,
                      {"kind", "trajectory", "tuner", "costs", "horizon", "stride",
                       "filter_alpha", "seed", "init_scale", "n_hidden", "warm_start",
                       "warm_start_window", "tag"});
  StageConfig s;
  const std::string kind = get_string(j, path, "kind", "");
  if (kind == "sim-to-kin") s.kind = StageKind::SimToKin;
  else if (kind == "real-to-kin") s.kind = StageKind::RealToKin;
  else if (kind == "real-to-sim") s.kind = StageKind::RealToSim;
  else throw ConfigError(path + "/kind", "unknown stage kind '" + kind + "'");
  if (!j.contains("trajectory")) throw ConfigError(path, "missing 'trajectory'");
  s.trajectory = parse_trajectory(j.at("trajectory"), path + "/trajectory", robot);
  if (j.contains("tuner")) s.tuner = parse_tuner(j.at("tuner"), path + "/tuner");
  s.costs = get_vector3(j, path, "costs", Eigen::Vector3d::Ones());
  s.horizon = get_int(j, path, "horizon", s.horizon);
  s.stride = get_int(j, path, "stride", s.stride);
  s.filter_alpha = get_number(j, path, "filter_alpha", s.filter_alpha);
  s.seed = get_seed(j, path, "seed", 0);
  s.init_scale = get_number(j, path, "init_scale", 0.0);
  s.n_hidden = get_int(j, path, "n_hidden", s.n_hidden);
  s.warm_start = get_bool(j, path, "warm_start", true);
  s.warm_start_window = get_int(j, path, "warm_start_window", 200);
  s.tag = get_string(j, path, "tag", "");
  try {
    s.validate();
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
  if (s.warm_start_window < 1) throw ConfigError(path + "/warm_start_window", "must be >= 1");
  return s;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  reject_unknown_keys(j, "", {"robot", "seed", "output_dir", "plant", "arm", "reference",
                              "stages"});
  ExperimentConfig cfg;
  cfg.raw = j;
  const std::string robot = get_string(j, "", "robot", "");
  if (robot == "diff-drive") cfg.robot = RobotKind::DiffDrive;
  else if (robot == "arm-6dof") cfg.robot = RobotKind::Arm6Dof;
  else throw ConfigError("/robot", "must be 'diff-drive' or 'arm-6dof'");
  cfg.seed = get_seed(j, "", "seed", 0);
  if (j.contains("output_dir")) cfg.output_dir = get_string(j, "", "output_dir", "");

  if (j.contains("plant")) {
    const auto& p = j.at("plant");
    reject_unknown_keys(p, "/plant", {"wheel_radius", "wheel_base", "wheel_speed_scale"});
    cfg.diff_drive.wheel_radius =
        get_number(p, "/plant", "wheel_radius", cfg.diff_drive.wheel_radius);
    cfg.diff_drive.wheel_base =
        get_number(p, "/plant", "wheel_base", cfg.diff_drive.wheel_base);
    cfg.diff_drive.wheel_speed_scale =
        get_number(p, "/plant", "wheel_speed_scale", cfg.diff_drive.wheel_speed_scale);
    try {
      cfg.diff_drive.validate();
    } catch (const std::exception& e) {
      throw ConfigError("/plant", e.what());
    }
  }

  if (j.contains("arm")) {
    const auto& a = j.at("arm");
    reject_unknown_keys(a, "/arm",
                        {"dh", "delta_t", "joint_position_limit", "joint_velocity_limit",
                         "home"});
    if (a.contains("dh")) {
      const auto& rows = a.at("dh");
      if (!rows.is_array() || rows.size() != 6) {
        throw ConfigError("/arm/dh", "expected 6 rows of [a, alpha, d, theta_offset]");
      }
      for (std::size_t i = 0; i < 6; ++i) {
        const auto& r = rows[i];
        if (!r.is_array() || r.size() != 4) {
          throw ConfigError("/arm/dh/" + std::to_string(i),
                            "expected [a, alpha, d, theta_offset]");
        }
        cfg.arm.dh[i] = DhRow{r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                              r[3].get<double>()};
      }
    }
    cfg.arm.delta_t = get_number(a, "/arm", "delta_t", cfg.arm.delta_t);
    cfg.arm.joint_position_limit =
        get_number(a, "/arm", "joint_position_limit", cfg.arm.joint_position_limit);
    cfg.arm.joint_velocity_limit =
        get_number(a, "/arm", "joint_velocity_limit", cfg.arm.joint_velocity_limit);
    if (a.contains("home")) {
      const auto& h = a.at("home");
      if (!h.is_array() || h.size() != 6) throw ConfigError("/arm/home", "expected 6 numbers");
      for (int i = 0; i < 6; ++i) cfg.arm.home[i] = h[static_cast<std::size_t>(i)].get<double>();
    }
    try {
      cfg.arm.validate();
    } catch (const std::exception& e) {
      throw ConfigError("/arm", e.what());
    }
  }

  if (j.contains("reference")) {
    const auto& r = j.at("reference");
    reject_unknown_keys(r, "/reference", {"sim", "real"});
    if (r.contains("sim")) cfg.sim_truth = parse_truth(r.at("sim"), "/reference/sim");
    if (r.contains("real")) cfg.real_truth = parse_truth(r.at("real"), "/reference/real");
  }

  if (!j.contains("stages")) throw ConfigError("", "missing 'stages'");
  const auto& stages = j.at("stages");
  if (!stages.is_array() || stages.empty()) {
    throw ConfigError("/stages", "expected a non-empty array");
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    cfg.stages.push_back(
        parse_stage(stages[i], "/stages/" + std::to_string(i), cfg.robot));
  }

  // Commanded amplitudes must be reachable through the inverse relations.
  if (cfg.robot == RobotKind::DiffDrive) {
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
      const auto& t = cfg.stages[i].trajectory;
      const std::string path = "/stages/" + std::to_string(i) + "/trajectory/amplitude";
      if (t.kind == TrajectoryKind::SpinInPlace &&
          t.amplitude > cfg.diff_drive.max_yaw_rate() * (1.0 + 1e-9)) {
        throw ConfigError(path, "spin amplitude exceeds the plant's max yaw rate " +
                                    fmt_double(cfg.diff_drive.max_yaw_rate()));
      }
      if (t.kind == TrajectoryKind::LineX &&
          t.amplitude > cfg.diff_drive.max_forward_speed() * (1.0 + 1e-9)) {
        throw ConfigError(path, "line amplitude exceeds the plant's max forward speed " +
                                    fmt_double(cfg.diff_drive.max_forward_speed()));
      }
    }
  }
  return cfg;
}

// Parses a config file; syntax errors are reported with line and column.
inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace restune
