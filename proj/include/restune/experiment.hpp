#pragma once

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "restune/config.hpp"
#include "restune/pipeline.hpp"

namespace restune {

inline constexpr const char* kVersionString = "restune 0.1.0";
inline constexpr const char* kOutRootEnv = "RESTUNE_OUT_ROOT";

inline std::string config_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string iso8601_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunOptions {
  std::optional<std::string> out_override;
  std::optional<std::uint64_t> seed_override;
  bool single_thread = false;
  std::optional<int> stride_override;
  std::optional<double> filter_alpha_override;
};

struct StageSummary {
  int index = 0;
  std::string kind;
  std::string tag;
  int records = 0;
  int updates = 0;
  double mean_h2 = 0.0;
  double trailing_mean_h2 = 0.0;
  double wall_clock_s = 0.0;
  bool warm_start_used = false;
};

struct RunResult {
  bool ok = false;
  std::string error;
  std::filesystem::path dir;
  std::vector<StageSummary> summaries;
  std::vector<StageResult> results;
};

namespace detail {

enum class PlantRole : std::uint64_t { Sim = 1, Real = 2 };

inline BaseRateFn kinematic_base_fn(const ExperimentConfig& cfg) {
  if (cfg.robot == RobotKind::DiffDrive) {
    return [p = cfg.diff_drive](const TickRecord& tick) {
      return diff_drive_rate(
          Pose2{tick.model_state[0], tick.model_state[1], tick.model_state[2]},
          WheelCommand{tick.input[0], tick.input[1]}, p, Eigen::Vector3d::Zero());
    };
  }
  return [p = cfg.arm](const TickRecord& tick) {
    return fk_velocity(Vector6d(tick.model_state), Vector6d(tick.input), p,
                       Eigen::Vector3d::Zero());
  };
}

inline std::unique_ptr<RateSource> make_bare_plant(const ExperimentConfig& cfg,
                                                   const TrajectorySpec& traj,
                                                   const GroundTruthSpec& truth) {
  if (cfg.robot == RobotKind::DiffDrive) {
    return std::make_unique<DiffDrivePlant>(cfg.diff_drive, truth, traj);
  }
  return std::make_unique<ArmPlant>(cfg.arm, truth, traj);
}

// Scale factor putting the raw random network's rms output at `magnitude`
// times the base-rate rms, measured on a residual-free dry run of the same
// trajectory.
inline double calibrate_net_scale(const ExperimentConfig& cfg, const StageConfig& stage,
                                  const GroundTruthSpec& truth) {
  GroundTruthResidual probe(truth, net_input_width(cfg.robot));
  auto plant = make_bare_plant(cfg, stage.trajectory, GroundTruthSpec{});
  const auto zb = z_builder_for(cfg.robot);
  Eigen::Vector3d prev = Eigen::Vector3d::Zero();
  double base_sq = 0.0, net_sq = 0.0;
  int n = 0;
  const int cap = 5000;
  while (n < cap) {
    auto tick = plant->next();
    if (!tick) break;
    const Eigen::VectorXd z = zb(prev, tick->input);
    net_sq += probe.raw_net_output(z).squaredNorm();
    base_sq += tick->observed_rate.squaredNorm();
    prev = tick->observed_rate;
    ++n;
  }
  if (net_sq <= 0.0 || n == 0) return 0.0;
  return truth.magnitude * std::sqrt(base_sq / net_sq);
}

inline std::unique_ptr<RateSource> make_reference_plant(const ExperimentConfig& cfg,
                                                        PlantRole role,
                                                        const StageConfig& stage,
                                                        std::uint64_t run_seed) {
  GroundTruthSpec truth = role == PlantRole::Sim ? cfg.sim_truth : cfg.real_truth;
  truth.seed = mix_seed(run_seed, truth.seed, static_cast<std::uint64_t>(role));
  double scale = 0.0;
  if (truth.kind == ResidualKind::RandomNet) {
    scale = calibrate_net_scale(cfg, stage, truth);
  }
  if (cfg.robot == RobotKind::DiffDrive) {
    auto plant = std::make_unique<DiffDrivePlant>(cfg.diff_drive, truth, stage.trajectory);
    if (truth.kind == ResidualKind::RandomNet) plant->truth().set_net_scale(scale);
    return plant;
  }
  auto plant = std::make_unique<ArmPlant>(cfg.arm, truth, stage.trajectory);
  if (truth.kind == ResidualKind::RandomNet) plant->truth().set_net_scale(scale);
  return plant;
}

// Prefix probe of the real stream deciding whether the prior stage's residual
// actually improves on the bare kinematic model.
inline bool warm_start_probe(const ExperimentConfig& cfg, const StageConfig& stage,
                             const ChainStage& prior, std::uint64_t run_seed) {
  auto plant = make_reference_plant(cfg, PlantRole::Real, stage, run_seed);
  const auto base_fn = kinematic_base_fn(cfg);
  const auto zb = z_builder_for(cfg.robot);
  std::vector<Eigen::Vector3d> real, kin, informed;
  Eigen::Vector3d prev = Eigen::Vector3d::Zero();
  for (int i = 0; i < stage.warm_start_window; ++i) {
    auto tick = plant->next();
    if (!tick) break;
    const Eigen::VectorXd z = zb(prev, tick->input);
    const Eigen::Vector3d base = base_fn(*tick);
    real.push_back(tick->observed_rate);
    kin.push_back(base);
    informed.push_back(base + mlp_forward(prior.params, prior.spec, z));
    prev = tick->observed_rate;
  }
  if (real.empty()) return false;
  return check_warm_start(real, kin, informed);
}

inline void write_metrics_csv(const std::filesystem::path& path, const StageResult& r) {
  CsvWriter w(path.string());
  w.header({"t", "stage", "h2", "err_x", "err_y", "err_theta_or_z", "update_index",
            "innovation_norm", "trace_P"});
  for (const auto& m : r.metrics) {
    w.row_strings({fmt_double(m.t), r.tag, fmt_double(m.h2), fmt_double(m.err[0]),
                   fmt_double(m.err[1]), fmt_double(m.err[2]),
                   std::to_string(m.update_index), fmt_double(m.innovation_norm),
                   fmt_double(m.trace_p)});
  }
}

inline void write_diagnostics_csv(const std::filesystem::path& path, const StageResult& r) {
  CsvWriter w(path.string());
  w.header({"update_index", "innovation_norm", "trace_P", "elapsed_ms"});
  for (const auto& d : r.diagnostics) {
    w.row_strings({std::to_string(d.update_index), fmt_double(d.diag.innovation_norm),
                   fmt_double(d.diag.trace_p), fmt_double(d.diag.elapsed_ms)});
  }
}

inline std::string stage_dir_name(int index, const StageConfig& stage) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "stage_%02d_", index);
  return buf + to_string(stage.kind);
}

}  // namespace detail

inline void write_stage_outputs(const std::filesystem::path& stage_dir,
                                const StageResult& result, RobotKind robot) {
  std::filesystem::create_directories(stage_dir);
  detail::write_metrics_csv(stage_dir / "metrics.csv", result);
  detail::write_diagnostics_csv(stage_dir / "diagnostics.csv", result);
  write_stream_csv((stage_dir / "stream.csv").string(), robot, result.stream, result.tag);
  std::ofstream out(stage_dir / "chain.json");
  out << chain_to_json(result.chain).dump(2) << "\n";
}

inline std::filesystem::path resolve_run_dir(const ExperimentConfig& cfg,
                                             const RunOptions& opt,
                                             const std::string& hash) {
  if (opt.out_override) return *opt.out_override;
  if (cfg.output_dir) return *cfg.output_dir;
  const std::string name = "run-" + hash.substr(0, 12);
  if (const char* root = std::getenv(kOutRootEnv)) {
    return std::filesystem::path(root) / name;
  }
  return std::filesystem::path("runs") / name;
}

// Executes the configured stage sequence and produces a self-describing run
// directory: config copy, per-stage metrics/diagnostics/stream CSVs, chain
// snapshots, and a manifest written once at the end.
inline RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  RunResult run;
  const std::string hash = config_hash(cfg.raw);
  run.dir = resolve_run_dir(cfg, opt, hash);

  std::error_code ec;
  if (fs::exists(run.dir)) {
    run.error = "run directory already exists: " + run.dir.string();
    return run;
  }
  fs::create_directories(run.dir, ec);
  if (ec) {
    run.error = "cannot create run directory " + run.dir.string() + ": " + ec.message();
    return run;
  }

  {
    std::ofstream out(run.dir / "config.json");
    out << cfg.raw.dump(2) << "\n";
  }

  const std::uint64_t run_seed = opt.seed_override.value_or(cfg.seed);
  const RunMode mode = opt.single_thread ? RunMode::SingleThread : RunMode::Async;
  const std::string started = iso8601_utc_now();

  nlohmann::json manifest;
  manifest["format"] = "restune-run";
  manifest["code_version"] = kVersionString;
  manifest["config_hash"] = hash;
  manifest["seed"] = run_seed;
  manifest["mode"] = opt.single_thread ? "single-thread" : "async";
  manifest["started_at"] = started;
  manifest["stages"] = nlohmann::json::array();

  auto finish = [&](bool ok, const std::string& error) {
    manifest["finished_at"] = iso8601_utc_now();
    manifest["status"] = ok ? "complete" : "failed";
    if (!ok) manifest["error"] = error;
    std::ofstream out(run.dir / "manifest.json");
    out << manifest.dump(2) << "\n";
    run.ok = ok;
    run.error = error;
  };

  const auto base_fn = detail::kinematic_base_fn(cfg);
  const auto zb = z_builder_for(cfg.robot);
  std::map<StageKind, ChainStage> learned;

  for (std::size_t idx = 0; idx < cfg.stages.size(); ++idx) {
    StageConfig stage = cfg.stages[idx];
    if (opt.stride_override) stage.stride = *opt.stride_override;
    if (opt.filter_alpha_override) stage.filter_alpha = *opt.filter_alpha_override;

    ResidualChain chain;
    bool warm_used = false;
    std::unique_ptr<RateSource> reference;
    std::unique_ptr<RateSource> base_stream;

    switch (stage.kind) {
      case StageKind::SimToKin:
        reference = detail::make_reference_plant(cfg, detail::PlantRole::Sim, stage, run_seed);
        break;
      case StageKind::RealToKin: {
        reference = detail::make_reference_plant(cfg, detail::PlantRole::Real, stage, run_seed);
        auto prior = learned.find(StageKind::SimToKin);
        if (stage.warm_start && prior != learned.end()) {
          warm_used = detail::warm_start_probe(cfg, stage, prior->second, run_seed);
          if (warm_used) chain.stages.push_back(prior->second);
        }
        break;
      }
      case StageKind::RealToSim: {
        reference = detail::make_reference_plant(cfg, detail::PlantRole::Real, stage, run_seed);
        base_stream = detail::make_reference_plant(cfg, detail::PlantRole::Sim, stage, run_seed);
        auto prior = learned.find(StageKind::RealToKin);
        if (stage.warm_start && prior != learned.end()) {
          warm_used = true;
          chain.stages.push_back(prior->second);
        }
        break;
      }
    }

    const MlpSpec spec{net_input_width(cfg.robot), stage.n_hidden, 3};
    const std::uint64_t init_seed = mix_seed(run_seed, stage.seed, 1000 + idx);
    chain.stages.push_back(
        ChainStage{spec, init_params(spec, init_seed, stage.init_scale), false, init_seed});

    StageResult result = run_stage(stage, std::move(chain), *reference, zb, base_fn,
                                   base_stream.get(), mode);

    const fs::path stage_dir = run.dir / detail::stage_dir_name(static_cast<int>(idx), stage);
    write_stage_outputs(stage_dir, result, cfg.robot);

    StageSummary summary;
    summary.index = static_cast<int>(idx);
    summary.kind = to_string(stage.kind);
    summary.tag = result.tag;
    summary.records = static_cast<int>(result.metrics.size());
    summary.updates = result.updates;
    summary.mean_h2 = result.mean_h2();
    summary.trailing_mean_h2 = result.trailing_mean_h2();
    summary.wall_clock_s = result.wall_clock_s;
    summary.warm_start_used = warm_used;
    run.summaries.push_back(summary);

    nlohmann::json sj;
    sj["index"] = summary.index;
    sj["kind"] = summary.kind;
    sj["tag"] = summary.tag;
    sj["records"] = summary.records;
    sj["updates"] = summary.updates;
    sj["mean_h2"] = summary.mean_h2;
    sj["trailing_mean_h2"] = summary.trailing_mean_h2;
    sj["wall_clock_s"] = summary.wall_clock_s;
    sj["warm_start_used"] = summary.warm_start_used;
    manifest["stages"].push_back(std::move(sj));

    const bool ok = result.ok;
    const std::string err = result.error;
    learned[stage.kind] = result.chain.stages.back();
    run.results.push_back(std::move(result));

    if (!ok) {
      finish(false, "stage " + std::to_string(idx) + " (" + to_string(stage.kind) +
                        ") failed: " + err);
      return run;
    }
  }

  finish(true, "");
  return run;
}

}  // namespace restune
