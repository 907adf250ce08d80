#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "restune/compare.hpp"
#include "restune/experiment.hpp"
#include "restune/plot.hpp"

namespace restune::cli {

// Exit codes: 0 success, 1 runtime/stage failure, 2 invalid configuration.

inline int cmd_run(const std::string& config_path, const RunOptions& opt) {
  ExperimentConfig cfg;
  try {
    cfg = load_config_file(config_path);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  RunResult run;
  try {
    run = run_experiment(cfg, opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (!run.ok) {
    std::cerr << "run failed: " << run.error << "\n";
    if (!run.dir.empty()) std::cerr << "partial logs: " << run.dir.string() << "\n";
    return 1;
  }
  std::cout << "run complete: " << run.dir.string() << "\n";
  for (const auto& s : run.summaries) {
    std::printf("  stage %d %-12s records=%d updates=%d mean_h2=%.6g trailing=%.6g%s\n",
                s.index, s.kind.c_str(), s.records, s.updates, s.mean_h2,
                s.trailing_mean_h2, s.warm_start_used ? " warm-start" : "");
  }
  return 0;
}

inline int cmd_compare(const std::string& dir_a, const std::string& dir_b,
                       const std::string& out_csv) {
  try {
    const CompareReport report = compare_runs(dir_a, dir_b);
    std::cout << report.render_table();
    report.write_csv(out_csv);
    std::cout << "report written to " << out_csv << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "compare failed: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_plot(const std::string& run_dir, int max_rows) {
  try {
    PlotOptions opt;
    opt.max_rows = max_rows;
    const int n = plot_run(run_dir, opt);
    std::cout << "plotted " << n << " stage(s) under "
              << (std::filesystem::path(run_dir) / "plots").string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "plot failed: " << e.what() << "\n";
    return 1;
  }
}

namespace detail {

struct ReplaySettings {
  DiffDriveParams diff_drive;
  ArmParams arm = ArmParams::generic_6dof();
  StageConfig stage;
};

inline ReplaySettings load_replay_settings(const std::optional<std::string>& path) {
  ReplaySettings s;
  s.stage.kind = StageKind::SimToKin;
  s.stage.tag = "replay";
  if (!path) return s;
  std::ifstream in(*path);
  if (!in) throw ConfigError("cannot open config file " + *path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(*path + ": " + e.what());
  }
  restune::detail::reject_unknown_keys(
      j, "", {"plant", "arm", "tuner", "costs", "horizon", "stride", "filter_alpha",
              "seed", "init_scale", "n_hidden"});
  using restune::detail::get_int;
  using restune::detail::get_number;
  using restune::detail::get_seed;
  using restune::detail::get_vector3;
  if (j.contains("plant")) {
    const auto& p = j.at("plant");
    restune::detail::reject_unknown_keys(p, "/plant",
                                         {"wheel_radius", "wheel_base", "wheel_speed_scale"});
    s.diff_drive.wheel_radius = get_number(p, "/plant", "wheel_radius", s.diff_drive.wheel_radius);
    s.diff_drive.wheel_base = get_number(p, "/plant", "wheel_base", s.diff_drive.wheel_base);
    s.diff_drive.wheel_speed_scale =
        get_number(p, "/plant", "wheel_speed_scale", s.diff_drive.wheel_speed_scale);
    s.diff_drive.validate();
  }
  if (j.contains("arm")) {
    const auto& a = j.at("arm");
    restune::detail::reject_unknown_keys(a, "/arm", {"delta_t", "home"});
    s.arm.delta_t = get_number(a, "/arm", "delta_t", s.arm.delta_t);
    if (a.contains("home")) {
      const auto& h = a.at("home");
      if (!h.is_array() || h.size() != 6) throw ConfigError("/arm/home", "expected 6 numbers");
      for (int i = 0; i < 6; ++i) s.arm.home[i] = h[static_cast<std::size_t>(i)].get<double>();
    }
    s.arm.validate();
  }
  if (j.contains("tuner")) s.stage.tuner = restune::detail::parse_tuner(j.at("tuner"), "/tuner");
  s.stage.costs = get_vector3(j, "", "costs", s.stage.costs);
  s.stage.horizon = get_int(j, "", "horizon", s.stage.horizon);
  s.stage.stride = get_int(j, "", "stride", s.stage.stride);
  s.stage.filter_alpha = get_number(j, "", "filter_alpha", s.stage.filter_alpha);
  s.stage.seed = get_seed(j, "", "seed", s.stage.seed);
  s.stage.init_scale = get_number(j, "", "init_scale", s.stage.init_scale);
  s.stage.n_hidden = get_int(j, "", "n_hidden", s.stage.n_hidden);
  s.stage.validate();
  return s;
}

}  // namespace detail

// Trains one residual stage against a recorded stream instead of a synthetic
// plant; the kinematic model supplies the base rates.
inline int cmd_replay(const std::string& csv_path,
                      const std::optional<std::string>& config_path,
                      const RunOptions& opt) {
  detail::ReplaySettings settings;
  try {
    settings = detail::load_replay_settings(config_path);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  try {
    RecordedStream stream(csv_path, settings.arm.home);
    const RobotKind robot = stream.robot();

    StageConfig stage = settings.stage;
    if (opt.seed_override) stage.seed = *opt.seed_override;
    if (opt.stride_override) stage.stride = *opt.stride_override;
    if (opt.filter_alpha_override) stage.filter_alpha = *opt.filter_alpha_override;
    stage.trajectory.duration = static_cast<double>(stream.size()) * stream.dt();
    stage.trajectory.dt = stream.dt();

    ResidualChain chain;
    const MlpSpec spec{net_input_width(robot), stage.n_hidden, 3};
    chain.stages.push_back(ChainStage{
        spec, init_params(spec, stage.seed, stage.init_scale), false, stage.seed});

    BaseRateFn base_fn;
    if (robot == RobotKind::DiffDrive) {
      base_fn = [p = settings.diff_drive](const TickRecord& tick) {
        return diff_drive_rate(
            Pose2{tick.model_state[0], tick.model_state[1], tick.model_state[2]},
            WheelCommand{tick.input[0], tick.input[1]}, p, Eigen::Vector3d::Zero());
      };
    } else {
      base_fn = [p = settings.arm](const TickRecord& tick) {
        return fk_velocity(Vector6d(tick.model_state), Vector6d(tick.input), p,
                           Eigen::Vector3d::Zero());
      };
    }

    namespace fs = std::filesystem;
    fs::path dir;
    if (opt.out_override) {
      dir = *opt.out_override;
    } else {
      const std::string name =
          "replay-" + fs::path(csv_path).stem().string();
      const char* root = std::getenv(kOutRootEnv);
      dir = root ? fs::path(root) / name : fs::path("runs") / name;
    }
    if (fs::exists(dir)) {
      std::cerr << "output directory already exists: " << dir.string() << "\n";
      return 1;
    }
    fs::create_directories(dir);

    const std::string started = iso8601_utc_now();
    StageResult result =
        run_stage(stage, std::move(chain), stream, z_builder_for(robot), base_fn, nullptr,
                  opt.single_thread ? RunMode::SingleThread : RunMode::Async);
    write_stage_outputs(dir / "stage_00_sim-to-kin", result, robot);

    nlohmann::json manifest;
    manifest["format"] = "restune-run";
    manifest["code_version"] = kVersionString;
    manifest["config_hash"] = config_hash(nlohmann::json{{"replay", csv_path}});
    manifest["seed"] = stage.seed;
    manifest["mode"] = opt.single_thread ? "single-thread" : "async";
    manifest["started_at"] = started;
    manifest["finished_at"] = iso8601_utc_now();
    manifest["status"] = result.ok ? "complete" : "failed";
    if (!result.ok) manifest["error"] = result.error;
    nlohmann::json sj;
    sj["index"] = 0;
    sj["kind"] = to_string(result.kind);
    sj["tag"] = result.tag;
    sj["records"] = static_cast<int>(result.metrics.size());
    sj["updates"] = result.updates;
    sj["mean_h2"] = result.mean_h2();
    sj["trailing_mean_h2"] = result.trailing_mean_h2();
    sj["wall_clock_s"] = result.wall_clock_s;
    sj["warm_start_used"] = false;
    manifest["stages"] = nlohmann::json::array({sj});
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";

    if (!result.ok) {
      std::cerr << "replay failed: " << result.error << "\n";
      std::cerr << "partial logs: " << dir.string() << "\n";
      return 1;
    }
    std::cout << "replay complete: " << dir.string() << "\n";
    std::printf("  records=%d updates=%d mean_h2=%.6g trailing=%.6g\n",
                static_cast<int>(result.metrics.size()), result.updates, result.mean_h2(),
                result.trailing_mean_h2());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "replay failed: " << e.what() << "\n";
    return 1;
  }
}

inline int dispatch(int argc, const char* const* argv) {
  CLI::App app{"residual model-error learning with UKF-tuned networks"};
  app.require_subcommand(1);

  std::string config_path, dir_a, dir_b, run_dir, csv_path;
  std::string out_path, compare_out = "compare.csv";
  std::optional<std::string> replay_config;
  std::uint64_t seed = 0;
  int stride = 0;
  double filter_alpha = -1.0;
  int max_rows = 2000;
  bool single_thread = false;

  auto* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("config", config_path, "experiment config (JSON)")->required();
  auto* run_out = run->add_option("--out", out_path, "output run directory");
  auto* run_seed = run->add_option("--seed", seed, "override the experiment seed");
  run->add_flag("--single-thread", single_thread,
                "deterministic interleaved mode (no tuner thread)");
  auto* run_stride = run->add_option("--stride", stride, "override update stride");
  auto* run_filter =
      run->add_option("--filter-alpha", filter_alpha, "override low-pass coefficient");

  auto* cmp = app.add_subcommand("compare", "compare two completed runs");
  cmp->add_option("dirA", dir_a, "first run directory")->required();
  cmp->add_option("dirB", dir_b, "second run directory")->required();
  cmp->add_option("--out", compare_out, "comparison CSV path");

  auto* plt = app.add_subcommand("plot", "emit SVG plots for a run");
  plt->add_option("dir", run_dir, "run directory")->required();
  plt->add_option("--max-rows", max_rows, "downsample limit");

  auto* rpl = app.add_subcommand("replay", "train against a recorded stream CSV");
  rpl->add_option("csv", csv_path, "recorded stream (CSV)")->required();
  std::string replay_config_str;
  auto* rpl_cfg = rpl->add_option("--config", replay_config_str, "replay settings (JSON)");
  auto* rpl_out = rpl->add_option("--out", out_path, "output directory");
  auto* rpl_seed = rpl->add_option("--seed", seed, "trainable-stage init seed");
  rpl->add_flag("--single-thread", single_thread,
                "deterministic interleaved mode (no tuner thread)");
  auto* rpl_stride = rpl->add_option("--stride", stride, "override update stride");
  auto* rpl_filter =
      rpl->add_option("--filter-alpha", filter_alpha, "override low-pass coefficient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  RunOptions opt;
  opt.single_thread = single_thread;
  if (*run) {
    if (run_out->count()) opt.out_override = out_path;
    if (run_seed->count()) opt.seed_override = seed;
    if (run_stride->count()) opt.stride_override = stride;
    if (run_filter->count()) opt.filter_alpha_override = filter_alpha;
    return cmd_run(config_path, opt);
  }
  if (*cmp) return cmd_compare(dir_a, dir_b, compare_out);
  if (*plt) return cmd_plot(run_dir, max_rows);
  if (*rpl) {
    if (rpl_cfg->count()) replay_config = replay_config_str;
    if (rpl_out->count()) opt.out_override = out_path;
    if (rpl_seed->count()) opt.seed_override = seed;
    if (rpl_stride->count()) opt.stride_override = stride;
    if (rpl_filter->count()) opt.filter_alpha_override = filter_alpha;
    return cmd_replay(csv_path, replay_config, opt);
  }
  return 1;
}

}  // namespace restune::cli
