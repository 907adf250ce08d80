// Acceptance suite: one self-contained check per criterion, each printing a
// single [PASS]/[FAIL] line. Run with no arguments for the whole suite or
// with a criterion number (1-11) for one check.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "restune/cli.hpp"
#include "restune/compare.hpp"
#include "restune/experiment.hpp"
#include "restune/pipeline.hpp"
#include "support/oracles.hpp"

using namespace restune;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  const char* name;
  std::function<bool(std::string&)> fn;
};

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

fs::path scratch_dir(const std::string& stem) {
  const fs::path p = fs::temp_directory_path() / ("restune_acceptance_" + stem);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// --- shared experiment configs -------------------------------------------

nlohmann::json spin_bias_config(double duration_s) {
  nlohmann::json j = nlohmann::json::parse(R"({
    "robot": "diff-drive",
    "seed": 11,
    "plant": {"wheel_radius": 0.06, "wheel_base": 0.06, "wheel_speed_scale": 10.0},
    "reference": {
      "sim": {
        "kind": "constant-bias",
        "bias": [0.0, 0.0, 0.2],
        "seed": 3,
        "noise": {"kind": "gaussian", "sigma": [0.01, 0.01, 0.01]}
      }
    },
    "stages": [{
      "kind": "sim-to-kin",
      "trajectory": {"kind": "spin-in-place", "amplitude": 2.0, "period": 8.0,
                     "duration": 100.0, "dt": 0.01},
      "tuner": {"alpha": 0.1, "beta": 2.0, "kappa": 0.0,
                "process_noise": 5e-8, "measurement_noise": 1e-2,
                "initial_covariance": 1e-9},
      "horizon": 20, "stride": 20, "filter_alpha": 1.0,
      "seed": 2, "init_scale": 0.0
    }]
  })");
  j["stages"][0]["trajectory"]["duration"] = duration_s;
  return j;
}

nlohmann::json random_net_config(bool learning) {
  nlohmann::json j = nlohmann::json::parse(R"({
    "robot": "diff-drive",
    "seed": 19,
    "plant": {"wheel_radius": 0.06, "wheel_base": 0.06, "wheel_speed_scale": 10.0},
    "reference": {
      "sim": {
        "kind": "random-net",
        "magnitude": 0.2,
        "seed": 8,
        "noise": {"kind": "mixture", "sigma": [0.01, 0.01, 0.01],
                   "outlier_scale": 4.0, "outlier_prob": 0.1}
      }
    },
    "stages": [{
      "kind": "sim-to-kin",
      "trajectory": {"kind": "spin-in-place", "amplitude": 2.0, "period": 8.0,
                     "duration": 240.0, "dt": 0.01},
      "tuner": {"alpha": 0.1, "beta": 2.0, "kappa": 0.0,
                "process_noise": 1e-7, "measurement_noise": 1e-2,
                "initial_covariance": 1e-4},
      "horizon": 20, "stride": 20, "filter_alpha": 1.0,
      "seed": 6, "init_scale": 0.2
    }]
  })");
  if (!learning) j["stages"][0]["stride"] = 1000000;  // never updates: bare model
  return j;
}

double final_quarter_mean(const std::vector<MetricRecord>& metrics) {
  const std::size_t n = metrics.size();
  const std::size_t start = n - n / 4;
  double s = 0.0;
  for (std::size_t i = start; i < n; ++i) s += metrics[i].h2;
  return s / static_cast<double>(n - start);
}

// --- criteria --------------------------------------------------------------

bool criterion_param_count(std::string& detail) {
  const bool ok =
      param_count(MlpSpec{5, 10, 3}) == 198 && param_count(MlpSpec{6, 10, 3}) == 209;
  detail = "param_count(5,10,3)=" + std::to_string(param_count(MlpSpec{5, 10, 3})) +
           ", param_count(6,10,3)=" + std::to_string(param_count(MlpSpec{6, 10, 3}));
  return ok;
}

bool criterion_linear_gain(std::string& detail) {
  const double t0 = now_s();
  Rng rng(404);
  double worst = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 5);
    const int m = 1 + static_cast<int>(rng.next_u64() % 5);
    const Eigen::MatrixXd h = oracles::random_matrix(rng, m, dim);
    const Eigen::VectorXd b = oracles::random_vector(rng, m);
    const Eigen::MatrixXd p0 = oracles::random_spd(rng, dim);
    const Eigen::MatrixXd cy = oracles::random_spd(rng, dim, 1e-2);
    const Eigen::MatrixXd cv = oracles::random_spd(rng, m);
    UkfTuner tuner(oracles::random_vector(rng, dim), p0, cy, cv, 0.3, 2.0, 0.0);
    auto out = tuner.update(
        [&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return h * y + b; },
        oracles::random_vector(rng, m));
    if (!out.ok) {
      detail = "update failed: " + out.error;
      return false;
    }
    const Eigen::MatrixXd expect = oracles::linear_kalman_gain(p0 + cy, h, cv);
    worst = std::max(worst, (out.gain - expect).cwiseAbs().maxCoeff());
  }
  const double elapsed = now_s() - t0;
  detail = "max |K - K*| = " + fmt_double(worst) + " over 25 affine maps, " +
           fmt_double(elapsed) + " s";
  return worst <= 1e-8 && elapsed < 1.0;
}

bool criterion_sigma_identities(std::string& detail) {
  Rng rng(505);
  double worst_mean = 0.0, worst_cov = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 10);
    const SigmaWeights w = sigma_weights(dim, 0.4, 2.0, 0.0);
    const Eigen::VectorXd center = oracles::random_vector(rng, dim, -2.0, 2.0);
    const Eigen::MatrixXd p = oracles::random_spd(rng, dim);
    const Eigen::MatrixXd pts = sigma_points(center, p, w);
    const Eigen::VectorXd mean = pts * w.mean_w;
    worst_mean = std::max(worst_mean, (mean - center).cwiseAbs().maxCoeff());
    const Eigen::MatrixXd dev = pts.colwise() - mean;
    const Eigen::MatrixXd recon = dev * w.cov_w.asDiagonal() * dev.transpose();
    worst_cov = std::max(worst_cov, (recon - p).norm() / p.norm());
  }
  detail = "mean err " + fmt_double(worst_mean) + ", cov rel err " + fmt_double(worst_cov) +
           " over 100 trials";
  return worst_mean <= 1e-12 && worst_cov <= 1e-9;
}

bool criterion_fk_consistency(std::string& detail) {
  const ArmParams base = ArmParams::generic_6dof();
  Rng rng(606);
  const std::vector<double> steps = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  double worst_slope = 10.0;
  for (int trial = 0; trial < 20; ++trial) {
    Vector6d q, qd;
    for (int i = 0; i < 6; ++i) {
      q[i] = rng.uniform(-1.2, 1.2);
      qd[i] = rng.uniform(-1.0, 1.0);
    }
    const Eigen::Vector3d exact = oracles::analytic_jacobian(q, base) * qd;
    std::vector<double> log_dt, log_err;
    for (double dt : steps) {
      ArmParams p = base;
      p.delta_t = dt;
      const double err =
          (fk_velocity(q, qd, p, Eigen::Vector3d::Zero()) - exact).norm();
      log_dt.push_back(std::log10(dt));
      log_err.push_back(std::log10(std::max(err, 1e-300)));
    }
    const double n = static_cast<double>(steps.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      sx += log_dt[i];
      sy += log_err[i];
      sxx += log_dt[i] * log_dt[i];
      sxy += log_dt[i] * log_err[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    worst_slope = std::min(worst_slope, slope);
  }
  detail = "worst log-log slope " + fmt_double(worst_slope) + " over 20 configurations";
  return worst_slope >= 0.9;
}

bool criterion_zero_residual(std::string& detail) {
  DiffDriveParams params;
  params.wheel_radius = 0.06;
  params.wheel_base = 0.06;
  StageConfig cfg;
  cfg.kind = StageKind::SimToKin;
  cfg.trajectory = TrajectorySpec{TrajectoryKind::SpinInPlace, 2.0, 8.0, 10.0, 0.01};
  cfg.horizon = 20;
  cfg.stride = 20;
  cfg.filter_alpha = 1.0;

  DiffDrivePlant plant(params, GroundTruthSpec{}, cfg.trajectory);
  ResidualChain chain;
  const MlpSpec spec{5, 10, 3};
  chain.stages.push_back(ChainStage{spec, init_params(spec, 0, 0.0), false, 0});
  auto base_fn = [p = params](const TickRecord& tick) {
    return diff_drive_rate(
        Pose2{tick.model_state[0], tick.model_state[1], tick.model_state[2]},
        WheelCommand{tick.input[0], tick.input[1]}, p, Eigen::Vector3d::Zero());
  };
  const StageResult r = run_stage(cfg, chain, plant, z_builder_for(RobotKind::DiffDrive),
                                  base_fn, nullptr, RunMode::SingleThread);
  if (!r.ok) {
    detail = "stage failed: " + r.error;
    return false;
  }
  double max_h2 = 0.0, max_delta = 0.0;
  for (const auto& m : r.metrics) max_h2 = std::max(max_h2, m.h2);
  for (const auto& d : r.diagnostics) max_delta = std::max(max_delta, d.diag.delta_norm);
  detail = std::to_string(r.metrics.size()) + " steps, " + std::to_string(r.updates) +
           " updates, max h2 " + fmt_double(max_h2) + ", max |dy| " + fmt_double(max_delta);
  return r.metrics.size() == 1000 && max_h2 <= 1e-10 && max_delta <= 1e-6;
}

bool criterion_convergence(std::string& detail) {
  const double t0 = now_s();
  const ExperimentConfig cfg = parse_config(spin_bias_config(100.0));
  RunOptions opt;
  opt.single_thread = true;
  const fs::path dir = scratch_dir("criterion6");
  opt.out_override = dir.string();
  const RunResult run = run_experiment(cfg, opt);
  const double elapsed = now_s() - t0;
  if (!run.ok) {
    detail = "run failed: " + run.error;
    return false;
  }
  const StageResult& r = run.results[0];
  const double leading = r.leading_mean_h2();
  const double trailing = r.trailing_mean_h2();
  fs::remove_all(dir);
  detail = "updates " + std::to_string(r.updates) + ", leading " + fmt_double(leading) +
           ", trailing " + fmt_double(trailing) + " (ratio " +
           fmt_double(trailing / leading) + "), " + fmt_double(elapsed) + " s";
  return r.updates <= 500 && trailing <= 0.10 * leading && elapsed <= 60.0;
}

bool criterion_nonlinear_recovery(std::string& detail) {
  const double t0 = now_s();
  RunOptions opt;
  opt.single_thread = true;

  const fs::path dir_base = scratch_dir("criterion7_base");
  opt.out_override = dir_base.string();
  const RunResult baseline = run_experiment(parse_config(random_net_config(false)), opt);
  if (!baseline.ok) {
    detail = "baseline run failed: " + baseline.error;
    return false;
  }

  const fs::path dir_learn = scratch_dir("criterion7_learn");
  opt.out_override = dir_learn.string();
  const RunResult learned = run_experiment(parse_config(random_net_config(true)), opt);
  if (!learned.ok) {
    detail = "learning run failed: " + learned.error;
    return false;
  }

  const double base_q = final_quarter_mean(baseline.results[0].metrics);
  const double learn_q = final_quarter_mean(learned.results[0].metrics);
  const double reduction = 1.0 - learn_q / base_q;
  const double elapsed = now_s() - t0;
  fs::remove_all(dir_base);
  fs::remove_all(dir_learn);
  detail = "baseline " + fmt_double(base_q) + ", learned " + fmt_double(learn_q) +
           ", reduction " + fmt_double(100.0 * reduction) + "%, " + fmt_double(elapsed) +
           " s";
  return reduction >= 0.70 && elapsed <= 120.0;
}

bool criterion_latency(std::string& detail) {
  Rng rng(808);
  const MlpSpec spec{6, 10, 3};
  ResidualChain chain;
  chain.stages.push_back(ChainStage{spec, init_params(spec, 5, 0.1), false, 5});
  std::vector<HistoryRecord> history;
  for (int k = 0; k < 20; ++k) {
    HistoryRecord rec;
    rec.t = 0.01 * k;
    rec.z = oracles::random_vector(rng, 6);
    rec.base_rate = oracles::random_vector(rng, 3);
    rec.ref_rate = oracles::random_vector(rng, 3);
    history.push_back(rec);
  }
  const Eigen::Vector3d costs = Eigen::Vector3d::Ones();
  TunerConfig tc;
  UkfTuner tuner = UkfTuner::with_diagonal(chain.stages[0].params, 60, tc);
  const Eigen::VectorXd x_ref = stack_reference(history, costs);

  const double t0 = now_s();
  auto out = tuner.update(
      [&](const Eigen::VectorXd& y) { return build_measurement(history, y, chain, costs); },
      x_ref);
  const double elapsed = now_s() - t0;
  if (!out.ok) {
    detail = "update failed: " + out.error;
    return false;
  }
  detail = "one update with L=209, 419 rollouts of 20 steps: " + fmt_double(elapsed) + " s";
  return elapsed <= 2.0;
}

bool criterion_determinism(std::string& detail) {
  const ExperimentConfig cfg = parse_config(spin_bias_config(20.0));
  RunOptions opt;
  opt.single_thread = true;
  const fs::path da = scratch_dir("criterion9_a");
  const fs::path db = scratch_dir("criterion9_b");
  opt.out_override = da.string();
  const RunResult ra = run_experiment(cfg, opt);
  opt.out_override = db.string();
  const RunResult rb = run_experiment(cfg, opt);
  if (!ra.ok || !rb.ok) {
    detail = "runs failed";
    return false;
  }
  const std::string ma = slurp(da / "stage_00_sim-to-kin" / "metrics.csv");
  const std::string mb = slurp(db / "stage_00_sim-to-kin" / "metrics.csv");
  fs::remove_all(da);
  fs::remove_all(db);
  detail = std::to_string(ma.size()) + " bytes of metrics, byte-identical: " +
           (ma == mb ? "yes" : "no");
  return !ma.empty() && ma == mb;
}

bool criterion_warm_start(std::string& detail) {
  nlohmann::json warm = nlohmann::json::parse(R"({
    "robot": "diff-drive",
    "seed": 23,
    "plant": {"wheel_radius": 0.06, "wheel_base": 0.06, "wheel_speed_scale": 10.0},
    "reference": {
      "sim":  {"kind": "constant-bias", "bias": [0.0, 0.0, 0.15], "seed": 5,
               "noise": {"kind": "gaussian", "sigma": 0.005}},
      "real": {"kind": "constant-bias", "bias": [0.0, 0.02, 0.25], "seed": 6,
               "noise": {"kind": "gaussian", "sigma": 0.01}}
    },
    "stages": [
      {"kind": "sim-to-kin",
       "trajectory": {"kind": "spin-in-place", "amplitude": 2.0, "period": 8.0,
                      "duration": 40.0, "dt": 0.01},
       "tuner": {"initial_covariance": 1e-6, "process_noise": 1e-6}, "filter_alpha": 1.0,
       "seed": 2},
      {"kind": "real-to-kin",
       "trajectory": {"kind": "spin-in-place", "amplitude": 2.0, "period": 8.0,
                      "duration": 40.0, "dt": 0.01},
       "tuner": {"initial_covariance": 1e-6, "process_noise": 1e-6}, "filter_alpha": 1.0,
       "seed": 3, "warm_start": true}
    ]
  })");
  nlohmann::json cold = warm;
  cold["stages"].erase(0);
  cold["stages"][0]["warm_start"] = false;

  RunOptions opt;
  opt.single_thread = true;
  const fs::path dw = scratch_dir("criterion10_warm");
  const fs::path dc = scratch_dir("criterion10_cold");
  opt.out_override = dw.string();
  const RunResult rw = run_experiment(parse_config(warm), opt);
  opt.out_override = dc.string();
  const RunResult rc = run_experiment(parse_config(cold), opt);
  if (!rw.ok || !rc.ok) {
    detail = "runs failed";
    return false;
  }
  const bool gate_used = rw.summaries[1].warm_start_used;

  const CompareReport report = compare_runs(dw, dc);
  const fs::path csv = fs::temp_directory_path() / "restune_acceptance_compare.csv";
  report.write_csv(csv.string());
  bool found = false;
  double warm_trailing = 0.0, cold_trailing = 0.0;
  for (const auto& row : report.rows) {
    if (row.kind == "real-to-kin" && row.a && row.b) {
      found = true;
      warm_trailing = row.a->trailing_mean_h2;
      cold_trailing = row.b->trailing_mean_h2;
    }
  }
  const bool csv_ok = fs::exists(csv) && fs::file_size(csv) > 0;
  fs::remove(csv);
  fs::remove_all(dw);
  fs::remove_all(dc);
  detail = std::string("gate passed: ") + (gate_used ? "yes" : "no") +
           "; trailing H2 warm " + fmt_double(warm_trailing) + " vs cold " +
           fmt_double(cold_trailing) + " (reported benchmark)";
  return gate_used && found && csv_ok && std::isfinite(warm_trailing) &&
         std::isfinite(cold_trailing);
}

bool criterion_chain_additivity(std::string& detail) {
  Rng rng(909);
  const MlpSpec spec{5, 10, 3};
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n_stages = static_cast<int>(rng.next_u64() % 4);
    ResidualChain chain;
    for (int s = 0; s < n_stages; ++s) {
      chain.stages.push_back(
          ChainStage{spec, init_params(spec, rng.next_u64(), 0.6), true, 0});
    }
    for (int rep = 0; rep < 4; ++rep) {
      const Eigen::VectorXd z = oracles::random_vector(rng, 5, -2.0, 2.0);
      const Eigen::Vector3d base = oracles::random_vector(rng, 3);
      Eigen::Vector3d expect = base;
      for (const auto& st : chain.stages) expect += mlp_forward(st.params, st.spec, z);
      const Eigen::Vector3d got = chain_eval(chain, z, base);
      if (!(got.array() == expect.array()).all()) {
        detail = "mismatch with " + std::to_string(n_stages) + " stages";
        return false;
      }
      ++checked;
    }
  }
  detail = std::to_string(checked) + " randomized chains of 0-3 stages, all exact";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "param-count fidelity", criterion_param_count},
      {2, "linear Kalman gain oracle", criterion_linear_gain},
      {3, "sigma-point identities", criterion_sigma_identities},
      {4, "FK finite-difference consistency", criterion_fk_consistency},
      {5, "zero-residual null run", criterion_zero_residual},
      {6, "sim-to-kin convergence", criterion_convergence},
      {7, "nonlinear residual recovery", criterion_nonlinear_recovery},
      {8, "update latency L=209", criterion_latency},
      {9, "deterministic metric CSVs", criterion_determinism},
      {10, "warm-start comparison report", criterion_warm_start},
      {11, "chain additivity", criterion_chain_additivity},
  };

  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %02d %-36s %s\n", ok ? "PASS" : "FAIL", c.id, c.name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
