#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "restune/chain.hpp"
#include "restune/sources.hpp"
#include "restune/ukf.hpp"

namespace restune {

// ---------------------------------------------------------------------------
// History
// ---------------------------------------------------------------------------

struct HistoryRecord {
  double t = 0.0;
  Eigen::VectorXd z;                                     // network input
  Eigen::Vector3d base_rate = Eigen::Vector3d::Zero();   // current-model rate
  Eigen::Vector3d ref_rate = Eigen::Vector3d::Zero();    // observed reference rate
};

// Fixed-capacity ring over the last N steps. snapshot() hands out a
// time-ordered copy that stays valid while the buffer keeps moving.
class HistoryBuffer {
public:
  explicit HistoryBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("HistoryBuffer: capacity must be >= 1");
    ring_.resize(static_cast<std::size_t>(capacity));
  }

  void push(HistoryRecord rec) {
    ring_[head_] = std::move(rec);
    head_ = (head_ + 1) % ring_.size();
    if (size_ < ring_.size()) ++size_;
  }

  bool full() const { return size_ == ring_.size(); }
  int capacity() const { return capacity_; }
  std::size_t size() const { return size_; }

  std::vector<HistoryRecord> snapshot() const {
    std::vector<HistoryRecord> out;
    out.reserve(size_);
    const std::size_t start = (head_ + ring_.size() - size_) % ring_.size();
    for (std::size_t i = 0; i < size_; ++i) {
      out.push_back(ring_[(start + i) % ring_.size()]);
    }
    return out;
  }

private:
  int capacity_;
  std::vector<HistoryRecord> ring_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

// ---------------------------------------------------------------------------
// Measurement stacks and metrics
// ---------------------------------------------------------------------------

// Reference stack: cost-weighted observed rates, timestep-major.
inline Eigen::VectorXd stack_reference(std::span<const HistoryRecord> history,
                                       const Eigen::Vector3d& costs) {
  if (history.empty()) throw std::invalid_argument("stack_reference: empty history");
  Eigen::VectorXd out(3 * static_cast<Eigen::Index>(history.size()));
  for (std::size_t k = 0; k < history.size(); ++k) {
    out.segment<3>(3 * static_cast<Eigen::Index>(k)) =
        history[k].ref_rate.cwiseProduct(costs);
  }
  return out;
}

// Predicted stack for candidate trainable parameters: the chain is replayed
// over the recorded inputs (teacher forcing, no state compounding) and each
// rate is cost-weighted.
inline Eigen::VectorXd build_measurement(std::span<const HistoryRecord> history,
                                         const ParamVector& trainable_params,
                                         const ResidualChain& chain,
                                         const Eigen::Vector3d& costs) {
  if (history.empty()) throw std::invalid_argument("build_measurement: empty history");
  const int trainable = chain.trainable_index();
  if (trainable == -2) {
    throw std::invalid_argument("build_measurement: more than one trainable stage");
  }
  Eigen::VectorXd out(3 * static_cast<Eigen::Index>(history.size()));
  for (std::size_t k = 0; k < history.size(); ++k) {
    const Eigen::Vector3d pred =
        chain_eval_with(chain, trainable, trainable_params, history[k].z,
                        history[k].base_rate);
    out.segment<3>(3 * static_cast<Eigen::Index>(k)) = pred.cwiseProduct(costs);
  }
  return out;
}

inline double h2_norm(const Eigen::Vector3d& ref, const Eigen::Vector3d& pred) {
  return (ref - pred).norm();
}

// First-order exponential moving average on the trainable stage's published
// output. alpha = 1 passes raw values through.
class LowPassFilter {
public:
  explicit LowPassFilter(double alpha) : alpha_(alpha) {
    if (alpha < 0.0 || alpha > 1.0) {
      throw std::invalid_argument("LowPassFilter: alpha must be in [0, 1]");
    }
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& raw) {
    prev_ = (1.0 - alpha_) * prev_ + alpha_ * raw;
    return prev_;
  }

  const Eigen::Vector3d& state() const { return prev_; }

private:
  double alpha_;
  Eigen::Vector3d prev_ = Eigen::Vector3d::Zero();
};

// True when the sim-informed model tracks the real stream strictly better
// than the bare kinematic model (channelwise-averaged mean absolute error).
inline bool check_warm_start(std::span<const Eigen::Vector3d> real_rates,
                             std::span<const Eigen::Vector3d> kin_rates,
                             std::span<const Eigen::Vector3d> sim_informed_rates) {
  if (real_rates.empty() || kin_rates.size() != real_rates.size() ||
      sim_informed_rates.size() != real_rates.size()) {
    throw std::invalid_argument("check_warm_start: empty or mismatched windows");
  }
  Eigen::Vector3d kin_err = Eigen::Vector3d::Zero();
  Eigen::Vector3d sim_err = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < real_rates.size(); ++i) {
    kin_err += (real_rates[i] - kin_rates[i]).cwiseAbs();
    sim_err += (real_rates[i] - sim_informed_rates[i]).cwiseAbs();
  }
  return kin_err.mean() > sim_err.mean();
}

// ---------------------------------------------------------------------------
// Stage execution
// ---------------------------------------------------------------------------

enum class StageKind { SimToKin, RealToKin, RealToSim };

inline std::string to_string(StageKind k) {
  switch (k) {
    case StageKind::SimToKin: return "sim-to-kin";
    case StageKind::RealToKin: return "real-to-kin";
    case StageKind::RealToSim: return "real-to-sim";
  }
  return "unknown";
}

struct StageConfig {
  StageKind kind = StageKind::SimToKin;
  TrajectorySpec trajectory;
  TunerConfig tuner;
  Eigen::Vector3d costs = Eigen::Vector3d::Ones();
  int horizon = 20;       // N, the history window per measurement
  int stride = 20;        // steps between updates
  double filter_alpha = 0.2;
  std::uint64_t seed = 0; // trainable-stage init seed
  double init_scale = 0.0;
  int n_hidden = 10;
  bool warm_start = true;        // gate inclusion of the prior stage
  int warm_start_window = 200;   // probe samples for the gate
  std::string tag;

  void validate() const {
    trajectory.validate();
    if ((costs.array() <= 0.0).any()) {
      throw std::invalid_argument("StageConfig: costs must be > 0");
    }
    if (horizon < 1) throw std::invalid_argument("StageConfig: horizon must be >= 1");
    if (stride < 1) throw std::invalid_argument("StageConfig: stride must be >= 1");
    if (filter_alpha < 0.0 || filter_alpha > 1.0) {
      throw std::invalid_argument("StageConfig: filter_alpha must be in [0, 1]");
    }
    if (init_scale < 0.0) throw std::invalid_argument("StageConfig: init_scale must be >= 0");
    if (n_hidden < 1) throw std::invalid_argument("StageConfig: n_hidden must be >= 1");
  }

  std::string label() const { return tag.empty() ? to_string(kind) : tag; }
};

struct MetricRecord {
  double t = 0.0;
  double h2 = 0.0;
  Eigen::Vector3d err = Eigen::Vector3d::Zero();
  int update_index = 0;  // 0 before the first update
  double innovation_norm = 0.0;
  double trace_p = 0.0;
};

struct DiagnosticsRow {
  int update_index = 0;
  UpdateDiagnostics diag;
};

struct StageResult {
  bool ok = false;
  std::string error;
  StageKind kind = StageKind::SimToKin;
  std::string tag;
  ResidualChain chain;
  std::vector<MetricRecord> metrics;
  std::vector<DiagnosticsRow> diagnostics;
  std::vector<TickRecord> stream;
  int updates = 0;
  double wall_clock_s = 0.0;

  double mean_h2() const {
    if (metrics.empty()) return 0.0;
    double s = 0.0;
    for (const auto& m : metrics) s += m.h2;
    return s / static_cast<double>(metrics.size());
  }

  // Mean over the final tenth of the records.
  double trailing_mean_h2() const {
    if (metrics.empty()) return 0.0;
    const std::size_t n = std::max<std::size_t>(1, metrics.size() / 10);
    double s = 0.0;
    for (std::size_t i = metrics.size() - n; i < metrics.size(); ++i) s += metrics[i].h2;
    return s / static_cast<double>(n);
  }

  double leading_mean_h2() const {
    if (metrics.empty()) return 0.0;
    const std::size_t n = std::max<std::size_t>(1, metrics.size() / 10);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += metrics[i].h2;
    return s / static_cast<double>(n);
  }
};

using ZBuilder =
    std::function<Eigen::VectorXd(const Eigen::Vector3d& prev_ref_rate,
                                  const Eigen::VectorXd& input)>;
using BaseRateFn = std::function<Eigen::Vector3d(const TickRecord&)>;

enum class RunMode { SingleThread, Async };

inline ZBuilder z_builder_for(RobotKind kind) {
  if (kind == RobotKind::DiffDrive) {
    return [](const Eigen::Vector3d& prev, const Eigen::VectorXd& input) {
      return diff_drive_net_input(prev, WheelCommand{input[0], input[1]});
    };
  }
  return [](const Eigen::Vector3d&, const Eigen::VectorXd& input) {
    return arm_net_input(Vector6d(input));
  };
}

namespace detail {

struct StageLoopState {
  HistoryBuffer history;
  LowPassFilter filter;
  Eigen::Vector3d prev_ref = Eigen::Vector3d::Zero();
  int steps_since_update = 0;

  StageLoopState(int horizon, double filter_alpha)
      : history(horizon), filter(filter_alpha) {}
};

}  // namespace detail

// Runs one learning stage against a reference source. The chain must carry
// exactly one trainable stage, already sized for the robot's input width.
// When base_stream is set it supplies the current-model rate (the stream
// standing in for the simulator); otherwise base_fn evaluates the kinematic
// model at the recorded state.
//
// SingleThread interleaves tuner updates with the streaming loop and is fully
// deterministic. Async runs the tuner on its own thread; the streaming loop
// paces itself at the source dt like a live robot stream, publishes history
// snapshots, and picks up new parameters without ever waiting on an update.
inline StageResult run_stage(const StageConfig& cfg, ResidualChain chain,
                             RateSource& reference, const ZBuilder& z_builder,
                             const BaseRateFn& base_fn,
                             RateSource* base_stream = nullptr,
                             RunMode mode = RunMode::SingleThread) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  StageResult result;
  result.kind = cfg.kind;
  result.tag = cfg.label();

  const int trainable = chain.trainable_index();
  if (trainable < 0) {
    result.error = trainable == -2 ? "chain has more than one trainable stage"
                                   : "chain has no trainable stage";
    return result;
  }
  const MlpSpec spec = chain.stages[static_cast<std::size_t>(trainable)].spec;
  if (chain.stages[static_cast<std::size_t>(trainable)].params.size() != spec.param_count()) {
    result.error = "trainable stage parameters do not match its spec";
    return result;
  }

  const int meas_dim = 3 * cfg.horizon;
  UkfTuner tuner = UkfTuner::with_diagonal(
      chain.stages[static_cast<std::size_t>(trainable)].params, meas_dim, cfg.tuner);

  detail::StageLoopState loop(cfg.horizon, cfg.filter_alpha);
  ParamVector published = tuner.estimate();
  double last_innovation = 0.0;
  double last_trace_p = tuner.covariance().trace();
  int update_count = 0;

  auto emit_metric = [&](const TickRecord& tick, const Eigen::Vector3d& base) {
    const Eigen::VectorXd z = z_builder(loop.prev_ref, tick.input);
    Eigen::Vector3d pred = base;
    for (std::size_t i = 0; i < chain.stages.size(); ++i) {
      const Eigen::Vector3d out = mlp_forward(
          static_cast<int>(i) == trainable ? published : chain.stages[i].params,
          chain.stages[i].spec, z);
      pred += static_cast<int>(i) == trainable ? loop.filter.apply(out) : out;
    }
    MetricRecord m;
    m.t = tick.t;
    m.err = tick.observed_rate - pred;
    m.h2 = m.err.norm();
    m.update_index = update_count;
    m.innovation_norm = last_innovation;
    m.trace_p = last_trace_p;
    result.metrics.push_back(m);
    loop.history.push(HistoryRecord{tick.t, z, base, tick.observed_rate});
    loop.prev_ref = tick.observed_rate;
    ++loop.steps_since_update;
  };

  auto read_base = [&](const TickRecord& tick) -> std::optional<Eigen::Vector3d> {
    if (base_stream == nullptr) return base_fn(tick);
    auto base_tick = base_stream->next();
    if (!base_tick) return std::nullopt;
    return base_tick->observed_rate;
  };

  bool aborted = false;
  if (mode == RunMode::SingleThread) {
    while (auto tick = reference.next()) {
      auto base = read_base(*tick);
      if (!base) {
        result.error = "base stream ended before the reference stream";
        aborted = true;
        break;
      }
      emit_metric(*tick, *base);
      if (loop.history.full() && loop.steps_since_update >= cfg.stride) {
        const auto snap = loop.history.snapshot();
        const Eigen::VectorXd x_ref = stack_reference(snap, cfg.costs);
        auto outcome = tuner.update(
            [&](const Eigen::VectorXd& y) {
              return build_measurement(snap, y, chain, cfg.costs);
            },
            x_ref);
        if (!outcome.ok) {
          result.error = "tuner update failed: " + outcome.error;
          aborted = true;
          break;
        }
        ++update_count;
        published = tuner.estimate();
        last_innovation = outcome.diag.innovation_norm;
        last_trace_p = outcome.diag.trace_p;
        result.diagnostics.push_back(DiagnosticsRow{update_count, outcome.diag});
        loop.steps_since_update = 0;
      }
      result.stream.push_back(*tick);
    }
  } else {
    std::mutex mu;
    std::condition_variable cv;
    std::optional<std::vector<HistoryRecord>> pending;
    bool stop = false;
    bool failed = false;
    std::string worker_error;
    ParamVector shared_published = published;
    double shared_innovation = 0.0;
    double shared_trace_p = last_trace_p;
    int shared_updates = 0;

    const auto wall_start = std::chrono::steady_clock::now();
    std::int64_t step_index = 0;

    std::thread worker([&] {
      for (;;) {
        std::vector<HistoryRecord> snap;
        {
          std::unique_lock lk(mu);
          cv.wait(lk, [&] { return stop || pending.has_value(); });
          if (!pending.has_value()) break;
          snap = std::move(*pending);
          pending.reset();
        }
        const Eigen::VectorXd x_ref = stack_reference(snap, cfg.costs);
        auto outcome = tuner.update(
            [&](const Eigen::VectorXd& y) {
              return build_measurement(snap, y, chain, cfg.costs);
            },
            x_ref);
        std::lock_guard lk(mu);
        if (!outcome.ok) {
          failed = true;
          worker_error = outcome.error;
          break;
        }
        ++shared_updates;
        shared_published = tuner.estimate();
        shared_innovation = outcome.diag.innovation_norm;
        shared_trace_p = outcome.diag.trace_p;
        result.diagnostics.push_back(DiagnosticsRow{shared_updates, outcome.diag});
      }
    });

    while (auto tick = reference.next()) {
      // live-stream pacing: one tick per dt of wall clock
      const double target = static_cast<double>(step_index) * reference.dt();
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
              .count();
      if (target > elapsed) {
        std::this_thread::sleep_for(std::chrono::duration<double>(target - elapsed));
      }
      ++step_index;

      auto base = read_base(*tick);
      if (!base) {
        result.error = "base stream ended before the reference stream";
        aborted = true;
        break;
      }
      {
        std::lock_guard lk(mu);
        if (failed) {
          result.error = "tuner update failed: " + worker_error;
          aborted = true;
          break;
        }
        published = shared_published;
        last_innovation = shared_innovation;
        last_trace_p = shared_trace_p;
        update_count = shared_updates;
      }
      emit_metric(*tick, *base);
      if (loop.history.full() && loop.steps_since_update >= cfg.stride) {
        std::lock_guard lk(mu);
        pending = loop.history.snapshot();
        loop.steps_since_update = 0;
        cv.notify_one();
      }
      result.stream.push_back(*tick);
    }
    {
      std::lock_guard lk(mu);
      stop = true;
      cv.notify_one();
    }
    worker.join();
    {
      std::lock_guard lk(mu);
      if (failed && !aborted) {
        result.error = "tuner update failed: " + worker_error;
        aborted = true;
      }
      update_count = shared_updates;
    }
  }

  result.updates = update_count;
  chain.stages[static_cast<std::size_t>(trainable)].params = tuner.estimate();
  chain.stages[static_cast<std::size_t>(trainable)].frozen = true;
  result.chain = std::move(chain);
  result.ok = !aborted;
  result.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace restune
