#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include "restune/mlp.hpp"

namespace restune {

// Scaled unscented-transform weights for dimension L: 2L+1 points, mean
// weights w_a and covariance weights w_c.
struct SigmaWeights {
  Eigen::VectorXd mean_w;  // w_a, size 2L+1
  Eigen::VectorXd cov_w;   // w_c, size 2L+1
  double alpha = 0.1;
  double beta = 2.0;
  double kappa = 0.0;
  double lambda = 0.0;
  int dim = 0;  // L
};

inline SigmaWeights sigma_weights(int dim, double alpha, double beta, double kappa) {
  if (dim < 1) {
    throw std::invalid_argument("sigma_weights: dimension must be >= 1");
  }
  if (alpha <= 0.0) {
    throw std::invalid_argument("sigma_weights: alpha must be > 0");
  }
  const double lambda = alpha * alpha * (dim + kappa) - dim;
  const double denom = dim + lambda;
  if (std::abs(denom) < 1e-12) {
    throw std::invalid_argument("sigma_weights: degenerate scaling, L + lambda == 0");
  }
  SigmaWeights w;
  w.alpha = alpha;
  w.beta = beta;
  w.kappa = kappa;
  w.lambda = lambda;
  w.dim = dim;
  const int n = 2 * dim + 1;
  w.mean_w.setConstant(n, 1.0 / (2.0 * denom));
  w.cov_w = w.mean_w;
  w.mean_w[0] = lambda / denom;
  w.cov_w[0] = lambda / denom + (1.0 - alpha * alpha + beta);
  return w;
}

// Lower Cholesky factor with escalating diagonal jitter. Starts at 1e-12,
// multiplies by 10 up to 1e-6, then gives up.
struct JitteredCholesky {
  Eigen::MatrixXd factor;  // lower triangular
  double jitter = 0.0;     // 0 when none was needed
  bool ok = false;
};

inline JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& m,
                                             double first_jitter = 1e-12,
                                             double max_jitter = 1e-6) {
  JitteredCholesky out;
  if (!m.allFinite()) {
    return out;
  }
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success) {
    out.factor = llt.matrixL();
    out.ok = true;
    return out;
  }
  for (double eps = first_jitter; eps <= max_jitter * (1.0 + 1e-9); eps *= 10.0) {
    Eigen::MatrixXd jittered = sym;
    jittered.diagonal().array() += eps;
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) {
      out.factor = llt.matrixL();
      out.jitter = eps;
      out.ok = true;
      return out;
    }
  }
  return out;
}

// Columns are the 2L+1 sigma points: [center, center + s_i, center - s_i]
// with s_i = sqrt(L + lambda) * chol(p_eff) column i.
inline Eigen::MatrixXd sigma_points(const Eigen::VectorXd& center,
                                    const Eigen::MatrixXd& p_eff,
                                    const SigmaWeights& w) {
  const int dim = static_cast<int>(center.size());
  if (dim != w.dim || p_eff.rows() != dim || p_eff.cols() != dim) {
    throw std::invalid_argument("sigma_points: dimension mismatch");
  }
  if (!center.allFinite() || !p_eff.allFinite()) {
    throw std::invalid_argument("sigma_points: non-finite input");
  }
  auto chol = cholesky_with_jitter(p_eff);
  if (!chol.ok) {
    throw std::runtime_error("sigma_points: Cholesky failed after maximum jitter");
  }
  const double scale = std::sqrt(dim + w.lambda);
  Eigen::MatrixXd pts(dim, 2 * dim + 1);
  pts.col(0) = center;
  for (int i = 0; i < dim; ++i) {
    Eigen::VectorXd offset = scale * chol.factor.col(i);
    pts.col(1 + i) = center + offset;
    pts.col(1 + dim + i) = center - offset;
  }
  return pts;
}

inline ParamVector apply_update(const ParamVector& anchor, const ParamVector& delta) {
  if (anchor.size() != delta.size()) {
    throw std::invalid_argument("apply_update: length mismatch");
  }
  return anchor + delta;
}

struct TunerConfig {
  double alpha = 0.1;
  double beta = 2.0;
  double kappa = 0.0;
  double process_noise = 1e-4;      // diagonal of C_y
  double measurement_noise = 1e-2;  // diagonal of C_v
  double initial_covariance = 1e-2; // diagonal of P0
};

struct UpdateDiagnostics {
  double innovation_norm = 0.0;
  double delta_norm = 0.0;
  double trace_p = 0.0;
  double s_condition = 0.0;  // ratio of extreme |d| in the LDLT of S
  double chol_jitter = 0.0;
  double elapsed_ms = 0.0;
};

struct UpdateOutcome {
  bool ok = false;
  std::string error;
  Eigen::VectorXd delta;
  Eigen::MatrixXd gain;  // K, kept for instrumentation and tests
  Eigen::VectorXd predicted_mean;
  UpdateDiagnostics diag;
};

using RolloutFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Derivative-free parameter estimator. One update: spread sigma points from
// the current estimate, push each through the caller's rollout, and apply the
// resulting Kalman gain to the stacked innovation. On any numerical failure
// the state is left untouched and the outcome carries the error.
class UkfTuner {
public:
  UkfTuner(ParamVector initial, Eigen::MatrixXd p0, Eigen::MatrixXd process_noise,
           Eigen::MatrixXd measurement_noise, double alpha, double beta, double kappa)
      : estimate_(std::move(initial)),
        covariance_(std::move(p0)),
        process_noise_(std::move(process_noise)),
        measurement_noise_(std::move(measurement_noise)),
        weights_(sigma_weights(static_cast<int>(estimate_.size()), alpha, beta, kappa)) {
    const Eigen::Index dim = estimate_.size();
    if (covariance_.rows() != dim || covariance_.cols() != dim ||
        process_noise_.rows() != dim || process_noise_.cols() != dim) {
      throw std::invalid_argument("UkfTuner: covariance dimensions do not match parameters");
    }
    if (measurement_noise_.rows() != measurement_noise_.cols()) {
      throw std::invalid_argument("UkfTuner: measurement noise must be square");
    }
  }

  static UkfTuner with_diagonal(ParamVector initial, int measurement_dim,
                                const TunerConfig& cfg) {
    const Eigen::Index dim = initial.size();
    Eigen::MatrixXd p0 =
        Eigen::MatrixXd::Identity(dim, dim) * cfg.initial_covariance;
    Eigen::MatrixXd cy = Eigen::MatrixXd::Identity(dim, dim) * cfg.process_noise;
    Eigen::MatrixXd cv = Eigen::MatrixXd::Identity(measurement_dim, measurement_dim) *
                         cfg.measurement_noise;
    return UkfTuner(std::move(initial), std::move(p0), std::move(cy), std::move(cv),
                    cfg.alpha, cfg.beta, cfg.kappa);
  }

  const ParamVector& estimate() const { return estimate_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const SigmaWeights& weights() const { return weights_; }
  int measurement_dim() const { return static_cast<int>(measurement_noise_.rows()); }

  UpdateOutcome update(const RolloutFn& measure, const Eigen::VectorXd& reference) {
    const auto t0 = std::chrono::steady_clock::now();
    UpdateOutcome out;
    const Eigen::Index dim = estimate_.size();
    const Eigen::Index m = measurement_noise_.rows();
    if (reference.size() != m) {
      out.error = "reference length does not match measurement dimension";
      return out;
    }
    if (!reference.allFinite()) {
      out.error = "reference contains non-finite values";
      return out;
    }

    Eigen::MatrixXd p_prior = covariance_ + process_noise_;
    p_prior = 0.5 * (p_prior + p_prior.transpose());

    auto chol = cholesky_with_jitter(p_prior);
    if (!chol.ok) {
      out.error = "prior covariance Cholesky failed after maximum jitter";
      return out;
    }
    const double scale = std::sqrt(static_cast<double>(dim) + weights_.lambda);
    const int n_pts = 2 * static_cast<int>(dim) + 1;
    Eigen::MatrixXd pts(dim, n_pts);
    pts.col(0) = estimate_;
    for (Eigen::Index i = 0; i < dim; ++i) {
      Eigen::VectorXd offset = scale * chol.factor.col(i);
      pts.col(1 + i) = estimate_ + offset;
      pts.col(1 + dim + i) = estimate_ - offset;
    }

    Eigen::MatrixXd preds(m, n_pts);
    for (int i = 0; i < n_pts; ++i) {
      Eigen::VectorXd p = measure(pts.col(i));
      if (p.size() != m || !p.allFinite()) {
        out.error = "rollout produced non-finite or mis-sized output";
        return out;
      }
      preds.col(i) = p;
    }

    Eigen::VectorXd pred_mean = preds * weights_.mean_w;
    Eigen::VectorXd pt_mean = pts * weights_.mean_w;

    Eigen::MatrixXd pred_dev = preds.colwise() - pred_mean;
    Eigen::MatrixXd pt_dev = pts.colwise() - pt_mean;

    Eigen::MatrixXd innovation_cov =
        measurement_noise_ + pred_dev * weights_.cov_w.asDiagonal() * pred_dev.transpose();
    innovation_cov = 0.5 * (innovation_cov + innovation_cov.transpose());
    Eigen::MatrixXd cross_cov =
        pt_dev * weights_.cov_w.asDiagonal() * pred_dev.transpose();

    // K = C_sz S^-1 via a symmetric solve, with jitter on S if the
    // factorization degenerates.
    Eigen::MatrixXd gain;
    double s_jitter = 0.0;
    {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(innovation_cov);
      bool good = ldlt.info() == Eigen::Success;
      if (good) {
        gain = ldlt.solve(cross_cov.transpose()).transpose();
        good = gain.allFinite();
        if (good) {
          const auto d = ldlt.vectorD();
          const double dmax = d.cwiseAbs().maxCoeff();
          const double dmin = d.cwiseAbs().minCoeff();
          out.diag.s_condition = dmin > 0.0 ? dmax / dmin : std::numeric_limits<double>::infinity();
        }
      }
      if (!good) {
        for (double eps = 1e-12; eps <= 1e-6 * (1.0 + 1e-9); eps *= 10.0) {
          Eigen::MatrixXd jittered = innovation_cov;
          jittered.diagonal().array() += eps;
          ldlt.compute(jittered);
          if (ldlt.info() != Eigen::Success) continue;
          gain = ldlt.solve(cross_cov.transpose()).transpose();
          if (gain.allFinite()) {
            s_jitter = eps;
            good = true;
            break;
          }
        }
      }
      if (!good) {
        out.error = "innovation covariance solve failed after maximum jitter";
        return out;
      }
    }

    Eigen::VectorXd innovation = reference - pred_mean;
    Eigen::VectorXd delta = gain * innovation;
    Eigen::MatrixXd p_post = p_prior - gain * innovation_cov * gain.transpose();
    p_post = 0.5 * (p_post + p_post.transpose());
    if (!delta.allFinite() || !p_post.allFinite()) {
      out.error = "update produced non-finite values";
      return out;
    }

    estimate_ += delta;
    covariance_ = std::move(p_post);

    out.ok = true;
    out.delta = std::move(delta);
    out.gain = std::move(gain);
    out.predicted_mean = std::move(pred_mean);
    out.diag.innovation_norm = innovation.norm();
    out.diag.delta_norm = out.delta.norm();
    out.diag.trace_p = covariance_.trace();
    out.diag.chol_jitter = std::max(chol.jitter, s_jitter);
    out.diag.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    return out;
  }

private:
  ParamVector estimate_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd process_noise_;
  Eigen::MatrixXd measurement_noise_;
  SigmaWeights weights_;
};

}  // namespace restune
