#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "restune/mlp.hpp"
#include "restune/rng.hpp"

namespace restune {

enum class ResidualKind { None, ConstantBias, RandomNet, Analytic };
enum class NoiseKind { None, Gaussian, Mixture };

inline std::string to_string(ResidualKind k) {
  switch (k) {
    case ResidualKind::None: return "none";
    case ResidualKind::ConstantBias: return "constant-bias";
    case ResidualKind::RandomNet: return "random-net";
    case ResidualKind::Analytic: return "analytic";
  }
  return "unknown";
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  Eigen::Vector3d sigma = Eigen::Vector3d::Zero();
  double outlier_scale = 4.0;  // mixture: sigma multiplier of the heavy component
  double outlier_prob = 0.1;   // mixture: probability of the heavy component
};

struct GroundTruthSpec {
  ResidualKind kind = ResidualKind::None;
  Eigen::Vector3d bias = Eigen::Vector3d::Zero();
  double magnitude = 0.0;  // random-net: target rms ratio vs base rates; analytic: amplitude
  std::uint64_t seed = 0;
  NoiseSpec noise;
};

// The injected model error of a reference plant: a deterministic residual on
// the rate vector plus a seeded noise stream. This is what the learner is
// supposed to recover.
class GroundTruthResidual {
public:
  GroundTruthResidual(const GroundTruthSpec& spec, int input_width)
      : spec_(spec), noise_rng_(mix_seed(spec.seed, 0x6e6f697365ULL)) {
    if (spec_.kind == ResidualKind::RandomNet) {
      net_spec_ = MlpSpec{input_width, 10, 3};
      net_params_ = init_params(net_spec_, mix_seed(spec.seed, 0x6e6574ULL), 1.0);
      net_scale_ = spec_.magnitude;
    }
  }

  ResidualKind kind() const { return spec_.kind; }

  // Deterministic residual evaluated on the same network input the learner
  // sees.
  Eigen::Vector3d residual(const Eigen::VectorXd& z) const {
    switch (spec_.kind) {
      case ResidualKind::None:
        return Eigen::Vector3d::Zero();
      case ResidualKind::ConstantBias:
        return spec_.bias;
      case ResidualKind::RandomNet:
        return net_scale_ * mlp_forward(net_params_, net_spec_, z);
      case ResidualKind::Analytic: {
        // Smooth state-dependent perturbation keyed off the third input
        // channel (yaw rate / third joint rate).
        const double c = z.size() > 2 ? z[2] : (z.size() > 0 ? z[z.size() - 1] : 0.0);
        const double lead = z.size() > 0 ? z[0] : 0.0;
        return spec_.magnitude *
               Eigen::Vector3d{std::sin(c), 0.5 * std::cos(2.0 * c), std::tanh(lead + c)};
      }
    }
    return Eigen::Vector3d::Zero();
  }

  // Advances the seeded noise stream; one draw per plant step.
  Eigen::Vector3d sample_noise() {
    switch (spec_.noise.kind) {
      case NoiseKind::None:
        return Eigen::Vector3d::Zero();
      case NoiseKind::Gaussian: {
        Eigen::Vector3d n;
        for (int i = 0; i < 3; ++i) n[i] = noise_rng_.gaussian(spec_.noise.sigma[i]);
        return n;
      }
      case NoiseKind::Mixture: {
        Eigen::Vector3d n;
        for (int i = 0; i < 3; ++i) {
          const double s = noise_rng_.next_double() < spec_.noise.outlier_prob
                               ? spec_.noise.sigma[i] * spec_.noise.outlier_scale
                               : spec_.noise.sigma[i];
          n[i] = noise_rng_.gaussian(s);
        }
        return n;
      }
    }
    return Eigen::Vector3d::Zero();
  }

  // Raw network output before scaling; used to calibrate the scale against a
  // dry-run stream.
  Eigen::Vector3d raw_net_output(const Eigen::VectorXd& z) const {
    if (spec_.kind != ResidualKind::RandomNet) {
      throw std::logic_error("raw_net_output: residual is not a network");
    }
    return mlp_forward(net_params_, net_spec_, z);
  }

  void set_net_scale(double s) { net_scale_ = s; }
  double net_scale() const { return net_scale_; }

private:
  GroundTruthSpec spec_;
  MlpSpec net_spec_{};
  ParamVector net_params_;
  double net_scale_ = 0.0;
  Rng noise_rng_;
};

}  // namespace restune
