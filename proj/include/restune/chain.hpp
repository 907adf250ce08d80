#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "restune/mlp.hpp"

namespace restune {

// One residual network in the chain. Frozen stages are carried over from
// earlier runs and never touched again; exactly one stage may be trainable
// while a stage runs.
struct ChainStage {
  MlpSpec spec;
  ParamVector params;
  bool frozen = true;
  std::uint64_t seed = 0;
};

struct ResidualChain {
  std::vector<ChainStage> stages;

  int trainable_index() const {
    int idx = -1;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (!stages[i].frozen) {
        if (idx >= 0) return -2;  // more than one
        idx = static_cast<int>(i);
      }
    }
    return idx;
  }
};

// base_rate plus every stage's network output, summed in stage order. The
// trainable stage (if any) is evaluated like the rest.
inline Eigen::Vector3d chain_eval_with(const ResidualChain& chain, int trainable_idx,
                                       const ParamVector& trainable_params,
                                       const Eigen::VectorXd& z,
                                       const Eigen::Vector3d& base_rate) {
  Eigen::Vector3d acc = base_rate;
  for (std::size_t i = 0; i < chain.stages.size(); ++i) {
    const auto& stage = chain.stages[i];
    const ParamVector& p =
        static_cast<int>(i) == trainable_idx ? trainable_params : stage.params;
    acc += mlp_forward(p, stage.spec, z);
  }
  return acc;
}

inline Eigen::Vector3d chain_eval(const ResidualChain& chain, const Eigen::VectorXd& z,
                                  const Eigen::Vector3d& base_rate) {
  return chain_eval_with(chain, -1, ParamVector(), z, base_rate);
}

inline nlohmann::json chain_to_json(const ResidualChain& chain) {
  nlohmann::json j;
  j["format"] = "restune-chain";
  j["stages"] = nlohmann::json::array();
  for (const auto& stage : chain.stages) {
    nlohmann::json s = params_to_json(stage.params, stage.spec, stage.seed);
    s["frozen"] = stage.frozen;
    j["stages"].push_back(std::move(s));
  }
  return j;
}

inline ResidualChain chain_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "restune-chain") {
    throw std::runtime_error("chain_from_json: not a chain snapshot");
  }
  ResidualChain chain;
  for (const auto& s : j.at("stages")) {
    auto snap = params_from_json(s);
    chain.stages.push_back(
        ChainStage{snap.spec, std::move(snap.params), s.value("frozen", true), snap.seed});
  }
  return chain;
}

}  // namespace restune
