#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "restune/rng.hpp"

namespace restune {

// One-hidden-layer fully connected network with leaky-ReLU activations. The
// residual model is this network; the tuner treats its weights and biases as
// one flat parameter vector.
struct MlpSpec {
  int n_in = 5;
  int n_hidden = 10;
  int n_out = 3;

  bool operator==(const MlpSpec&) const = default;

  bool valid() const { return n_in >= 1 && n_hidden >= 1 && n_out >= 1; }

  // Flat layout: [b_in | W_in | W_lay | b_lay | W_out | b_out], matrices
  // stored column-major.
  int param_count() const {
    return n_in + n_in * n_hidden + n_hidden * n_hidden + n_hidden + n_out * n_hidden + n_out;
  }
};

using ParamVector = Eigen::VectorXd;

inline int param_count(const MlpSpec& spec) { return spec.param_count(); }

inline void check_spec(const MlpSpec& spec) {
  if (!spec.valid()) {
    throw std::invalid_argument("MlpSpec: all widths must be >= 1");
  }
}

inline void check_param_size(const ParamVector& params, const MlpSpec& spec) {
  check_spec(spec);
  if (params.size() != spec.param_count()) {
    throw std::invalid_argument("ParamVector length " + std::to_string(params.size()) +
                                " does not match spec param count " +
                                std::to_string(spec.param_count()));
  }
}

inline Eigen::VectorXd leaky_relu(const Eigen::VectorXd& b) {
  return b.cwiseMax(0.01 * b);
}

// Structured view of a parameter vector.
struct MlpWeights {
  Eigen::VectorXd b_in;   // n_in
  Eigen::MatrixXd w_in;   // n_hidden x n_in
  Eigen::MatrixXd w_lay;  // n_hidden x n_hidden
  Eigen::VectorXd b_lay;  // n_hidden
  Eigen::MatrixXd w_out;  // n_out x n_hidden
  Eigen::VectorXd b_out;  // n_out
};

inline ParamVector pack(const MlpWeights& w) {
  const auto hidden = w.w_lay.rows();
  if (w.w_in.rows() != hidden || w.w_lay.cols() != hidden || w.b_lay.size() != hidden ||
      w.w_out.cols() != hidden || w.w_in.cols() != w.b_in.size() ||
      w.w_out.rows() != w.b_out.size()) {
    throw std::invalid_argument("pack: inconsistent weight shapes");
  }
  MlpSpec spec{static_cast<int>(w.b_in.size()), static_cast<int>(hidden),
               static_cast<int>(w.b_out.size())};
  check_spec(spec);
  ParamVector p(spec.param_count());
  Eigen::Index at = 0;
  auto put_vec = [&](const Eigen::VectorXd& v) {
    p.segment(at, v.size()) = v;
    at += v.size();
  };
  auto put_mat = [&](const Eigen::MatrixXd& m) {
    p.segment(at, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    at += m.size();
  };
  put_vec(w.b_in);
  put_mat(w.w_in);
  put_mat(w.w_lay);
  put_vec(w.b_lay);
  put_mat(w.w_out);
  put_vec(w.b_out);
  return p;
}

inline MlpWeights unpack(const ParamVector& params, const MlpSpec& spec) {
  check_param_size(params, spec);
  MlpWeights w;
  Eigen::Index at = 0;
  auto take_vec = [&](Eigen::Index n) {
    Eigen::VectorXd v = params.segment(at, n);
    at += n;
    return v;
  };
  auto take_mat = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m =
        Eigen::Map<const Eigen::MatrixXd>(params.data() + at, rows, cols);
    at += rows * cols;
    return m;
  };
  w.b_in = take_vec(spec.n_in);
  w.w_in = take_mat(spec.n_hidden, spec.n_in);
  w.w_lay = take_mat(spec.n_hidden, spec.n_hidden);
  w.b_lay = take_vec(spec.n_hidden);
  w.w_out = take_mat(spec.n_out, spec.n_hidden);
  w.b_out = take_vec(spec.n_out);
  return w;
}

// Forward pass: W_out * s(W_lay * s(W_in * (z + b_in)) + b_lay) + b_out with
// s = leaky ReLU. The input bias is added to z before the input weights; this
// is what makes the flat layout sizes come out right.
inline Eigen::VectorXd mlp_forward(const ParamVector& params, const MlpSpec& spec,
                                   const Eigen::VectorXd& z) {
  check_param_size(params, spec);
  if (z.size() != spec.n_in) {
    throw std::invalid_argument("mlp_forward: input width " + std::to_string(z.size()) +
                                " does not match spec n_in " + std::to_string(spec.n_in));
  }
  const double* d = params.data();
  Eigen::Index at = 0;
  Eigen::Map<const Eigen::VectorXd> b_in(d + at, spec.n_in);
  at += spec.n_in;
  Eigen::Map<const Eigen::MatrixXd> w_in(d + at, spec.n_hidden, spec.n_in);
  at += spec.n_hidden * spec.n_in;
  Eigen::Map<const Eigen::MatrixXd> w_lay(d + at, spec.n_hidden, spec.n_hidden);
  at += spec.n_hidden * spec.n_hidden;
  Eigen::Map<const Eigen::VectorXd> b_lay(d + at, spec.n_hidden);
  at += spec.n_hidden;
  Eigen::Map<const Eigen::MatrixXd> w_out(d + at, spec.n_out, spec.n_hidden);
  at += spec.n_out * spec.n_hidden;
  Eigen::Map<const Eigen::VectorXd> b_out(d + at, spec.n_out);

  Eigen::VectorXd h1 = w_in * (z + b_in);
  h1 = h1.cwiseMax(0.01 * h1);
  Eigen::VectorXd h2 = w_lay * h1 + b_lay;
  h2 = h2.cwiseMax(0.01 * h2);
  return w_out * h2 + b_out;
}

// Uniform entries in [-scale, scale]; scale 0 gives the zero network so a
// fresh chain stage adds nothing until tuned.
inline ParamVector init_params(const MlpSpec& spec, std::uint64_t seed, double scale) {
  check_spec(spec);
  if (scale < 0.0) {
    throw std::invalid_argument("init_params: scale must be >= 0");
  }
  ParamVector p = ParamVector::Zero(spec.param_count());
  if (scale > 0.0) {
    Rng rng(seed);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p[i] = rng.uniform(-scale, scale);
    }
  }
  return p;
}

// Snapshot format: header with the layer widths and init seed, then the flat
// values in layout order.
inline nlohmann::json params_to_json(const ParamVector& params, const MlpSpec& spec,
                                     std::uint64_t seed) {
  check_param_size(params, spec);
  nlohmann::json j;
  j["n_in"] = spec.n_in;
  j["n_hidden"] = spec.n_hidden;
  j["n_out"] = spec.n_out;
  j["seed"] = seed;
  j["values"] = std::vector<double>(params.data(), params.data() + params.size());
  return j;
}

struct ParamSnapshot {
  MlpSpec spec;
  std::uint64_t seed = 0;
  ParamVector params;
};

inline ParamSnapshot params_from_json(const nlohmann::json& j) {
  ParamSnapshot s;
  s.spec = MlpSpec{j.at("n_in").get<int>(), j.at("n_hidden").get<int>(),
                   j.at("n_out").get<int>()};
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto& vals = j.at("values");
  s.params.resize(static_cast<Eigen::Index>(vals.size()));
  for (Eigen::Index i = 0; i < s.params.size(); ++i) {
    s.params[i] = vals[static_cast<std::size_t>(i)].get<double>();
  }
  check_param_size(s.params, s.spec);
  return s;
}

}  // namespace restune
