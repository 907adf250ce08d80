#include <doctest.h>

#include <Eigen/SVD>

#include "restune/mlp.hpp"
#include "support/oracles.hpp"

using namespace restune;

TEST_SUITE("mlp") {

TEST_CASE("param_count matches the flat layout") {
  CHECK(param_count(MlpSpec{5, 10, 3}) == 198);
  CHECK(param_count(MlpSpec{6, 10, 3}) == 209);
  CHECK(param_count(MlpSpec{1, 1, 1}) == 6);
}

TEST_CASE("leaky_relu") {
  Eigen::VectorXd v(3);
  v << 2.0, -1.0, 0.0;
  const Eigen::VectorXd out = leaky_relu(v);
  CHECK(out[0] == 2.0);
  CHECK(out[1] == -0.01);
  CHECK(out[2] == 0.0);
}

TEST_CASE("zero parameters give the zero network") {
  const MlpSpec spec{5, 10, 3};
  const ParamVector p = ParamVector::Zero(spec.param_count());
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd z = oracles::random_vector(rng, 5, -3.0, 3.0);
    CHECK(mlp_forward(p, spec, z).isZero(0.0));
  }
}

TEST_CASE("hand-evaluated 1x1x1 forward pass") {
  const MlpSpec spec{1, 1, 1};
  MlpWeights w;
  w.b_in = Eigen::VectorXd::Constant(1, 1.0);
  w.w_in = Eigen::MatrixXd::Constant(1, 1, 1.0);
  w.w_lay = Eigen::MatrixXd::Constant(1, 1, 1.0);
  w.b_lay = Eigen::VectorXd::Zero(1);
  w.w_out = Eigen::MatrixXd::Constant(1, 1, 2.0);
  w.b_out = Eigen::VectorXd::Zero(1);
  const ParamVector p = pack(w);
  Eigen::VectorXd z(1);
  z << 1.0;
  const Eigen::VectorXd out = mlp_forward(p, spec, z);
  CHECK(out.size() == 1);
  CHECK(out[0] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("forward output width and input checking") {
  const MlpSpec spec{5, 10, 3};
  const ParamVector p = init_params(spec, 11, 0.5);
  Rng rng(3);
  const Eigen::VectorXd z = oracles::random_vector(rng, 5);
  CHECK(mlp_forward(p, spec, z).size() == 3);
  CHECK_THROWS_AS(mlp_forward(p, spec, oracles::random_vector(rng, 4)),
                  std::invalid_argument);
}

TEST_CASE("pack/unpack roundtrip is exact") {
  const MlpSpec spec{5, 10, 3};
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    const ParamVector p = oracles::random_vector(rng, spec.param_count(), -2.0, 2.0);
    const ParamVector q = pack(unpack(p, spec));
    REQUIRE(q.size() == p.size());
    CHECK((q.array() == p.array()).all());
  }
}

TEST_CASE("pack of all-ones 1x1x1 is six ones") {
  MlpWeights w;
  w.b_in = Eigen::VectorXd::Ones(1);
  w.w_in = Eigen::MatrixXd::Ones(1, 1);
  w.w_lay = Eigen::MatrixXd::Ones(1, 1);
  w.b_lay = Eigen::VectorXd::Ones(1);
  w.w_out = Eigen::MatrixXd::Ones(1, 1);
  w.b_out = Eigen::VectorXd::Ones(1);
  const ParamVector p = pack(w);
  REQUIRE(p.size() == 6);
  CHECK((p.array() == 1.0).all());
}

TEST_CASE("unpack rejects mismatched lengths") {
  const ParamVector p = ParamVector::Zero(198);
  CHECK_THROWS_AS(unpack(p, MlpSpec{6, 10, 3}), std::invalid_argument);
}

TEST_CASE("init_params determinism and scale") {
  const MlpSpec spec{5, 10, 3};
  CHECK(init_params(spec, 1, 0.0).isZero(0.0));
  const ParamVector a = init_params(spec, 1, 0.3);
  const ParamVector b = init_params(spec, 1, 0.3);
  const ParamVector c = init_params(spec, 2, 0.3);
  CHECK((a.array() == b.array()).all());
  CHECK((a - c).norm() > 0.0);
  CHECK(a.cwiseAbs().maxCoeff() <= 0.3);
}

TEST_CASE("forward is Lipschitz in the input") {
  const MlpSpec spec{5, 10, 3};
  const ParamVector p = init_params(spec, 21, 0.8);
  const MlpWeights w = unpack(p, spec);
  const double lip = w.w_out.jacobiSvd().singularValues()[0] *
                     w.w_lay.jacobiSvd().singularValues()[0] *
                     w.w_in.jacobiSvd().singularValues()[0];
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd z1 = oracles::random_vector(rng, 5, -2.0, 2.0);
    const Eigen::VectorXd z2 = oracles::random_vector(rng, 5, -2.0, 2.0);
    const double lhs = (mlp_forward(p, spec, z1) - mlp_forward(p, spec, z2)).norm();
    CHECK(lhs <= lip * (z1 - z2).norm() * (1.0 + 1e-12));
  }
}

TEST_CASE("parameter snapshot JSON roundtrip") {
  const MlpSpec spec{6, 10, 3};
  const ParamVector p = init_params(spec, 4242, 1.5);
  const nlohmann::json j = params_to_json(p, spec, 4242);
  const auto snap = params_from_json(j);
  CHECK(snap.spec == spec);
  CHECK(snap.seed == 4242);
  REQUIRE(snap.params.size() == p.size());
  CHECK((snap.params.array() == p.array()).all());
}

TEST_CASE("invalid specs are rejected") {
  CHECK_THROWS_AS(init_params(MlpSpec{0, 10, 3}, 1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(init_params(MlpSpec{5, 10, 3}, 1, -0.1), std::invalid_argument);
}

}  // TEST_SUITE
