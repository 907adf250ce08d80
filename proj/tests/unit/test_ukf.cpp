#include <doctest.h>

#include "restune/ukf.hpp"
#include "support/oracles.hpp"

using namespace restune;

TEST_SUITE("ukf") {

TEST_CASE("sigma weights normalize and match hand values") {
  for (const auto& [dim, alpha, beta, kappa] :
       {std::tuple{3, 0.1, 2.0, 0.0}, std::tuple{10, 0.5, 2.0, 1.0},
        std::tuple{50, 1.0, 0.0, 3.0}}) {
    const SigmaWeights w = sigma_weights(dim, alpha, beta, kappa);
    CHECK(w.mean_w.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.mean_w.size() == 2 * dim + 1);
  }

  const SigmaWeights w = sigma_weights(1, 1.0, 2.0, 2.0);
  CHECK(w.lambda == doctest::Approx(2.0));
  CHECK(w.mean_w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(w.mean_w[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(w.mean_w[2] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(w.cov_w[0] == doctest::Approx(8.0 / 3.0).epsilon(1e-14));

  CHECK(sigma_weights(198, 0.1, 2.0, 0.0).mean_w.size() == 397);
}

TEST_CASE("sigma weights reject degenerate scaling") {
  CHECK_THROWS_AS(sigma_weights(4, 1.0, 2.0, -4.0), std::invalid_argument);
  CHECK_THROWS_AS(sigma_weights(4, 0.0, 2.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sigma_weights(0, 0.1, 2.0, 0.0), std::invalid_argument);
}

TEST_CASE("zero covariance collapses all sigma points onto the center") {
  const int dim = 4;
  const SigmaWeights w = sigma_weights(dim, 0.3, 2.0, 0.0);
  Rng rng(17);
  const Eigen::VectorXd center = oracles::random_vector(rng, dim);
  const Eigen::MatrixXd pts = sigma_points(center, Eigen::MatrixXd::Zero(dim, dim), w);
  REQUIRE(pts.cols() == 2 * dim + 1);
  for (int i = 0; i < pts.cols(); ++i) {
    CHECK((pts.col(i) - center).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("sigma points reconstruct mean and covariance") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 2 + static_cast<int>(rng.next_u64() % 9);  // 2..10
    const SigmaWeights w = sigma_weights(dim, 0.4, 2.0, 0.0);
    const Eigen::VectorXd center = oracles::random_vector(rng, dim, -2.0, 2.0);
    const Eigen::MatrixXd p = oracles::random_spd(rng, dim);
    const Eigen::MatrixXd pts = sigma_points(center, p, w);

    const Eigen::VectorXd mean = pts * w.mean_w;
    CHECK((mean - center).cwiseAbs().maxCoeff() < 1e-12);

    const Eigen::MatrixXd dev = pts.colwise() - mean;
    const Eigen::MatrixXd recon = dev * w.cov_w.asDiagonal() * dev.transpose();
    CHECK((recon - p).norm() / p.norm() < 1e-9);
  }
}

TEST_CASE("jittered Cholesky") {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(5, 5);
  auto ok = cholesky_with_jitter(id);
  CHECK(ok.ok);
  CHECK(ok.jitter == 0.0);

  // rank-deficient PSD needs only a whiff of jitter
  Eigen::MatrixXd psd = Eigen::MatrixXd::Zero(3, 3);
  psd(0, 0) = 1.0;
  auto fixed = cholesky_with_jitter(psd);
  CHECK(fixed.ok);
  CHECK(fixed.jitter <= 1e-6);

  auto bad = cholesky_with_jitter(-id);
  CHECK_FALSE(bad.ok);
}

TEST_CASE("scalar linear case matches the analytic gain") {
  ParamVector y0 = ParamVector::Zero(1);
  Eigen::MatrixXd p0 = Eigen::MatrixXd::Constant(1, 1, 1.0);
  Eigen::MatrixXd cy = Eigen::MatrixXd::Zero(1, 1);
  Eigen::MatrixXd cv = Eigen::MatrixXd::Constant(1, 1, 1.0);
  UkfTuner tuner(y0, p0, cy, cv, 0.5, 2.0, 0.0);
  Eigen::VectorXd x_ref(1);
  x_ref << 1.0;
  auto out = tuner.update([](const Eigen::VectorXd& y) { return 2.0 * y; }, x_ref);
  REQUIRE(out.ok);
  CHECK(out.gain(0, 0) == doctest::Approx(0.4).epsilon(1e-10));
  CHECK(out.delta[0] == doctest::Approx(0.4).epsilon(1e-10));
  CHECK(tuner.estimate()[0] == doctest::Approx(0.4).epsilon(1e-10));
}

TEST_CASE("matching reference gives zero delta") {
  Rng rng(31);
  const int dim = 4, m = 3;
  const Eigen::MatrixXd h = oracles::random_matrix(rng, m, dim);
  const ParamVector y0 = oracles::random_vector(rng, dim);
  UkfTuner tuner(y0, oracles::random_spd(rng, dim), Eigen::MatrixXd::Zero(dim, dim),
                 oracles::random_spd(rng, m), 0.3, 2.0, 0.0);
  auto measure = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return h * y; };
  auto out = tuner.update(measure, h * y0);
  REQUIRE(out.ok);
  CHECK(out.delta.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("covariance trace decreases when the gain is nonzero") {
  Rng rng(37);
  const int dim = 5, m = 4;
  const Eigen::MatrixXd h = oracles::random_matrix(rng, m, dim);
  const Eigen::MatrixXd p0 = oracles::random_spd(rng, dim);
  const Eigen::MatrixXd cy = 1e-4 * Eigen::MatrixXd::Identity(dim, dim);
  UkfTuner tuner(oracles::random_vector(rng, dim), p0, cy, oracles::random_spd(rng, m),
                 0.3, 2.0, 0.0);
  const double prior_trace = (p0 + cy).trace();
  auto out = tuner.update([&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return h * y; },
                          oracles::random_vector(rng, m));
  REQUIRE(out.ok);
  CHECK(out.gain.norm() > 0.0);
  CHECK(tuner.covariance().trace() < prior_trace);
}

TEST_CASE("unscented gain is exact for affine maps") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 5);
    const int m = 1 + static_cast<int>(rng.next_u64() % 5);
    const Eigen::MatrixXd h = oracles::random_matrix(rng, m, dim);
    const Eigen::VectorXd b = oracles::random_vector(rng, m);
    const Eigen::MatrixXd p0 = oracles::random_spd(rng, dim);
    const Eigen::MatrixXd cy = oracles::random_spd(rng, dim, 0.01);
    const Eigen::MatrixXd cv = oracles::random_spd(rng, m);
    UkfTuner tuner(oracles::random_vector(rng, dim), p0, cy, cv, 0.25, 2.0, 0.0);

    auto out = tuner.update(
        [&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return h * y + b; },
        oracles::random_vector(rng, m));
    REQUIRE(out.ok);
    const Eigen::MatrixXd expected = oracles::linear_kalman_gain(p0 + cy, h, cv);
    CHECK((out.gain - expected).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("update is deterministic") {
  Rng rng(43);
  const int dim = 6, m = 4;
  const Eigen::MatrixXd h = oracles::random_matrix(rng, m, dim);
  const ParamVector y0 = oracles::random_vector(rng, dim);
  const Eigen::MatrixXd p0 = oracles::random_spd(rng, dim);
  const Eigen::MatrixXd cv = oracles::random_spd(rng, m);
  const Eigen::VectorXd x_ref = oracles::random_vector(rng, m);
  auto run_once = [&] {
    UkfTuner tuner(y0, p0, 1e-5 * Eigen::MatrixXd::Identity(dim, dim), cv, 0.3, 2.0, 0.0);
    auto out = tuner.update(
        [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
          return (h * y).array().tanh().matrix();
        },
        x_ref);
    REQUIRE(out.ok);
    return out.delta;
  };
  const Eigen::VectorXd d1 = run_once();
  const Eigen::VectorXd d2 = run_once();
  CHECK((d1.array() == d2.array()).all());
}

TEST_CASE("non-finite rollout aborts and leaves state untouched") {
  ParamVector y0 = ParamVector::Ones(3);
  UkfTuner tuner(y0, Eigen::MatrixXd::Identity(3, 3),
                 Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Identity(2, 2), 0.3, 2.0,
                 0.0);
  const Eigen::MatrixXd p_before = tuner.covariance();
  auto out = tuner.update(
      [](const Eigen::VectorXd&) {
        return Eigen::VectorXd::Constant(2, std::numeric_limits<double>::quiet_NaN());
      },
      Eigen::VectorXd::Zero(2));
  CHECK_FALSE(out.ok);
  CHECK(!out.error.empty());
  CHECK((tuner.estimate().array() == y0.array()).all());
  CHECK((tuner.covariance().array() == p_before.array()).all());
}

TEST_CASE("apply_update") {
  Eigen::VectorXd y(3), d(3);
  y << 1.0, 2.0, 3.0;
  d << 0.0, 0.0, 0.0;
  CHECK((apply_update(y, d).array() == y.array()).all());
  d << 4.0, 5.0, 6.0;
  CHECK((apply_update(Eigen::VectorXd::Zero(3), d).array() == d.array()).all());
  // integer-valued entries keep the two association orders exact
  Eigen::VectorXd d2(3);
  d2 << 7.0, -2.0, 1.0;
  const Eigen::VectorXd via_two = apply_update(apply_update(y, d), d2);
  const Eigen::VectorXd via_sum = apply_update(y, apply_update(d, d2));
  CHECK((via_two.array() == via_sum.array()).all());
  CHECK_THROWS_AS(apply_update(y, Eigen::VectorXd::Zero(2)), std::invalid_argument);
}

}  // TEST_SUITE
