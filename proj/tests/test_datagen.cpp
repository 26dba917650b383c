#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ssr/datagen.hpp"
#include "ssr/estimator.hpp"

using namespace ssr;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.d = 6;
  cfg.r = 2;
  cfg.T = 3;
  cfg.N = 20;
  cfg.sigma_w = 0.3;
  cfg.seed = 42;
  return cfg;
}

bool datasets_identical(const Dataset& a, const Dataset& b) {
  if (a.systems.size() != b.systems.size()) return false;
  for (std::size_t i = 0; i < a.systems.size(); ++i) {
    if (a.systems[i].X != b.systems[i].X) return false;
    if (a.systems[i].y != b.systems[i].y) return false;
  }
  return a.truth->frame == b.truth->frame;
}

}  // namespace

TEST_CASE("sample_orthonormal_frame produces orthonormal columns") {
  auto eng = make_engine(1, {tag::frame});
  Eigen::MatrixXd q = sample_orthonormal_frame(3, 3, eng);
  CHECK((q.transpose() * q - Eigen::MatrixXd::Identity(3, 3)).norm() <= 1e-10);

  Eigen::MatrixXd u = sample_orthonormal_frame(5, 1, eng);
  CHECK(u.rows() == 5);
  CHECK(std::abs(u.norm() - 1.0) <= 1e-12);

  CHECK_THROWS_AS(sample_orthonormal_frame(2, 3, eng), std::invalid_argument);
}

TEST_CASE("frame projection matches the mean-projection limit (Monte-Carlo oracle)") {
  // E[Q Q^T] over rotation-invariant frames is (r/d) I.
  const int d = 4, r = 2;
  const int samples = 100000;
  auto eng = make_engine(7, {tag::frame});
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
  for (int s = 0; s < samples; ++s) {
    Eigen::MatrixXd q = sample_orthonormal_frame(d, r, eng);
    acc += q * q.transpose();
  }
  acc /= samples;
  CHECK((acc - 0.5 * Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() <= 0.02);
}

TEST_CASE("noiseless datasets satisfy Y = X beta exactly") {
  ModelConfig cfg;
  cfg.d = 2;
  cfg.r = 1;
  cfg.T = 3;
  cfg.N = 1;
  cfg.sigma_w = 0.0;
  cfg.seed = 5;
  Dataset data = generate_iid_dataset(cfg);
  const auto& sys = data.systems.front();
  CHECK((sys.y - sys.X * data.truth->parameters.front()).norm() <= 1e-12);
}

TEST_CASE("all true parameters lie in the sampled subspace") {
  ModelConfig cfg;
  cfg.d = 50;
  cfg.r = 5;
  cfg.T = 10;
  cfg.N = 100;
  cfg.sigma_w = 0.1;
  cfg.seed = 11;
  Dataset data = generate_iid_dataset(cfg);
  const Eigen::MatrixXd& b0 = data.truth->frame;
  const Eigen::MatrixXd residual_proj =
      Eigen::MatrixXd::Identity(cfg.d, cfg.d) - b0 * b0.transpose();
  for (int i = 0; i < cfg.N; ++i)
    REQUIRE((residual_proj * data.truth->parameters[i]).norm() <= 1e-10);
}

TEST_CASE("unit-ball coefficients have the uniform-ball second moment (Monte-Carlo oracle)") {
  // Brute-force Monte-Carlo over uniform ball draws; the closed form
  // E|phi|^2 = r/(r+2) is the oracle target.
  const int r = 5;
  const int samples = 100000;
  auto eng = make_engine(13, {tag::coefficients});
  double sum = 0.0;
  double max_norm = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd phi = unit_ball_vector(r, eng);
    sum += phi.squaredNorm();
    max_norm = std::max(max_norm, phi.norm());
  }
  CHECK(std::abs(sum / samples - 5.0 / 7.0) <= 0.01);
  CHECK(max_norm <= 1.0);
}

TEST_CASE("generation is reproducible bit-for-bit") {
  ModelConfig cfg = small_config();
  CHECK(datasets_identical(generate_iid_dataset(cfg), generate_iid_dataset(cfg)));

  TimeSeriesConfig ts;
  static_cast<ModelConfig&>(ts) = cfg;
  ts.sigma_x = 1.0;
  CHECK(datasets_identical(generate_timeseries_dataset(ts), generate_timeseries_dataset(ts)));

  ModelConfig other = cfg;
  other.seed = cfg.seed + 1;
  CHECK_FALSE(datasets_identical(generate_iid_dataset(cfg), generate_iid_dataset(other)));
}

TEST_CASE("first-step residual decomposes into null-space bias plus filtered noise") {
  ModelConfig cfg = small_config();
  Dataset data = generate_iid_dataset(cfg);
  for (int i = 0; i < cfg.N; ++i) {
    const auto& sys = data.systems[i];
    const Eigen::VectorXd& beta_true = data.truth->parameters[i];
    const Eigen::VectorXd w = sys.y - sys.X * beta_true;  // the realized noise
    const SvdPinv pinv = svd_pinv(sys.X);
    const Eigen::VectorXd eta = pinv.apply(sys.y) - beta_true;
    const Eigen::MatrixXd p = pinv.row_space_projection();
    const Eigen::VectorXd expected =
        -(Eigen::MatrixXd::Identity(cfg.d, cfg.d) - p) * beta_true + pinv.apply(w);
    REQUIRE((eta - expected).norm() <= 1e-8);
  }
}

TEST_CASE("generated designs have full row rank") {
  ModelConfig cfg = small_config();
  Dataset data = generate_iid_dataset(cfg);
  for (const auto& sys : data.systems) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.X);
    REQUIRE(svd.singularValues().minCoeff() > 0.0);
  }
}

TEST_CASE("time-series dynamics are normalized and live in the shared subspace") {
  TimeSeriesConfig cfg;
  cfg.d = 8;
  cfg.r = 3;
  cfg.T = 5;
  cfg.N = 4;
  cfg.sigma_w = 0.2;
  cfg.sigma_x = 1.0;
  cfg.seed = 99;
  Dataset data = generate_timeseries_dataset(cfg);
  REQUIRE(data.systems.size() == static_cast<std::size_t>(cfg.N) * cfg.d);
  REQUIRE(data.kind == DatasetKind::time_series);

  const Eigen::MatrixXd& b = data.truth->frame;
  const Eigen::MatrixXd residual_proj = Eigen::MatrixXd::Identity(cfg.d, cfg.d) - b * b.transpose();
  for (int i = 0; i < cfg.N; ++i) {
    // Reassemble A_i from the pseudo-system parameters (its rows).
    Eigen::MatrixXd a(cfg.d, cfg.d);
    for (int j = 0; j < cfg.d; ++j) {
      const Eigen::VectorXd& row = data.truth->parameters[static_cast<std::size_t>(i) * cfg.d + j];
      REQUIRE((residual_proj * row).norm() <= 1e-10);
      a.row(j) = row.transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    REQUIRE(std::abs(svd.singularValues()(0) - 1.0) <= 1e-10);
  }
}

TEST_CASE("noiseless one-step time series is exact") {
  TimeSeriesConfig cfg;
  cfg.d = 4;
  cfg.r = 2;
  cfg.T = 1;
  cfg.N = 3;
  cfg.sigma_w = 0.0;
  cfg.sigma_x = 1.0;
  cfg.seed = 3;
  Dataset data = generate_timeseries_dataset(cfg);
  for (std::size_t k = 0; k < data.systems.size(); ++k) {
    const auto& sys = data.systems[k];
    const double scale = std::max(sys.y.norm(), 1.0);
    REQUIRE((sys.y - sys.X * data.truth->parameters[k]).norm() / scale <= 1e-12);
  }
}

TEST_CASE("config validation rejects bad dimensions") {
  ModelConfig cfg = small_config();
  cfg.r = 0;
  CHECK_THROWS_AS(generate_iid_dataset(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.r = cfg.d + 1;
  CHECK_THROWS_AS(generate_iid_dataset(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.sigma_w = -0.5;
  CHECK_THROWS_AS(generate_iid_dataset(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.phi_dist = PhiDist::isotropic_gaussian;
  cfg.sigma_phi = -1.0;
  CHECK_THROWS_AS(generate_iid_dataset(cfg), std::invalid_argument);
}
