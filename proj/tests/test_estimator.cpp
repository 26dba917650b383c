#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "ssr/datagen.hpp"
#include "ssr/estimator.hpp"
#include "ssr/metrics.hpp"

using namespace ssr;

namespace {

Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = std::max(want.norm(), 1.0);
  return (got - want).norm() / scale;
}

}  // namespace

TEST_CASE("pseudoinverse handles the elementary cases") {
  CHECK(rel_err(pseudoinverse(Eigen::MatrixXd::Identity(3, 3)), Eigen::MatrixXd::Identity(3, 3)) <=
        1e-14);

  // Rank-deficient diagonal: the zero singular value stays zero.
  CHECK(rel_err(pseudoinverse(mat2(2, 0, 0, 0)), mat2(0.5, 0, 0, 0)) <= 1e-14);

  Eigen::MatrixXd row(1, 2);
  row << 1, 1;
  Eigen::MatrixXd want(2, 1);
  want << 0.5, 0.5;
  CHECK(rel_err(pseudoinverse(row), want) <= 1e-14);

  Eigen::MatrixXd bad = mat2(1, 2, 3, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(pseudoinverse(bad), std::invalid_argument);
}

TEST_CASE("pseudoinverse satisfies the Penrose identities on random inputs") {
  auto eng = make_engine(21, {tag::design});
  for (auto [t, d] : {std::pair{3, 5}, std::pair{5, 5}, std::pair{7, 4}}) {
    for (int rep = 0; rep < 5; ++rep) {
      const Eigen::MatrixXd x = gaussian_matrix(t, d, eng);
      const Eigen::MatrixXd p = pseudoinverse(x);
      REQUIRE(rel_err(x * p * x, x) <= 1e-8);
      REQUIRE(rel_err(p * x * p, p) <= 1e-8);
      REQUIRE(rel_err((x * p).transpose(), x * p) <= 1e-8);
      REQUIRE(rel_err((p * x).transpose(), p * x) <= 1e-8);
    }
  }
}

TEST_CASE("first step recovers observed coordinates with minimum norm") {
  const int d = 4;
  auto eng = make_engine(22, {tag::design});
  Eigen::VectorXd beta = gaussian_vector(d, eng);
  CHECK((first_step(Eigen::MatrixXd::Identity(d, d), beta) - beta).norm() <= 1e-12);

  Eigen::MatrixXd x(1, 2);
  x << 1, 0;
  Eigen::VectorXd y(1);
  y << 3;
  Eigen::VectorXd b = first_step(x, y);
  CHECK(std::abs(b(0) - 3.0) <= 1e-12);
  CHECK(std::abs(b(1)) <= 1e-12);

  x << 1, 1;
  y << 2;
  b = first_step(x, y);
  CHECK(std::abs(b(0) - 1.0) <= 1e-12);
  CHECK(std::abs(b(1) - 1.0) <= 1e-12);

  CHECK_THROWS_AS(first_step(x, Eigen::VectorXd::Zero(2)), std::invalid_argument);
}

TEST_CASE("mom first step is X^T y, not the pseudoinverse solve") {
  const int d = 3;
  auto eng = make_engine(23, {tag::design});
  Eigen::VectorXd beta = gaussian_vector(d, eng);
  CHECK((mom_first_step(Eigen::MatrixXd::Identity(d, d), beta) - beta).norm() <= 1e-12);

  Eigen::MatrixXd x(1, 2);
  x << 1, 0;
  Eigen::VectorXd y(1);
  y << 3;
  Eigen::VectorXd b = mom_first_step(x, y);
  CHECK(std::abs(b(0) - 3.0) <= 1e-12);
  CHECK(std::abs(b(1)) <= 1e-12);

  x << 2, 0;
  y << 1;
  Eigen::VectorXd mom = mom_first_step(x, y);
  Eigen::VectorXd ls = first_step(x, y);
  CHECK(std::abs(mom(0) - 2.0) <= 1e-12);
  CHECK(std::abs(ls(0) - 0.5) <= 1e-12);
}

TEST_CASE("process_first_step implements the three processing modes") {
  Eigen::VectorXd v(2);
  v << 3, 4;
  auto norm = process_first_step({v}, ProcessMode::normalize);
  REQUIRE(norm.processed.size() == 1);
  CHECK(std::abs(norm.processed[0](0) - 0.6) <= 1e-12);
  CHECK(std::abs(norm.processed[0](1) - 0.8) <= 1e-12);
  CHECK(norm.variant == FirstStepKind::normalize);

  Eigen::VectorXd a(2), b(2);
  a << 1, 0;
  b << 0, 2;
  auto trunc = process_first_step({a, b}, ProcessMode::truncate, 0.5, {0.4, 0.9});
  REQUIRE(trunc.kept_indices == std::vector<int>{0});
  CHECK(trunc.processed[0] == a);  // unscaled

  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  auto dropped = process_first_step({zero, a}, ProcessMode::normalize);
  REQUIRE(dropped.kept_indices == std::vector<int>{1});
  CHECK(std::abs(dropped.processed[0](0) - 1.0) <= 1e-12);

  auto none = process_first_step({a, b}, ProcessMode::none);
  CHECK(none.kept_indices == std::vector<int>{0, 1});

  REQUIRE_THROWS_MATCHES(process_first_step({a, b}, ProcessMode::truncate, 0.1, {0.4, 0.9}),
                         EstimationError,
                         Catch::Matchers::Message("no surviving first-step estimates"));
}

TEST_CASE("default threshold follows the schedule and degenerates at T == d") {
  const Threshold low = default_threshold(50, 10, 0.5);
  CHECK_FALSE(low.vacuous);
  CHECK(std::abs(low.s - 1.0 / (0.5 * (std::sqrt(50.0) - 3.0))) <= 1e-12);
  CHECK(std::abs(low.s - 0.4913) <= 2e-4);

  const Threshold high = default_threshold(50, 80, 0.5);
  CHECK_FALSE(high.vacuous);
  CHECK(std::abs(high.s - 1.0 / (0.5 * (std::sqrt(80.0) - std::sqrt(50.0)))) <= 1e-12);
  CHECK(std::abs(high.s - 1.0677) <= 2e-4);

  const Threshold square = default_threshold(50, 50, 0.5);
  CHECK(square.vacuous);
  CHECK(std::isinf(square.s));

  CHECK_THROWS_AS(default_threshold(0, 3), std::invalid_argument);
  CHECK_THROWS_AS(default_threshold(3, 3, -1.0), std::invalid_argument);
}

TEST_CASE("recover_subspace finds exact spans") {
  const int d = 4;
  std::vector<Eigen::VectorXd> ones(3, Eigen::VectorXd::Unit(d, 0));
  SubspaceEstimate one = recover_subspace(ones, 1);
  // Sign convention: the largest-magnitude entry comes out positive.
  CHECK(std::abs(one.frame.col(0)(0) - 1.0) <= 1e-12);

  std::vector<Eigen::VectorXd> pair = {Eigen::VectorXd::Unit(d, 0), Eigen::VectorXd::Unit(d, 1),
                                       Eigen::VectorXd::Unit(d, 0), Eigen::VectorXd::Unit(d, 1)};
  SubspaceEstimate two = recover_subspace(pair, 2);
  Eigen::MatrixXd target(d, 2);
  target << Eigen::VectorXd::Unit(d, 0), Eigen::VectorXd::Unit(d, 1);
  CHECK(sin_theta_op(two.frame, target) <= 1e-12);

  CHECK_THROWS_AS(recover_subspace({}, 1), EstimationError);
}

TEST_CASE("recover_subspace pads deterministically when inputs are scarce") {
  const int d = 5;
  std::vector<Eigen::VectorXd> single = {Eigen::VectorXd::Unit(d, 2)};
  SubspaceEstimate sub = recover_subspace(single, 3);
  CHECK(sub.padded);
  REQUIRE(sub.frame.cols() == 3);
  CHECK((sub.frame.transpose() * sub.frame - Eigen::MatrixXd::Identity(3, 3)).norm() <= 1e-10);
  // The provided direction is retained as the leading column, sign fixed.
  CHECK(std::abs(sub.frame.col(0)(2) - 1.0) <= 1e-12);
}

TEST_CASE("recover_subspace tracks the true span on noiseless first steps (Monte-Carlo oracle)") {
  ModelConfig cfg;
  cfg.d = 10;
  cfg.r = 2;
  cfg.T = 3;
  cfg.N = 2000;
  cfg.sigma_w = 0.0;
  cfg.seed = 31;
  Dataset data = generate_iid_dataset(cfg);
  std::vector<Eigen::VectorXd> raw;
  raw.reserve(cfg.N);
  for (const auto& sys : data.systems) raw.push_back(first_step(sys.X, sys.y));
  SubspaceEstimate sub = recover_subspace(raw, cfg.r);
  CHECK(sin_theta_op(sub.frame, data.truth->frame) <= 0.15);
}

TEST_CASE("refine solves the constrained least squares problem") {
  // Known frame, clean data, enough observations: exact recovery.
  ModelConfig cfg;
  cfg.d = 6;
  cfg.r = 2;
  cfg.T = 4;
  cfg.N = 3;
  cfg.sigma_w = 0.0;
  cfg.seed = 17;
  Dataset data = generate_iid_dataset(cfg);
  for (int i = 0; i < cfg.N; ++i) {
    RefinedSystem rs = refine(data.systems[i].X, data.systems[i].y, data.truth->frame);
    REQUIRE((rs.parameters - data.truth->parameters[i]).norm() <= 1e-8);
  }

  Eigen::MatrixXd axis = Eigen::MatrixXd::Identity(2, 1);
  Eigen::VectorXd y(2);
  y << 3, 4;
  RefinedSystem rs = refine(Eigen::MatrixXd::Identity(2, 2), y, axis);
  CHECK(std::abs(rs.coefficients(0) - 3.0) <= 1e-12);
  CHECK(std::abs(rs.parameters(0) - 3.0) <= 1e-12);
  CHECK(std::abs(rs.parameters(1)) <= 1e-12);

  CHECK_THROWS_AS(refine(Eigen::MatrixXd::Identity(2, 2), y, Eigen::MatrixXd::Identity(3, 1)),
                  std::invalid_argument);
}

TEST_CASE("refine returns the minimum-norm coefficients when T < r") {
  auto eng = make_engine(33, {tag::design});
  const int d = 4, r = 3, t = 2;
  Eigen::MatrixXd frame = sample_orthonormal_frame(d, r, eng);
  Eigen::MatrixXd x = gaussian_matrix(t, d, eng);
  Eigen::VectorXd y = gaussian_vector(t, eng);
  RefinedSystem rs = refine(x, y, frame);

  // phi-hat must be orthogonal to ker(X frame); any feasible move grows it.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x * frame, Eigen::ComputeFullV);
  for (int i = t; i < r; ++i) {
    const Eigen::VectorXd null_dir = svd.matrixV().col(i);
    CHECK(std::abs(rs.coefficients.dot(null_dir)) <= 1e-8);
    CHECK((rs.coefficients + 0.3 * null_dir).norm() >= rs.coefficients.norm() - 1e-12);
  }
}

TEST_CASE("oracle estimate equals refine against the true frame") {
  Eigen::MatrixXd b0 = Eigen::MatrixXd::Identity(2, 1);
  Eigen::MatrixXd x(1, 2);
  x << 1, 1;
  Eigen::VectorXd y(1);
  y << 2;
  RefinedSystem oracle = oracle_estimate(x, y, b0);
  CHECK(std::abs(oracle.parameters(0) - 2.0) <= 1e-12);
  CHECK(std::abs(oracle.parameters(1)) <= 1e-12);

  RefinedSystem same = refine(x, y, b0);
  CHECK(oracle.parameters == same.parameters);  // definitional equality
  CHECK(oracle.coefficients == same.coefficients);
}

TEST_CASE("estimate improves on raw first steps at moderate N (Monte-Carlo oracle)") {
  ModelConfig cfg;
  cfg.d = 5;
  cfg.r = 1;
  cfg.T = 3;
  cfg.N = 200;
  cfg.sigma_w = 0.0;
  cfg.seed = 8;
  Dataset data = generate_iid_dataset(cfg);
  EstimateResult res = estimate(data, cfg.r, EstimatorVariant::Normalize());
  CHECK(sin_theta_op(res.subspace.frame, data.truth->frame) <= 0.2);
  const double refined = param_errors(res.refined.parameters, data.truth->parameters).mean;
  const double raw = param_errors(res.first_step.raw, data.truth->parameters).mean;
  CHECK(refined < raw);
}

TEST_CASE("a single fully determined system is recovered exactly") {
  ModelConfig cfg;
  cfg.d = 4;
  cfg.r = 1;
  cfg.T = 6;
  cfg.N = 1;
  cfg.sigma_w = 0.0;
  cfg.seed = 12;
  Dataset data = generate_iid_dataset(cfg);
  EstimateResult res = estimate(data, 1, EstimatorVariant::Normalize());
  CHECK((res.refined.parameters[0] - data.truth->parameters[0]).norm() <= 1e-6);
}

TEST_CASE("estimate reports an error when truncation drops every system") {
  ModelConfig cfg;
  cfg.d = 6;
  cfg.r = 2;
  cfg.T = 3;
  cfg.N = 5;
  cfg.sigma_w = 0.1;
  cfg.seed = 4;
  Dataset data = generate_iid_dataset(cfg);
  REQUIRE_THROWS_MATCHES(estimate(data, cfg.r, EstimatorVariant::Truncate(1e-12)), EstimationError,
                         Catch::Matchers::Message("no surviving first-step estimates"));
}

TEST_CASE("recovered subspace minimizes the residual objective") {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.r = 2;
  cfg.T = 3;
  cfg.N = 50;
  cfg.sigma_w = 0.2;
  cfg.seed = 61;
  Dataset data = generate_iid_dataset(cfg);
  EstimateResult res = estimate(data, cfg.r, EstimatorVariant::Normalize());

  const auto& vecs = res.first_step.processed;
  auto residual = [&](const Eigen::MatrixXd& v) {
    double sum = 0.0;
    for (const auto& b : vecs) sum += (b - v * (v.transpose() * b)).squaredNorm();
    return sum;
  };
  const double best = residual(res.subspace.frame);

  auto eng = make_engine(62, {tag::frame});
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::MatrixXd v = sample_orthonormal_frame(cfg.d, cfg.r, eng);
    REQUIRE(best <= residual(v) + 1e-9);
  }

  // Residual form equals the trace form |B|_F^2 - <PP^T, BB^T>.
  Eigen::MatrixXd stacked(cfg.d, static_cast<int>(vecs.size()));
  for (int i = 0; i < stacked.cols(); ++i) stacked.col(i) = vecs[i];
  const Eigen::MatrixXd p = res.subspace.frame * res.subspace.frame.transpose();
  const double trace_form =
      stacked.squaredNorm() - (p * (stacked * stacked.transpose())).trace();
  CHECK(std::abs(best - trace_form) <= 1e-8);
}

TEST_CASE("subspace errors are invariant under design rotation") {
  const int d = 6, r = 2, t = 3, n = 40;
  auto eng = make_engine(71, {tag::design});
  const Eigen::MatrixXd b0 = sample_orthonormal_frame(d, r, eng);
  const Eigen::MatrixXd q = sample_orthonormal_frame(d, d, eng);

  Dataset plain, rotated;
  plain.truth = GroundTruth{b0, {}, {}};
  rotated.truth = GroundTruth{q.transpose() * b0, {}, {}};
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd phi = unit_ball_vector(r, eng);
    const Eigen::VectorXd beta = b0 * phi;
    const Eigen::MatrixXd x = gaussian_matrix(t, d, eng);
    const Eigen::VectorXd y = x * beta + 0.1 * gaussian_vector(t, eng);
    plain.systems.push_back({x, y});
    plain.truth->parameters.push_back(beta);
    rotated.systems.push_back({x * q, y});
    rotated.truth->parameters.push_back(q.transpose() * beta);
  }

  const double s = default_threshold(d, t).s;
  for (EstimatorVariant v : {EstimatorVariant::Normalize(), EstimatorVariant::Truncate(s),
                             EstimatorVariant::Mom()}) {
    EstimateResult a = estimate(plain, r, v);
    EstimateResult b = estimate(rotated, r, v);
    const double err_a = sin_theta_op(a.subspace.frame, plain.truth->frame);
    const double err_b = sin_theta_op(b.subspace.frame, rotated.truth->frame);
    REQUIRE(std::abs(err_a - err_b) <= 1e-8);
  }
}

TEST_CASE("refined parameters stay inside the estimated subspace") {
  ModelConfig cfg;
  cfg.d = 7;
  cfg.r = 3;
  cfg.T = 4;
  cfg.N = 30;
  cfg.sigma_w = 0.3;
  cfg.seed = 44;
  Dataset data = generate_iid_dataset(cfg);
  EstimateResult res = estimate(data, cfg.r, EstimatorVariant::Normalize());
  const Eigen::MatrixXd& f = res.subspace.frame;
  const Eigen::MatrixXd off_span = Eigen::MatrixXd::Identity(cfg.d, cfg.d) - f * f.transpose();
  for (int i = 0; i < cfg.N; ++i) {
    REQUIRE((off_span * res.refined.parameters[i]).norm() <= 1e-10);
    REQUIRE((res.refined.parameters[i] - f * res.refined.coefficients[i]).norm() <= 1e-12);
  }
}

TEST_CASE("first step is unbiased up to the d/T rescaling (Monte-Carlo oracle)") {
  const int d = 6, t = 2;
  const int samples = 100000;
  auto eng = make_engine(55, {tag::design});
  Eigen::VectorXd beta = gaussian_vector(d, eng);
  beta.normalize();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
  const double scale = static_cast<double>(d) / t;
  for (int s = 0; s < samples; ++s) {
    const Eigen::MatrixXd x = gaussian_matrix(t, d, eng);
    acc += scale * first_step(x, x * beta);
  }
  acc /= samples;
  CHECK((acc - beta).norm() / beta.norm() <= 0.02);
}
