#pragma once

#include <stdexcept>
#include <utility>

#include "ssr/random.hpp"
#include "ssr/types.hpp"

namespace ssr {

/// Draws a d×r frame with orthonormal columns by orthonormalizing a standard
/// Gaussian matrix (QR with the R diagonal signs fixed positive, so the
/// distribution is uniform over the Stiefel manifold).
inline Eigen::MatrixXd sample_orthonormal_frame(int d, int r, std::mt19937_64& eng) {
  if (d < 1 || r < 1 || r > d)
    throw std::invalid_argument("sample_orthonormal_frame: need 1 <= r <= d");
  Eigen::MatrixXd g = gaussian_matrix(d, r, eng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, r);
  for (int j = 0; j < r; ++j)
    if (qr.matrixQR()(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

namespace detail {

inline Eigen::VectorXd draw_phi(const ModelConfig& cfg, std::mt19937_64& eng) {
  if (cfg.phi_dist == PhiDist::unit_ball_uniform) return unit_ball_vector(cfg.r, eng);
  return cfg.sigma_phi * gaussian_vector(cfg.r, eng);
}

}  // namespace detail

/// Generates Y_i = X_i B0 phi_i + w_i with i.i.d. standard normal designs and
/// attaches the ground truth. Deterministic in (config, seed); every system
/// draws from its own substream, so generation order is irrelevant.
inline Dataset generate_iid_dataset(const ModelConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.kind = DatasetKind::iid_regression;
  GroundTruth truth;
  auto frame_eng = make_engine(cfg.seed, {tag::frame});
  truth.frame = sample_orthonormal_frame(cfg.d, cfg.r, frame_eng);
  data.systems.reserve(cfg.N);
  truth.coefficients.reserve(cfg.N);
  truth.parameters.reserve(cfg.N);
  for (int i = 0; i < cfg.N; ++i) {
    auto coeff_eng = make_engine(cfg.seed, {tag::coefficients, static_cast<std::uint64_t>(i)});
    auto design_eng = make_engine(cfg.seed, {tag::design, static_cast<std::uint64_t>(i)});
    Eigen::VectorXd phi = detail::draw_phi(cfg, coeff_eng);
    Eigen::VectorXd beta = truth.frame * phi;
    LinearSystem sys;
    sys.X = gaussian_matrix(cfg.T, cfg.d, design_eng);
    sys.y = sys.X * beta;
    if (cfg.sigma_w > 0.0) {
      auto noise_eng = make_engine(cfg.seed, {tag::noise, static_cast<std::uint64_t>(i)});
      sys.y += cfg.sigma_w * gaussian_vector(cfg.T, noise_eng);
    }
    data.systems.push_back(std::move(sys));
    truth.coefficients.push_back(std::move(phi));
    truth.parameters.push_back(std::move(beta));
  }
  data.truth = std::move(truth);
  return data;
}

/// Simulates x_{t+1} = A_i x_t + w_t for N systems with A_i = F_i B^T
/// normalized to unit operator norm, then exposes the row regressions as
/// N*d pseudo-systems: pseudo-system (i, j) has design [x_0; ...; x_{T-1}]
/// and response (x_1[j], ..., x_T[j]); its true parameter is row j of A_i,
/// which lies in span(B). Downstream code treats pseudo-systems exactly like
/// i.i.d. systems.
inline Dataset generate_timeseries_dataset(const TimeSeriesConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.kind = DatasetKind::time_series;
  GroundTruth truth;
  auto frame_eng = make_engine(cfg.seed, {tag::frame});
  truth.frame = sample_orthonormal_frame(cfg.d, cfg.r, frame_eng);
  const Eigen::MatrixXd& B = truth.frame;
  const int d = cfg.d;
  data.systems.reserve(static_cast<std::size_t>(cfg.N) * d);
  truth.coefficients.reserve(static_cast<std::size_t>(cfg.N) * d);
  truth.parameters.reserve(static_cast<std::size_t>(cfg.N) * d);
  for (int i = 0; i < cfg.N; ++i) {
    auto dyn_eng = make_engine(cfg.seed, {tag::dynamics, static_cast<std::uint64_t>(i)});
    Eigen::MatrixXd F = gaussian_matrix(d, cfg.r, dyn_eng);
    double op_norm = Eigen::JacobiSVD<Eigen::MatrixXd>(F * B.transpose()).singularValues()(0);
    // Rows of A_i are assembled as (B * phi)^T so that parameters ==
    // frame * coefficients holds exactly.
    Eigen::MatrixXd A(d, d);
    std::vector<Eigen::VectorXd> phis(d), betas(d);
    for (int j = 0; j < d; ++j) {
      phis[j] = F.row(j).transpose() / op_norm;
      betas[j] = B * phis[j];
      A.row(j) = betas[j].transpose();
    }
    auto init_eng = make_engine(cfg.seed, {tag::initial_state, static_cast<std::uint64_t>(i)});
    auto noise_eng = make_engine(cfg.seed, {tag::noise, static_cast<std::uint64_t>(i)});
    Eigen::MatrixXd X(cfg.T, d);
    Eigen::MatrixXd next_states(cfg.T, d);
    Eigen::VectorXd x = cfg.sigma_x * gaussian_vector(d, init_eng);
    for (int t = 0; t < cfg.T; ++t) {
      X.row(t) = x.transpose();
      Eigen::VectorXd x_next = A * x;
      if (cfg.sigma_w > 0.0) x_next += cfg.sigma_w * gaussian_vector(d, noise_eng);
      next_states.row(t) = x_next.transpose();
      x = std::move(x_next);
    }
    for (int j = 0; j < d; ++j) {
      data.systems.push_back({X, next_states.col(j)});
      truth.coefficients.push_back(std::move(phis[j]));
      truth.parameters.push_back(std::move(betas[j]));
    }
  }
  data.truth = std::move(truth);
  return data;
}

}  // namespace ssr
