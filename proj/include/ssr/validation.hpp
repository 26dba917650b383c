#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssr/datagen.hpp"
#include "ssr/estimator.hpp"
#include "ssr/metrics.hpp"
#include "ssr/random.hpp"
#include "ssr/types.hpp"

namespace ssr {

struct SubCheck {
  std::string name;
  double value = 0.0;
  double target = 0.0;
  double deviation = 0.0;  // nonnegative discrepancy
  double tolerance = 0.0;
  bool pass = false;       // deviation <= tolerance
};

/// Outcome of one Monte-Carlo moment check. `deviation` is the primary
/// discrepancy (operator norm, entrywise max, or a named scalar) and
/// `tolerance` the calibrated band at the given sample count; sub-checks
/// carry the same convention for secondary quantities.
struct MomentCheckReport {
  std::string check;
  int d = 0, T = 0, r = 0;
  std::int64_t samples = 0;
  Eigen::MatrixXd estimate;
  Eigen::MatrixXd target;
  double deviation = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::vector<SubCheck> sub;
  std::vector<std::pair<std::string, double>> info;

  bool all_pass() const {
    if (!pass) return false;
    for (const auto& s : sub)
      if (!s.pass) return false;
    return true;
  }
};

namespace detail {

inline constexpr std::int64_t kChunkSamples = 8192;

// Runs `body(engine, count)` over fixed-size chunks, each with its own
// derived substream; results are independent of how chunks are scheduled.
template <class Body>
inline void chunked_samples(std::uint64_t seed, std::int64_t samples, Body&& body) {
  std::int64_t done = 0;
  std::uint64_t chunk = 0;
  while (done < samples) {
    const std::int64_t n = std::min(kChunkSamples, samples - done);
    auto eng = make_engine(seed, {tag::chunk, chunk});
    body(eng, n);
    done += n;
    ++chunk;
  }
}

inline double symmetric_op_norm(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double smallest_singular_value(const Eigen::MatrixXd& x) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
  const Eigen::VectorXd& sv = svd.singularValues();
  return sv(sv.size() - 1);
}

}  // namespace detail

/// Averages the row-space projection P_X = X^+ X over Gaussian T×d draws and
/// compares against the exact mean (T/d) I_d in operator norm.
inline MomentCheckReport mc_mean_projection(int d, int T, std::int64_t samples, std::uint64_t seed) {
  if (d < 1 || T < 1) throw std::invalid_argument("mc_mean_projection: need d, T >= 1");
  if (T > d) throw std::domain_error("mc_mean_projection: requires T <= d");
  if (samples < 1) throw std::invalid_argument("mc_mean_projection: samples >= 1");

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
  detail::chunked_samples(seed, samples, [&](std::mt19937_64& eng, std::int64_t n) {
    for (std::int64_t k = 0; k < n; ++k)
      acc += svd_pinv(gaussian_matrix(T, d, eng)).row_space_projection();
  });

  MomentCheckReport rep;
  rep.check = "mean_projection";
  rep.d = d;
  rep.T = T;
  rep.samples = samples;
  rep.estimate = acc / static_cast<double>(samples);
  rep.target = (static_cast<double>(T) / d) * Eigen::MatrixXd::Identity(d, d);
  rep.deviation = detail::symmetric_op_norm(rep.estimate - rep.target);
  rep.tolerance = 0.02 * std::sqrt(1e5 / static_cast<double>(samples));
  rep.pass = rep.deviation <= rep.tolerance;
  return rep;
}

struct SandwichCoefficients {
  double coef_p0 = 0.0;
  double coef_i = 0.0;
};

/// Exact coefficients of E[P P0 P] = coef_p0 * P0 + coef_i * I_d for P
/// uniform over the rank-T projections and P0 a rank-r projection;
/// degenerates to (T, 0) at d = 1.
inline SandwichCoefficients sandwich_closed_form(int d, int T, int r) {
  if (d < 1 || T < 1 || r < 1 || r > d)
    throw std::invalid_argument("sandwich_closed_form: need d >= 1, T >= 1, 1 <= r <= d");
  if (T > d) throw std::domain_error("sandwich_closed_form: requires T <= d");
  if (d == 1) return {static_cast<double>(T), 0.0};
  const double dd = d;
  const double tt = T;
  const double denom = (dd - 1.0) * dd * (dd + 2.0);
  return {(tt * tt * dd + tt * (dd - 2.0)) / denom, r * tt * (dd - tt) / denom};
}

/// Averages P_X P0 P_X over Gaussian-row draws (P_X is uniform on the
/// Grassmannian) and compares entrywise against the closed form.
inline MomentCheckReport mc_projection_sandwich(int d, int T, const Eigen::MatrixXd& p0, int r,
                                                std::int64_t samples, std::uint64_t seed) {
  if (d < 1 || T < 1) throw std::invalid_argument("mc_projection_sandwich: need d, T >= 1");
  if (T > d) throw std::domain_error("mc_projection_sandwich: requires T <= d");
  if (samples < 1) throw std::invalid_argument("mc_projection_sandwich: samples >= 1");
  if (p0.rows() != d || p0.cols() != d)
    throw std::invalid_argument("mc_projection_sandwich: P0 must be d×d");
  if ((p0 - p0.transpose()).norm() > 1e-10 || (p0 * p0 - p0).norm() > 1e-10)
    throw std::invalid_argument("mc_projection_sandwich: P0 must be a symmetric idempotent");
  if (std::lround(p0.trace()) != r)
    throw std::invalid_argument("mc_projection_sandwich: rank(P0) does not match declared r");

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
  detail::chunked_samples(seed, samples, [&](std::mt19937_64& eng, std::int64_t n) {
    for (std::int64_t k = 0; k < n; ++k) {
      const Eigen::MatrixXd p = svd_pinv(gaussian_matrix(T, d, eng)).row_space_projection();
      acc += p * p0 * p;
    }
  });

  const SandwichCoefficients c = sandwich_closed_form(d, T, r);
  MomentCheckReport rep;
  rep.check = "sandwich";
  rep.d = d;
  rep.T = T;
  rep.r = r;
  rep.samples = samples;
  rep.estimate = acc / static_cast<double>(samples);
  rep.target = c.coef_p0 * p0 + c.coef_i * Eigen::MatrixXd::Identity(d, d);
  rep.deviation = (rep.estimate - rep.target).cwiseAbs().maxCoeff();
  rep.tolerance = 0.01 * std::sqrt(1e6 / static_cast<double>(samples));
  rep.pass = rep.deviation <= rep.tolerance;
  rep.info = {{"coef_p0", c.coef_p0}, {"coef_i", c.coef_i}};
  return rep;
}

/// Empirical p_s = P[|X^+|_op <= s] = P[sigma_min(X) >= 1/s] for Gaussian
/// T×d designs. There is no closed form; the report checks the constant
/// lower bound p_s >= 0.3 motivated by the truncation analysis at the
/// default threshold.
inline MomentCheckReport mc_threshold_probability(int d, int T, double s, std::int64_t samples,
                                                  std::uint64_t seed) {
  if (d < 1 || T < 1) throw std::invalid_argument("mc_threshold_probability: need d, T >= 1");
  if (samples < 1) throw std::invalid_argument("mc_threshold_probability: samples >= 1");
  if (!(s > 0.0)) throw std::invalid_argument("mc_threshold_probability: need s > 0");

  const double cut = 1.0 / s;  // +inf threshold gives cut = 0: every draw survives
  std::int64_t kept = 0;
  detail::chunked_samples(seed, samples, [&](std::mt19937_64& eng, std::int64_t n) {
    for (std::int64_t k = 0; k < n; ++k)
      if (detail::smallest_singular_value(gaussian_matrix(T, d, eng)) >= cut) ++kept;
  });

  const double p = static_cast<double>(kept) / static_cast<double>(samples);
  MomentCheckReport rep;
  rep.check = "threshold_probability";
  rep.d = d;
  rep.T = T;
  rep.samples = samples;
  rep.estimate = Eigen::MatrixXd::Constant(1, 1, p);
  rep.target = Eigen::MatrixXd::Constant(1, 1, 0.3);
  rep.deviation = std::max(0.0, 0.3 - p);
  rep.tolerance = 0.0;
  rep.pass = rep.deviation <= rep.tolerance;
  rep.info = {{"p_s", p}, {"s", s}};
  return rep;
}

/// Verifies the two-eigenvalue structure of the truncated first-step
/// covariance E[beta-tilde beta-tilde^T] = lambda P_B0 + mu I_d: the top-r
/// eigenspace of the empirical covariance must align with span(B0), the
/// spectrum must split into two clusters, and for T <= d the measured gap is
/// compared against lambda = var(phi) p_s (T^2 d + T(d-2)) / ((d-1)d(d+2))
/// with p_s estimated by mc_threshold_probability. Dropped estimates count
/// as zero vectors, matching the truncation indicator.
inline MomentCheckReport covariance_structure_check(const ModelConfig& cfg, double s,
                                                    std::int64_t samples, std::uint64_t seed) {
  cfg.validate();
  if (!(s > 0.0) || !std::isfinite(s))
    throw std::invalid_argument("covariance_structure_check: needs a finite threshold s > 0");
  if (samples < 1) throw std::invalid_argument("covariance_structure_check: samples >= 1");

  const int d = cfg.d;
  const int r = cfg.r;
  auto frame_eng = make_engine(seed, {tag::frame});
  const Eigen::MatrixXd b0 = sample_orthonormal_frame(d, r, frame_eng);

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
  std::int64_t kept = 0;
  detail::chunked_samples(seed, samples, [&](std::mt19937_64& eng, std::int64_t n) {
    for (std::int64_t k = 0; k < n; ++k) {
      const Eigen::VectorXd phi = detail::draw_phi(cfg, eng);
      const Eigen::MatrixXd x = gaussian_matrix(cfg.T, d, eng);
      Eigen::VectorXd y = x * (b0 * phi);
      if (cfg.sigma_w > 0.0) y += cfg.sigma_w * gaussian_vector(cfg.T, eng);
      const SvdPinv pinv = svd_pinv(x);
      if (pinv.op_norm > s) continue;
      acc.selfadjointView<Eigen::Lower>().rankUpdate(pinv.apply(y));
      ++kept;
    }
  });

  Eigen::MatrixXd sigma_hat = Eigen::MatrixXd(acc.selfadjointView<Eigen::Lower>()) / static_cast<double>(samples);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_hat);
  Eigen::VectorXd eig(d);  // descending
  for (int i = 0; i < d; ++i) eig(i) = es.eigenvalues()(d - 1 - i);
  Eigen::MatrixXd top_frame(d, r);
  for (int j = 0; j < r; ++j) top_frame.col(j) = es.eigenvectors().col(d - 1 - j);

  const MomentCheckReport ps_rep = mc_threshold_probability(
      d, cfg.T, s, samples, derive_seed(seed, {tag::threshold_probability}));
  const double p_s = ps_rep.estimate(0, 0);
  const double var_phi = cfg.phi_coordinate_variance();
  const double scale = std::sqrt(2e5 / static_cast<double>(samples));

  const double mu_hat = r < d ? eig.tail(d - r).mean() : 0.0;
  const double gap = r < d ? eig.head(r).mean() - mu_hat : 0.0;
  double lambda_target = 0.0;
  if (var_phi > 0.0)
    lambda_target = cfg.T <= d ? var_phi * p_s * sandwich_closed_form(d, cfg.T, r).coef_p0
                               : var_phi * p_s;

  MomentCheckReport rep;
  rep.check = "covariance";
  rep.d = d;
  rep.T = cfg.T;
  rep.r = r;
  rep.samples = samples;
  rep.estimate = sigma_hat;
  rep.target = lambda_target * (b0 * b0.transpose()) +
               (r < d ? mu_hat : eig.mean() - lambda_target) * Eigen::MatrixXd::Identity(d, d);
  rep.info = {{"p_s", p_s},
              {"lambda_target", lambda_target},
              {"gap_measured", gap},
              {"mu_bottom_mean", mu_hat},
              {"kept_fraction", static_cast<double>(kept) / static_cast<double>(samples)}};

  const double spread_rel = (eig(0) - eig(d - 1)) / std::max(eig(0), 1e-300);
  if (var_phi == 0.0 || r == d) {
    // Degenerate regimes: the spectrum is a single cluster (mu I, or
    // (lambda + mu) I when r = d); only isotropy is checkable.
    rep.deviation = spread_rel;
    rep.tolerance = 20.0 * std::sqrt(static_cast<double>(d) / static_cast<double>(samples));
    rep.pass = rep.deviation <= rep.tolerance;
    return rep;
  }

  rep.deviation = sin_theta_op(top_frame, b0);
  rep.tolerance = 0.05 * scale;
  rep.pass = rep.deviation <= rep.tolerance;

  SubCheck gap_check;
  gap_check.name = "gap";
  gap_check.value = gap;
  gap_check.target = lambda_target;
  gap_check.deviation = std::abs(gap - lambda_target) / std::max(lambda_target, 1e-300);
  gap_check.tolerance = 0.25 * scale;
  gap_check.pass = gap_check.deviation <= gap_check.tolerance;
  rep.sub.push_back(gap_check);

  SubCheck cluster;
  cluster.name = "cluster";
  const double boundary = eig(r - 1) - eig(r);
  const double in_spread = std::max(eig(0) - eig(r - 1), eig(r) - eig(d - 1));
  cluster.value = boundary;
  cluster.target = in_spread;
  cluster.deviation = std::max(0.0, in_spread - boundary);
  cluster.tolerance = 0.0;
  cluster.pass = cluster.deviation <= cluster.tolerance;
  rep.sub.push_back(cluster);
  return rep;
}

}  // namespace ssr
