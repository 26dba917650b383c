#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssr/types.hpp"

namespace ssr {

namespace detail {

inline void warn(const std::string& msg) { std::fprintf(stderr, "[ssr] warning: %s\n", msg.c_str()); }

}  // namespace detail

/// Moore–Penrose pseudoinverse in factored thin-SVD form. Singular values
/// below rel_tol * sigma_max are treated as zero.
struct SvdPinv {
  Eigen::MatrixXd U;        // T×k left singular vectors
  Eigen::MatrixXd V;        // d×k right singular vectors
  Eigen::VectorXd inv_sv;   // 1/sigma_i for kept values, 0 for discarded
  double op_norm = 0.0;     // |X^+|_op

  /// X^+ y without forming the pseudoinverse matrix.
  Eigen::VectorXd apply(const Eigen::VectorXd& y) const {
    return V * (inv_sv.asDiagonal() * (U.transpose() * y));
  }

  Eigen::MatrixXd matrix() const { return V * inv_sv.asDiagonal() * U.transpose(); }

  /// P_X = X^+ X, the projection onto the row space of X.
  Eigen::MatrixXd row_space_projection() const {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(V.rows(), V.rows());
    for (int i = 0; i < inv_sv.size(); ++i)
      if (inv_sv(i) > 0.0) p.selfadjointView<Eigen::Lower>().rankUpdate(V.col(i));
    return p.selfadjointView<Eigen::Lower>();
  }
};

/// Factored pseudoinverse of X via SVD. rel_tol < 0 selects the default
/// cutoff machine-epsilon * max(T, d).
inline SvdPinv svd_pinv(const Eigen::MatrixXd& X, double rel_tol = -1.0) {
  if (!X.allFinite()) throw std::invalid_argument("svd_pinv: non-finite entries");
  if (rel_tol < 0.0)
    rel_tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(X.rows(), X.cols()));
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdPinv out;
  out.U = svd.matrixU();
  out.V = svd.matrixV();
  const Eigen::VectorXd& sv = svd.singularValues();
  out.inv_sv.resize(sv.size());
  const double cutoff = sv.size() > 0 ? rel_tol * sv(0) : 0.0;
  for (int i = 0; i < sv.size(); ++i) {
    out.inv_sv(i) = (sv(i) > cutoff && sv(i) > 0.0) ? 1.0 / sv(i) : 0.0;
    out.op_norm = std::max(out.op_norm, out.inv_sv(i));
  }
  return out;
}

inline Eigen::MatrixXd pseudoinverse(const Eigen::MatrixXd& X, double rel_tol = -1.0) {
  return svd_pinv(X, rel_tol).matrix();
}

struct FirstStep {
  Eigen::VectorXd beta;     // X^+ y, the minimum-norm least-squares solution
  double pinv_op_norm = 0;  // |X^+|_op, consumed by the truncation rule
};

inline FirstStep first_step_detailed(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw std::invalid_argument("first_step: X and y disagree on T");
  SvdPinv p = svd_pinv(X);
  return {p.apply(y), p.op_norm};
}

inline Eigen::VectorXd first_step(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return first_step_detailed(X, y).beta;
}

/// Method-of-moments first step: X^T y, with no 1/T scaling.
inline Eigen::VectorXd mom_first_step(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw std::invalid_argument("mom_first_step: X and y disagree on T");
  return X.transpose() * y;
}

enum class ProcessMode { normalize, truncate, none };
enum class FirstStepKind { normalize, truncate, mom, none };

struct FirstStepEstimates {
  std::vector<Eigen::VectorXd> raw;        // all N first-step estimates
  std::vector<Eigen::VectorXd> processed;  // M <= N surviving (possibly rescaled) estimates
  std::vector<int> kept_indices;           // the M retained indices
  FirstStepKind variant = FirstStepKind::none;
  double threshold = std::numeric_limits<double>::infinity();
};

/// Normalization/truncation stage between the first step and subspace
/// recovery. normalize rescales each estimate to unit norm (estimates with
/// norm below 1e-300 are dropped); truncate keeps, unscaled, exactly the
/// systems whose design pseudoinverse operator norm is at most s; none
/// passes everything through.
inline FirstStepEstimates process_first_step(std::vector<Eigen::VectorXd> raw, ProcessMode mode,
                                             double s = std::numeric_limits<double>::infinity(),
                                             const std::vector<double>& pinv_op_norms = {}) {
  FirstStepEstimates out;
  out.raw = std::move(raw);
  const int n = static_cast<int>(out.raw.size());
  switch (mode) {
    case ProcessMode::normalize:
      out.variant = FirstStepKind::normalize;
      for (int i = 0; i < n; ++i) {
        const double norm = out.raw[i].norm();
        if (norm < 1e-300) continue;  // a zero column adds nothing to the SVD
        out.processed.push_back(out.raw[i] / norm);
        out.kept_indices.push_back(i);
      }
      break;
    case ProcessMode::truncate:
      out.variant = FirstStepKind::truncate;
      out.threshold = s;
      if (static_cast<int>(pinv_op_norms.size()) != n)
        throw std::invalid_argument("process_first_step: truncation needs one |X^+| per estimate");
      for (int i = 0; i < n; ++i) {
        if (pinv_op_norms[i] > s) continue;
        out.processed.push_back(out.raw[i]);
        out.kept_indices.push_back(i);
      }
      break;
    case ProcessMode::none:
      out.variant = FirstStepKind::none;
      out.processed = out.raw;
      out.kept_indices.resize(n);
      for (int i = 0; i < n; ++i) out.kept_indices[i] = i;
      break;
  }
  if (out.processed.empty()) throw EstimationError("no surviving first-step estimates");
  return out;
}

struct Threshold {
  double s = std::numeric_limits<double>::infinity();
  bool vacuous = false;  // T == d: the schedule degenerates, truncation keeps everything
};

/// Truncation level 1/(c0 (sqrt(d) - sqrt(T-1))) for T < d and
/// 1/(c0 (sqrt(T) - sqrt(d))) for T > d. At T == d the schedule has no
/// usable level; the returned threshold is +inf and flagged vacuous, and the
/// normalize variant should be preferred there.
inline Threshold default_threshold(int d, int T, double c0 = 0.5) {
  if (d < 1 || T < 1) throw std::invalid_argument("default_threshold: need d, T >= 1");
  if (!(c0 > 0.0)) throw std::invalid_argument("default_threshold: need c0 > 0");
  if (T == d) return {std::numeric_limits<double>::infinity(), true};
  const double denom = T < d ? c0 * (std::sqrt(static_cast<double>(d)) - std::sqrt(T - 1.0))
                             : c0 * (std::sqrt(static_cast<double>(T)) - std::sqrt(static_cast<double>(d)));
  if (!(denom > 0.0)) return {std::numeric_limits<double>::infinity(), true};
  return {1.0 / denom, false};
}

struct SubspaceEstimate {
  Eigen::MatrixXd frame;  // d×r, orthonormal columns spanning the estimate
  bool padded = false;    // fewer inputs than r: frame completed deterministically
};

namespace detail {

// Fixes each column's sign so its entry of largest absolute value is
// positive, ties broken by lowest index.
inline void fix_column_signs(Eigen::MatrixXd& f) {
  for (int j = 0; j < f.cols(); ++j) {
    int arg = 0;
    double best = -1.0;
    for (int i = 0; i < f.rows(); ++i) {
      const double a = std::abs(f(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (f(arg, j) < 0.0) f.col(j) = -f.col(j);
  }
}

// Appends canonical-basis completions (Gram-Schmidt against the existing
// columns) until the frame has k columns.
inline void pad_orthonormal(Eigen::MatrixXd& frame, int k) {
  const int d = static_cast<int>(frame.rows());
  for (int cand = 0; cand < d && frame.cols() < k; ++cand) {
    Eigen::VectorXd w = Eigen::VectorXd::Unit(d, cand);
    w -= frame * (frame.transpose() * w);
    w -= frame * (frame.transpose() * w);  // second pass against roundoff
    const double norm = w.norm();
    if (norm < 1e-6) continue;
    frame.conservativeResize(Eigen::NoChange, frame.cols() + 1);
    frame.col(frame.cols() - 1) = w / norm;
  }
}

}  // namespace detail

/// Top-r principal subspace of the processed first-step estimates: the top-r
/// left singular vectors of the d×M stacked matrix, computed through the
/// eigendecomposition of the d×d second-moment matrix. Column signs follow
/// the largest-entry-positive convention. With M < r the frame is padded
/// with a deterministic orthonormal completion and flagged.
inline SubspaceEstimate recover_subspace(const std::vector<Eigen::VectorXd>& vectors, int r) {
  if (vectors.empty()) throw EstimationError("recover_subspace: no input vectors");
  const int d = static_cast<int>(vectors.front().size());
  if (r < 1 || r > d) throw std::invalid_argument("recover_subspace: need 1 <= r <= d");
  const int m = static_cast<int>(vectors.size());
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  for (const auto& v : vectors) {
    if (v.size() != d) throw std::invalid_argument("recover_subspace: inconsistent dimensions");
    gram.selfadjointView<Eigen::Lower>().rankUpdate(v);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);  // eigenvalues ascending
  if (es.info() != Eigen::Success) throw EstimationError("recover_subspace: eigendecomposition failed");

  const int k = std::min(r, m);
  Eigen::MatrixXd frame(d, k);
  for (int j = 0; j < k; ++j) frame.col(j) = es.eigenvectors().col(d - 1 - j);
  detail::fix_column_signs(frame);

  const double sigma1 = std::sqrt(std::max(es.eigenvalues()(d - 1), 0.0));
  const int probe = std::min({r + 1, d, m});
  for (int j = 0; j + 1 < probe; ++j) {
    const double a = std::sqrt(std::max(es.eigenvalues()(d - 1 - j), 0.0));
    const double b = std::sqrt(std::max(es.eigenvalues()(d - 2 - j), 0.0));
    if (a - b < 1e-12 * sigma1) {
      detail::warn("recover_subspace: near-degenerate singular values " + std::to_string(j) + "," +
                   std::to_string(j + 1) + "; ordering follows the factorization");
      break;
    }
  }

  SubspaceEstimate out;
  out.frame = std::move(frame);
  if (k < r) {
    detail::warn("recover_subspace: only " + std::to_string(m) + " inputs for rank " + std::to_string(r) +
                 "; padding with a deterministic completion");
    detail::pad_orthonormal(out.frame, r);
    out.padded = true;
  }
  return out;
}

struct RefinedSystem {
  Eigen::VectorXd coefficients;  // phi-hat in R^r
  Eigen::VectorXd parameters;    // frame * phi-hat in R^d
};

/// Least squares constrained to span(frame): phi = (X frame)^+ y and
/// beta = frame * phi.
inline RefinedSystem refine(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::MatrixXd& frame) {
  if (X.rows() != y.size()) throw std::invalid_argument("refine: X and y disagree on T");
  if (X.cols() != frame.rows()) throw std::invalid_argument("refine: X and frame disagree on d");
  Eigen::VectorXd phi = svd_pinv(X * frame).apply(y);
  Eigen::VectorXd beta = frame * phi;
  return {std::move(phi), std::move(beta)};
}

/// Constrained least squares against the true frame; the performance
/// baseline when the subspace is known.
inline RefinedSystem oracle_estimate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     const Eigen::MatrixXd& true_frame) {
  return refine(X, y, true_frame);
}

struct RefinedEstimates {
  std::vector<Eigen::VectorXd> coefficients;
  std::vector<Eigen::VectorXd> parameters;
};

struct EstimatorVariant {
  enum class Kind { normalize, truncate, mom };
  Kind kind = Kind::normalize;
  double threshold = std::numeric_limits<double>::infinity();  // truncate only

  static EstimatorVariant Normalize() { return {Kind::normalize, std::numeric_limits<double>::infinity()}; }
  static EstimatorVariant Truncate(double s) { return {Kind::truncate, s}; }
  static EstimatorVariant Mom() { return {Kind::mom, std::numeric_limits<double>::infinity()}; }
};

struct EstimateResult {
  FirstStepEstimates first_step;
  SubspaceEstimate subspace;
  RefinedEstimates refined;
};

/// The three-step pipeline: per-system first step (pseudoinverse, or X^T y
/// for the mom variant), normalization or truncation, principal-subspace
/// recovery, and per-system refinement constrained to the estimated
/// subspace. Refinement always covers all systems, including any dropped by
/// truncation.
inline EstimateResult estimate(const Dataset& data, int r, const EstimatorVariant& variant) {
  const int n = static_cast<int>(data.systems.size());
  if (n == 0) throw std::invalid_argument("estimate: empty dataset");

  std::vector<Eigen::VectorXd> raw(n);
  std::vector<double> op_norms;
  if (variant.kind == EstimatorVariant::Kind::mom) {
    for (int i = 0; i < n; ++i) raw[i] = mom_first_step(data.systems[i].X, data.systems[i].y);
  } else {
    op_norms.resize(n);
    for (int i = 0; i < n; ++i) {
      FirstStep fs = first_step_detailed(data.systems[i].X, data.systems[i].y);
      raw[i] = std::move(fs.beta);
      op_norms[i] = fs.pinv_op_norm;
    }
  }

  EstimateResult out;
  switch (variant.kind) {
    case EstimatorVariant::Kind::normalize:
      out.first_step = process_first_step(std::move(raw), ProcessMode::normalize);
      break;
    case EstimatorVariant::Kind::truncate:
      out.first_step = process_first_step(std::move(raw), ProcessMode::truncate, variant.threshold, op_norms);
      break;
    case EstimatorVariant::Kind::mom:
      out.first_step = process_first_step(std::move(raw), ProcessMode::none);
      out.first_step.variant = FirstStepKind::mom;
      break;
  }
  out.subspace = recover_subspace(out.first_step.processed, r);
  out.refined.coefficients.reserve(n);
  out.refined.parameters.reserve(n);
  for (int i = 0; i < n; ++i) {
    RefinedSystem rs = refine(data.systems[i].X, data.systems[i].y, out.subspace.frame);
    out.refined.coefficients.push_back(std::move(rs.coefficients));
    out.refined.parameters.push_back(std::move(rs.parameters));
  }
  return out;
}

}  // namespace ssr
