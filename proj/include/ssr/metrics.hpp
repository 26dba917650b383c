#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace ssr {

/// Principal angles between two subspaces, stored nondecreasing in
/// [0, pi/2].
struct PrincipalAngles {
  Eigen::VectorXd angles;

  double largest() const { return angles(angles.size() - 1); }
};

namespace detail {

inline void require_frame(const Eigen::MatrixXd& a, const char* name) {
  const Eigen::MatrixXd gram = a.transpose() * a;
  const double err = (gram - Eigen::MatrixXd::Identity(a.cols(), a.cols())).norm();
  if (!(err <= 1e-8))
    throw std::invalid_argument(std::string("metrics: ") + name + " is not orthonormal");
}

}  // namespace detail

/// Canonical angles from the singular values of A^T B, clamped into [-1, 1]
/// before the arccos. Angles below pi/4 are taken from the sine route, the
/// singular values of (I - AA^T)B, which stays accurate where the cosine
/// saturates. Both inputs must be orthonormal d×r frames.
inline PrincipalAngles principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("principal_angles: frames must share d and r");
  detail::require_frame(a, "first frame");
  detail::require_frame(b, "second frame");
  const Eigen::MatrixXd cross = a.transpose() * b;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd_cos(cross);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd_sin(b - a * cross);
  const Eigen::VectorXd& cos_sv = svd_cos.singularValues();  // nonincreasing
  const Eigen::VectorXd& sin_sv = svd_sin.singularValues();
  const int r = static_cast<int>(cos_sv.size());
  PrincipalAngles out;
  out.angles.resize(r);
  for (int i = 0; i < r; ++i) {
    const double c = std::clamp(cos_sv(i), -1.0, 1.0);
    const double s = std::clamp(sin_sv(r - 1 - i), 0.0, 1.0);
    out.angles(i) = c * c >= 0.5 ? std::asin(s) : std::acos(c);
  }
  std::sort(out.angles.begin(), out.angles.end());
  return out;
}

/// sin of the largest principal angle; equals |P_A - P_B|_op.
inline double sin_theta_op(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return std::sin(principal_angles(a, b).largest());
}

/// sqrt of the sum of squared sines; equals |P_A - P_B|_F / sqrt(2).
inline double sin_theta_fro(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const PrincipalAngles pa = principal_angles(a, b);
  double sum = 0.0;
  for (int i = 0; i < pa.angles.size(); ++i) {
    const double s = std::sin(pa.angles(i));
    sum += s * s;
  }
  return std::sqrt(sum);
}

/// Mean and population standard deviation of per-system Euclidean errors.
struct ErrorSummary {
  double mean = 0.0;
  double std = 0.0;
};

inline ErrorSummary param_errors(const std::vector<Eigen::VectorXd>& estimates,
                                 const std::vector<Eigen::VectorXd>& truth) {
  if (estimates.size() != truth.size())
    throw std::invalid_argument("param_errors: estimate/truth length mismatch");
  if (estimates.empty()) throw std::invalid_argument("param_errors: empty input");
  const int n = static_cast<int>(estimates.size());
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = (estimates[i] - truth[i]).norm();
    sum += e;
    sum_sq += e * e;
  }
  ErrorSummary out;
  out.mean = sum / n;
  out.std = std::sqrt(std::max(sum_sq / n - out.mean * out.mean, 0.0));
  return out;
}

}  // namespace ssr
