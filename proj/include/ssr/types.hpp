#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace ssr {

/// Thrown when an estimation stage cannot produce a result (for example
/// when truncation drops every first-step estimate).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PhiDist { unit_ball_uniform, isotropic_gaussian };

struct ModelConfig {
  int d = 0;  ///< ambient dimension
  int r = 0;  ///< shared subspace dimension, 1 <= r <= d
  int T = 0;  ///< observations per system
  int N = 0;  ///< number of systems
  double sigma_w = 0.0;  ///< observation noise standard deviation
  PhiDist phi_dist = PhiDist::unit_ball_uniform;
  double sigma_phi = 0.0;  ///< per-coordinate std for isotropic_gaussian
  std::uint64_t seed = 0;

  void validate() const {
    if (d < 1) throw std::invalid_argument("ModelConfig: d must be >= 1");
    if (r < 1 || r > d) throw std::invalid_argument("ModelConfig: need 1 <= r <= d");
    if (T < 1) throw std::invalid_argument("ModelConfig: T must be >= 1");
    if (N < 1) throw std::invalid_argument("ModelConfig: N must be >= 1");
    if (!(sigma_w >= 0.0)) throw std::invalid_argument("ModelConfig: sigma_w must be >= 0");
    if (phi_dist == PhiDist::isotropic_gaussian && !(sigma_phi >= 0.0))
      throw std::invalid_argument("ModelConfig: isotropic_gaussian requires sigma_phi >= 0");
  }

  /// Per-coordinate variance of the coefficient distribution. A uniform
  /// unit-ball draw has covariance I_r / (r + 2).
  double phi_coordinate_variance() const {
    return phi_dist == PhiDist::unit_ball_uniform ? 1.0 / (r + 2.0) : sigma_phi * sigma_phi;
  }
};

struct TimeSeriesConfig : ModelConfig {
  double sigma_x = 1.0;  ///< initial-state standard deviation

  void validate() const {
    ModelConfig::validate();
    if (!(sigma_x > 0.0)) throw std::invalid_argument("TimeSeriesConfig: sigma_x must be > 0");
  }
};

/// Shared frame and per-system coefficients/parameters used for evaluation.
/// parameters[i] == frame * coefficients[i] by construction.
struct GroundTruth {
  Eigen::MatrixXd frame;  // d×r, orthonormal columns
  std::vector<Eigen::VectorXd> coefficients;
  std::vector<Eigen::VectorXd> parameters;
};

enum class DatasetKind { iid_regression, time_series };

inline const char* to_string(DatasetKind k) {
  return k == DatasetKind::iid_regression ? "iid-regression" : "time-series";
}

struct LinearSystem {
  Eigen::MatrixXd X;  // T×d
  Eigen::VectorXd y;  // length T
};

struct Dataset {
  DatasetKind kind = DatasetKind::iid_regression;
  std::vector<LinearSystem> systems;
  std::optional<GroundTruth> truth;
};

}  // namespace ssr
