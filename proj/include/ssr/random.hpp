#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace ssr {

// SplitMix64 finalizer; bijective mixing of a 64-bit word.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Substream labels mixed into derived seeds. Values are arbitrary but fixed;
// changing one changes every stream that uses it.
namespace tag {
inline constexpr std::uint64_t frame = 1;
inline constexpr std::uint64_t design = 2;
inline constexpr std::uint64_t coefficients = 3;
inline constexpr std::uint64_t noise = 4;
inline constexpr std::uint64_t initial_state = 5;
inline constexpr std::uint64_t dynamics = 6;
inline constexpr std::uint64_t trial = 7;
inline constexpr std::uint64_t chunk = 8;
inline constexpr std::uint64_t threshold_probability = 9;
inline constexpr std::uint64_t check = 10;
}  // namespace tag

inline std::uint64_t bits_of(double x) {
  std::uint64_t u;
  static_assert(sizeof(u) == sizeof(x));
  std::memcpy(&u, &x, sizeof(u));
  return u;
}

/// Folds a root seed and a path of labels into one substream seed. Equal
/// paths give equal seeds, so anything keyed this way can be generated in
/// any order (or in parallel) without changing the result.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(root);
  for (std::uint64_t p : path) h = mix64(h ^ p);
  return h;
}

inline std::mt19937_64 make_engine(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  return std::mt19937_64(derive_seed(root, path));
}

/// rows×cols matrix of i.i.d. standard normals, filled row by row.
inline Eigen::MatrixXd gaussian_matrix(int rows, int cols, std::mt19937_64& eng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(eng);
  return m;
}

inline Eigen::VectorXd gaussian_vector(int n, std::mt19937_64& eng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(eng);
  return v;
}

/// Uniform draw from the closed unit ball in R^r: g * u^{1/r} / |g| with
/// g standard normal and u uniform on [0, 1).
inline Eigen::VectorXd unit_ball_vector(int r, std::mt19937_64& eng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::VectorXd g = gaussian_vector(r, eng);
  double n = g.norm();
  while (n < 1e-300) {
    g = gaussian_vector(r, eng);
    n = g.norm();
  }
  return g * (std::pow(uniform(eng), 1.0 / r) / n);
}

}  // namespace ssr
