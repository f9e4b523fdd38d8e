#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace misp {

// Overflow-safe logistic sigmoid, strictly inside (0,1) for finite x.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// softplus(x) = log(1 + e^x) = -log(sigmoid(-x)), stable at both extremes.
inline double softplus(double x) {
  if (x > 0.0) {
    return x + std::log1p(std::exp(-x));
  }
  return std::log1p(std::exp(x));
}

// Max-shifted log(sum_i exp(x_i)).
inline double logsumexp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline double logsumexp(const std::vector<double>& xs) {
  return logsumexp(std::span<const double>(xs));
}

// Max-shifted softmax; entries sum to 1.
inline std::vector<double> softmax(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  std::vector<double> out(xs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i] = std::exp(xs[i] - m);
    acc += out[i];
  }
  for (double& v : out) v /= acc;
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& xs) {
  return softmax(std::span<const double>(xs));
}

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return m.allFinite();
}

}  // namespace misp
