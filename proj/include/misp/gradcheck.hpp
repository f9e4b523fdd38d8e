#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <vector>

namespace misp::gradcheck {

struct Result {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// |a - f| / max(|a|, |f|, floor). The floor keeps near-zero coordinates from
// turning finite-difference noise (~1e-11 absolute for step 1e-5) into a
// spurious failure; a genuinely wrong gradient still shows O(1) error on
// ordinary coordinates.
inline double relative_error(double analytic, double numeric,
                             double floor = 1e-4) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Central difference of `f` along coordinate `i` at `x`.
inline double central_difference(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, Eigen::Index i, double step) {
  Eigen::VectorXd xp = x;
  Eigen::VectorXd xm = x;
  xp(i) += step;
  xm(i) -= step;
  return (f(xp) - f(xm)) / (2.0 * step);
}

// Compare an analytic gradient against central differences on the listed
// coordinates (all of them when `coords` is empty).
inline Result check(const std::function<double(const Eigen::VectorXd&)>& f,
                    const Eigen::VectorXd& x0,
                    const Eigen::VectorXd& analytic,
                    const std::vector<Eigen::Index>& coords = {},
                    double step = 1e-5, double floor = 1e-4) {
  Result result;
  const auto probe = [&](Eigen::Index i) {
    const double numeric = central_difference(f, x0, i, step);
    const double err = relative_error(analytic(i), numeric, floor);
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.worst_analytic = analytic(i);
      result.worst_numeric = numeric;
    }
  };
  if (coords.empty()) {
    for (Eigen::Index i = 0; i < x0.size(); ++i) probe(i);
  } else {
    for (Eigen::Index i : coords) probe(i);
  }
  return result;
}

}  // namespace misp::gradcheck
