// Independent oracle for greedy_select. Deliberately shares no helpers with
// the production path: plain index loops, cosine recomputed from scratch,
// min over the selected set re-evaluated at every step.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "misp/error.hpp"
#include "misp/negselect.hpp"

namespace misp::sel {

namespace {

double naive_cosine(const Eigen::Ref<const Eigen::MatrixXd>& codes, long a,
                    long b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (long j = 0; j < codes.cols(); ++j) {
    dot += codes(a, j) * codes(b, j);
    na += codes(a, j) * codes(a, j);
    nb += codes(b, j) * codes(b, j);
  }
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

}  // namespace

SelectionManifest reference_select(
    const std::vector<CandidateScore>& scores,
    const Eigen::Ref<const Eigen::MatrixXd>& codes,
    const SelectionConfig& config) {
  config.validate();
  const long n = static_cast<long>(scores.size());
  if (n == 0) {
    throw InsufficientDataError("reference_select: empty pool");
  }
  if (codes.rows() != n) {
    throw DimensionError("reference_select: scores/codes misaligned");
  }

  std::string degenerate;
  for (long i = 0; i < n; ++i) {
    double norm2 = 0.0;
    for (long j = 0; j < codes.cols(); ++j) norm2 += codes(i, j) * codes(i, j);
    if (norm2 == 0.0) {
      if (!degenerate.empty()) degenerate += ", ";
      degenerate += scores[i].candidate_id;
    }
  }
  if (!degenerate.empty()) {
    throw DegenerateInputError("reference_select: zero-norm codes for ids: " +
                               degenerate);
  }

  SelectionManifest manifest;
  manifest.config = config;

  std::vector<long> selected;
  std::vector<bool> taken(n, false);
  const long picks = config.k < n ? config.k : n;

  for (long p = 0; p < picks; ++p) {
    long best = -1;
    double best_val = -std::numeric_limits<double>::infinity();
    double best_bonus = 0.0;
    for (long i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double bonus = 0.0;
      if (!selected.empty()) {
        double mind = std::numeric_limits<double>::infinity();
        for (long j : selected) {
          const double d = 1.0 - naive_cosine(codes, i, j);
          if (d < mind) mind = d;
        }
        bonus = config.diversity_weight * mind;
      }
      const double val = scores[i].score + bonus;
      if (val > best_val) {
        best_val = val;
        best = i;
        best_bonus = bonus;
      }
    }
    taken[best] = true;
    selected.push_back(best);
    manifest.selected.push_back(
        {scores[best].candidate_id, scores[best].score, best_bonus});
  }
  return manifest;
}

}  // namespace misp::sel
