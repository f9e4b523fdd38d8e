#include "misp/negselect.hpp"

#include <limits>
#include <string>

#include "misp/embed.hpp"
#include "misp/error.hpp"

namespace misp::sel {

void SelectionConfig::validate() const {
  if (k < 1) throw ConfigError("selection config: k must be >= 1");
  if (diversity_weight < 0.0) {
    throw ConfigError("selection config: diversity_weight must be >= 0");
  }
}

std::vector<CandidateScore> score_candidates(
    const sae::SaeModel& model, const Eigen::Ref<const Eigen::MatrixXd>& diffs,
    const std::vector<std::string>& ids) {
  if (diffs.rows() == 0) {
    throw InsufficientDataError("score_candidates: empty pool");
  }
  if (static_cast<Eigen::Index>(ids.size()) != diffs.rows()) {
    throw DimensionError("score_candidates: ids/rows mismatch");
  }

  const Eigen::MatrixXd codes = sae::encode_batch(model, diffs);
  const Eigen::MatrixXd recon = sae::decode_batch(model, codes);

  std::vector<CandidateScore> out(ids.size());
  double max_l = 0.0;
  double max_v = 0.0;
  for (Eigen::Index i = 0; i < diffs.rows(); ++i) {
    out[i].candidate_id = ids[i];
    out[i].recon_error = (recon.row(i) - diffs.row(i)).squaredNorm();
    out[i].act_l1 = codes.row(i).cwiseAbs().sum();
    max_l = std::max(max_l, out[i].recon_error);
    max_v = std::max(max_v, out[i].act_l1);
  }
  for (auto& c : out) {
    const double t_l = max_l > 0.0 ? c.recon_error / max_l : 0.0;
    const double t_v = max_v > 0.0 ? c.act_l1 / max_v : 0.0;
    c.score = t_l + t_v;
  }
  return out;
}

SelectionManifest greedy_select(const std::vector<CandidateScore>& scores,
                                const Eigen::Ref<const Eigen::MatrixXd>& codes,
                                const SelectionConfig& config) {
  config.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(scores.size());
  if (n == 0) {
    throw InsufficientDataError("greedy_select: empty pool");
  }
  if (codes.rows() != n) {
    throw DimensionError("greedy_select: scores/codes misaligned");
  }

  std::string degenerate;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (codes.row(i).norm() == 0.0) {
      if (!degenerate.empty()) degenerate += ", ";
      degenerate += scores[i].candidate_id;
    }
  }
  if (!degenerate.empty()) {
    throw DegenerateInputError("greedy_select: zero-norm codes for ids: " +
                               degenerate);
  }

  SelectionManifest manifest;
  manifest.config = config;

  const Eigen::Index picks = std::min<Eigen::Index>(config.k, n);
  std::vector<bool> taken(n, false);
  // Minimum (1 - cos) against the selected set so far; maintained
  // incrementally as picks accumulate.
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());

  for (Eigen::Index p = 0; p < picks; ++p) {
    Eigen::Index best = -1;
    double best_val = -std::numeric_limits<double>::infinity();
    double best_bonus = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double bonus =
          p == 0 ? 0.0 : config.diversity_weight * min_dist[i];
      const double val = scores[i].score + bonus;
      if (val > best_val) {
        best_val = val;
        best = i;
        best_bonus = bonus;
      }
    }

    taken[best] = true;
    manifest.selected.push_back(
        {scores[best].candidate_id, scores[best].score, best_bonus});

    for (Eigen::Index i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d =
          1.0 - embed::cosine(codes.row(i).transpose(),
                              codes.row(best).transpose());
      min_dist[i] = std::min(min_dist[i], d);
    }
  }
  return manifest;
}

}  // namespace misp::sel
