#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "misp/sae.hpp"

namespace misp::sel {

struct CandidateScore {
  std::string candidate_id;
  double recon_error = 0.0;  // squared reconstruction error of its diff vector
  double act_l1 = 0.0;       // L1 norm of its encoder code
  double score = 0.0;        // s in [0,2]: normalized sum of the two terms
};

struct SelectionConfig {
  int k = 3;
  // The diversity coefficient of the greedy objective; distinct from the
  // preference-loss beta, hence the name.
  double diversity_weight = 0.5;

  void validate() const;  // throws ConfigError
};

struct SelectedEntry {
  std::string candidate_id;
  double score = 0.0;
  double diversity_bonus = 0.0;  // value of the bonus term at pick time
};

struct SelectionManifest {
  std::string prompt_id;
  std::string positive_id;
  SelectionConfig config;
  std::vector<SelectedEntry> selected;  // greedy pick order
};

// Per-candidate recon error and code L1, each normalized by the pool maximum
// (a zero pool maximum makes the corresponding term 0 for every candidate),
// summed into the score. `diffs` rows and `ids` are aligned.
std::vector<CandidateScore> score_candidates(
    const sae::SaeModel& model, const Eigen::Ref<const Eigen::MatrixXd>& diffs,
    const std::vector<std::string>& ids);

// Greedy diversity-promoting selection: repeatedly picks the unselected
// candidate maximizing score + diversity_weight * min over selected of
// (1 - cos(code_i, code_j)). The bonus is 0 on the first pick; ties break
// toward the smallest candidate index; stops after min(k, pool) picks.
// Codes rows align with `scores`. Zero-norm codes raise
// DegenerateInputError listing the offending ids.
SelectionManifest greedy_select(const std::vector<CandidateScore>& scores,
                                const Eigen::Ref<const Eigen::MatrixXd>& codes,
                                const SelectionConfig& config);

// Straight-line oracle with the identical contract, implemented with naive
// quadratic loops and no code shared with greedy_select. Exists for
// differential testing.
SelectionManifest reference_select(
    const std::vector<CandidateScore>& scores,
    const Eigen::Ref<const Eigen::MatrixXd>& codes,
    const SelectionConfig& config);

}  // namespace misp::sel
