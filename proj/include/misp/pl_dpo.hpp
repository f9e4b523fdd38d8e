#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <vector>

namespace misp::pl {

struct DpoConfig {
  double beta = 0.5;
  double lambda = 1.0;

  void validate() const;  // throws ConfigError
};

// Log-probability ratios for one training instance. All ratios are beta-free
// log(pi_theta / pi_ref) values; the reference policy is frozen input data.
struct PreferenceInstance {
  double pos_logratio = 0.0;                // response under the positive image
  std::vector<double> neg_logratios;        // one per negative image, N >= 1
  std::optional<double> text_pos_logratio;  // preferred response, positive image
  std::optional<double> text_neg_logratio;  // rejected response, positive image
  // Proposal probabilities aligned with neg_logratios; required by the
  // importance-sampling estimators, strictly positive when present.
  std::optional<std::vector<double>> proposal_q;

  void validate() const;
  bool has_text_pair() const {
    return text_pos_logratio.has_value() && text_neg_logratio.has_value();
  }
};

// Everything Lemma 1 needs: advantages, their softmax, the sigmoid factor,
// and the scalar weight each negative's correction signal carries.
struct MnGradientReport {
  std::vector<double> advantages;          // a_i = beta*(neg_i - pos)
  std::vector<double> preference_weights;  // p_i, softmax of advantages
  double sigma_factor = 0.0;               // sigma(log sum exp(a_i)) in (0,1)
  std::vector<double> per_negative_delta_weights;  // beta * sigma * p_i
};

// -log sigmoid(beta * (pos - neg)); the shared kernel for both the text and
// the single-negative image objectives.
double pairwise_dpo_loss(double pos_logratio, double neg_logratio,
                         double beta);

std::vector<double> advantages(const PreferenceInstance& instance,
                               double beta);

// Multi-negative loss: softplus(logsumexp(a)). Reduces exactly to
// pairwise_dpo_loss when N = 1.
double mn_loss(const PreferenceInstance& instance, double beta);

MnGradientReport mn_gradient_report(const PreferenceInstance& instance,
                                    double beta);

double text_loss(const PreferenceInstance& instance, double beta);

// mn_loss + lambda * text_loss. lambda > 0 requires the text pair.
double total_loss(const PreferenceInstance& instance, const DpoConfig& config);

// A policy evaluated at a fixed family of contexts: index 0 is the response
// under the positive image, indices 1..N under the negatives. Parameter
// gradients are flat vectors so the estimators stay model-agnostic.
class DifferentiablePolicy {
 public:
  virtual ~DifferentiablePolicy() = default;
  virtual std::size_t num_contexts() const = 0;
  virtual Eigen::Index num_params() const = 0;
  virtual double log_prob(std::size_t context) const = 0;
  virtual Eigen::VectorXd log_prob_grad(std::size_t context) const = 0;
};

// Exact multi-negative gradient assembled from the report weights:
// beta * sigma(lse) * sum_i p_i * (grad log pi(neg_i) - grad log pi(pos)).
// ref_logprobs holds the frozen reference log-probs with the same indexing
// as the policy contexts.
Eigen::VectorXd mn_gradient_exact(const DifferentiablePolicy& policy,
                                  const std::vector<double>& ref_logprobs,
                                  double beta);

enum class IsMode {
  // The estimator verbatim: per-sample weight exp(a_i)/q_i, no pool
  // normalizer. Not equal to the exact softmax-weighted gradient in general.
  kLiteral,
  // Weights exp(a_i)/q_i divided by their sum over the sampled subset;
  // collapses to the exact gradient on the full set with uniform q.
  kSelfNormalized,
};

// Importance-sampling gradient over a sampled negative subset. The policy's
// contexts 1..|S| are the sampled negatives; q aligns with them and must be
// strictly positive.
Eigen::VectorXd mn_gradient_is(const DifferentiablePolicy& policy,
                               const std::vector<double>& ref_logprobs,
                               const std::vector<double>& proposal_q,
                               double beta, IsMode mode);

// The self-normalized / literal importance weights alone (sum over the
// subset of w_i * delta_i is the estimator). Exposed for weight-level tests.
std::vector<double> is_weights(const std::vector<double>& advantages,
                               const std::vector<double>& proposal_q,
                               IsMode mode);

}  // namespace misp::pl
