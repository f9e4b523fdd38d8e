#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "misp/pl_dpo.hpp"

namespace misp::toy {

// Linear-softmax policy over a small vocabulary: one shared token
// distribution per context, log pi(y|x) = sum_t log softmax(W x)[y_t].
struct ToyPolicy {
  Eigen::MatrixXd weights;  // vocab_size x feature_dim
};

struct ToyContext {
  Eigen::VectorXd features;
  std::vector<int> response;  // token indices in [0, vocab_size)
};

double logprob(const ToyPolicy& policy, const ToyContext& context);

// Exact gradient of logprob w.r.t. the weights (softmax-cross-entropy form).
Eigen::MatrixXd logprob_grad(const ToyPolicy& policy,
                             const ToyContext& context);

// Adapter exposing (policy, positive context, negative contexts) through the
// DifferentiablePolicy interface; index 0 is the positive context.
class ToyInstancePolicy : public pl::DifferentiablePolicy {
 public:
  ToyInstancePolicy(const ToyPolicy& policy,
                    std::vector<const ToyContext*> contexts)
      : policy_(policy), contexts_(std::move(contexts)) {}

  std::size_t num_contexts() const override { return contexts_.size(); }
  Eigen::Index num_params() const override {
    return policy_.weights.size();
  }
  double log_prob(std::size_t context) const override {
    return logprob(policy_, *contexts_[context]);
  }
  Eigen::VectorXd log_prob_grad(std::size_t context) const override {
    const Eigen::MatrixXd g = logprob_grad(policy_, *contexts_[context]);
    return Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
  }

 private:
  const ToyPolicy& policy_;
  std::vector<const ToyContext*> contexts_;
};

// ---------------------------------------------------------------------------
// Synthetic data

struct PlantedFactorSpec {
  int num_factors = 4;
  int samples_per_factor = 3;
  double factor_noise = 0.05;
  std::uint64_t seed = 0;
  int dim = 32;

  void validate() const;
};

// Candidates deviate from mutually orthogonal factor centroids (standard
// basis directions) by Gaussian noise. Rows are factor-major; ids are the
// decimal row indices, matching the binary embedding loader's convention.
struct PlantedPool {
  Eigen::MatrixXd centroids;  // num_factors x dim
  Eigen::MatrixXd diffs;      // (num_factors*samples_per_factor) x dim
  std::vector<int> labels;    // ground-truth factor per row
  std::vector<std::string> ids;
};

PlantedPool make_planted_pool(const PlantedFactorSpec& spec);

// Sparse dictionary data for SAE training: each row is a few random atoms
// with signed coefficients plus Gaussian noise.
struct SparseDataSpec {
  int rows = 2000;
  int dim = 64;
  int num_atoms = 16;
  int atoms_per_sample = 2;
  double noise = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

Eigen::MatrixXd make_sparse_dataset(const SparseDataSpec& spec);

// ---------------------------------------------------------------------------
// End-to-end toy training

enum class NegativeSampler {
  kDiverse,       // factors cycle so N >= num_factors covers all of them
  kSingleFactor,  // every negative deviates along factor 0
  kRandom,        // factors drawn iid with replacement
};

struct ToyTrainConfig {
  pl::DpoConfig dpo;
  NegativeSampler sampler = NegativeSampler::kDiverse;
  int num_negatives = 3;
  int steps = 500;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int num_factors = 3;
  int feature_dim = 8;  // >= 1 + num_factors (bias slot + factor slots)
  int vocab_size = 16;
  int response_length = 4;
  int num_train_instances = 8;
  int num_heldout_instances = 32;
  double context_noise = 0.05;
  double factor_shift = 1.0;
  double init_scale = 0.01;

  void validate() const;
};

struct ToyInstance {
  ToyContext positive;
  std::vector<ToyContext> negatives;  // same response, shifted features
  std::vector<int> negative_factors;
  std::vector<int> rejected_response;  // y_n for the text pair
};

struct StepMetrics {
  int step = 0;
  double loss = 0.0;
  double margin = 0.0;    // pos log-prob minus max negative log-prob
  double coverage = 0.0;  // mean distinct-factor count of the negative sets
};

struct ToyRunResult {
  ToyPolicy policy;
  ToyPolicy reference;
  std::vector<StepMetrics> trace;  // index 0 is the initial evaluation
  // Mean held-out margins: negatives spanning every factor, and negatives
  // restricted to factors other than 0 (the single-sampler factor).
  double heldout_margin_all = 0.0;
  double heldout_margin_off_factor = 0.0;
};

// Full-batch gradient descent on the combined preference loss over a fixed
// seeded instance set, with the reference policy frozen at the initial
// snapshot. Deterministic per (config, seed): the task (contexts, responses,
// held-out set) and the sampler draws come from independently derived
// streams, so runs differing only in sampler/N share the same task.
ToyRunResult run_toy_training(const ToyTrainConfig& config);

// Single-instance helpers, exposed for tests and the gradient-check command.
double instance_total_loss(const ToyPolicy& policy, const ToyPolicy& reference,
                           const ToyInstance& instance,
                           const pl::DpoConfig& dpo);
Eigen::MatrixXd instance_total_grad(const ToyPolicy& policy,
                                    const ToyPolicy& reference,
                                    const ToyInstance& instance,
                                    const pl::DpoConfig& dpo);
double instance_margin(const ToyPolicy& policy, const ToyInstance& instance);

}  // namespace misp::toy
