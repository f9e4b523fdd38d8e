#include "misp/toy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "misp/error.hpp"
#include "misp/numeric.hpp"
#include "misp/rng.hpp"

namespace misp::toy {

namespace {

void check_context(const ToyPolicy& policy, const ToyContext& context) {
  if (context.response.empty()) {
    throw DimensionError("toy context: empty response");
  }
  if (context.features.size() != policy.weights.cols()) {
    throw DimensionError("toy context: feature dim mismatch");
  }
  for (int t : context.response) {
    if (t < 0 || t >= policy.weights.rows()) {
      throw DomainError("toy context: token index out of range");
    }
  }
}

Eigen::VectorXd log_softmax_logits(const ToyPolicy& policy,
                                   const ToyContext& context) {
  Eigen::VectorXd logits = policy.weights * context.features;
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

}  // namespace

double logprob(const ToyPolicy& policy, const ToyContext& context) {
  check_context(policy, context);
  const Eigen::VectorXd lp = log_softmax_logits(policy, context);
  double total = 0.0;
  for (int t : context.response) total += lp(t);
  return total;
}

Eigen::MatrixXd logprob_grad(const ToyPolicy& policy,
                             const ToyContext& context) {
  check_context(policy, context);
  const Eigen::VectorXd lp = log_softmax_logits(policy, context);
  const Eigen::VectorXd p = lp.array().exp();

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(policy.weights.rows());
  for (int t : context.response) counts(t) += 1.0;
  const double total = static_cast<double>(context.response.size());

  return (counts - total * p) * context.features.transpose();
}

// ---------------------------------------------------------------------------

void PlantedFactorSpec::validate() const {
  if (num_factors < 2) {
    throw ConfigError("planted spec: num_factors must be >= 2");
  }
  if (samples_per_factor < 1) {
    throw ConfigError("planted spec: samples_per_factor must be >= 1");
  }
  if (factor_noise < 0.0) {
    throw ConfigError("planted spec: factor_noise must be >= 0");
  }
  if (dim < num_factors) {
    throw DimensionError("planted spec: dim must be >= num_factors");
  }
}

PlantedPool make_planted_pool(const PlantedFactorSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  PlantedPool pool;
  pool.centroids = Eigen::MatrixXd::Zero(spec.num_factors, spec.dim);
  for (int f = 0; f < spec.num_factors; ++f) {
    pool.centroids(f, f) = 1.0;  // orthogonal unit directions
  }

  const int n = spec.num_factors * spec.samples_per_factor;
  pool.diffs.resize(n, spec.dim);
  pool.labels.reserve(n);
  pool.ids.reserve(n);
  int row = 0;
  for (int f = 0; f < spec.num_factors; ++f) {
    for (int s = 0; s < spec.samples_per_factor; ++s, ++row) {
      Eigen::VectorXd v = pool.centroids.row(f).transpose();
      for (int j = 0; j < spec.dim; ++j) {
        v(j) += spec.factor_noise * rng.normal();
      }
      pool.diffs.row(row) = v.transpose();
      pool.labels.push_back(f);
      pool.ids.push_back(std::to_string(row));
    }
  }
  return pool;
}

void SparseDataSpec::validate() const {
  if (rows < 1) throw ConfigError("sparse spec: rows must be >= 1");
  if (dim < 1) throw ConfigError("sparse spec: dim must be >= 1");
  if (num_atoms < 1) throw ConfigError("sparse spec: num_atoms must be >= 1");
  if (atoms_per_sample < 1 || atoms_per_sample > num_atoms) {
    throw ConfigError("sparse spec: atoms_per_sample must be in [1, num_atoms]");
  }
  if (noise < 0.0) throw ConfigError("sparse spec: noise must be >= 0");
}

Eigen::MatrixXd make_sparse_dataset(const SparseDataSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  Eigen::MatrixXd atoms(spec.num_atoms, spec.dim);
  for (int a = 0; a < spec.num_atoms; ++a) {
    for (int j = 0; j < spec.dim; ++j) atoms(a, j) = rng.normal();
    atoms.row(a) /= atoms.row(a).norm();
  }

  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(spec.rows, spec.dim);
  std::vector<int> chosen;
  for (int r = 0; r < spec.rows; ++r) {
    chosen.clear();
    while (static_cast<int>(chosen.size()) < spec.atoms_per_sample) {
      const int a = static_cast<int>(rng.below(spec.num_atoms));
      if (std::find(chosen.begin(), chosen.end(), a) == chosen.end()) {
        chosen.push_back(a);
      }
    }
    for (int a : chosen) {
      const double sign = (rng.next_u64() & 1u) ? 1.0 : -1.0;
      data.row(r) += sign * rng.uniform(0.5, 1.5) * atoms.row(a);
    }
    if (spec.noise > 0.0) {
      for (int j = 0; j < spec.dim; ++j) {
        data(r, j) += spec.noise * rng.normal();
      }
    }
  }
  return data;
}

// ---------------------------------------------------------------------------

void ToyTrainConfig::validate() const {
  dpo.validate();
  if (num_negatives < 1) {
    throw ConfigError("toy config: num_negatives must be >= 1");
  }
  if (steps < 0) throw ConfigError("toy config: steps must be >= 0");
  if (!(learning_rate > 0.0)) {
    throw ConfigError("toy config: learning_rate must be > 0");
  }
  if (num_factors < 2) {
    throw ConfigError("toy config: num_factors must be >= 2");
  }
  if (feature_dim < 1 + num_factors) {
    throw DimensionError("toy config: feature_dim must be >= 1 + num_factors");
  }
  if (vocab_size < 2) throw ConfigError("toy config: vocab_size must be >= 2");
  if (response_length < 1) {
    throw ConfigError("toy config: response_length must be >= 1");
  }
  if (num_train_instances < 1 || num_heldout_instances < 1) {
    throw ConfigError("toy config: instance counts must be >= 1");
  }
  if (context_noise < 0.0) {
    throw ConfigError("toy config: context_noise must be >= 0");
  }
}

namespace {

std::vector<int> draw_response(Rng& rng, int vocab, int length) {
  std::vector<int> r(length);
  for (int t = 0; t < length; ++t) {
    r[t] = static_cast<int>(rng.below(vocab));
  }
  return r;
}

// Positive context: bias slot 1, factor slots 0, Gaussian noise everywhere.
Eigen::VectorXd draw_positive_features(Rng& rng, const ToyTrainConfig& cfg) {
  Eigen::VectorXd f(cfg.feature_dim);
  for (int j = 0; j < cfg.feature_dim; ++j) {
    f(j) = cfg.context_noise * rng.normal();
  }
  f(0) += 1.0;
  return f;
}

ToyContext negative_context(const ToyContext& positive, int factor,
                            const ToyTrainConfig& cfg) {
  ToyContext neg = positive;
  neg.features(1 + factor) += cfg.factor_shift;
  return neg;
}

std::vector<int> sampler_factors(NegativeSampler sampler, int n,
                                 int num_factors, Rng& rng) {
  std::vector<int> factors(n);
  switch (sampler) {
    case NegativeSampler::kDiverse:
      for (int i = 0; i < n; ++i) factors[i] = i % num_factors;
      break;
    case NegativeSampler::kSingleFactor:
      std::fill(factors.begin(), factors.end(), 0);
      break;
    case NegativeSampler::kRandom:
      for (int i = 0; i < n; ++i) {
        factors[i] = static_cast<int>(rng.below(num_factors));
      }
      break;
  }
  return factors;
}

pl::PreferenceInstance instance_logratios(const ToyPolicy& policy,
                                          const ToyPolicy& reference,
                                          const ToyInstance& instance) {
  pl::PreferenceInstance pref;
  pref.pos_logratio =
      logprob(policy, instance.positive) - logprob(reference, instance.positive);
  pref.neg_logratios.reserve(instance.negatives.size());
  for (const ToyContext& neg : instance.negatives) {
    pref.neg_logratios.push_back(logprob(policy, neg) -
                                 logprob(reference, neg));
  }
  ToyContext rejected = instance.positive;
  rejected.response = instance.rejected_response;
  pref.text_pos_logratio = pref.pos_logratio;
  pref.text_neg_logratio =
      logprob(policy, rejected) - logprob(reference, rejected);
  return pref;
}

double distinct_factors(const ToyInstance& instance) {
  const std::set<int> s(instance.negative_factors.begin(),
                        instance.negative_factors.end());
  return static_cast<double>(s.size());
}

}  // namespace

double instance_total_loss(const ToyPolicy& policy, const ToyPolicy& reference,
                           const ToyInstance& instance,
                           const pl::DpoConfig& dpo) {
  return pl::total_loss(instance_logratios(policy, reference, instance), dpo);
}

Eigen::MatrixXd instance_total_grad(const ToyPolicy& policy,
                                    const ToyPolicy& reference,
                                    const ToyInstance& instance,
                                    const pl::DpoConfig& dpo) {
  // Image side: Lemma-style assembly over (positive, negatives).
  std::vector<const ToyContext*> contexts;
  contexts.push_back(&instance.positive);
  for (const ToyContext& neg : instance.negatives) contexts.push_back(&neg);
  ToyInstancePolicy adapter(policy, contexts);

  std::vector<double> refs(contexts.size());
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    refs[i] = logprob(reference, *contexts[i]);
  }
  Eigen::VectorXd flat = pl::mn_gradient_exact(adapter, refs, dpo.beta);
  Eigen::MatrixXd grad = Eigen::Map<const Eigen::MatrixXd>(
      flat.data(), policy.weights.rows(), policy.weights.cols());

  // Text side: d/dW of softplus(-beta*(u - v)) with u, v the preferred and
  // rejected log-ratios under the positive image.
  if (dpo.lambda > 0.0) {
    ToyContext rejected = instance.positive;
    rejected.response = instance.rejected_response;
    const double u =
        logprob(policy, instance.positive) -
        logprob(reference, instance.positive);
    const double v = logprob(policy, rejected) - logprob(reference, rejected);
    const double w = dpo.beta * sigmoid(-dpo.beta * (u - v));
    grad += dpo.lambda * w *
            (logprob_grad(policy, rejected) -
             logprob_grad(policy, instance.positive));
  }
  return grad;
}

double instance_margin(const ToyPolicy& policy, const ToyInstance& instance) {
  double best_neg = -std::numeric_limits<double>::infinity();
  for (const ToyContext& neg : instance.negatives) {
    best_neg = std::max(best_neg, logprob(policy, neg));
  }
  return logprob(policy, instance.positive) - best_neg;
}

ToyRunResult run_toy_training(const ToyTrainConfig& config) {
  config.validate();

  // Independent streams: the task stream is consumed identically regardless
  // of sampler or N, so runs on one seed form matched pairs.
  Rng task_rng(Rng::derive(config.seed, 1));
  Rng neg_rng(Rng::derive(config.seed, 2));
  Rng init_rng(Rng::derive(config.seed, 3));

  // One preferred response per run, shared across instances. Per-instance
  // responses would average the factor discounts uniformly over the
  // vocabulary and leave the softmax ratios unchanged.
  const std::vector<int> response =
      draw_response(task_rng, config.vocab_size, config.response_length);

  std::vector<ToyInstance> train(config.num_train_instances);
  for (ToyInstance& inst : train) {
    inst.positive.features = draw_positive_features(task_rng, config);
    inst.positive.response = response;
    do {
      inst.rejected_response =
          draw_response(task_rng, config.vocab_size, config.response_length);
    } while (inst.rejected_response == response);
    inst.negative_factors = sampler_factors(
        config.sampler, config.num_negatives, config.num_factors, neg_rng);
    for (int f : inst.negative_factors) {
      inst.negatives.push_back(negative_context(inst.positive, f, config));
    }
  }

  std::vector<Eigen::VectorXd> heldout_features(config.num_heldout_instances);
  for (Eigen::VectorXd& f : heldout_features) {
    f = draw_positive_features(task_rng, config);
  }

  ToyRunResult result;
  result.policy.weights =
      Eigen::MatrixXd::Zero(config.vocab_size, config.feature_dim);
  for (Eigen::Index i = 0; i < result.policy.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < result.policy.weights.cols(); ++j) {
      result.policy.weights(i, j) = config.init_scale * init_rng.normal();
    }
  }
  result.reference = result.policy;

  const double n = static_cast<double>(train.size());
  const auto record = [&](int step) {
    StepMetrics m;
    m.step = step;
    for (const ToyInstance& inst : train) {
      m.loss += instance_total_loss(result.policy, result.reference, inst,
                                    config.dpo) / n;
      m.margin += instance_margin(result.policy, inst) / n;
      m.coverage += distinct_factors(inst) / n;
    }
    if (!std::isfinite(m.loss)) {
      throw DivergedError("toy training: non-finite loss at step " +
                          std::to_string(step));
    }
    result.trace.push_back(m);
  };

  record(0);
  for (int step = 1; step <= config.steps; ++step) {
    Eigen::MatrixXd grad =
        Eigen::MatrixXd::Zero(config.vocab_size, config.feature_dim);
    for (const ToyInstance& inst : train) {
      grad += instance_total_grad(result.policy, result.reference, inst,
                                  config.dpo) / n;
    }
    result.policy.weights -= config.learning_rate * grad;
    record(step);
  }

  // Held-out margins. "All": one negative per factor. "Off-factor": factors
  // other than 0, the factor the single-negative sampler trains against.
  const auto heldout_margin = [&](bool include_factor0) {
    double total = 0.0;
    for (const Eigen::VectorXd& features : heldout_features) {
      ToyInstance inst;
      inst.positive.features = features;
      inst.positive.response = response;
      for (int f = include_factor0 ? 0 : 1; f < config.num_factors; ++f) {
        inst.negative_factors.push_back(f);
        inst.negatives.push_back(negative_context(inst.positive, f, config));
      }
      total += instance_margin(result.policy, inst);
    }
    return total / static_cast<double>(heldout_features.size());
  };
  result.heldout_margin_all = heldout_margin(true);
  result.heldout_margin_off_factor = heldout_margin(false);
  return result;
}

}  // namespace misp::toy
