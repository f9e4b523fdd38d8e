#include "misp/pl_dpo.hpp"

#include <cmath>
#include <string>

#include "misp/error.hpp"
#include "misp/numeric.hpp"

namespace misp::pl {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) {
    throw NumericError(std::string(what) + " must be finite");
  }
}

}  // namespace

void DpoConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("dpo config: beta must be > 0");
  if (lambda < 0.0) throw ConfigError("dpo config: lambda must be >= 0");
}

void PreferenceInstance::validate() const {
  require_finite(pos_logratio, "pos_logratio");
  if (neg_logratios.empty()) {
    throw DimensionError("instance: neg_logratios must be non-empty");
  }
  for (double v : neg_logratios) require_finite(v, "neg_logratio");
  if (text_pos_logratio.has_value() != text_neg_logratio.has_value()) {
    throw DataError("instance: text logratio pair must be both present or "
                    "both absent");
  }
  if (text_pos_logratio) require_finite(*text_pos_logratio, "text_pos_logratio");
  if (text_neg_logratio) require_finite(*text_neg_logratio, "text_neg_logratio");
  if (proposal_q) {
    if (proposal_q->size() != neg_logratios.size()) {
      throw DimensionError("instance: q must align with neg_logratios");
    }
    for (double q : *proposal_q) {
      require_finite(q, "proposal q");
      if (q <= 0.0) throw DomainError("instance: q entries must be > 0");
    }
  }
}

double pairwise_dpo_loss(double pos_logratio, double neg_logratio,
                         double beta) {
  require_finite(pos_logratio, "pos_logratio");
  require_finite(neg_logratio, "neg_logratio");
  // -log sigmoid(x) == softplus(-x)
  return softplus(beta * (neg_logratio - pos_logratio));
}

std::vector<double> advantages(const PreferenceInstance& instance,
                               double beta) {
  instance.validate();
  std::vector<double> a(instance.neg_logratios.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = beta * (instance.neg_logratios[i] - instance.pos_logratio);
  }
  return a;
}

double mn_loss(const PreferenceInstance& instance, double beta) {
  const std::vector<double> a = advantages(instance, beta);
  // -log sigmoid(-g) == softplus(g) with g = logsumexp(a).
  return softplus(logsumexp(a));
}

MnGradientReport mn_gradient_report(const PreferenceInstance& instance,
                                    double beta) {
  MnGradientReport report;
  report.advantages = advantages(instance, beta);
  report.preference_weights = softmax(report.advantages);
  report.sigma_factor = sigmoid(logsumexp(report.advantages));
  report.per_negative_delta_weights.resize(report.advantages.size());
  for (std::size_t i = 0; i < report.advantages.size(); ++i) {
    report.per_negative_delta_weights[i] =
        beta * report.sigma_factor * report.preference_weights[i];
  }
  return report;
}

double text_loss(const PreferenceInstance& instance, double beta) {
  instance.validate();
  if (!instance.has_text_pair()) {
    throw ConfigError("text_loss: instance has no text logratio pair");
  }
  return pairwise_dpo_loss(*instance.text_pos_logratio,
                           *instance.text_neg_logratio, beta);
}

double total_loss(const PreferenceInstance& instance,
                  const DpoConfig& config) {
  config.validate();
  const double img = mn_loss(instance, config.beta);
  if (config.lambda == 0.0) {
    return img;
  }
  if (!instance.has_text_pair()) {
    throw ConfigError("total_loss: lambda > 0 but no text logratio pair");
  }
  return img + config.lambda * text_loss(instance, config.beta);
}

namespace {

// Log-ratios for the policy's contexts against the frozen reference, and the
// advantages of contexts 1..N relative to context 0.
std::vector<double> context_advantages(const DifferentiablePolicy& policy,
                                       const std::vector<double>& ref_logprobs,
                                       double beta) {
  const std::size_t m = policy.num_contexts();
  if (m < 2) {
    throw DimensionError("gradient: policy needs a positive and >= 1 negative "
                         "context");
  }
  if (ref_logprobs.size() != m) {
    throw DimensionError("gradient: ref_logprobs misaligned with contexts");
  }
  const double pos_ratio = policy.log_prob(0) - ref_logprobs[0];
  std::vector<double> a(m - 1);
  for (std::size_t i = 1; i < m; ++i) {
    a[i - 1] = beta * ((policy.log_prob(i) - ref_logprobs[i]) - pos_ratio);
  }
  return a;
}

}  // namespace

Eigen::VectorXd mn_gradient_exact(const DifferentiablePolicy& policy,
                                  const std::vector<double>& ref_logprobs,
                                  double beta) {
  const std::vector<double> a = context_advantages(policy, ref_logprobs, beta);
  const std::vector<double> p = softmax(a);
  const double sigma_factor = sigmoid(logsumexp(a));

  const Eigen::VectorXd grad_pos = policy.log_prob_grad(0);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.num_params());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double w = beta * sigma_factor * p[i];
    grad += w * (policy.log_prob_grad(i + 1) - grad_pos);
  }
  return grad;
}

std::vector<double> is_weights(const std::vector<double>& advantages,
                               const std::vector<double>& proposal_q,
                               IsMode mode) {
  if (advantages.size() != proposal_q.size()) {
    throw DimensionError("is_weights: q misaligned with advantages");
  }
  if (advantages.empty()) {
    throw DimensionError("is_weights: empty subset");
  }
  for (double q : proposal_q) {
    if (!(q > 0.0)) throw DomainError("is_weights: q entries must be > 0");
  }

  std::vector<double> w(advantages.size());
  if (mode == IsMode::kLiteral) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = std::exp(advantages[i]) / proposal_q[i];
    }
    return w;
  }
  // Self-normalized: shift by the max advantage before exponentiating; the
  // shift cancels in the ratio.
  double m = advantages[0];
  for (double a : advantages) m = std::max(m, a);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(advantages[i] - m) / proposal_q[i];
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

Eigen::VectorXd mn_gradient_is(const DifferentiablePolicy& policy,
                               const std::vector<double>& ref_logprobs,
                               const std::vector<double>& proposal_q,
                               double beta, IsMode mode) {
  const std::vector<double> a = context_advantages(policy, ref_logprobs, beta);
  const std::vector<double> w = is_weights(a, proposal_q, mode);
  const double sigma_factor = sigmoid(logsumexp(a));

  const Eigen::VectorXd grad_pos = policy.log_prob_grad(0);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.num_params());
  for (std::size_t i = 0; i < a.size(); ++i) {
    grad += beta * sigma_factor * w[i] *
            (policy.log_prob_grad(i + 1) - grad_pos);
  }
  return grad;
}

}  // namespace misp::pl
