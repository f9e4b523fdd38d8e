#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace misp::sae {

enum class Optimizer { kAdam, kSgd };

struct SaeConfig {
  Eigen::Index input_dim = 0;  // 0 = infer from training data
  Eigen::Index hidden_dim = 128;
  double sparsity_weight = 1.0;     // gamma
  double target_activation = 0.05;  // rho
  double learning_rate = 1e-3;
  Eigen::Index batch_size = 64;
  Eigen::Index epochs = 50;
  std::uint64_t seed = 0;
  // Plain gradient descent is kept available for the gradient-check paths.
  Optimizer optimizer = Optimizer::kAdam;

  void validate() const;  // throws ConfigError
};

// Single hidden layer, sigmoid hidden activation, linear output. Sigmoid
// hidden units keep mean activations in (0,1), which the KL sparsity term
// requires.
struct SaeModel {
  Eigen::MatrixXd encoder_weights;  // hidden_dim x input_dim
  Eigen::VectorXd encoder_bias;     // hidden_dim
  Eigen::MatrixXd decoder_weights;  // input_dim x hidden_dim
  Eigen::VectorXd decoder_bias;     // input_dim
  SaeConfig config;

  Eigen::Index input_dim() const { return encoder_weights.cols(); }
  Eigen::Index hidden_dim() const { return encoder_weights.rows(); }

  // Flat parameter view in block order: encoder_weights (row-major),
  // encoder_bias, decoder_weights (row-major), decoder_bias. Used by the
  // finite-difference harness.
  Eigen::Index param_count() const;
  double get_param(Eigen::Index i) const;
  void set_param(Eigen::Index i, double v);
};

struct SaeBatchStats {
  Eigen::VectorXd mean_activation;  // rho_hat per hidden unit, clamped
  double reconstruction_loss = 0.0;
  double sparsity_loss = 0.0;
  double total() const { return reconstruction_loss + sparsity_loss; }
};

struct SaeGradient {
  Eigen::MatrixXd encoder_weights;
  Eigen::VectorXd encoder_bias;
  Eigen::MatrixXd decoder_weights;
  Eigen::VectorXd decoder_bias;

  Eigen::Index param_count() const;
  double get_param(Eigen::Index i) const;
};

struct SaeTrainResult {
  SaeModel model;
  // Full-dataset loss; index 0 is the seeded-initialization loss, index e
  // the loss after epoch e.
  std::vector<double> epoch_loss;
};

// rho_hat is clamped into [kRhoClamp, 1-kRhoClamp] before the KL term so the
// loss (and its gradient) stay finite when a unit saturates.
inline constexpr double kRhoClamp = 1e-6;

// Bernoulli KL(rho || rho_hat); both arguments must lie in (0,1).
double kl_sparsity(double rho, double rho_hat);

// code = sigmoid(W_e d + b_e); entries strictly inside (0,1).
Eigen::VectorXd encode(const SaeModel& model,
                       const Eigen::Ref<const Eigen::VectorXd>& d);
// Rows of `batch` are inputs; rows of the result are codes.
Eigen::MatrixXd encode_batch(const SaeModel& model,
                             const Eigen::Ref<const Eigen::MatrixXd>& batch);

// Affine reconstruction W_d c + b_d (linear output).
Eigen::VectorXd decode(const SaeModel& model,
                       const Eigen::Ref<const Eigen::VectorXd>& code);
Eigen::MatrixXd decode_batch(const SaeModel& model,
                             const Eigen::Ref<const Eigen::MatrixXd>& codes);

// Reconstruction term: batch mean of squared reconstruction error.
// Sparsity term: gamma * sum_j KL(rho || rho_hat_j) with rho_hat_j the
// batch-mean activation of unit j.
SaeBatchStats sae_loss(const SaeModel& model,
                       const Eigen::Ref<const Eigen::MatrixXd>& batch);

// Exact gradient of sae_loss().total() for all four parameter blocks,
// including the sparsity term's dependence on rho_hat through every batch
// element. Coordinates clamped by kRhoClamp get zero sparsity gradient.
SaeGradient sae_grad(const SaeModel& model,
                     const Eigen::Ref<const Eigen::MatrixXd>& batch);

// Seeded init: weights uniform in +-1/sqrt(fan_in) per block, zero biases.
SaeModel init_model(const SaeConfig& config);

// Deterministic mini-batch training: seeded init, seeded per-epoch shuffle,
// fixed-order batches (final partial batch included), Adam (0.9/0.999/1e-8)
// or plain SGD per config. Throws DivergedError naming the epoch if the
// dataset loss turns non-finite.
SaeTrainResult train(const SaeConfig& config,
                     const Eigen::Ref<const Eigen::MatrixXd>& dataset);

}  // namespace misp::sae
