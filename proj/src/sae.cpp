#include "misp/sae.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "misp/error.hpp"
#include "misp/numeric.hpp"
#include "misp/rng.hpp"

namespace misp::sae {

namespace {

void check_batch(const SaeModel& model,
                 const Eigen::Ref<const Eigen::MatrixXd>& batch) {
  if (batch.rows() == 0) {
    throw InsufficientDataError("sae: empty batch");
  }
  if (batch.cols() != model.input_dim()) {
    throw DimensionError("sae: batch dim " + std::to_string(batch.cols()) +
                         " does not match model input dim " +
                         std::to_string(model.input_dim()));
  }
}

Eigen::VectorXd clamped_mean_activation(
    const Eigen::Ref<const Eigen::MatrixXd>& codes) {
  Eigen::VectorXd rho_hat = codes.colwise().mean();
  return rho_hat.cwiseMax(kRhoClamp).cwiseMin(1.0 - kRhoClamp);
}

struct AdamState {
  Eigen::MatrixXd m_ew, v_ew, m_dw, v_dw;
  Eigen::VectorXd m_eb, v_eb, m_db, v_db;
  long step = 0;

  explicit AdamState(const SaeModel& model) {
    m_ew = Eigen::MatrixXd::Zero(model.encoder_weights.rows(),
                                 model.encoder_weights.cols());
    v_ew = m_ew;
    m_dw = Eigen::MatrixXd::Zero(model.decoder_weights.rows(),
                                 model.decoder_weights.cols());
    v_dw = m_dw;
    m_eb = Eigen::VectorXd::Zero(model.encoder_bias.size());
    v_eb = m_eb;
    m_db = Eigen::VectorXd::Zero(model.decoder_bias.size());
    v_db = m_db;
  }
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

template <typename P>
void adam_update(P& param, const P& grad, P& m, P& v, double lr, double bias1,
                 double bias2) {
  m = kBeta1 * m + (1.0 - kBeta1) * grad;
  v.array() = kBeta2 * v.array() + (1.0 - kBeta2) * grad.array().square();
  param.array() -=
      lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + kAdamEps);
}

}  // namespace

void SaeConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("sae config: hidden_dim must be >= 1");
  if (input_dim < 0) throw ConfigError("sae config: input_dim must be >= 0");
  if (sparsity_weight < 0.0) {
    throw ConfigError("sae config: sparsity_weight must be >= 0");
  }
  if (!(target_activation > 0.0 && target_activation < 1.0)) {
    throw ConfigError("sae config: target_activation must be in (0,1)");
  }
  if (!(learning_rate > 0.0)) {
    throw ConfigError("sae config: learning_rate must be > 0");
  }
  if (batch_size < 1) throw ConfigError("sae config: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("sae config: epochs must be >= 0");
}

Eigen::Index SaeModel::param_count() const {
  return encoder_weights.size() + encoder_bias.size() +
         decoder_weights.size() + decoder_bias.size();
}

namespace {

// Shared flat indexing for SaeModel / SaeGradient blocks.
template <typename T>
double flat_get(const T& t, Eigen::Index i) {
  const Eigen::Index h = t.encoder_weights.rows();
  const Eigen::Index d = t.encoder_weights.cols();
  if (i < h * d) return t.encoder_weights(i / d, i % d);
  i -= h * d;
  if (i < h) return t.encoder_bias(i);
  i -= h;
  if (i < d * h) return t.decoder_weights(i / h, i % h);
  i -= d * h;
  return t.decoder_bias(i);
}

}  // namespace

double SaeModel::get_param(Eigen::Index i) const { return flat_get(*this, i); }

void SaeModel::set_param(Eigen::Index i, double v) {
  const Eigen::Index h = encoder_weights.rows();
  const Eigen::Index d = encoder_weights.cols();
  if (i < h * d) {
    encoder_weights(i / d, i % d) = v;
    return;
  }
  i -= h * d;
  if (i < h) {
    encoder_bias(i) = v;
    return;
  }
  i -= h;
  if (i < d * h) {
    decoder_weights(i / h, i % h) = v;
    return;
  }
  i -= d * h;
  decoder_bias(i) = v;
}

Eigen::Index SaeGradient::param_count() const {
  return encoder_weights.size() + encoder_bias.size() +
         decoder_weights.size() + decoder_bias.size();
}

double SaeGradient::get_param(Eigen::Index i) const {
  return flat_get(*this, i);
}

double kl_sparsity(double rho, double rho_hat) {
  if (!(rho > 0.0 && rho < 1.0) || !(rho_hat > 0.0 && rho_hat < 1.0)) {
    throw DomainError("kl_sparsity: arguments must lie in (0,1)");
  }
  return rho * std::log(rho / rho_hat) +
         (1.0 - rho) * std::log((1.0 - rho) / (1.0 - rho_hat));
}

Eigen::VectorXd encode(const SaeModel& model,
                       const Eigen::Ref<const Eigen::VectorXd>& d) {
  if (d.size() != model.input_dim()) {
    throw DimensionError("encode: input length mismatch");
  }
  Eigen::VectorXd z = model.encoder_weights * d + model.encoder_bias;
  return z.unaryExpr([](double x) { return sigmoid(x); });
}

Eigen::MatrixXd encode_batch(const SaeModel& model,
                             const Eigen::Ref<const Eigen::MatrixXd>& batch) {
  check_batch(model, batch);
  Eigen::MatrixXd z =
      (batch * model.encoder_weights.transpose()).rowwise() +
      model.encoder_bias.transpose();
  return z.unaryExpr([](double x) { return sigmoid(x); });
}

Eigen::VectorXd decode(const SaeModel& model,
                       const Eigen::Ref<const Eigen::VectorXd>& code) {
  if (code.size() != model.hidden_dim()) {
    throw DimensionError("decode: code length mismatch");
  }
  return model.decoder_weights * code + model.decoder_bias;
}

Eigen::MatrixXd decode_batch(const SaeModel& model,
                             const Eigen::Ref<const Eigen::MatrixXd>& codes) {
  if (codes.cols() != model.hidden_dim()) {
    throw DimensionError("decode: code dim mismatch");
  }
  return (codes * model.decoder_weights.transpose()).rowwise() +
         model.decoder_bias.transpose();
}

SaeBatchStats sae_loss(const SaeModel& model,
                       const Eigen::Ref<const Eigen::MatrixXd>& batch) {
  check_batch(model, batch);
  const Eigen::MatrixXd codes = encode_batch(model, batch);
  const Eigen::MatrixXd recon = decode_batch(model, codes);

  SaeBatchStats stats;
  stats.reconstruction_loss =
      (recon - batch).rowwise().squaredNorm().mean();
  stats.mean_activation = clamped_mean_activation(codes);

  const double rho = model.config.target_activation;
  double kl = 0.0;
  for (Eigen::Index j = 0; j < stats.mean_activation.size(); ++j) {
    kl += kl_sparsity(rho, stats.mean_activation(j));
  }
  stats.sparsity_loss = model.config.sparsity_weight * kl;
  return stats;
}

SaeGradient sae_grad(const SaeModel& model,
                     const Eigen::Ref<const Eigen::MatrixXd>& batch) {
  check_batch(model, batch);
  const double n = static_cast<double>(batch.rows());
  const double rho = model.config.target_activation;
  const double gamma = model.config.sparsity_weight;

  const Eigen::MatrixXd codes = encode_batch(model, batch);   // n x H
  const Eigen::MatrixXd recon = decode_batch(model, codes);   // n x D
  const Eigen::MatrixXd err = recon - batch;                  // n x D

  SaeGradient g;
  // d/dR of mean squared error is 2*err/n.
  g.decoder_weights = (2.0 / n) * err.transpose() * codes;    // D x H
  g.decoder_bias = (2.0 / n) * err.colwise().sum().transpose();

  // Backprop into codes: reconstruction path plus the KL term through the
  // batch mean rho_hat_j = mean_k codes(k,j).
  Eigen::MatrixXd dcodes = (2.0 / n) * err * model.decoder_weights;  // n x H

  const Eigen::VectorXd rho_hat_raw = codes.colwise().mean();
  for (Eigen::Index j = 0; j < codes.cols(); ++j) {
    const double rh = rho_hat_raw(j);
    if (rh <= kRhoClamp || rh >= 1.0 - kRhoClamp) {
      continue;  // clamped: flat in rho_hat
    }
    const double dkl = -rho / rh + (1.0 - rho) / (1.0 - rh);
    dcodes.col(j).array() += gamma * dkl / n;
  }

  // Through the sigmoid.
  const Eigen::MatrixXd dz =
      dcodes.array() * codes.array() * (1.0 - codes.array());

  g.encoder_weights = dz.transpose() * batch;                 // H x D
  g.encoder_bias = dz.colwise().sum().transpose();
  return g;
}

SaeModel init_model(const SaeConfig& config) {
  config.validate();
  if (config.input_dim < 1) {
    throw ConfigError("init_model: input_dim must be set");
  }
  Rng rng(config.seed);

  SaeModel model;
  model.config = config;
  const Eigen::Index h = config.hidden_dim;
  const Eigen::Index d = config.input_dim;

  const double enc_scale = 1.0 / std::sqrt(static_cast<double>(d));
  model.encoder_weights.resize(h, d);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      model.encoder_weights(i, j) = rng.uniform(-enc_scale, enc_scale);
    }
  }
  // Encoder biases start at logit(rho) so units open at the target
  // activation; zero biases would need ~|logit(rho)| of Adam travel, more
  // than default-rate training can cover.
  const double rho = config.target_activation;
  model.encoder_bias = Eigen::VectorXd::Constant(
      h, std::log(rho / (1.0 - rho)));

  const double dec_scale = 1.0 / std::sqrt(static_cast<double>(h));
  model.decoder_weights.resize(d, h);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < h; ++j) {
      model.decoder_weights(i, j) = rng.uniform(-dec_scale, dec_scale);
    }
  }
  model.decoder_bias = Eigen::VectorXd::Zero(d);
  return model;
}

SaeTrainResult train(const SaeConfig& config,
                     const Eigen::Ref<const Eigen::MatrixXd>& dataset) {
  if (dataset.rows() == 0) {
    throw InsufficientDataError("train: empty dataset");
  }
  if (!dataset.allFinite()) {
    throw NumericError("train: dataset contains non-finite entries");
  }

  SaeConfig cfg = config;
  if (cfg.input_dim == 0) {
    cfg.input_dim = dataset.cols();
  } else if (cfg.input_dim != dataset.cols()) {
    throw DimensionError("train: dataset dim does not match config input_dim");
  }
  cfg.validate();

  SaeTrainResult result;
  result.model = init_model(cfg);
  SaeModel& model = result.model;

  result.epoch_loss.push_back(sae_loss(model, dataset).total());

  Rng shuffle_rng(Rng::derive(cfg.seed, 0x5ae5ae));
  AdamState adam(model);
  const Eigen::Index n = dataset.rows();

  for (Eigen::Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> perm =
        shuffle_rng.permutation(static_cast<std::size_t>(n));

    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index b = std::min(cfg.batch_size, n - start);
      Eigen::MatrixXd batch(b, dataset.cols());
      for (Eigen::Index r = 0; r < b; ++r) {
        batch.row(r) = dataset.row(static_cast<Eigen::Index>(perm[start + r]));
      }

      const SaeGradient g = sae_grad(model, batch);
      if (cfg.optimizer == Optimizer::kAdam) {
        adam.step += 1;
        const double bias1 = 1.0 - std::pow(kBeta1, adam.step);
        const double bias2 = 1.0 - std::pow(kBeta2, adam.step);
        adam_update(model.encoder_weights, g.encoder_weights, adam.m_ew,
                    adam.v_ew, cfg.learning_rate, bias1, bias2);
        adam_update(model.encoder_bias, g.encoder_bias, adam.m_eb, adam.v_eb,
                    cfg.learning_rate, bias1, bias2);
        adam_update(model.decoder_weights, g.decoder_weights, adam.m_dw,
                    adam.v_dw, cfg.learning_rate, bias1, bias2);
        adam_update(model.decoder_bias, g.decoder_bias, adam.m_db, adam.v_db,
                    cfg.learning_rate, bias1, bias2);
      } else {
        model.encoder_weights -= cfg.learning_rate * g.encoder_weights;
        model.encoder_bias -= cfg.learning_rate * g.encoder_bias;
        model.decoder_weights -= cfg.learning_rate * g.decoder_weights;
        model.decoder_bias -= cfg.learning_rate * g.decoder_bias;
      }
    }

    const double loss = sae_loss(model, dataset).total();
    if (!std::isfinite(loss)) {
      throw DivergedError("train: non-finite loss at epoch " +
                          std::to_string(epoch));
    }
    result.epoch_loss.push_back(loss);
  }
  return result;
}

}  // namespace misp::sae
