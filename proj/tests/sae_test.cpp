#include <cmath>
#include <doctest.h>

#include "misp/error.hpp"
#include "misp/gradcheck.hpp"
#include "misp/rng.hpp"
#include "misp/sae.hpp"

namespace sae = misp::sae;
using misp::Rng;

namespace {

sae::SaeModel random_model(Eigen::Index input_dim, Eigen::Index hidden_dim,
                           double gamma, std::uint64_t seed,
                           bool jitter_biases = true) {
  sae::SaeConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden_dim = hidden_dim;
  cfg.sparsity_weight = gamma;
  cfg.seed = seed;
  sae::SaeModel model = sae::init_model(cfg);
  if (jitter_biases) {
    Rng rng(Rng::derive(seed, 0xb1a5));
    for (Eigen::Index i = 0; i < model.encoder_bias.size(); ++i) {
      model.encoder_bias(i) += 0.3 * rng.normal();
    }
    for (Eigen::Index i = 0; i < model.decoder_bias.size(); ++i) {
      model.decoder_bias(i) = 0.3 * rng.normal();
    }
  }
  return model;
}

Eigen::MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols,
                             std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  }
  return m;
}

double scalar_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straightforward loop reimplementation of the batch loss, used as the
// oracle for sae_loss and score paths.
double oracle_loss(const sae::SaeModel& m, const Eigen::MatrixXd& batch) {
  const Eigen::Index n = batch.rows();
  const Eigen::Index d = m.input_dim();
  const Eigen::Index h = m.hidden_dim();

  double recon = 0.0;
  std::vector<double> rho_hat(h, 0.0);
  for (Eigen::Index r = 0; r < n; ++r) {
    std::vector<double> code(h);
    for (Eigen::Index j = 0; j < h; ++j) {
      double z = m.encoder_bias(j);
      for (Eigen::Index c = 0; c < d; ++c) {
        z += m.encoder_weights(j, c) * batch(r, c);
      }
      code[j] = scalar_sigmoid(z);
      rho_hat[j] += code[j] / double(n);
    }
    for (Eigen::Index c = 0; c < d; ++c) {
      double out = m.decoder_bias(c);
      for (Eigen::Index j = 0; j < h; ++j) {
        out += m.decoder_weights(c, j) * code[j];
      }
      const double e = out - batch(r, c);
      recon += e * e / double(n);
    }
  }
  const double rho = m.config.target_activation;
  double kl = 0.0;
  for (Eigen::Index j = 0; j < h; ++j) {
    double rh = std::min(std::max(rho_hat[j], sae::kRhoClamp),
                         1.0 - sae::kRhoClamp);
    kl += rho * std::log(rho / rh) +
          (1.0 - rho) * std::log((1.0 - rho) / (1.0 - rh));
  }
  return recon + m.config.sparsity_weight * kl;
}

}  // namespace

TEST_SUITE("sae") {

TEST_CASE("encode is sigmoid(0)=0.5 for a zero model") {
  sae::SaeModel m;
  m.config.input_dim = 3;
  m.config.hidden_dim = 2;
  m.encoder_weights = Eigen::MatrixXd::Zero(2, 3);
  m.encoder_bias = Eigen::VectorXd::Zero(2);
  m.decoder_weights = Eigen::MatrixXd::Zero(3, 2);
  m.decoder_bias = Eigen::VectorXd::Zero(3);

  Eigen::VectorXd d(3);
  d << 4, -7, 2;
  CHECK(sae::encode(m, d) == Eigen::VectorXd::Constant(2, 0.5));
  CHECK(sae::encode(m, Eigen::VectorXd::Zero(3)) ==
        Eigen::VectorXd::Constant(2, 0.5));
}

TEST_CASE("encode matches scalar recomputation") {
  const sae::SaeModel m = random_model(10, 6, 1.0, 21);
  const Eigen::MatrixXd batch = random_batch(4, 10, 22);
  const Eigen::MatrixXd codes = sae::encode_batch(m, batch);
  for (Eigen::Index r = 0; r < 4; ++r) {
    const Eigen::VectorXd single = sae::encode(m, batch.row(r).transpose());
    for (Eigen::Index j = 0; j < 6; ++j) {
      double z = m.encoder_bias(j);
      for (Eigen::Index c = 0; c < 10; ++c) {
        z += m.encoder_weights(j, c) * batch(r, c);
      }
      CHECK(std::abs(codes(r, j) - scalar_sigmoid(z)) <= 1e-12);
      CHECK(std::abs(single(j) - scalar_sigmoid(z)) <= 1e-12);
      CHECK(codes(r, j) > 0.0);
      CHECK(codes(r, j) < 1.0);
    }
  }
}

TEST_CASE("decode is affine") {
  const sae::SaeModel m = random_model(8, 5, 1.0, 33);
  Rng rng(34);
  Eigen::VectorXd c1(5), c2(5);
  for (Eigen::Index j = 0; j < 5; ++j) {
    c1(j) = rng.uniform();
    c2(j) = rng.uniform();
  }
  const double a = 0.3125;
  const Eigen::VectorXd lhs = sae::decode(m, a * c1 + (1.0 - a) * c2);
  const Eigen::VectorXd rhs =
      a * sae::decode(m, c1) + (1.0 - a) * sae::decode(m, c2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("decode zero and identity cases") {
  sae::SaeModel m;
  m.config.input_dim = 3;
  m.config.hidden_dim = 3;
  m.encoder_weights = Eigen::MatrixXd::Zero(3, 3);
  m.encoder_bias = Eigen::VectorXd::Zero(3);
  m.decoder_weights = Eigen::MatrixXd::Identity(3, 3);
  m.decoder_bias = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd c(3);
  c << 0.2, 0.5, 0.9;
  CHECK(sae::decode(m, c) == c);
  m.decoder_weights.setZero();
  CHECK(sae::decode(m, c).isZero(0.0));
  CHECK_THROWS_AS(sae::decode(m, c.head(2)), misp::DimensionError);
}

TEST_CASE("kl_sparsity closed form") {
  CHECK(sae::kl_sparsity(0.05, 0.05) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(sae::kl_sparsity(0.5, 0.5) == doctest::Approx(0.0).epsilon(1e-15));
  // Frozen from a 40-digit independent evaluation of the closed form.
  CHECK(sae::kl_sparsity(0.05, 0.5) ==
        doctest::Approx(0.4946319372140728).epsilon(1e-12));
  CHECK_THROWS_AS(sae::kl_sparsity(0.0, 0.5), misp::DomainError);
  CHECK_THROWS_AS(sae::kl_sparsity(0.5, 1.0), misp::DomainError);
}

TEST_CASE("kl_sparsity is nonnegative and zero only at rho") {
  for (double rho = 0.02; rho < 1.0; rho += 0.07) {
    for (double rh = 0.02; rh < 1.0; rh += 0.07) {
      const double kl = sae::kl_sparsity(rho, rh);
      if (std::abs(rho - rh) < 1e-12) {
        CHECK(std::abs(kl) <= 1e-12);
      } else {
        CHECK(kl > 0.0);
      }
    }
  }
}

TEST_CASE("sae_loss vanishes for a perfect constant autoencoder") {
  const double rho = 0.05;
  sae::SaeModel m;
  m.config.input_dim = 4;
  m.config.hidden_dim = 3;
  m.config.target_activation = rho;
  m.config.sparsity_weight = 1.0;
  m.encoder_weights = Eigen::MatrixXd::Zero(3, 4);
  m.encoder_bias =
      Eigen::VectorXd::Constant(3, std::log(rho / (1.0 - rho)));
  m.decoder_weights = Eigen::MatrixXd::Zero(4, 3);
  Eigen::VectorXd x(4);
  x << 1, -2, 0.5, 3;
  m.decoder_bias = x;

  Eigen::MatrixXd batch(2, 4);
  batch.row(0) = x.transpose();
  batch.row(1) = x.transpose();
  const sae::SaeBatchStats stats = sae::sae_loss(m, batch);
  CHECK(stats.reconstruction_loss <= 1e-24);
  CHECK(stats.sparsity_loss <= 1e-12);
  CHECK(stats.total() <= 1e-12);
}

TEST_CASE("sae_loss of the zero model on zero data with rho=0.5") {
  sae::SaeModel m;
  m.config.input_dim = 2;
  m.config.hidden_dim = 2;
  m.config.target_activation = 0.5;
  m.encoder_weights = Eigen::MatrixXd::Zero(2, 2);
  m.encoder_bias = Eigen::VectorXd::Zero(2);
  m.decoder_weights = Eigen::MatrixXd::Zero(2, 2);
  m.decoder_bias = Eigen::VectorXd::Zero(2);
  const sae::SaeBatchStats stats =
      sae::sae_loss(m, Eigen::MatrixXd::Zero(3, 2));
  CHECK(stats.reconstruction_loss == 0.0);
  CHECK(stats.sparsity_loss <= 1e-15);
  CHECK(stats.mean_activation == Eigen::VectorXd::Constant(2, 0.5));
}

TEST_CASE("sae_loss matches the oracle reimplementation") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const sae::SaeModel m = random_model(12, 7, 1.5, seed);
    const Eigen::MatrixXd batch = random_batch(9, 12, seed + 100);
    const double got = sae::sae_loss(m, batch).total();
    const double expected = oracle_loss(m, batch);
    CHECK(std::abs(got - expected) <= 1e-10 * std::max(1.0, expected));
  }
}

TEST_CASE("sae_loss rejects empty batches and bad dims") {
  const sae::SaeModel m = random_model(4, 3, 1.0, 5);
  CHECK_THROWS_AS(sae::sae_loss(m, Eigen::MatrixXd(0, 4)),
                  misp::InsufficientDataError);
  CHECK_THROWS_AS(sae::sae_loss(m, Eigen::MatrixXd::Zero(2, 5)),
                  misp::DimensionError);
}

TEST_CASE("sae_grad is zero at a perfect reconstruction with gamma=0") {
  sae::SaeModel m;
  m.config.input_dim = 4;
  m.config.hidden_dim = 2;
  m.config.sparsity_weight = 0.0;
  m.encoder_weights = Eigen::MatrixXd::Zero(2, 4);
  m.encoder_bias = Eigen::VectorXd::Zero(2);
  m.decoder_weights = Eigen::MatrixXd::Zero(4, 2);
  Eigen::VectorXd x(4);
  x << 2, -1, 0.25, 4;
  m.decoder_bias = x;
  Eigen::MatrixXd batch(3, 4);
  batch.row(0) = x.transpose();
  batch.row(1) = x.transpose();
  batch.row(2) = x.transpose();

  const sae::SaeGradient g = sae::sae_grad(m, batch);
  for (Eigen::Index i = 0; i < g.param_count(); ++i) {
    CHECK(g.get_param(i) == 0.0);
  }
}

TEST_CASE("sae_grad matches finite differences across gammas") {
  for (const double gamma : {0.0, 1.0, 10.0}) {
    const sae::SaeModel model =
        random_model(10, 8, gamma, 40 + std::uint64_t(gamma));
    const Eigen::MatrixXd batch = random_batch(6, 10, 50 + std::uint64_t(gamma));
    const sae::SaeGradient analytic = sae::sae_grad(model, batch);

    const Eigen::Index count = model.param_count();
    Eigen::VectorXd x0(count), flat(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      x0(i) = model.get_param(i);
      flat(i) = analytic.get_param(i);
    }

    // >= 200 sampled coordinates per the contract; the model is small enough
    // to afford every coordinate.
    sae::SaeModel probe = model;
    const auto objective = [&](const Eigen::VectorXd& x) {
      for (Eigen::Index i = 0; i < count; ++i) probe.set_param(i, x(i));
      return sae::sae_loss(probe, batch).total();
    };
    const misp::gradcheck::Result res =
        misp::gradcheck::check(objective, x0, flat);
    INFO("gamma=", gamma, " worst index ", res.worst_index, " analytic ",
         res.worst_analytic, " numeric ", res.worst_numeric);
    CHECK(res.max_rel_error < 1e-5);
  }
}

TEST_CASE("sae_grad is invariant under batch duplication") {
  const sae::SaeModel m = random_model(6, 4, 2.0, 77);
  const Eigen::MatrixXd batch = random_batch(5, 6, 78);
  Eigen::MatrixXd doubled(10, 6);
  doubled << batch, batch;
  const sae::SaeGradient g1 = sae::sae_grad(m, batch);
  const sae::SaeGradient g2 = sae::sae_grad(m, doubled);
  for (Eigen::Index i = 0; i < g1.param_count(); ++i) {
    CHECK(g1.get_param(i) ==
          doctest::Approx(g2.get_param(i)).epsilon(1e-12));
  }
}

TEST_CASE("training converges on a single repeated vector with gamma=0") {
  sae::SaeConfig cfg;
  cfg.input_dim = 12;
  cfg.hidden_dim = 16;
  cfg.sparsity_weight = 0.0;
  cfg.epochs = 500;
  cfg.seed = 3;
  Eigen::MatrixXd data(8, 12);
  const Eigen::MatrixXd row = random_batch(1, 12, 5);
  for (Eigen::Index r = 0; r < 8; ++r) data.row(r) = row;

  const sae::SaeTrainResult result = sae::train(cfg, data);
  CHECK(result.epoch_loss.back() < 1e-6);
}

TEST_CASE("training is deterministic per seed") {
  sae::SaeConfig cfg;
  cfg.hidden_dim = 12;
  cfg.epochs = 8;
  cfg.seed = 9;
  const Eigen::MatrixXd data = random_batch(40, 10, 60);
  const sae::SaeTrainResult a = sae::train(cfg, data);
  const sae::SaeTrainResult b = sae::train(cfg, data);
  CHECK(a.model.encoder_weights == b.model.encoder_weights);
  CHECK(a.model.encoder_bias == b.model.encoder_bias);
  CHECK(a.model.decoder_weights == b.model.decoder_weights);
  CHECK(a.model.decoder_bias == b.model.decoder_bias);
  CHECK(a.epoch_loss == b.epoch_loss);

  sae::SaeConfig other = cfg;
  other.seed = 10;
  const sae::SaeTrainResult c = sae::train(other, data);
  CHECK(a.model.encoder_weights != c.model.encoder_weights);
}

TEST_CASE("training reduces the loss on sparse synthetic data") {
  sae::SaeConfig cfg;
  cfg.hidden_dim = 32;
  cfg.epochs = 10;
  cfg.seed = 4;
  const Eigen::MatrixXd data = random_batch(200, 16, 61);
  const sae::SaeTrainResult result = sae::train(cfg, data);
  REQUIRE(result.epoch_loss.size() == 11);
  for (double loss : result.epoch_loss) CHECK(std::isfinite(loss));
  CHECK(result.epoch_loss.back() <= result.epoch_loss.front());
}

TEST_CASE("training diverges loudly at an absurd learning rate") {
  sae::SaeConfig cfg;
  cfg.hidden_dim = 8;
  cfg.epochs = 50;
  cfg.seed = 2;
  cfg.learning_rate = 1e12;
  cfg.optimizer = sae::Optimizer::kSgd;
  const Eigen::MatrixXd data = 100.0 * random_batch(32, 6, 62);
  CHECK_THROWS_AS(sae::train(cfg, data), misp::DivergedError);
}

TEST_CASE("training rejects an empty dataset") {
  sae::SaeConfig cfg;
  CHECK_THROWS_AS(sae::train(cfg, Eigen::MatrixXd(0, 4)),
                  misp::InsufficientDataError);
}

TEST_CASE("epochs=0 returns the seeded initialization") {
  sae::SaeConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden_dim = 4;
  cfg.epochs = 0;
  cfg.seed = 123;
  const Eigen::MatrixXd data = random_batch(10, 6, 63);
  const sae::SaeTrainResult result = sae::train(cfg, data);
  const sae::SaeModel init = sae::init_model(cfg);
  CHECK(result.model.encoder_weights == init.encoder_weights);
  CHECK(result.model.encoder_bias == init.encoder_bias);
  CHECK(result.model.decoder_weights == init.decoder_weights);
  CHECK(result.model.decoder_bias == init.decoder_bias);
  CHECK(result.epoch_loss.size() == 1);
}

}  // TEST_SUITE
