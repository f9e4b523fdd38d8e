// misp: command-line pipeline for fused embeddings, SAE training, diverse
// negative selection, and the toy preference-training lab.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "misp/embed.hpp"
#include "misp/error.hpp"
#include "misp/gradcheck.hpp"
#include "misp/io.hpp"
#include "misp/negselect.hpp"
#include "misp/pipeline.hpp"
#include "misp/pl_dpo.hpp"
#include "misp/rng.hpp"
#include "misp/sae.hpp"
#include "misp/toy.hpp"
#include "misp/version.hpp"

namespace {

using nlohmann::json;

// Exit codes, documented in --help.
enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kConfigError = 2,
  kDataError = 3,
  kDiverged = 4,
  kCheckFailed = 5,
};

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

class RunTimer {
 public:
  RunTimer() : start_(std::chrono::steady_clock::now()),
               started_at_(iso8601_now()) {}

  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_).count();
  }
  const std::string& started_at() const { return started_at_; }

 private:
  std::chrono::steady_clock::time_point start_;
  std::string started_at_;
};

json run_record(const std::string& command, const json& config,
                const std::vector<std::string>& inputs,
                const std::vector<std::string>& outputs,
                const RunTimer& timer) {
  json digests = json::object();
  for (const std::string& path : inputs) {
    digests[path] = "sha256:" + misp::io::sha256_file(path);
  }
  return json{{"command", command},
              {"config", config},
              {"inputs", std::move(digests)},
              {"outputs", outputs},
              {"tool_version", misp::kVersion},
              {"started_at", timer.started_at()},
              {"duration_seconds", timer.seconds()}};
}

void write_run_record(const std::string& primary_output, const json& record) {
  std::ofstream out(primary_output + ".run.json");
  if (!out) {
    throw misp::DataError("cannot write run record for " + primary_output);
  }
  out << record.dump() << "\n";
}

// ---------------------------------------------------------------------------
// fuse

struct FuseArgs {
  std::string image_path, text_path, out_path;
  bool normalize = false;
  std::uint64_t max_fused_dim = 65536;
  std::uint64_t project_dim = 0;  // 0 = no projection
  std::uint64_t seed = 0;
};

int cmd_fuse(const FuseArgs& args) {
  RunTimer timer;
  const misp::io::NamedRows images = misp::io::load_embeddings(args.image_path);
  const misp::io::NamedRows texts = misp::io::load_embeddings(args.text_path);

  std::map<std::string, Eigen::Index> text_row;
  for (std::size_t i = 0; i < texts.ids.size(); ++i) {
    text_row[texts.ids[i]] = static_cast<Eigen::Index>(i);
  }

  std::vector<std::pair<Eigen::Index, Eigen::Index>> matched;
  std::vector<std::string> unmatched_images;
  std::set<std::string> used_text_ids;
  for (std::size_t i = 0; i < images.ids.size(); ++i) {
    const auto it = text_row.find(images.ids[i]);
    if (it == text_row.end()) {
      unmatched_images.push_back(images.ids[i]);
    } else {
      matched.emplace_back(static_cast<Eigen::Index>(i), it->second);
      used_text_ids.insert(images.ids[i]);
    }
  }
  std::vector<std::string> unmatched_texts;
  for (const std::string& id : texts.ids) {
    if (!used_text_ids.count(id)) unmatched_texts.push_back(id);
  }

  const Eigen::Index fused_dim = images.rows.cols() * texts.rows.cols();
  std::optional<misp::embed::SignProjection> projection;
  if (args.project_dim > 0 &&
      static_cast<std::uint64_t>(fused_dim) > args.max_fused_dim) {
    projection.emplace(fused_dim,
                       static_cast<Eigen::Index>(args.project_dim), args.seed);
  }
  const Eigen::Index out_dim =
      projection ? projection->target_dim() : fused_dim;

  Eigen::MatrixXd fused(static_cast<Eigen::Index>(matched.size()), out_dim);
  for (std::size_t r = 0; r < matched.size(); ++r) {
    Eigen::VectorXd img = images.rows.row(matched[r].first).transpose();
    Eigen::VectorXd txt = texts.rows.row(matched[r].second).transpose();
    if (args.normalize) {
      img = misp::embed::l2_normalize(img);
      txt = misp::embed::l2_normalize(txt);
    }
    Eigen::VectorXd row = misp::embed::fuse(img, txt);
    if (projection) row = projection->apply(row);
    fused.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  misp::io::save_embeddings_binary(args.out_path, fused);

  if (!unmatched_images.empty() || !unmatched_texts.empty()) {
    std::cerr << "fuse: " << unmatched_images.size()
              << " image id(s) without a text match, "
              << unmatched_texts.size() << " text id(s) without an image match"
              << "\n";
    const auto dump_ids = [](const char* side,
                             const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      std::cerr << "  unmatched " << side << ":";
      for (std::size_t i = 0; i < ids.size() && i < 16; ++i) {
        std::cerr << " " << ids[i];
      }
      if (ids.size() > 16) std::cerr << " ... (" << ids.size() << " total)";
      std::cerr << "\n";
    };
    dump_ids("image ids", unmatched_images);
    dump_ids("text ids", unmatched_texts);
    return kDataError;
  }

  std::cout << "fuse: wrote " << fused.rows() << " row(s) of dim " << out_dim
            << " to " << args.out_path << "\n";
  write_run_record(
      args.out_path,
      run_record("fuse",
                 json{{"normalize", args.normalize},
                      {"max_fused_dim", args.max_fused_dim},
                      {"project_dim", args.project_dim},
                      {"seed", args.seed}},
                 {args.image_path, args.text_path}, {args.out_path}, timer));
  return kOk;
}

// ---------------------------------------------------------------------------
// train-sae

struct TrainSaeArgs {
  std::string diffs_path, checkpoint_path, history_path;
  misp::sae::SaeConfig config;
};

json sae_config_json(const misp::sae::SaeConfig& cfg) {
  return json{{"input_dim", cfg.input_dim},
              {"hidden_dim", cfg.hidden_dim},
              {"sparsity_weight", cfg.sparsity_weight},
              {"target_activation", cfg.target_activation},
              {"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"seed", cfg.seed},
              {"optimizer",
               misp::pipeline::optimizer_to_string(cfg.optimizer)}};
}

int cmd_train_sae(const TrainSaeArgs& args) {
  RunTimer timer;
  const misp::io::NamedRows diffs = misp::io::load_embeddings(args.diffs_path);
  const misp::sae::SaeTrainResult result =
      misp::sae::train(args.config, diffs.rows);

  misp::io::save_checkpoint(args.checkpoint_path, result.model);
  const std::string history_path = args.history_path.empty()
                                       ? args.checkpoint_path + ".history.json"
                                       : args.history_path;
  {
    json hist{{"format", "misp-sae-history-v1"},
              {"epoch_loss", result.epoch_loss}};
    std::ofstream out(history_path);
    if (!out) throw misp::DataError("cannot write " + history_path);
    out << hist.dump() << "\n";
  }

  std::cout << "train-sae: " << diffs.rows.rows() << " row(s), initial loss "
            << result.epoch_loss.front() << ", final loss "
            << result.epoch_loss.back() << "\n";
  write_run_record(args.checkpoint_path,
                   run_record("train-sae", sae_config_json(result.model.config),
                              {args.diffs_path},
                              {args.checkpoint_path, history_path}, timer));
  return kOk;
}

// ---------------------------------------------------------------------------
// select

struct SelectArgs {
  std::string positives_path, candidates_path, checkpoint_path, out_path;
  std::string labels_path;
  misp::sel::SelectionConfig config;
};

int cmd_select(const SelectArgs& args) {
  RunTimer timer;
  const misp::sae::SaeModel model =
      misp::io::load_checkpoint(args.checkpoint_path);
  const misp::io::NamedRows positives =
      misp::io::load_embeddings(args.positives_path);
  const misp::io::NamedRows candidates =
      misp::io::load_embeddings(args.candidates_path);

  if (candidates.rows.rows() == 0) {
    throw misp::InsufficientDataError("select: empty candidate pool");
  }
  if (positives.rows.cols() != candidates.rows.cols()) {
    throw misp::DataError("select: positive dim " +
                          std::to_string(positives.rows.cols()) +
                          " != candidate dim " +
                          std::to_string(candidates.rows.cols()));
  }
  if (positives.rows.cols() != model.input_dim()) {
    throw misp::DataError("select: embedding dim " +
                          std::to_string(positives.rows.cols()) +
                          " does not match checkpoint input dim " +
                          std::to_string(model.input_dim()));
  }

  std::map<std::string, int> factor_of;
  if (!args.labels_path.empty()) {
    for (const auto& [id, f] : misp::io::load_labels(args.labels_path)) {
      factor_of[id] = f;
    }
  }

  std::ofstream out(args.out_path);
  if (!out) throw misp::DataError("cannot write " + args.out_path);

  for (Eigen::Index p = 0; p < positives.rows.rows(); ++p) {
    Eigen::MatrixXd diffs(candidates.rows.rows(), candidates.rows.cols());
    for (Eigen::Index c = 0; c < candidates.rows.rows(); ++c) {
      diffs.row(c) = positives.rows.row(p) - candidates.rows.row(c);
    }
    const std::vector<misp::sel::CandidateScore> scores =
        misp::sel::score_candidates(model, diffs, candidates.ids);
    const Eigen::MatrixXd codes = misp::sae::encode_batch(model, diffs);

    misp::sel::SelectionManifest manifest =
        misp::sel::greedy_select(scores, codes, args.config);
    manifest.prompt_id = positives.ids[static_cast<std::size_t>(p)];
    manifest.positive_id = manifest.prompt_id;

    int coverage = -1;
    if (!factor_of.empty()) {
      std::set<int> distinct;
      for (const auto& e : manifest.selected) {
        const auto it = factor_of.find(e.candidate_id);
        if (it == factor_of.end()) {
          throw misp::DataError("select: candidate id \"" + e.candidate_id +
                                "\" missing from labels file");
        }
        distinct.insert(it->second);
      }
      coverage = static_cast<int>(distinct.size());
    }
    out << misp::io::manifest_to_json(manifest, coverage) << "\n";
  }
  out.close();

  std::cout << "select: wrote " << positives.rows.rows()
            << " manifest(s) to " << args.out_path << "\n";
  std::vector<std::string> inputs{args.positives_path, args.candidates_path,
                                  args.checkpoint_path};
  if (!args.labels_path.empty()) inputs.push_back(args.labels_path);
  write_run_record(
      args.out_path,
      run_record("select",
                 json{{"k", args.config.k},
                      {"diversity_weight", args.config.diversity_weight}},
                 inputs, {args.out_path}, timer));
  return kOk;
}

// ---------------------------------------------------------------------------
// train-toy

struct TrainToyArgs {
  std::string out_path;
  misp::toy::ToyTrainConfig config;
};

json toy_config_json(const misp::toy::ToyTrainConfig& cfg) {
  return json{{"beta", cfg.dpo.beta},
              {"lambda", cfg.dpo.lambda},
              {"sampler", misp::pipeline::sampler_to_string(cfg.sampler)},
              {"num_negatives", cfg.num_negatives},
              {"steps", cfg.steps},
              {"learning_rate", cfg.learning_rate},
              {"seed", cfg.seed},
              {"num_factors", cfg.num_factors},
              {"feature_dim", cfg.feature_dim},
              {"vocab_size", cfg.vocab_size},
              {"response_length", cfg.response_length},
              {"num_train_instances", cfg.num_train_instances},
              {"num_heldout_instances", cfg.num_heldout_instances},
              {"context_noise", cfg.context_noise},
              {"factor_shift", cfg.factor_shift},
              {"init_scale", cfg.init_scale}};
}

int cmd_train_toy(const TrainToyArgs& args) {
  RunTimer timer;
  const misp::toy::ToyRunResult result = misp::toy::run_toy_training(args.config);

  std::ofstream out(args.out_path);
  if (!out) throw misp::DataError("cannot write " + args.out_path);
  for (const misp::toy::StepMetrics& m : result.trace) {
    out << json{{"step", m.step},
                {"loss", m.loss},
                {"margin", m.margin},
                {"coverage", m.coverage}}.dump()
        << "\n";
  }
  out.close();

  std::cout << "train-toy: " << args.config.steps << " step(s), final loss "
            << result.trace.back().loss << ", train margin "
            << result.trace.back().margin << "\n";
  std::cout << "train-toy: held-out margin (all factors) "
            << result.heldout_margin_all << ", off-factor "
            << result.heldout_margin_off_factor << "\n";
  write_run_record(args.out_path,
                   run_record("train-toy", toy_config_json(args.config), {},
                              {args.out_path}, timer));
  return kOk;
}

// ---------------------------------------------------------------------------
// grad-check

constexpr double kGradCheckThreshold = 1e-5;

double grad_check_sae(std::uint64_t seed) {
  double worst = 0.0;
  for (const double gamma : {0.0, 1.0, 10.0}) {
    misp::sae::SaeConfig cfg;
    cfg.input_dim = 24;
    cfg.hidden_dim = 16;
    cfg.sparsity_weight = gamma;
    cfg.seed = misp::Rng::derive(seed, static_cast<std::uint64_t>(gamma) + 7);

    misp::sae::SaeModel model = misp::sae::init_model(cfg);
    misp::Rng rng(misp::Rng::derive(seed, 11 + static_cast<std::uint64_t>(gamma)));
    // init_model leaves biases at zero; jitter them so the check sees a
    // generic point.
    for (Eigen::Index i = 0; i < model.encoder_bias.size(); ++i) {
      model.encoder_bias(i) = 0.1 * rng.normal();
    }
    for (Eigen::Index i = 0; i < model.decoder_bias.size(); ++i) {
      model.decoder_bias(i) = 0.1 * rng.normal();
    }

    Eigen::MatrixXd batch(12, cfg.input_dim);
    for (Eigen::Index r = 0; r < batch.rows(); ++r) {
      for (Eigen::Index c = 0; c < batch.cols(); ++c) {
        batch(r, c) = rng.normal();
      }
    }

    const misp::sae::SaeGradient analytic = misp::sae::sae_grad(model, batch);
    const Eigen::Index count = model.param_count();
    Eigen::VectorXd flat_analytic(count);
    Eigen::VectorXd x0(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      flat_analytic(i) = analytic.get_param(i);
      x0(i) = model.get_param(i);
    }

    // >= 200 sampled coordinates, spread over all four blocks.
    std::vector<Eigen::Index> coords;
    for (int k = 0; k < 200; ++k) {
      coords.push_back(static_cast<Eigen::Index>(
          rng.below(static_cast<std::uint64_t>(count))));
    }

    misp::sae::SaeModel probe = model;
    const auto objective = [&](const Eigen::VectorXd& x) {
      for (Eigen::Index i = 0; i < count; ++i) probe.set_param(i, x(i));
      return misp::sae::sae_loss(probe, batch).total();
    };
    const misp::gradcheck::Result res =
        misp::gradcheck::check(objective, x0, flat_analytic, coords);
    worst = std::max(worst, res.max_rel_error);
  }
  return worst;
}

double grad_check_pl(std::uint64_t seed) {
  misp::Rng rng(misp::Rng::derive(seed, 23));
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    misp::pl::PreferenceInstance inst;
    inst.pos_logratio = rng.uniform(-2.0, 2.0);
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n; ++i) {
      inst.neg_logratios.push_back(rng.uniform(-2.0, 2.0));
    }
    const double beta = rng.uniform(0.1, 2.0);
    const misp::pl::MnGradientReport report =
        misp::pl::mn_gradient_report(inst, beta);

    // d mn_loss / d neg_i is the per-negative delta weight; d/d pos is the
    // negated sum.
    for (int i = 0; i < n; ++i) {
      const auto f = [&](const Eigen::VectorXd& x) {
        misp::pl::PreferenceInstance probe = inst;
        probe.neg_logratios[static_cast<std::size_t>(i)] = x(0);
        return misp::pl::mn_loss(probe, beta);
      };
      Eigen::VectorXd x0(1);
      x0(0) = inst.neg_logratios[static_cast<std::size_t>(i)];
      const double numeric = misp::gradcheck::central_difference(f, x0, 0, 1e-5);
      worst = std::max(
          worst, misp::gradcheck::relative_error(
                     report.per_negative_delta_weights[static_cast<std::size_t>(i)],
                     numeric));
    }
    const auto f_pos = [&](const Eigen::VectorXd& x) {
      misp::pl::PreferenceInstance probe = inst;
      probe.pos_logratio = x(0);
      return misp::pl::mn_loss(probe, beta);
    };
    Eigen::VectorXd x0(1);
    x0(0) = inst.pos_logratio;
    const double numeric =
        misp::gradcheck::central_difference(f_pos, x0, 0, 1e-5);
    double weight_sum = 0.0;
    for (double w : report.per_negative_delta_weights) weight_sum += w;
    worst = std::max(worst,
                     misp::gradcheck::relative_error(-weight_sum, numeric));
  }
  return worst;
}

double grad_check_toy(std::uint64_t seed) {
  misp::Rng rng(misp::Rng::derive(seed, 31));
  double worst = 0.0;

  const int vocab = 8;
  const int fdim = 5;
  for (int trial = 0; trial < 10; ++trial) {
    misp::toy::ToyPolicy policy;
    policy.weights.resize(vocab, fdim);
    for (Eigen::Index i = 0; i < vocab; ++i) {
      for (Eigen::Index j = 0; j < fdim; ++j) {
        policy.weights(i, j) = 0.5 * rng.normal();
      }
    }
    misp::toy::ToyContext ctx;
    ctx.features.resize(fdim);
    for (Eigen::Index j = 0; j < fdim; ++j) ctx.features(j) = rng.normal();
    for (int t = 0; t < 4; ++t) {
      ctx.response.push_back(static_cast<int>(rng.below(vocab)));
    }

    const Eigen::MatrixXd analytic = misp::toy::logprob_grad(policy, ctx);
    Eigen::VectorXd flat_analytic =
        Eigen::Map<const Eigen::VectorXd>(analytic.data(), analytic.size());
    Eigen::VectorXd x0 =
        Eigen::Map<const Eigen::VectorXd>(policy.weights.data(),
                                          policy.weights.size());
    const auto objective = [&](const Eigen::VectorXd& x) {
      misp::toy::ToyPolicy probe;
      probe.weights = Eigen::Map<const Eigen::MatrixXd>(x.data(), vocab, fdim);
      return misp::toy::logprob(probe, ctx);
    };
    const misp::gradcheck::Result res =
        misp::gradcheck::check(objective, x0, flat_analytic);
    worst = std::max(worst, res.max_rel_error);
  }

  // Combined-loss gradient through a full toy instance (image + text terms).
  misp::toy::ToyTrainConfig cfg;
  cfg.seed = misp::Rng::derive(seed, 37);
  cfg.steps = 0;
  const misp::toy::ToyRunResult run = misp::toy::run_toy_training(cfg);

  misp::toy::ToyInstance inst;
  inst.positive.features.resize(cfg.feature_dim);
  misp::Rng irng(misp::Rng::derive(seed, 41));
  for (Eigen::Index j = 0; j < cfg.feature_dim; ++j) {
    inst.positive.features(j) = irng.normal();
  }
  for (int t = 0; t < cfg.response_length; ++t) {
    inst.positive.response.push_back(
        static_cast<int>(irng.below(cfg.vocab_size)));
    inst.rejected_response.push_back(
        static_cast<int>(irng.below(cfg.vocab_size)));
  }
  for (int f = 0; f < 3; ++f) {
    inst.negative_factors.push_back(f);
    misp::toy::ToyContext neg = inst.positive;
    neg.features(1 + f) += cfg.factor_shift;
    inst.negatives.push_back(neg);
  }

  misp::toy::ToyPolicy policy = run.policy;
  for (Eigen::Index i = 0; i < policy.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < policy.weights.cols(); ++j) {
      policy.weights(i, j) += 0.3 * irng.normal();
    }
  }
  const Eigen::MatrixXd analytic =
      misp::toy::instance_total_grad(policy, run.reference, inst, cfg.dpo);
  Eigen::VectorXd flat_analytic =
      Eigen::Map<const Eigen::VectorXd>(analytic.data(), analytic.size());
  Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(
      policy.weights.data(), policy.weights.size());
  const auto objective = [&](const Eigen::VectorXd& x) {
    misp::toy::ToyPolicy probe;
    probe.weights = Eigen::Map<const Eigen::MatrixXd>(
        x.data(), policy.weights.rows(), policy.weights.cols());
    return misp::toy::instance_total_loss(probe, run.reference, inst, cfg.dpo);
  };
  const misp::gradcheck::Result res =
      misp::gradcheck::check(objective, x0, flat_analytic);
  worst = std::max(worst, res.max_rel_error);
  return worst;
}

int cmd_grad_check(const std::string& scope, std::uint64_t seed) {
  RunTimer timer;
  std::map<std::string, double> results;
  if (scope == "sae" || scope == "all") {
    results["sae"] = grad_check_sae(seed);
  }
  if (scope == "pl_dpo" || scope == "all") {
    results["pl_dpo"] = grad_check_pl(seed);
  }
  if (scope == "toy" || scope == "all") {
    results["toy"] = grad_check_toy(seed);
  }
  if (results.empty()) {
    throw misp::ConfigError("grad-check: unknown scope \"" + scope +
                            "\" (expected sae|pl_dpo|toy|all)");
  }

  bool failed = false;
  for (const auto& [name, err] : results) {
    const bool ok = err < kGradCheckThreshold;
    std::cout << "grad-check " << name << ": max relative error " << err
              << (ok ? " (ok)" : " (FAIL)") << "\n";
    failed = failed || !ok;
  }
  std::cout << run_record("grad-check",
                          json{{"scope", scope}, {"seed", seed}}, {}, {},
                          timer).dump()
            << "\n";
  return failed ? kCheckFailed : kOk;
}

// ---------------------------------------------------------------------------
// export-viz

struct ExportVizArgs {
  std::string manifest_path, fused_path, out_path;
  std::size_t index = 0;
};

int cmd_export_viz(const ExportVizArgs& args) {
  RunTimer timer;
  const std::vector<misp::sel::SelectionManifest> manifests =
      misp::io::load_manifests(args.manifest_path);
  if (manifests.empty()) {
    throw misp::DataError("export-viz: no manifests in " + args.manifest_path);
  }
  if (args.index >= manifests.size()) {
    throw misp::ConfigError("export-viz: --index out of range (file has " +
                            std::to_string(manifests.size()) + " manifests)");
  }
  const misp::sel::SelectionManifest& manifest = manifests[args.index];

  const misp::io::NamedRows fused = misp::io::load_embeddings(args.fused_path);
  const Eigen::MatrixXd points = misp::embed::project_2d(fused.rows);

  std::set<std::string> selected;
  for (const auto& e : manifest.selected) selected.insert(e.candidate_id);

  std::ofstream out(args.out_path);
  if (!out) throw misp::DataError("cannot write " + args.out_path);
  out << "id,x,y,selected\n";
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    const std::string& id = fused.ids[static_cast<std::size_t>(r)];
    out << id << "," << misp::io::format_double(points(r, 0)) << ","
        << misp::io::format_double(points(r, 1)) << ","
        << (selected.count(id) ? 1 : 0) << "\n";
  }
  out.close();

  std::cout << "export-viz: wrote " << points.rows() << " point(s), "
            << selected.size() << " selected\n";
  write_run_record(args.out_path,
                   run_record("export-viz", json{{"index", args.index}},
                              {args.manifest_path, args.fused_path},
                              {args.out_path}, timer));
  return kOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string kind = "sparse";
  std::string out_path;                       // sparse
  std::string out_positive, out_candidates, out_labels;  // planted
  std::string out_diffs;  // planted: the raw deviations, for SAE training
  misp::toy::SparseDataSpec sparse;
  misp::toy::PlantedFactorSpec planted;
  int planted_dim = 32;
};

int cmd_synth(const SynthArgs& args) {
  RunTimer timer;
  if (args.kind == "sparse") {
    if (args.out_path.empty()) {
      throw misp::ConfigError("synth --kind sparse requires --out");
    }
    const Eigen::MatrixXd data = misp::toy::make_sparse_dataset(args.sparse);
    misp::io::save_embeddings_binary(args.out_path, data);
    std::cout << "synth: wrote " << data.rows() << " sparse row(s) of dim "
              << data.cols() << " to " << args.out_path << "\n";
    write_run_record(args.out_path,
                     run_record("synth",
                                json{{"kind", "sparse"},
                                     {"rows", args.sparse.rows},
                                     {"dim", args.sparse.dim},
                                     {"num_atoms", args.sparse.num_atoms},
                                     {"atoms_per_sample",
                                      args.sparse.atoms_per_sample},
                                     {"noise", args.sparse.noise},
                                     {"seed", args.sparse.seed}},
                                {}, {args.out_path}, timer));
    return kOk;
  }
  if (args.kind == "planted") {
    if (args.out_positive.empty() || args.out_candidates.empty() ||
        args.out_labels.empty()) {
      throw misp::ConfigError(
          "synth --kind planted requires --out-positive, --out-candidates "
          "and --out-labels");
    }
    misp::toy::PlantedFactorSpec spec = args.planted;
    spec.dim = args.planted_dim;
    const misp::toy::PlantedPool pool = misp::toy::make_planted_pool(spec);

    // The positive is the zero vector and candidates are its negations, so
    // positive - candidate reproduces the planted deviations exactly.
    misp::io::save_embeddings_binary(
        args.out_positive, Eigen::MatrixXd::Zero(1, pool.diffs.cols()));
    misp::io::save_embeddings_binary(args.out_candidates, -pool.diffs);
    misp::io::save_labels(args.out_labels, pool.ids, pool.labels);
    if (!args.out_diffs.empty()) {
      misp::io::save_embeddings_binary(args.out_diffs, pool.diffs);
    }

    std::cout << "synth: wrote planted pool (" << pool.diffs.rows()
              << " candidates, " << spec.num_factors << " factors)\n";
    write_run_record(
        args.out_candidates,
        run_record("synth",
                   json{{"kind", "planted"},
                        {"num_factors", spec.num_factors},
                        {"samples_per_factor", spec.samples_per_factor},
                        {"factor_noise", spec.factor_noise},
                        {"dim", spec.dim},
                        {"seed", spec.seed}},
                   {},
                   {args.out_positive, args.out_candidates, args.out_labels},
                   timer));
    return kOk;
  }
  throw misp::ConfigError("synth: unknown kind \"" + args.kind +
                          "\" (expected sparse|planted)");
}

// ---------------------------------------------------------------------------

// A --config file seeds the defaults; flags given on the command line win.
std::optional<std::string> prescan_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  misp::pipeline::PipelineConfig defaults;
  try {
    if (const auto config_path = prescan_config_path(argc, argv)) {
      defaults = misp::pipeline::load_pipeline_config(*config_path);
    }
  } catch (const misp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }

  CLI::App app{"misp: fused-embedding construction, sparse-autoencoder "
               "training, diverse negative selection, and preference-loss "
               "tooling"};
  app.footer(
      "Exit codes: 0 success, 1 internal error, 2 config error, 3 data "
      "error,\n4 numeric divergence, 5 check failure.\n"
      "MISP_SEED sets the default --seed; an explicit flag overrides it.\n"
      "--config loads a JSON pipeline config; flags override its values.");
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON pipeline config providing defaults")
      ->expected(1);

  // fuse
  FuseArgs fuse_args;
  fuse_args.image_path = defaults.paths.image_embeddings;
  fuse_args.text_path = defaults.paths.text_embeddings;
  fuse_args.out_path = defaults.paths.fused;
  fuse_args.seed = defaults.seed;
  CLI::App* fuse = app.add_subcommand(
      "fuse", "Fuse image/text embedding files (outer product, row-major)");
  fuse->add_option("--image-embeddings", fuse_args.image_path,
                   "Image embedding file (JSONL or binary)")
      ->required(defaults.paths.image_embeddings.empty());
  fuse->add_option("--text-embeddings", fuse_args.text_path,
                   "Text embedding file (JSONL or binary)")
      ->required(defaults.paths.text_embeddings.empty());
  fuse->add_option("--out", fuse_args.out_path, "Output binary fused file")
      ->required(defaults.paths.fused.empty());
  fuse->add_flag("--normalize", fuse_args.normalize,
                 "L2-normalize embeddings before fusing");
  fuse->add_option("--max-fused-dim", fuse_args.max_fused_dim,
                   "Dimension cap before the sign projection applies");
  fuse->add_option("--project-dim", fuse_args.project_dim,
                   "Sign-projection target dim (0 disables projection)");
  fuse->add_option("--seed", fuse_args.seed, "Projection seed")
      ->envname("MISP_SEED");

  // train-sae
  TrainSaeArgs sae_args;
  sae_args.config = defaults.sae;
  sae_args.diffs_path = defaults.paths.diffs;
  sae_args.checkpoint_path = defaults.paths.checkpoint;
  std::string sae_optimizer =
      misp::pipeline::optimizer_to_string(defaults.sae.optimizer);
  CLI::App* train_sae = app.add_subcommand(
      "train-sae", "Train the sparse autoencoder on difference vectors");
  train_sae->add_option("--diffs", sae_args.diffs_path,
                        "Difference-vector file (JSONL or binary)")
      ->required(defaults.paths.diffs.empty());
  train_sae->add_option("--checkpoint", sae_args.checkpoint_path,
                        "Output misp-sae-v1 checkpoint path")
      ->required(defaults.paths.checkpoint.empty());
  train_sae->add_option("--history", sae_args.history_path,
                        "Loss-history JSON (default <checkpoint>.history.json)");
  train_sae->add_option("--hidden-dim", sae_args.config.hidden_dim,
                        "Latent dimension H");
  train_sae->add_option("--gamma", sae_args.config.sparsity_weight,
                        "Sparsity weight");
  train_sae->add_option("--rho", sae_args.config.target_activation,
                        "Target mean activation");
  train_sae->add_option("--learning-rate", sae_args.config.learning_rate,
                        "Learning rate");
  train_sae->add_option("--batch-size", sae_args.config.batch_size,
                        "Mini-batch size");
  train_sae->add_option("--epochs", sae_args.config.epochs, "Training epochs");
  train_sae->add_option("--optimizer", sae_optimizer, "adam or sgd");
  train_sae->add_option("--seed", sae_args.config.seed, "Training seed")
      ->envname("MISP_SEED");

  // select
  SelectArgs select_args;
  select_args.config = defaults.selection;
  select_args.positives_path = defaults.paths.positives;
  select_args.candidates_path = defaults.paths.candidates;
  select_args.checkpoint_path = defaults.paths.checkpoint;
  select_args.out_path = defaults.paths.manifests;
  select_args.labels_path = defaults.paths.labels;
  CLI::App* select = app.add_subcommand(
      "select", "Score candidates and greedily select diverse negatives");
  select->add_option("--positives", select_args.positives_path,
                     "Positive fused embedding file")
      ->required(defaults.paths.positives.empty());
  select->add_option("--candidates", select_args.candidates_path,
                     "Candidate fused embedding file")
      ->required(defaults.paths.candidates.empty());
  select->add_option("--checkpoint", select_args.checkpoint_path,
                     "Trained misp-sae-v1 checkpoint")
      ->required(defaults.paths.checkpoint.empty());
  select->add_option("--out", select_args.out_path,
                     "Output manifest JSONL path")
      ->required(defaults.paths.manifests.empty());
  select->add_option("--k", select_args.config.k, "Negatives per positive");
  select->add_option("--beta-div", select_args.config.diversity_weight,
                     "Diversity weight of the greedy objective");
  select->add_option("--labels", select_args.labels_path,
                     "Planted-factor labels; adds a coverage field");

  // train-toy
  TrainToyArgs toy_args;
  toy_args.config = defaults.toy;
  toy_args.out_path = defaults.paths.trace;
  std::string toy_sampler =
      misp::pipeline::sampler_to_string(defaults.toy.sampler);
  CLI::App* train_toy = app.add_subcommand(
      "train-toy", "Run the planted-factor preference-training loop");
  train_toy->add_option("--out", toy_args.out_path, "Metric trace JSONL path")
      ->required(defaults.paths.trace.empty());
  train_toy->add_option("--steps", toy_args.config.steps, "Gradient steps");
  train_toy->add_option("--negatives", toy_args.config.num_negatives,
                        "Negatives per instance (N)");
  train_toy->add_option("--sampler", toy_sampler, "diverse, single or random");
  train_toy->add_option("--beta", toy_args.config.dpo.beta,
                        "Preference coefficient");
  train_toy->add_option("--lambda", toy_args.config.dpo.lambda,
                        "Text-loss balance");
  train_toy->add_option("--learning-rate", toy_args.config.learning_rate,
                        "Step size");
  train_toy->add_option("--factors", toy_args.config.num_factors,
                        "Planted factor count");
  train_toy->add_option("--feature-dim", toy_args.config.feature_dim,
                        "Context feature dimension");
  train_toy->add_option("--vocab-size", toy_args.config.vocab_size,
                        "Toy vocabulary size");
  train_toy->add_option("--response-length", toy_args.config.response_length,
                        "Response token count");
  train_toy->add_option("--train-instances",
                        toy_args.config.num_train_instances,
                        "Training instances");
  train_toy->add_option("--heldout-instances",
                        toy_args.config.num_heldout_instances,
                        "Held-out instances");
  train_toy->add_option("--context-noise", toy_args.config.context_noise,
                        "Context noise scale");
  train_toy->add_option("--factor-shift", toy_args.config.factor_shift,
                        "Negative deviation magnitude");
  train_toy->add_option("--seed", toy_args.config.seed, "Run seed")
      ->envname("MISP_SEED");

  // grad-check
  std::string gc_scope;
  std::uint64_t gc_seed = defaults.seed;
  CLI::App* grad_check = app.add_subcommand(
      "grad-check", "Verify analytic gradients against central differences");
  grad_check->add_option("--scope", gc_scope, "sae, pl_dpo, toy or all")
      ->required();
  grad_check->add_option("--seed", gc_seed, "Check seed")->envname("MISP_SEED");

  // export-viz
  ExportVizArgs viz_args;
  viz_args.manifest_path = defaults.paths.manifests;
  viz_args.fused_path = defaults.paths.candidates;
  viz_args.out_path = defaults.paths.viz;
  CLI::App* export_viz = app.add_subcommand(
      "export-viz", "Project candidates to 2-D PCA coordinates as CSV");
  export_viz->add_option("--manifest", viz_args.manifest_path,
                         "Selection manifest JSONL")
      ->required(defaults.paths.manifests.empty());
  export_viz->add_option("--fused", viz_args.fused_path,
                         "Candidate fused embedding file")
      ->required(defaults.paths.candidates.empty());
  export_viz->add_option("--out", viz_args.out_path, "Output CSV path")
      ->required(defaults.paths.viz.empty());
  export_viz->add_option("--index", viz_args.index,
                         "Which manifest line to flag (default 0)");

  // synth
  SynthArgs synth_args;
  synth_args.sparse.seed = defaults.seed;
  synth_args.planted.seed = defaults.seed;
  CLI::App* synth = app.add_subcommand(
      "synth", "Emit synthetic datasets (sparse rows or planted pools)");
  synth->add_option("--kind", synth_args.kind, "sparse or planted")
      ->required();
  synth->add_option("--out", synth_args.out_path, "Output path (sparse)");
  synth->add_option("--rows", synth_args.sparse.rows, "Sparse row count");
  synth->add_option("--dim", synth_args.sparse.dim, "Sparse dimension");
  synth->add_option("--atoms", synth_args.sparse.num_atoms,
                    "Dictionary atom count");
  synth->add_option("--atoms-per-sample", synth_args.sparse.atoms_per_sample,
                    "Active atoms per row");
  synth->add_option("--noise", synth_args.sparse.noise, "Sparse noise scale");
  synth->add_option("--out-positive", synth_args.out_positive,
                    "Positive file (planted)");
  synth->add_option("--out-candidates", synth_args.out_candidates,
                    "Candidate file (planted)");
  synth->add_option("--out-labels", synth_args.out_labels,
                    "Labels file (planted)");
  synth->add_option("--out-diffs", synth_args.out_diffs,
                    "Raw planted deviations, for SAE training (planted)");
  synth->add_option("--factors", synth_args.planted.num_factors,
                    "Planted factor count");
  synth->add_option("--per-factor", synth_args.planted.samples_per_factor,
                    "Candidates per factor");
  synth->add_option("--factor-noise", synth_args.planted.factor_noise,
                    "Planted noise scale");
  synth->add_option("--planted-dim", synth_args.planted_dim,
                    "Planted embedding dimension");
  std::uint64_t synth_seed = defaults.seed;
  synth->add_option("--seed", synth_seed, "Generator seed")
      ->envname("MISP_SEED");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (fuse->parsed()) return cmd_fuse(fuse_args);
    if (train_sae->parsed()) {
      sae_args.config.optimizer =
          misp::pipeline::optimizer_from_string(sae_optimizer);
      return cmd_train_sae(sae_args);
    }
    if (select->parsed()) return cmd_select(select_args);
    if (train_toy->parsed()) {
      toy_args.config.sampler = misp::pipeline::sampler_from_string(toy_sampler);
      return cmd_train_toy(toy_args);
    }
    if (grad_check->parsed()) return cmd_grad_check(gc_scope, gc_seed);
    if (export_viz->parsed()) return cmd_export_viz(viz_args);
    if (synth->parsed()) {
      synth_args.sparse.seed = synth_seed;
      synth_args.planted.seed = synth_seed;
      return cmd_synth(synth_args);
    }
  } catch (const misp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const misp::DivergedError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const misp::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kInternalError;
}
