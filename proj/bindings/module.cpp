#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "misp/embed.hpp"
#include "misp/error.hpp"
#include "misp/io.hpp"
#include "misp/negselect.hpp"
#include "misp/pl_dpo.hpp"
#include "misp/sae.hpp"
#include "misp/toy.hpp"
#include "misp/version.hpp"

namespace py = pybind11;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fused CLIP-style embeddings, sparse-autoencoder scoring, "
            "diversity-promoting negative selection, and Plackett-Luce "
            "multi-negative preference losses";
  m.attr("__version__") = misp::kVersion;

  py::register_exception<misp::Error>(m, "Error");

  // embeddings ---------------------------------------------------------
  m.def("fuse", &misp::embed::fuse, py::arg("image_emb"), py::arg("text_emb"),
        "Row-major vectorized outer product of the two embeddings");
  m.def("difference",
        [](const Eigen::VectorXd& pos, const Eigen::VectorXd& cand) {
          return misp::embed::difference(pos, cand);
        },
        py::arg("positive"), py::arg("candidate"));
  m.def("cosine", &misp::embed::cosine, py::arg("u"), py::arg("v"));
  m.def("project_2d", &misp::embed::project_2d, py::arg("rows"),
        "Deterministic top-2 PCA projection of the rows");

  // sae ----------------------------------------------------------------
  py::enum_<misp::sae::Optimizer>(m, "Optimizer")
      .value("ADAM", misp::sae::Optimizer::kAdam)
      .value("SGD", misp::sae::Optimizer::kSgd);

  py::class_<misp::sae::SaeConfig>(m, "SaeConfig")
      .def(py::init<>())
      .def_readwrite("input_dim", &misp::sae::SaeConfig::input_dim)
      .def_readwrite("hidden_dim", &misp::sae::SaeConfig::hidden_dim)
      .def_readwrite("sparsity_weight", &misp::sae::SaeConfig::sparsity_weight)
      .def_readwrite("target_activation",
                     &misp::sae::SaeConfig::target_activation)
      .def_readwrite("learning_rate", &misp::sae::SaeConfig::learning_rate)
      .def_readwrite("batch_size", &misp::sae::SaeConfig::batch_size)
      .def_readwrite("epochs", &misp::sae::SaeConfig::epochs)
      .def_readwrite("seed", &misp::sae::SaeConfig::seed)
      .def_readwrite("optimizer", &misp::sae::SaeConfig::optimizer);

  py::class_<misp::sae::SaeModel>(m, "SaeModel")
      .def_readwrite("encoder_weights", &misp::sae::SaeModel::encoder_weights)
      .def_readwrite("encoder_bias", &misp::sae::SaeModel::encoder_bias)
      .def_readwrite("decoder_weights", &misp::sae::SaeModel::decoder_weights)
      .def_readwrite("decoder_bias", &misp::sae::SaeModel::decoder_bias)
      .def_readwrite("config", &misp::sae::SaeModel::config)
      .def_property_readonly("input_dim", &misp::sae::SaeModel::input_dim)
      .def_property_readonly("hidden_dim", &misp::sae::SaeModel::hidden_dim);

  py::class_<misp::sae::SaeBatchStats>(m, "SaeBatchStats")
      .def_readonly("mean_activation",
                    &misp::sae::SaeBatchStats::mean_activation)
      .def_readonly("reconstruction_loss",
                    &misp::sae::SaeBatchStats::reconstruction_loss)
      .def_readonly("sparsity_loss", &misp::sae::SaeBatchStats::sparsity_loss)
      .def("total", &misp::sae::SaeBatchStats::total);

  m.def("kl_sparsity", &misp::sae::kl_sparsity, py::arg("rho"),
        py::arg("rho_hat"));
  m.def("encode", &misp::sae::encode, py::arg("model"), py::arg("d"));
  m.def("encode_batch", &misp::sae::encode_batch, py::arg("model"),
        py::arg("batch"));
  m.def("decode", &misp::sae::decode, py::arg("model"), py::arg("code"));
  m.def("decode_batch", &misp::sae::decode_batch, py::arg("model"),
        py::arg("codes"));
  m.def("sae_loss", &misp::sae::sae_loss, py::arg("model"), py::arg("batch"));
  m.def("init_sae", &misp::sae::init_model, py::arg("config"));
  m.def(
      "train_sae",
      [](const misp::sae::SaeConfig& cfg, const Eigen::MatrixXd& data) {
        misp::sae::SaeTrainResult r = misp::sae::train(cfg, data);
        return py::make_tuple(r.model, r.epoch_loss);
      },
      py::arg("config"), py::arg("dataset"),
      "Returns (model, per-epoch full-dataset loss history)");
  m.def("save_checkpoint", &misp::io::save_checkpoint, py::arg("path"),
        py::arg("model"));
  m.def("load_checkpoint", &misp::io::load_checkpoint, py::arg("path"));

  // selection ----------------------------------------------------------
  py::class_<misp::sel::CandidateScore>(m, "CandidateScore")
      .def_readonly("candidate_id", &misp::sel::CandidateScore::candidate_id)
      .def_readonly("recon_error", &misp::sel::CandidateScore::recon_error)
      .def_readonly("act_l1", &misp::sel::CandidateScore::act_l1)
      .def_readonly("score", &misp::sel::CandidateScore::score);

  py::class_<misp::sel::SelectionConfig>(m, "SelectionConfig")
      .def(py::init<>())
      .def_readwrite("k", &misp::sel::SelectionConfig::k)
      .def_readwrite("diversity_weight",
                     &misp::sel::SelectionConfig::diversity_weight);

  py::class_<misp::sel::SelectedEntry>(m, "SelectedEntry")
      .def_readonly("candidate_id", &misp::sel::SelectedEntry::candidate_id)
      .def_readonly("score", &misp::sel::SelectedEntry::score)
      .def_readonly("diversity_bonus",
                    &misp::sel::SelectedEntry::diversity_bonus);

  py::class_<misp::sel::SelectionManifest>(m, "SelectionManifest")
      .def_readonly("prompt_id", &misp::sel::SelectionManifest::prompt_id)
      .def_readonly("positive_id", &misp::sel::SelectionManifest::positive_id)
      .def_readonly("config", &misp::sel::SelectionManifest::config)
      .def_readonly("selected", &misp::sel::SelectionManifest::selected);

  m.def("score_candidates", &misp::sel::score_candidates, py::arg("model"),
        py::arg("diffs"), py::arg("ids"));
  m.def("greedy_select", &misp::sel::greedy_select, py::arg("scores"),
        py::arg("codes"), py::arg("config"));
  m.def("reference_select", &misp::sel::reference_select, py::arg("scores"),
        py::arg("codes"), py::arg("config"));

  // preference losses ---------------------------------------------------
  py::class_<misp::pl::DpoConfig>(m, "DpoConfig")
      .def(py::init<>())
      .def_readwrite("beta", &misp::pl::DpoConfig::beta)
      .def_readwrite("lambda_", &misp::pl::DpoConfig::lambda);

  py::class_<misp::pl::PreferenceInstance>(m, "PreferenceInstance")
      .def(py::init([](double pos, std::vector<double> negs,
                       std::optional<double> text_pos,
                       std::optional<double> text_neg,
                       std::optional<std::vector<double>> q) {
             misp::pl::PreferenceInstance inst;
             inst.pos_logratio = pos;
             inst.neg_logratios = std::move(negs);
             inst.text_pos_logratio = text_pos;
             inst.text_neg_logratio = text_neg;
             inst.proposal_q = std::move(q);
             return inst;
           }),
           py::arg("pos_logratio"), py::arg("neg_logratios"),
           py::arg("text_pos_logratio") = std::nullopt,
           py::arg("text_neg_logratio") = std::nullopt,
           py::arg("q") = std::nullopt)
      .def_readwrite("pos_logratio",
                     &misp::pl::PreferenceInstance::pos_logratio)
      .def_readwrite("neg_logratios",
                     &misp::pl::PreferenceInstance::neg_logratios)
      .def_readwrite("text_pos_logratio",
                     &misp::pl::PreferenceInstance::text_pos_logratio)
      .def_readwrite("text_neg_logratio",
                     &misp::pl::PreferenceInstance::text_neg_logratio)
      .def_readwrite("q", &misp::pl::PreferenceInstance::proposal_q);

  py::class_<misp::pl::MnGradientReport>(m, "MnGradientReport")
      .def_readonly("advantages", &misp::pl::MnGradientReport::advantages)
      .def_readonly("preference_weights",
                    &misp::pl::MnGradientReport::preference_weights)
      .def_readonly("sigma_factor", &misp::pl::MnGradientReport::sigma_factor)
      .def_readonly("per_negative_delta_weights",
                    &misp::pl::MnGradientReport::per_negative_delta_weights);

  py::enum_<misp::pl::IsMode>(m, "IsMode")
      .value("LITERAL", misp::pl::IsMode::kLiteral)
      .value("SELF_NORMALIZED", misp::pl::IsMode::kSelfNormalized);

  m.def("pairwise_dpo_loss", &misp::pl::pairwise_dpo_loss,
        py::arg("pos_logratio"), py::arg("neg_logratio"), py::arg("beta"));
  m.def("advantages", &misp::pl::advantages, py::arg("instance"),
        py::arg("beta"));
  m.def("mn_loss", &misp::pl::mn_loss, py::arg("instance"), py::arg("beta"));
  m.def("mn_gradient_report", &misp::pl::mn_gradient_report,
        py::arg("instance"), py::arg("beta"));
  m.def("text_loss", &misp::pl::text_loss, py::arg("instance"),
        py::arg("beta"));
  m.def("total_loss", &misp::pl::total_loss, py::arg("instance"),
        py::arg("config"));
  m.def("is_weights", &misp::pl::is_weights, py::arg("advantages"),
        py::arg("q"), py::arg("mode"));

  // toy lab --------------------------------------------------------------
  py::class_<misp::toy::PlantedFactorSpec>(m, "PlantedFactorSpec")
      .def(py::init<>())
      .def_readwrite("num_factors", &misp::toy::PlantedFactorSpec::num_factors)
      .def_readwrite("samples_per_factor",
                     &misp::toy::PlantedFactorSpec::samples_per_factor)
      .def_readwrite("factor_noise",
                     &misp::toy::PlantedFactorSpec::factor_noise)
      .def_readwrite("seed", &misp::toy::PlantedFactorSpec::seed)
      .def_readwrite("dim", &misp::toy::PlantedFactorSpec::dim);

  py::class_<misp::toy::PlantedPool>(m, "PlantedPool")
      .def_readonly("centroids", &misp::toy::PlantedPool::centroids)
      .def_readonly("diffs", &misp::toy::PlantedPool::diffs)
      .def_readonly("labels", &misp::toy::PlantedPool::labels)
      .def_readonly("ids", &misp::toy::PlantedPool::ids);

  m.def("make_planted_pool", &misp::toy::make_planted_pool, py::arg("spec"));

  py::class_<misp::toy::SparseDataSpec>(m, "SparseDataSpec")
      .def(py::init<>())
      .def_readwrite("rows", &misp::toy::SparseDataSpec::rows)
      .def_readwrite("dim", &misp::toy::SparseDataSpec::dim)
      .def_readwrite("num_atoms", &misp::toy::SparseDataSpec::num_atoms)
      .def_readwrite("atoms_per_sample",
                     &misp::toy::SparseDataSpec::atoms_per_sample)
      .def_readwrite("noise", &misp::toy::SparseDataSpec::noise)
      .def_readwrite("seed", &misp::toy::SparseDataSpec::seed);

  m.def("make_sparse_dataset", &misp::toy::make_sparse_dataset,
        py::arg("spec"));

  py::enum_<misp::toy::NegativeSampler>(m, "NegativeSampler")
      .value("DIVERSE", misp::toy::NegativeSampler::kDiverse)
      .value("SINGLE_FACTOR", misp::toy::NegativeSampler::kSingleFactor)
      .value("RANDOM", misp::toy::NegativeSampler::kRandom);

  py::class_<misp::toy::ToyTrainConfig>(m, "ToyTrainConfig")
      .def(py::init<>())
      .def_readwrite("dpo", &misp::toy::ToyTrainConfig::dpo)
      .def_readwrite("sampler", &misp::toy::ToyTrainConfig::sampler)
      .def_readwrite("num_negatives",
                     &misp::toy::ToyTrainConfig::num_negatives)
      .def_readwrite("steps", &misp::toy::ToyTrainConfig::steps)
      .def_readwrite("learning_rate",
                     &misp::toy::ToyTrainConfig::learning_rate)
      .def_readwrite("seed", &misp::toy::ToyTrainConfig::seed)
      .def_readwrite("num_factors", &misp::toy::ToyTrainConfig::num_factors)
      .def_readwrite("feature_dim", &misp::toy::ToyTrainConfig::feature_dim)
      .def_readwrite("vocab_size", &misp::toy::ToyTrainConfig::vocab_size)
      .def_readwrite("response_length",
                     &misp::toy::ToyTrainConfig::response_length)
      .def_readwrite("num_train_instances",
                     &misp::toy::ToyTrainConfig::num_train_instances)
      .def_readwrite("num_heldout_instances",
                     &misp::toy::ToyTrainConfig::num_heldout_instances)
      .def_readwrite("context_noise",
                     &misp::toy::ToyTrainConfig::context_noise)
      .def_readwrite("factor_shift", &misp::toy::ToyTrainConfig::factor_shift)
      .def_readwrite("init_scale", &misp::toy::ToyTrainConfig::init_scale);

  py::class_<misp::toy::StepMetrics>(m, "StepMetrics")
      .def_readonly("step", &misp::toy::StepMetrics::step)
      .def_readonly("loss", &misp::toy::StepMetrics::loss)
      .def_readonly("margin", &misp::toy::StepMetrics::margin)
      .def_readonly("coverage", &misp::toy::StepMetrics::coverage);

  py::class_<misp::toy::ToyRunResult>(m, "ToyRunResult")
      .def_readonly("trace", &misp::toy::ToyRunResult::trace)
      .def_readonly("heldout_margin_all",
                    &misp::toy::ToyRunResult::heldout_margin_all)
      .def_readonly("heldout_margin_off_factor",
                    &misp::toy::ToyRunResult::heldout_margin_off_factor)
      .def_property_readonly(
          "weights",
          [](const misp::toy::ToyRunResult& r) { return r.policy.weights; });

  m.def("run_toy_training", &misp::toy::run_toy_training, py::arg("config"));
}
