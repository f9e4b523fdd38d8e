#include "misp/pipeline.hpp"

#include <fstream>
#include <json.hpp>

#include "misp/error.hpp"

namespace misp::pipeline {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("config: unknown key \"" + key + "\" in " + where);
    }
  }
}

}  // namespace

toy::NegativeSampler sampler_from_string(const std::string& name) {
  if (name == "diverse") return toy::NegativeSampler::kDiverse;
  if (name == "single") return toy::NegativeSampler::kSingleFactor;
  if (name == "random") return toy::NegativeSampler::kRandom;
  throw ConfigError("unknown sampler \"" + name +
                    "\" (expected diverse|single|random)");
}

std::string sampler_to_string(toy::NegativeSampler sampler) {
  switch (sampler) {
    case toy::NegativeSampler::kDiverse: return "diverse";
    case toy::NegativeSampler::kSingleFactor: return "single";
    case toy::NegativeSampler::kRandom: return "random";
  }
  return "diverse";
}

sae::Optimizer optimizer_from_string(const std::string& name) {
  if (name == "adam") return sae::Optimizer::kAdam;
  if (name == "sgd") return sae::Optimizer::kSgd;
  throw ConfigError("unknown optimizer \"" + name + "\" (expected adam|sgd)");
}

std::string optimizer_to_string(sae::Optimizer optimizer) {
  return optimizer == sae::Optimizer::kAdam ? "adam" : "sgd";
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }

  PipelineConfig cfg;
  reject_unknown(doc, {"seed", "sae", "selection", "dpo", "toy", "paths"},
                 "top level");

  // The top-level seed is the default for every section; a section's own
  // seed key still wins.
  if (doc.contains("seed")) {
    cfg.seed = doc["seed"].get<std::uint64_t>();
    cfg.sae.seed = cfg.seed;
    cfg.toy.seed = cfg.seed;
  }

  if (doc.contains("sae")) {
    const json& s = doc["sae"];
    reject_unknown(s,
                   {"input_dim", "hidden_dim", "sparsity_weight",
                    "target_activation", "learning_rate", "batch_size",
                    "epochs", "seed", "optimizer"},
                   "sae");
    if (s.contains("input_dim")) cfg.sae.input_dim = s["input_dim"];
    if (s.contains("hidden_dim")) cfg.sae.hidden_dim = s["hidden_dim"];
    if (s.contains("sparsity_weight")) {
      cfg.sae.sparsity_weight = s["sparsity_weight"];
    }
    if (s.contains("target_activation")) {
      cfg.sae.target_activation = s["target_activation"];
    }
    if (s.contains("learning_rate")) cfg.sae.learning_rate = s["learning_rate"];
    if (s.contains("batch_size")) cfg.sae.batch_size = s["batch_size"];
    if (s.contains("epochs")) cfg.sae.epochs = s["epochs"];
    if (s.contains("seed")) cfg.sae.seed = s["seed"];
    if (s.contains("optimizer")) {
      cfg.sae.optimizer = optimizer_from_string(s["optimizer"]);
    }
  }

  if (doc.contains("selection")) {
    const json& s = doc["selection"];
    reject_unknown(s, {"k", "diversity_weight"}, "selection");
    if (s.contains("k")) cfg.selection.k = s["k"];
    if (s.contains("diversity_weight")) {
      cfg.selection.diversity_weight = s["diversity_weight"];
    }
  }

  if (doc.contains("dpo")) {
    const json& s = doc["dpo"];
    reject_unknown(s, {"beta", "lambda"}, "dpo");
    if (s.contains("beta")) cfg.dpo.beta = s["beta"];
    if (s.contains("lambda")) cfg.dpo.lambda = s["lambda"];
  }

  if (doc.contains("toy")) {
    const json& s = doc["toy"];
    reject_unknown(s,
                   {"sampler", "num_negatives", "steps", "learning_rate",
                    "seed", "num_factors", "feature_dim", "vocab_size",
                    "response_length", "num_train_instances",
                    "num_heldout_instances", "context_noise", "factor_shift",
                    "init_scale"},
                   "toy");
    if (s.contains("sampler")) {
      cfg.toy.sampler = sampler_from_string(s["sampler"]);
    }
    if (s.contains("num_negatives")) cfg.toy.num_negatives = s["num_negatives"];
    if (s.contains("steps")) cfg.toy.steps = s["steps"];
    if (s.contains("learning_rate")) cfg.toy.learning_rate = s["learning_rate"];
    if (s.contains("seed")) cfg.toy.seed = s["seed"];
    if (s.contains("num_factors")) cfg.toy.num_factors = s["num_factors"];
    if (s.contains("feature_dim")) cfg.toy.feature_dim = s["feature_dim"];
    if (s.contains("vocab_size")) cfg.toy.vocab_size = s["vocab_size"];
    if (s.contains("response_length")) {
      cfg.toy.response_length = s["response_length"];
    }
    if (s.contains("num_train_instances")) {
      cfg.toy.num_train_instances = s["num_train_instances"];
    }
    if (s.contains("num_heldout_instances")) {
      cfg.toy.num_heldout_instances = s["num_heldout_instances"];
    }
    if (s.contains("context_noise")) cfg.toy.context_noise = s["context_noise"];
    if (s.contains("factor_shift")) cfg.toy.factor_shift = s["factor_shift"];
    if (s.contains("init_scale")) cfg.toy.init_scale = s["init_scale"];
  }

  if (doc.contains("paths")) {
    const json& s = doc["paths"];
    reject_unknown(s,
                   {"image_embeddings", "text_embeddings", "fused", "diffs",
                    "checkpoint", "manifests", "trace", "viz", "labels",
                    "positives", "candidates"},
                   "paths");
    const auto get = [&](const char* key, std::string& dst) {
      if (s.contains(key)) dst = s[key].get<std::string>();
    };
    get("image_embeddings", cfg.paths.image_embeddings);
    get("text_embeddings", cfg.paths.text_embeddings);
    get("fused", cfg.paths.fused);
    get("diffs", cfg.paths.diffs);
    get("checkpoint", cfg.paths.checkpoint);
    get("manifests", cfg.paths.manifests);
    get("trace", cfg.paths.trace);
    get("viz", cfg.paths.viz);
    get("labels", cfg.paths.labels);
    get("positives", cfg.paths.positives);
    get("candidates", cfg.paths.candidates);
  }

  // The toy config carries its own copy of the shared dpo settings.
  cfg.toy.dpo = cfg.dpo;
  return cfg;
}

}  // namespace misp::pipeline
