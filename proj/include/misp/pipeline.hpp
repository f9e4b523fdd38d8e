#pragma once

#include <cstdint>
#include <string>

#include "misp/negselect.hpp"
#include "misp/pl_dpo.hpp"
#include "misp/sae.hpp"
#include "misp/toy.hpp"

namespace misp::pipeline {

// Input/output paths a pipeline config file may pre-wire; command-line flags
// override any of them.
struct PathConfig {
  std::string image_embeddings;
  std::string text_embeddings;
  std::string fused;
  std::string diffs;
  std::string checkpoint;
  std::string manifests;
  std::string trace;
  std::string viz;
  std::string labels;
  std::string positives;
  std::string candidates;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  sae::SaeConfig sae;
  sel::SelectionConfig selection;
  pl::DpoConfig dpo;
  toy::ToyTrainConfig toy;
  PathConfig paths;
};

// Parse a declarative JSON config. Unknown keys are rejected so typos fail
// loudly. Missing sections keep the built-in defaults.
PipelineConfig load_pipeline_config(const std::string& path);

toy::NegativeSampler sampler_from_string(const std::string& name);
std::string sampler_to_string(toy::NegativeSampler sampler);

sae::Optimizer optimizer_from_string(const std::string& name);
std::string optimizer_to_string(sae::Optimizer optimizer);

}  // namespace misp::pipeline
