#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "misp/negselect.hpp"
#include "misp/pl_dpo.hpp"
#include "misp/sae.hpp"

namespace misp::io {

// Embedding files come in two formats, auto-detected by magic bytes:
//  (a) JSON-lines, one {"id": string, "vec": [numbers]} per line;
//  (b) binary: "MISP", u32 format version, u64 row count, u64 dimension,
//      then row-major little-endian float32 data.
// Binary rows have no stored ids; they load as decimal row indices.
struct NamedRows {
  std::vector<std::string> ids;
  Eigen::MatrixXd rows;
};

inline constexpr std::uint32_t kBinaryFormatVersion = 1;

NamedRows load_embeddings(const std::string& path);
void save_embeddings_binary(const std::string& path,
                            const Eigen::Ref<const Eigen::MatrixXd>& rows);
void save_embeddings_jsonl(const std::string& path, const NamedRows& data);

// SAE checkpoints: a single misp-sae-v1 JSON document with full
// double-precision numbers.
void save_checkpoint(const std::string& path, const sae::SaeModel& model);
sae::SaeModel load_checkpoint(const std::string& path);

// Selection manifests, one misp-sel-v1 JSON object per line. `coverage`,
// when >= 0, is written as an extra key (distinct planted factors among the
// selected ids; only synth-labeled pools have it).
std::string manifest_to_json(const sel::SelectionManifest& manifest,
                             int coverage = -1);
std::vector<sel::SelectionManifest> load_manifests(const std::string& path);

// Preference-instance batches: JSON-lines with keys pos_logratio,
// neg_logratios, optional text_pos_logratio/text_neg_logratio, optional q.
std::vector<pl::PreferenceInstance> load_instances(const std::string& path);

// Planted-factor labels sidecar: {"format":"misp-labels-v1","labels":{id:f}}.
void save_labels(const std::string& path,
                 const std::vector<std::string>& ids,
                 const std::vector<int>& labels);
std::vector<std::pair<std::string, int>> load_labels(const std::string& path);

// Hex sha256 of a file's bytes (RunRecord input digests).
std::string sha256_file(const std::string& path);

// Lossless double formatting (shortest round-trip form), shared by the CSV
// writer and trace output so reruns stay byte-identical.
std::string format_double(double v);

}  // namespace misp::io
