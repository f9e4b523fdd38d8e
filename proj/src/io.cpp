#include "misp/io.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "misp/error.hpp"

namespace misp::io {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'M', 'I', 'S', 'P'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  }
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) {
    b[i] = static_cast<unsigned char>(bits >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(b), 4);
}

NamedRows load_binary(std::istream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  const std::uint32_t version = get_u32(in);
  if (version != kBinaryFormatVersion) {
    throw DataError(path + ": unsupported format version " +
                    std::to_string(version));
  }
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t dim = get_u64(in);
  if (!in) throw DataError(path + ": truncated header");
  if (dim == 0) throw DataError(path + ": zero dimension");

  NamedRows data;
  data.rows.resize(static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(dim));
  data.ids.reserve(rows);
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (std::uint64_t c = 0; c < dim; ++c) {
      data.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          static_cast<double>(get_f32(in));
    }
    data.ids.push_back(std::to_string(r));
  }
  if (!in) throw DataError(path + ": truncated row data");
  return data;
}

NamedRows load_jsonl(std::istream& in, const std::string& path) {
  NamedRows data;
  std::vector<std::vector<double>> rows;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.contains("id") || !rec.contains("vec")) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": record needs \"id\" and \"vec\"");
    }
    std::string id = rec["id"].is_string()
                         ? rec["id"].get<std::string>()
                         : rec["id"].dump();
    if (!seen.insert(id).second) {
      throw DataError(path + ": duplicate id \"" + id + "\"");
    }
    auto vec = rec["vec"].get<std::vector<double>>();
    if (vec.empty()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": empty vec");
    }
    if (!rows.empty() && vec.size() != rows.front().size()) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": inconsistent dimension");
    }
    for (double v : vec) {
      if (!std::isfinite(v)) {
        throw DataError(path + ":" + std::to_string(lineno) +
                        ": non-finite entry");
      }
    }
    data.ids.push_back(std::move(id));
    rows.push_back(std::move(vec));
  }
  if (rows.empty()) throw DataError(path + ": no records");
  data.rows.resize(static_cast<Eigen::Index>(rows.size()),
                   static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      data.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r][c];
    }
  }
  return data;
}

json config_to_json(const sae::SaeConfig& cfg) {
  return json{{"input_dim", cfg.input_dim},
              {"hidden_dim", cfg.hidden_dim},
              {"sparsity_weight", cfg.sparsity_weight},
              {"target_activation", cfg.target_activation},
              {"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"seed", cfg.seed},
              {"optimizer",
               cfg.optimizer == sae::Optimizer::kAdam ? "adam" : "sgd"}};
}

sae::SaeConfig config_from_json(const json& j) {
  sae::SaeConfig cfg;
  cfg.input_dim = j.at("input_dim").get<Eigen::Index>();
  cfg.hidden_dim = j.at("hidden_dim").get<Eigen::Index>();
  cfg.sparsity_weight = j.at("sparsity_weight").get<double>();
  cfg.target_activation = j.at("target_activation").get<double>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<Eigen::Index>();
  cfg.epochs = j.at("epochs").get<Eigen::Index>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  const std::string opt = j.value("optimizer", "adam");
  if (opt == "adam") {
    cfg.optimizer = sae::Optimizer::kAdam;
  } else if (opt == "sgd") {
    cfg.optimizer = sae::Optimizer::kSgd;
  } else {
    throw DataError("checkpoint: unknown optimizer \"" + opt + "\"");
  }
  return cfg;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw DataError("checkpoint: bad matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()),
                    static_cast<Eigen::Index>(j.front().size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != m.cols()) {
      throw DataError("checkpoint: ragged matrix");
    }
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

std::ifstream open_input(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

}  // namespace

NamedRows load_embeddings(const std::string& path) {
  std::ifstream in = open_input(path, true);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0) {
    in.seekg(0);
    return load_binary(in, path);
  }
  in.clear();
  in.seekg(0);
  return load_jsonl(in, path);
}

void save_embeddings_binary(const std::string& path,
                            const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  if (rows.cols() == 0) {
    throw DimensionError("save_embeddings_binary: zero dimension");
  }
  std::ofstream out = open_output(path, true);
  out.write(kMagic, 4);
  put_u32(out, kBinaryFormatVersion);
  put_u64(out, static_cast<std::uint64_t>(rows.rows()));
  put_u64(out, static_cast<std::uint64_t>(rows.cols()));
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      put_f32(out, static_cast<float>(rows(r, c)));
    }
  }
  if (!out) throw DataError("failed writing " + path);
}

void save_embeddings_jsonl(const std::string& path, const NamedRows& data) {
  if (static_cast<Eigen::Index>(data.ids.size()) != data.rows.rows()) {
    throw DimensionError("save_embeddings_jsonl: ids/rows mismatch");
  }
  std::ofstream out = open_output(path, false);
  for (Eigen::Index r = 0; r < data.rows.rows(); ++r) {
    json rec{{"id", data.ids[static_cast<std::size_t>(r)]},
             {"vec", vector_to_json(data.rows.row(r).transpose())}};
    out << rec.dump() << "\n";
  }
  if (!out) throw DataError("failed writing " + path);
}

void save_checkpoint(const std::string& path, const sae::SaeModel& model) {
  json doc{{"format", "misp-sae-v1"},
           {"config", config_to_json(model.config)},
           {"encoder_weights", matrix_to_json(model.encoder_weights)},
           {"encoder_bias", vector_to_json(model.encoder_bias)},
           {"decoder_weights", matrix_to_json(model.decoder_weights)},
           {"decoder_bias", vector_to_json(model.decoder_bias)}};
  std::ofstream out = open_output(path, false);
  out << doc.dump() << "\n";
  if (!out) throw DataError("failed writing " + path);
}

sae::SaeModel load_checkpoint(const std::string& path) {
  std::ifstream in = open_input(path, false);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (doc.value("format", "") != "misp-sae-v1") {
    throw DataError(path + ": not a misp-sae-v1 checkpoint");
  }
  sae::SaeModel model;
  model.config = config_from_json(doc.at("config"));
  model.encoder_weights = matrix_from_json(doc.at("encoder_weights"));
  model.encoder_bias = vector_from_json(doc.at("encoder_bias"));
  model.decoder_weights = matrix_from_json(doc.at("decoder_weights"));
  model.decoder_bias = vector_from_json(doc.at("decoder_bias"));
  if (model.encoder_weights.rows() != model.config.hidden_dim ||
      model.encoder_weights.cols() != model.config.input_dim ||
      model.decoder_weights.rows() != model.config.input_dim ||
      model.decoder_weights.cols() != model.config.hidden_dim ||
      model.encoder_bias.size() != model.config.hidden_dim ||
      model.decoder_bias.size() != model.config.input_dim) {
    throw DataError(path + ": parameter shapes inconsistent with config");
  }
  if (!model.encoder_weights.allFinite() || !model.decoder_weights.allFinite() ||
      !model.encoder_bias.allFinite() || !model.decoder_bias.allFinite()) {
    throw DataError(path + ": non-finite parameters");
  }
  return model;
}

std::string manifest_to_json(const sel::SelectionManifest& manifest,
                             int coverage) {
  json selected = json::array();
  for (const auto& e : manifest.selected) {
    selected.push_back(json{{"id", e.candidate_id},
                            {"score", e.score},
                            {"diversity_bonus", e.diversity_bonus}});
  }
  json doc{{"format", "misp-sel-v1"},
           {"prompt_id", manifest.prompt_id},
           {"positive_id", manifest.positive_id},
           {"config",
            json{{"k", manifest.config.k},
                 {"diversity_weight", manifest.config.diversity_weight}}},
           {"selected", std::move(selected)}};
  if (coverage >= 0) doc["coverage"] = coverage;
  return doc.dump();
}

std::vector<sel::SelectionManifest> load_manifests(const std::string& path) {
  std::ifstream in = open_input(path, false);
  std::vector<sel::SelectionManifest> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (doc.value("format", "") != "misp-sel-v1") {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": not a misp-sel-v1 manifest");
    }
    sel::SelectionManifest m;
    m.prompt_id = doc.at("prompt_id").get<std::string>();
    m.positive_id = doc.at("positive_id").get<std::string>();
    m.config.k = doc.at("config").at("k").get<int>();
    m.config.diversity_weight =
        doc.at("config").at("diversity_weight").get<double>();
    for (const auto& e : doc.at("selected")) {
      m.selected.push_back({e.at("id").get<std::string>(),
                            e.at("score").get<double>(),
                            e.at("diversity_bonus").get<double>()});
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<pl::PreferenceInstance> load_instances(const std::string& path) {
  std::ifstream in = open_input(path, false);
  std::vector<pl::PreferenceInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    pl::PreferenceInstance inst;
    inst.pos_logratio = doc.at("pos_logratio").get<double>();
    inst.neg_logratios = doc.at("neg_logratios").get<std::vector<double>>();
    if (doc.contains("text_pos_logratio")) {
      inst.text_pos_logratio = doc["text_pos_logratio"].get<double>();
    }
    if (doc.contains("text_neg_logratio")) {
      inst.text_neg_logratio = doc["text_neg_logratio"].get<double>();
    }
    if (doc.contains("q")) {
      inst.proposal_q = doc["q"].get<std::vector<double>>();
    }
    try {
      inst.validate();
    } catch (const Error& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(inst));
  }
  return out;
}

void save_labels(const std::string& path, const std::vector<std::string>& ids,
                 const std::vector<int>& labels) {
  if (ids.size() != labels.size()) {
    throw DimensionError("save_labels: ids/labels mismatch");
  }
  json map = json::object();
  for (std::size_t i = 0; i < ids.size(); ++i) map[ids[i]] = labels[i];
  json doc{{"format", "misp-labels-v1"}, {"labels", std::move(map)}};
  std::ofstream out = open_output(path, false);
  out << doc.dump() << "\n";
  if (!out) throw DataError("failed writing " + path);
}

std::vector<std::pair<std::string, int>> load_labels(const std::string& path) {
  std::ifstream in = open_input(path, false);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (doc.value("format", "") != "misp-labels-v1") {
    throw DataError(path + ": not a misp-labels-v1 file");
  }
  std::vector<std::pair<std::string, int>> out;
  for (const auto& [id, factor] : doc.at("labels").items()) {
    out.emplace_back(id, factor.get<int>());
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in = open_input(path, true);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    if (ctx != nullptr) EVP_MD_CTX_free(ctx);
    throw DataError("sha256: digest init failed");
  }
  char buf[1 << 16];
  while (in.good()) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    if (got > 0) {
      EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(got));
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);

  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string format_double(double v) { return json(v).dump(); }

}  // namespace misp::io
