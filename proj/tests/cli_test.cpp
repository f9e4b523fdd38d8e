#include <cstdlib>
#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "misp/io.hpp"
#include "misp/sae.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliFixture {
  fs::path dir;

  CliFixture() {
    dir = fs::temp_directory_path() /
          ("misp_cli_test_" + std::to_string(::getpid()) + "_" +
           std::to_string(counter++));
    fs::create_directories(dir);
  }
  ~CliFixture() { fs::remove_all(dir); }

  std::string path(const std::string& name) const {
    return (dir / name).string();
  }

  int run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = env + " " + std::string(MISP_CLI_PATH) + " " +
                            args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  }

  static std::string bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
  }

  void write_jsonl(const std::string& name,
                   const std::vector<std::pair<std::string,
                                               std::vector<double>>>& rows) const {
    std::ofstream out(path(name));
    for (const auto& [id, vec] : rows) {
      json rec{{"id", id}, {"vec", vec}};
      out << rec.dump() << "\n";
    }
  }

  static int counter;
};
int CliFixture::counter = 0;

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("fuse writes matched pairs in the binary format") {
  CliFixture fx;
  fx.write_jsonl("img.jsonl", {{"a", {1, 2}}, {"b", {0, 1}}});
  fx.write_jsonl("txt.jsonl", {{"a", {3, 4}}, {"b", {5, 6}}});
  REQUIRE(fx.run("fuse --image-embeddings " + fx.path("img.jsonl") +
                 " --text-embeddings " + fx.path("txt.jsonl") + " --out " +
                 fx.path("fused.bin")) == 0);

  const misp::io::NamedRows fused =
      misp::io::load_embeddings(fx.path("fused.bin"));
  REQUIRE(fused.rows.rows() == 2);
  REQUIRE(fused.rows.cols() == 4);
  CHECK(fused.rows(0, 0) == 3.0);
  CHECK(fused.rows(0, 3) == 8.0);
  CHECK(fs::exists(fx.path("fused.bin.run.json")));
}

TEST_CASE("fuse output size follows the format arithmetic") {
  CliFixture fx;
  std::vector<std::pair<std::string, std::vector<double>>> img, txt;
  for (int i = 0; i < 100; ++i) {
    img.push_back({std::to_string(i), {1.0 * i, 2.0, 3.0}});
    txt.push_back({std::to_string(i), {0.5, -1.0 * i, 2.5, 4.0}});
  }
  fx.write_jsonl("img.jsonl", img);
  fx.write_jsonl("txt.jsonl", txt);
  REQUIRE(fx.run("fuse --image-embeddings " + fx.path("img.jsonl") +
                 " --text-embeddings " + fx.path("txt.jsonl") + " --out " +
                 fx.path("fused.bin")) == 0);
  CHECK(fs::file_size(fx.path("fused.bin")) == 24 + 100 * 12 * 4);
}

TEST_CASE("fuse reports disjoint ids with an empty output") {
  CliFixture fx;
  fx.write_jsonl("img.jsonl", {{"a", {1, 2}}});
  fx.write_jsonl("txt.jsonl", {{"z", {3, 4}}});
  CHECK(fx.run("fuse --image-embeddings " + fx.path("img.jsonl") +
               " --text-embeddings " + fx.path("txt.jsonl") + " --out " +
               fx.path("fused.bin")) == 3);
  CHECK(misp::io::load_embeddings(fx.path("fused.bin")).rows.rows() == 0);
}

TEST_CASE("fuse flags partial mismatches but keeps matched rows") {
  CliFixture fx;
  fx.write_jsonl("img.jsonl", {{"a", {1}}, {"only-img", {2}}});
  fx.write_jsonl("txt.jsonl", {{"a", {3}}, {"only-txt", {4}}});
  CHECK(fx.run("fuse --image-embeddings " + fx.path("img.jsonl") +
               " --text-embeddings " + fx.path("txt.jsonl") + " --out " +
               fx.path("fused.bin")) == 3);
  CHECK(misp::io::load_embeddings(fx.path("fused.bin")).rows.rows() == 1);
}

TEST_CASE("train-sae with epochs 0 writes the seeded initialization") {
  CliFixture fx;
  REQUIRE(fx.run("synth --kind sparse --rows 20 --dim 8 --seed 5 --out " +
                 fx.path("d.bin")) == 0);
  REQUIRE(fx.run("train-sae --diffs " + fx.path("d.bin") +
                 " --checkpoint " + fx.path("sae.json") +
                 " --hidden-dim 6 --epochs 0 --seed 9") == 0);
  const misp::sae::SaeModel model =
      misp::io::load_checkpoint(fx.path("sae.json"));
  misp::sae::SaeConfig cfg = model.config;
  const misp::sae::SaeModel init = misp::sae::init_model(cfg);
  CHECK(model.encoder_weights == init.encoder_weights);
  CHECK(model.decoder_weights == init.decoder_weights);
  CHECK(fs::exists(fx.path("sae.json.history.json")));
}

TEST_CASE("train-sae is byte-deterministic per seed") {
  CliFixture fx;
  REQUIRE(fx.run("synth --kind sparse --rows 60 --dim 10 --seed 1 --out " +
                 fx.path("d.bin")) == 0);
  const std::string base = "train-sae --diffs " + fx.path("d.bin") +
                           " --hidden-dim 8 --epochs 4 --seed 77 --checkpoint ";
  REQUIRE(fx.run(base + fx.path("a.json")) == 0);
  REQUIRE(fx.run(base + fx.path("b.json")) == 0);
  CHECK(CliFixture::bytes(fx.path("a.json")) ==
        CliFixture::bytes(fx.path("b.json")));
}

TEST_CASE("select honors k, beta-div and the pool size") {
  CliFixture fx;
  REQUIRE(fx.run("synth --kind planted --factors 3 --per-factor 2 "
                 "--planted-dim 9 --seed 4 --out-positive " +
                 fx.path("p.bin") + " --out-candidates " + fx.path("c.bin") +
                 " --out-labels " + fx.path("l.json") + " --out-diffs " +
                 fx.path("d.bin")) == 0);
  REQUIRE(fx.run("train-sae --diffs " + fx.path("d.bin") + " --checkpoint " +
                 fx.path("sae.json") + " --hidden-dim 8 --epochs 50 --seed 4") ==
          0);

  // k larger than the pool selects everything.
  REQUIRE(fx.run("select --positives " + fx.path("p.bin") + " --candidates " +
                 fx.path("c.bin") + " --checkpoint " + fx.path("sae.json") +
                 " --k 50 --out " + fx.path("all.jsonl")) == 0);
  const auto all = misp::io::load_manifests(fx.path("all.jsonl"));
  REQUIRE(all.size() == 1);
  CHECK(all[0].selected.size() == 6);
  CHECK(all[0].prompt_id == "0");

  // beta-div 0 reduces to top-k by score.
  REQUIRE(fx.run("select --positives " + fx.path("p.bin") + " --candidates " +
                 fx.path("c.bin") + " --checkpoint " + fx.path("sae.json") +
                 " --k 3 --beta-div 0 --out " + fx.path("top.jsonl")) == 0);
  const auto top = misp::io::load_manifests(fx.path("top.jsonl"));
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& e : all[0].selected) ranked.push_back({e.score, e.candidate_id});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return std::stoi(a.second) < std::stoi(b.second);
  });
  REQUIRE(top[0].selected.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(top[0].selected[i].candidate_id == ranked[i].second);
    CHECK(top[0].selected[i].diversity_bonus == 0.0);
  }
}

TEST_CASE("select rejects a checkpoint with mismatched dims") {
  CliFixture fx;
  REQUIRE(fx.run("synth --kind planted --factors 3 --per-factor 2 "
                 "--planted-dim 9 --seed 4 --out-positive " +
                 fx.path("p.bin") + " --out-candidates " + fx.path("c.bin") +
                 " --out-labels " + fx.path("l.json")) == 0);
  REQUIRE(fx.run("synth --kind sparse --rows 20 --dim 5 --seed 2 --out " +
                 fx.path("other.bin")) == 0);
  REQUIRE(fx.run("train-sae --diffs " + fx.path("other.bin") +
                 " --checkpoint " + fx.path("sae5.json") +
                 " --hidden-dim 4 --epochs 1 --seed 2") == 0);
  CHECK(fx.run("select --positives " + fx.path("p.bin") + " --candidates " +
               fx.path("c.bin") + " --checkpoint " + fx.path("sae5.json") +
               " --out " + fx.path("m.jsonl")) == 3);
}

TEST_CASE("planted pipeline coverage lands in the manifests") {
  CliFixture fx;
  REQUIRE(fx.run("synth --kind planted --factors 4 --per-factor 3 "
                 "--planted-dim 16 --factor-noise 0.05 --seed 12 "
                 "--out-positive " + fx.path("p.bin") + " --out-candidates " +
                 fx.path("c.bin") + " --out-labels " + fx.path("l.json") +
                 " --out-diffs " + fx.path("d.bin")) == 0);
  REQUIRE(fx.run("train-sae --diffs " + fx.path("d.bin") + " --checkpoint " +
                 fx.path("sae.json") +
                 " --hidden-dim 16 --epochs 300 --seed 12") == 0);
  REQUIRE(fx.run("select --positives " + fx.path("p.bin") + " --candidates " +
                 fx.path("c.bin") + " --checkpoint " + fx.path("sae.json") +
                 " --k 3 --beta-div 1.0 --labels " + fx.path("l.json") +
                 " --out " + fx.path("m.jsonl")) == 0);
  json doc;
  std::ifstream(fx.path("m.jsonl")) >> doc;
  REQUIRE(doc.contains("coverage"));
  CHECK(doc["coverage"].get<int>() >= 3);
}

TEST_CASE("train-toy with zero steps emits only the initial metrics") {
  CliFixture fx;
  REQUIRE(fx.run("train-toy --steps 0 --seed 3 --out " + fx.path("t.jsonl")) ==
          0);
  std::ifstream in(fx.path("t.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      const json rec = json::parse(line);
      CHECK(rec.at("step") == 0);
      CHECK(rec.contains("loss"));
      CHECK(rec.contains("margin"));
      CHECK(rec.contains("coverage"));
      ++lines;
    }
  }
  CHECK(lines == 1);
}

TEST_CASE("export-viz flags the selected rows") {
  CliFixture fx;
  REQUIRE(fx.run("synth --kind planted --factors 4 --per-factor 5 "
                 "--planted-dim 12 --seed 8 --out-positive " + fx.path("p.bin") +
                 " --out-candidates " + fx.path("c.bin") + " --out-labels " +
                 fx.path("l.json") + " --out-diffs " + fx.path("d.bin")) == 0);
  REQUIRE(fx.run("train-sae --diffs " + fx.path("d.bin") + " --checkpoint " +
                 fx.path("sae.json") + " --hidden-dim 8 --epochs 40 --seed 8") ==
          0);
  REQUIRE(fx.run("select --positives " + fx.path("p.bin") + " --candidates " +
                 fx.path("c.bin") + " --checkpoint " + fx.path("sae.json") +
                 " --k 3 --out " + fx.path("m.jsonl")) == 0);
  REQUIRE(fx.run("export-viz --manifest " + fx.path("m.jsonl") + " --fused " +
                 fx.path("c.bin") + " --out " + fx.path("viz.csv")) == 0);

  std::ifstream in(fx.path("viz.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "id,x,y,selected");
  int rows = 0, flagged = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    flagged += line.back() == '1';
  }
  CHECK(rows == 20);
  CHECK(flagged == 3);
}

TEST_CASE("grad-check passes on every scope") {
  CliFixture fx;
  CHECK(fx.run("grad-check --scope sae --seed 1") == 0);
  CHECK(fx.run("grad-check --scope pl_dpo --seed 2") == 0);
  CHECK(fx.run("grad-check --scope toy --seed 3") == 0);
  CHECK(fx.run("grad-check --scope bogus --seed 1") == 2);
}

TEST_CASE("exit codes distinguish config and data problems") {
  CliFixture fx;
  CHECK(fx.run("no-such-command") == 2);
  CHECK(fx.run("train-sae --diffs " + fx.path("missing.bin") +
               " --checkpoint " + fx.path("x.json")) == 3);
  CHECK(fx.run("synth --kind nonsense --out " + fx.path("x.bin")) == 2);
  CHECK(fx.run("train-toy --steps 5 --factors 9 --out " + fx.path("t.jsonl")) ==
        3);  // feature_dim 8 cannot host 9 factor slots
}

TEST_CASE("MISP_SEED provides the default seed and the flag overrides it") {
  CliFixture fx;
  REQUIRE(fx.run("synth --kind sparse --rows 10 --dim 4 --out " +
                 fx.path("env.bin"), "MISP_SEED=42") == 0);
  REQUIRE(fx.run("synth --kind sparse --rows 10 --dim 4 --seed 42 --out " +
                 fx.path("flag.bin")) == 0);
  CHECK(CliFixture::bytes(fx.path("env.bin")) ==
        CliFixture::bytes(fx.path("flag.bin")));

  REQUIRE(fx.run("synth --kind sparse --rows 10 --dim 4 --seed 7 --out " +
                 fx.path("override.bin"), "MISP_SEED=42") == 0);
  REQUIRE(fx.run("synth --kind sparse --rows 10 --dim 4 --seed 7 --out " +
                 fx.path("plain7.bin")) == 0);
  CHECK(CliFixture::bytes(fx.path("override.bin")) ==
        CliFixture::bytes(fx.path("plain7.bin")));
  CHECK(CliFixture::bytes(fx.path("override.bin")) !=
        CliFixture::bytes(fx.path("env.bin")));
}

TEST_CASE("a config file seeds defaults and flags still win") {
  CliFixture fx;
  {
    std::ofstream out(fx.path("cfg.json"));
    out << R"({"seed": 11, "sae": {"hidden_dim": 5, "epochs": 2}})";
  }
  REQUIRE(fx.run("synth --kind sparse --rows 30 --dim 6 --seed 11 --out " +
                 fx.path("d.bin")) == 0);
  REQUIRE(fx.run("--config " + fx.path("cfg.json") + " train-sae --diffs " +
                 fx.path("d.bin") + " --checkpoint " + fx.path("a.json")) == 0);
  const misp::sae::SaeModel a = misp::io::load_checkpoint(fx.path("a.json"));
  CHECK(a.config.hidden_dim == 5);
  CHECK(a.config.epochs == 2);
  CHECK(a.config.seed == 11);

  REQUIRE(fx.run("--config " + fx.path("cfg.json") + " train-sae --diffs " +
                 fx.path("d.bin") + " --checkpoint " + fx.path("b.json") +
                 " --hidden-dim 3") == 0);
  CHECK(misp::io::load_checkpoint(fx.path("b.json")).config.hidden_dim == 3);

  {
    std::ofstream out(fx.path("bad.json"));
    out << R"({"sae": {"hidden_dims": 5}})";
  }
  CHECK(fx.run("--config " + fx.path("bad.json") + " grad-check --scope toy") ==
        2);
}

}  // TEST_SUITE
