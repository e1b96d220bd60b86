#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "etd/cli/cli.hpp"
#include "etd/fhgraph/jsonl.hpp"
#include "etd/synthdata/traffic.hpp"
#include "json.hpp"

using namespace etd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("etd_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

struct Run {
  int code = 0;
  std::string out, err;
};

Run etdnet(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

const std::string kMicro = std::string(ETD_FIXTURE_DIR) + "/micro_task.jsonl";

}  // namespace

TEST_CASE("generate traffic prints counts") {
  auto r = etdnet({"generate", "traffic", "--vehicles", "1", "--timesteps", "3"});
  CHECK(r.code == 0);
  CHECK(r.out == "nodes=3 intra=0 inter=2\n");
}

TEST_CASE("generate ledger without illicit nodes records undefined AUC") {
  TempDir dir("ledger");
  auto r = etdnet({"generate", "ledger", "--illicit", "0", "--out", dir / "d"});
  REQUIRE(r.code == 0);
  auto meta = nlohmann::json::parse(slurp(dir / "d/metadata.json"));
  CHECK(meta["auc_defined"] == false);
  CHECK(fs::exists(dir / "d/unit_0000.jsonl"));
}

TEST_CASE("generate is byte-identical for equal flags and seed") {
  TempDir dir("regen");
  for (const char* sub : {"a", "b"}) {
    auto r = etdnet({"generate", "traffic", "--static", "4", "--scenes", "3", "--val-scenes", "1", "--seed", "9", "--out",
                  dir / sub});
    REQUIRE(r.code == 0);
  }
  auto a = tree(dir.path / "a"), b = tree(dir.path / "b");
  CHECK(a.size() == 5);
  CHECK(a == b);
  CHECK(a.count("train/unit_0002.jsonl") == 1);
  CHECK(a.count("val/unit_0000.jsonl") == 1);
}

TEST_CASE("invalid generator config is a usage error naming the field") {
  auto r = etdnet({"generate", "traffic", "--timesteps", "1"});
  CHECK(r.code == 2);
  CHECK(r.err.find("n_timesteps") != std::string::npos);
  r = etdnet({"generate", "ledger", "--illicit", "0.9", "--unknown", "0.5"});
  CHECK(r.code == 2);
  CHECK(r.err.find("illicit_fraction") != std::string::npos);
  CHECK(etdnet({"train"}).code == 2);
  CHECK(etdnet({"nonsense"}).code == 2);
}

TEST_CASE("validate reports counts and rejects a broken file") {
  TempDir dir("validate");
  auto r = etdnet({"validate", "--data", kMicro});
  CHECK(r.code == 0);
  CHECK(r.out.find("nodes=8") != std::string::npos);
  std::ofstream(dir / "bad.jsonl") << "{\"kind\":\"edge\",\"family\":\"inter\",\"src\":{\"entity\":\"a\",\"t\":0},"
                                      "\"dst\":{\"entity\":\"b\",\"t\":1}}\n";
  CHECK(etdnet({"validate", "--data", dir / "bad.jsonl"}).code == 4);
}

TEST_CASE("train with one epoch writes a one-row CSV and the run files") {
  TempDir dir("train1");
  auto r = etdnet({"train", "--data", kMicro, "--d", "16", "--max-epochs", "1", "--out", dir / "run"});
  REQUIRE(r.code == 0);
  auto rows = csv_rows(dir / "run/metrics.csv");
  CHECK(rows.size() == 2);
  CHECK(rows[0].front() == "epoch");
  CHECK(rows[0].back() == "flops");
  for (const char* f : {"timing.csv", "checkpoint.json", "flops.json", "manifest.json"}) {
    CHECK(fs::exists(dir.path / "run" / f));
  }
  auto m = nlohmann::json::parse(slurp(dir / "run/manifest.json"));
  CHECK(m["model"]["d"] == 16);
  CHECK(m["train"]["max_epochs"] == 1);
  CHECK(m["model"]["layers"] == 2);
}

TEST_CASE("flags override the config file, which overrides defaults") {
  TempDir dir("precedence");
  std::ofstream(dir / "cfg.json") << R"({"model": {"d": 12, "sa_heads": 2, "ha_heads": 2},
                                       "train": {"max_epochs": 2, "lr": 0.01}})";
  auto r = etdnet({"train", "--data", kMicro, "--config", dir / "cfg.json", "--max-epochs", "1", "--out", dir / "run"});
  REQUIRE(r.code == 0);
  auto m = nlohmann::json::parse(slurp(dir / "run/manifest.json"));
  CHECK(m["model"]["d"] == 12);
  CHECK(m["train"]["lr"] == 0.01);
  CHECK(m["train"]["max_epochs"] == 1);
  CHECK(m["train"]["patience"] == 7);

  // the manifest itself is a valid config and reproduces the run
  auto again = etdnet({"train", "--config", dir / "run/manifest.json", "--out", dir / "rerun"});
  REQUIRE(again.code == 0);
  CHECK(slurp(dir / "run/metrics.csv") == slurp(dir / "rerun/metrics.csv"));
  CHECK(slurp(dir / "run/checkpoint.json") == slurp(dir / "rerun/checkpoint.json"));
}

TEST_CASE("micro task trained from the CLI drops its loss and evaluates perfectly") {
  TempDir dir("micro");
  auto r = etdnet({"train", "--data", kMicro, "--d", "32", "--max-epochs", "200", "--patience", "1000", "--out",
                dir / "run"});
  REQUIRE(r.code == 0);
  auto rows = csv_rows(dir / "run/metrics.csv");
  REQUIRE(rows.size() == 201);
  CHECK(std::stod(rows.back()[1]) < 0.05 * std::stod(rows[1][1]));

  auto e = etdnet({"eval", "--checkpoint", dir / "run/checkpoint.json", "--data", kMicro});
  REQUIRE(e.code == 0);
  CHECK(e.out.find("\nmacro_f1=1\n") != std::string::npos);
}

TEST_CASE("only-sa and full agree on a graph without inter edges") {
  TempDir dir("nointer");
  auto g = fhg::load_jsonl(kMicro);
  std::vector<fhg::NodeRecord> nodes(g.nodes().begin(), g.nodes().end());
  std::vector<fhg::Edge> edges(g.intra_edges().begin(), g.intra_edges().end());
  fhg::save_jsonl(fhg::FullHistoryGraph::build(nodes, edges), dir / "flat.jsonl");
  for (const char* mode : {"full", "only-sa"}) {
    auto r = etdnet({"train", "--data", dir / "flat.jsonl", "--d", "16", "--max-epochs", "5", "--mode", mode, "--out",
                  dir / mode});
    REQUIRE(r.code == 0);
  }
  CHECK(slurp(dir / "full/metrics.csv") == slurp(dir / "only-sa/metrics.csv"));
}

TEST_CASE("eval rejects a checkpoint that does not fit the data") {
  TempDir dir("mismatch");
  REQUIRE(etdnet({"train", "--data", kMicro, "--d", "8", "--sa-heads", "2", "--max-epochs", "1", "--out", dir / "run"})
              .code == 0);
  REQUIRE(etdnet({"generate", "traffic", "--vehicles", "2", "--out", dir / "traffic"}).code == 0);
  auto r = etdnet({"eval", "--checkpoint", dir / "run/checkpoint.json", "--data", dir / "traffic"});
  CHECK(r.code == 4);
  CHECK(r.err.find("d_in") != std::string::npos);

  std::ofstream(dir / "old.json") << R"({"format_version": 99})";
  CHECK(etdnet({"eval", "--checkpoint", dir / "old.json", "--data", kMicro}).code == 4);
}

TEST_CASE("non-finite training aborts with the numeric exit code") {
  TempDir dir("nan");
  auto g = fhg::load_jsonl(kMicro);
  std::vector<fhg::NodeRecord> nodes(g.nodes().begin(), g.nodes().end());
  std::vector<fhg::Edge> edges(g.intra_edges().begin(), g.intra_edges().end());
  edges.insert(edges.end(), g.inter_edges().begin(), g.inter_edges().end());
  nodes[0].features[0] = 1e308;
  fhg::save_jsonl(fhg::FullHistoryGraph::build(nodes, edges), dir / "huge.jsonl");
  auto r = etdnet({"train", "--data", dir / "huge.jsonl", "--d", "8", "--sa-heads", "2", "--max-epochs", "2", "--lr",
                "1e300", "--out", dir / "run"});
  CHECK(r.code == 3);
  CHECK(r.err.find("epoch 1") != std::string::npos);
}

TEST_CASE("gradcheck on the default config passes") {
  auto r = etdnet({"gradcheck", "--d", "8", "--sa-heads", "2"});
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("bench: doubling the replica count doubles the SA column") {
  TempDir dir("bench");
  auto r = etdnet({"bench", "--sizes", "1,2,4,8", "--d", "16", "--out", dir / "b"});
  REQUIRE(r.code == 0);
  auto rows = csv_rows(dir / "b/bench.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[0][4] == "sa");
  for (std::size_t i = 2; i < rows.size(); ++i) CHECK(std::stoull(rows[i][4]) == 2 * std::stoull(rows[i - 1][4]));
  auto j = nlohmann::json::parse(slurp(dir / "b/bench.json"));
  CHECK(j["fit"]["r2"].get<double>() > 0.99);
}

TEST_CASE("replicate keeps per-copy structure") {
  synth::TrafficScenarioConfig c;
  c.n_static = 3;
  auto g = synth::gen_traffic(c).graph;
  auto r = cli::replicate(g, 3);
  CHECK(r.num_nodes() == 3 * g.num_nodes());
  CHECK(r.intra_edges().size() == 3 * g.intra_edges().size());
  CHECK(r.inter_edges().size() == 3 * g.inter_edges().size());
}

TEST_CASE("help and version exit cleanly") {
  CHECK(etdnet({"--help"}).code == 0);
  auto v = etdnet({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find(cli::kToolVersion) != std::string::npos);
}
