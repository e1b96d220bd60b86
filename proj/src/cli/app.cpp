#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "etd/cli/cli.hpp"
#include "etd/error.hpp"
#include "etd/etdnet/checkpoint.hpp"
#include "etd/fhgraph/jsonl.hpp"
#include "etd/numerics/rng.hpp"
#include "etd/oracle/flops.hpp"
#include "etd/oracle/gradcheck.hpp"
#include "etd/synthdata/ledger.hpp"
#include "etd/synthdata/traffic.hpp"
#include "etd/training/trainer.hpp"

namespace etd::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::vector<fs::path> unit_files(const fs::path& p) {
  if (fs::is_regular_file(p)) return {p};
  if (!fs::is_directory(p)) throw ConfigError("data: no such file or directory: " + p.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("data: no .jsonl files in " + p.string());
  return files;
}

fhg::FullHistoryGraph replicate(const fhg::FullHistoryGraph& g, std::size_t copies) {
  std::vector<fhg::NodeRecord> nodes;
  std::vector<fhg::Edge> edges;
  for (std::size_t k = 0; k < copies; ++k) {
    const std::string prefix = "r" + std::to_string(k) + "/";
    auto rename = [&](fhg::NodeId id) {
      id.entity = prefix + id.entity;
      return id;
    };
    for (auto n : g.nodes()) {
      n.id = rename(n.id);
      nodes.push_back(std::move(n));
    }
    for (auto family : {g.intra_edges(), g.inter_edges()}) {
      for (auto e : family) {
        e.src = rename(e.src);
        e.dst = rename(e.dst);
        edges.push_back(std::move(e));
      }
    }
  }
  return fhg::FullHistoryGraph::build(std::move(nodes), std::move(edges));
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot open " + p.string() + " for writing");
  f << text;
}

Json read_json_file(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw ConfigError("config: cannot open " + p.string());
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + p.string() + " is not valid JSON (" + e.what() + ")");
  }
}

std::string unit_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "unit_%04zu.jsonl", i);
  return buf;
}

// ---------------------------------------------------------------- options

// Model and training flags shared by train, ablate, gradcheck and bench.
// Only flags actually given override the config file.
struct ModelFlags {
  std::size_t d = 0, layers = 0, sa_heads = 0, sa_sublayers = 0, ha_heads = 0, window = 0;
  double dropout = 0.0;
  std::string mode, head;
  std::vector<CLI::Option*> opts;

  void add(CLI::App* app) {
    opts = {app->add_option("--d", d, "embedding width"),
            app->add_option("--layers", layers, "ETDNet layers"),
            app->add_option("--sa-heads", sa_heads, "step attention heads"),
            app->add_option("--sa-sublayers", sa_sublayers, "step attention sublayers"),
            app->add_option("--ha-heads", ha_heads, "history attention heads"),
            app->add_option("--window", window, "history window B"),
            app->add_option("--dropout", dropout, "dropout after each fusion"),
            app->add_option("--mode", mode, "full|only-sa|only-ha|late-fusion|ha-meanpool"),
            app->add_option("--head", head, "dual|binary (default: inferred from labels)")};
  }
  bool given(std::size_t i) const { return opts[i]->count() > 0; }

  void apply(net::ModelConfig& c) const {
    if (given(0)) c.d = d;
    if (given(1)) c.layers = layers;
    if (given(2)) c.sa_heads = sa_heads;
    if (given(3)) c.sa_sublayers = sa_sublayers;
    if (given(4)) c.ha_heads = ha_heads;
    if (given(5)) c.window = window;
    if (given(6)) c.dropout = dropout;
    if (given(7)) c.mode = net::parse_mode(mode);
    if (given(8)) c.head = net::parse_head(head);
  }
  bool head_given() const { return given(8); }
};

struct TrainFlags {
  double lr = 0.0, weight_decay = 0.0;
  std::size_t batch_size = 0, max_epochs = 0, patience = 0;
  std::uint64_t seed = 0;
  std::string monitor;
  std::vector<CLI::Option*> opts;

  void add(CLI::App* app) {
    opts = {app->add_option("--lr", lr, "Adam learning rate"),
            app->add_option("--weight-decay", weight_decay, "decoupled weight decay"),
            app->add_option("--batch-size", batch_size, "units per batch"),
            app->add_option("--max-epochs", max_epochs, "epoch limit"),
            app->add_option("--patience", patience, "early stopping patience"),
            app->add_option("--seed", seed, "init, shuffle and dropout seed"),
            app->add_option("--monitor", monitor, "macro_f1|joint_accuracy|illicit_f1")};
  }
  void apply(train::TrainConfig& c) const {
    if (opts[0]->count()) c.lr = lr;
    if (opts[1]->count()) c.weight_decay = weight_decay;
    if (opts[2]->count()) c.batch_size = batch_size;
    if (opts[3]->count()) c.max_epochs = max_epochs;
    if (opts[4]->count()) c.patience = patience;
    if (opts[5]->count()) c.seed = seed;
    if (opts[6]->count()) c.monitor = train::parse_monitor(monitor);
  }
};

net::ModelConfig cli_model_defaults() {
  net::ModelConfig c;
  c.layers = 2;
  return c;
}

// ---------------------------------------------------------------- data

struct Dataset {
  std::vector<fs::path> train_files, val_files;
  std::vector<fhg::FullHistoryGraph> train, val;
};

std::vector<fhg::FullHistoryGraph> load_all(const std::vector<fs::path>& files) {
  std::vector<fhg::FullHistoryGraph> out;
  for (const auto& f : files) {
    try {
      out.push_back(fhg::load_jsonl(f));
    } catch (const Error& e) {
      throw SchemaError(f.string() + ": " + e.what());
    }
  }
  return out;
}

Dataset load_dataset(const fs::path& data, const std::optional<fs::path>& val, double val_fraction) {
  Dataset ds;
  if (fs::is_directory(data / "train")) {
    ds.train_files = unit_files(data / "train");
    if (!val && fs::is_directory(data / "val")) ds.val_files = unit_files(data / "val");
  } else {
    ds.train_files = unit_files(data);
  }
  if (val) ds.val_files = unit_files(*val);
  if (ds.val_files.empty() && val_fraction > 0.0) {
    if (val_fraction >= 1.0) throw ConfigError("val_fraction must lie in [0, 1)");
    const auto k = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(ds.train_files.size())));
    if (k == 0 || k >= ds.train_files.size()) throw ConfigError("val_fraction leaves an empty split");
    ds.val_files.assign(ds.train_files.end() - static_cast<std::ptrdiff_t>(k), ds.train_files.end());
    ds.train_files.resize(ds.train_files.size() - k);
  }
  ds.train = load_all(ds.train_files);
  ds.val = load_all(ds.val_files);
  return ds;
}

std::size_t common_feature_dim(const std::vector<fhg::FullHistoryGraph>& gs) {
  std::size_t d = 0;
  for (const auto& g : gs) {
    if (g.num_nodes() == 0) continue;
    if (d != 0 && g.feature_dim() != d) {
      throw SchemaError("units disagree on feature width (" + std::to_string(d) + " vs " +
                        std::to_string(g.feature_dim()) + ")");
    }
    d = g.feature_dim();
  }
  if (d == 0) throw SchemaError("data has no nodes");
  return d;
}

std::optional<net::HeadKind> infer_head(const std::vector<fhg::FullHistoryGraph>& gs) {
  for (const auto& g : gs) {
    for (const auto& n : g.nodes()) {
      if (!n.mask || !n.label) continue;
      return std::holds_alternative<fhg::BinaryLabel>(*n.label) ? net::HeadKind::Binary : net::HeadKind::DualClass;
    }
  }
  return std::nullopt;
}

std::vector<train::LabeledUnit> make_units(const std::vector<fhg::FullHistoryGraph>& gs,
                                           const std::vector<fs::path>& files, const net::ModelConfig& cfg) {
  std::vector<train::LabeledUnit> units;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    units.push_back(train::make_unit(gs[i], cfg.window, cfg.head, files[i].filename().string()));
  }
  return units;
}

Json paths_json(const std::vector<fs::path>& files) {
  Json j = Json::array();
  for (const auto& f : files) j.push_back(f.string());
  return j;
}

void print_metrics(std::ostream& out, const train::MetricRow& row) {
  for (const auto& [name, v] : row) out << name << '=' << (v ? train::format_number(*v) : "absent") << '\n';
}

// ---------------------------------------------------------------- generate

struct GenerateTotals {
  std::size_t nodes = 0, intra = 0, inter = 0;
  void add(const fhg::FullHistoryGraph& g) {
    nodes += g.num_nodes();
    intra += g.intra_edges().size();
    inter += g.inter_edges().size();
  }
};

// Writes units under out (or out/train + out/val) and returns the metadata
// entries for each file.
template <typename Gen>
Json write_units(const std::optional<fs::path>& out, std::size_t n_train, std::size_t n_val, std::uint64_t seed,
                 GenerateTotals& totals, Gen&& gen) {
  Json units = Json::array();
  const bool split = n_val > 0;
  if (out) {
    fs::create_directories(split ? *out / "train" : *out);
    if (split) fs::create_directories(*out / "val");
  }
  for (std::size_t i = 0; i < n_train + n_val; ++i) {
    const std::uint64_t unit_seed = hash_combine(seed, i);
    auto [graph, meta] = gen(unit_seed);
    totals.add(graph);
    fs::path rel = split ? fs::path(i < n_train ? "train" : "val") / unit_name(i < n_train ? i : i - n_train)
                         : fs::path(unit_name(i));
    if (out) fhg::save_jsonl(graph, *out / rel);
    Json u;
    u["file"] = rel.generic_string();
    u["seed"] = unit_seed;
    u["counts"] = meta["counts"];
    if (meta.contains("auc_defined")) u["auc_defined"] = meta["auc_defined"];
    units.push_back(u);
  }
  return units;
}

// ---------------------------------------------------------------- train

struct TrainJob {
  net::ModelConfig model;
  train::TrainConfig train;
  Dataset data;
  fs::path data_path;
  std::optional<fs::path> val_path;
};

struct TrainOutcome {
  train::TrainResult result;
  Json flops;
};

TrainOutcome run_training(const TrainJob& job, const fs::path& out_dir, std::ostream& out) {
  const auto& cfg = job.model;
  auto train_units = make_units(job.data.train, job.data.train_files, cfg);
  auto val_units = job.data.val.empty() ? train_units : make_units(job.data.val, job.data.val_files, cfg);
  auto init = net::EtdnetParams::init(cfg, job.train.seed);

  TrainOutcome o;
  o.result = train::train(cfg, init, train_units, val_units, job.train, [&](const train::EpochReport& r) {
    out << "epoch " << r.epoch << " loss=" << train::format_number(r.loss) << ' ' << to_string(job.train.monitor)
        << '=' << train::format_number(r.monitor) << '\n';
  });

  fs::create_directories(out_dir);
  std::ostringstream metrics, timing;
  train::write_metrics_csv(metrics, o.result.reports);
  train::write_timing_csv(timing, o.result.reports);
  write_text(out_dir / "metrics.csv", metrics.str());
  write_text(out_dir / "timing.csv", timing.str());
  net::save_checkpoint(out_dir / "checkpoint.json", cfg, o.result.best);

  Json units = Json::array();
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < train_units.size(); ++i) {
    auto rep = oracle::count_flops(train_units[i].graph, cfg);
    total += rep.total;
    Json u = rep.to_json();
    u["file"] = job.data.train_files[i].string();
    units.push_back(u);
  }
  o.flops["per_epoch_total"] = total;
  o.flops["units"] = units;
  write_text(out_dir / "flops.json", net::dump_json(o.flops));
  return o;
}

Json manifest_base(const std::vector<std::string>& argv, const std::string& started) {
  Json m;
  m["tool"] = "etdnet";
  m["version"] = kToolVersion;
  m["command"] = argv;
  m["started_at"] = started;
  return m;
}

Json job_json(const TrainJob& job) {
  Json j;
  j["model"] = net::to_json(job.model);
  j["train"] = train::to_json(job.train);
  j["data"] = {{"path", job.data_path.string()},
               {"val", job.val_path ? Json(job.val_path->string()) : Json(nullptr)},
               {"train_files", paths_json(job.data.train_files)},
               {"val_files", paths_json(job.data.val_files)}};
  return j;
}

// ---------------------------------------------------------------- gradcheck

fhg::FullHistoryGraph gradcheck_graph(std::uint64_t seed) {
  synth::TrafficScenarioConfig g;
  g.n_vehicles = 3;
  g.n_static = 2;
  g.n_timesteps = 3;
  g.interaction_radius = 40.0;  // wider than the arena: every pair is linked
  g.seed = seed;
  return synth::gen_traffic(g).graph;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> echo(argv, argv + argc);
  const std::string started = utc_now();

  CLI::App app{"ETDNet full-history graph networks: data generation, training and checks", "etdnet"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("etdnet ") + kToolVersion);

  // generate
  auto* gen = app.add_subcommand("generate", "write synthetic graphs as JSONL plus metadata.json");
  gen->require_subcommand(1);
  std::optional<std::string> gen_out;

  synth::TrafficScenarioConfig tcfg;
  std::size_t t_scenes = 1, t_val = 0;
  auto* gt = gen->add_subcommand("traffic", "vehicle scenes with speed and direction labels");
  gt->add_option("--vehicles", tcfg.n_vehicles)->capture_default_str();
  gt->add_option("--static", tcfg.n_static, "map elements")->capture_default_str();
  gt->add_option("--timesteps", tcfg.n_timesteps)->capture_default_str();
  gt->add_option("--radius", tcfg.interaction_radius, "interaction radius")->capture_default_str();
  gt->add_option("--feature-dim", tcfg.feature_dim)->capture_default_str();
  gt->add_option("--seed", tcfg.seed)->capture_default_str();
  gt->add_option("--scenes", t_scenes, "training scenes")->capture_default_str();
  gt->add_option("--val-scenes", t_val, "validation scenes (written under val/)")->capture_default_str();
  gt->add_option("--out", gen_out, "output directory");

  synth::LedgerScenarioConfig lcfg;
  std::size_t l_units = 1, l_val = 0;
  auto* gl = gen->add_subcommand("ledger", "monthly transaction graphs with planted laundering chains");
  gl->add_option("--months", lcfg.n_months)->capture_default_str();
  gl->add_option("--tx-per-month", lcfg.transactions_per_month)->capture_default_str();
  gl->add_option("--illicit", lcfg.illicit_fraction, "illicit fraction")->capture_default_str();
  gl->add_option("--unknown", lcfg.unknown_fraction, "unknown (masked) fraction")->capture_default_str();
  gl->add_option("--fan-in-max", lcfg.fan_in_max)->capture_default_str();
  gl->add_option("--feature-dim", lcfg.feature_dim)->capture_default_str();
  gl->add_option("--addresses", lcfg.addresses_per_tx, "addresses per transaction")->capture_default_str();
  gl->add_option("--seed", lcfg.seed)->capture_default_str();
  gl->add_option("--units", l_units, "training units")->capture_default_str();
  gl->add_option("--val-units", l_val, "validation units (written under val/)")->capture_default_str();
  gl->add_option("--out", gen_out, "output directory");

  // validate
  auto* val = app.add_subcommand("validate", "load JSONL graphs and check every structural rule");
  std::vector<std::string> val_paths;
  val->add_option("--data", val_paths, "files or directories")->required();

  // train / ablate
  std::string data_path, out_dir, config_path;
  std::optional<std::string> val_path;
  double val_fraction = 0.0;
  ModelFlags tr_model, ab_model;
  TrainFlags tr_train, ab_train;
  auto add_train_options = [&](CLI::App* sub, ModelFlags& mflags, TrainFlags& trflags) {
    sub->add_option("--data", data_path, "unit file or directory (train/ and val/ subdirectories are used)");
    sub->add_option("--val", val_path, "validation file or directory");
    sub->add_option("--val-fraction", val_fraction, "hold out the last fraction of units");
    sub->add_option("--config", config_path, "JSON with model/train/data objects");
    sub->add_option("--out", out_dir, "run directory")->required();
    mflags.add(sub);
    trflags.add(sub);
  };
  auto* tr = app.add_subcommand("train", "train one model; writes metrics.csv, checkpoint.json, manifest.json");
  add_train_options(tr, tr_model, tr_train);
  auto* ab = app.add_subcommand("ablate", "train every requested mode on the same data");
  add_train_options(ab, ab_model, ab_train);
  std::vector<std::string> modes{"full", "only-sa", "only-ha", "late-fusion", "ha-meanpool"};
  ab->add_option("--modes", modes, "comma separated")->delimiter(',')->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on labeled graphs");
  std::string ckpt_path, eval_data;
  std::optional<double> threshold;
  std::string eval_monitor = "macro_f1";
  ev->add_option("--checkpoint", ckpt_path)->required();
  ev->add_option("--data", eval_data)->required();
  ev->add_option("--threshold", threshold, "binary decision threshold (default: swept)");
  ev->add_option("--monitor", eval_monitor)->capture_default_str();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every parameter path");
  std::string gc_config;
  std::uint64_t gc_seed = 0;
  double gc_eps = 1e-5;
  std::optional<std::string> gc_out;
  gc->add_option("--config", gc_config, "JSON with a model object");
  gc->add_option("--seed", gc_seed)->capture_default_str();
  gc->add_option("--eps", gc_eps, "central difference step")->capture_default_str();
  gc->add_option("--out", gc_out, "write the report as JSON");
  ModelFlags gc_flags;
  gc_flags.add(gc);

  // bench
  auto* bn = app.add_subcommand("bench", "FLOP counts and forward time over replicated scenes");
  std::vector<std::size_t> sizes{1, 2, 4, 8, 16, 32};
  std::uint64_t bn_seed = 0;
  std::optional<std::string> bn_out;
  std::string bn_config;
  bn->add_option("--sizes", sizes, "replica counts")->delimiter(',')->capture_default_str();
  bn->add_option("--seed", bn_seed)->capture_default_str();
  bn->add_option("--config", bn_config, "JSON with a model object");
  bn->add_option("--out", bn_out, "write bench.csv and bench.json");
  ModelFlags bn_flags;
  bn_flags.add(bn);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gt->parsed()) {
      GenerateTotals totals;
      tcfg.validate();
      Json units = write_units(gen_out ? std::optional<fs::path>(*gen_out) : std::nullopt, t_scenes, t_val, tcfg.seed,
                               totals, [&](std::uint64_t s) {
                                 auto c = tcfg;
                                 c.seed = s;
                                 auto scene = synth::gen_traffic(c);
                                 return std::pair{scene.graph, synth::traffic_metadata(scene)};
                               });
      out << "nodes=" << totals.nodes << " intra=" << totals.intra << " inter=" << totals.inter << '\n';
      if (gen_out) {
        synth::TrafficScene probe;
        probe.config = tcfg;
        Json meta = synth::traffic_metadata(probe);
        meta.erase("counts");
        meta["units"] = units;
        meta["totals"] = {{"nodes", totals.nodes}, {"intra", totals.intra}, {"inter", totals.inter}};
        write_text(fs::path(*gen_out) / "metadata.json", net::dump_json(meta));
      }
      return kOk;
    }

    if (gl->parsed()) {
      GenerateTotals totals;
      lcfg.validate();
      bool auc_defined = false;
      Json units = write_units(gen_out ? std::optional<fs::path>(*gen_out) : std::nullopt, l_units, l_val, lcfg.seed,
                               totals, [&](std::uint64_t s) {
                                 auto c = lcfg;
                                 c.seed = s;
                                 auto scene = synth::gen_ledger(c);
                                 auto meta = synth::ledger_metadata(scene);
                                 auc_defined = auc_defined || meta["auc_defined"].get<bool>();
                                 return std::pair{scene.graph, meta};
                               });
      out << "nodes=" << totals.nodes << " intra=" << totals.intra << " inter=" << totals.inter << '\n';
      if (gen_out) {
        Json meta;
        meta["generator"] = synth::kLedgerGenerator;
        meta["config"] = synth::to_json(lcfg);
        meta["label_rules"] = {{"chain_hops", synth::kChainHops},
                               {"source_feature", synth::kSourceFeature},
                               {"feature_noise", synth::kFeatureNoise}};
        meta["auc_defined"] = auc_defined;
        meta["units"] = units;
        meta["totals"] = {{"nodes", totals.nodes}, {"intra", totals.intra}, {"inter", totals.inter}};
        write_text(fs::path(*gen_out) / "metadata.json", net::dump_json(meta));
      }
      return kOk;
    }

    if (val->parsed()) {
      GenerateTotals totals;
      std::size_t count = 0;
      for (const auto& p : val_paths) {
        for (const auto& f : unit_files(p)) {
          auto g = load_all({f}).front();
          std::size_t labeled = 0;
          for (const auto& n : g.nodes()) labeled += n.mask;
          out << f.string() << " nodes=" << g.num_nodes() << " dynamic=" << g.num_dynamic()
              << " static=" << g.num_static() << " intra=" << g.intra_edges().size()
              << " inter=" << g.inter_edges().size() << " labeled=" << labeled << '\n';
          totals.add(g);
          ++count;
        }
      }
      out << "ok units=" << count << " nodes=" << totals.nodes << " intra=" << totals.intra
          << " inter=" << totals.inter << '\n';
      return kOk;
    }

    if (tr->parsed() || ab->parsed()) {
      const ModelFlags& mflags = tr->parsed() ? tr_model : ab_model;
      const TrainFlags& trflags = tr->parsed() ? tr_train : ab_train;
      TrainJob job;
      job.model = cli_model_defaults();
      Json file_cfg = config_path.empty() ? Json::object() : read_json_file(config_path);
      if (file_cfg.contains("model")) job.model = net::model_config_from_json(file_cfg["model"], job.model);
      if (file_cfg.contains("train")) job.train = train::train_config_from_json(file_cfg["train"], job.train);
      const bool head_in_file = file_cfg.contains("model") && file_cfg["model"].contains("head");
      if (data_path.empty() && file_cfg.contains("data")) {
        data_path = file_cfg["data"].value("path", "");
        if (!val_path && file_cfg["data"].contains("val") && file_cfg["data"]["val"].is_string()) {
          val_path = file_cfg["data"]["val"].get<std::string>();
        }
      }
      if (data_path.empty()) throw ConfigError("data: --data is required");
      mflags.apply(job.model);
      trflags.apply(job.train);

      job.data_path = data_path;
      if (val_path) job.val_path = fs::path(*val_path);
      job.data = load_dataset(job.data_path, job.val_path, val_fraction);
      job.model.d_in = common_feature_dim(job.data.train);
      if (!mflags.head_given() && !head_in_file) {
        if (auto h = infer_head(job.data.train)) job.model.head = *h;
      }
      job.model.validate();
      job.train.validate();

      if (tr->parsed()) {
        auto o = run_training(job, out_dir, out);
        Json m = manifest_base(echo, started);
        const Json echo_job = job_json(job);
        for (const auto& [k, v] : echo_job.items()) m[k] = v;
        m["artifacts"] = {{"metrics", "metrics.csv"},
                          {"timing", "timing.csv"},
                          {"checkpoint", "checkpoint.json"},
                          {"flops", "flops.json"}};
        m["result"] = {{"epochs", o.result.reports.size()},
                       {"best_epoch", o.result.best_epoch},
                       {"best_monitor", o.result.best_monitor}};
        m["finished_at"] = utc_now();
        write_text(fs::path(out_dir) / "manifest.json", net::dump_json(m));
        out << "best epoch " << o.result.best_epoch << ' ' << to_string(job.train.monitor) << '='
            << train::format_number(o.result.best_monitor) << '\n';
        return kOk;
      }

      std::ostringstream table;
      table << "mode,best_epoch,best_monitor";
      bool header = false;
      Json runs = Json::array();
      for (const auto& name : modes) {
        auto mj = job;
        mj.model.mode = net::parse_mode(name);
        out << "== " << name << '\n';
        auto o = run_training(mj, fs::path(out_dir) / name, out);
        const auto& best = o.result.reports.at(o.result.best_epoch - 1);
        if (!header) {
          for (const auto& [k, _] : best.metrics) table << ',' << k;
          table << '\n';
          header = true;
        }
        table << name << ',' << o.result.best_epoch << ',' << train::format_number(o.result.best_monitor);
        for (const auto& [_, v] : best.metrics) table << ',' << (v ? train::format_number(*v) : "");
        table << '\n';
        runs.push_back({{"mode", name}, {"dir", name}, {"model", net::to_json(mj.model)}});
      }
      fs::create_directories(out_dir);
      write_text(fs::path(out_dir) / "ablation.csv", table.str());
      Json m = manifest_base(echo, started);
      const Json echo_job = job_json(job);
      for (const auto& [k, v] : echo_job.items()) m[k] = v;
      m["modes"] = modes;
      m["runs"] = runs;
      m["artifacts"] = {{"summary", "ablation.csv"}};
      m["finished_at"] = utc_now();
      write_text(fs::path(out_dir) / "manifest.json", net::dump_json(m));
      out << table.str();
      return kOk;
    }

    if (ev->parsed()) {
      auto ck = net::load_checkpoint(ckpt_path);
      auto files = unit_files(eval_data);
      auto graphs = load_all(files);
      const std::size_t d_in = common_feature_dim(graphs);
      if (d_in != ck.config.d_in) {
        throw SchemaError("checkpoint expects d_in=" + std::to_string(ck.config.d_in) + " but the data has " +
                          std::to_string(d_in) + " features");
      }
      if (auto h = infer_head(graphs); h && *h != ck.config.head) {
        throw SchemaError("checkpoint head '" + std::string(net::to_string(ck.config.head)) +
                          "' does not match the data labels");
      }
      auto units = make_units(graphs, files, ck.config);
      auto e = train::evaluate(ck.config, ck.params, units, train::parse_monitor(eval_monitor), threshold);
      out << "loss=" << train::format_number(e.loss) << '\n';
      print_metrics(out, e.metrics);
      return kOk;
    }

    if (gc->parsed()) {
      net::ModelConfig cfg = cli_model_defaults();
      cfg.d = 16;
      if (!gc_config.empty()) {
        Json j = read_json_file(gc_config);
        cfg = net::model_config_from_json(j.contains("model") ? j["model"] : j, cfg);
      }
      gc_flags.apply(cfg);
      auto g = gradcheck_graph(gc_seed);
      cfg.d_in = g.feature_dim();
      cfg.validate();
      auto plan = net::make_plan(g, cfg.window);
      auto params = net::EtdnetParams::init(cfg, gc_seed);
      auto rep = oracle::gradcheck_model(plan, cfg, params, gc_eps, gc_seed);
      for (const auto& p : rep.paths) {
        out << std::left << std::setw(36) << p.path << ' ' << train::format_number(p.worst_rel_err) << " ("
            << p.coords << " coords)\n";
      }
      out << "worst=" << train::format_number(rep.worst) << " path=" << rep.worst_path << '\n';
      if (gc_out) write_text(*gc_out, net::dump_json(rep.to_json()));
      if (!rep.passed()) {
        err << "gradcheck failed above " << oracle::kGradTolerance << ':';
        for (const auto& p : rep.failing()) err << ' ' << p;
        err << '\n';
        return kNumeric;
      }
      out << "PASS\n";
      return kOk;
    }

    if (bn->parsed()) {
      net::ModelConfig cfg = cli_model_defaults();
      if (!bn_config.empty()) {
        Json j = read_json_file(bn_config);
        cfg = net::model_config_from_json(j.contains("model") ? j["model"] : j, cfg);
      }
      bn_flags.apply(cfg);
      synth::TrafficScenarioConfig sc;
      sc.n_static = 8;
      sc.seed = bn_seed;
      auto base = synth::gen_traffic(sc).graph;
      cfg.d_in = base.feature_dim();
      cfg.validate();
      auto params = net::EtdnetParams::init(cfg, bn_seed);

      std::ostringstream csv;
      csv << "size,nodes,intra,inter,sa,ha,fl,io,total,forward_ms\n";
      std::vector<double> xs, ys;
      Json rows = Json::array();
      for (auto k : sizes) {
        if (k == 0) throw ConfigError("sizes: replica counts must be positive");
        auto g = replicate(base, k);
        auto rep = oracle::count_flops(g, cfg);
        auto plan = net::make_plan(g, cfg.window);
        const auto t0 = std::chrono::steady_clock::now();
        net::forward(plan, cfg, params, {});
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        csv << k << ',' << g.num_nodes() << ',' << g.intra_edges().size() << ',' << g.inter_edges().size() << ','
            << rep.blocks.sa << ',' << rep.blocks.ha << ',' << rep.blocks.fl << ',' << rep.io << ',' << rep.total
            << ',' << train::format_number(ms) << '\n';
        xs.push_back(static_cast<double>(g.intra_edges().size() + g.inter_edges().size()));
        ys.push_back(static_cast<double>(rep.total));
        Json r = rep.to_json();
        r["size"] = k;
        r["forward_ms"] = ms;
        rows.push_back(r);
      }
      out << csv.str();
      Json fit;
      if (sizes.size() >= 2) {
        auto f = oracle::least_squares(xs, ys);
        fit = {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
        out << "fit total ~ |D|+|H|: slope=" << train::format_number(f.slope)
            << " intercept=" << train::format_number(f.intercept) << " r2=" << train::format_number(f.r2) << '\n';
      }
      if (bn_out) {
        fs::create_directories(*bn_out);
        write_text(fs::path(*bn_out) / "bench.csv", csv.str());
        Json j;
        j["model"] = net::to_json(cfg);
        j["rows"] = rows;
        j["fit"] = fit;
        write_text(fs::path(*bn_out) / "bench.json", net::dump_json(j));
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const EmptyBatchError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << '\n';
    return kSchema;
  } catch (const ParseError& e) {
    err << "schema error: " << e.what() << '\n';
    return kSchema;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"etdnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace etd::cli
