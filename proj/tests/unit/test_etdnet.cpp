#include <algorithm>
#include <map>
#include <sstream>

#include "doctest.h"
#include "etd/error.hpp"
#include "etd/etdnet/checkpoint.hpp"
#include "etd/etdnet/model.hpp"
#include "etd/numerics/ops.hpp"
#include "etd/oracle/gradcheck.hpp"
#include "etd/oracle/reference.hpp"
#include "graphs.hpp"
#include "model_fixtures.hpp"

using namespace etd;
using namespace etd::test;
using net::Mode;

namespace {

Tensor random_embeddings(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<double> v(n * d);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from({n, d}, std::move(v));
}

FullHistoryGraph chain_graph(std::size_t steps, std::size_t d_in, Rng& rng) {
  std::vector<NodeRecord> nodes;
  std::vector<Edge> edges;
  for (std::uint32_t t = 0; t < steps; ++t) {
    nodes.push_back({NodeId::dynamic("c", t), random_features(rng, d_in), fhg::DualLabel{0, 0}, true});
    if (t > 0) edges.push_back({NodeId::dynamic("c", t - 1), NodeId::dynamic("c", t), EdgeFamily::Inter, {}});
  }
  return FullHistoryGraph::build(std::move(nodes), std::move(edges));
}

// Ten nodes over two timesteps, both edge families and one static node.
FullHistoryGraph ten_node_graph(std::uint64_t seed) {
  Rng rng(seed);
  RandomGraphSpec spec;
  spec.entities = 4;
  spec.timesteps = 2;
  spec.statics = 2;
  spec.binary_labels = false;
  return random_graph(rng, spec);
}

std::map<std::string, Vec> rows_by_id(const FullHistoryGraph& g, const Tensor& t, const std::string& prefix = "") {
  std::map<std::string, Vec> out;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) out[prefix + g.node(i).id.str()] = row(t, i);
  return out;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  net::ModelConfig c;
  CHECK(c.d == 128);
  CHECK(c.dropout == 0.1);
  CHECK(c.layers == 3);
  CHECK(c.sa_heads == 4);
  CHECK(c.sa_sublayers == 2);
  CHECK(c.ha_heads == 2);
  CHECK(c.window == 8);
  CHECK_NOTHROW(c.validate());
  c.d = 10;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  auto j = net::to_json(small_config(Mode::LateFusion));
  CHECK(net::model_config_from_json(j) == small_config(Mode::LateFusion));
  CHECK_THROWS_AS(net::parse_mode("both"), ConfigError);
}

TEST_CASE("parameter layout uses stable paths and declared shapes") {
  auto cfg = small_config();
  auto p = net::EtdnetParams::init(cfg, 3);
  CHECK(p.at("layer1/sa/k0/head1/WQ").shape() == Shape{4, 8});
  CHECK(p.at("layer2/sa/k1/head0/a").shape() == Shape{8});
  CHECK(p.at("layer1/sa/k0/O").shape() == Shape{8, 8});
  CHECK(p.at("layer1/ha/head1/WV").shape() == Shape{4, 8});
  CHECK(p.at("layer1/ha/O").shape() == Shape{8, 8});
  CHECK(p.at("layer2/fl/F").shape() == Shape{8, 24});
  CHECK(p.at("head/speed_W").shape() == Shape{4, 8});
  CHECK(p.at("head/dir_W").shape() == Shape{5, 8});
  CHECK_FALSE(p.contains("layer3/fl/F"));

  // Xavier bound and LN init
  const double bound = std::sqrt(6.0 / (8.0 + 24.0));
  for (double v : p.at("layer1/fl/F").data()) CHECK(std::abs(v) <= bound);
  for (double v : p.at("layer1/fl/ln_gain").data()) CHECK(v == 1.0);
  for (double v : p.at("layer1/fl/ln_bias").data()) CHECK(v == 0.0);

  auto only_sa = net::EtdnetParams::init(small_config(Mode::OnlySA), 3);
  CHECK_FALSE(only_sa.contains("layer1/ha/O"));
  auto mean = net::EtdnetParams::init(small_config(Mode::HAMeanPool), 3);
  CHECK(mean.at("layer1/ha/mean_proj").shape() == Shape{8, 8});
  auto late = net::EtdnetParams::init(small_config(Mode::LateFusion), 3);
  CHECK(late.at("late/W").shape() == Shape{8, 16});
  CHECK(late.contains("layer2/fl_ha/F"));

  // same seed, same values for a shared path in every mode
  auto a = p.at("layer1/sa/k0/head0/WK").data();
  auto b = only_sa.at("layer1/sa/k0/head0/WK").data();
  CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
}

TEST_CASE("step attention: empty neighborhood reduces to the normalized residual") {
  Rng rng(4);
  auto cfg = small_config();
  cfg.sa_sublayers = 1;
  std::vector<NodeRecord> nodes{{NodeId::dynamic("a", 0), random_features(rng, 3), std::nullopt, false},
                                {NodeId::dynamic("b", 0), random_features(rng, 3), std::nullopt, false}};
  auto g = FullHistoryGraph::build(nodes, {});
  auto p = net::EtdnetParams::init(cfg, 1);
  auto h = random_embeddings(rng, 2, cfg.d);
  auto m = net::step_attention(net::make_plan(g, cfg.window), h, p, cfg, 1);
  for (std::size_t i = 0; i < 2; ++i) CHECK(max_diff(row(m, i), plain_layer_norm(row(h, i))) < 1e-14);
}

TEST_CASE("step attention: a single neighbor gets weight one") {
  Rng rng(5);
  auto cfg = small_config();
  cfg.sa_sublayers = 1;
  std::vector<NodeRecord> nodes{{NodeId::dynamic("a", 0), random_features(rng, 3), std::nullopt, false},
                                {NodeId::dynamic("b", 0), random_features(rng, 3), std::nullopt, false}};
  auto g = FullHistoryGraph::build(nodes, {{NodeId::dynamic("b", 0), NodeId::dynamic("a", 0), EdgeFamily::Intra, {}}});
  auto p = net::EtdnetParams::init(cfg, 2);
  auto h = random_embeddings(rng, 2, cfg.d);
  const std::size_t ia = g.index_of(NodeId::dynamic("a", 0));
  const std::size_t ib = g.index_of(NodeId::dynamic("b", 0));

  Vec heads;
  for (std::size_t r = 0; r < cfg.sa_heads; ++r) {
    Vec v = matvec(p.at(net::sa_head_path(1, 0, r, "WV")), row(h, ib));
    heads.insert(heads.end(), v.begin(), v.end());
  }
  Vec pre = matvec(p.at(net::sa_path(1, 0, "O")), heads);
  Vec ha = row(h, ia);
  for (std::size_t j = 0; j < pre.size(); ++j) pre[j] += ha[j];

  net::AttentionTrace trace;
  auto m = net::step_attention(net::make_plan(g, cfg.window), h, p, cfg, 1, &trace);
  CHECK(max_diff(row(m, ia), plain_layer_norm(pre)) < 1e-12);
  CHECK(max_diff(row(m, ib), plain_layer_norm(row(h, ib))) < 1e-14);
  REQUIRE(trace.sa_alpha.size() == cfg.sa_heads);
  for (const auto& alpha : trace.sa_alpha) CHECK(alpha.data()[0] == 1.0);
}

TEST_CASE("step attention on a 4-clique matches the dense masked reference") {
  Rng rng(6);
  auto cfg = small_config();
  std::vector<NodeRecord> nodes;
  std::vector<Edge> edges;
  for (int i = 0; i < 4; ++i) nodes.push_back({NodeId::dynamic(entity_name("v", i), 0), random_features(rng, 3), {}, false});
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i != j) edges.push_back({nodes[j].id, nodes[i].id, EdgeFamily::Intra, {}});
    }
  }
  auto g = FullHistoryGraph::build(nodes, edges);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto p = net::EtdnetParams::init(cfg, seed);
    auto h = random_embeddings(rng, 4, cfg.d);
    auto m = net::step_attention(net::make_plan(g, cfg.window), h, p, cfg, 1);
    CHECK(oracle::max_abs_diff(oracle::dense_sa_reference(g, oracle::to_matrix(h), p, cfg, 1), m) < 1e-10);
  }
}

TEST_CASE("SA weights are a distribution over each in-neighborhood") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    RandomGraphSpec spec;
    spec.entities = 5;
    spec.p_intra = 0.6;
    auto g = random_graph(rng, spec);
    auto cfg = small_config();
    auto p = net::EtdnetParams::init(cfg, rep);
    auto plan = net::make_plan(g, cfg.window);
    net::AttentionTrace trace;
    net::forward(plan, cfg, p, {}, &trace);
    REQUIRE(trace.sa_alpha.size() == (plan.intra_src.empty() ? 0u : cfg.layers * cfg.sa_sublayers * cfg.sa_heads));
    for (const auto& alpha : trace.sa_alpha) {
      std::vector<double> sums(g.num_nodes(), 0.0);
      for (std::size_t e = 0; e < plan.intra_dst.size(); ++e) {
        CHECK(alpha.data()[e] >= 0.0);
        sums[plan.intra_dst[e]] += alpha.data()[e];
      }
      for (std::size_t u = 0; u < g.num_nodes(); ++u) {
        if (!g.intra_in(u).empty()) CHECK(std::abs(sums[u] - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("history attention: singleton window and no-history nodes") {
  Rng rng(8);
  auto cfg = small_config();
  auto g = chain_graph(2, 3, rng);
  auto p = net::EtdnetParams::init(cfg, 9);
  auto h = random_embeddings(rng, 2, cfg.d);
  auto m = net::history_attention(net::make_plan(g, cfg.window), h, p, cfg, 1);
  const std::size_t w = g.index_of(NodeId::dynamic("c", 0));
  const std::size_t u = g.index_of(NodeId::dynamic("c", 1));

  Vec cat;
  for (std::size_t r = 0; r < cfg.ha_heads; ++r) {
    Vec v = matvec(p.at(net::ha_head_path(1, r, "WV")), row(h, w));
    cat.insert(cat.end(), v.begin(), v.end());
  }
  const auto& o = p.at(net::ha_path(1, "O"));
  Vec proj(cfg.d, 0.0);
  for (std::size_t j = 0; j < cfg.d; ++j) {
    for (std::size_t i = 0; i < cat.size(); ++i) proj[j] += cat[i] * o.at(i, j);
  }
  CHECK(max_diff(row(m, u), plain_layer_norm(proj)) < 1e-12);
  for (double v : row(m, w)) CHECK(v == 0.0);

  auto fig = figure_one_graph();
  auto hf = random_embeddings(rng, fig.num_nodes(), cfg.d);
  auto mf = net::history_attention(net::make_plan(fig, cfg.window), hf, p, cfg, 1);
  for (std::size_t i = 0; i < fig.num_nodes(); ++i) {
    const auto& id = fig.node(i).id;
    if (id.is_static() || *id.t == 0) {
      for (double v : row(mf, i)) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("history attention over five predecessors matches the padded dense reference") {
  Rng rng(10);
  auto cfg = small_config();
  cfg.window = 8;
  auto g = chain_graph(6, 3, rng);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto p = net::EtdnetParams::init(cfg, seed);
    auto h = random_embeddings(rng, g.num_nodes(), cfg.d);
    auto m = net::history_attention(net::make_plan(g, cfg.window), h, p, cfg, 1);
    CHECK(oracle::max_abs_diff(oracle::dense_ha_reference(g, oracle::to_matrix(h), p, cfg, 1), m) < 1e-10);
  }
}

TEST_CASE("history attention is bitwise invariant to window padding") {
  Rng rng(11);
  auto g = chain_graph(4, 3, rng);  // at most 3 predecessors
  auto cfg = small_config();
  cfg.window = 3;
  auto p = net::EtdnetParams::init(cfg, 12);
  auto h = random_embeddings(rng, g.num_nodes(), cfg.d);
  auto base = net::history_attention(net::make_plan(g, 3), h, p, cfg, 1);
  for (std::size_t b : {4u, 5u, 8u, 20u}) {
    cfg.window = b;
    auto m = net::history_attention(net::make_plan(g, b), h, p, cfg, 1);
    CHECK(std::equal(base.data().begin(), base.data().end(), m.data().begin(), m.data().end()));
  }
}

TEST_CASE("fusion with zero F is a plain layer norm") {
  Rng rng(13);
  auto cfg = small_config();
  auto p = net::EtdnetParams::init(cfg, 14);
  Tensor f = p.at("layer1/fl/F");
  std::ranges::fill(f.mutable_data(), 0.0);
  auto h = random_embeddings(rng, 3, cfg.d);
  auto md = random_embeddings(rng, 3, cfg.d);
  auto mh = random_embeddings(rng, 3, cfg.d);
  auto zero = Tensor::zeros({3, cfg.d});
  for (const auto& [a, b] : {std::pair{md, mh}, std::pair{zero, zero}}) {
    auto out = net::fusion(h, a, b, p, cfg, 1, "fl", {});
    for (std::size_t i = 0; i < 3; ++i) CHECK(max_diff(row(out, i), plain_layer_norm(row(h, i))) < 1e-14);
  }
}

TEST_CASE("fusion matches a hand-composed pipeline") {
  Rng rng(15);
  auto cfg = small_config();
  auto p = net::EtdnetParams::init(cfg, 16);
  auto h = random_embeddings(rng, 4, cfg.d);
  auto md = random_embeddings(rng, 4, cfg.d);
  auto mh = random_embeddings(rng, 4, cfg.d);
  auto out = net::fusion(h, md, mh, p, cfg, 2, "fl", {});
  for (std::size_t i = 0; i < 4; ++i) {
    Vec cat = row(h, i);
    Vec a = row(md, i), b = row(mh, i);
    cat.insert(cat.end(), a.begin(), a.end());
    cat.insert(cat.end(), b.begin(), b.end());
    Vec z = matvec(p.at("layer2/fl/F"), cat);
    Vec hi = row(h, i);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = hi[j] + std::max(0.0, z[j]);
    CHECK(max_diff(row(out, i), plain_layer_norm(z)) < 1e-12);
  }
}

TEST_CASE("zero layers applies the head to the input projection") {
  auto cfg = small_config(Mode::Full, 0);
  auto g = figure_one_graph();
  auto p = net::EtdnetParams::init(cfg, 17);
  auto out = net::forward(g, cfg, p);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    Vec h = matvec(p.at("input/W"), g.node(i).features);
    for (std::size_t j = 0; j < h.size(); ++j) h[j] += p.at("input/b").data()[j];
    Vec hidden = matvec(p.at("head/hidden_W"), h);
    for (std::size_t j = 0; j < hidden.size(); ++j) hidden[j] = std::max(0.0, hidden[j] + p.at("head/hidden_b").data()[j]);
    Vec speed = matvec(p.at("head/speed_W"), hidden);
    Vec dir = matvec(p.at("head/dir_W"), hidden);
    CHECK(max_diff(row(out.speed, i), speed) < 1e-12);
    CHECK(max_diff(row(out.dir, i), dir) < 1e-12);
  }
}

TEST_CASE("without inter edges Full and OnlySA give identical logits") {
  Rng rng(18);
  RandomGraphSpec spec;
  spec.p_self_chain = 0.0;
  spec.p_cross_inter = 0.0;
  auto g = random_graph(rng, spec);
  REQUIRE(g.inter_edges().empty());
  auto full_cfg = small_config(Mode::Full);
  auto sa_cfg = small_config(Mode::OnlySA);
  auto full = net::EtdnetParams::init(full_cfg, 19);
  auto only = full.subset(sa_cfg);
  auto a = net::forward(g, full_cfg, full);
  auto b = net::forward(g, sa_cfg, only);
  CHECK(std::equal(a.speed.data().begin(), a.speed.data().end(), b.speed.data().begin(), b.speed.data().end()));
  CHECK(std::equal(a.dir.data().begin(), a.dir.data().end(), b.dir.data().begin(), b.dir.data().end()));
}

TEST_CASE("composed forward equals the straight-line reference in every mode") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto g = ten_node_graph(seed);
    for (auto mode : kAllModes) {
      for (auto head : {net::HeadKind::DualClass, net::HeadKind::Binary}) {
        auto cfg = small_config(mode, 2, head);
        auto p = net::EtdnetParams::init(cfg, seed + 100);
        auto out = net::forward(g, cfg, p);
        auto ref = oracle::straight_line_forward(g, cfg, p);
        CAPTURE(net::to_string(mode));
        CHECK(oracle::max_abs_diff(ref.embedding, out.embedding) < 1e-10);
        if (head == net::HeadKind::DualClass) {
          CHECK(oracle::max_abs_diff(ref.speed, out.speed) < 1e-10);
          CHECK(oracle::max_abs_diff(ref.dir, out.dir) < 1e-10);
        } else {
          CHECK(max_diff(ref.binary, Vec(out.binary.data().begin(), out.binary.data().end())) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("logits are equivariant under entity relabeling and storage permutation") {
  Rng rng(20);
  for (int rep = 0; rep < 10; ++rep) {
    RandomGraphSpec spec;
    spec.entities = 4;
    spec.timesteps = 4;
    spec.statics = 2;
    spec.binary_labels = false;
    auto g = random_graph(rng, spec);
    // Order-preserving rename keeps the tie-break among same-time predecessors.
    auto rename = [](const NodeId& id) { return NodeId{"q_" + id.entity, id.t}; };
    std::vector<NodeRecord> nodes(g.nodes().begin(), g.nodes().end());
    for (auto& n : nodes) n.id = rename(n.id);
    std::vector<Edge> edges(g.intra_edges().begin(), g.intra_edges().end());
    edges.insert(edges.end(), g.inter_edges().begin(), g.inter_edges().end());
    for (auto& e : edges) {
      e.src = rename(e.src);
      e.dst = rename(e.dst);
    }
    rng.shuffle(nodes);
    rng.shuffle(edges);
    auto g2 = FullHistoryGraph::build(nodes, edges);

    auto cfg = small_config();
    auto p = net::EtdnetParams::init(cfg, rep);
    auto a = rows_by_id(g, net::forward(g, cfg, p).speed, "q_");
    auto b = rows_by_id(g2, net::forward(g2, cfg, p).speed);
    REQUIRE(a.size() == b.size());
    for (const auto& [id, v] : a) CHECK(max_diff(v, b.at(id)) < 1e-12);
  }
}

TEST_CASE("later features never reach earlier embeddings") {
  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    RandomGraphSpec spec;
    spec.entities = 3;
    spec.timesteps = 4;
    spec.statics = 0;
    auto g = random_graph(rng, spec);
    auto cfg = small_config();
    auto p = net::EtdnetParams::init(cfg, rep);
    auto base = net::forward(g, cfg, p).embedding;

    const std::uint32_t t_cut = 1;
    std::vector<NodeRecord> nodes(g.nodes().begin(), g.nodes().end());
    for (auto& n : nodes) {
      if (*n.id.t > t_cut) n.features = random_features(rng, 3);
    }
    std::vector<Edge> edges(g.intra_edges().begin(), g.intra_edges().end());
    edges.insert(edges.end(), g.inter_edges().begin(), g.inter_edges().end());
    auto g2 = FullHistoryGraph::build(nodes, edges);
    auto moved = net::forward(g2, cfg, p).embedding;
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      if (*g.node(i).id.t <= t_cut) CHECK(max_diff(row(base, i), row(moved, i)) == 0.0);
    }
  }
}

TEST_CASE("every parameter passes the finite-difference check") {
  Rng rng(22);
  RandomGraphSpec spec;
  spec.entities = 3;
  spec.timesteps = 3;
  spec.statics = 1;
  spec.p_intra = 0.5;
  spec.p_static = 0.5;
  spec.binary_labels = false;
  auto g = random_graph(rng, spec);
  REQUIRE_FALSE(g.intra_edges().empty());
  REQUIRE_FALSE(g.inter_edges().empty());
  for (auto mode : kAllModes) {
    for (auto head : {net::HeadKind::DualClass, net::HeadKind::Binary}) {
      auto cfg = small_config(mode, mode == Mode::Full ? 2 : 1, head);
      auto p = net::EtdnetParams::init(cfg, 23);
      auto report = oracle::gradcheck_model(net::make_plan(g, cfg.window), cfg, p);
      CAPTURE(net::to_string(mode));
      CAPTURE(report.worst_path);
      CHECK(report.paths.size() == p.named().size());
      CHECK(report.worst < 1e-4);
    }
  }
}

TEST_CASE("dropout is keyed and only active in training") {
  auto g = figure_one_graph();
  auto cfg = small_config();
  cfg.dropout = 0.5;
  auto p = net::EtdnetParams::init(cfg, 24);
  auto plan = net::make_plan(g, cfg.window);
  auto eval = net::forward(plan, cfg, p, {}).speed;
  net::ForwardOptions opt{true, 7, 1, 0};
  auto t1 = net::forward(plan, cfg, p, opt).speed;
  auto t2 = net::forward(plan, cfg, p, opt).speed;
  opt.epoch = 2;
  auto t3 = net::forward(plan, cfg, p, opt).speed;
  CHECK(std::equal(t1.data().begin(), t1.data().end(), t2.data().begin()));
  CHECK_FALSE(std::equal(t1.data().begin(), t1.data().end(), eval.data().begin()));
  CHECK_FALSE(std::equal(t1.data().begin(), t1.data().end(), t3.data().begin()));
}

TEST_CASE("forward rejects params built for another config") {
  auto g = figure_one_graph();
  auto p = net::EtdnetParams::init(small_config(), 1);
  auto wider = small_config();
  wider.d = 16;
  CHECK_THROWS_AS(net::forward(g, wider, p), ConfigError);
  CHECK_THROWS_AS(net::forward(g, small_config(Mode::LateFusion), p), ConfigError);
  auto narrow_in = small_config();
  narrow_in.d_in = 5;
  CHECK_THROWS_AS(net::forward(g, narrow_in, net::EtdnetParams::init(narrow_in, 1)), ConfigError);
}

TEST_CASE("checkpoint round trip is exact and versioned") {
  auto cfg = small_config(Mode::LateFusion);
  auto p = net::EtdnetParams::init(cfg, 25);
  auto j = net::checkpoint_to_json(cfg, p);
  auto text = net::dump_json(j);
  auto back = net::checkpoint_from_json(nlohmann::ordered_json::parse(text));
  CHECK(back.config == cfg);
  REQUIRE(back.params.named().size() == p.named().size());
  for (std::size_t i = 0; i < p.named().size(); ++i) {
    const auto& a = p.named()[i];
    const auto& b = back.params.named()[i];
    CHECK(a.path == b.path);
    CHECK(std::equal(a.tensor.data().begin(), a.tensor.data().end(), b.tensor.data().begin(), b.tensor.data().end()));
  }
  CHECK(net::dump_json(net::checkpoint_to_json(back.config, back.params)) == text);

  auto bad = j;
  bad["format_version"] = 99;
  CHECK_THROWS_AS(net::checkpoint_from_json(bad), SchemaError);
  bad = j;
  bad["params"]["late/W"]["shape"] = {16, 8};
  CHECK_THROWS_AS(net::checkpoint_from_json(bad), SchemaError);
  bad = j;
  bad["params"].erase("head/dir_b");
  CHECK_THROWS_AS(net::checkpoint_from_json(bad), SchemaError);
}
