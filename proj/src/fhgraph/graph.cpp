#include "etd/fhgraph/graph.hpp"

#include <algorithm>
#include <deque>
#include <functional>

#include "etd/error.hpp"

namespace etd::fhg {

std::string NodeId::str() const {
  return t ? entity + "@" + std::to_string(*t) : entity + "@static";
}

std::strong_ordering NodeId::operator<=>(const NodeId& other) const {
  if (t.has_value() != other.t.has_value()) return t.has_value() ? std::strong_ordering::greater
                                                                 : std::strong_ordering::less;
  if (t && *t != *other.t) return *t <=> *other.t;
  return entity.compare(other.entity) <=> 0;
}

std::size_t NodeIdHash::operator()(const NodeId& id) const noexcept {
  std::size_t h = std::hash<std::string>{}(id.entity);
  const std::size_t tv = id.t ? static_cast<std::size_t>(*id.t) + 1 : 0;
  return h ^ (tv + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2));
}

namespace {

bool edge_less(const Edge& a, const Edge& b) {
  if (a.family != b.family) return a.family < b.family;
  if (a.src != b.src) return a.src < b.src;
  if (a.dst != b.dst) return a.dst < b.dst;
  return a.relation < b.relation;
}

}  // namespace

FullHistoryGraph FullHistoryGraph::build(std::vector<NodeRecord> nodes, std::vector<Edge> edges) {
  FullHistoryGraph g;
  g.nodes_ = std::move(nodes);
  g.index_.reserve(g.nodes_.size());
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
    const auto& n = g.nodes_[i];
    if (!g.index_.emplace(n.id, i).second) throw IntegrityError("duplicate node id " + n.id.str());
    if (i == 0) {
      g.feature_dim_ = n.features.size();
    } else if (n.features.size() != g.feature_dim_) {
      throw IntegrityError("node " + n.id.str() + " has " + std::to_string(n.features.size()) +
                           " features, expected " + std::to_string(g.feature_dim_));
    }
    if (n.mask && !n.label) throw IntegrityError("node " + n.id.str() + " is in the loss mask but has no label");
  }

  g.intra_in_.assign(g.nodes_.size(), {});
  g.inter_in_.assign(g.nodes_.size(), {});
  for (auto& e : edges) {
    auto s = g.find(e.src);
    auto d = g.find(e.dst);
    if (!s) throw IntegrityError("edge source " + e.src.str() + " is not a node");
    if (!d) throw IntegrityError("edge target " + e.dst.str() + " is not a node");
    if (e.family == EdgeFamily::Intra) {
      if (!e.src.is_static() && !e.dst.is_static() && *e.src.t != *e.dst.t) {
        throw FamilyViolation("intra edge " + e.src.str() + " -> " + e.dst.str() + " crosses timesteps");
      }
      g.intra_idx_.push_back({*s, *d});
      g.intra_in_[*d].push_back(*s);
      g.intra_.push_back(std::move(e));
    } else {
      if (e.src.is_static() || e.dst.is_static()) {
        throw FamilyViolation("inter edge " + e.src.str() + " -> " + e.dst.str() + " touches a static node");
      }
      if (*e.dst.t != *e.src.t + 1) {
        throw FamilyViolation("inter edge " + e.src.str() + " -> " + e.dst.str() + " must advance exactly one timestep");
      }
      g.inter_idx_.push_back({*s, *d});
      g.inter_in_[*d].push_back(*s);
      g.inter_.push_back(std::move(e));
    }
  }
  for (auto& preds : g.inter_in_) {
    std::sort(preds.begin(), preds.end(), [&](std::size_t a, std::size_t b) { return g.nodes_[a].id < g.nodes_[b].id; });
  }
  if (!g.inter_is_acyclic()) throw IntegrityError("inter-timestep edges contain a cycle");
  return g;
}

std::optional<std::size_t> FullHistoryGraph::find(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t FullHistoryGraph::index_of(const NodeId& id) const {
  auto i = find(id);
  if (!i) throw LookupError("unknown node " + id.str());
  return *i;
}

std::vector<NodeId> FullHistoryGraph::neighbors_intra(const NodeId& x) const {
  std::vector<NodeId> out;
  for (auto i : intra_in(index_of(x))) out.push_back(nodes_[i].id);
  return out;
}

std::vector<std::size_t> FullHistoryGraph::predecessors_window(std::size_t x, std::size_t window) const {
  if (nodes_.at(x).id.is_static()) {
    throw ContractError("static node " + nodes_[x].id.str() + " has no history window");
  }
  if (window == 0) throw ContractError("history window must be positive");
  std::vector<std::size_t> reached;
  std::vector<std::uint8_t> seen(nodes_.size(), 0);
  std::vector<std::size_t> frontier{x};
  seen[x] = 1;
  for (std::size_t hop = 0; hop < window && !frontier.empty(); ++hop) {
    std::vector<std::size_t> next;
    for (auto v : frontier) {
      for (auto p : inter_in_[v]) {
        if (!seen[p]) {
          seen[p] = 1;
          next.push_back(p);
          reached.push_back(p);
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(reached.begin(), reached.end(), [&](std::size_t a, std::size_t b) { return nodes_[a].id < nodes_[b].id; });
  if (reached.size() > window) reached.erase(reached.begin(), reached.end() - static_cast<std::ptrdiff_t>(window));
  return reached;
}

std::vector<NodeId> FullHistoryGraph::predecessors_window(const NodeId& x, std::size_t window) const {
  std::vector<NodeId> out;
  for (auto i : predecessors_window(index_of(x), window)) out.push_back(nodes_[i].id);
  return out;
}

bool FullHistoryGraph::inter_is_acyclic() const {
  std::vector<std::size_t> indegree(nodes_.size(), 0);
  std::vector<std::vector<std::size_t>> out(nodes_.size());
  for (const auto& e : inter_idx_) {
    ++indegree[e.dst];
    out[e.src].push_back(e.dst);
  }
  std::deque<std::size_t> ready;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (indegree[i] == 0) ready.push_back(i);
  std::size_t removed = 0;
  while (!ready.empty()) {
    auto v = ready.front();
    ready.pop_front();
    ++removed;
    for (auto w : out[v])
      if (--indegree[w] == 0) ready.push_back(w);
  }
  return removed == nodes_.size();
}

std::size_t FullHistoryGraph::num_dynamic() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const NodeRecord& n) { return !n.id.is_static(); }));
}

FullHistoryGraph FullHistoryGraph::canonical() const {
  auto nodes = nodes_;
  std::sort(nodes.begin(), nodes.end(), [](const NodeRecord& a, const NodeRecord& b) { return a.id < b.id; });
  std::vector<Edge> edges(intra_.begin(), intra_.end());
  edges.insert(edges.end(), inter_.begin(), inter_.end());
  std::stable_sort(edges.begin(), edges.end(), edge_less);
  return build(std::move(nodes), std::move(edges));
}

bool structurally_equal(const FullHistoryGraph& a, const FullHistoryGraph& b) {
  if (a.num_nodes() != b.num_nodes() || a.intra_edges().size() != b.intra_edges().size() ||
      a.inter_edges().size() != b.inter_edges().size()) {
    return false;
  }
  auto ca = a.canonical();
  auto cb = b.canonical();
  return std::equal(ca.nodes().begin(), ca.nodes().end(), cb.nodes().begin(), cb.nodes().end()) &&
         std::equal(ca.intra_edges().begin(), ca.intra_edges().end(), cb.intra_edges().begin(),
                    cb.intra_edges().end()) &&
         std::equal(ca.inter_edges().begin(), ca.inter_edges().end(), cb.inter_edges().begin(),
                    cb.inter_edges().end());
}

}  // namespace etd::fhg
