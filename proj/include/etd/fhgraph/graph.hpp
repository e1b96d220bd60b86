#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace etd::fhg {

/// Either a per-timestep replica (entity, t) of a dynamic entity or a static
/// entity that exists at every timestep.
struct NodeId {
  std::string entity;
  std::optional<std::uint32_t> t;

  static NodeId dynamic(std::string entity, std::uint32_t t) { return {std::move(entity), t}; }
  static NodeId fixed(std::string entity) { return {std::move(entity), std::nullopt}; }

  bool is_static() const { return !t.has_value(); }
  std::string str() const;

  bool operator==(const NodeId&) const = default;
  // Static nodes first, then ascending timestep, then entity id.
  std::strong_ordering operator<=>(const NodeId& other) const;
};

struct NodeIdHash {
  std::size_t operator()(const NodeId& id) const noexcept;
};

inline constexpr int kSpeedClasses = 4;
inline constexpr int kDirectionClasses = 5;

struct DualLabel {
  int speed = 0;
  int dir = 0;
  bool operator==(const DualLabel&) const = default;
};

struct BinaryLabel {
  int value = 0;
  bool operator==(const BinaryLabel&) const = default;
};

using Label = std::variant<DualLabel, BinaryLabel>;

struct NodeRecord {
  NodeId id;
  std::vector<double> features;
  std::optional<Label> label;
  bool mask = false;  // participates in the loss

  bool operator==(const NodeRecord&) const = default;
};

enum class EdgeFamily { Intra, Inter };

struct Edge {
  NodeId src;
  NodeId dst;
  EdgeFamily family = EdgeFamily::Intra;
  std::optional<std::string> relation;

  bool operator==(const Edge&) const = default;
};

struct IndexedEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
};

/// Time-unfolded graph with the two disjoint edge families. Immutable after
/// `build`; every query is const and safe to share across threads.
class FullHistoryGraph {
 public:
  FullHistoryGraph() = default;

  // Validates family rules, endpoint existence, id uniqueness, feature width
  // and the acyclicity of the inter-timestep edges.
  static FullHistoryGraph build(std::vector<NodeRecord> nodes, std::vector<Edge> edges);

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t feature_dim() const { return feature_dim_; }
  const NodeRecord& node(std::size_t i) const { return nodes_.at(i); }
  std::span<const NodeRecord> nodes() const { return nodes_; }

  std::span<const Edge> intra_edges() const { return intra_; }
  std::span<const Edge> inter_edges() const { return inter_; }
  std::span<const IndexedEdge> intra_index() const { return intra_idx_; }
  std::span<const IndexedEdge> inter_index() const { return inter_idx_; }

  std::optional<std::size_t> find(const NodeId& id) const;
  std::size_t index_of(const NodeId& id) const;

  // Sources of intra edges pointing at the node, in edge insertion order.
  std::span<const std::size_t> intra_in(std::size_t node) const { return intra_in_.at(node); }
  // Direct inter-timestep predecessors, sorted by (timestep, entity).
  std::span<const std::size_t> inter_in(std::size_t node) const { return inter_in_.at(node); }

  std::vector<NodeId> neighbors_intra(const NodeId& x) const;

  // Nodes reaching x through at most `window` inter edges, ascending by
  // (timestep, entity). When more than `window` qualify only the most recent
  // `window` are kept.
  std::vector<NodeId> predecessors_window(const NodeId& x, std::size_t window) const;
  std::vector<std::size_t> predecessors_window(std::size_t x, std::size_t window) const;

  bool inter_is_acyclic() const;

  std::size_t num_dynamic() const;
  std::size_t num_static() const { return nodes_.size() - num_dynamic(); }

  // Nodes and edges sorted into a canonical order; equal graphs compare equal.
  FullHistoryGraph canonical() const;

 private:
  std::vector<NodeRecord> nodes_;
  std::vector<Edge> intra_;
  std::vector<Edge> inter_;
  std::vector<IndexedEdge> intra_idx_;
  std::vector<IndexedEdge> inter_idx_;
  std::vector<std::vector<std::size_t>> intra_in_;
  std::vector<std::vector<std::size_t>> inter_in_;
  std::unordered_map<NodeId, std::size_t, NodeIdHash> index_;
  std::size_t feature_dim_ = 0;
};

bool structurally_equal(const FullHistoryGraph& a, const FullHistoryGraph& b);

}  // namespace etd::fhg
