#include "etd/fhgraph/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "etd/error.hpp"
#include "json.hpp"

namespace etd::fhg {
namespace {

using Json = nlohmann::ordered_json;

Json id_to_json(const NodeId& id) {
  Json j;
  j["entity"] = id.entity;
  if (id.t) j["t"] = *id.t;
  return j;
}

Json label_to_json(const std::optional<Label>& label) {
  if (!label) return nullptr;
  Json j;
  if (const auto* d = std::get_if<DualLabel>(&*label)) {
    j["speed"] = d->speed;
    j["dir"] = d->dir;
  } else {
    j["binary"] = std::get<BinaryLabel>(*label).value;
  }
  return j;
}

class LineReader {
 public:
  explicit LineReader(std::size_t line) : line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw SchemaError("line " + std::to_string(line_) + ": field '" + field + "' " + what);
  }

  const Json& require(const Json& obj, const char* field) const {
    auto it = obj.find(field);
    if (it == obj.end()) fail(field, "is missing");
    return *it;
  }

  NodeId node_id(const Json& j, const std::string& field) const {
    if (!j.is_object()) fail(field, "must be an object");
    auto e = j.find("entity");
    if (e == j.end() || !e->is_string()) fail(field + ".entity", "must be a string");
    NodeId id{e->get<std::string>(), std::nullopt};
    if (auto t = j.find("t"); t != j.end() && !t->is_null()) {
      if (!t->is_number_unsigned()) fail(field + ".t", "must be a non-negative integer");
      id.t = t->get<std::uint32_t>();
    }
    return id;
  }

  std::optional<Label> label(const Json& obj) const {
    auto it = obj.find("label");
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_object()) fail("label", "must be an object or null");
    if (it->contains("binary")) {
      const auto& v = (*it)["binary"];
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) fail("label.binary", "must be 0 or 1");
      return BinaryLabel{v.get<int>()};
    }
    if (it->contains("speed") && it->contains("dir")) {
      const auto& s = (*it)["speed"];
      const auto& d = (*it)["dir"];
      if (!s.is_number_integer() || s.get<int>() < 0 || s.get<int>() >= kSpeedClasses) {
        fail("label.speed", "must be an integer class in [0, 4)");
      }
      if (!d.is_number_integer() || d.get<int>() < 0 || d.get<int>() >= kDirectionClasses) {
        fail("label.dir", "must be an integer class in [0, 5)");
      }
      return DualLabel{s.get<int>(), d.get<int>()};
    }
    fail("label", "must carry either 'binary' or both 'speed' and 'dir'");
  }

 private:
  std::size_t line_;
};

}  // namespace

void write_jsonl(const FullHistoryGraph& g, std::ostream& out) {
  for (const auto& n : g.nodes()) {
    Json j;
    j["kind"] = "node";
    j["id"] = id_to_json(n.id);
    j["features"] = n.features;
    if (!n.id.is_static() || n.label || n.mask) {
      j["label"] = label_to_json(n.label);
      j["mask"] = n.mask;
    }
    out << j.dump() << '\n';
  }
  auto write_edges = [&](std::span<const Edge> edges, const char* family) {
    for (const auto& e : edges) {
      Json j;
      j["kind"] = "edge";
      j["family"] = family;
      j["src"] = id_to_json(e.src);
      j["dst"] = id_to_json(e.dst);
      j["relation"] = e.relation ? Json(*e.relation) : Json(nullptr);
      out << j.dump() << '\n';
    }
  };
  write_edges(g.intra_edges(), "intra");
  write_edges(g.inter_edges(), "inter");
}

FullHistoryGraph read_jsonl(std::istream& in) {
  std::vector<NodeRecord> nodes;
  std::vector<Edge> edges;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
    }
    LineReader r(line);
    if (!j.is_object()) r.fail("<root>", "must be an object");
    const auto& kind = r.require(j, "kind");
    if (kind == "node") {
      NodeRecord n;
      n.id = r.node_id(r.require(j, "id"), "id");
      const auto& f = r.require(j, "features");
      if (!f.is_array()) r.fail("features", "must be an array of numbers");
      n.features.reserve(f.size());
      for (const auto& v : f) {
        if (!v.is_number()) r.fail("features", "must be an array of numbers");
        n.features.push_back(v.get<double>());
      }
      n.label = r.label(j);
      if (auto m = j.find("mask"); m != j.end()) {
        if (!m->is_boolean()) r.fail("mask", "must be a boolean");
        n.mask = m->get<bool>();
      }
      nodes.push_back(std::move(n));
    } else if (kind == "edge") {
      Edge e;
      const auto& fam = r.require(j, "family");
      if (fam == "intra") {
        e.family = EdgeFamily::Intra;
      } else if (fam == "inter") {
        e.family = EdgeFamily::Inter;
      } else {
        r.fail("family", "must be \"intra\" or \"inter\"");
      }
      e.src = r.node_id(r.require(j, "src"), "src");
      e.dst = r.node_id(r.require(j, "dst"), "dst");
      if (auto rel = j.find("relation"); rel != j.end() && !rel->is_null()) {
        if (!rel->is_string()) r.fail("relation", "must be a string or null");
        e.relation = rel->get<std::string>();
      }
      edges.push_back(std::move(e));
    } else {
      r.fail("kind", "must be \"node\" or \"edge\"");
    }
  }
  return FullHistoryGraph::build(std::move(nodes), std::move(edges));
}

void save_jsonl(const FullHistoryGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_jsonl(g, out);
  if (!out) throw Error("failed writing " + path.string());
}

FullHistoryGraph load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_jsonl(in);
}

}  // namespace etd::fhg
