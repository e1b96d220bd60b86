#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "etd/fhgraph/graph.hpp"

namespace etd::fhg {

// One JSON object per line: every node line first, then intra edges, then
// inter edges, each in storage order. Doubles use shortest round-trip form.
void write_jsonl(const FullHistoryGraph& g, std::ostream& out);
FullHistoryGraph read_jsonl(std::istream& in);

void save_jsonl(const FullHistoryGraph& g, const std::filesystem::path& path);
FullHistoryGraph load_jsonl(const std::filesystem::path& path);

}  // namespace etd::fhg
