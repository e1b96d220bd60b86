#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "etd/fhgraph/graph.hpp"

namespace etd::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kNumeric = 3, kSchema = 4 };

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// Same, without the program name; convenient for tests.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// A file is one unit; a directory contributes its *.jsonl files in name order.
std::vector<std::filesystem::path> unit_files(const std::filesystem::path& p);

// `copies` disjoint replicas of g, entities prefixed "r<k>/".
fhg::FullHistoryGraph replicate(const fhg::FullHistoryGraph& g, std::size_t copies);

}  // namespace etd::cli
