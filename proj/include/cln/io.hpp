#pragma once

// Atomic artifact writes and dataset serialization.

#include <filesystem>
#include <fstream>
#include <string>

#include "cln/errors.hpp"
#include "cln/relgraph.hpp"

namespace cln {

// Writes to a sibling temporary file and renames it over the target, so a
// crash never leaves a partially written artifact behind.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw ConfigError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void save_graph(const RelGraph& g, const GraphPaths& paths) {
  write_file_atomic(paths.nodes, nodes_text(g));
  write_file_atomic(paths.edges, edges_text(g));
  write_file_atomic(paths.labels, labels_text(g));
}

inline void save_splits(const RelGraph& g, const SplitMask& mask, const std::filesystem::path& path) {
  write_file_atomic(path, splits_text(g, mask));
}

}  // namespace cln
