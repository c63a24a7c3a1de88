#pragma once

// Versioned text container for model parameters. Numbers are written in
// shortest round-trip form, so save/load is bit-exact.
//
//   cln-checkpoint 1
//   kind <tag>
//   field <key> <value>
//   block <name> <rows> <cols>
//   <cols values per line, rows lines>
//   end

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cln/errors.hpp"
#include "cln/io.hpp"
#include "cln/model.hpp"

namespace cln {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  struct Block {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
  };

  std::string kind;
  std::vector<std::pair<std::string, std::string>> fields;
  std::vector<Block> blocks;

  void set(const std::string& key, const std::string& value) { fields.emplace_back(key, value); }

  const std::string& get(const std::string& key) const {
    for (const auto& [k, v] : fields)
      if (k == key) return v;
    throw ConfigError("checkpoint has no field '" + key + "'");
  }

  std::size_t get_count(const std::string& key) const { return std::stoull(get(key)); }

  double get_double(const std::string& key) const {
    const auto& s = get(key);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("checkpoint field '" + key + "' is not a number");
    return v;
  }
};

inline std::string checkpoint_text(const Checkpoint& ck) {
  std::string s = "cln-checkpoint " + std::to_string(kCheckpointVersion) + "\nkind " + ck.kind + '\n';
  for (const auto& [k, v] : ck.fields) s += "field " + k + ' ' + v + '\n';
  for (const auto& b : ck.blocks) {
    s += "block " + b.name + ' ' + std::to_string(b.rows) + ' ' + std::to_string(b.cols) + '\n';
    for (std::size_t r = 0; r < b.rows; ++r) {
      for (std::size_t c = 0; c < b.cols; ++c) {
        if (c) s += ' ';
        s += detail::format_double(b.values[r * b.cols + c]);
      }
      s += '\n';
    }
  }
  s += "end\n";
  return s;
}

inline Checkpoint parse_checkpoint(const std::string& text, const std::string& origin = "<checkpoint>") {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() {
    if (!std::getline(in, line)) throw ParseError(origin, line_no, "unexpected end of checkpoint");
    ++line_no;
  };
  next();
  if (line != "cln-checkpoint " + std::to_string(kCheckpointVersion)) {
    throw ParseError(origin, line_no, "not a version " + std::to_string(kCheckpointVersion) + " checkpoint");
  }
  next();
  if (line.rfind("kind ", 0) != 0) throw ParseError(origin, line_no, "missing kind");
  Checkpoint ck;
  ck.kind = line.substr(5);
  while (true) {
    next();
    if (line == "end") break;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "field") {
      std::string key, value;
      ls >> key;
      std::getline(ls, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      ck.set(key, value);
    } else if (tag == "block") {
      Checkpoint::Block b;
      if (!(ls >> b.name >> b.rows >> b.cols)) throw ParseError(origin, line_no, "malformed block header");
      b.values.reserve(b.rows * b.cols);
      for (std::size_t r = 0; r < b.rows; ++r) {
        next();
        std::istringstream vs(line);
        std::string tok;
        std::size_t cols = 0;
        while (vs >> tok) {
          double v = 0.0;
          auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
          if (ec != std::errc() || ptr != tok.data() + tok.size()) {
            throw ParseError(origin, line_no, "bad number '" + tok + "'");
          }
          b.values.push_back(v);
          ++cols;
        }
        if (cols != b.cols) throw ParseError(origin, line_no, "block row has wrong length");
      }
      ck.blocks.push_back(std::move(b));
    } else {
      throw ParseError(origin, line_no, "unknown record '" + tag + "'");
    }
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_text(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

// --- column network parameters

inline constexpr const char* kClnKind = "cln";

inline Checkpoint to_checkpoint(const ClnParams& p, const std::string& kind = kClnKind) {
  Checkpoint ck;
  ck.kind = kind;
  const auto& s = p.spec;
  ck.set("column", to_string(s.column));
  ck.set("sharing", to_string(s.sharing));
  ck.set("tie_gates", s.tie_gates ? "1" : "0");
  ck.set("pooling", to_string(s.pooling));
  ck.set("head", to_string(s.head));
  ck.set("features", std::to_string(s.features));
  ck.set("relations", std::to_string(s.relations));
  ck.set("labels", std::to_string(s.labels));
  ck.set("width", std::to_string(s.width));
  ck.set("depth", std::to_string(s.depth));
  ck.set("z_config", detail::format_double(s.z));
  ck.set("z", detail::format_double(p.z));
  ck.set("seed", std::to_string(p.seed));
  const_cast<ClnParams&>(p).visit([&](const std::string& name, std::span<double> values) {
    Checkpoint::Block b;
    b.name = name;
    b.rows = 1;
    b.cols = values.size();
    b.values.assign(values.begin(), values.end());
    ck.blocks.push_back(std::move(b));
  });
  // Restore matrix shapes for readability.
  std::size_t k = 0;
  auto reshape = [&](std::size_t rows, std::size_t cols) {
    ck.blocks[k].rows = rows;
    ck.blocks[k].cols = cols;
    ++k;
  };
  auto unit_shapes = [&](const RelationalUnit& u) {
    reshape(u.W.rows(), u.W.cols());
    reshape(1, u.b.dim());
    for (const auto& v : u.V) reshape(v.rows(), v.cols());
  };
  unit_shapes(p.input);
  for (const auto& u : p.transforms) unit_shapes(u);
  for (const auto& u : p.gates) unit_shapes(u);
  reshape(p.head_W.rows(), p.head_W.cols());
  reshape(1, p.head_b.dim());
  return ck;
}

inline ClnParams params_from_checkpoint(const Checkpoint& ck, const std::string& kind = kClnKind) {
  if (ck.kind != kind) throw ConfigError("checkpoint kind is '" + ck.kind + "', expected '" + kind + "'");
  ModelSpec s;
  s.column = parse_column_kind(ck.get("column"));
  s.sharing = parse_sharing(ck.get("sharing"));
  s.tie_gates = ck.get("tie_gates") == "1";
  s.pooling = parse_pooling(ck.get("pooling"));
  s.head = parse_head_kind(ck.get("head"));
  s.features = ck.get_count("features");
  s.relations = ck.get_count("relations");
  s.labels = ck.get_count("labels");
  s.width = ck.get_count("width");
  s.depth = ck.get_count("depth");
  s.z = ck.get_double("z_config");
  ClnParams p = make_params(s, std::stoull(ck.get("seed")), false);
  p.z = ck.get_double("z");
  std::size_t k = 0;
  p.visit([&](const std::string& name, std::span<double> values) {
    if (k >= ck.blocks.size()) throw ConfigError("checkpoint is missing block '" + name + "'");
    const auto& b = ck.blocks[k++];
    if (b.name != name || b.values.size() != values.size()) {
      throw ShapeError("checkpoint block '" + b.name + "' does not match expected '" + name + "' (" +
                       std::to_string(values.size()) + " values)");
    }
    std::copy(b.values.begin(), b.values.end(), values.begin());
  });
  if (k != ck.blocks.size()) throw ShapeError("checkpoint has extra blocks");
  return p;
}

}  // namespace cln
