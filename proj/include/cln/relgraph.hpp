#pragma once

// Multi-relational entity graph: features, typed directed relations, labels,
// and train/validation/test role assignment.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cln/errors.hpp"
#include "cln/numerics.hpp"

namespace cln {

enum class HeadKind { Multiclass, Multilabel };

inline std::string to_string(HeadKind h) { return h == HeadKind::Multiclass ? "multiclass" : "multilabel"; }

inline HeadKind parse_head_kind(const std::string& s) {
  if (s == "multiclass") return HeadKind::Multiclass;
  if (s == "multilabel") return HeadKind::Multilabel;
  throw ConfigError("unknown head kind '" + s + "' (expected multiclass or multilabel)");
}

struct Tuple {
  std::size_t src;
  std::size_t dst;
  std::size_t relation;

  auto operator<=>(const Tuple&) const = default;
};

class RelGraph {
 public:
  std::vector<std::string> node_ids;
  std::vector<std::string> relation_names;
  std::vector<std::string> label_names;
  HeadKind head = HeadKind::Multiclass;
  Matrix features;  // N x M
  Matrix targets;   // N x L, one-hot (multiclass) or multi-hot (multilabel)
  std::vector<char> observed;

  std::size_t entity_count() const { return node_ids.size(); }
  std::size_t relation_count() const { return relation_names.size(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t label_arity() const { return label_names.size(); }

  // Index of the single class of a multiclass entity.
  std::size_t label_of(std::size_t i) const {
    const auto row = targets.row(i);
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }

  const std::vector<std::size_t>& inbound(std::size_t r, std::size_t i) const { return inbound_[r][i]; }

  std::size_t tuple_count() const { return tuple_count_; }

  // Tuples ordered by (relation, dst, src).
  std::vector<Tuple> tuples() const {
    std::vector<Tuple> out;
    out.reserve(tuple_count_);
    for (std::size_t r = 0; r < inbound_.size(); ++r)
      for (std::size_t i = 0; i < inbound_[r].size(); ++i)
        for (std::size_t j : inbound_[r][i]) out.push_back({j, i, r});
    return out;
  }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Registers nodes; features must already be sized N x M.
  void set_nodes(std::vector<std::string> ids) {
    index_.clear();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!index_.emplace(ids[i], i).second) throw ValidationError("duplicate node id '" + ids[i] + "'");
    }
    node_ids = std::move(ids);
    inbound_.assign(relation_names.size(), std::vector<std::vector<std::size_t>>(node_ids.size()));
    tuple_count_ = 0;
  }

  std::size_t add_relation(const std::string& name) {
    relation_names.push_back(name);
    inbound_.emplace_back(node_ids.size());
    return relation_names.size() - 1;
  }

  // Builds sorted inbound lists, rejecting self-loops and duplicates.
  void set_tuples(std::vector<Tuple> ts) {
    for (auto& per_rel : inbound_)
      for (auto& lst : per_rel) lst.clear();
    const std::size_t n = node_ids.size();
    for (const auto& t : ts) {
      if (t.src >= n || t.dst >= n) throw ReferentialError("tuple references entity outside [0, N)");
      if (t.relation >= relation_names.size()) throw ReferentialError("tuple references unknown relation");
      if (t.src == t.dst) {
        throw ValidationError("self-loop on '" + node_ids[t.src] + "' under relation '" +
                              relation_names[t.relation] + "'");
      }
      inbound_[t.relation][t.dst].push_back(t.src);
    }
    for (std::size_t r = 0; r < inbound_.size(); ++r) {
      for (std::size_t i = 0; i < n; ++i) {
        auto& lst = inbound_[r][i];
        std::sort(lst.begin(), lst.end());
        auto dup = std::adjacent_find(lst.begin(), lst.end());
        if (dup != lst.end()) {
          throw ValidationError("duplicate tuple (" + node_ids[*dup] + ", " + node_ids[i] + ", " +
                                relation_names[r] + ")");
        }
      }
    }
    tuple_count_ = ts.size();
  }

  bool operator==(const RelGraph& o) const {
    return node_ids == o.node_ids && relation_names == o.relation_names && label_names == o.label_names &&
           head == o.head && features == o.features && targets == o.targets && observed == o.observed &&
           inbound_ == o.inbound_;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::vector<std::size_t>>> inbound_;  // [r][i] -> sorted sources
  std::size_t tuple_count_ = 0;
};

inline const std::vector<std::size_t>& neighbors(const RelGraph& g, std::size_t i, std::size_t r) {
  if (i >= g.entity_count()) {
    throw IndexError("entity " + std::to_string(i) + " out of range [0, " + std::to_string(g.entity_count()) + ")");
  }
  if (r >= g.relation_count()) {
    throw IndexError("relation " + std::to_string(r) + " out of range [0, " + std::to_string(g.relation_count()) +
                     ")");
  }
  return g.inbound(r, i);
}

// N(i): union over relations, sorted.
inline std::vector<std::size_t> all_neighbors(const RelGraph& g, std::size_t i) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < g.relation_count(); ++r) {
    const auto& lst = neighbors(g, i, r);
    out.insert(out.end(), lst.begin(), lst.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Same entities, features and labels with every relation removed.
inline RelGraph strip_relations(const RelGraph& g) {
  RelGraph out;
  out.label_names = g.label_names;
  out.head = g.head;
  out.features = g.features;
  out.targets = g.targets;
  out.observed = g.observed;
  out.set_nodes(g.node_ids);
  return out;
}

// Shortest directed path from j to i along tuples, following information flow.
inline std::optional<std::size_t> hop_distance(const RelGraph& g, std::size_t i, std::size_t j) {
  const std::size_t n = g.entity_count();
  if (i >= n || j >= n) throw IndexError("hop_distance: entity out of range");
  if (i == j) return 0;
  std::vector<std::size_t> dist(n, SIZE_MAX);
  std::deque<std::size_t> queue{i};
  dist[i] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t r = 0; r < g.relation_count(); ++r) {
      for (std::size_t v : g.inbound(r, u)) {
        if (dist[v] != SIZE_MAX) continue;
        dist[v] = dist[u] + 1;
        if (v == j) return dist[v];
        queue.push_back(v);
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Roles

enum class Role : unsigned char { Train, Valid, Test, None };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::Train: return "train";
    case Role::Valid: return "valid";
    case Role::Test: return "test";
    case Role::None: return "none";
  }
  return "none";
}

inline Role parse_role(const std::string& s) {
  if (s == "train") return Role::Train;
  if (s == "valid" || s == "validation") return Role::Valid;
  if (s == "test") return Role::Test;
  throw ConfigError("unknown role '" + s + "'");
}

// Role per entity. Entities without an observed label carry Role::None and are
// neither trained on nor scored.
struct SplitMask {
  std::vector<Role> roles;
  std::vector<std::string> warnings;

  std::vector<std::size_t> members(Role r) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < roles.size(); ++i)
      if (roles[i] == r) out.push_back(i);
    return out;
  }
  std::size_t count(Role r) const { return static_cast<std::size_t>(std::count(roles.begin(), roles.end(), r)); }

  bool operator==(const SplitMask& o) const { return roles == o.roles; }
};

struct SplitFractions {
  double train = 0.6;
  double valid = 0.2;
  double test = 0.2;
};

// Stratum key: the class for multiclass, lowest positive label for multilabel.
inline std::size_t stratum_of(const RelGraph& g, std::size_t i) {
  const auto row = g.targets.row(i);
  for (std::size_t l = 0; l < row.size(); ++l)
    if (row[l] > 0.5) return l;
  return row.size();
}

inline SplitMask make_split(const RelGraph& g, SplitFractions f, std::uint64_t seed) {
  const double fr[3] = {f.train, f.valid, f.test};
  for (double x : fr)
    if (!(x > 0.0)) throw ConfigError("split fractions must be positive");
  if (std::abs(f.train + f.valid + f.test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  SplitMask mask;
  mask.roles.assign(g.entity_count(), Role::None);
  std::map<std::size_t, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < g.entity_count(); ++i)
    if (g.observed[i]) strata[stratum_of(g, i)].push_back(i);

  Rng rng(seed);
  std::vector<std::size_t> order;
  std::vector<std::size_t> pooled;
  for (auto& [label, ids] : strata) {
    std::shuffle(ids.begin(), ids.end(), rng);
    if (ids.size() < 3) {
      const std::string name = label < g.label_arity() ? g.label_names[label] : std::string("<none>");
      mask.warnings.push_back("class '" + name + "' has " + std::to_string(ids.size()) +
                              " entities, fewer than the 3 roles; assigned unstratified");
      pooled.insert(pooled.end(), ids.begin(), ids.end());
    } else {
      order.insert(order.end(), ids.begin(), ids.end());
    }
  }
  std::shuffle(pooled.begin(), pooled.end(), rng);
  order.insert(order.end(), pooled.begin(), pooled.end());

  // Systematic allocation: each position goes to the role furthest behind its
  // quota, so every prefix (and hence every class block) is near-proportional.
  std::size_t assigned[3] = {0, 0, 0};
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t r = 0; r < 3; ++r) {
      const double deficit = fr[r] * static_cast<double>(k + 1) - static_cast<double>(assigned[r]);
      if (deficit > best_deficit + 1e-12) {
        best_deficit = deficit;
        best = r;
      }
    }
    ++assigned[best];
    mask.roles[order[k]] = static_cast<Role>(best);
  }
  for (Role r : {Role::Train, Role::Valid, Role::Test}) {
    if (mask.count(r) == 0) throw ConfigError("split leaves role '" + to_string(r) + "' empty");
  }
  return mask;
}

// ---------------------------------------------------------------------------
// File formats (tab-separated)

namespace detail {

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

struct LineReader {
  std::ifstream in;
  std::string path;
  std::size_t line_no = 0;

  explicit LineReader(const std::string& p) : in(p), path(p) {
    if (!in) throw ConfigError("cannot open '" + p + "'");
  }

  // Next non-empty, non-comment line.
  bool next(std::string& line) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      return true;
    }
    return false;
  }
};

inline double parse_double(const std::string& tok, const LineReader& rd) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError(rd.path, rd.line_no, "not a finite number: '" + tok + "'");
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

// Integer-looking names sort numerically, everything else lexicographically.
inline bool label_less(const std::string& a, const std::string& b) {
  auto is_int = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (is_int(a) && is_int(b)) {
    if (a.size() != b.size()) return a.size() < b.size();
  }
  return a < b;
}

}  // namespace detail

struct GraphPaths {
  std::string nodes;
  std::string edges;
  std::string labels;
};

inline RelGraph load_graph(const GraphPaths& paths, HeadKind head = HeadKind::Multiclass) {
  RelGraph g;
  g.head = head;

  // nodes
  std::vector<std::string> ids;
  std::vector<double> values;
  std::size_t m = 0;
  {
    detail::LineReader rd(paths.nodes);
    std::string line;
    if (!rd.next(line)) throw ParseError(paths.nodes, rd.line_no, "missing header row");
    const auto header = detail::split_tabs(line);
    if (header.empty() || header[0] != "id") throw ParseError(paths.nodes, rd.line_no, "header must start with 'id'");
    m = header.size() - 1;
    while (rd.next(line)) {
      const auto cols = detail::split_tabs(line);
      if (cols.size() != m + 1) {
        throw ParseError(paths.nodes, rd.line_no,
                         "expected " + std::to_string(m + 1) + " columns, found " + std::to_string(cols.size()));
      }
      if (cols[0].empty()) throw ParseError(paths.nodes, rd.line_no, "empty node id");
      ids.push_back(cols[0]);
      for (std::size_t c = 1; c <= m; ++c) values.push_back(detail::parse_double(cols[c], rd));
    }
  }
  g.features = Matrix(ids.size(), m);
  std::copy(values.begin(), values.end(), g.features.span().begin());
  g.set_nodes(std::move(ids));
  const std::size_t n = g.entity_count();

  // edges
  std::vector<Tuple> tuples;
  {
    detail::LineReader rd(paths.edges);
    std::unordered_map<std::string, std::size_t> rel_ids;
    std::string line;
    auto lookup = [&](const std::string& id) {
      auto idx = g.find(id);
      if (!idx) throw ReferentialError(paths.edges + ":" + std::to_string(rd.line_no) + ": undeclared node '" + id + "'");
      return *idx;
    };
    while (rd.next(line)) {
      const auto cols = detail::split_tabs(line);
      if (cols.size() != 4) {
        throw ParseError(paths.edges, rd.line_no, "expected 4 columns, found " + std::to_string(cols.size()));
      }
      if (cols[3] != "uni" && cols[3] != "bi") {
        throw ParseError(paths.edges, rd.line_no, "direction must be 'uni' or 'bi', got '" + cols[3] + "'");
      }
      if (cols[2].empty()) throw ParseError(paths.edges, rd.line_no, "empty relation name");
      const std::size_t src = lookup(cols[0]);
      const std::size_t dst = lookup(cols[1]);
      auto [it, fresh] = rel_ids.emplace(cols[2], g.relation_count());
      if (fresh) g.add_relation(cols[2]);
      tuples.push_back({src, dst, it->second});
      if (cols[3] == "bi") tuples.push_back({dst, src, it->second});
    }
  }
  g.set_tuples(std::move(tuples));

  // labels
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::set<std::string, decltype(&detail::label_less)> names(&detail::label_less);
  {
    detail::LineReader rd(paths.labels);
    std::string line;
    std::vector<char> seen(n, 0);
    while (rd.next(line)) {
      const auto cols = detail::split_tabs(line);
      if (cols.size() != 2) {
        throw ParseError(paths.labels, rd.line_no, "expected 2 columns, found " + std::to_string(cols.size()));
      }
      auto idx = g.find(cols[0]);
      if (!idx) {
        throw ReferentialError(paths.labels + ":" + std::to_string(rd.line_no) + ": undeclared node '" + cols[0] + "'");
      }
      if (seen[*idx]) throw ParseError(paths.labels, rd.line_no, "second label row for '" + cols[0] + "'");
      seen[*idx] = 1;
      auto toks = detail::split_commas(cols[1]);
      if (toks.empty()) throw ParseError(paths.labels, rd.line_no, "empty label");
      if (head == HeadKind::Multiclass && toks.size() != 1) {
        throw ParseError(paths.labels, rd.line_no, "multiclass label must be a single token");
      }
      names.insert(toks.begin(), toks.end());
      rows.emplace_back(*idx, std::move(toks));
    }
  }
  g.label_names.assign(names.begin(), names.end());
  std::unordered_map<std::string, std::size_t> label_index;
  for (std::size_t l = 0; l < g.label_names.size(); ++l) label_index[g.label_names[l]] = l;
  g.targets = Matrix(n, g.label_names.size());
  g.observed.assign(n, 0);
  for (const auto& [i, toks] : rows) {
    g.observed[i] = 1;
    for (const auto& t : toks) g.targets(i, label_index[t]) = 1.0;
  }
  return g;
}

inline SplitMask load_splits(const std::string& path, const RelGraph& g) {
  SplitMask mask;
  mask.roles.assign(g.entity_count(), Role::None);
  detail::LineReader rd(path);
  std::string line;
  while (rd.next(line)) {
    const auto cols = detail::split_tabs(line);
    if (cols.size() != 2) throw ParseError(path, rd.line_no, "expected 2 columns, found " + std::to_string(cols.size()));
    auto idx = g.find(cols[0]);
    if (!idx) throw ReferentialError(path + ":" + std::to_string(rd.line_no) + ": undeclared node '" + cols[0] + "'");
    Role role;
    try {
      role = parse_role(cols[1]);
    } catch (const ConfigError& e) {
      throw ParseError(path, rd.line_no, e.what());
    }
    if (!g.observed[*idx]) {
      throw ValidationError(path + ":" + std::to_string(rd.line_no) + ": node '" + cols[0] + "' has no label");
    }
    mask.roles[*idx] = role;
  }
  for (Role r : {Role::Train, Role::Valid, Role::Test}) {
    if (mask.count(r) == 0) throw ConfigError(path + ": role '" + to_string(r) + "' is empty");
  }
  return mask;
}

inline std::string nodes_text(const RelGraph& g) {
  std::string s = "id";
  for (std::size_t c = 0; c < g.feature_dim(); ++c) s += "\tf" + std::to_string(c + 1);
  s += '\n';
  for (std::size_t i = 0; i < g.entity_count(); ++i) {
    s += g.node_ids[i];
    for (double v : g.features.row(i)) {
      s += '\t';
      s += detail::format_double(v);
    }
    s += '\n';
  }
  return s;
}

// Reciprocal pairs are written once as 'bi'; relations are emitted in id order
// so first-seen numbering survives a reload.
inline std::string edges_text(const RelGraph& g) {
  std::string s;
  for (std::size_t r = 0; r < g.relation_count(); ++r) {
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < g.entity_count(); ++i)
      for (std::size_t j : g.inbound(r, i)) pairs.emplace(j, i);
    for (const auto& [src, dst] : pairs) {
      const bool reciprocal = pairs.count({dst, src}) > 0;
      if (reciprocal && src > dst) continue;
      s += g.node_ids[src] + '\t' + g.node_ids[dst] + '\t' + g.relation_names[r] + '\t' + (reciprocal ? "bi" : "uni");
      s += '\n';
    }
  }
  return s;
}

inline std::string labels_text(const RelGraph& g) {
  std::string s;
  for (std::size_t i = 0; i < g.entity_count(); ++i) {
    if (!g.observed[i]) continue;
    s += g.node_ids[i] + '\t';
    bool first = true;
    for (std::size_t l = 0; l < g.label_arity(); ++l) {
      if (g.targets(i, l) < 0.5) continue;
      if (!first) s += ',';
      s += g.label_names[l];
      first = false;
    }
    s += '\n';
  }
  return s;
}

inline std::string splits_text(const RelGraph& g, const SplitMask& mask) {
  std::string s;
  for (std::size_t i = 0; i < g.entity_count(); ++i) {
    if (mask.roles[i] == Role::None) continue;
    s += g.node_ids[i] + '\t' + to_string(mask.roles[i]) + '\n';
  }
  return s;
}

// ---------------------------------------------------------------------------
// Planted-partition generator

struct SynthConfig {
  std::size_t n = 2000;
  std::size_t relations = 2;
  std::size_t classes = 3;
  std::size_t feature_dim = 16;
  double avg_degree = 4.0;  // inbound tuples per entity and relation
  double homophily = 0.9;
  double feature_noise = 3.5;
  SplitFractions split;
  std::uint64_t seed = 1;
};

struct SynthData {
  RelGraph graph;
  SplitMask split;
};

// Even-numbered relations are bidirectional, odd ones unidirectional.
inline SynthData generate_synthetic(const SynthConfig& cfg) {
  if (cfg.classes == 0 || cfg.n < cfg.classes) throw ConfigError("synthetic: need n >= classes >= 1");
  if (!(cfg.homophily >= 0.0 && cfg.homophily <= 1.0)) throw ConfigError("synthetic: homophily must be in [0, 1]");
  if (cfg.feature_dim == 0) throw ConfigError("synthetic: feature_dim must be positive");
  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::size_t> cls(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) cls[i] = i % cfg.classes;
  std::shuffle(cls.begin(), cls.end(), rng);
  std::vector<std::vector<std::size_t>> by_class(cfg.classes);
  for (std::size_t i = 0; i < cfg.n; ++i) by_class[cls[i]].push_back(i);

  Matrix centroids(cfg.classes, cfg.feature_dim);
  for (double& v : centroids.span()) v = gauss(rng);

  RelGraph g;
  g.head = HeadKind::Multiclass;
  for (std::size_t c = 0; c < cfg.classes; ++c) g.label_names.push_back(std::to_string(c));
  g.features = Matrix(cfg.n, cfg.feature_dim);
  g.targets = Matrix(cfg.n, cfg.classes);
  g.observed.assign(cfg.n, 1);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    for (std::size_t d = 0; d < cfg.feature_dim; ++d)
      g.features(i, d) = centroids(cls[i], d) + cfg.feature_noise * gauss(rng);
    g.targets(i, cls[i]) = 1.0;
  }
  std::vector<std::string> ids(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) ids[i] = "n" + std::to_string(i);
  g.set_nodes(std::move(ids));
  for (std::size_t r = 0; r < cfg.relations; ++r) g.add_relation("rel" + std::to_string(r));

  std::vector<Tuple> tuples;
  std::set<Tuple> present;
  std::uniform_int_distribution<std::size_t> pick_node(0, cfg.n - 1);
  for (std::size_t r = 0; r < cfg.relations; ++r) {
    const bool bidirectional = r % 2 == 0;
    const auto target = static_cast<std::size_t>(std::llround(cfg.avg_degree * static_cast<double>(cfg.n)));
    const std::size_t draws = bidirectional ? target / 2 : target;
    for (std::size_t k = 0; k < draws; ++k) {
      for (int attempt = 0; attempt < 32; ++attempt) {
        const std::size_t src = pick_node(rng);
        const bool same = unit(rng) < cfg.homophily || cfg.classes == 1;
        std::size_t dst_class = cls[src];
        if (!same) {
          std::uniform_int_distribution<std::size_t> other(0, cfg.classes - 2);
          dst_class = other(rng);
          if (dst_class >= cls[src]) ++dst_class;
        }
        const auto& pool = by_class[dst_class];
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const std::size_t dst = pool[pick(rng)];
        if (dst == src || present.count({src, dst, r})) continue;
        if (bidirectional && present.count({dst, src, r})) continue;
        present.insert({src, dst, r});
        tuples.push_back({src, dst, r});
        if (bidirectional) {
          present.insert({dst, src, r});
          tuples.push_back({dst, src, r});
        }
        break;
      }
    }
  }
  g.set_tuples(std::move(tuples));
  SynthData out{std::move(g), {}};
  out.split = make_split(out.graph, cfg.split, cfg.seed);
  return out;
}

// Fraction of tuples joining entities of the same class.
inline double intra_class_fraction(const RelGraph& g) {
  std::size_t same = 0, total = 0;
  for (const auto& t : g.tuples()) {
    ++total;
    if (g.label_of(t.src) == g.label_of(t.dst)) ++same;
  }
  return total ? static_cast<double>(same) / static_cast<double>(total) : 0.0;
}

// Small unstructured instance: N(0,1) features, each ordered pair linked under
// each relation with probability `density`, random labels (multilabel rows
// hold at least one label).
struct RandomGraphConfig {
  std::size_t n = 12;
  std::size_t relations = 2;
  std::size_t labels = 3;
  std::size_t features = 4;
  double density = 0.2;
  HeadKind head = HeadKind::Multiclass;
  std::uint64_t seed = 1;
};

inline RelGraph random_graph(const RandomGraphConfig& cfg) {
  if (cfg.labels == 0 || cfg.features == 0) throw ConfigError("random graph: labels and features must be positive");
  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RelGraph g;
  g.head = cfg.head;
  for (std::size_t l = 0; l < cfg.labels; ++l) g.label_names.push_back("l" + std::to_string(l));
  g.features = Matrix(cfg.n, cfg.features);
  for (double& v : g.features.span()) v = gauss(rng);
  g.targets = Matrix(cfg.n, cfg.labels);
  g.observed.assign(cfg.n, 1);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.labels - 1);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    if (cfg.head == HeadKind::Multiclass) {
      g.targets(i, pick(rng)) = 1.0;
      continue;
    }
    for (std::size_t l = 0; l < cfg.labels; ++l) g.targets(i, l) = unit(rng) < 0.4 ? 1.0 : 0.0;
    g.targets(i, pick(rng)) = 1.0;
  }
  std::vector<std::string> ids(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) ids[i] = "v" + std::to_string(i);
  g.set_nodes(std::move(ids));
  for (std::size_t r = 0; r < cfg.relations; ++r) g.add_relation("r" + std::to_string(r));
  std::vector<Tuple> tuples;
  for (std::size_t r = 0; r < cfg.relations; ++r)
    for (std::size_t i = 0; i < cfg.n; ++i)
      for (std::size_t j = 0; j < cfg.n; ++j)
        if (i != j && unit(rng) < cfg.density) tuples.push_back({i, j, r});
  g.set_tuples(std::move(tuples));
  return g;
}

}  // namespace cln
