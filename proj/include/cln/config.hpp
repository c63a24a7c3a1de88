#pragma once

// Run configuration: a flat key = value file with dotted keys, where every key
// may be overridden on the command line as --<key> <value>.
//
//   # comment
//   data.nodes = data/nodes.tsv
//   model.depth = 10
//   train.batch = mini

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cln/baselines.hpp"
#include "cln/errors.hpp"
#include "cln/io.hpp"
#include "cln/model.hpp"
#include "cln/relgraph.hpp"
#include "cln/training.hpp"

namespace cln {

enum class Family { Cln, HwnNoRel, Sl };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::Cln: return "cln";
    case Family::HwnNoRel: return "hwn_norel";
    case Family::Sl: return "sl";
  }
  return "cln";
}

inline Family parse_family(const std::string& s) {
  if (s == "cln") return Family::Cln;
  if (s == "hwn_norel") return Family::HwnNoRel;
  if (s == "sl") return Family::Sl;
  throw ConfigError("unknown model family '" + s + "' (expected cln, hwn_norel or sl)");
}

struct GradCheckSettings {
  std::size_t entities = 12;
  std::size_t relations = 2;
  std::size_t labels = 3;
  std::size_t features = 4;
  std::size_t depth = 4;
  std::size_t width = 5;
  GradCheckOptions options;
};

struct RunConfig {
  GraphPaths data;
  std::string splits;  // empty: stratified split from `split`
  HeadKind head = HeadKind::Multiclass;
  SplitFractions split;
  Family family = Family::Cln;
  ModelSpec model;
  TrainConfig train;
  SlConfig sl;
  SynthConfig synth;
  GradCheckSettings gradcheck;
  std::string checkpoint;  // eval input; defaults to <out>/checkpoint.txt
  std::string out = "run";
  std::uint64_t seed = 1;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a valid number");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& v, F&& one) {
  std::vector<T> out;
  for (const auto& tok : split_commas(v)) out.push_back(one(trim(tok)));
  return out;
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Every recognised key. The defaults live in the struct initialisers above.
inline const std::vector<ConfigKey>& config_keys() {
  using detail::parse_bool;
  using detail::parse_number;
  using sz = std::size_t;
  static const std::vector<ConfigKey> keys = {
      {"data.nodes", "node table (id, features)", [](RunConfig& c, const std::string& v) { c.data.nodes = v; }},
      {"data.edges", "edge table (src, dst, relation, uni|bi)",
       [](RunConfig& c, const std::string& v) { c.data.edges = v; }},
      {"data.labels", "label table (id, label[,label...])",
       [](RunConfig& c, const std::string& v) { c.data.labels = v; }},
      {"data.splits", "role table (id, train|valid|test); empty for a stratified split",
       [](RunConfig& c, const std::string& v) { c.splits = v; }},
      {"data.head", "multiclass | multilabel",
       [](RunConfig& c, const std::string& v) { c.head = parse_head_kind(v); }},
      {"split.train", "train fraction",
       [](RunConfig& c, const std::string& v) { c.split.train = parse_number<double>("split.train", v); }},
      {"split.valid", "validation fraction",
       [](RunConfig& c, const std::string& v) { c.split.valid = parse_number<double>("split.valid", v); }},
      {"split.test", "test fraction",
       [](RunConfig& c, const std::string& v) { c.split.test = parse_number<double>("split.test", v); }},
      {"model.family", "cln | hwn_norel | sl", [](RunConfig& c, const std::string& v) { c.family = parse_family(v); }},
      {"model.column", "highway | fnn",
       [](RunConfig& c, const std::string& v) { c.model.column = parse_column_kind(v); }},
      {"model.sharing", "shared | per_layer",
       [](RunConfig& c, const std::string& v) { c.model.sharing = parse_sharing(v); }},
      {"model.tie_gates", "share the gate set under layer sharing",
       [](RunConfig& c, const std::string& v) { c.model.tie_gates = parse_bool("model.tie_gates", v); }},
      {"model.depth", "recurrent layers T",
       [](RunConfig& c, const std::string& v) { c.model.depth = parse_number<sz>("model.depth", v); }},
      {"model.width", "hidden width K",
       [](RunConfig& c, const std::string& v) { c.model.width = parse_number<sz>("model.width", v); }},
      {"model.pooling", "mean | sum | max",
       [](RunConfig& c, const std::string& v) { c.model.pooling = parse_pooling(v); }},
      {"model.z", "context normalizer; 0 selects max(1, R)",
       [](RunConfig& c, const std::string& v) { c.model.z = parse_number<double>("model.z", v); }},
      {"train.epochs", "maximum epochs",
       [](RunConfig& c, const std::string& v) { c.train.epochs = parse_number<sz>("train.epochs", v); }},
      {"train.batch", "full | mini",
       [](RunConfig& c, const std::string& v) { c.train.batch = parse_batch_mode(v); }},
      {"train.batch_size", "entities per mini-batch",
       [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_number<sz>("train.batch_size", v); }},
      {"train.refresh_period", "epochs between full blanket rebuilds",
       [](RunConfig& c, const std::string& v) {
         c.train.refresh_period = parse_number<sz>("train.refresh_period", v);
       }},
      {"train.optimizer", "adam | rmsprop",
       [](RunConfig& c, const std::string& v) { c.train.optimizer.kind = parse_optimizer(v); }},
      {"train.lr", "learning rate",
       [](RunConfig& c, const std::string& v) { c.train.optimizer.lr = parse_number<double>("train.lr", v); }},
      {"train.beta1", "Adam first-moment decay",
       [](RunConfig& c, const std::string& v) { c.train.optimizer.beta1 = parse_number<double>("train.beta1", v); }},
      {"train.beta2", "Adam second-moment decay",
       [](RunConfig& c, const std::string& v) { c.train.optimizer.beta2 = parse_number<double>("train.beta2", v); }},
      {"train.rho", "RMSprop decay",
       [](RunConfig& c, const std::string& v) { c.train.optimizer.rho = parse_number<double>("train.rho", v); }},
      {"train.eps", "optimizer epsilon",
       [](RunConfig& c, const std::string& v) { c.train.optimizer.eps = parse_number<double>("train.eps", v); }},
      {"train.patience", "early-stopping patience in epochs",
       [](RunConfig& c, const std::string& v) { c.train.patience = parse_number<sz>("train.patience", v); }},
      {"train.threshold", "multilabel decision threshold",
       [](RunConfig& c, const std::string& v) { c.train.threshold = parse_number<double>("train.threshold", v); }},
      {"dropout.before", "highway: rate after the input projection",
       [](RunConfig& c, const std::string& v) { c.train.dropout.before = parse_number<double>("dropout.before", v); }},
      {"dropout.after", "highway: rate on the top state",
       [](RunConfig& c, const std::string& v) { c.train.dropout.after = parse_number<double>("dropout.after", v); }},
      {"dropout.hidden", "fnn: rate on every layer output",
       [](RunConfig& c, const std::string& v) { c.train.dropout.hidden = parse_number<double>("dropout.hidden", v); }},
      {"grid.depths", "comma list of depths",
       [](RunConfig& c, const std::string& v) {
         c.train.grid.depths = detail::parse_list<sz>(v, [](const std::string& t) {
           return parse_number<sz>("grid.depths", t);
         });
       }},
      {"grid.widths", "comma list of widths",
       [](RunConfig& c, const std::string& v) {
         c.train.grid.widths = detail::parse_list<sz>(v, [](const std::string& t) {
           return parse_number<sz>("grid.widths", t);
         });
       }},
      {"grid.optimizers", "comma list of optimizers",
       [](RunConfig& c, const std::string& v) {
         c.train.grid.optimizers = detail::parse_list<OptimizerKind>(v, parse_optimizer);
       }},
      {"sl.steps", "stacked-learning steps",
       [](RunConfig& c, const std::string& v) { c.sl.steps = parse_number<sz>("sl.steps", v); }},
      {"sl.epochs", "epochs per stacked-learning step",
       [](RunConfig& c, const std::string& v) { c.sl.epochs = parse_number<sz>("sl.epochs", v); }},
      {"sl.lr", "stacked-learning learning rate",
       [](RunConfig& c, const std::string& v) { c.sl.optimizer.lr = parse_number<double>("sl.lr", v); }},
      {"sl.l2", "stacked-learning weight decay",
       [](RunConfig& c, const std::string& v) { c.sl.l2 = parse_number<double>("sl.l2", v); }},
      {"synth.n", "entities", [](RunConfig& c, const std::string& v) { c.synth.n = parse_number<sz>("synth.n", v); }},
      {"synth.relations", "relation types",
       [](RunConfig& c, const std::string& v) { c.synth.relations = parse_number<sz>("synth.relations", v); }},
      {"synth.classes", "classes",
       [](RunConfig& c, const std::string& v) { c.synth.classes = parse_number<sz>("synth.classes", v); }},
      {"synth.features", "feature dimension",
       [](RunConfig& c, const std::string& v) { c.synth.feature_dim = parse_number<sz>("synth.features", v); }},
      {"synth.degree", "inbound tuples per entity and relation",
       [](RunConfig& c, const std::string& v) { c.synth.avg_degree = parse_number<double>("synth.degree", v); }},
      {"synth.homophily", "probability that a tuple joins same-class entities",
       [](RunConfig& c, const std::string& v) { c.synth.homophily = parse_number<double>("synth.homophily", v); }},
      {"synth.noise", "feature noise scale",
       [](RunConfig& c, const std::string& v) { c.synth.feature_noise = parse_number<double>("synth.noise", v); }},
      {"gradcheck.entities", "entities of the random instance",
       [](RunConfig& c, const std::string& v) { c.gradcheck.entities = parse_number<sz>("gradcheck.entities", v); }},
      {"gradcheck.relations", "relations of the random instance",
       [](RunConfig& c, const std::string& v) { c.gradcheck.relations = parse_number<sz>("gradcheck.relations", v); }},
      {"gradcheck.labels", "labels of the random instance",
       [](RunConfig& c, const std::string& v) { c.gradcheck.labels = parse_number<sz>("gradcheck.labels", v); }},
      {"gradcheck.features", "feature dimension of the random instance",
       [](RunConfig& c, const std::string& v) { c.gradcheck.features = parse_number<sz>("gradcheck.features", v); }},
      {"gradcheck.depth", "recurrent layers",
       [](RunConfig& c, const std::string& v) { c.gradcheck.depth = parse_number<sz>("gradcheck.depth", v); }},
      {"gradcheck.width", "hidden width",
       [](RunConfig& c, const std::string& v) { c.gradcheck.width = parse_number<sz>("gradcheck.width", v); }},
      {"gradcheck.epsilon", "finite-difference step",
       [](RunConfig& c, const std::string& v) {
         c.gradcheck.options.epsilon = parse_number<double>("gradcheck.epsilon", v);
       }},
      {"gradcheck.tolerance", "maximum relative error",
       [](RunConfig& c, const std::string& v) {
         c.gradcheck.options.tolerance = parse_number<double>("gradcheck.tolerance", v);
       }},
      {"gradcheck.floor", "relative-error denominator floor",
       [](RunConfig& c, const std::string& v) {
         c.gradcheck.options.floor = parse_number<double>("gradcheck.floor", v);
       }},
      {"gradcheck.corrupt", "debug: block whose analytic gradient is doubled",
       [](RunConfig& c, const std::string& v) { c.gradcheck.options.corrupt_block = v; }},
      {"eval.checkpoint", "checkpoint to evaluate (default <out>/checkpoint.txt)",
       [](RunConfig& c, const std::string& v) { c.checkpoint = v; }},
      {"out", "output directory", [](RunConfig& c, const std::string& v) { c.out = v; }},
      {"seed", "seed for initialisation, dropout, splits and generation",
       [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }},
  };
  return keys;
}

inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

// key = value lines; '#' starts a comment line.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                           const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = detail::trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(origin, line_no, "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(origin, line_no, "empty key");
    out.emplace_back(key, detail::trim(line.substr(eq + 1)));
  }
  return out;
}

inline void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  for (const auto& [k, v] : parse_config_text(read_file(path), path.string())) set_key(c, k, v);
}

// Propagates the single seed and checks cross-field constraints.
inline void finalize(RunConfig& c) {
  c.train.seed = c.seed;
  c.synth.seed = c.seed;
  c.model.head = c.head;
  validate(c.train);
  if (c.checkpoint.empty()) c.checkpoint = (std::filesystem::path(c.out) / "checkpoint.txt").string();
}

inline void require_data(const RunConfig& c) {
  for (const auto& [key, path] : {std::pair<const char*, const std::string&>{"data.nodes", c.data.nodes},
                                  {"data.edges", c.data.edges},
                                  {"data.labels", c.data.labels}}) {
    if (path.empty()) throw ConfigError("config key '" + std::string(key) + "' is required");
    if (!std::filesystem::exists(path)) throw ConfigError(std::string(key) + ": '" + path + "' does not exist");
  }
  if (!c.splits.empty() && !std::filesystem::exists(c.splits)) {
    throw ConfigError("data.splits: '" + c.splits + "' does not exist");
  }
}

}  // namespace cln
