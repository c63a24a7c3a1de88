#pragma once

// Column network: one mini-column per entity, columns exchanging pooled
// hidden states along typed relations at every layer.
//
// Layer 1 projects the M input features to width K. Layers 2..T+1 are the
// recurrent stack: FNN columns apply the relational transform directly,
// highway columns blend it with the carried state through a sigmoid gate.
// Gradients are derived by hand and checked against finite differences in
// the test suite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cln/errors.hpp"
#include "cln/numerics.hpp"
#include "cln/relgraph.hpp"

namespace cln {

enum class ColumnKind { FNN, Highway };
enum class Sharing { Shared, PerLayer };
enum class Pooling { Mean, Sum, Max };

inline std::string to_string(ColumnKind k) { return k == ColumnKind::FNN ? "fnn" : "highway"; }
inline std::string to_string(Sharing s) { return s == Sharing::Shared ? "shared" : "per_layer"; }
inline std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::Mean: return "mean";
    case Pooling::Sum: return "sum";
    case Pooling::Max: return "max";
  }
  return "mean";
}

inline ColumnKind parse_column_kind(const std::string& s) {
  if (s == "fnn") return ColumnKind::FNN;
  if (s == "highway") return ColumnKind::Highway;
  throw ConfigError("unknown column kind '" + s + "' (expected fnn or highway)");
}
inline Sharing parse_sharing(const std::string& s) {
  if (s == "shared") return Sharing::Shared;
  if (s == "per_layer") return Sharing::PerLayer;
  throw ConfigError("unknown sharing mode '" + s + "' (expected shared or per_layer)");
}
inline Pooling parse_pooling(const std::string& s) {
  if (s == "mean") return Pooling::Mean;
  if (s == "sum") return Pooling::Sum;
  if (s == "max") return Pooling::Max;
  throw ConfigError("unknown pooling '" + s + "' (expected mean, sum or max)");
}

// b + W h + (1/z) sum_r V_r c_r
struct RelationalUnit {
  Matrix W;
  Vector b;
  std::vector<Matrix> V;

  std::size_t out_dim() const { return W.rows(); }
  std::size_t in_dim() const { return W.cols(); }
};

struct ModelSpec {
  std::size_t features = 0;   // M
  std::size_t relations = 0;  // R
  std::size_t labels = 0;     // L
  std::size_t width = 10;     // K
  std::size_t depth = 10;     // T, recurrent layers after the input projection
  ColumnKind column = ColumnKind::Highway;
  Sharing sharing = Sharing::Shared;
  bool tie_gates = true;  // under sharing, whether the gate set is shared too
  Pooling pooling = Pooling::Mean;
  double z = 0.0;  // <= 0 selects max(1, R)
  HeadKind head = HeadKind::Multiclass;

  double normalizer() const { return z > 0.0 ? z : std::max(1.0, static_cast<double>(relations)); }
  bool operator==(const ModelSpec&) const = default;
};

struct ClnParams {
  ModelSpec spec;
  double z = 1.0;
  RelationalUnit input;
  std::vector<RelationalUnit> transforms;
  std::vector<RelationalUnit> gates;
  Matrix head_W;
  Vector head_b;
  std::uint64_t seed = 0;

  const RelationalUnit& transform_at(std::size_t t) const {
    return transforms[spec.sharing == Sharing::Shared ? 0 : t];
  }
  RelationalUnit& transform_at(std::size_t t) { return transforms[spec.sharing == Sharing::Shared ? 0 : t]; }

  const RelationalUnit* gate_at(std::size_t t) const {
    if (spec.column != ColumnKind::Highway) return nullptr;
    return &gates[gates.size() == 1 ? 0 : t];
  }
  RelationalUnit* gate_at(std::size_t t) {
    if (spec.column != ColumnKind::Highway) return nullptr;
    return &gates[gates.size() == 1 ? 0 : t];
  }

  // Every parameter block in a fixed order, paired with a stable name.
  template <typename F>
  void visit(F&& f) {
    visit_unit("input", input, f);
    for (std::size_t t = 0; t < transforms.size(); ++t) visit_unit("hidden" + std::to_string(t), transforms[t], f);
    for (std::size_t t = 0; t < gates.size(); ++t) visit_unit("gate" + std::to_string(t), gates[t], f);
    f(std::string("head.W"), head_W.span());
    f(std::string("head.b"), head_b.span());
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<ClnParams*>(this)->visit([&](const std::string& name, std::span<double> s) {
      f(name, std::span<const double>(s.data(), s.size()));
    });
  }

  ParamBlocks blocks() {
    ParamBlocks out;
    visit([&](const std::string&, std::span<double> s) { out.push_back(s); });
    return out;
  }
  GradBlocks const_blocks() const {
    GradBlocks out;
    visit([&](const std::string&, std::span<const double> s) { out.push_back(s); });
    return out;
  }
  std::vector<std::string> block_names() const {
    std::vector<std::string> out;
    visit([&](const std::string& n, std::span<const double>) { out.push_back(n); });
    return out;
  }

  bool operator==(const ClnParams&) const;

 private:
  template <typename F>
  static void visit_unit(const std::string& prefix, RelationalUnit& u, F& f) {
    f(prefix + ".W", u.W.span());
    f(prefix + ".b", u.b.span());
    for (std::size_t r = 0; r < u.V.size(); ++r) f(prefix + ".V" + std::to_string(r), u.V[r].span());
  }
};

inline bool operator==(const RelationalUnit& a, const RelationalUnit& b) {
  return a.W == b.W && a.b == b.b && a.V == b.V;
}

inline bool ClnParams::operator==(const ClnParams& o) const {
  return spec == o.spec && z == o.z && input == o.input && transforms == o.transforms && gates == o.gates &&
         head_W == o.head_W && head_b == o.head_b && seed == o.seed;
}

inline RelationalUnit make_unit(std::size_t out, std::size_t in, std::size_t relations, double bias, Rng* rng) {
  RelationalUnit u;
  u.W = rng ? glorot_init(out, in, *rng) : Matrix(out, in);
  u.b = Vector(out, bias);
  for (std::size_t r = 0; r < relations; ++r) u.V.push_back(rng ? glorot_init(out, in, *rng) : Matrix(out, in));
  return u;
}

inline void validate(const ModelSpec& s) {
  if (s.features == 0) throw ConfigError("model: feature dimension must be positive");
  if (s.labels == 0) throw ConfigError("model: label arity must be positive");
  if (s.width == 0) throw ConfigError("model: hidden width must be positive");
  if (!(s.normalizer() > 0.0) || !std::isfinite(s.normalizer())) throw ConfigError("model: z must be positive");
}

// Glorot-uniform weights, zero biases, gate biases at -1. When rng is null all
// entries are zero (gradient accumulators).
inline ClnParams make_params(const ModelSpec& spec, std::uint64_t seed, bool random = true) {
  validate(spec);
  Rng rng(seed);
  Rng* src = random ? &rng : nullptr;
  ClnParams p;
  p.spec = spec;
  p.z = spec.normalizer();
  p.seed = seed;
  const std::size_t k = spec.width;
  const std::size_t r = spec.relations;
  p.input = make_unit(k, spec.features, r, 0.0, src);
  const std::size_t n_transforms = spec.sharing == Sharing::Shared ? 1 : spec.depth;
  for (std::size_t t = 0; t < n_transforms; ++t) p.transforms.push_back(make_unit(k, k, r, 0.0, src));
  if (spec.column == ColumnKind::Highway) {
    const std::size_t n_gates = spec.sharing == Sharing::Shared && spec.tie_gates ? 1 : spec.depth;
    for (std::size_t t = 0; t < n_gates; ++t) p.gates.push_back(make_unit(k, k, r, random ? -1.0 : 0.0, src));
  }
  p.head_W = src ? glorot_init(spec.labels, k, rng) : Matrix(spec.labels, k);
  p.head_b = Vector(spec.labels);
  return p;
}

inline ClnParams zeros_like(const ClnParams& p) {
  ClnParams g = make_params(p.spec, p.seed, false);
  g.z = p.z;
  return g;
}

inline ModelSpec spec_for(const RelGraph& g, ModelSpec base) {
  base.features = g.feature_dim();
  base.relations = g.relation_count();
  base.labels = g.label_arity();
  base.head = g.head;
  return base;
}

inline std::size_t param_count(const ClnParams& p) {
  std::size_t n = 0;
  p.visit([&](const std::string&, std::span<const double> s) { n += s.size(); });
  return n;
}

// FNV-1a over every parameter bit pattern.
inline std::uint64_t fingerprint(const ClnParams& p) {
  std::uint64_t h = 1469598103934665603ull;
  p.visit([&](const std::string&, std::span<const double> s) {
    for (double v : s) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (bits >> (8 * byte)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
  });
  return h;
}

inline void check_consistent(const ClnParams& p, const RelGraph& g) {
  const auto& s = p.spec;
  if (s.features != g.feature_dim() || s.relations != g.relation_count() || s.labels != g.label_arity()) {
    throw ShapeError("model expects (M=" + std::to_string(s.features) + ", R=" + std::to_string(s.relations) +
                     ", L=" + std::to_string(s.labels) + ") but graph has (M=" + std::to_string(g.feature_dim()) +
                     ", R=" + std::to_string(g.relation_count()) + ", L=" + std::to_string(g.label_arity()) + ")");
  }
  if (s.head != g.head) throw ShapeError("model head is " + to_string(s.head) + ", graph head is " + to_string(g.head));
}

// ---------------------------------------------------------------------------
// Per-entity kernels. The batched layer code calls these same routines, so the
// per-entity operations and the full forward agree bit for bit.

inline constexpr std::uint32_t kNoSource = std::numeric_limits<std::uint32_t>::max();

// Pools rows of `states` over sources; `argmax` (max pooling only) receives
// the winning source per coordinate.
inline void pool_into(const Matrix& states, const std::vector<std::size_t>& sources, Pooling pooling,
                      std::span<double> out, std::span<std::uint32_t> argmax) {
  std::fill(out.begin(), out.end(), 0.0);
  if (sources.empty()) {
    std::fill(argmax.begin(), argmax.end(), kNoSource);
    return;
  }
  const std::size_t dim = out.size();
  if (pooling == Pooling::Max) {
    const auto first = states.row(sources[0]);
    std::copy(first.begin(), first.end(), out.begin());
    for (std::size_t c = 0; c < dim; ++c) argmax[c] = static_cast<std::uint32_t>(sources[0]);
    for (std::size_t k = 1; k < sources.size(); ++k) {
      const auto row = states.row(sources[k]);
      for (std::size_t c = 0; c < dim; ++c) {
        if (row[c] > out[c]) {
          out[c] = row[c];
          argmax[c] = static_cast<std::uint32_t>(sources[k]);
        }
      }
    }
    return;
  }
  for (std::size_t j : sources) {
    const auto row = states.row(j);
    for (std::size_t c = 0; c < dim; ++c) out[c] += row[c];
  }
  if (pooling == Pooling::Mean) {
    const double n = static_cast<double>(sources.size());
    for (double& v : out) v /= n;
  }
}

inline Vector relational_context(const Matrix& prev_states, const RelGraph& g, std::size_t i, std::size_t r,
                                 Pooling pooling) {
  if (prev_states.rows() != g.entity_count()) {
    throw ShapeError("relational_context: " + std::to_string(prev_states.rows()) + " state rows for " +
                     std::to_string(g.entity_count()) + " entities");
  }
  Vector out(prev_states.cols());
  std::vector<std::uint32_t> argmax(prev_states.cols());
  pool_into(prev_states, neighbors(g, i, r), pooling, out.span(), argmax);
  return out;
}

// ctx holds the R pooled contexts back to back.
inline void unit_preactivation(const RelationalUnit& u, std::span<const double> prev, std::span<const double> ctx,
                               double z, std::span<double> out) {
  const std::size_t kin = u.in_dim();
  for (std::size_t k = 0; k < u.out_dim(); ++k) {
    const double* w = u.W.row(k).data();
    double acc = 0.0;
    for (std::size_t c = 0; c < kin; ++c) acc += w[c] * prev[c];
    double rel = 0.0;
    for (std::size_t r = 0; r < u.V.size(); ++r) {
      const double* v = u.V[r].row(k).data();
      const double* cr = ctx.data() + r * kin;
      for (std::size_t c = 0; c < kin; ++c) rel += v[c] * cr[c];
    }
    out[k] = u.b[k] + acc + rel / z;
  }
}

namespace detail {

inline std::vector<double> pack_contexts(const RelationalUnit& u, const Vector& h_prev,
                                         const std::vector<Vector>& contexts, const char* op) {
  if (h_prev.dim() != u.in_dim() || u.b.dim() != u.out_dim()) {
    throw ShapeError(std::string(op) + ": W is " + shape_str(u.W) + ", h_prev is " + shape_str(h_prev) + ", b is " +
                     shape_str(u.b));
  }
  if (contexts.size() != u.V.size()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(contexts.size()) + " contexts for " +
                     std::to_string(u.V.size()) + " relation weights");
  }
  std::vector<double> packed;
  packed.reserve(contexts.size() * u.in_dim());
  for (std::size_t r = 0; r < contexts.size(); ++r) {
    if (contexts[r].dim() != u.V[r].cols() || u.V[r].rows() != u.out_dim()) {
      throw ShapeError(std::string(op) + ": context " + std::to_string(r) + " is " + shape_str(contexts[r]) +
                       ", V is " + shape_str(u.V[r]));
    }
    packed.insert(packed.end(), contexts[r].values().begin(), contexts[r].values().end());
  }
  return packed;
}

}  // namespace detail

// ReLU(b + W h_prev + (1/z) sum_r V_r c_r)
inline Vector candidate_hidden(const Vector& h_prev, const std::vector<Vector>& contexts, const RelationalUnit& u,
                               double z) {
  const auto packed = detail::pack_contexts(u, h_prev, contexts, "candidate_hidden");
  Vector pre(u.out_dim());
  unit_preactivation(u, h_prev.span(), packed, z, pre.span());
  return relu(pre);
}

struct GatePair {
  Vector carry_in;   // alpha1, weight of the candidate
  Vector carry_out;  // alpha2 = 1 - alpha1, weight of the previous state
};

inline GatePair highway_gate(const Vector& h_prev, const std::vector<Vector>& contexts, const RelationalUnit& gate,
                             double z) {
  const auto packed = detail::pack_contexts(gate, h_prev, contexts, "highway_gate");
  Vector pre(gate.out_dim());
  unit_preactivation(gate, h_prev.span(), packed, z, pre.span());
  GatePair out{sigmoid(pre), Vector(gate.out_dim())};
  for (std::size_t k = 0; k < gate.out_dim(); ++k) out.carry_out[k] = 1.0 - out.carry_in[k];
  return out;
}

// ---------------------------------------------------------------------------
// Batched forward

enum class Mode { Train, Infer };

struct DropoutRates {
  double before = 0.5;  // highway: after the input projection
  double after = 0.5;   // highway: on the top state, before the head
  double hidden = 0.5;  // fnn: on every layer output

  bool operator==(const DropoutRates&) const = default;
};

struct LayerCache {
  Matrix contexts;                    // n x (R * K_prev)
  std::vector<std::uint32_t> argmax;  // max pooling winners, same layout as contexts
  Matrix pre;                         // candidate pre-activation
  Matrix gate;                        // alpha1, highway layers only
  Matrix out;                         // layer output before dropout
  Matrix mask;                        // dropout mask, empty when none applied
};

// Rows of every matrix follow `entities`. hidden[0] holds the inputs, hidden[l]
// the (post-dropout) output of layer l.
struct ActivationCache {
  std::vector<std::size_t> entities;
  bool frozen_contexts = false;
  std::vector<Matrix> hidden;
  std::vector<LayerCache> layers;
  Matrix probs;
  Mode mode = Mode::Infer;
  std::uint64_t params_fingerprint = 0;
  const RelGraph* graph = nullptr;
  std::size_t graph_tuples = 0;
};

struct Prediction {
  HeadKind head = HeadKind::Multiclass;
  std::vector<std::size_t> entities;
  Matrix probs;  // row k: label probabilities of entities[k]
};

struct LayerOptions {
  Pooling pooling = Pooling::Mean;
  double z = 1.0;
  bool highway = false;
};

namespace detail {

// Computes one relational layer for `rows` entities. prev_rows holds each
// active entity's own previous state; context_states (N rows) feeds pooling.
inline void layer_compute(const RelGraph& g, const std::vector<std::size_t>& entities, const Matrix& prev_rows,
                          const Matrix& context_states, const RelationalUnit& transform,
                          const RelationalUnit* gate, const LayerOptions& opt, LayerCache& lc) {
  const std::size_t n = entities.size();
  const std::size_t kin = transform.in_dim();
  const std::size_t kout = transform.out_dim();
  const std::size_t rels = g.relation_count();
  if (opt.highway && kout != kin) {
    throw ConfigError("highway layer needs equal input and output widths, got " + std::to_string(kin) + " -> " +
                      std::to_string(kout));
  }
  if (prev_rows.cols() != kin || context_states.cols() != kin) {
    throw ShapeError("layer expects width " + std::to_string(kin) + " inputs, got " + shape_str(prev_rows));
  }
  if (transform.V.size() != rels) throw ShapeError("layer has " + std::to_string(transform.V.size()) +
                                                   " relation weights for " + std::to_string(rels) + " relations");
  lc.contexts = Matrix(n, rels * kin);
  lc.argmax.assign(opt.pooling == Pooling::Max ? n * rels * kin : 0, kNoSource);
  lc.pre = Matrix(n, kout);
  lc.out = Matrix(n, kout);
  lc.gate = opt.highway ? Matrix(n, kout) : Matrix();
  std::vector<double> gate_pre(kout);
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t i = entities[a];
    auto ctx = lc.contexts.row(a);
    for (std::size_t r = 0; r < rels; ++r) {
      std::span<std::uint32_t> am;
      if (opt.pooling == Pooling::Max) am = std::span<std::uint32_t>(lc.argmax.data() + (a * rels + r) * kin, kin);
      pool_into(context_states, g.inbound(r, i), opt.pooling, ctx.subspan(r * kin, kin), am);
    }
    const auto prev = prev_rows.row(a);
    auto pre = lc.pre.row(a);
    auto out = lc.out.row(a);
    unit_preactivation(transform, prev, ctx, opt.z, pre);
    if (!opt.highway) {
      for (std::size_t k = 0; k < kout; ++k) out[k] = pre[k] > 0.0 ? pre[k] : 0.0;
      continue;
    }
    unit_preactivation(*gate, prev, ctx, opt.z, gate_pre);
    auto alpha = lc.gate.row(a);
    for (std::size_t k = 0; k < kout; ++k) {
      const double cand = pre[k] > 0.0 ? pre[k] : 0.0;
      const double a1 = sigmoid(gate_pre[k]);
      const double a2 = 1.0 - a1;
      alpha[k] = a1;
      out[k] = a1 * cand + a2 * prev[k];
    }
  }
}

inline Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const auto src = m.row(rows[a]);
    std::copy(src.begin(), src.end(), out.row(a).begin());
  }
  return out;
}

}  // namespace detail

// Synchronous update of every entity against the same H_prev snapshot.
inline Matrix layer_forward(const Matrix& prev_states, const RelGraph& g, const RelationalUnit& transform,
                            const RelationalUnit* gate, const LayerOptions& opt, LayerCache* cache = nullptr) {
  if (opt.highway && gate == nullptr) throw ConfigError("highway layer without gate parameters");
  if (prev_states.rows() != g.entity_count()) throw ShapeError("layer_forward: state rows do not cover the graph");
  std::vector<std::size_t> all(g.entity_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  LayerCache local;
  LayerCache& lc = cache ? *cache : local;
  detail::layer_compute(g, all, prev_states, prev_states, transform, gate, opt, lc);
  return lc.out;
}

namespace detail {

inline void apply_head(const ClnParams& p, const Matrix& top, Matrix& probs) {
  const std::size_t n = top.rows();
  const std::size_t labels = p.head_W.rows();
  probs = Matrix(n, labels);
  for (std::size_t a = 0; a < n; ++a) {
    auto row = probs.row(a);
    const auto h = top.row(a);
    for (std::size_t l = 0; l < labels; ++l) {
      const double* w = p.head_W.row(l).data();
      double acc = 0.0;
      for (std::size_t c = 0; c < h.size(); ++c) acc += w[c] * h[c];
      row[l] = p.head_b[l] + acc;
    }
    if (p.spec.head == HeadKind::Multiclass) {
      softmax_inplace(row);
    } else {
      for (double& v : row) v = sigmoid(v);
    }
  }
}

inline double layer_dropout_rate(const ModelSpec& s, const DropoutRates& d, std::size_t layer, std::size_t top) {
  if (s.column == ColumnKind::FNN) return d.hidden;
  double keep = 1.0;
  if (layer == 1) keep *= 1.0 - d.before;
  if (layer == top) keep *= 1.0 - d.after;
  return 1.0 - keep;
}

// Mask for one layer; highway T=0 gets the product of both masks.
inline Matrix layer_mask(const ModelSpec& s, const DropoutRates& d, std::size_t layer, std::size_t top,
                         std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> rates;
  if (s.column == ColumnKind::FNN) {
    rates.push_back(d.hidden);
  } else {
    if (layer == 1) rates.push_back(d.before);
    if (layer == top) rates.push_back(d.after);
  }
  bool any = false;
  for (double r : rates) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(r));
    any = any || r > 0.0;
  }
  if (!any) return {};
  Matrix mask(rows, cols, 1.0);
  for (double r : rates) {
    if (r == 0.0) continue;
    for (std::size_t a = 0; a < rows; ++a) {
      const Vector m = dropout_mask(cols, r, rng);
      auto row = mask.row(a);
      for (std::size_t c = 0; c < cols; ++c) row[c] *= m[c];
    }
  }
  return mask;
}

}  // namespace detail

// Runs the columns of `entities`. With `frozen` set, layer-l contexts are
// pooled from frozen[l-1] (N rows) instead of the live states; otherwise
// `entities` must be every entity in order.
inline ActivationCache run_columns(const RelGraph& g, const ClnParams& p, const std::vector<std::size_t>& entities,
                                   const std::vector<Matrix>* frozen, Mode mode, const DropoutRates& dropout,
                                   Rng& rng) {
  check_consistent(p, g);
  const auto& s = p.spec;
  const std::size_t top = s.depth + 1;
  ActivationCache c;
  c.entities = entities;
  c.frozen_contexts = frozen != nullptr;
  c.mode = mode;
  c.graph = &g;
  c.graph_tuples = g.tuple_count();
  c.params_fingerprint = fingerprint(p);
  c.hidden.resize(top + 1);
  c.layers.resize(top);
  c.hidden[0] = frozen ? detail::gather_rows(g.features, entities) : g.features;
  if (frozen && frozen->size() < top) throw ShapeError("frozen blanket has too few layers");
  for (std::size_t l = 1; l <= top; ++l) {
    const bool recurrent = l >= 2;
    const RelationalUnit& unit = recurrent ? p.transform_at(l - 2) : p.input;
    const RelationalUnit* gate = recurrent ? p.gate_at(l - 2) : nullptr;
    LayerOptions opt{s.pooling, p.z, gate != nullptr};
    const Matrix& context_states = frozen ? (*frozen)[l - 1] : c.hidden[l - 1];
    LayerCache& lc = c.layers[l - 1];
    detail::layer_compute(g, entities, c.hidden[l - 1], context_states, unit, gate, opt, lc);
    if (mode == Mode::Train) lc.mask = detail::layer_mask(s, dropout, l, top, entities.size(), s.width, rng);
    if (lc.mask.size() == 0) {
      c.hidden[l] = lc.out;
    } else {
      c.hidden[l] = Matrix(lc.out.rows(), lc.out.cols());
      auto dst = c.hidden[l].span();
      const auto src = lc.out.span();
      const auto m = lc.mask.span();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = src[k] * m[k];
    }
  }
  detail::apply_head(p, c.hidden[top], c.probs);
  return c;
}

struct ForwardResult {
  Prediction prediction;
  ActivationCache cache;
};

inline std::vector<std::size_t> all_entities(const RelGraph& g) {
  std::vector<std::size_t> all(g.entity_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

// Infer mode draws nothing from rng and applies no masks.
inline ForwardResult forward(const RelGraph& g, const ClnParams& p, Mode mode, Rng& rng,
                             const DropoutRates& dropout = {}) {
  std::vector<std::size_t> all = all_entities(g);
  ForwardResult r;
  r.cache = run_columns(g, p, all, nullptr, mode, dropout, rng);
  r.prediction.head = p.spec.head;
  r.prediction.entities = std::move(all);
  r.prediction.probs = r.cache.probs;
  return r;
}

inline Prediction predict(const RelGraph& g, const ClnParams& p) {
  Rng unused(0);
  return forward(g, p, Mode::Infer, unused).prediction;
}

// ---------------------------------------------------------------------------
// Backward

namespace detail {

// Accumulates parameter gradients of one unit and, on request, gradients with
// respect to the unit's own previous state and its pooled contexts.
inline void unit_backward(const RelationalUnit& u, const Matrix& dpre, const Matrix& prev, const Matrix& contexts,
                          double z, RelationalUnit& grad, Matrix* dprev, Matrix* dctx) {
  const std::size_t kin = u.in_dim();
  const std::size_t kout = u.out_dim();
  const std::size_t rels = u.V.size();
  const double inv_z = 1.0 / z;
  for (std::size_t a = 0; a < dpre.rows(); ++a) {
    const auto d = dpre.row(a);
    const auto h = prev.row(a);
    const auto ctx = contexts.row(a);
    for (std::size_t k = 0; k < kout; ++k) {
      const double dk = d[k];
      if (dk == 0.0) continue;
      double* gw = grad.W.row(k).data();
      for (std::size_t c = 0; c < kin; ++c) gw[c] += dk * h[c];
      grad.b[k] += dk;
      const double dkz = dk * inv_z;
      for (std::size_t r = 0; r < rels; ++r) {
        double* gv = grad.V[r].row(k).data();
        const double* cr = ctx.data() + r * kin;
        for (std::size_t c = 0; c < kin; ++c) gv[c] += dkz * cr[c];
      }
      if (dprev) {
        const double* w = u.W.row(k).data();
        double* dp = dprev->row(a).data();
        for (std::size_t c = 0; c < kin; ++c) dp[c] += dk * w[c];
      }
      if (dctx) {
        double* dc = dctx->row(a).data();
        for (std::size_t r = 0; r < rels; ++r) {
          const double* v = u.V[r].row(k).data();
          for (std::size_t c = 0; c < kin; ++c) dc[r * kin + c] += dkz * v[c];
        }
      }
    }
  }
}

// Routes context gradients back to the neighbor states they pooled.
inline void pool_backward(const RelGraph& g, Pooling pooling, const LayerCache& lc, const Matrix& dctx,
                          std::size_t kin, Matrix& dprev) {
  const std::size_t rels = g.relation_count();
  for (std::size_t i = 0; i < g.entity_count(); ++i) {
    const auto dc = dctx.row(i);
    for (std::size_t r = 0; r < rels; ++r) {
      const auto& src = g.inbound(r, i);
      if (src.empty()) continue;
      const double* d = dc.data() + r * kin;
      if (pooling == Pooling::Max) {
        const std::uint32_t* am = lc.argmax.data() + (i * rels + r) * kin;
        for (std::size_t c = 0; c < kin; ++c) dprev(am[c], c) += d[c];
        continue;
      }
      const double scale = pooling == Pooling::Mean ? 1.0 / static_cast<double>(src.size()) : 1.0;
      for (std::size_t j : src) {
        double* dp = dprev.row(j).data();
        for (std::size_t c = 0; c < kin; ++c) dp[c] += scale * d[c];
      }
    }
  }
}

}  // namespace detail

inline void check_cache(const RelGraph& g, const ClnParams& p, const ActivationCache& c) {
  if (c.graph != &g || c.graph_tuples != g.tuple_count() || c.hidden.empty() ||
      (!c.frozen_contexts && c.hidden[0].rows() != g.entity_count())) {
    throw ConsistencyError("activation cache was produced for a different graph");
  }
  if (c.params_fingerprint != fingerprint(p)) {
    throw ConsistencyError("activation cache is stale: parameters changed since the forward pass");
  }
  if (c.layers.size() != p.spec.depth + 1) throw ConsistencyError("activation cache depth does not match model");
}

// Mean cross-entropy over cache rows listed in loss_rows; returns the loss and
// accumulates gradients. Without frozen contexts gradients also flow through
// pooled contexts into neighbor columns.
inline double backward_rows(const RelGraph& g, const ClnParams& p, const ActivationCache& c,
                            const std::vector<std::size_t>& loss_rows, ClnParams& grad) {
  check_cache(g, p, c);
  if (loss_rows.empty()) throw ConfigError("backward: no entities carry loss");
  const auto& s = p.spec;
  const std::size_t n = c.entities.size();
  const std::size_t top = s.depth + 1;
  const std::size_t labels = s.labels;
  const double inv_n = 1.0 / static_cast<double>(loss_rows.size());

  double loss = 0.0;
  Matrix dlogits(n, labels);
  for (std::size_t a : loss_rows) {
    const std::size_t i = c.entities[a];
    const auto pr = c.probs.row(a);
    const auto y = g.targets.row(i);
    for (std::size_t l = 0; l < labels; ++l) {
      dlogits(a, l) = (pr[l] - y[l]) * inv_n;
      if (s.head == HeadKind::Multiclass) {
        if (y[l] > 0.0) loss -= y[l] * std::log(std::max(pr[l], 1e-12));
      } else {
        loss -= y[l] * std::log(std::max(pr[l], 1e-12)) + (1.0 - y[l]) * std::log(std::max(1.0 - pr[l], 1e-12));
      }
    }
  }
  loss *= inv_n;

  const Matrix& htop = c.hidden[top];
  gemm_tn(dlogits, htop, 1.0, grad.head_W);
  for (std::size_t a : loss_rows)
    for (std::size_t l = 0; l < labels; ++l) grad.head_b[l] += dlogits(a, l);
  Matrix dfed(n, s.width);
  gemm_nn(dlogits, p.head_W, 1.0, dfed);

  for (std::size_t l = top; l >= 1; --l) {
    const LayerCache& lc = c.layers[l - 1];
    const bool recurrent = l >= 2;
    const RelationalUnit& unit = recurrent ? p.transform_at(l - 2) : p.input;
    RelationalUnit& gunit = recurrent ? grad.transform_at(l - 2) : grad.input;
    const RelationalUnit* gate = recurrent ? p.gate_at(l - 2) : nullptr;
    const Matrix& prev = c.hidden[l - 1];
    const std::size_t kin = unit.in_dim();
    const std::size_t kout = unit.out_dim();

    Matrix dout = std::move(dfed);
    if (lc.mask.size() != 0) {
      auto d = dout.span();
      const auto m = lc.mask.span();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] *= m[k];
    }
    const bool need_prev = l >= 2;
    const bool live = !c.frozen_contexts;
    Matrix dprev = need_prev ? Matrix(n, kin) : Matrix();
    Matrix dctx = need_prev && live ? Matrix(n, g.relation_count() * kin) : Matrix();
    Matrix dpre(n, kout);
    Matrix dgate;
    if (gate) dgate = Matrix(n, kout);
    for (std::size_t a = 0; a < n; ++a) {
      const auto d = dout.row(a);
      const auto pre = lc.pre.row(a);
      auto dp = dpre.row(a);
      if (!gate) {
        for (std::size_t k = 0; k < kout; ++k) dp[k] = pre[k] > 0.0 ? d[k] : 0.0;
        continue;
      }
      const auto alpha = lc.gate.row(a);
      const auto h = prev.row(a);
      auto dg = dgate.row(a);
      auto dh = dprev.row(a);
      for (std::size_t k = 0; k < kout; ++k) {
        const double cand = pre[k] > 0.0 ? pre[k] : 0.0;
        dp[k] = pre[k] > 0.0 ? d[k] * alpha[k] : 0.0;
        dg[k] = d[k] * (cand - h[k]) * alpha[k] * (1.0 - alpha[k]);
        dh[k] += d[k] * (1.0 - alpha[k]);
      }
    }
    detail::unit_backward(unit, dpre, prev, lc.contexts, p.z, gunit, need_prev ? &dprev : nullptr,
                          need_prev && live ? &dctx : nullptr);
    if (gate) {
      detail::unit_backward(*gate, dgate, prev, lc.contexts, p.z, *grad.gate_at(l - 2), &dprev,
                            live ? &dctx : nullptr);
    }
    if (!need_prev) break;
    if (live) detail::pool_backward(g, s.pooling, lc, dctx, kin, dprev);
    dfed = std::move(dprev);
  }
  return loss;
}

// Exact gradient of the mean cross-entropy over entities holding `role`.
inline ClnParams backward(const RelGraph& g, const ClnParams& p, const ActivationCache& cache, const SplitMask& mask,
                          Role role = Role::Train, double* loss_out = nullptr) {
  if (cache.frozen_contexts) throw ConsistencyError("backward needs a full-graph forward cache");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.roles.size(); ++i)
    if (mask.roles[i] == role && g.observed[i]) rows.push_back(i);
  if (rows.empty()) throw ConfigError("backward: role '" + to_string(role) + "' is empty");
  ClnParams grad = zeros_like(p);
  const double loss = backward_rows(g, p, cache, rows, grad);
  if (loss_out) *loss_out = loss;
  return grad;
}

}  // namespace cln
