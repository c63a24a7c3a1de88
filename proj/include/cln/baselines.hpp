#pragma once

// Comparison methods: stacked learning with logistic regression, and the
// non-relational shared-parameter highway net.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cln/checkpoint.hpp"
#include "cln/errors.hpp"
#include "cln/model.hpp"
#include "cln/numerics.hpp"
#include "cln/relgraph.hpp"
#include "cln/training.hpp"

namespace cln {

// ---------------------------------------------------------------------------
// Stacked learning

struct SlConfig {
  std::size_t steps = 3;
  std::size_t epochs = 300;
  OptimizerSettings optimizer{OptimizerKind::Adam, 0.05};
  double l2 = 1e-4;
};

// Step t classifies from [x_i, p_i^{t-1}, c_i1^t .. c_iR^t]; step 1 sees zero
// probabilities and zero contexts.
struct SlStack {
  HeadKind head = HeadKind::Multiclass;
  std::size_t features = 0;
  std::size_t relations = 0;
  std::size_t labels = 0;
  std::vector<Matrix> weights;  // per step, L x D
  std::vector<Vector> biases;   // per step, L

  std::size_t steps() const { return weights.size(); }
  std::size_t input_dim() const { return features + labels * (1 + relations); }
};

// Per-entity class probabilities of the current step (N x L).
using SlState = Matrix;

inline Vector sl_context(const SlState& prev, const RelGraph& g, std::size_t i, std::size_t r) {
  return relational_context(prev, g, i, r, Pooling::Mean);
}

namespace detail {

inline Matrix sl_inputs(const RelGraph& g, const SlState* prev, std::size_t labels) {
  const std::size_t n = g.entity_count();
  const std::size_t m = g.feature_dim();
  const std::size_t rels = g.relation_count();
  Matrix u(n, m + labels * (1 + rels));
  std::vector<std::uint32_t> unused(labels);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = u.row(i);
    const auto x = g.features.row(i);
    std::copy(x.begin(), x.end(), row.begin());
    if (!prev) continue;
    const auto p = prev->row(i);
    std::copy(p.begin(), p.end(), row.begin() + static_cast<std::ptrdiff_t>(m));
    for (std::size_t r = 0; r < rels; ++r) {
      pool_into(*prev, g.inbound(r, i), Pooling::Mean, row.subspan(m + labels * (1 + r), labels), unused);
    }
  }
  return u;
}

inline SlState sl_apply(const Matrix& w, const Vector& b, const Matrix& u, HeadKind head) {
  SlState p(u.rows(), w.rows());
  for (std::size_t i = 0; i < u.rows(); ++i) {
    auto row = p.row(i);
    const auto x = u.row(i);
    for (std::size_t l = 0; l < w.rows(); ++l) {
      const double* wl = w.row(l).data();
      double acc = 0.0;
      for (std::size_t c = 0; c < x.size(); ++c) acc += wl[c] * x[c];
      row[l] = b[l] + acc;
    }
    if (head == HeadKind::Multiclass) {
      softmax_inplace(row);
    } else {
      for (double& v : row) v = sigmoid(v);
    }
  }
  return p;
}

}  // namespace detail

// Steps are trained in sequence on the training role; between steps the
// probabilities of every entity are recomputed from predictions (never from
// ground truth).
inline SlStack sl_train(const RelGraph& g, const SplitMask& mask, const SlConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("stacked learning needs at least one step");
  const auto rows = detail::training_rows(g, mask);
  SlStack stack;
  stack.head = g.head;
  stack.features = g.feature_dim();
  stack.relations = g.relation_count();
  stack.labels = g.label_arity();
  const std::size_t labels = stack.labels;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  SlState prev;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const Matrix u = detail::sl_inputs(g, t == 0 ? nullptr : &prev, labels);
    Matrix w(labels, u.cols());
    Vector b(labels);
    OptimizerState opt(cfg.optimizer);
    Matrix gw(labels, u.cols());
    Vector gb(labels);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      gw.fill(0.0);
      std::fill(gb.span().begin(), gb.span().end(), 0.0);
      double loss = 0.0;
      for (std::size_t i : rows) {
        const auto x = u.row(i);
        std::vector<double> logits(labels);
        for (std::size_t l = 0; l < labels; ++l) {
          double acc = b[l];
          const double* wl = w.row(l).data();
          for (std::size_t c = 0; c < x.size(); ++c) acc += wl[c] * x[c];
          logits[l] = acc;
        }
        if (g.head == HeadKind::Multiclass) {
          softmax_inplace(logits);
        } else {
          for (double& v : logits) v = sigmoid(v);
        }
        for (std::size_t l = 0; l < labels; ++l) {
          const double y = g.targets(i, l);
          loss -= y * std::log(std::max(logits[l], 1e-12));
          const double d = (logits[l] - y) * inv_n;
          gb[l] += d;
          double* gl = gw.row(l).data();
          for (std::size_t c = 0; c < x.size(); ++c) gl[c] += d * x[c];
        }
      }
      if (!std::isfinite(loss)) {
        throw NumericalError("stacked learning diverged at step " + std::to_string(t + 1));
      }
      for (std::size_t k = 0; k < w.size(); ++k) gw.span()[k] += cfg.l2 * w.span()[k];
      optimizer_step(opt, {w.span(), b.span()}, {gw.span(), gb.span()});
    }
    prev = detail::sl_apply(w, b, u, g.head);
    stack.weights.push_back(std::move(w));
    stack.biases.push_back(std::move(b));
  }
  return stack;
}

inline Prediction sl_predict(const SlStack& stack, const RelGraph& g) {
  if (stack.features != g.feature_dim() || stack.relations != g.relation_count() || stack.labels != g.label_arity()) {
    throw ShapeError("stacked-learning model does not match the graph shape");
  }
  SlState prev;
  for (std::size_t t = 0; t < stack.steps(); ++t) {
    const Matrix u = detail::sl_inputs(g, t == 0 ? nullptr : &prev, stack.labels);
    prev = detail::sl_apply(stack.weights[t], stack.biases[t], u, stack.head);
  }
  Prediction pred;
  pred.head = stack.head;
  pred.entities = all_entities(g);
  pred.probs = std::move(prev);
  return pred;
}

inline constexpr const char* kSlKind = "sl";

inline Checkpoint to_checkpoint(const SlStack& s) {
  Checkpoint ck;
  ck.kind = kSlKind;
  ck.set("head", to_string(s.head));
  ck.set("features", std::to_string(s.features));
  ck.set("relations", std::to_string(s.relations));
  ck.set("labels", std::to_string(s.labels));
  ck.set("steps", std::to_string(s.steps()));
  for (std::size_t t = 0; t < s.steps(); ++t) {
    const auto& w = s.weights[t];
    ck.blocks.push_back({"step" + std::to_string(t) + ".W", w.rows(), w.cols(), {w.span().begin(), w.span().end()}});
    const auto& b = s.biases[t];
    ck.blocks.push_back({"step" + std::to_string(t) + ".b", 1, b.dim(), b.values()});
  }
  return ck;
}

inline SlStack sl_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != kSlKind) throw ConfigError("checkpoint kind is '" + ck.kind + "', expected '" + kSlKind + "'");
  SlStack s;
  s.head = parse_head_kind(ck.get("head"));
  s.features = ck.get_count("features");
  s.relations = ck.get_count("relations");
  s.labels = ck.get_count("labels");
  const std::size_t steps = ck.get_count("steps");
  if (ck.blocks.size() != 2 * steps) throw ShapeError("stacked-learning checkpoint has wrong block count");
  for (std::size_t t = 0; t < steps; ++t) {
    const auto& wb = ck.blocks[2 * t];
    const auto& bb = ck.blocks[2 * t + 1];
    if (wb.rows != s.labels || wb.cols != s.input_dim() || bb.cols != s.labels) {
      throw ShapeError("stacked-learning checkpoint block '" + wb.name + "' has the wrong shape");
    }
    Matrix w(wb.rows, wb.cols);
    std::copy(wb.values.begin(), wb.values.end(), w.span().begin());
    s.weights.push_back(std::move(w));
    s.biases.emplace_back(bb.values);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Non-relational highway baseline: the same column network on the graph with
// every relation removed.

inline constexpr const char* kHwnNoRelKind = "hwn_norel";

inline ModelSpec hwn_norel_spec(const RelGraph& g, ModelSpec base) {
  base.column = ColumnKind::Highway;
  base.sharing = Sharing::Shared;
  return spec_for(strip_relations(g), base);
}

struct HwnNoRelResult {
  TrainResult train;
  Prediction prediction;
};

inline Prediction hwn_norel_predict(const ClnParams& params, const RelGraph& g) {
  return predict(strip_relations(g), params);
}

inline HwnNoRelResult hwn_norel(const RelGraph& g, const SplitMask& mask, const ModelSpec& base,
                                const TrainConfig& cfg) {
  const RelGraph bare = strip_relations(g);
  const ModelSpec spec = hwn_norel_spec(g, base);
  HwnNoRelResult out{train(bare, mask, make_params(spec, cfg.seed), cfg), {}};
  out.prediction = predict(bare, out.train.params);
  return out;
}

}  // namespace cln
