#pragma once

// Full-batch and frozen-blanket mini-batch training, early stopping, gradient
// checking, grid search and repeated runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cln/errors.hpp"
#include "cln/metrics.hpp"
#include "cln/model.hpp"
#include "cln/numerics.hpp"
#include "cln/relgraph.hpp"

namespace cln {

enum class BatchMode { Full, Mini };

inline std::string to_string(BatchMode b) { return b == BatchMode::Full ? "full" : "mini"; }
inline BatchMode parse_batch_mode(const std::string& s) {
  if (s == "full") return BatchMode::Full;
  if (s == "mini") return BatchMode::Mini;
  throw ConfigError("unknown batch mode '" + s + "' (expected full or mini)");
}

struct GridSpec {
  std::vector<std::size_t> depths{2, 6, 10, 14, 18, 22, 26, 30};
  std::vector<std::size_t> widths{5, 10, 20, 40};
  std::vector<OptimizerKind> optimizers{OptimizerKind::Adam, OptimizerKind::RMSprop};
};

struct TrainConfig {
  std::size_t epochs = 200;
  BatchMode batch = BatchMode::Full;
  std::size_t batch_size = 64;
  std::size_t refresh_period = 1;  // epochs between full blanket rebuilds
  OptimizerSettings optimizer;
  DropoutRates dropout;
  std::size_t patience = 10;
  double threshold = 0.5;  // multilabel decision threshold
  GridSpec grid;
  std::uint64_t seed = 1;
};

inline void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (c.patience < 1) throw ConfigError("train: patience must be >= 1");
  if (c.refresh_period < 1) throw ConfigError("train: refresh_period must be >= 1");
  if (!(c.optimizer.lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (c.grid.depths.empty() || c.grid.widths.empty() || c.grid.optimizers.empty()) {
    throw ConfigError("train: grid values must be nonempty");
  }
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0: the initial parameters were kept
  double best_val = -1.0;
  std::string checkpoint;
};

inline std::string train_log_csv(const TrainLog& log) {
  std::string s = "epoch,loss,val_metric,seconds\n";
  char buf[160];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.6f\n", e.epoch, e.loss, e.val_metric, e.seconds);
    s += buf;
  }
  return s;
}

struct TrainResult {
  TrainLog log;
  ClnParams params;
};

// Mean cross-entropy over labeled entities of `role`; logs clamped at 1e-12.
inline double masked_loss(const Prediction& pred, const RelGraph& g, const SplitMask& mask, Role role) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < pred.entities.size(); ++a) {
    const std::size_t i = pred.entities[a];
    if (mask.roles.at(i) != role || !g.observed[i]) continue;
    const auto p = pred.probs.row(a);
    const auto y = g.targets.row(i);
    for (std::size_t l = 0; l < p.size(); ++l) {
      if (pred.head == HeadKind::Multiclass) {
        if (y[l] > 0.0) total -= y[l] * std::log(std::max(p[l], 1e-12));
      } else {
        total -= y[l] * std::log(std::max(p[l], 1e-12)) + (1.0 - y[l]) * std::log(std::max(1.0 - p[l], 1e-12));
      }
    }
    ++count;
  }
  if (count == 0) throw ConfigError("masked_loss: role '" + to_string(role) + "' is empty");
  return total / static_cast<double>(count);
}

// Early-stopping metric: micro-F1 for multiclass, macro-F1 for multilabel.
inline double selection_metric(const EvalReport& rep, HeadKind head) {
  return head == HeadKind::Multiclass ? rep.micro_f1 : rep.macro_f1;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline std::vector<std::size_t> training_rows(const RelGraph& g, const SplitMask& mask) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.roles.size(); ++i)
    if (mask.roles[i] == Role::Train && g.observed[i]) rows.push_back(i);
  if (rows.empty()) throw ConfigError("training role is empty");
  return rows;
}

inline Prediction to_prediction(const ClnParams& p, ActivationCache& c) {
  Prediction pred;
  pred.head = p.spec.head;
  pred.entities = c.entities;
  pred.probs = c.probs;
  return pred;
}

inline void check_finite(double loss, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw NumericalError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
  }
}

// Shared early-stopping bookkeeping.
struct Stopper {
  const TrainConfig& cfg;
  TrainResult& result;

  // Returns true when training should stop.
  bool record(EpochRecord rec, const ClnParams& params) {
    check_finite(rec.loss, rec.epoch);
    result.log.epochs.push_back(rec);
    if (rec.val_metric > result.log.best_val) {
      result.log.best_val = rec.val_metric;
      result.log.best_epoch = rec.epoch;
      result.params = params;
    }
    return rec.epoch - result.log.best_epoch >= cfg.patience;
  }
};

}  // namespace detail

inline TrainResult train_full_batch(const RelGraph& g, const SplitMask& mask, const ClnParams& init,
                                    const TrainConfig& cfg) {
  validate(cfg);
  check_consistent(init, g);
  const auto rows = detail::training_rows(g, mask);
  TrainResult result{{}, init};
  ClnParams params = init;
  OptimizerState opt(cfg.optimizer);
  Rng rng(cfg.seed);
  detail::Stopper stopper{cfg, result};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = detail::Clock::now();
    ActivationCache cache = run_columns(g, params, all_entities(g), nullptr, Mode::Train, cfg.dropout, rng);
    ClnParams grad = zeros_like(params);
    const double loss = backward_rows(g, params, cache, rows, grad);
    detail::check_finite(loss, epoch);
    optimizer_step(opt, params.blocks(), grad.const_blocks());
    const Prediction pred = predict(g, params);
    const double val = selection_metric(evaluate(pred, g, mask, Role::Valid, cfg.threshold), g.head);
    if (stopper.record({epoch, loss, val, detail::seconds_since(t0)}, params)) break;
  }
  return result;
}

// Frozen neighbor activations for every entity and layer, computed in infer mode.
struct BlanketCache {
  std::vector<Matrix> hidden;
  std::size_t staleness = 0;  // batch updates since the last full rebuild
};

// Mini-batch trainer: each batch's columns read neighbor states from the
// blanket as constants, so no gradient crosses into neighbor columns.
class MiniBatchTrainer {
 public:
  MiniBatchTrainer(const RelGraph& g, ClnParams params, const TrainConfig& cfg)
      : g_(g), params_(std::move(params)), cfg_(cfg), opt_(cfg.optimizer), rng_(cfg.seed) {
    validate(cfg);
    check_consistent(params_, g);
    rebuild();
  }

  const BlanketCache& blanket() const { return blanket_; }
  const ClnParams& params() const { return params_; }
  Rng& rng() { return rng_; }

  // Full infer-mode forward; refreshes every blanket entry and returns the
  // resulting prediction.
  Prediction rebuild() {
    ActivationCache c = run_columns(g_, params_, all_entities(g_), nullptr, Mode::Infer, cfg_.dropout, rng_);
    blanket_.hidden = c.hidden;
    blanket_.staleness = 0;
    return detail::to_prediction(params_, c);
  }

  // Gradient of the batch loss with the blanket held constant.
  double batch_gradient(const std::vector<std::size_t>& batch, ClnParams& grad) {
    ActivationCache c = run_columns(g_, params_, batch, &blanket_.hidden, Mode::Train, cfg_.dropout, rng_);
    std::vector<std::size_t> rows(batch.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return backward_rows(g_, params_, c, rows, grad);
  }

  // One update on `batch`, then recomputation of the batch's blanket rows.
  double step(const std::vector<std::size_t>& batch) {
    ClnParams grad = zeros_like(params_);
    const double loss = batch_gradient(batch, grad);
    optimizer_step(opt_, params_.blocks(), grad.const_blocks());
    ActivationCache c = run_columns(g_, params_, batch, &blanket_.hidden, Mode::Infer, cfg_.dropout, rng_);
    for (std::size_t l = 1; l < blanket_.hidden.size(); ++l) {
      for (std::size_t a = 0; a < batch.size(); ++a) {
        const auto src = c.hidden[l].row(a);
        std::copy(src.begin(), src.end(), blanket_.hidden[l].row(batch[a]).begin());
      }
    }
    ++blanket_.staleness;
    return loss;
  }

 private:
  const RelGraph& g_;
  ClnParams params_;
  TrainConfig cfg_;
  OptimizerState opt_;
  Rng rng_;
  BlanketCache blanket_;
};

inline TrainResult train_mini_batch(const RelGraph& g, const SplitMask& mask, const ClnParams& init,
                                    const TrainConfig& cfg) {
  validate(cfg);
  auto rows = detail::training_rows(g, mask);
  if (cfg.batch_size > rows.size()) {
    throw ConfigError("batch_size " + std::to_string(cfg.batch_size) + " exceeds the " + std::to_string(rows.size()) +
                      " training entities");
  }
  TrainResult result{{}, init};
  MiniBatchTrainer trainer(g, init, cfg);
  detail::Stopper stopper{cfg, result};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = detail::Clock::now();
    std::shuffle(rows.begin(), rows.end(), trainer.rng());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < rows.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(rows.size(), start + cfg.batch_size);
      std::vector<std::size_t> batch(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                     rows.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(batch.begin(), batch.end());
      const double loss = trainer.step(batch);
      detail::check_finite(loss, epoch);
      loss_sum += loss * static_cast<double>(batch.size());
    }
    // The rebuild doubles as the validation forward pass.
    const Prediction pred = epoch % cfg.refresh_period == 0 ? trainer.rebuild() : predict(g, trainer.params());
    const double val = selection_metric(evaluate(pred, g, mask, Role::Valid, cfg.threshold), g.head);
    const double loss = loss_sum / static_cast<double>(rows.size());
    if (stopper.record({epoch, loss, val, detail::seconds_since(t0)}, trainer.params())) break;
  }
  return result;
}

inline TrainResult train(const RelGraph& g, const SplitMask& mask, const ClnParams& init, const TrainConfig& cfg) {
  return cfg.batch == BatchMode::Full ? train_full_batch(g, mask, init, cfg) : train_mini_batch(g, mask, init, cfg);
}

// ---------------------------------------------------------------------------
// Gradient check

struct BlockCheck {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<BlockCheck> blocks;
  double tolerance = 0.0;
  bool pass = true;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so coordinates whose true
  // gradient is ~0 are judged on absolute error.
  double floor = 1e-6;
  DropoutRates dropout{0.0, 0.0, 0.0};
  std::uint64_t dropout_seed = 7;
  std::string corrupt_block;  // debug: scale this block's analytic gradient by 2
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline GradCheckReport grad_check(const RelGraph& g, const SplitMask& mask, const ClnParams& params,
                                  const GradCheckOptions& o = {}) {
  ClnParams probe = params;
  auto loss_at = [&](const ClnParams& p) {
    Rng rng(o.dropout_seed);
    return masked_loss(forward(g, p, Mode::Train, rng, o.dropout).prediction, g, mask, Role::Train);
  };
  Rng rng(o.dropout_seed);
  const ActivationCache cache = forward(g, probe, Mode::Train, rng, o.dropout).cache;
  const ClnParams grad = backward(g, probe, cache, mask, Role::Train);

  GradCheckReport rep;
  rep.tolerance = o.tolerance;
  const auto names = probe.block_names();
  const auto analytic = grad.const_blocks();
  auto blocks = probe.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    BlockCheck bc;
    bc.name = names[b];
    bc.size = blocks[b].size();
    const double scale = names[b] == o.corrupt_block ? 2.0 : 1.0;
    for (std::size_t k = 0; k < blocks[b].size(); ++k) {
      const double saved = blocks[b][k];
      blocks[b][k] = saved + o.epsilon;
      const double up = loss_at(probe);
      blocks[b][k] = saved - o.epsilon;
      const double down = loss_at(probe);
      blocks[b][k] = saved;
      const double numeric = (up - down) / (2.0 * o.epsilon);
      const double a = scale * analytic[b][k];
      const double err = relative_error(a, numeric, o.floor);
      if (err > bc.max_rel_error || k == 0) {
        bc.max_rel_error = err;
        bc.worst_index = k;
        bc.analytic = a;
        bc.numeric = numeric;
      }
    }
    bc.pass = bc.max_rel_error < o.tolerance;
    rep.pass = rep.pass && bc.pass;
    rep.blocks.push_back(bc);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Grid search and repeated runs

struct GridCell {
  std::size_t depth = 0;
  std::size_t width = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::size_t params = 0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  std::size_t best_epoch = 0;
  bool failed = false;
  std::string error;
};

inline std::string cell_key(const GridCell& c) {
  return "d" + std::to_string(c.depth) + "_w" + std::to_string(c.width) + "_" + to_string(c.optimizer);
}

// Optional persistence hooks: `load` returns a finished cell (resume), `store`
// receives each newly trained cell with its parameters.
struct GridHooks {
  std::function<std::optional<GridCell>(const GridCell&)> load;
  std::function<void(const GridCell&, const ClnParams*)> store;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::optional<std::size_t> best;
  std::optional<ClnParams> best_params;
  TrainConfig best_config;
  ModelSpec best_spec;
};

// Highest validation metric wins; ties go to fewer parameters, then lower depth.
inline bool better_cell(const GridCell& a, const GridCell& b) {
  if (a.val_metric != b.val_metric) return a.val_metric > b.val_metric;
  if (a.params != b.params) return a.params < b.params;
  return a.depth < b.depth;
}

inline GridResult grid_search(const RelGraph& g, const SplitMask& mask, const ModelSpec& base, const TrainConfig& cfg,
                              const GridHooks& hooks = {}) {
  validate(cfg);
  GridResult res;
  for (std::size_t depth : cfg.grid.depths) {
    for (std::size_t width : cfg.grid.widths) {
      for (OptimizerKind opt : cfg.grid.optimizers) {
        GridCell cell;
        cell.depth = depth;
        cell.width = width;
        cell.optimizer = opt;
        ModelSpec spec = spec_for(g, base);
        spec.depth = depth;
        spec.width = width;
        TrainConfig tc = cfg;
        tc.optimizer.kind = opt;
        std::optional<ClnParams> trained;
        if (auto done = hooks.load ? hooks.load(cell) : std::nullopt) {
          cell = *done;
        } else {
          try {
            const ClnParams init = make_params(spec, cfg.seed);
            cell.params = param_count(init);
            TrainResult tr = train(g, mask, init, tc);
            const Prediction pred = predict(g, tr.params);
            cell.val_metric = selection_metric(evaluate(pred, g, mask, Role::Valid, cfg.threshold), g.head);
            cell.test_metric = selection_metric(evaluate(pred, g, mask, Role::Test, cfg.threshold), g.head);
            cell.best_epoch = tr.log.best_epoch;
            trained = std::move(tr.params);
          } catch (const Error& e) {
            cell.failed = true;
            cell.error = e.what();
          }
          if (hooks.store) hooks.store(cell, trained ? &*trained : nullptr);
        }
        res.cells.push_back(cell);
        if (cell.failed) continue;
        const std::size_t idx = res.cells.size() - 1;
        if (!res.best || better_cell(cell, res.cells[*res.best])) {
          res.best = idx;
          res.best_params = trained ? std::move(trained) : std::nullopt;
          res.best_config = tc;
          res.best_spec = spec;
        }
      }
    }
  }
  return res;
}

struct RunStats {
  std::vector<double> micro;
  std::vector<double> macro;
  double micro_mean = 0.0;
  double micro_std = 0.0;
  double macro_mean = 0.0;
  double macro_std = 0.0;
};

inline void summarize(RunStats& s) {
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double sq = 0.0;
    for (double x : v) sq += (x - mean) * (x - mean);
    sd = std::sqrt(sq / static_cast<double>(v.size()));
  };
  stats(s.micro, s.micro_mean, s.micro_std);
  stats(s.macro, s.macro_mean, s.macro_std);
}

// Trains with seeds seed .. seed+runs-1 and reports test-role statistics
// (population standard deviation).
inline RunStats mean_of_runs(const RelGraph& g, const SplitMask& mask, const ModelSpec& base, const TrainConfig& cfg,
                             std::size_t runs) {
  if (runs < 1) throw ConfigError("mean_of_runs: runs must be >= 1");
  RunStats s;
  const ModelSpec spec = spec_for(g, base);
  for (std::size_t k = 0; k < runs; ++k) {
    TrainConfig tc = cfg;
    tc.seed = cfg.seed + k;
    const TrainResult tr = train(g, mask, make_params(spec, tc.seed), tc);
    const EvalReport rep = evaluate(predict(g, tr.params), g, mask, Role::Test, cfg.threshold);
    s.micro.push_back(rep.micro_f1);
    s.macro.push_back(rep.macro_f1);
  }
  summarize(s);
  return s;
}

}  // namespace cln
