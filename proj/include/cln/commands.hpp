#pragma once

// The five CLI commands. Each returns its exit status; errors propagate as
// exceptions and are mapped to statuses by run_guarded().

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cln/baselines.hpp"
#include "cln/checkpoint.hpp"
#include "cln/config.hpp"
#include "cln/errors.hpp"
#include "cln/io.hpp"
#include "cln/metrics.hpp"
#include "cln/model.hpp"
#include "cln/relgraph.hpp"
#include "cln/training.hpp"

namespace cln {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;

namespace fs = std::filesystem;

namespace detail {

struct Dataset {
  RelGraph graph;
  SplitMask mask;
  std::string split_note;
};

inline Dataset load_dataset(const RunConfig& c, std::ostream& err) {
  require_data(c);
  Dataset d;
  d.graph = load_graph(c.data, c.head);
  if (c.splits.empty()) {
    d.mask = make_split(d.graph, c.split, c.seed);
    d.split_note = "stratified " + format_double(c.split.train) + "/" + format_double(c.split.valid) + "/" +
                   format_double(c.split.test) + " seed " + std::to_string(c.seed);
  } else {
    d.mask = load_splits(c.splits, d.graph);
    d.split_note = "file " + c.splits;
  }
  for (const auto& w : d.mask.warnings) err << "warning: " << w << '\n';
  return d;
}

inline std::string describe(const ModelSpec& s, double z) {
  return to_string(s.column) + " " + to_string(s.sharing) + (s.tie_gates ? "" : " untied-gates") + " " +
         to_string(s.pooling) + " K=" + std::to_string(s.width) + " T=" + std::to_string(s.depth) +
         " z=" + format_double(z);
}

// Notes shared by train and eval, so both produce the same report document.
inline void annotate(EvalReport& rep, const std::string& family, const std::string& model, const Dataset& d,
                     double threshold) {
  rep.notes["family"] = family;
  rep.notes["model"] = model;
  rep.notes["split"] = d.split_note;
  if (d.graph.head == HeadKind::Multilabel) rep.notes["threshold"] = format_double(threshold);
  if (d.graph.head == HeadKind::Multiclass && d.graph.label_arity() == 2) {
    rep.notes["positive_class_f1"] = fixed(rep.headline(d.graph.head));
  }
}

inline void write_report(const EvalReport& rep, const fs::path& dir, const std::string& stem) {
  write_file_atomic(dir / (stem + ".txt"), report_text(rep));
  write_file_atomic(dir / (stem + ".json"), report_json(rep).dump(2) + "\n");
}

}  // namespace detail

inline int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto d = detail::load_dataset(c, err);
  const fs::path dir = c.out;
  const fs::path ck_path = dir / "checkpoint.txt";
  Checkpoint ck;
  Prediction pred;
  TrainLog log;
  std::string model;
  if (c.family == Family::Sl) {
    const SlStack stack = sl_train(d.graph, d.mask, c.sl);
    ck = to_checkpoint(stack);
    pred = sl_predict(stack, d.graph);
    model = "sl steps=" + std::to_string(stack.steps());
  } else if (c.family == Family::HwnNoRel) {
    HwnNoRelResult r = hwn_norel(d.graph, d.mask, c.model, c.train);
    ck = to_checkpoint(r.train.params, kHwnNoRelKind);
    pred = std::move(r.prediction);
    log = std::move(r.train.log);
    model = detail::describe(r.train.params.spec, r.train.params.z);
  } else {
    const ClnParams init = make_params(spec_for(d.graph, c.model), c.seed);
    TrainResult r = train(d.graph, d.mask, init, c.train);
    ck = to_checkpoint(r.params);
    pred = predict(d.graph, r.params);
    log = std::move(r.log);
    model = detail::describe(r.params.spec, r.params.z);
  }
  log.checkpoint = ck_path.string();
  EvalReport rep = evaluate(pred, d.graph, d.mask, Role::Test, c.train.threshold);
  detail::annotate(rep, to_string(c.family), model, d, c.train.threshold);

  save_checkpoint(ck, ck_path);
  write_file_atomic(dir / "train_log.csv", train_log_csv(log));
  detail::write_report(rep, dir, "report");
  out << report_text(rep);
  if (c.family != Family::Sl) {
    out << "# best_epoch: " << log.best_epoch << " of " << log.epochs.size() << '\n';
  }
  out << "# checkpoint: " << log.checkpoint << '\n';
  return kExitOk;
}

// Inference-mode evaluation of a saved checkpoint; consumes no randomness.
inline int cmd_eval(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(c.checkpoint);
  if (ck.kind != to_string(c.family)) {
    throw ConfigError("checkpoint '" + c.checkpoint + "' holds a " + ck.kind + " model, config asks for " +
                      to_string(c.family));
  }
  const auto d = detail::load_dataset(c, err);
  Prediction pred;
  std::string model;
  if (c.family == Family::Sl) {
    const SlStack stack = sl_from_checkpoint(ck);
    pred = sl_predict(stack, d.graph);
    model = "sl steps=" + std::to_string(stack.steps());
  } else {
    const ClnParams p = params_from_checkpoint(ck, ck.kind);
    if (p.spec.column != c.model.column) {
      throw ConfigError("checkpoint '" + c.checkpoint + "' holds a " + to_string(p.spec.column) +
                        " column network, config asks for " + to_string(c.model.column));
    }
    pred = c.family == Family::HwnNoRel ? hwn_norel_predict(p, d.graph) : predict(d.graph, p);
    model = detail::describe(p.spec, p.z);
  }
  EvalReport rep = evaluate(pred, d.graph, d.mask, Role::Test, c.train.threshold);
  detail::annotate(rep, to_string(c.family), model, d, c.train.threshold);
  detail::write_report(rep, c.out, "eval_report");
  out << report_text(rep);
  return kExitOk;
}

struct GradVariant {
  ColumnKind column;
  Sharing sharing;
  Pooling pooling;
  HeadKind head;

  std::string name() const {
    return to_string(column) + "/" + to_string(sharing) + "/" + to_string(pooling) + "/" + to_string(head);
  }
};

inline std::vector<GradVariant> grad_variants() {
  std::vector<GradVariant> v;
  for (auto col : {ColumnKind::FNN, ColumnKind::Highway})
    for (auto sh : {Sharing::Shared, Sharing::PerLayer})
      for (auto pl : {Pooling::Mean, Pooling::Sum, Pooling::Max})
        for (auto hd : {HeadKind::Multiclass, HeadKind::Multilabel}) v.push_back({col, sh, pl, hd});
  return v;
}

struct GradVariantResult {
  GradVariant variant;
  GradCheckReport report;
};

inline std::vector<GradVariantResult> run_grad_matrix(const GradCheckSettings& s, std::uint64_t seed) {
  std::vector<GradVariantResult> out;
  for (const auto& v : grad_variants()) {
    RandomGraphConfig rc;
    rc.n = s.entities;
    rc.relations = s.relations;
    rc.labels = s.labels;
    rc.features = s.features;
    rc.head = v.head;
    rc.seed = seed;
    const RelGraph g = random_graph(rc);
    SplitMask mask;
    mask.roles.assign(g.entity_count(), Role::Train);
    ModelSpec spec;
    spec.column = v.column;
    spec.sharing = v.sharing;
    spec.pooling = v.pooling;
    spec.depth = s.depth;
    spec.width = s.width;
    const ClnParams p = make_params(spec_for(g, spec), seed);
    if (param_count(p) > 10000) throw ConfigError("gradcheck: instance exceeds 10000 parameters");
    out.push_back({v, grad_check(g, mask, p, s.options)});
  }
  return out;
}

inline int cmd_gradcheck(const RunConfig& c, std::ostream& out, std::ostream&) {
  const auto results = run_grad_matrix(c.gradcheck, c.seed);
  bool pass = true;
  char buf[256];
  out << "variant\tblock\tsize\tmax_rel_error\tstatus\n";
  for (const auto& r : results) {
    for (const auto& b : r.report.blocks) {
      std::snprintf(buf, sizeof buf, "%s\t%s\t%zu\t%.3e\t%s\n", r.variant.name().c_str(), b.name.c_str(), b.size,
                    b.max_rel_error, b.pass ? "ok" : "FAIL");
      out << buf;
    }
    pass = pass && r.report.pass;
  }
  std::snprintf(buf, sizeof buf, "%s: %zu variants, tolerance %.1e\n", pass ? "PASS" : "FAIL", results.size(),
                c.gradcheck.options.tolerance);
  out << buf;
  return pass ? kExitOk : kExitNumerical;
}

inline int cmd_synth(const RunConfig& c, std::ostream& out, std::ostream& err) {
  SynthConfig sc = c.synth;
  sc.split = c.split;
  const SynthData d = generate_synthetic(sc);
  for (const auto& w : d.split.warnings) err << "warning: " << w << '\n';
  const fs::path dir = c.out;
  save_graph(d.graph, {(dir / "nodes.tsv").string(), (dir / "edges.tsv").string(), (dir / "labels.tsv").string()});
  save_splits(d.graph, d.split, dir / "splits.tsv");
  out << "entities\t" << d.graph.entity_count() << '\n'
      << "relations\t" << d.graph.relation_count() << '\n'
      << "tuples\t" << d.graph.tuple_count() << '\n'
      << "intra_class_fraction\t" << detail::fixed(intra_class_fraction(d.graph)) << '\n'
      << "written\t" << dir.string() << '\n';
  return kExitOk;
}

namespace detail {

inline nlohmann::json cell_json(const GridCell& cell) {
  return {{"depth", cell.depth},          {"width", cell.width},   {"optimizer", to_string(cell.optimizer)},
          {"params", cell.params},        {"val", cell.val_metric}, {"test", cell.test_metric},
          {"best_epoch", cell.best_epoch}, {"failed", cell.failed}, {"error", cell.error}};
}

inline GridCell cell_from_json(const nlohmann::json& j) {
  GridCell c;
  c.depth = j.at("depth");
  c.width = j.at("width");
  c.optimizer = parse_optimizer(j.at("optimizer"));
  c.params = j.at("params");
  c.val_metric = j.at("val");
  c.test_metric = j.at("test");
  c.best_epoch = j.at("best_epoch");
  c.failed = j.at("failed");
  c.error = j.at("error");
  return c;
}

}  // namespace detail

// Each cell owns <out>/cells/<key>/; cell.json is written last and marks the
// cell complete, so an interrupted grid resumes where it stopped.
inline int cmd_grid(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto d = detail::load_dataset(c, err);
  const fs::path dir = c.out;
  const fs::path cells = dir / "cells";
  std::size_t resumed = 0;
  GridHooks hooks;
  hooks.load = [&](const GridCell& cell) -> std::optional<GridCell> {
    const fs::path marker = cells / cell_key(cell) / "cell.json";
    if (!fs::exists(marker)) return std::nullopt;
    ++resumed;
    return detail::cell_from_json(nlohmann::json::parse(read_file(marker)));
  };
  hooks.store = [&](const GridCell& cell, const ClnParams* params) {
    const fs::path cdir = cells / cell_key(cell);
    if (params) save_checkpoint(to_checkpoint(*params), cdir / "checkpoint.txt");
    write_file_atomic(cdir / "cell.json", detail::cell_json(cell).dump(2) + "\n");
  };
  const GridResult res = grid_search(d.graph, d.mask, c.model, c.train, hooks);
  if (!res.best) throw Error("grid: every cell failed");

  std::string table = "depth\twidth\toptimizer\tparams\tval\ttest\tbest_epoch\tstatus\n";
  for (std::size_t k = 0; k < res.cells.size(); ++k) {
    const auto& cell = res.cells[k];
    table += std::to_string(cell.depth) + '\t' + std::to_string(cell.width) + '\t' + to_string(cell.optimizer) +
             '\t' + std::to_string(cell.params) + '\t' + detail::fixed(cell.val_metric) + '\t' + detail::fixed(cell.test_metric) +
             '\t' + std::to_string(cell.best_epoch) + '\t' +
             (cell.failed ? "failed" : (k == *res.best ? "best" : "ok")) + '\n';
  }
  // Depth x width surface of the best validation metric over optimizers.
  std::map<std::pair<std::size_t, std::size_t>, double> surface;
  for (const auto& cell : res.cells) {
    if (cell.failed) continue;
    auto key = std::make_pair(cell.depth, cell.width);
    auto it = surface.find(key);
    if (it == surface.end() || cell.val_metric > it->second) surface[key] = cell.val_metric;
  }
  std::string matrix = "depth";
  for (std::size_t w : c.train.grid.widths) matrix += "\tw" + std::to_string(w);
  matrix += '\n';
  for (std::size_t dep : c.train.grid.depths) {
    matrix += std::to_string(dep);
    for (std::size_t w : c.train.grid.widths) {
      auto it = surface.find({dep, w});
      matrix += '\t' + (it == surface.end() ? std::string("nan") : detail::fixed(it->second));
    }
    matrix += '\n';
  }
  write_file_atomic(dir / "grid.tsv", table);
  write_file_atomic(dir / "grid_surface.tsv", matrix);

  const GridCell& best = res.cells[*res.best];
  const fs::path best_src = cells / cell_key(best) / "checkpoint.txt";
  write_file_atomic(dir / "best_checkpoint.txt",
                    res.best_params ? checkpoint_text(to_checkpoint(*res.best_params)) : read_file(best_src));
  out << table << '\n' << matrix;
  out << "# best: " << cell_key(best) << " val " << detail::fixed(best.val_metric) << '\n';
  if (resumed) out << "# resumed cells: " << resumed << '\n';
  return kExitOk;
}

// Runs a command, mapping numerical failures to exit 2 and every other error
// to exit 1.
inline int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace cln
