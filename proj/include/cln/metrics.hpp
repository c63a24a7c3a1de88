#pragma once

// Per-label, micro and macro F1.

#include <cstddef>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cln/errors.hpp"
#include "cln/model.hpp"
#include "cln/relgraph.hpp"

namespace cln {

using LabelSet = std::vector<std::size_t>;

// Multiclass: argmax, lowest index wins ties. Multilabel: every label with
// probability >= threshold.
inline std::vector<LabelSet> decide_labels(const Matrix& probs, HeadKind head, double threshold = 0.5) {
  if (head == HeadKind::Multilabel && !(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("multilabel threshold must lie in (0, 1)");
  }
  std::vector<LabelSet> out(probs.rows());
  for (std::size_t a = 0; a < probs.rows(); ++a) {
    const auto row = probs.row(a);
    if (head == HeadKind::Multiclass) {
      std::size_t best = 0;
      for (std::size_t l = 1; l < row.size(); ++l)
        if (row[l] > row[best]) best = l;
      out[a] = {best};
    } else {
      for (std::size_t l = 0; l < row.size(); ++l)
        if (row[l] >= threshold) out[a].push_back(l);
    }
  }
  return out;
}

inline std::vector<LabelSet> decide_labels(const Prediction& pred, double threshold = 0.5) {
  return decide_labels(pred.probs, pred.head, threshold);
}

struct LabelScore {
  std::string name;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::vector<LabelScore> labels;
  std::size_t entities = 0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::map<std::string, std::string> notes;

  // Positive-class F1 for two-class multiclass tasks, micro-F1 otherwise.
  double headline(HeadKind head) const {
    if (head == HeadKind::Multiclass && labels.size() == 2) return labels[1].f1;
    return micro_f1;
  }
};

namespace detail {

inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace detail

// 0/0 is scored as 0 for precision, recall and F1.
inline EvalReport f1_scores(const std::vector<LabelSet>& decided, const std::vector<LabelSet>& truth,
                            const std::vector<std::string>& label_names) {
  if (decided.size() != truth.size()) throw ShapeError("f1_scores: decided and truth differ in length");
  if (decided.empty()) throw ConfigError("f1_scores: no entities to score");
  const std::size_t labels = label_names.size();
  EvalReport rep;
  rep.entities = decided.size();
  rep.labels.resize(labels);
  for (std::size_t l = 0; l < labels; ++l) rep.labels[l].name = label_names[l];
  for (std::size_t a = 0; a < decided.size(); ++a) {
    std::vector<char> d(labels, 0), t(labels, 0);
    for (std::size_t l : decided[a]) d.at(l) = 1;
    for (std::size_t l : truth[a]) t.at(l) = 1;
    for (std::size_t l = 0; l < labels; ++l) {
      if (d[l] && t[l]) ++rep.labels[l].tp;
      if (d[l] && !t[l]) ++rep.labels[l].fp;
      if (!d[l] && t[l]) ++rep.labels[l].fn;
    }
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  double f1_sum = 0.0;
  for (auto& s : rep.labels) {
    s.precision = detail::ratio(s.tp, s.tp + s.fp);
    s.recall = detail::ratio(s.tp, s.tp + s.fn);
    s.f1 = detail::ratio(2 * s.tp, 2 * s.tp + s.fp + s.fn);
    tp += s.tp;
    fp += s.fp;
    fn += s.fn;
    f1_sum += s.f1;
  }
  rep.micro_f1 = detail::ratio(2 * tp, 2 * tp + fp + fn);
  rep.macro_f1 = labels ? f1_sum / static_cast<double>(labels) : 0.0;
  return rep;
}

inline LabelSet truth_of(const RelGraph& g, std::size_t i) {
  LabelSet out;
  for (std::size_t l = 0; l < g.label_arity(); ++l)
    if (g.targets(i, l) > 0.5) out.push_back(l);
  return out;
}

// Scores the prediction rows whose entity holds `role`.
inline EvalReport evaluate(const Prediction& pred, const RelGraph& g, const SplitMask& mask, Role role,
                           double threshold = 0.5) {
  const auto decided_all = decide_labels(pred, threshold);
  std::vector<LabelSet> decided, truth;
  for (std::size_t a = 0; a < pred.entities.size(); ++a) {
    const std::size_t i = pred.entities[a];
    if (mask.roles.at(i) != role || !g.observed[i]) continue;
    decided.push_back(decided_all[a]);
    truth.push_back(truth_of(g, i));
  }
  if (decided.empty()) throw ConfigError("evaluate: role '" + to_string(role) + "' has no labeled entities");
  auto rep = f1_scores(decided, truth, g.label_names);
  rep.notes["role"] = to_string(role);
  return rep;
}

namespace detail {

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline std::string report_text(const EvalReport& rep) {
  std::string s = "label\tprecision\trecall\tf1\ttp\tfp\tfn\n";
  for (const auto& l : rep.labels) {
    s += l.name + '\t' + detail::fixed(l.precision) + '\t' + detail::fixed(l.recall) + '\t' + detail::fixed(l.f1) +
         '\t' + std::to_string(l.tp) + '\t' + std::to_string(l.fp) + '\t' + std::to_string(l.fn) + '\n';
  }
  s += "micro_f1\t" + detail::fixed(rep.micro_f1) + '\n';
  s += "macro_f1\t" + detail::fixed(rep.macro_f1) + '\n';
  s += "entities\t" + std::to_string(rep.entities) + '\n';
  for (const auto& [k, v] : rep.notes) s += "# " + k + ": " + v + '\n';
  return s;
}

inline nlohmann::json report_json(const EvalReport& rep) {
  nlohmann::json j;
  j["micro_f1"] = rep.micro_f1;
  j["macro_f1"] = rep.macro_f1;
  j["entities"] = rep.entities;
  auto& labels = j["labels"] = nlohmann::json::array();
  for (const auto& l : rep.labels) {
    labels.push_back({{"label", l.name},
                      {"precision", l.precision},
                      {"recall", l.recall},
                      {"f1", l.f1},
                      {"tp", l.tp},
                      {"fp", l.fp},
                      {"fn", l.fn}});
  }
  j["notes"] = rep.notes;
  return j;
}

}  // namespace cln
