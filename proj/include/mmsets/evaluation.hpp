#pragma once

// Prediction, per-fold metrics and the k-fold protocol.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmsets/fusion.hpp"
#include "mmsets/metrics.hpp"
#include "mmsets/sample.hpp"
#include "mmsets/training.hpp"

namespace mmsets {

struct Predictions {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> probabilities;
  BinaryMatrix decisions;
  BinaryMatrix truth;
  std::vector<std::optional<std::string>> groups;
  std::vector<ImportanceRecord> importance;  // filled for set models with max/min pooling
};

template <typename Model>
Predictions predict(const Model& model, std::span<const Sample> samples, TaskKind task, std::uint64_t seed) {
  Predictions out;
  for (const auto& s : samples) {
    std::vector<double> probs;
    if constexpr (std::is_same_v<Model, FusionModel>) {
      Tape tape(false);
      Rng rng(mix_seed(seed, kEvalEpoch, s.id));
      auto result = model.forward(tape, s, false, rng);
      for (double z : result.logits.data()) probs.push_back(stable_sigmoid(z));
      if (result.importance) out.importance.push_back(std::move(*result.importance));
    } else {
      probs = predict_probabilities(model, s, seed);
    }
    out.ids.push_back(s.id);
    out.decisions.push_back(decide(probs, task));
    out.probabilities.push_back(std::move(probs));
    out.truth.push_back(s.labels);
    out.groups.push_back(s.group);
  }
  return out;
}

struct FoldMetrics {
  std::size_t samples = 0;
  std::optional<double> accuracy;             // single-label only
  std::optional<double> mean_class_accuracy;  // single-label only
  std::vector<std::optional<double>> per_class_accuracy;
  std::optional<double> roc_auc;
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  double f1_samples = 0.0;
  std::map<std::string, double> group_accuracy;
};

/// Binary single-label tasks use the AUC of the positive class; otherwise the
/// macro one-vs-rest mean over classes where both outcomes occur.
inline std::optional<double> report_auc(const Predictions& p, TaskKind task) {
  const std::size_t classes = p.truth.front().size();
  auto auc_for = [&](std::size_t c) -> std::optional<double> {
    std::vector<double> scores;
    std::vector<int> labels;
    int positives = 0;
    for (std::size_t i = 0; i < p.truth.size(); ++i) {
      scores.push_back(p.probabilities[i][c]);
      labels.push_back(p.truth[i][c]);
      positives += p.truth[i][c];
    }
    if (positives == 0 || positives == static_cast<int>(labels.size())) return std::nullopt;
    return roc_auc(scores, labels);
  };
  if (task == TaskKind::single_label && classes == 2) return auc_for(1);
  double total = 0.0;
  int defined = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (auto a = auc_for(c)) {
      total += *a;
      ++defined;
    }
  }
  if (defined == 0) return std::nullopt;
  return total / defined;
}

inline FoldMetrics compute_metrics(const Predictions& p, TaskKind task) {
  if (p.truth.empty()) throw Error(ErrorKind::parameter, "cannot score an empty prediction set");
  FoldMetrics m;
  m.samples = p.truth.size();
  const auto f1 = f1_suite(p.decisions, p.truth);
  m.f1_micro = f1.micro;
  m.f1_macro = f1.macro;
  m.f1_samples = f1.samples;
  m.roc_auc = report_auc(p, task);
  if (task == TaskKind::single_label) {
    std::vector<std::size_t> pred, truth;
    for (std::size_t i = 0; i < p.truth.size(); ++i) {
      pred.push_back(static_cast<std::size_t>(std::find(p.decisions[i].begin(), p.decisions[i].end(), 1) - p.decisions[i].begin()));
      truth.push_back(static_cast<std::size_t>(std::find(p.truth[i].begin(), p.truth[i].end(), 1) - p.truth[i].begin()));
    }
    const auto acc = accuracy_suite(pred, truth, p.truth.front().size());
    m.accuracy = acc.overall;
    m.mean_class_accuracy = acc.mean_class;
    for (double a : acc.per_class) m.per_class_accuracy.push_back(std::isnan(a) ? std::nullopt : std::optional<double>(a));
    std::map<std::string, std::pair<double, double>> groups;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!p.groups[i]) continue;
      auto& [hit, total] = groups[*p.groups[i]];
      hit += pred[i] == truth[i];
      total += 1.0;
    }
    for (const auto& [g, ht] : groups) m.group_accuracy[g] = ht.first / ht.second;
  }
  return m;
}

/// Field-wise mean; optional entries average over folds where defined.
inline FoldMetrics mean_metrics(std::span<const FoldMetrics> folds) {
  FoldMetrics out;
  auto mean_opt = [&](auto getter) -> std::optional<double> {
    double total = 0.0;
    int n = 0;
    for (const auto& f : folds)
      if (auto v = getter(f)) {
        total += *v;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return total / n;
  };
  for (const auto& f : folds) {
    out.samples += f.samples;
    out.f1_micro += f.f1_micro / static_cast<double>(folds.size());
    out.f1_macro += f.f1_macro / static_cast<double>(folds.size());
    out.f1_samples += f.f1_samples / static_cast<double>(folds.size());
  }
  out.accuracy = mean_opt([](const FoldMetrics& f) { return f.accuracy; });
  out.mean_class_accuracy = mean_opt([](const FoldMetrics& f) { return f.mean_class_accuracy; });
  out.roc_auc = mean_opt([](const FoldMetrics& f) { return f.roc_auc; });
  const std::size_t classes = folds.empty() ? 0 : folds.front().per_class_accuracy.size();
  for (std::size_t c = 0; c < classes; ++c)
    out.per_class_accuracy.push_back(mean_opt([c](const FoldMetrics& f) { return f.per_class_accuracy[c]; }));
  std::map<std::string, std::pair<double, int>> groups;
  for (const auto& f : folds)
    for (const auto& [g, a] : f.group_accuracy) {
      groups[g].first += a;
      groups[g].second += 1;
    }
  for (const auto& [g, s] : groups) out.group_accuracy[g] = s.first / s.second;
  return out;
}

struct EvalReport {
  FoldMetrics mean;
  std::vector<FoldMetrics> folds;
  std::optional<std::map<std::string, double>> fim;
  std::vector<ImportanceRecord> importance;
};

inline nlohmann::json to_json(const FoldMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& v : m.per_class_accuracy) per_class.push_back(opt(v));
  nlohmann::json j{{"samples", m.samples},
                   {"accuracy", opt(m.accuracy)},
                   {"mean_class_accuracy", opt(m.mean_class_accuracy)},
                   {"per_class_accuracy", per_class},
                   {"roc_auc", opt(m.roc_auc)},
                   {"f1_micro", m.f1_micro},
                   {"f1_macro", m.f1_macro},
                   {"f1_samples", m.f1_samples}};
  if (!m.group_accuracy.empty()) j["group_accuracy"] = m.group_accuracy;
  return j;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) folds.push_back(to_json(f));
  nlohmann::json j{{"mean", to_json(r.mean)}, {"folds", folds}};
  j["fim"] = r.fim ? nlohmann::json(*r.fim) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const ImportanceRecord& r) {
  return {{"sample_id", r.sample_id}, {"counts", r.counts}, {"fractions", r.fractions}};
}

/// Trains a fresh model per fold (built by `make_model(fold)`), scores its
/// eval split and averages. Importance records are pooled across folds.
template <typename MakeModel>
EvalReport run_kfold(std::span<const Sample> samples, std::size_t k, const TrainConfig& train_cfg, MakeModel&& make_model) {
  EvalReport report;
  const auto folds = kfold_split(samples.size(), k, train_cfg.seed);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<Sample> train_set, eval_set;
    for (auto i : folds[f].train) train_set.push_back(samples[i]);
    for (auto i : folds[f].eval) eval_set.push_back(samples[i]);
    auto model = make_model(f);
    TrainConfig cfg = train_cfg;
    cfg.seed = mix_seed(train_cfg.seed, f, "fold");
    train(model, train_set, cfg);
    auto preds = predict(model, eval_set, train_cfg.task, cfg.seed);
    report.folds.push_back(compute_metrics(preds, train_cfg.task));
    for (auto& r : preds.importance) report.importance.push_back(std::move(r));
  }
  report.mean = mean_metrics(report.folds);
  if (!report.importance.empty()) report.fim = aggregate_importance(report.importance);
  return report;
}

}  // namespace mmsets
