#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmsets/error.hpp"

namespace mmsets {

using BinaryMatrix = std::vector<std::vector<int>>;

/// Mann-Whitney AUC: P(score_pos > score_neg) with ties counted 1/2,
/// computed from average ranks.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::dimension, "roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  double positives = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t r = i; r < j; ++r) {
      if (labels[order[r]] == 1) {
        positive_rank_sum += avg_rank;
        positives += 1.0;
      } else if (labels[order[r]] != 0) {
        throw Error(ErrorKind::contract, "roc_auc labels must be 0 or 1");
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw Error(ErrorKind::contract, "roc_auc is undefined unless both classes are present");
  }
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
  double samples = 0.0;
};

namespace detail {

inline double f1_from_counts(double tp, double fp, double fn) {
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

inline void check_same_shape(const BinaryMatrix& pred, const BinaryMatrix& truth, const char* op) {
  if (pred.size() != truth.size()) throw Error(ErrorKind::dimension, std::string(op) + ": row counts differ");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != truth[i].size() || pred[i].size() != pred.front().size()) {
      throw Error(ErrorKind::dimension, std::string(op) + ": row " + std::to_string(i) + " width mismatch");
    }
  }
}

}  // namespace detail

/// Micro/macro/samples F1 for n x C binary matrices. A class with no
/// predicted or true positives scores 0 in the macro mean; a row with no
/// predicted or true positives scores 1 in the samples mean.
inline F1Scores f1_suite(const BinaryMatrix& pred, const BinaryMatrix& truth) {
  detail::check_same_shape(pred, truth, "f1_suite");
  if (pred.empty()) throw Error(ErrorKind::dimension, "f1_suite: no rows");
  const std::size_t n = pred.size(), classes = pred.front().size();
  std::vector<double> tp(classes, 0.0), fp(classes, 0.0), fn(classes, 0.0);
  double sample_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_tp = 0.0, row_fp = 0.0, row_fn = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const int p = pred[i][c], t = truth[i][c];
      row_tp += p && t;
      row_fp += p && !t;
      row_fn += !p && t;
    }
    for (std::size_t c = 0; c < classes; ++c) {
      tp[c] += pred[i][c] && truth[i][c];
      fp[c] += pred[i][c] && !truth[i][c];
      fn[c] += !pred[i][c] && truth[i][c];
    }
    sample_total += (row_tp + row_fp + row_fn) == 0.0 ? 1.0 : detail::f1_from_counts(row_tp, row_fp, row_fn);
  }
  F1Scores out;
  out.micro = detail::f1_from_counts(std::accumulate(tp.begin(), tp.end(), 0.0), std::accumulate(fp.begin(), fp.end(), 0.0),
                                     std::accumulate(fn.begin(), fn.end(), 0.0));
  double macro = 0.0;
  for (std::size_t c = 0; c < classes; ++c) macro += detail::f1_from_counts(tp[c], fp[c], fn[c]);
  out.macro = macro / static_cast<double>(classes);
  out.samples = sample_total / static_cast<double>(n);
  return out;
}

struct AccuracyScores {
  double overall = 0.0;
  std::vector<double> per_class;  // NaN for classes absent from the truth
  double mean_class = 0.0;        // mean over classes present in the truth
};

inline AccuracyScores accuracy_suite(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                                     std::size_t classes) {
  if (pred.size() != truth.size()) throw Error(ErrorKind::dimension, "accuracy_suite: length mismatch");
  if (pred.empty()) throw Error(ErrorKind::dimension, "accuracy_suite: no samples");
  std::vector<double> correct(classes, 0.0), total(classes, 0.0);
  double hits = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= classes || truth[i] >= classes) {
      throw Error(ErrorKind::parameter, "accuracy_suite: class index out of range [0," + std::to_string(classes) + ")");
    }
    total[truth[i]] += 1.0;
    if (pred[i] == truth[i]) {
      correct[truth[i]] += 1.0;
      hits += 1.0;
    }
  }
  AccuracyScores out;
  out.overall = hits / static_cast<double>(pred.size());
  double sum = 0.0, present = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (total[c] == 0.0) {
      out.per_class.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out.per_class.push_back(correct[c] / total[c]);
    sum += out.per_class.back();
    present += 1.0;
  }
  out.mean_class = sum / present;
  return out;
}

/// Shortest representation that round-trips through strtod.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

using FimRow = std::pair<std::string, std::map<std::string, double>>;

struct FimTable {
  std::vector<std::string> columns;  // sorted union of modality ids
  std::vector<std::string> models;
  std::vector<std::vector<double>> values;
};

inline FimTable make_fim_table(std::span<const FimRow> rows) {
  FimTable table;
  std::set<std::string> columns;
  for (const auto& [tag, fractions] : rows) {
    double total = 0.0;
    for (const auto& [id, f] : fractions) {
      columns.insert(id);
      total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error(ErrorKind::parameter, "importance fractions for '" + tag + "' sum to " + format_double(total));
    }
  }
  table.columns.assign(columns.begin(), columns.end());
  for (const auto& [tag, fractions] : rows) {
    table.models.push_back(tag);
    std::vector<double> row;
    for (const auto& col : table.columns) {
      auto it = fractions.find(col);
      row.push_back(it == fractions.end() ? 0.0 : it->second);
    }
    table.values.push_back(std::move(row));
  }
  return table;
}

inline nlohmann::json fim_to_json(const FimTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < table.models.size(); ++r) rows.push_back({{"model", table.models[r]}, {"values", table.values[r]}});
  return {{"columns", table.columns}, {"rows", rows}};
}

/// Writes the Feature Importance Matrix to `csv_path` and its JSON twin next
/// to it (same stem, .json extension).
inline void export_fim(std::span<const FimRow> rows, const std::filesystem::path& csv_path) {
  const FimTable table = make_fim_table(rows);
  std::ofstream csv(csv_path);
  if (!csv) throw Error(ErrorKind::io, "cannot write " + csv_path.string());
  csv << "model";
  for (const auto& c : table.columns) csv << ',' << c;
  csv << '\n';
  for (std::size_t r = 0; r < table.models.size(); ++r) {
    csv << table.models[r];
    for (double v : table.values[r]) csv << ',' << format_double(v);
    csv << '\n';
  }
  if (!csv) throw Error(ErrorKind::io, "failed writing " + csv_path.string());
  auto json_path = csv_path;
  json_path.replace_extension(".json");
  std::ofstream js(json_path);
  if (!js) throw Error(ErrorKind::io, "cannot write " + json_path.string());
  js << fim_to_json(table).dump(2) << '\n';
}

}  // namespace mmsets
