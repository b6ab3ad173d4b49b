#pragma once

// JSON schemas for run configs and synthetic-data configs.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmsets/checkpoint.hpp"
#include "mmsets/data.hpp"
#include "mmsets/error.hpp"
#include "mmsets/fusion.hpp"
#include "mmsets/training.hpp"

namespace mmsets {

/// Resolved parameters for train/eval. Precedence when resolving:
/// command-line flags > config file > MMSETS_SEED (seed only) > defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 25;
  std::size_t batch_size = 32;
  double peak_lr = 1e-3;
  double warmup_epochs = 5.0;
  double min_lr = 0.0;
  double weight_decay = 0.01;
  std::string pool = "max";
  std::size_t dim = 32;
  std::vector<std::string> modalities;  // empty: every modality in the manifest
  std::vector<std::size_t> hidden{32};
  double dropout = 0.25;
  double prior = 0.01;
  bool balance_classes = false;
  std::string baseline = "none";  // "none" or "concat"
  std::size_t kfold = 0;          // 0: no cross-validation
  bool importance = false;
  TextCnnConfig text_cnn;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& what) {
      throw Error(ErrorKind::validation, "config field '" + field + "': " + what);
    };
    try {
      parse_reduction(pool);
    } catch (const Error&) {
      fail("pool", "'" + pool + "' is not one of sum, max, min, mean");
    }
    if (baseline != "none" && baseline != "concat") fail("baseline", "expected 'none' or 'concat'");
    if (dim == 0) fail("dim", "must be positive");
    if (epochs == 0) fail("epochs", "must be positive");
    if (batch_size == 0) fail("batch_size", "must be positive");
    if (!(peak_lr >= 0.0)) fail("peak_lr", "must be >= 0");
    if (!(min_lr >= 0.0) || min_lr > peak_lr) fail("min_lr", "must lie in [0, peak_lr]");
    if (!(warmup_epochs >= 0.0) || warmup_epochs >= static_cast<double>(epochs)) fail("warmup_epochs", "must lie in [0, epochs)");
    if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout", "must lie in [0,1)");
    if (!(prior > 0.0 && prior < 1.0)) fail("prior", "must lie in (0,1)");
    if (kfold == 1) fail("kfold", "must be 0 (off) or >= 2");
    for (auto h : hidden)
      if (h == 0) fail("hidden", "layer widths must be positive");
    if (text_cnn.embed_dim == 0 || text_cnn.filters == 0 || text_cnn.widths.empty()) fail("text_cnn", "sizes must be positive");
    for (auto w : text_cnn.widths)
      if (w == 0) fail("text_cnn.widths", "must be positive");
    if (importance && !is_extremum(parse_reduction(pool))) {
      fail("importance", "feature importance requires max or min pooling, not '" + pool + "'");
    }
    if (importance && baseline == "concat") fail("importance", "feature importance is only defined for the set model");
  }

  TrainConfig train_config(TaskKind task) const {
    TrainConfig t;
    t.seed = seed;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.peak_lr = peak_lr;
    t.warmup_epochs = warmup_epochs;
    t.min_lr = min_lr;
    t.weight_decay = weight_decay;
    t.balance_classes = balance_classes;
    t.task = task;
    return t;
  }

  /// Model config for the manifest's modalities (restricted to `modalities` if set).
  ModelConfig model_config(const DatasetManifest& manifest) const {
    ModelConfig m;
    if (modalities.empty()) {
      m.modalities = manifest.modalities;
    } else {
      for (const auto& id : modalities) {
        const ModalitySpec* spec = manifest.find(id);
        if (!spec) throw Error(ErrorKind::validation, "config field 'modalities': unknown modality '" + id + "'");
        m.modalities.push_back(*spec);
      }
    }
    m.dim = dim;
    m.pool = parse_reduction(pool);
    m.hidden = hidden;
    m.num_classes = manifest.classes.size();
    m.dropout = dropout;
    m.prior = prior;
    m.text_cnn = text_cnn;
    return m;
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"peak_lr", c.peak_lr},
          {"warmup_epochs", c.warmup_epochs},
          {"min_lr", c.min_lr},
          {"weight_decay", c.weight_decay},
          {"pool", c.pool},
          {"dim", c.dim},
          {"modalities", c.modalities},
          {"hidden", c.hidden},
          {"dropout", c.dropout},
          {"prior", c.prior},
          {"balance_classes", c.balance_classes},
          {"baseline", c.baseline},
          {"kfold", c.kfold},
          {"importance", c.importance},
          {"text_cnn", {{"embed_dim", c.text_cnn.embed_dim}, {"widths", c.text_cnn.widths}, {"filters", c.text_cnn.filters}}}};
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& prefix = "") {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::validation, "config field '" + prefix + key + "': wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& prefix = "") {
  if (!j.is_object()) throw Error(ErrorKind::validation, "config" + (prefix.empty() ? std::string() : " field '" + prefix + "'") + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(ErrorKind::validation, "config field '" + prefix + key + "': unknown field");
  }
}

}  // namespace detail

/// Overlays the keys present in `j` onto `c`; unknown keys are rejected.
inline void apply_json(const nlohmann::json& j, RunConfig& c) {
  detail::reject_unknown(j, {"seed", "epochs", "batch_size", "peak_lr", "warmup_epochs", "min_lr", "weight_decay", "pool", "dim",
                             "modalities", "hidden", "dropout", "prior", "balance_classes", "baseline", "kfold", "importance",
                             "text_cnn"});
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "epochs", c.epochs);
  detail::read_field(j, "batch_size", c.batch_size);
  detail::read_field(j, "peak_lr", c.peak_lr);
  detail::read_field(j, "warmup_epochs", c.warmup_epochs);
  detail::read_field(j, "min_lr", c.min_lr);
  detail::read_field(j, "weight_decay", c.weight_decay);
  detail::read_field(j, "pool", c.pool);
  detail::read_field(j, "dim", c.dim);
  detail::read_field(j, "modalities", c.modalities);
  detail::read_field(j, "hidden", c.hidden);
  detail::read_field(j, "dropout", c.dropout);
  detail::read_field(j, "prior", c.prior);
  detail::read_field(j, "balance_classes", c.balance_classes);
  detail::read_field(j, "baseline", c.baseline);
  detail::read_field(j, "kfold", c.kfold);
  detail::read_field(j, "importance", c.importance);
  if (j.contains("text_cnn")) {
    const auto& tc = j["text_cnn"];
    detail::reject_unknown(tc, {"embed_dim", "widths", "filters"}, "text_cnn.");
    detail::read_field(tc, "embed_dim", c.text_cnn.embed_dim, "text_cnn.");
    detail::read_field(tc, "widths", c.text_cnn.widths, "text_cnn.");
    detail::read_field(tc, "filters", c.text_cnn.filters, "text_cnn.");
  }
}

inline nlohmann::json to_json(const SyntheticConfig& c) {
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& m : c.modalities) {
    nlohmann::json j{{"id", m.id}, {"kind", to_string(m.kind)}};
    j[m.kind == ModalityKind::dense ? "dim" : "vocab_size"] = m.size;
    j["min_instances"] = m.min_instances;
    j["max_instances"] = m.max_instances;
    j["missing_rate"] = m.missing_rate;
    j["max_length"] = m.max_length;
    j["cap"] = m.cap;
    mods.push_back(std::move(j));
  }
  return {{"seed", c.seed},         {"num_samples", c.num_samples}, {"num_classes", c.num_classes},
          {"task", to_string(c.task)}, {"noise", c.noise},           {"separation", c.separation},
          {"informative", c.informative}, {"modalities", mods}};
}

inline SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  detail::reject_unknown(j, {"seed", "num_samples", "num_classes", "task", "noise", "separation", "informative", "modalities"});
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "num_samples", c.num_samples);
  detail::read_field(j, "num_classes", c.num_classes);
  detail::read_field(j, "noise", c.noise);
  detail::read_field(j, "separation", c.separation);
  detail::read_field(j, "informative", c.informative);
  if (j.contains("task")) {
    std::string task;
    detail::read_field(j, "task", task);
    c.task = detail::parse_task(task, "config field 'task'");
  }
  if (!j.contains("modalities") || !j["modalities"].is_array()) {
    throw Error(ErrorKind::validation, "config field 'modalities': expected an array");
  }
  const auto& mods = j["modalities"];
  for (std::size_t i = 0; i < mods.size(); ++i) {
    const std::string prefix = "modalities[" + std::to_string(i) + "].";
    const auto& mj = mods[i];
    detail::reject_unknown(mj, {"id", "kind", "dim", "vocab_size", "min_instances", "max_instances", "missing_rate", "max_length", "cap"},
                           prefix);
    SyntheticModality m;
    detail::read_field(mj, "id", m.id, prefix);
    std::string kind = "dense";
    detail::read_field(mj, "kind", kind, prefix);
    m.kind = detail::parse_kind(kind, "config field '" + prefix + "kind'");
    detail::read_field(mj, m.kind == ModalityKind::dense ? "dim" : "vocab_size", m.size, prefix);
    detail::read_field(mj, "min_instances", m.min_instances, prefix);
    detail::read_field(mj, "max_instances", m.max_instances, prefix);
    detail::read_field(mj, "missing_rate", m.missing_rate, prefix);
    detail::read_field(mj, "max_length", m.max_length, prefix);
    detail::read_field(mj, "cap", m.cap, prefix);
    c.modalities.push_back(std::move(m));
  }
  return c;
}

}  // namespace mmsets
