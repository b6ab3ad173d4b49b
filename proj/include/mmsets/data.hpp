#pragma once

// On-disk dataset: manifest.json describing modalities/classes plus
// samples.jsonl holding one sample object per line. See docs/formats.md.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmsets/error.hpp"
#include "mmsets/sample.hpp"
#include "mmsets/tensor.hpp"

namespace mmsets {

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetManifest {
  int format_version = kDatasetFormatVersion;
  TaskKind task = TaskKind::single_label;
  std::vector<std::string> classes;
  std::vector<ModalitySpec> modalities;
  std::size_t sample_count = 0;

  const ModalitySpec* find(const std::string& id) const {
    for (const auto& m : modalities)
      if (m.id == id) return &m;
    return nullptr;
  }
  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

namespace detail {

[[noreturn]] inline void invalid(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::validation, where + ": " + what);
}

inline const nlohmann::json& field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) invalid(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) invalid(where, std::string("missing field '") + key + "'");
  return *it;
}

inline std::size_t positive_int(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) invalid(where, "expected a positive integer");
  return v.get<std::size_t>();
}

inline std::string text(const nlohmann::json& v, const std::string& where) {
  if (!v.is_string()) invalid(where, "expected a string");
  return v.get<std::string>();
}

inline TaskKind parse_task(const std::string& name, const std::string& where) {
  if (name == "single_label") return TaskKind::single_label;
  if (name == "multi_label") return TaskKind::multi_label;
  invalid(where, "unknown task '" + name + "' (expected single_label or multi_label)");
}

inline ModalityKind parse_kind(const std::string& name, const std::string& where) {
  if (name == "dense") return ModalityKind::dense;
  if (name == "index_sequence") return ModalityKind::index_sequence;
  invalid(where, "unknown modality kind '" + name + "' (expected dense or index_sequence)");
}

}  // namespace detail

inline nlohmann::json modality_to_json(const ModalitySpec& m) {
  nlohmann::json j{{"id", m.id}, {"kind", to_string(m.kind)}};
  j[m.kind == ModalityKind::dense ? "dim" : "vocab_size"] = m.size;
  j["max_instances"] = m.max_instances;
  return j;
}

inline ModalitySpec modality_from_json(const nlohmann::json& j, const std::string& where) {
  ModalitySpec m;
  m.id = detail::text(detail::field(j, "id", where), where + ".id");
  if (m.id.empty()) detail::invalid(where + ".id", "must be non-empty");
  m.kind = detail::parse_kind(detail::text(detail::field(j, "kind", where), where + ".kind"), where + ".kind");
  const char* size_key = m.kind == ModalityKind::dense ? "dim" : "vocab_size";
  m.size = detail::positive_int(detail::field(j, size_key, where), where + "." + size_key);
  if (j.contains("max_instances")) m.max_instances = detail::positive_int(j["max_instances"], where + ".max_instances");
  return m;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& spec : m.modalities) mods.push_back(modality_to_json(spec));
  return {{"format_version", m.format_version},
          {"task", to_string(m.task)},
          {"classes", m.classes},
          {"modalities", mods},
          {"sample_count", m.sample_count}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  const std::string where = "manifest";
  DatasetManifest m;
  const auto& version = detail::field(j, "format_version", where);
  if (!version.is_number_integer() || version.get<int>() != kDatasetFormatVersion) {
    detail::invalid(where + ".format_version", "unsupported version (expected " + std::to_string(kDatasetFormatVersion) + ")");
  }
  m.task = detail::parse_task(detail::text(detail::field(j, "task", where), where + ".task"), where + ".task");
  const auto& classes = detail::field(j, "classes", where);
  if (!classes.is_array() || classes.empty()) detail::invalid(where + ".classes", "expected a non-empty array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto name = detail::text(classes[i], where + ".classes[" + std::to_string(i) + "]");
    if (!seen.insert(name).second) detail::invalid(where + ".classes", "duplicate class '" + name + "'");
    m.classes.push_back(std::move(name));
  }
  const auto& mods = detail::field(j, "modalities", where);
  if (!mods.is_array() || mods.empty()) detail::invalid(where + ".modalities", "expected a non-empty array");
  seen.clear();
  for (std::size_t i = 0; i < mods.size(); ++i) {
    auto spec = modality_from_json(mods[i], where + ".modalities[" + std::to_string(i) + "]");
    if (!seen.insert(spec.id).second) detail::invalid(where + ".modalities", "duplicate modality id '" + spec.id + "'");
    m.modalities.push_back(std::move(spec));
  }
  const auto& count = detail::field(j, "sample_count", where);
  if (!count.is_number_integer() || count.get<std::int64_t>() < 0) {
    detail::invalid(where + ".sample_count", "expected a non-negative integer");
  }
  m.sample_count = count.get<std::size_t>();
  return m;
}

inline nlohmann::json sample_to_json(const Sample& s) {
  nlohmann::json instances = nlohmann::json::array();
  for (const auto& inst : s.instances) {
    nlohmann::json j{{"modality", inst.modality_id}};
    if (inst.is_dense()) j["values"] = inst.dense();
    else j["indices"] = inst.indices();
    instances.push_back(std::move(j));
  }
  nlohmann::json j{{"id", s.id}, {"labels", s.labels}, {"instances", std::move(instances)}};
  if (s.group) j["group"] = *s.group;
  return j;
}

/// Parses and validates one sample against the manifest.
inline Sample sample_from_json(const nlohmann::json& j, const DatasetManifest& manifest, const std::string& context) {
  Sample s;
  if (!j.is_object()) detail::invalid(context, "expected an object");
  s.id = detail::text(detail::field(j, "id", context), context + ".id");
  if (s.id.empty()) detail::invalid(context + ".id", "must be non-empty");
  const std::string where = "sample '" + s.id + "'";

  const auto& labels = detail::field(j, "labels", where);
  if (!labels.is_array() || labels.size() != manifest.classes.size()) {
    detail::invalid(where + ".labels", "expected an array of " + std::to_string(manifest.classes.size()) + " entries");
  }
  int positives = 0;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (!labels[c].is_number_integer() || (labels[c].get<int>() != 0 && labels[c].get<int>() != 1)) {
      detail::invalid(where + ".labels[" + std::to_string(c) + "]", "expected 0 or 1");
    }
    s.labels.push_back(labels[c].get<int>());
    positives += s.labels.back();
  }
  if (manifest.task == TaskKind::single_label && positives != 1) {
    detail::invalid(where + ".labels", "single-label sample must have exactly one positive label");
  }
  if (j.contains("group")) s.group = detail::text(j["group"], where + ".group");

  const auto& instances = detail::field(j, "instances", where);
  if (!instances.is_array() || instances.empty()) detail::invalid(where + ".instances", "expected a non-empty array");
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const std::string path = where + ".instances[" + std::to_string(i) + "]";
    const auto& item = instances[i];
    ModalityInstance inst;
    inst.modality_id = detail::text(detail::field(item, "modality", path), path + ".modality");
    const ModalitySpec* spec = manifest.find(inst.modality_id);
    if (!spec) detail::invalid(path + ".modality", "unknown modality '" + inst.modality_id + "'");
    if (spec->kind == ModalityKind::dense) {
      const auto& values = detail::field(item, "values", path);
      if (!values.is_array() || values.size() != spec->size) {
        detail::invalid(path + ".values", "expected " + std::to_string(spec->size) + " values for modality '" + spec->id + "'");
      }
      DensePayload payload;
      payload.reserve(values.size());
      for (const auto& v : values) {
        if (!v.is_number() || !std::isfinite(v.get<double>())) detail::invalid(path + ".values", "expected finite numbers");
        payload.push_back(v.get<double>());
      }
      inst.payload = std::move(payload);
    } else {
      const auto& indices = detail::field(item, "indices", path);
      if (!indices.is_array() || indices.empty()) detail::invalid(path + ".indices", "expected a non-empty array");
      IndexPayload payload;
      for (const auto& v : indices) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
            v.get<std::uint64_t>() >= static_cast<std::uint64_t>(spec->size)) {
          detail::invalid(path + ".indices",
                          "expected integers in [0," + std::to_string(spec->size) + ") for modality '" + spec->id + "'");
        }
        payload.push_back(v.get<std::int64_t>());
      }
      inst.payload = std::move(payload);
    }
    s.instances.push_back(std::move(inst));
  }
  return s;
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path, const std::filesystem::path& samples_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw Error(ErrorKind::io, "cannot open manifest " + manifest_path.string());
  Dataset ds;
  try {
    ds.manifest = manifest_from_json(nlohmann::json::parse(mf));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, "manifest " + manifest_path.string() + ": " + e.what());
  }
  std::ifstream sf(samples_path);
  if (!sf) throw Error(ErrorKind::io, "cannot open samples " + samples_path.string());
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(sf, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string context = samples_path.filename().string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::validation, context + ": " + e.what());
    }
    Sample s;
    try {
      s = sample_from_json(j, ds.manifest, context);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::validation, context + ": " + e.what());
    }
    if (!ids.insert(s.id).second) throw Error(ErrorKind::validation, context + ": duplicate sample id '" + s.id + "'");
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != ds.manifest.sample_count) {
    throw Error(ErrorKind::validation, "manifest declares " + std::to_string(ds.manifest.sample_count) + " samples, " +
                                           samples_path.string() + " holds " + std::to_string(ds.samples.size()));
  }
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  return load_dataset(dir / "manifest.json", dir / "samples.jsonl");
}

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  DatasetManifest manifest = ds.manifest;
  manifest.sample_count = ds.samples.size();
  {
    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw Error(ErrorKind::io, "cannot write " + (dir / "manifest.json").string());
    mf << manifest_to_json(manifest).dump(2) << '\n';
  }
  std::ofstream sf(dir / "samples.jsonl");
  if (!sf) throw Error(ErrorKind::io, "cannot write " + (dir / "samples.jsonl").string());
  for (const auto& s : ds.samples) sf << sample_to_json(s).dump() << '\n';
  if (!sf) throw Error(ErrorKind::io, "failed writing " + (dir / "samples.jsonl").string());
}

struct SyntheticModality {
  std::string id;
  ModalityKind kind = ModalityKind::dense;
  std::size_t size = 8;           // dim or vocab size
  std::size_t min_instances = 1;
  std::size_t max_instances = 1;  // cardinality drawn uniformly in [min, max]
  double missing_rate = 0.0;
  std::size_t max_length = 6;     // index sequences: length uniform in [1, max_length]
  std::size_t cap = 10;           // max_instances written to the manifest
};

/// Planted-importance generator: only `informative` carries class signal.
struct SyntheticConfig {
  std::vector<SyntheticModality> modalities;
  std::string informative;
  double noise = 1.0;
  double separation = 6.0;  // distance between class means
  std::size_t num_classes = 2;
  std::size_t num_samples = 1000;
  TaskKind task = TaskKind::single_label;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& what) {
      throw Error(ErrorKind::validation, "synthetic config field '" + field + "': " + what);
    };
    if (modalities.empty()) fail("modalities", "at least one modality is required");
    std::set<std::string> ids;
    const SyntheticModality* info = nullptr;
    for (std::size_t i = 0; i < modalities.size(); ++i) {
      const auto& m = modalities[i];
      const std::string f = "modalities[" + std::to_string(i) + "]";
      if (m.id.empty()) fail(f + ".id", "must be non-empty");
      if (!ids.insert(m.id).second) fail(f + ".id", "duplicate modality id '" + m.id + "'");
      if (m.size == 0) fail(f + (m.kind == ModalityKind::dense ? ".dim" : ".vocab_size"), "must be positive");
      if (m.kind == ModalityKind::index_sequence && m.size < 2) fail(f + ".vocab_size", "must be >= 2 (index 0 is padding)");
      if (m.min_instances == 0) fail(f + ".min_instances", "must be >= 1");
      if (m.min_instances > m.max_instances) fail(f + ".max_instances", "must be >= min_instances");
      if (!(m.missing_rate >= 0.0 && m.missing_rate <= 1.0)) fail(f + ".missing_rate", "must lie in [0,1]");
      if (m.max_length == 0) fail(f + ".max_length", "must be positive");
      if (m.cap == 0) fail(f + ".cap", "must be positive");
      if (m.id == informative) info = &m;
    }
    if (!info) fail("informative", "'" + informative + "' is not one of the modalities");
    if (info->kind != ModalityKind::dense) fail("informative", "informative modality must be dense");
    if (info->missing_rate != 0.0) fail("informative", "informative modality must have missing_rate 0");
    if (num_classes < 2) fail("num_classes", "must be >= 2");
    if (num_samples == 0) fail("num_samples", "must be positive");
    if (!(noise >= 0.0)) fail("noise", "must be >= 0");
    if (!(separation >= 4.0 * noise) || !(separation > 0.0)) fail("separation", "must be positive and >= 4 * noise");
    const bool axis_pair = task == TaskKind::single_label && num_classes == 2;
    if (!axis_pair && info->size < num_classes) fail("informative", "dense dimension must be >= num_classes");
  }
};

/// Class-conditional mean of the informative modality.
inline std::vector<double> synthetic_class_mean(const SyntheticConfig& cfg, std::size_t dim, const std::vector<int>& labels) {
  std::vector<double> mean(dim, 0.0);
  if (cfg.task == TaskKind::single_label && cfg.num_classes == 2) {
    mean[0] = (labels[1] == 1 ? 0.5 : -0.5) * cfg.separation;
    return mean;
  }
  const double offset = cfg.separation / std::sqrt(2.0);
  for (std::size_t c = 0; c < labels.size(); ++c)
    if (labels[c] == 1) mean[c] += offset;
  return mean;
}

inline Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Dataset ds;
  ds.manifest.task = cfg.task;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) ds.manifest.classes.push_back("class" + std::to_string(c));
  for (const auto& m : cfg.modalities) ds.manifest.modalities.push_back({m.id, m.kind, m.size, m.cap});

  const int width = static_cast<int>(std::to_string(cfg.num_samples - 1).size());
  for (std::size_t i = 0; i < cfg.num_samples; ++i) {
    Sample s;
    std::ostringstream id;
    id << 's' << std::string(static_cast<std::size_t>(width) - std::to_string(i).size(), '0') << i;
    s.id = id.str();
    s.labels.assign(cfg.num_classes, 0);
    if (cfg.task == TaskKind::single_label) {
      s.labels[i % cfg.num_classes] = 1;
    } else {
      for (auto& l : s.labels) l = uniform(rng) < 0.5;
    }
    for (const auto& m : cfg.modalities) {
      const bool informative = m.id == cfg.informative;
      if (!informative && uniform(rng) < m.missing_rate) continue;
      std::uniform_int_distribution<std::size_t> card(m.min_instances, m.max_instances);
      const std::size_t count = card(rng);
      for (std::size_t k = 0; k < count; ++k) {
        ModalityInstance inst{m.id, {}};
        if (m.kind == ModalityKind::dense) {
          DensePayload v = informative ? synthetic_class_mean(cfg, m.size, s.labels) : DensePayload(m.size, 0.0);
          for (double& x : v) x += cfg.noise * gauss(rng);
          inst.payload = std::move(v);
        } else {
          std::uniform_int_distribution<std::size_t> len(1, m.max_length);
          std::uniform_int_distribution<std::int64_t> token(1, static_cast<std::int64_t>(m.size) - 1);
          IndexPayload seq(len(rng));
          for (auto& t : seq) t = token(rng);
          inst.payload = std::move(seq);
        }
        s.instances.push_back(std::move(inst));
      }
    }
    std::shuffle(s.instances.begin(), s.instances.end(), rng);
    ds.samples.push_back(std::move(s));
  }
  ds.manifest.sample_count = ds.samples.size();
  return ds;
}

}  // namespace mmsets
