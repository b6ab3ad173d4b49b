#pragma once

// Model checkpoints: one compact JSON document, see docs/formats.md.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmsets/data.hpp"
#include "mmsets/error.hpp"
#include "mmsets/fusion.hpp"

namespace mmsets {

inline constexpr std::string_view kCheckpointFormat = "mmsets-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// FNV-1a 64-bit, rendered as 16 lowercase hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : bytes) h = (h ^ ch) * 1099511628211ULL;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& m : cfg.modalities) mods.push_back(modality_to_json(m));
  return {{"modalities", mods},
          {"dim", cfg.dim},
          {"pool", to_string(cfg.pool)},
          {"hidden", cfg.hidden},
          {"num_classes", cfg.num_classes},
          {"dropout", cfg.dropout},
          {"prior", cfg.prior},
          {"text_cnn", {{"embed_dim", cfg.text_cnn.embed_dim}, {"widths", cfg.text_cnn.widths}, {"filters", cfg.text_cnn.filters}}}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  const auto& mods = detail::field(j, "modalities", "model");
  if (!mods.is_array()) detail::invalid("model.modalities", "expected an array");
  for (std::size_t i = 0; i < mods.size(); ++i) cfg.modalities.push_back(modality_from_json(mods[i], "model.modalities[" + std::to_string(i) + "]"));
  cfg.dim = detail::field(j, "dim", "model").get<std::size_t>();
  cfg.pool = parse_reduction(detail::field(j, "pool", "model").get<std::string>());
  cfg.hidden = detail::field(j, "hidden", "model").get<std::vector<std::size_t>>();
  cfg.num_classes = detail::field(j, "num_classes", "model").get<std::size_t>();
  cfg.dropout = detail::field(j, "dropout", "model").get<double>();
  cfg.prior = detail::field(j, "prior", "model").get<double>();
  const auto& tc = detail::field(j, "text_cnn", "model");
  cfg.text_cnn.embed_dim = detail::field(tc, "embed_dim", "model.text_cnn").get<std::size_t>();
  cfg.text_cnn.widths = detail::field(tc, "widths", "model.text_cnn").get<std::vector<std::size_t>>();
  cfg.text_cnn.filters = detail::field(tc, "filters", "model.text_cnn").get<std::size_t>();
  cfg.validate();
  return cfg;
}

using AnyModel = std::variant<FusionModel, ConcatModel>;

struct Checkpoint {
  std::string config_hash;
  TaskKind task = TaskKind::single_label;
  std::vector<std::string> classes;
  std::uint64_t eval_seed = 0;  // seeds eval-time subsampling
  AnyModel model;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json model;
  std::vector<NamedParameter> params;
  std::visit(
      [&](const auto& m) {
        model = model_config_to_json(m.config());
        params = m.parameters();
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, ConcatModel>) {
          model["kind"] = "concat";
          model["slots"] = m.slots();
        } else {
          model["kind"] = "set";
        }
      },
      ck.model);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name},
                       {"shape", p.tensor.shape()},
                       {"data", std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())}});
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"config_hash", ck.config_hash},
          {"task", to_string(ck.task)},
          {"classes", ck.classes},
          {"eval_seed", ck.eval_seed},
          {"model", model},
          {"parameters", tensors}};
}

/// Copies stored tensors into a freshly constructed model of the same shape.
inline void assign_parameters(std::vector<NamedParameter> params, const nlohmann::json& tensors) {
  if (!tensors.is_array() || tensors.size() != params.size()) {
    throw Error(ErrorKind::validation, "checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                                           std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    const auto name = t.at("name").get<std::string>();
    if (name != params[i].name) {
      throw Error(ErrorKind::validation, "checkpoint tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                                             params[i].name + "'");
    }
    if (t.at("shape").get<Shape>() != params[i].tensor.shape()) {
      throw Error(ErrorKind::validation, "checkpoint tensor '" + name + "' has the wrong shape");
    }
    auto values = t.at("data").get<std::vector<double>>();
    auto dst = params[i].tensor.data_mut();
    if (values.size() != dst.size()) throw Error(ErrorKind::validation, "checkpoint tensor '" + name + "' has the wrong size");
    std::copy(values.begin(), values.end(), dst.begin());
  }
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat || j.at("version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorKind::validation, "not a version " + std::to_string(kCheckpointVersion) + " checkpoint");
    }
    const auto& model = j.at("model");
    ModelConfig cfg = model_config_from_json(model);
    Rng scratch(0);
    const auto kind = model.at("kind").get<std::string>();
    auto build = [&]() -> AnyModel {
      if (kind == "set") return FusionModel(cfg, scratch);
      if (kind == "concat") return ConcatModel(cfg, model.at("slots").get<std::map<std::string, std::size_t>>(), scratch);
      throw Error(ErrorKind::validation, "unknown model kind '" + kind + "'");
    };
    Checkpoint ck{j.at("config_hash").get<std::string>(),
                  detail::parse_task(j.at("task").get<std::string>(), "checkpoint.task"),
                  j.at("classes").get<std::vector<std::string>>(), j.at("eval_seed").get<std::uint64_t>(), build()};
    std::visit([&](auto& m) { assign_parameters(m.parameters(), j.at("parameters")); }, ck.model);
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << checkpoint_to_json(ck).dump() << '\n';
  if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace mmsets
