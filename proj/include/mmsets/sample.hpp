#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mmsets/error.hpp"

namespace mmsets {

enum class ModalityKind { dense, index_sequence };

inline std::string to_string(ModalityKind kind) {
  return kind == ModalityKind::dense ? "dense" : "index_sequence";
}

/// One feature modality. `size` is the input dimension for dense modalities
/// and the vocabulary size for index sequences.
struct ModalitySpec {
  std::string id;
  ModalityKind kind = ModalityKind::dense;
  std::size_t size = 1;
  std::size_t max_instances = 10;

  bool operator==(const ModalitySpec&) const = default;
};

using DensePayload = std::vector<double>;
using IndexPayload = std::vector<std::int64_t>;

/// A single occurrence of one modality within a sample.
struct ModalityInstance {
  std::string modality_id;
  std::variant<DensePayload, IndexPayload> payload;

  bool is_dense() const { return std::holds_alternative<DensePayload>(payload); }
  const DensePayload& dense() const { return std::get<DensePayload>(payload); }
  const IndexPayload& indices() const { return std::get<IndexPayload>(payload); }

  bool operator==(const ModalityInstance&) const = default;
};

struct Sample {
  std::string id;
  std::vector<ModalityInstance> instances;  // unordered; any modality may occur 0..n times
  std::vector<int> labels;                  // binary, one entry per class
  std::optional<std::string> group;         // optional evaluation grouping key

  bool operator==(const Sample&) const = default;
};

enum class TaskKind { single_label, multi_label };

inline std::string to_string(TaskKind kind) { return kind == TaskKind::single_label ? "single_label" : "multi_label"; }

inline std::size_t count_instances(const Sample& sample, const std::string& modality_id) {
  std::size_t n = 0;
  for (const auto& inst : sample.instances) n += inst.modality_id == modality_id;
  return n;
}

/// Index of the single positive label; throws unless exactly one label is set.
inline std::size_t label_class(const Sample& sample) {
  std::optional<std::size_t> found;
  for (std::size_t c = 0; c < sample.labels.size(); ++c) {
    if (sample.labels[c] == 1) {
      if (found) throw Error(ErrorKind::contract, "sample '" + sample.id + "' has more than one positive label");
      found = c;
    }
  }
  if (!found) throw Error(ErrorKind::contract, "sample '" + sample.id + "' has no positive label");
  return *found;
}

}  // namespace mmsets
