#pragma once

// Deep multi-modal set model: per-modality encoders into a shared width D,
// a permutation-invariant pooling over every encoded occurrence, and an MLP
// predictor over the pooled embedding. The fixed-slot concatenation baseline
// shares the encoders and predictor building blocks.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mmsets/error.hpp"
#include "mmsets/init.hpp"
#include "mmsets/sample.hpp"
#include "mmsets/tensor.hpp"

namespace mmsets {

struct TextCnnConfig {
  std::size_t embed_dim = 16;
  std::vector<std::size_t> widths{2, 3, 4};
  std::size_t filters = 16;

  std::size_t max_width() const { return *std::max_element(widths.begin(), widths.end()); }
  bool operator==(const TextCnnConfig&) const = default;
};

struct ModelConfig {
  std::vector<ModalitySpec> modalities;
  std::size_t dim = 32;
  Reduction pool = Reduction::max;
  std::vector<std::size_t> hidden{32};  // predictor hidden widths; output width is num_classes
  std::size_t num_classes = 2;
  double dropout = 0.25;
  double prior = 0.01;
  TextCnnConfig text_cnn;

  const ModalitySpec* find(const std::string& id) const {
    for (const auto& m : modalities)
      if (m.id == id) return &m;
    return nullptr;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::parameter, "model config: " + what); };
    if (modalities.empty()) fail("at least one modality is required");
    std::set<std::string> seen;
    for (const auto& m : modalities) {
      if (m.id.empty()) fail("modality id must be non-empty");
      if (!seen.insert(m.id).second) fail("duplicate modality id '" + m.id + "'");
      if (m.size == 0) fail("modality '" + m.id + "' needs a positive input dimension / vocabulary size");
      if (m.max_instances == 0) fail("modality '" + m.id + "' needs max_instances >= 1");
    }
    if (dim == 0) fail("dim must be positive");
    if (num_classes == 0) fail("num_classes must be positive");
    for (auto h : hidden)
      if (h == 0) fail("hidden layer widths must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0,1)");
    if (!(prior > 0.0 && prior < 1.0)) fail("prior must lie in (0,1)");
    if (text_cnn.embed_dim == 0 || text_cnn.filters == 0 || text_cnn.widths.empty()) fail("text_cnn sizes must be positive");
    for (auto w : text_cnn.widths)
      if (w == 0) fail("text_cnn widths must be positive");
  }
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

inline std::size_t parameter_count(std::span<const NamedParameter> params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng)
      : weight_(fan_in_uniform({in, out}, in, rng)), bias_(Tensor::zeros({out}, true)) {}

  Tensor forward(Tape& tape, const Tensor& x) const { return add_bias(tape, matmul(tape, x, weight_), bias_); }

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

  void collect(const std::string& prefix, std::vector<NamedParameter>& out) const {
    out.push_back({prefix + ".weight", weight_});
    out.push_back({prefix + ".bias", bias_});
  }

 private:
  Tensor weight_;
  Tensor bias_;
};

/// Fully-connected predictor with ELU between layers and linear output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, double prior, Rng& rng) {
    std::size_t width = in;
    for (auto h : hidden) {
      layers_.emplace_back(width, h, rng);
      width = h;
    }
    layers_.emplace_back(width, out, rng);
    auto b = layers_.back().bias().data_mut();
    auto init = init_classifier_bias(out, prior);
    std::copy(init.begin(), init.end(), b.begin());
  }

  Tensor forward(Tape& tape, Tensor x) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i].forward(tape, x);
      if (i + 1 < layers_.size()) x = elu(tape, x);
    }
    return x;
  }

  void collect(const std::string& prefix, std::vector<NamedParameter>& out) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + "." + std::to_string(i), out);
  }

 private:
  std::vector<Linear> layers_;
};

/// phi_i for one modality: dense -> FC + ELU + dropout; index sequence ->
/// lookup table, Text-CNN with max-over-time, projection + ELU + dropout.
class ModalityEncoder {
 public:
  ModalityEncoder(const ModalitySpec& spec, const ModelConfig& cfg, Rng& rng) : spec_(spec), dropout_(cfg.dropout) {
    if (spec.kind == ModalityKind::dense) {
      fc_ = Linear(spec.size, cfg.dim, rng);
      return;
    }
    const auto& tc = cfg.text_cnn;
    widths_ = tc.widths;
    table_ = fan_in_uniform({spec.size, tc.embed_dim}, tc.embed_dim, rng);
    for (auto w : tc.widths) kernels_.push_back(fan_in_uniform({w, tc.embed_dim, tc.filters}, w * tc.embed_dim, rng));
    fc_ = Linear(tc.widths.size() * tc.filters, cfg.dim, rng);
  }

  const ModalitySpec& spec() const { return spec_; }

  /// Encodes one occurrence to [1 x D].
  Tensor encode(Tape& tape, const ModalityInstance& inst, bool training, Rng& rng) const {
    const ModalityInstance* one[] = {&inst};
    return encode_block(tape, one, training, rng);
  }

  /// Encodes occurrences of this modality to [n x D], row i for instances[i].
  /// Row values are bit-identical to encoding each instance on its own.
  Tensor encode_block(Tape& tape, std::span<const ModalityInstance* const> instances, bool training, Rng& rng) const {
    if (instances.empty()) throw Error(ErrorKind::empty_set, "no instances to encode for modality '" + spec_.id + "'");
    for (const auto* inst : instances) check(*inst);
    if (spec_.kind == ModalityKind::dense) {
      std::vector<double> stacked;
      stacked.reserve(instances.size() * spec_.size);
      for (const auto* inst : instances) stacked.insert(stacked.end(), inst->dense().begin(), inst->dense().end());
      Tensor x({instances.size(), spec_.size}, std::move(stacked));
      return dropout(tape, elu(tape, fc_.forward(tape, x)), dropout_, training, rng);
    }
    std::vector<Tensor> rows;
    rows.reserve(instances.size());
    for (const auto* inst : instances) rows.push_back(encode_sequence(tape, inst->indices(), training, rng));
    return rows.size() == 1 ? rows.front() : stack_rows(tape, rows);
  }

  void collect(std::vector<NamedParameter>& out) const {
    const std::string prefix = "encoder." + spec_.id;
    if (spec_.kind == ModalityKind::dense) {
      fc_.collect(prefix + ".fc", out);
      return;
    }
    out.push_back({prefix + ".table", table_});
    for (std::size_t i = 0; i < kernels_.size(); ++i) out.push_back({prefix + ".conv" + std::to_string(widths_[i]), kernels_[i]});
    fc_.collect(prefix + ".proj", out);
  }

 private:
  void check(const ModalityInstance& inst) const {
    if (inst.modality_id != spec_.id) {
      throw Error(ErrorKind::contract, "instance of '" + inst.modality_id + "' passed to encoder '" + spec_.id + "'");
    }
    if (inst.is_dense() != (spec_.kind == ModalityKind::dense)) {
      throw Error(ErrorKind::dimension, "modality '" + spec_.id + "' expects " + to_string(spec_.kind) + " payloads");
    }
    if (inst.is_dense()) {
      if (inst.dense().size() != spec_.size) {
        throw Error(ErrorKind::dimension, "modality '" + spec_.id + "' expects dimension " + std::to_string(spec_.size) +
                                              ", got " + std::to_string(inst.dense().size()));
      }
      return;
    }
    if (inst.indices().empty()) throw Error(ErrorKind::empty_set, "empty index sequence for modality '" + spec_.id + "'");
    for (auto idx : inst.indices()) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= spec_.size) {
        throw Error(ErrorKind::contract, "modality '" + spec_.id + "': index " + std::to_string(idx) +
                                             " outside vocabulary [0," + std::to_string(spec_.size) + ")");
      }
    }
  }

  Tensor encode_sequence(Tape& tape, const IndexPayload& indices, bool training, Rng& rng) const {
    const std::size_t min_len = *std::max_element(widths_.begin(), widths_.end());
    IndexPayload padded = indices;
    if (padded.size() < min_len) padded.resize(min_len, 0);  // index 0 is the pad row
    Tensor emb = embedding(tape, table_, padded);
    std::vector<Tensor> pooled;
    pooled.reserve(kernels_.size());
    for (const auto& k : kernels_) pooled.push_back(reduce_over_set(tape, conv1d_over_sequence(tape, emb, k), Reduction::max).value);
    Tensor features = concat_cols(tape, pooled);
    return dropout(tape, elu(tape, fc_.forward(tape, features)), dropout_, training, rng);
  }

  ModalitySpec spec_;
  double dropout_;
  Linear fc_;
  Tensor table_;
  std::vector<std::size_t> widths_;
  std::vector<Tensor> kernels_;
};

struct SetElement {
  std::string modality_id;
  std::reference_wrapper<const ModalityInstance> instance;
};

/// Canonical set for a sample: instances of known modalities, each modality
/// uniformly subsampled without replacement to max_instances, ordered by
/// (modality_id, payload). Ordering by payload rather than arrival position
/// makes the result independent of how the sample stored its instances.
inline std::vector<SetElement> build_set(const Sample& sample, std::span<const ModalitySpec> specs, Rng& rng) {
  std::vector<const ModalitySpec*> ordered;
  for (const auto& s : specs) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::vector<SetElement> out;
  for (const auto* spec : ordered) {
    std::vector<const ModalityInstance*> group;
    for (const auto& inst : sample.instances)
      if (inst.modality_id == spec->id) group.push_back(&inst);
    if (group.empty()) continue;
    std::stable_sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->payload < b->payload; });
    if (group.size() > spec->max_instances) {
      std::vector<const ModalityInstance*> kept;
      kept.reserve(spec->max_instances);
      std::sample(group.begin(), group.end(), std::back_inserter(kept), spec->max_instances, rng);
      group = std::move(kept);
    }
    for (const auto* inst : group) out.push_back({spec->id, std::cref(*inst)});
  }
  if (out.empty()) throw Error(ErrorKind::empty_set, "sample '" + sample.id + "' has no instances of any known modality");
  return out;
}

struct ImportanceRecord {
  std::string sample_id;
  std::map<std::string, std::size_t> counts;
  std::map<std::string, double> fractions;

  bool operator==(const ImportanceRecord&) const = default;
};

/// Count per modality of the pooled dimensions it won; modalities of the model
/// absent from the sample are listed with count 0.
inline ImportanceRecord make_importance(const std::string& sample_id, std::span<const std::size_t> arg,
                                        std::span<const std::string> element_modalities,
                                        std::span<const ModalitySpec> specs) {
  ImportanceRecord rec{sample_id, {}, {}};
  for (const auto& s : specs) rec.counts[s.id] = 0;
  for (auto row : arg) ++rec.counts[element_modalities[row]];
  const double dim = static_cast<double>(arg.size());
  for (const auto& [id, n] : rec.counts) rec.fractions[id] = static_cast<double>(n) / dim;
  return rec;
}

/// Mean of per-sample importance fractions per modality.
inline std::map<std::string, double> aggregate_importance(std::span<const ImportanceRecord> records) {
  if (records.empty()) throw Error(ErrorKind::parameter, "aggregate_importance needs at least one record");
  std::map<std::string, double> total;
  for (const auto& r : records)
    for (const auto& [id, f] : r.fractions) total[id] += f;
  for (auto& [id, v] : total) v /= static_cast<double>(records.size());
  return total;
}

struct ForwardResult {
  Tensor logits;                                // [1 x C]
  Tensor encoded;                               // [S x D] canonical rows
  std::vector<std::string> element_modalities;  // modality of each canonical row
  std::optional<std::vector<std::size_t>> arg;  // pooled winner rows (max/min)
  std::optional<ImportanceRecord> importance;
};

class FusionModel {
 public:
  FusionModel(ModelConfig config, Rng& rng) : config_(std::move(config)) {
    config_.validate();
    for (const auto& spec : config_.modalities) encoders_.emplace_back(spec, config_, rng);
    predictor_ = Mlp(config_.dim, config_.hidden, config_.num_classes, config_.prior, rng);
  }

  const ModelConfig& config() const { return config_; }

  std::vector<NamedParameter> parameters() const {
    std::vector<NamedParameter> out;
    for (const auto& e : encoders_) e.collect(out);
    predictor_.collect("predictor", out);
    return out;
  }

  const ModalityEncoder& encoder(const std::string& id) const {
    for (const auto& e : encoders_)
      if (e.spec().id == id) return e;
    throw Error(ErrorKind::contract, "model has no modality '" + id + "'");
  }

  /// y = rho(psi({phi_i(x)})). The set is built with `rng`; dropout draws
  /// from the same generator when training.
  ForwardResult forward(Tape& tape, const Sample& sample, bool training, Rng& rng) const {
    auto elements = build_set(sample, config_.modalities, rng);
    ForwardResult result;
    std::vector<Tensor> blocks;
    std::size_t begin = 0;
    while (begin < elements.size()) {
      std::size_t end = begin;
      std::vector<const ModalityInstance*> group;
      while (end < elements.size() && elements[end].modality_id == elements[begin].modality_id) {
        group.push_back(&elements[end].instance.get());
        result.element_modalities.push_back(elements[end].modality_id);
        ++end;
      }
      blocks.push_back(encoder(elements[begin].modality_id).encode_block(tape, group, training, rng));
      begin = end;
    }
    result.encoded = blocks.size() == 1 ? blocks.front() : stack_rows(tape, blocks);
    Pooled pooled = reduce_over_set(tape, result.encoded, config_.pool);
    result.logits = predictor_.forward(tape, pooled.value);
    if (pooled.arg) {
      result.importance = make_importance(sample.id, *pooled.arg, result.element_modalities, config_.modalities);
      result.arg = std::move(pooled.arg);
    }
    return result;
  }

  Tensor logits(Tape& tape, const Sample& sample, bool training, Rng& rng) const {
    return forward(tape, sample, training, rng).logits;
  }

 private:
  ModelConfig config_;
  std::vector<ModalityEncoder> encoders_;
  Mlp predictor_;
};

/// Fixed-slot concatenation baseline: each modality owns `slots` blocks of
/// width D filled in arrival order, truncated when over and zero-filled when
/// short or missing.
class ConcatModel {
 public:
  ConcatModel(ModelConfig config, std::map<std::string, std::size_t> slots, Rng& rng)
      : config_(std::move(config)), slots_(std::move(slots)) {
    config_.validate();
    std::size_t width = 0;
    for (const auto& spec : config_.modalities) {
      auto it = slots_.find(spec.id);
      if (it == slots_.end() || it->second == 0) {
        throw Error(ErrorKind::parameter, "concat baseline needs a positive slot count for '" + spec.id + "'");
      }
      width += it->second * config_.dim;
      encoders_.emplace_back(spec, config_, rng);
    }
    predictor_ = Mlp(width, config_.hidden, config_.num_classes, config_.prior, rng);
  }

  const ModelConfig& config() const { return config_; }
  const std::map<std::string, std::size_t>& slots() const { return slots_; }

  std::size_t concat_width() const {
    std::size_t w = 0;
    for (const auto& spec : config_.modalities) w += slots_.at(spec.id) * config_.dim;
    return w;
  }

  std::vector<NamedParameter> parameters() const {
    std::vector<NamedParameter> out;
    for (const auto& e : encoders_) e.collect(out);
    predictor_.collect("predictor", out);
    return out;
  }

  /// X_C as [1 x sum(slots_i * D)].
  Tensor concat_features(Tape& tape, const Sample& sample, bool training, Rng& rng) const {
    std::vector<Tensor> parts;
    for (const auto& enc : encoders_) {
      const std::size_t slots = slots_.at(enc.spec().id);
      std::vector<const ModalityInstance*> group;
      for (const auto& inst : sample.instances)
        if (inst.modality_id == enc.spec().id && group.size() < slots) group.push_back(&inst);
      if (!group.empty()) {
        Tensor block = enc.encode_block(tape, group, training, rng);
        for (std::size_t r = 0; r < group.size(); ++r) parts.push_back(slice_rows(tape, block, r, 1));
      }
      for (std::size_t r = group.size(); r < slots; ++r) parts.push_back(Tensor::zeros({1, config_.dim}));
    }
    return concat_cols(tape, parts);
  }

  Tensor logits(Tape& tape, const Sample& sample, bool training, Rng& rng) const {
    return predictor_.forward(tape, concat_features(tape, sample, training, rng));
  }

 private:
  ModelConfig config_;
  std::map<std::string, std::size_t> slots_;
  std::vector<ModalityEncoder> encoders_;
  Mlp predictor_;
};

/// 1 slot for modalities that never occur more than once per sample,
/// max_instances for the rest.
inline std::map<std::string, std::size_t> default_concat_slots(std::span<const ModalitySpec> specs,
                                                               std::span<const Sample> samples) {
  std::map<std::string, std::size_t> slots;
  for (const auto& spec : specs) {
    std::size_t most = 0;
    for (const auto& s : samples) most = std::max(most, count_instances(s, spec.id));
    slots[spec.id] = most > 1 ? spec.max_instances : 1;
  }
  return slots;
}

}  // namespace mmsets
