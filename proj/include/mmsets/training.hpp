#pragma once

// Training recipe: linear warmup + cosine annealing, AdamW with decoupled
// weight decay, class-weighted sigmoid cross-entropy and a minibatch loop
// that accumulates per-sample gradients over ragged sets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmsets/error.hpp"
#include "mmsets/fusion.hpp"
#include "mmsets/init.hpp"
#include "mmsets/sample.hpp"
#include "mmsets/tensor.hpp"

namespace mmsets {

struct ScheduleConfig {
  double warmup_epochs = 5.0;
  double peak_lr = 1e-3;
  double total_epochs = 25.0;
  double min_lr = 0.0;

  void validate() const {
    if (!(warmup_epochs >= 0.0)) throw Error(ErrorKind::parameter, "schedule: warmup_epochs must be >= 0");
    if (!(total_epochs > 0.0)) throw Error(ErrorKind::parameter, "schedule: total_epochs must be positive");
    if (!(warmup_epochs < total_epochs)) throw Error(ErrorKind::parameter, "schedule: warmup_epochs must be < total_epochs");
    if (!(min_lr >= 0.0)) throw Error(ErrorKind::parameter, "schedule: min_lr must be >= 0");
    if (!(peak_lr >= min_lr)) throw Error(ErrorKind::parameter, "schedule: peak_lr must be >= min_lr");
  }

  /// Learning rate at fractional epoch `progress` in [0, total_epochs].
  double lr_at(double progress) const {
    validate();
    if (!(progress >= 0.0 && progress <= total_epochs)) {
      throw Error(ErrorKind::parameter, "schedule progress " + std::to_string(progress) + " outside [0, " +
                                            std::to_string(total_epochs) + "]");
    }
    if (progress < warmup_epochs) return peak_lr * progress / warmup_epochs;
    const double t = (progress - warmup_epochs) / (total_epochs - warmup_epochs);
    return min_lr + 0.5 * (peak_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * t));
  }
};

struct AdamWState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One AdamW update: theta <- theta * (1 - lr*wd), then the bias-corrected
/// Adam step. Gradients are read from each parameter's grad buffer.
inline void adamw_step(std::span<NamedParameter> params, AdamWState& state, double lr) {
  if (!(lr >= 0.0)) throw Error(ErrorKind::parameter, "learning rate must be >= 0");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.tensor.numel(), 0.0);
      state.second_moment.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorKind::dimension, "optimizer state tracks " + std::to_string(state.first_moment.size()) +
                                          " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor;
    if (state.first_moment[i].size() != p.numel()) {
      throw Error(ErrorKind::dimension, "optimizer state shape mismatch for '" + params[i].name + "'");
    }
    if (!p.has_grad()) continue;
    for (double g : p.grad())
      if (!std::isfinite(g)) throw Error(ErrorKind::numeric, "non-finite gradient in parameter '" + params[i].name + "'");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  const double decay = 1.0 - lr * state.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor;
    auto theta = p.data_mut();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const bool has_grad = p.has_grad();
    auto grad = p.grad();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = has_grad ? grad[j] : 0.0;
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      theta[j] *= decay;
      theta[j] -= lr * (m[j] / bias1) / (std::sqrt(v[j] / bias2) + state.eps);
    }
  }
}

/// Class-weighted sigmoid cross-entropy averaged over classes:
/// sum_c w_c * (softplus(z_c) - t_c * z_c) / C.
inline Tensor weighted_sigmoid_ce(Tape& tape, const Tensor& logits, std::span<const int> targets,
                                  std::span<const double> weights) {
  const std::size_t classes = logits.numel();
  if (targets.size() != classes || weights.size() != classes) {
    throw Error(ErrorKind::dimension, "loss: logits " + shape_string(logits.shape()) + " vs " +
                                          std::to_string(targets.size()) + " targets / " + std::to_string(weights.size()) +
                                          " weights");
  }
  for (int t : targets)
    if (t != 0 && t != 1) throw Error(ErrorKind::contract, "loss targets must be 0 or 1, got " + std::to_string(t));
  auto z = logits.data();
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double softplus = std::max(z[c], 0.0) + std::log1p(std::exp(-std::abs(z[c])));
    total += weights[c] * (softplus - targets[c] * z[c]);
  }
  const double inv_c = 1.0 / static_cast<double>(classes);
  Tensor loss = Tensor::scalar(total * inv_c, tape.tracks({logits}));
  if (loss.requires_grad()) {
    tape.record(loss, [logits, loss, t = std::vector<int>(targets.begin(), targets.end()),
                       w = std::vector<double>(weights.begin(), weights.end()), inv_c]() mutable {
      const double g = loss.grad()[0];
      auto z = logits.data();
      auto dz = logits.grad_mut();
      for (std::size_t c = 0; c < dz.size(); ++c) dz[c] += g * w[c] * (stable_sigmoid(z[c]) - t[c]) * inv_c;
    });
  }
  return loss;
}

/// Inverse square root of per-class positive rate, normalised to mean 1.
/// A class with no positives is treated as having frequency 1/N.
inline std::vector<double> class_weights(std::span<const Sample> samples, std::size_t num_classes) {
  if (samples.empty()) throw Error(ErrorKind::parameter, "class_weights needs at least one sample");
  std::vector<double> weights(num_classes, 0.0);
  const double n = static_cast<double>(samples.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    double positives = 0.0;
    for (const auto& s : samples) positives += s.labels.at(c) == 1;
    weights[c] = 1.0 / std::sqrt(std::max(positives, 1.0) / n);
  }
  const double mean = std::accumulate(weights.begin(), weights.end(), 0.0) / static_cast<double>(num_classes);
  for (double& w : weights) w /= mean;
  return weights;
}

/// Deterministic seed for a (base seed, epoch, sample) triple.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t epoch, std::string_view key) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : key) h = (h ^ ch) * 1099511628211ULL;
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(base) ^ epoch) ^ h);
}

/// Epoch index reserved for evaluation-time set construction.
inline constexpr std::uint64_t kEvalEpoch = ~std::uint64_t{0};

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 25;
  std::size_t batch_size = 32;
  double peak_lr = 1e-3;
  double warmup_epochs = 5.0;
  double min_lr = 0.0;
  double weight_decay = 0.01;
  bool balance_classes = false;
  TaskKind task = TaskKind::single_label;

  ScheduleConfig schedule() const { return {warmup_epochs, peak_lr, static_cast<double>(epochs), min_lr}; }

  void validate() const {
    if (epochs == 0) throw Error(ErrorKind::parameter, "train config: epochs must be positive");
    if (batch_size == 0) throw Error(ErrorKind::parameter, "train config: batch_size must be positive");
    if (!(weight_decay >= 0.0)) throw Error(ErrorKind::parameter, "train config: weight_decay must be >= 0");
    schedule().validate();
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;  // single-label: argmax hit rate; multi-label: exact-match rate
};

/// Class prediction from scores: argmax for single-label, 0.5 threshold per
/// class for multi-label.
inline std::vector<int> decide(std::span<const double> probabilities, TaskKind task) {
  std::vector<int> out(probabilities.size(), 0);
  if (task == TaskKind::single_label) {
    out[static_cast<std::size_t>(std::max_element(probabilities.begin(), probabilities.end()) - probabilities.begin())] = 1;
  } else {
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = probabilities[c] >= 0.5;
  }
  return out;
}

/// Trains in place. Each epoch e runs at the constant rate lr_at(e + 0.5).
template <typename Model>
std::vector<EpochLog> train(Model& model, std::span<const Sample> dataset, const TrainConfig& config,
                            const std::function<void(const EpochLog&)>& on_epoch = {}) {
  config.validate();
  if (dataset.empty()) throw Error(ErrorKind::parameter, "cannot train on an empty dataset");
  const std::size_t classes = model.config().num_classes;
  for (const auto& s : dataset) {
    if (s.labels.size() != classes) {
      throw Error(ErrorKind::validation, "sample '" + s.id + "' has " + std::to_string(s.labels.size()) +
                                             " labels, model predicts " + std::to_string(classes));
    }
  }
  const std::vector<double> weights =
      config.balance_classes ? class_weights(dataset, classes) : std::vector<double>(classes, 1.0);
  const ScheduleConfig schedule = config.schedule();
  auto params = model.parameters();
  for (auto& p : params) p.tensor.zero_grad();
  AdamWState optimizer;
  optimizer.weight_decay = config.weight_decay;

  std::vector<std::size_t> order(dataset.size());
  std::vector<EpochLog> history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochLog log{epoch, schedule.lr_at(static_cast<double>(epoch) + 0.5), 0.0, 0.0};
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(config.seed, epoch, "shuffle"));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    std::size_t hits = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const Sample& sample = dataset[order[i]];
        Rng rng(mix_seed(config.seed, epoch, sample.id));
        Tape tape;
        Tensor logits = model.logits(tape, sample, true, rng);
        Tensor loss = weighted_sigmoid_ce(tape, logits, sample.labels, weights);
        if (!std::isfinite(loss.item())) {
          throw Error(ErrorKind::numeric, "non-finite loss at epoch " + std::to_string(epoch) + ", sample '" + sample.id + "'");
        }
        tape.backward(scale(tape, loss, inv_batch));
        log.loss += loss.item();
        std::vector<double> probs(classes);
        for (std::size_t c = 0; c < classes; ++c) probs[c] = stable_sigmoid(logits.data()[c]);
        hits += decide(probs, config.task) == sample.labels;
      }
      adamw_step(params, optimizer, log.lr);
      for (auto& p : params) p.tensor.zero_grad();
    }
    log.loss /= static_cast<double>(dataset.size());
    log.accuracy = static_cast<double>(hits) / static_cast<double>(dataset.size());
    history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return history;
}

/// Per-class sigmoid probabilities in eval mode.
template <typename Model>
std::vector<double> predict_probabilities(const Model& model, const Sample& sample, std::uint64_t seed) {
  Tape tape(false);
  Rng rng(mix_seed(seed, kEvalEpoch, sample.id));
  Tensor logits = model.logits(tape, sample, false, rng);
  std::vector<double> probs(logits.numel());
  for (std::size_t c = 0; c < probs.size(); ++c) probs[c] = stable_sigmoid(logits.data()[c]);
  return probs;
}

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

/// Shuffled k-way partition; the first n % k folds hold one extra sample.
inline std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::parameter, "k-fold needs k >= 2, got " + std::to_string(k));
  if (n < k) {
    throw Error(ErrorKind::parameter, "dataset of " + std::to_string(n) + " samples is smaller than k=" + std::to_string(k));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0, "kfold"));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Fold> folds(k);
  std::size_t cursor = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].eval.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                         order.begin() + static_cast<std::ptrdiff_t>(cursor + size));
    cursor += size;
  }
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].eval.begin(), folds[g].eval.end());
    std::sort(folds[f].eval.begin(), folds[f].eval.end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

}  // namespace mmsets
