#pragma once

// Dense fp64 tensors with a tape-based reverse-mode autodiff.
//
// A Tensor is a shared handle: copies alias the same storage, as in most
// autograd libraries. Use clone() for a detached deep copy. Operations take
// the Tape they record onto as their first argument; a non-recording tape
// (Tape{false}) evaluates without retaining any backward state, and never
// touches the storage of its inputs, so frozen parameters may be shared by
// concurrent read-only evaluations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmsets/error.hpp"

namespace mmsets {

using Rng = std::mt19937_64;
using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (shape.empty()) throw Error(ErrorKind::dimension, "tensor shape must have rank >= 1");
    for (auto extent : shape) {
      if (extent == 0) throw Error(ErrorKind::dimension, "tensor extents must be positive, got " + shape_string(shape));
    }
    if (shape_numel(shape) != data.size()) {
      throw Error(ErrorKind::dimension, "shape " + shape_string(shape) + " does not hold " +
                                            std::to_string(data.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) { return Tensor({1}, {value}, requires_grad); }

  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false) {
    if (rows.empty() || rows.front().empty()) throw Error(ErrorKind::dimension, "matrix literal must be non-empty");
    std::vector<double> data;
    for (const auto& row : rows) {
      if (row.size() != rows.front().size()) throw Error(ErrorKind::dimension, "ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({rows.size(), rows.front().size()}, std::move(data), requires_grad);
  }

  static Tensor row(std::vector<double> values, bool requires_grad = false) {
    auto n = values.size();
    return Tensor({1, n}, std::move(values), requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> data_mut() { return node_->data; }
  double item() const {
    if (numel() != 1) throw Error(ErrorKind::contract, "item() on tensor of shape " + shape_string(shape()));
    return node_->data.front();
  }
  double operator()(std::size_t i, std::size_t j) const { return node_->data[i * node_->shape[1] + j]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  /// Gradient buffer, allocated as zeros on first access.
  std::span<double> grad_mut() const {
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
    return node_->grad;
  }
  void zero_grad() const {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  Tensor clone() const { return Tensor(node_->shape, node_->data, node_->requires_grad); }

 private:
  struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Node> node_;
};

/// Ordered record of differentiable operations.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// True when an op over `inputs` must be recorded.
  bool tracks(std::initializer_list<std::reference_wrapper<const Tensor>> inputs) const {
    if (!recording_) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  }

  void record(Tensor output, std::function<void()> backward_rule) {
    entries_.push_back({std::move(output), std::move(backward_rule)});
  }

  /// Populates d(loss)/d(leaf) into every reachable requires_grad leaf.
  /// Intermediate gradients are reset on each call, leaf gradients accumulate.
  void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw Error(ErrorKind::contract, "backward requires a scalar loss, got " +
                                           (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
    }
    if (!loss.requires_grad()) throw Error(ErrorKind::contract, "loss was not produced on a recording tape");
    bool on_tape = false;
    for (auto& entry : entries_) {
      auto g = entry.output.grad_mut();
      std::fill(g.begin(), g.end(), 0.0);
      on_tape = on_tape || entry.output.same_storage(loss);
    }
    Tensor seed = loss;
    if (!on_tape) {
      // A requires_grad leaf used directly as the loss.
      seed.grad_mut()[0] += 1.0;
      return;
    }
    seed.grad_mut()[0] = 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward_rule();
  }

 private:
  struct Entry {
    Tensor output;
    std::function<void()> backward_rule;
  };
  bool recording_;
  std::vector<Entry> entries_;
};

namespace detail {

inline void require_rank2(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw Error(ErrorKind::dimension, std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
  }
}

inline void accumulate(const Tensor& target, std::span<const double> delta) {
  auto g = target.grad_mut();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace detail

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t n = a.extent(0), k = a.extent(1), m = b.extent(1);
  if (b.extent(0) != k) {
    throw Error(ErrorKind::dimension,
                "matmul inner dimensions differ: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += aip * brow[j];
    }
  }
  Tensor result({n, m}, std::move(out), tape.tracks({a, b}));
  if (result.requires_grad()) {
    tape.record(result, [a, b, result, n, k, m]() mutable {
      auto dC = result.grad();
      if (a.requires_grad()) {
        auto dA = a.grad_mut();
        auto B = b.data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += dC[i * m + j] * B[p * m + j];
            dA[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto dB = b.grad_mut();
        auto A = a.data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) dB[p * m + j] += aip * dC[i * m + j];
          }
      }
    });
  }
  return result;
}

/// x[n x m] + bias broadcast over rows; bias holds m values.
inline Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  detail::require_rank2(x, "add_bias");
  const std::size_t n = x.extent(0), m = x.extent(1);
  if (bias.numel() != m) {
    throw Error(ErrorKind::dimension,
                "add_bias: bias " + shape_string(bias.shape()) + " does not match " + shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += b[j];
  Tensor result(x.shape(), std::move(out), tape.tracks({x, bias}));
  if (result.requires_grad()) {
    tape.record(result, [x, bias, result, n, m]() mutable {
      auto g = result.grad();
      if (x.requires_grad()) detail::accumulate(x, g);
      if (bias.requires_grad()) {
        auto db = bias.grad_mut();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) db[j] += g[i * m + j];
      }
    });
  }
  return result;
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::dimension, "add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor result(a.shape(), std::move(out), tape.tracks({a, b}));
  if (result.requires_grad()) {
    tape.record(result, [a, b, result]() mutable {
      if (a.requires_grad()) detail::accumulate(a, result.grad());
      if (b.requires_grad()) detail::accumulate(b, result.grad());
    });
  }
  return result;
}

/// Elementwise product.
inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::dimension, "mul: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor result(a.shape(), std::move(out), tape.tracks({a, b}));
  if (result.requires_grad()) {
    tape.record(result, [a, b, result]() mutable {
      auto g = result.grad();
      if (a.requires_grad()) {
        auto da = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a.data()[i];
      }
    });
  }
  return result;
}

inline Tensor scale(Tape& tape, const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  Tensor result(x.shape(), std::move(out), tape.tracks({x}));
  if (result.requires_grad()) {
    tape.record(result, [x, result, factor]() mutable {
      auto g = result.grad();
      auto dx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
    });
  }
  return result;
}

/// Sum of all elements, as a [1] tensor.
inline Tensor sum(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = Tensor::scalar(total, tape.tracks({x}));
  if (result.requires_grad()) {
    tape.record(result, [x, result]() mutable {
      const double g = result.grad()[0];
      for (double& d : x.grad_mut()) d += g;
    });
  }
  return result;
}

inline Tensor elu(Tape& tape, const Tensor& x, double alpha = 1.0) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : alpha * std::expm1(in[i]);
  Tensor result(x.shape(), std::move(out), tape.tracks({x}));
  if (result.requires_grad()) {
    tape.record(result, [x, result, alpha]() mutable {
      auto g = result.grad();
      auto in = x.data();
      auto dx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (in[i] > 0.0 ? 1.0 : alpha * std::exp(in[i]));
    });
  }
  return result;
}

inline double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Tensor sigmoid(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(x.data()[i]);
  Tensor result(x.shape(), std::move(out), tape.tracks({x}));
  if (result.requires_grad()) {
    tape.record(result, [x, result]() mutable {
      auto g = result.grad();
      auto s = result.data();
      auto dx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * s[i] * (1.0 - s[i]);
    });
  }
  return result;
}

/// Inverted dropout: survivors are scaled by 1/(1-p) in training, eval is identity.
inline Tensor dropout(Tape& tape, const Tensor& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorKind::parameter, "dropout probability must lie in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = uniform(rng) < p ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  Tensor result(x.shape(), std::move(out), tape.tracks({x}));
  if (result.requires_grad()) {
    tape.record(result, [x, result, mask = std::move(mask)]() mutable {
      auto g = result.grad();
      auto dx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
    });
  }
  return result;
}

enum class Reduction { sum, max, min, mean };

inline std::string to_string(Reduction mode) {
  switch (mode) {
    case Reduction::sum: return "sum";
    case Reduction::max: return "max";
    case Reduction::min: return "min";
    case Reduction::mean: return "mean";
  }
  return "?";
}

inline Reduction parse_reduction(std::string_view name) {
  if (name == "sum") return Reduction::sum;
  if (name == "max") return Reduction::max;
  if (name == "min") return Reduction::min;
  if (name == "mean") return Reduction::mean;
  throw Error(ErrorKind::parameter, "unknown pooling mode '" + std::string(name) + "' (expected sum, max, min or mean)");
}

inline bool is_extremum(Reduction mode) { return mode == Reduction::max || mode == Reduction::min; }

struct Pooled {
  Tensor value;                                 // [1 x D]
  std::optional<std::vector<std::size_t>> arg;  // per-dimension winning row, max/min only
};

/// Reduces the S rows of `elements` in their given order. Ties on max/min
/// resolve to the lowest row index.
inline Pooled reduce_over_set(Tape& tape, const Tensor& elements, Reduction mode) {
  detail::require_rank2(elements, "reduce_over_set");
  const std::size_t rows = elements.extent(0), cols = elements.extent(1);
  auto in = elements.data();
  std::vector<double> out(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(cols));
  std::optional<std::vector<std::size_t>> arg;
  if (is_extremum(mode)) {
    arg.emplace(cols, 0);
    const bool want_max = mode == Reduction::max;
    for (std::size_t r = 1; r < rows; ++r)
      for (std::size_t d = 0; d < cols; ++d) {
        const double v = in[r * cols + d];
        if (want_max ? v > out[d] : v < out[d]) {
          out[d] = v;
          (*arg)[d] = r;
        }
      }
  } else {
    for (std::size_t r = 1; r < rows; ++r)
      for (std::size_t d = 0; d < cols; ++d) out[d] += in[r * cols + d];
    if (mode == Reduction::mean)
      for (double& v : out) v /= static_cast<double>(rows);
  }
  Tensor result({1, cols}, std::move(out), tape.tracks({elements}));
  if (result.requires_grad()) {
    tape.record(result, [elements, result, arg, mode, rows, cols]() mutable {
      auto g = result.grad();
      auto dx = elements.grad_mut();
      if (arg) {
        for (std::size_t d = 0; d < cols; ++d) dx[(*arg)[d] * cols + d] += g[d];
        return;
      }
      const double w = mode == Reduction::mean ? 1.0 / static_cast<double>(rows) : 1.0;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t d = 0; d < cols; ++d) dx[r * cols + d] += g[d] * w;
    });
  }
  return {std::move(result), std::move(arg)};
}

/// Valid-mode convolution across sequence positions.
/// emb: [L x E], kernels: [w x E x F] -> [(L-w+1) x F].
inline Tensor conv1d_over_sequence(Tape& tape, const Tensor& emb, const Tensor& kernels) {
  detail::require_rank2(emb, "conv1d_over_sequence");
  if (kernels.rank() != 3 || kernels.extent(1) != emb.extent(1)) {
    throw Error(ErrorKind::dimension, "conv1d_over_sequence: kernels " + shape_string(kernels.shape()) +
                                          " incompatible with input " + shape_string(emb.shape()));
  }
  const std::size_t len = emb.extent(0), width = kernels.extent(0), e_dim = kernels.extent(1),
                    filters = kernels.extent(2);
  if (len < width) {
    throw Error(ErrorKind::contract, "sequence too short: length " + std::to_string(len) + " < kernel width " +
                                         std::to_string(width));
  }
  const std::size_t positions = len - width + 1;
  std::vector<double> out(positions * filters, 0.0);
  auto X = emb.data();
  auto K = kernels.data();
  for (std::size_t t = 0; t < positions; ++t) {
    double* o = out.data() + t * filters;
    for (std::size_t j = 0; j < width; ++j)
      for (std::size_t e = 0; e < e_dim; ++e) {
        const double x = X[(t + j) * e_dim + e];
        const double* k = K.data() + (j * e_dim + e) * filters;
        for (std::size_t f = 0; f < filters; ++f) o[f] += x * k[f];
      }
  }
  Tensor result({positions, filters}, std::move(out), tape.tracks({emb, kernels}));
  if (result.requires_grad()) {
    tape.record(result, [emb, kernels, result, positions, width, e_dim, filters]() mutable {
      auto g = result.grad();
      auto X = emb.data();
      auto K = kernels.data();
      if (emb.requires_grad()) {
        auto dX = emb.grad_mut();
        for (std::size_t t = 0; t < positions; ++t)
          for (std::size_t j = 0; j < width; ++j)
            for (std::size_t e = 0; e < e_dim; ++e) {
              double acc = 0.0;
              for (std::size_t f = 0; f < filters; ++f) acc += g[t * filters + f] * K[(j * e_dim + e) * filters + f];
              dX[(t + j) * e_dim + e] += acc;
            }
      }
      if (kernels.requires_grad()) {
        auto dK = kernels.grad_mut();
        for (std::size_t t = 0; t < positions; ++t)
          for (std::size_t j = 0; j < width; ++j)
            for (std::size_t e = 0; e < e_dim; ++e) {
              const double x = X[(t + j) * e_dim + e];
              for (std::size_t f = 0; f < filters; ++f) dK[(j * e_dim + e) * filters + f] += x * g[t * filters + f];
            }
      }
    });
  }
  return result;
}

/// Row lookup: table [V x E], indices in [0,V) -> [L x E].
inline Tensor embedding(Tape& tape, const Tensor& table, std::span<const std::int64_t> indices) {
  detail::require_rank2(table, "embedding");
  if (indices.empty()) throw Error(ErrorKind::empty_set, "embedding lookup with no indices");
  const std::size_t vocab = table.extent(0), width = table.extent(1);
  std::vector<double> out;
  out.reserve(indices.size() * width);
  for (auto idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= vocab) {
      throw Error(ErrorKind::contract, "index " + std::to_string(idx) + " outside vocabulary of size " + std::to_string(vocab));
    }
    auto row = table.data().subspan(static_cast<std::size_t>(idx) * width, width);
    out.insert(out.end(), row.begin(), row.end());
  }
  Tensor result({indices.size(), width}, std::move(out), tape.tracks({table}));
  if (result.requires_grad()) {
    tape.record(result, [table, result, idx = std::vector<std::int64_t>(indices.begin(), indices.end()), width]() mutable {
      auto g = result.grad();
      auto dT = table.grad_mut();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t e = 0; e < width; ++e) dT[static_cast<std::size_t>(idx[r]) * width + e] += g[r * width + e];
    });
  }
  return result;
}

/// Concatenates matrices with equal row counts along columns.
inline Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::empty_set, "concat_cols with no parts");
  const std::size_t rows = parts.front().extent(0);
  std::size_t total = 0;
  bool tracked = false;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_cols");
    if (p.extent(0) != rows) {
      throw Error(ErrorKind::dimension, "concat_cols row mismatch: " + shape_string(parts.front().shape()) + " vs " +
                                            shape_string(p.shape()));
    }
    total += p.extent(1);
    tracked = tracked || tape.tracks({p});
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.extent(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(r * c), c, out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    offset += c;
  }
  Tensor result({rows, total}, std::move(out), tracked);
  if (tracked) {
    tape.record(result, [inputs = std::vector<Tensor>(parts.begin(), parts.end()), result, rows, total]() mutable {
      auto g = result.grad();
      std::size_t offset = 0;
      for (auto& p : inputs) {
        const std::size_t c = p.extent(1);
        if (p.requires_grad()) {
          auto dp = p.grad_mut();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) dp[r * c + j] += g[r * total + offset + j];
        }
        offset += c;
      }
    });
  }
  return result;
}

/// Stacks matrices with equal column counts along rows.
inline Tensor stack_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::empty_set, "stack_rows with no parts");
  const std::size_t cols = parts.front().extent(1);
  std::size_t rows = 0;
  bool tracked = false;
  for (const auto& p : parts) {
    detail::require_rank2(p, "stack_rows");
    if (p.extent(1) != cols) {
      throw Error(ErrorKind::dimension, "stack_rows column mismatch: " + shape_string(parts.front().shape()) + " vs " +
                                            shape_string(p.shape()));
    }
    rows += p.extent(0);
    tracked = tracked || tape.tracks({p});
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor result({rows, cols}, std::move(out), tracked);
  if (tracked) {
    tape.record(result, [inputs = std::vector<Tensor>(parts.begin(), parts.end()), result]() mutable {
      auto g = result.grad();
      std::size_t offset = 0;
      for (auto& p : inputs) {
        if (p.requires_grad()) detail::accumulate(p, g.subspan(offset, p.numel()));
        offset += p.numel();
      }
    });
  }
  return result;
}

/// Contiguous row range [begin, begin+count) of a matrix.
inline Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count) {
  detail::require_rank2(x, "slice_rows");
  const std::size_t cols = x.extent(1);
  if (count == 0 || begin + count > x.extent(0)) {
    throw Error(ErrorKind::dimension, "slice_rows range out of bounds for " + shape_string(x.shape()));
  }
  auto first = x.data().begin() + static_cast<std::ptrdiff_t>(begin * cols);
  Tensor result({count, cols}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * cols)),
                tape.tracks({x}));
  if (result.requires_grad()) {
    tape.record(result, [x, result, begin, cols]() mutable {
      auto g = result.grad();
      auto dx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) dx[begin * cols + i] += g[i];
    });
  }
  return result;
}

}  // namespace mmsets
