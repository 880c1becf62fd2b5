/*
 * Copyright 2026 The SHIELD Lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SHIELD_TENSOR_HPP_
#define SHIELD_TENSOR_HPP_

// Dense float64 tensors with a reverse-mode gradient tape.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets the tape write gradients back into model parameters. Ops never mutate
// their inputs. When a Tape is active on the current thread and any input
// requires a gradient, the op records a backward rule on that tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shield/error.hpp"

namespace shield {

using Shape = std::vector<std::size_t>;

inline std::size_t ShapeSize(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string ShapeString(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

class Tape;

namespace internal {

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches it
  bool requires_grad = false;
  const Tape* tape = nullptr;  // producing tape, null for leaves
  std::size_t tape_id = 0;
};

inline void CheckFinite(std::span<const double> values, std::string_view op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kNumeric,
                  std::string(op) + " produced a non-finite value");
    }
  }
}

}  // namespace internal

class Tensor {
 public:
  // Scalar zero.
  Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

  Tensor(Shape shape, std::vector<double> data)
      : storage_(std::make_shared<internal::TensorStorage>()) {
    for (std::size_t d : shape) {
      if (d == 0) {
        throw Error(ErrorKind::kShape,
                    "tensor dimensions must be positive, got " +
                        ShapeString(shape));
      }
    }
    if (ShapeSize(shape) != data.size()) {
      throw Error(ErrorKind::kShape,
                  "shape " + ShapeString(shape) + " needs " +
                      std::to_string(ShapeSize(shape)) + " values, got " +
                      std::to_string(data.size()));
    }
    internal::CheckFinite(data, "tensor construction");
    storage_->shape = std::move(shape);
    storage_->data = std::move(data);
  }

  static Tensor Zeros(Shape shape) {
    const std::size_t n = ShapeSize(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor Scalar(double value) {
    return Tensor(Shape{}, std::vector<double>{value});
  }

  // A leaf that accumulates gradients during backward.
  static Tensor Parameter(Shape shape, std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    t.storage_->requires_grad = true;
    return t;
  }

  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t size() const { return storage_->data.size(); }

  std::span<const double> data() const { return storage_->data; }
  // Only optimizers and initializers write through this.
  std::span<double> mutable_data() { return storage_->data; }

  double item() const {
    if (size() != 1) {
      throw Error(ErrorKind::kUsage,
                  "item() on tensor of shape " + ShapeString(shape()));
    }
    return storage_->data[0];
  }

  double operator[](std::size_t i) const { return storage_->data[i]; }

  bool requires_grad() const { return storage_->requires_grad; }
  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const double> grad() const { return storage_->grad; }
  std::span<double> mutable_grad() {
    if (storage_->grad.empty()) storage_->grad.assign(size(), 0.0);
    return storage_->grad;
  }
  void ZeroGrad() { storage_->grad.clear(); }

  std::optional<std::size_t> tape_id() const {
    if (storage_->tape == nullptr) return std::nullopt;
    return storage_->tape_id;
  }

  // Independent copy of the values; keeps the parameter flag, drops history.
  Tensor Clone() const {
    Tensor t(shape(), storage_->data);
    t.storage_->requires_grad =
        storage_->requires_grad && storage_->tape == nullptr;
    return t;
  }

  // Independent copy with no gradient tracking at all.
  Tensor Detach() const { return Tensor(shape(), storage_->data); }

  bool SharesStorageWith(const Tensor& other) const {
    return storage_ == other.storage_;
  }

 private:
  friend class Tape;

  std::shared_ptr<internal::TensorStorage> storage_;
};

namespace internal {
inline Tape*& ActiveTapeSlot() {
  thread_local Tape* slot = nullptr;
  return slot;
}
}  // namespace internal

// Ordered record of differentiable ops. Create one per training step, run
// Backward once, then drop it.
class Tape {
 public:
  // grad_in[i] is empty when input i needs no gradient.
  using BackwardFn = std::function<void(std::span<const double> grad_out,
                                        std::span<const std::span<double>>
                                            grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Makes a tape the recording target on this thread for the scope lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape) : previous_(internal::ActiveTapeSlot()) {
      internal::ActiveTapeSlot() = &tape;
    }
    ~Scope() { internal::ActiveTapeSlot() = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  // Suspends recording, e.g. for inference inside a training step.
  class Pause {
   public:
    Pause() : previous_(internal::ActiveTapeSlot()) {
      internal::ActiveTapeSlot() = nullptr;
    }
    ~Pause() { internal::ActiveTapeSlot() = previous_; }
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* Active() { return internal::ActiveTapeSlot(); }

  // The active tape if any input needs a gradient, otherwise null.
  static Tape* RecorderFor(std::initializer_list<const Tensor*> inputs) {
    Tape* tape = Active();
    if (tape == nullptr) return nullptr;
    for (const Tensor* t : inputs) {
      if (t->requires_grad()) return tape;
    }
    return nullptr;
  }

  void Record(std::vector<Tensor> inputs, Tensor& output, BackwardFn fn) {
    output.storage_->requires_grad = true;
    output.storage_->tape = this;
    output.storage_->tape_id = nodes_.size();
    Node node;
    node.inputs.reserve(inputs.size());
    for (Tensor& t : inputs) node.inputs.push_back(std::move(t.storage_));
    node.output_size = output.size();
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
  }

  std::size_t size() const { return nodes_.size(); }

  // Propagates d(loss)/d(.) to every reachable leaf parameter, adding into
  // the existing grad buffers. Intermediate gradients live only for the
  // duration of the call, so repeated calls accumulate exactly.
  void Backward(const Tensor& loss) {
    if (loss.size() != 1) {
      throw Error(ErrorKind::kUsage, "backward needs a scalar loss, got shape " +
                                         ShapeString(loss.shape()));
    }
    if (loss.storage_->tape != this) {
      throw Error(ErrorKind::kUsage,
                  "backward: loss was not produced under this tape");
    }
    std::vector<std::vector<double>> grads(nodes_.size());
    const std::size_t root = loss.storage_->tape_id;
    grads[root].assign(1, 1.0);
    std::vector<std::span<double>> grad_in;
    for (std::size_t id = root + 1; id-- > 0;) {
      if (grads[id].empty()) continue;
      Node& node = nodes_[id];
      grad_in.assign(node.inputs.size(), std::span<double>());
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        internal::TensorStorage& in = *node.inputs[i];
        if (in.tape == this) {
          std::vector<double>& g = grads[in.tape_id];
          if (g.empty()) g.assign(in.data.size(), 0.0);
          grad_in[i] = g;
        } else if (in.requires_grad) {
          if (in.grad.empty()) in.grad.assign(in.data.size(), 0.0);
          grad_in[i] = in.grad;
        }
      }
      node.backward(grads[id], grad_in);
      grads[id].clear();
      grads[id].shrink_to_fit();
    }
  }

 private:
  struct Node {
    std::vector<std::shared_ptr<internal::TensorStorage>> inputs;
    std::size_t output_size = 0;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

inline void Backward(const Tensor& loss, Tape& tape) { tape.Backward(loss); }

namespace internal {

// Only equal shapes or a one-element operand are accepted.
struct Broadcast {
  Shape shape;
  bool a_scalar = false;
  bool b_scalar = false;
};

inline Broadcast ResolveBroadcast(const Tensor& a, const Tensor& b,
                                  std::string_view op) {
  if (a.shape() == b.shape()) return {a.shape(), false, false};
  if (a.size() == 1) return {b.shape(), true, false};
  if (b.size() == 1) return {a.shape(), false, true};
  throw Error(ErrorKind::kShape, std::string(op) + ": cannot broadcast " +
                                     ShapeString(a.shape()) + " with " +
                                     ShapeString(b.shape()));
}

// fwd(x, y) -> value; bwd(x, y, out) -> {d out/dx, d out/dy}.
template <class Fwd, class Bwd>
Tensor BinaryOp(const Tensor& a, const Tensor& b, std::string_view name,
                Fwd fwd, Bwd bwd) {
  const Broadcast bc = ResolveBroadcast(a, b, name);
  const std::size_t n = ShapeSize(bc.shape);
  std::vector<double> out(n);
  auto xs = a.data();
  auto ys = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fwd(xs[bc.a_scalar ? 0 : i], ys[bc.b_scalar ? 0 : i]);
  }
  CheckFinite(out, name);
  Tensor result(bc.shape, std::move(out));
  if (Tape* tape = Tape::RecorderFor({&a, &b})) {
    tape->Record(
        {a, b}, result,
        [a, b, bc, bwd, result_values = result](
            std::span<const double> g,
            std::span<const std::span<double>> gin) {
          auto xs = a.data();
          auto ys = b.data();
          auto zs = result_values.data();
          for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t ia = bc.a_scalar ? 0 : i;
            const std::size_t ib = bc.b_scalar ? 0 : i;
            const auto [dx, dy] = bwd(xs[ia], ys[ib], zs[i]);
            if (!gin[0].empty()) gin[0][ia] += dx * g[i];
            if (!gin[1].empty()) gin[1][ib] += dy * g[i];
          }
        });
  }
  return result;
}

// fwd(x) -> value; bwd(x, out) -> d out/dx.
template <class Fwd, class Bwd>
Tensor UnaryOp(const Tensor& a, std::string_view name, Fwd fwd, Bwd bwd) {
  std::vector<double> out(a.size());
  auto xs = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xs[i]);
  CheckFinite(out, name);
  Tensor result(a.shape(), std::move(out));
  if (Tape* tape = Tape::RecorderFor({&a})) {
    tape->Record({a}, result,
                 [a, bwd, result_values = result](
                     std::span<const double> g,
                     std::span<const std::span<double>> gin) {
                   auto xs = a.data();
                   auto zs = result_values.data();
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     gin[0][i] += bwd(xs[i], zs[i]) * g[i];
                   }
                 });
  }
  return result;
}

}  // namespace internal

inline Tensor Add(const Tensor& a, const Tensor& b) {
  return internal::BinaryOp(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return std::pair{1.0, 1.0}; });
}

inline Tensor Sub(const Tensor& a, const Tensor& b) {
  return internal::BinaryOp(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return std::pair{1.0, -1.0}; });
}

inline Tensor Mul(const Tensor& a, const Tensor& b) {
  return internal::BinaryOp(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double) { return std::pair{y, x}; });
}

// Denominators must be strictly positive.
inline Tensor Div(const Tensor& a, const Tensor& b) {
  for (double y : b.data()) {
    if (!(y > 0.0)) {
      throw Error(ErrorKind::kDomain, "div: nonpositive denominator " +
                                          std::to_string(y));
    }
  }
  return internal::BinaryOp(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double) {
        return std::pair{1.0 / y, -x / (y * y)};
      });
}

inline Tensor Exp(const Tensor& a) {
  return internal::UnaryOp(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double z) { return z; });
}

// Arguments must be strictly positive; clamp first when values may underflow.
inline Tensor Log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) {
      throw Error(ErrorKind::kDomain,
                  "log: nonpositive argument " + std::to_string(x));
    }
  }
  return internal::UnaryOp(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

inline Tensor Relu(const Tensor& a) {
  return internal::UnaryOp(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// Gradient passes where lo <= x <= hi.
inline Tensor Clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) {
    throw Error(ErrorKind::kUsage, "clamp: lo must not exceed hi");
  }
  return internal::UnaryOp(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline Tensor Scale(const Tensor& a, double s) {
  return Mul(a, Tensor::Scalar(s));
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return Add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return Sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return Mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return Div(a, b); }

inline Tensor Sum(const Tensor& a) {
  double total = 0.0;
  for (double x : a.data()) total += x;
  Tensor result = Tensor::Scalar(total);
  internal::CheckFinite(result.data(), "sum");
  if (Tape* tape = Tape::RecorderFor({&a})) {
    tape->Record({a}, result,
                 [](std::span<const double> g,
                    std::span<const std::span<double>> gin) {
                   for (double& v : gin[0]) v += g[0];
                 });
  }
  return result;
}

inline Tensor Mean(const Tensor& a) {
  return Scale(Sum(a), 1.0 / static_cast<double>(a.size()));
}

// Same values under a new shape of equal size.
inline Tensor Reshape(const Tensor& a, Shape shape) {
  if (ShapeSize(shape) != a.size()) {
    throw Error(ErrorKind::kShape, "reshape: cannot view " +
                                       ShapeString(a.shape()) + " as " +
                                       ShapeString(shape));
  }
  Tensor result(std::move(shape),
                std::vector<double>(a.data().begin(), a.data().end()));
  if (Tape* tape = Tape::RecorderFor({&a})) {
    tape->Record({a}, result,
                 [](std::span<const double> g,
                    std::span<const std::span<double>> gin) {
                   for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                 });
  }
  return result;
}

namespace internal {

// out[m x n] += a[m x k] * b[k x n], all row-major.
inline void GemmAccumulate(const double* a, const double* b, double* out,
                           std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* out_row = out + i * n;
    const double* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = a_row[p];
      if (s == 0.0) continue;
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += s * b_row[j];
    }
  }
}

}  // namespace internal

inline Tensor MatMul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw Error(ErrorKind::kShape, "matmul: cannot multiply " +
                                       ShapeString(a.shape()) + " by " +
                                       ShapeString(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  internal::GemmAccumulate(a.data().data(), b.data().data(), out.data(), m, k,
                           n);
  internal::CheckFinite(out, "matmul");
  Tensor result(Shape{m, n}, std::move(out));
  if (Tape* tape = Tape::RecorderFor({&a, &b})) {
    tape->Record({a, b}, result,
                 [a, b, m, k, n](std::span<const double> g,
                                 std::span<const std::span<double>> gin) {
                   const double* av = a.data().data();
                   const double* bv = b.data().data();
                   if (!gin[0].empty()) {
                     // dA = G * B^T
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t p = 0; p < k; ++p) {
                         double acc = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           acc += g[i * n + j] * bv[p * n + j];
                         }
                         gin[0][i * k + p] += acc;
                       }
                     }
                   }
                   if (!gin[1].empty()) {
                     // dB = A^T * G
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t p = 0; p < k; ++p) {
                         const double s = av[i * k + p];
                         if (s == 0.0) continue;
                         double* row = gin[1].data() + p * n;
                         for (std::size_t j = 0; j < n; ++j) {
                           row[j] += s * g[i * n + j];
                         }
                       }
                     }
                   }
                 });
  }
  return result;
}

// x[m x n] + bias[n] added to every row.
inline Tensor AddBias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2 || bias.size() != x.dim(1)) {
    throw Error(ErrorKind::kShape, "add_bias: cannot add " +
                                       ShapeString(bias.shape()) + " to rows of " +
                                       ShapeString(x.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  internal::CheckFinite(out, "add_bias");
  Tensor result(x.shape(), std::move(out));
  if (Tape* tape = Tape::RecorderFor({&x, &bias})) {
    tape->Record({x, bias}, result,
                 [m, n](std::span<const double> g,
                        std::span<const std::span<double>> gin) {
                   if (!gin[0].empty()) {
                     for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                   }
                   if (!gin[1].empty()) {
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t j = 0; j < n; ++j) {
                         gin[1][j] += g[i * n + j];
                       }
                     }
                   }
                 });
  }
  return result;
}

// Row-wise softmax of a [batch x classes] tensor, shifted by the row max.
inline Tensor Softmax(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw Error(ErrorKind::kShape, "softmax expects [batch x classes], got " +
                                       ShapeString(logits.shape()));
  }
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  auto xs = logits.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xs.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  internal::CheckFinite(out, "softmax");
  Tensor result(logits.shape(), std::move(out));
  if (Tape* tape = Tape::RecorderFor({&logits})) {
    tape->Record({logits}, result,
                 [m, n, probs = result](std::span<const double> g,
                                        std::span<const std::span<double>> gin) {
                   auto ys = probs.data();
                   for (std::size_t i = 0; i < m; ++i) {
                     double dot = 0.0;
                     for (std::size_t j = 0; j < n; ++j) {
                       dot += g[i * n + j] * ys[i * n + j];
                     }
                     for (std::size_t j = 0; j < n; ++j) {
                       gin[0][i * n + j] += ys[i * n + j] * (g[i * n + j] - dot);
                     }
                   }
                 });
  }
  return result;
}

// out[i] = x[i, index[i]] for a [m x n] tensor.
inline Tensor PickColumns(const Tensor& x, std::span<const int> index) {
  if (x.rank() != 2 || index.size() != x.dim(0)) {
    throw Error(ErrorKind::kShape,
                "pick: need one index per row of " + ShapeString(x.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<std::size_t> cols(m);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= n) {
      throw Error(ErrorKind::kUsage, "pick: index " + std::to_string(index[i]) +
                                         " outside [0, " + std::to_string(n) +
                                         ")");
    }
    cols[i] = static_cast<std::size_t>(index[i]);
    out[i] = x.data()[i * n + cols[i]];
  }
  Tensor result(Shape{m}, std::move(out));
  if (Tape* tape = Tape::RecorderFor({&x})) {
    tape->Record({x}, result,
                 [cols, n](std::span<const double> g,
                           std::span<const std::span<double>> gin) {
                   for (std::size_t i = 0; i < cols.size(); ++i) {
                     gin[0][i * n + cols[i]] += g[i];
                   }
                 });
  }
  return result;
}

// Direct "same" convolution, stride 1, odd kernel sizes.
// x[b, c, h, w] * kernel[o, c, kh, kw] + bias[o] -> [b, o, h, w].
inline Tensor Conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() != 4 || kernel.rank() != 4 || kernel.dim(1) != x.dim(1) ||
      bias.size() != kernel.dim(0) || kernel.dim(2) % 2 == 0 ||
      kernel.dim(3) % 2 == 0) {
    throw Error(ErrorKind::kShape, "conv2d: input " + ShapeString(x.shape()) +
                                       ", kernel " + ShapeString(kernel.shape()) +
                                       ", bias " + ShapeString(bias.shape()));
  }
  const std::size_t nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(h);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(w);

  // Visits every (output pixel, input pixel, weight) triple in a fixed order.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t bi = 0; bi < nb; ++bi) {
      for (std::size_t oc = 0; oc < o; ++oc) {
        for (std::size_t ic = 0; ic < c; ++ic) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - ph;
              const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pw;
              const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
              const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(H, H - dy);
              const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
              const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
              const std::size_t k_index = ((oc * c + ic) * kh + ky) * kw + kx;
              for (std::ptrdiff_t y = y0; y < y1; ++y) {
                const std::size_t out_row = ((bi * o + oc) * h + y) * w;
                const std::size_t in_row = ((bi * c + ic) * h + (y + dy)) * w;
                fn(out_row, in_row, k_index, x0, x1, dx);
              }
            }
          }
        }
      }
    }
  };

  std::vector<double> out(nb * o * h * w);
  auto bv = bias.data();
  for (std::size_t bi = 0; bi < nb; ++bi) {
    for (std::size_t oc = 0; oc < o; ++oc) {
      std::fill_n(out.begin() + ((bi * o + oc) * h * w), h * w, bv[oc]);
    }
  }
  const double* xv = x.data().data();
  const double* kv = kernel.data().data();
  for_each_tap([&](std::size_t out_row, std::size_t in_row, std::size_t k_index,
                   std::ptrdiff_t x0, std::ptrdiff_t x1, std::ptrdiff_t dx) {
    const double kval = kv[k_index];
    double* dst = out.data() + out_row;
    const double* src = xv + in_row + dx;
    for (std::ptrdiff_t xx = x0; xx < x1; ++xx) dst[xx] += kval * src[xx];
  });
  internal::CheckFinite(out, "conv2d");
  Tensor result(Shape{nb, o, h, w}, std::move(out));
  if (Tape* tape = Tape::RecorderFor({&x, &kernel, &bias})) {
    tape->Record(
        {x, kernel, bias}, result,
        [x, kernel, for_each_tap, nb, o, h, w](
            std::span<const double> g, std::span<const std::span<double>> gin) {
          const double* xv = x.data().data();
          const double* kv = kernel.data().data();
          for_each_tap([&](std::size_t out_row, std::size_t in_row,
                           std::size_t k_index, std::ptrdiff_t x0,
                           std::ptrdiff_t x1, std::ptrdiff_t dx) {
            const double* gr = g.data() + out_row;
            if (!gin[0].empty()) {
              double* gx = gin[0].data() + in_row + dx;
              const double kval = kv[k_index];
              for (std::ptrdiff_t xx = x0; xx < x1; ++xx) gx[xx] += kval * gr[xx];
            }
            if (!gin[1].empty()) {
              const double* src = xv + in_row + dx;
              double acc = 0.0;
              for (std::ptrdiff_t xx = x0; xx < x1; ++xx) acc += gr[xx] * src[xx];
              gin[1][k_index] += acc;
            }
          });
          if (!gin[2].empty()) {
            for (std::size_t bi = 0; bi < nb; ++bi) {
              for (std::size_t oc = 0; oc < o; ++oc) {
                const double* gr = g.data() + (bi * o + oc) * h * w;
                double acc = 0.0;
                for (std::size_t i = 0; i < h * w; ++i) acc += gr[i];
                gin[2][oc] += acc;
              }
            }
          }
        });
  }
  return result;
}

// 2x2 average pooling; trailing odd rows/columns are dropped.
inline Tensor MeanPool2(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
    throw Error(ErrorKind::kShape,
                "mean_pool2 expects [b, c, h>=2, w>=2], got " +
                    ShapeString(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(planes * oh * ow);
  auto xv = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t base = p * h * w + 2 * y * w + 2 * xx;
        out[(p * oh + y) * ow + xx] =
            0.25 * (xv[base] + xv[base + 1] + xv[base + w] + xv[base + w + 1]);
      }
    }
  }
  Tensor result(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out));
  if (Tape* tape = Tape::RecorderFor({&x})) {
    tape->Record({x}, result,
                 [planes, h, w, oh, ow](std::span<const double> g,
                                        std::span<const std::span<double>> gin) {
                   for (std::size_t p = 0; p < planes; ++p) {
                     for (std::size_t y = 0; y < oh; ++y) {
                       for (std::size_t xx = 0; xx < ow; ++xx) {
                         const double v = 0.25 * g[(p * oh + y) * ow + xx];
                         const std::size_t base = p * h * w + 2 * y * w + 2 * xx;
                         gin[0][base] += v;
                         gin[0][base + 1] += v;
                         gin[0][base + w] += v;
                         gin[0][base + w + 1] += v;
                       }
                     }
                   }
                 });
  }
  return result;
}

// [b, c, h, w] -> [b, c] by averaging each plane.
inline Tensor GlobalMeanPool(const Tensor& x) {
  if (x.rank() != 4) {
    throw Error(ErrorKind::kShape, "global_mean_pool expects rank 4, got " +
                                       ShapeString(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), area = x.dim(2) * x.dim(3);
  std::vector<double> out(planes);
  auto xv = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < area; ++i) acc += xv[p * area + i];
    out[p] = acc / static_cast<double>(area);
  }
  Tensor result(Shape{x.dim(0), x.dim(1)}, std::move(out));
  if (Tape* tape = Tape::RecorderFor({&x})) {
    tape->Record({x}, result,
                 [planes, area](std::span<const double> g,
                                std::span<const std::span<double>> gin) {
                   const double inv = 1.0 / static_cast<double>(area);
                   for (std::size_t p = 0; p < planes; ++p) {
                     for (std::size_t i = 0; i < area; ++i) {
                       gin[0][p * area + i] += g[p] * inv;
                     }
                   }
                 });
  }
  return result;
}

// Index of the largest entry in each row; ties go to the lowest index.
inline std::vector<int> ArgmaxRows(const Tensor& x) {
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<int> out(m);
  auto v = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = v.data() + i * n;
    out[i] = static_cast<int>(std::max_element(row, row + n) - row);
  }
  return out;
}

}  // namespace shield

#endif  // SHIELD_TENSOR_HPP_
