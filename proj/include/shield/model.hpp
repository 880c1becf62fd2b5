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

#ifndef SHIELD_MODEL_HPP_
#define SHIELD_MODEL_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "shield/error.hpp"
#include "shield/rng.hpp"
#include "shield/tensor.hpp"

namespace shield {

// Lower clamp applied to probabilities before any log.
inline constexpr double kProbabilityFloor = 1e-7;

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

enum class Architecture { kMlp, kSmallConv };

inline std::string_view ArchitectureName(Architecture arch) {
  return arch == Architecture::kMlp ? "mlp" : "small_conv";
}

inline Architecture ParseArchitecture(std::string_view name) {
  if (name == "mlp") return Architecture::kMlp;
  if (name == "small_conv") return Architecture::kSmallConv;
  throw Error(ErrorKind::kUsage,
              "unknown architecture '" + std::string(name) + "'");
}

// weight is [in x out].
struct DenseLayer {
  Tensor weight;
  Tensor bias;
};

// kernel is [out_channels, in_channels, 3, 3].
struct ConvLayer {
  Tensor kernel;
  Tensor bias;
};

struct ReluLayer {};
struct MeanPoolLayer {};
struct GlobalMeanPoolLayer {};
struct FlattenLayer {};

using Layer = std::variant<DenseLayer, ConvLayer, ReluLayer, MeanPoolLayer,
                           GlobalMeanPoolLayer, FlattenLayer>;

// A feed-forward image classifier ending in a softmax head. Copies are deep:
// a copied Classifier never shares parameters with its source.
class Classifier {
 public:
  static constexpr std::size_t kDefaultHidden = 128;

  // flatten -> dense(hidden) -> relu -> dense(classes)
  static Classifier Mlp(ImageShape input, std::size_t num_classes,
                        std::uint64_t seed,
                        std::size_t hidden = kDefaultHidden) {
    Classifier model(Architecture::kMlp, input, num_classes, seed, hidden);
    Rng rng = MakeRng(seed, Stream::kInit);
    model.layers_.push_back(FlattenLayer{});
    model.layers_.push_back(MakeDense(input.size(), hidden, rng));
    model.layers_.push_back(ReluLayer{});
    model.layers_.push_back(MakeDense(hidden, num_classes, rng));
    return model;
  }

  // conv3x3(16) -> relu -> meanpool2 -> conv3x3(32) -> relu -> global mean
  // -> dense(classes)
  static Classifier SmallConv(ImageShape input, std::size_t num_classes,
                              std::uint64_t seed) {
    if (input.height < 2 || input.width < 2) {
      throw Error(ErrorKind::kShape, "small_conv needs images of at least 2x2");
    }
    Classifier model(Architecture::kSmallConv, input, num_classes, seed, 0);
    Rng rng = MakeRng(seed, Stream::kInit);
    model.layers_.push_back(MakeConv(input.channels, 16, rng));
    model.layers_.push_back(ReluLayer{});
    model.layers_.push_back(MeanPoolLayer{});
    model.layers_.push_back(MakeConv(16, 32, rng));
    model.layers_.push_back(ReluLayer{});
    model.layers_.push_back(GlobalMeanPoolLayer{});
    model.layers_.push_back(MakeDense(32, num_classes, rng));
    return model;
  }

  static Classifier Build(Architecture arch, ImageShape input,
                          std::size_t num_classes, std::uint64_t seed,
                          std::size_t hidden = kDefaultHidden) {
    return arch == Architecture::kMlp ? Mlp(input, num_classes, seed, hidden)
                                      : SmallConv(input, num_classes, seed);
  }

  // Assembles a classifier from explicit layers, e.g. a hand-set linear model.
  static Classifier FromLayers(Architecture arch, ImageShape input,
                               std::size_t num_classes, std::vector<Layer> layers,
                               std::uint64_t seed = 0, std::size_t hidden = 0) {
    Classifier model(arch, input, num_classes, seed, hidden);
    model.layers_ = std::move(layers);
    return model;
  }

  Classifier(const Classifier& other)
      : arch_(other.arch_),
        input_(other.input_),
        num_classes_(other.num_classes_),
        seed_(other.seed_),
        hidden_(other.hidden_) {
    layers_.reserve(other.layers_.size());
    for (const Layer& layer : other.layers_) layers_.push_back(CloneLayer(layer));
  }
  Classifier& operator=(const Classifier& other) {
    if (this != &other) {
      Classifier copy(other);
      *this = std::move(copy);
    }
    return *this;
  }
  Classifier(Classifier&&) noexcept = default;
  Classifier& operator=(Classifier&&) noexcept = default;

  Architecture architecture() const { return arch_; }
  const ImageShape& input_shape() const { return input_; }
  std::size_t num_classes() const { return num_classes_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t hidden() const { return hidden_; }
  const std::vector<Layer>& layers() const { return layers_; }

  // Pre-softmax scores, [batch x classes].
  Tensor Logits(const Tensor& batch) const {
    CheckInput(batch);
    Tensor x = batch;
    for (const Layer& layer : layers_) {
      x = std::visit(
          [&x](const auto& l) -> Tensor {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer>) {
              return AddBias(MatMul(x, l.weight), l.bias);
            } else if constexpr (std::is_same_v<T, ConvLayer>) {
              return Conv2d(x, l.kernel, l.bias);
            } else if constexpr (std::is_same_v<T, ReluLayer>) {
              return Relu(x);
            } else if constexpr (std::is_same_v<T, MeanPoolLayer>) {
              return MeanPool2(x);
            } else if constexpr (std::is_same_v<T, GlobalMeanPoolLayer>) {
              return GlobalMeanPool(x);
            } else {
              return Reshape(x, Shape{x.dim(0), x.size() / x.dim(0)});
            }
          },
          layer);
    }
    return x;
  }

  // Class probabilities, [batch x classes]. Recorded on the active tape.
  Tensor Forward(const Tensor& batch) const { return Softmax(Logits(batch)); }

  // Forward pass with recording suspended; the black-box interface used by
  // the explainer and the metrics.
  Tensor Predict(const Tensor& batch) const {
    Tape::Pause pause;
    return Forward(batch);
  }

  // Handles aliasing the live parameters, in layer order.
  std::vector<Tensor> Parameters() const {
    std::vector<Tensor> params;
    for (const Layer& layer : layers_) {
      if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        params.push_back(d->weight);
        params.push_back(d->bias);
      } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
        params.push_back(c->kernel);
        params.push_back(c->bias);
      }
    }
    return params;
  }

  void ZeroGrad() {
    for (Tensor& p : Parameters()) p.ZeroGrad();
  }

 private:
  Classifier(Architecture arch, ImageShape input, std::size_t num_classes,
             std::uint64_t seed, std::size_t hidden)
      : arch_(arch),
        input_(input),
        num_classes_(num_classes),
        seed_(seed),
        hidden_(hidden) {
    if (num_classes < 2) {
      throw Error(ErrorKind::kUsage, "a classifier needs at least 2 classes");
    }
  }

  void CheckInput(const Tensor& batch) const {
    if (batch.rank() != 4 || batch.dim(1) != input_.channels ||
        batch.dim(2) != input_.height || batch.dim(3) != input_.width) {
      throw Error(ErrorKind::kShape,
                  "model expects [b, " + std::to_string(input_.channels) + ", " +
                      std::to_string(input_.height) + ", " +
                      std::to_string(input_.width) + "], got " +
                      ShapeString(batch.shape()));
    }
  }

  // Uniform in +-sqrt(6 / fan_in); biases start at zero.
  static std::vector<double> KaimingUniform(std::size_t count,
                                            std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(count);
    for (double& v : values) v = dist(rng);
    return values;
  }

  static DenseLayer MakeDense(std::size_t in, std::size_t out, Rng& rng) {
    return DenseLayer{
        Tensor::Parameter(Shape{in, out}, KaimingUniform(in * out, in, rng)),
        Tensor::Parameter(Shape{out}, std::vector<double>(out, 0.0))};
  }

  static ConvLayer MakeConv(std::size_t in, std::size_t out, Rng& rng) {
    return ConvLayer{Tensor::Parameter(Shape{out, in, 3, 3},
                                       KaimingUniform(out * in * 9, in * 9, rng)),
                     Tensor::Parameter(Shape{out}, std::vector<double>(out, 0.0))};
  }

  static Layer CloneLayer(const Layer& layer) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      return DenseLayer{d->weight.Clone(), d->bias.Clone()};
    }
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      return ConvLayer{c->kernel.Clone(), c->bias.Clone()};
    }
    return layer;
  }

  Architecture arch_;
  ImageShape input_;
  std::size_t num_classes_;
  std::uint64_t seed_;
  std::size_t hidden_;
  std::vector<Layer> layers_;
};

// Mean over the batch of -log(clamp(p[label])).
inline Tensor CrossEntropy(const Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || labels.size() != probs.dim(0)) {
    throw Error(ErrorKind::kShape, "cross_entropy: " +
                                       std::to_string(labels.size()) +
                                       " labels for probabilities " +
                                       ShapeString(probs.shape()));
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.dim(1)) {
      throw Error(ErrorKind::kUsage,
                  "cross_entropy: label " + std::to_string(label) +
                      " outside [0, " + std::to_string(probs.dim(1)) + ")");
    }
  }
  Tensor picked = PickColumns(probs, labels);
  return Scale(Mean(Log(Clamp(picked, kProbabilityFloor, 1.0))), -1.0);
}

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One Adam update with bias correction. weight_decay * w is added to each
// gradient before the moments are updated. Parameters with no gradient are
// treated as having a zero gradient.
inline void AdamStep(AdamState& state, std::span<Tensor> params) {
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw Error(ErrorKind::kUsage, "adam: parameter list changed between steps");
  }
  const AdamOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    std::span<double> w = p.mutable_data();
    std::span<const double> g = p.grad();
    std::vector<double>& m = state.m[k];
    std::vector<double>& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = (g.empty() ? 0.0 : g[i]) + o.weight_decay * w[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

}  // namespace shield

#endif  // SHIELD_MODEL_HPP_
