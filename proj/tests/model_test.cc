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

#include "shield/model.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include "gtest/gtest.h"
#include "shield/checkpoint.hpp"
#include "test_util.hpp"

namespace shield {
namespace {

using ::shield::testing::GradCheck;
using ::shield::testing::UniformValues;

Tensor RandomBatch(std::size_t b, ImageShape s, Rng& rng) {
  return Tensor(Shape{b, s.channels, s.height, s.width},
                UniformValues(b * s.size(), 0.0, 1.0, rng));
}

// A 1-layer linear softmax model: flatten -> dense.
Classifier LinearModel(ImageShape s, std::vector<double> w, std::vector<double> b) {
  const std::size_t k = b.size();
  std::vector<Layer> layers;
  layers.push_back(FlattenLayer{});
  layers.push_back(DenseLayer{Tensor::Parameter(Shape{s.size(), k}, std::move(w)),
                              Tensor::Parameter(Shape{k}, std::move(b))});
  return Classifier::FromLayers(Architecture::kMlp, s, k, std::move(layers));
}

TEST(ForwardTest, FreshMlpGivesProbabilities) {
  Rng rng = MakeRng(1);
  const ImageShape s{1, 6, 6};
  const Classifier model = Classifier::Mlp(s, 2, 42);
  const Tensor p = model.Forward(RandomBatch(5, s, rng));
  ASSERT_EQ(p.shape(), (Shape{5, 2}));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_GT(p[2 * i], 0.0);
    EXPECT_LT(p[2 * i], 1.0);
    EXPECT_NEAR(p[2 * i] + p[2 * i + 1], 1.0, 1e-12);
  }
}

TEST(ForwardTest, IdenticalInputsGiveIdenticalRows) {
  Rng rng = MakeRng(2);
  const ImageShape s{1, 8, 8};
  auto image = UniformValues(s.size(), 0, 1, rng);
  std::vector<double> batch;
  for (int i = 0; i < 3; ++i) batch.insert(batch.end(), image.begin(), image.end());
  for (Architecture arch : {Architecture::kMlp, Architecture::kSmallConv}) {
    const Classifier model = Classifier::Build(arch, s, 3, 7);
    const Tensor p = model.Forward(Tensor(Shape{3, 1, 8, 8}, batch));
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(p[j], p[3 + j]);
      EXPECT_EQ(p[j], p[6 + j]);
    }
  }
}

TEST(ForwardTest, HandSetLinearModel) {
  const ImageShape s{1, 1, 2};
  // logits = x^T W + b with W = [[1, -1], [2, 0.5]], b = [0.1, -0.2].
  const Classifier model = LinearModel(s, {1, -1, 2, 0.5}, {0.1, -0.2});
  const Tensor p = model.Forward(Tensor(Shape{1, 1, 1, 2}, {0.3, 0.7}));
  const double l0 = 0.3 * 1 + 0.7 * 2 + 0.1;
  const double l1 = 0.3 * -1 + 0.7 * 0.5 - 0.2;
  const double z = std::exp(l0) + std::exp(l1);
  EXPECT_NEAR(p[0], std::exp(l0) / z, 1e-15);
  EXPECT_NEAR(p[1], std::exp(l1) / z, 1e-15);
}

TEST(ForwardTest, ShapeMismatchIsStructured) {
  const Classifier model = Classifier::Mlp({1, 4, 4}, 2, 0);
  try {
    model.Forward(Tensor::Zeros({2, 1, 4, 5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(InitTest, SeededAndDeepCopied) {
  const Classifier a = Classifier::SmallConv({1, 8, 8}, 3, 5);
  const Classifier b = Classifier::SmallConv({1, 8, 8}, 3, 5);
  const Classifier c = Classifier::SmallConv({1, 8, 8}, 3, 6);
  const auto pa = a.Parameters(), pb = b.Parameters(), pc = c.Parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_difference = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i].data().begin(), pa[i].data().end(),
                           pb[i].data().begin()));
    any_difference |= !std::equal(pa[i].data().begin(), pa[i].data().end(),
                                  pc[i].data().begin());
  }
  EXPECT_TRUE(any_difference);

  Classifier copy = a;
  EXPECT_FALSE(copy.Parameters()[0].SharesStorageWith(a.Parameters()[0]));
}

TEST(GradientTest, FullMlpMatchesFiniteDifferences) {
  Rng rng = MakeRng(8);
  const ImageShape s{1, 4, 4};
  const Classifier model = Classifier::Mlp(s, 3, 13, 6);
  const Tensor x = RandomBatch(4, s, rng);
  const std::vector<int> y{0, 2, 1, 2};
  EXPECT_LT(GradCheck(model.Parameters(),
                      [&] { return CrossEntropy(model.Forward(x), y); }),
            1e-4);
}

TEST(GradientTest, SmallConvMatchesFiniteDifferences) {
  Rng rng = MakeRng(9);
  const ImageShape s{1, 6, 6};
  const Classifier model = Classifier::SmallConv(s, 2, 4);
  const Tensor x = RandomBatch(2, s, rng);
  const std::vector<int> y{1, 0};
  EXPECT_LT(GradCheck(model.Parameters(),
                      [&] { return CrossEntropy(model.Forward(x), y); }),
            1e-4);
}

TEST(CrossEntropyTest, Examples) {
  const std::vector<int> first{0};
  EXPECT_LE(CrossEntropy(Tensor(Shape{1, 3}, {1, 0, 0}), first).item(), 1e-6);
  const std::vector<int> labels{0, 3, 1, 2};
  EXPECT_NEAR(CrossEntropy(Tensor(Shape{4, 4}, std::vector<double>(16, 0.25)),
                           labels)
                  .item(),
              std::log(4.0), 1e-15);
  const std::vector<int> pair{1, 0};
  const double expected = 0.5 * (-std::log(0.7) - std::log(0.4));
  EXPECT_NEAR(CrossEntropy(Tensor(Shape{2, 2}, {0.3, 0.7, 0.4, 0.6}), pair).item(),
              expected, 1e-15);
  const std::vector<int> bad{2};
  try {
    CrossEntropy(Tensor(Shape{1, 2}, {0.5, 0.5}), bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUsage);
  }
}

TEST(AdamTest, ZeroGradientAndNoDecayIsFixedPoint) {
  std::vector<Tensor> params{Tensor::Parameter(Shape{3}, {1, -2, 3})};
  params[0].mutable_grad();  // zeros
  AdamState state{{1e-3, 0.9, 0.999, 1e-8, 0.0}, 0, {}, {}};
  for (int i = 0; i < 10; ++i) AdamStep(state, params);
  EXPECT_EQ(std::vector<double>(params[0].data().begin(), params[0].data().end()),
            (std::vector<double>{1, -2, 3}));
}

TEST(AdamTest, DescendsOnQuadratic) {
  std::vector<Tensor> params{Tensor::Parameter(Shape{1}, {1.0})};
  params[0].mutable_grad()[0] = 1.0;  // d/dw 0.5 w^2 at w = 1
  AdamState state{{0.1, 0.9, 0.999, 1e-8, 0.0}, 0, {}, {}};
  AdamStep(state, params);
  EXPECT_LT(params[0][0], 1.0);
}

TEST(AdamTest, WeightDecayShrinksNormWithZeroGradient) {
  std::vector<Tensor> params{Tensor::Parameter(Shape{2}, {0.5, -0.8})};
  AdamState state{{1e-2, 0.9, 0.999, 1e-8, 1e-2}, 0, {}, {}};
  double norm = std::hypot(0.5, -0.8);
  for (int i = 0; i < 20; ++i) {
    params[0].ZeroGrad();
    AdamStep(state, params);
    const double next = std::hypot(params[0][0], params[0][1]);
    EXPECT_LT(next, norm);
    norm = next;
  }
}

TEST(AdamTest, ConvergesOnConvexQuadratic) {
  // f(w) = 0.5 w^T H w - c^T w, H = [[3, 1], [1, 2]], c = [1, -1].
  const double h[2][2] = {{3, 1}, {1, 2}};
  const double c[2] = {1, -1};
  std::vector<Tensor> params{Tensor::Parameter(Shape{2}, {2.0, 2.0})};
  AdamState state{{0.1, 0.9, 0.999, 1e-8, 0.0}, 0, {}, {}};
  auto gradient = [&](std::span<const double> w) {
    return std::array<double, 2>{h[0][0] * w[0] + h[0][1] * w[1] - c[0],
                                 h[1][0] * w[0] + h[1][1] * w[1] - c[1]};
  };
  for (int step = 0; step < 200; ++step) {
    const auto g = gradient(params[0].data());
    auto buf = params[0].mutable_grad();
    buf[0] = g[0];
    buf[1] = g[1];
    AdamStep(state, params);
  }
  const auto g = gradient(params[0].data());
  EXPECT_LT(std::hypot(g[0], g[1]), 1e-3);
}

TEST(TrainingPropertyTest, MlpSeparatesLinearlySeparableSet) {
  // Class 0 lights the left half, class 1 the right half.
  const ImageShape s{1, 4, 4};
  Rng rng = MakeRng(17);
  std::uniform_real_distribution<double> noise(0.0, 0.3);
  std::vector<double> images;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    const int label = i % 2;
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 4; ++x) {
        const bool lit = (x < 2) == (label == 0);
        images.push_back(lit ? 0.7 + noise(rng) : noise(rng));
      }
    }
    labels.push_back(label);
  }
  const Tensor x(Shape{40, 1, 4, 4}, images);
  Classifier model = Classifier::Mlp(s, 2, 3);
  std::vector<Tensor> params = model.Parameters();
  AdamState state;
  for (int step = 0; step < 200; ++step) {
    for (Tensor& p : params) p.ZeroGrad();
    Tape tape;
    Tape::Scope scope(tape);
    tape.Backward(CrossEntropy(model.Forward(x), labels));
    AdamStep(state, params);
  }
  EXPECT_EQ(ArgmaxRows(model.Predict(x)), labels);
}

TEST(CheckpointTest, RoundTripsParametersAndHeader) {
  const Classifier model = Classifier::SmallConv({1, 8, 8}, 3, 11);
  const std::string bytes = EncodeCheckpoint(model, {7, 0.25});
  const LoadedCheckpoint loaded = DecodeCheckpoint(bytes);
  EXPECT_EQ(loaded.info.epoch, 7u);
  EXPECT_EQ(loaded.info.validation_loss, 0.25);
  EXPECT_EQ(loaded.header.at("architecture"), "small_conv");
  const auto a = model.Parameters(), b = loaded.model.Parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(std::equal(a[i].data().begin(), a[i].data().end(),
                           b[i].data().begin()));
  }
  // Little-endian layout: the last 8 bytes are the final bias value.
  EXPECT_EQ(bytes.size(), 20 + loaded.header.dump().size() + 8 * [&] {
              std::size_t n = 0;
              for (const Tensor& p : a) n += p.size();
              return n;
            }());

  auto path = std::filesystem::temp_directory_path() / "shield_ckpt_test.bin";
  SaveCheckpoint(path, model, {1, 0.5});
  EXPECT_EQ(LoadCheckpoint(path).model.Parameters()[0].data()[0],
            a[0].data()[0]);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, RejectsCorruptContainers) {
  const std::string bytes = EncodeCheckpoint(Classifier::Mlp({1, 4, 4}, 2, 1), {});
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(DecodeCheckpoint(bad_magic), Error);
  EXPECT_THROW(DecodeCheckpoint(bytes.substr(0, bytes.size() - 3)), Error);
  EXPECT_THROW(DecodeCheckpoint(bytes.substr(0, 10)), Error);
}

}  // namespace
}  // namespace shield
