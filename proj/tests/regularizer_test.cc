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

#include "shield/regularizer.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace shield {
namespace {

using ::shield::testing::GradCheck;
using ::shield::testing::UniformValues;

// Brute-force KL over rows, p == 0 terms skipped.
double DirectKl(const std::vector<double>& p, const std::vector<double>& q,
                std::size_t k) {
  const std::size_t m = p.size() / k;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double pi = p[i * k + j];
      if (pi == 0.0) continue;
      total += pi * std::log(pi / std::max(q[i * k + j], 1e-7));
    }
  }
  return total / static_cast<double>(m);
}

std::vector<double> RandomRows(std::size_t m, std::size_t k, Rng& rng) {
  auto v = UniformValues(m * k, 0.01, 1.0, rng);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += v[i * k + j];
    for (std::size_t j = 0; j < k; ++j) v[i * k + j] /= s;
  }
  return v;
}

Tensor RandomBatch(std::size_t b, ImageShape s, Rng& rng) {
  return Tensor(Shape{b, s.channels, s.height, s.width},
                UniformValues(b * s.size(), 0.0, 1.0, rng));
}

TEST(KlDivTest, Examples) {
  const Tensor p(Shape{2, 3}, {0.2, 0.3, 0.5, 0.1, 0.1, 0.8});
  EXPECT_NEAR(KlDiv(p, p).item(), 0.0, 1e-9);
  EXPECT_NEAR(KlDiv(Tensor(Shape{1, 2}, {1, 0}), Tensor(Shape{1, 2}, {0.5, 0.5})).item(),
              std::log(2.0), 1e-15);
  Rng rng = MakeRng(2);
  for (int t = 0; t < 20; ++t) {
    const auto a = RandomRows(5, 4, rng), b = RandomRows(5, 4, rng);
    EXPECT_NEAR(KlDiv(Tensor(Shape{5, 4}, a), Tensor(Shape{5, 4}, b)).item(),
                DirectKl(a, b, 4), 1e-12);
  }
}

TEST(KlDivTest, RejectsNonProbabilityRows) {
  try {
    KlDiv(Tensor(Shape{1, 2}, {0.5, 0.6}), Tensor(Shape{1, 2}, {0.5, 0.5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDomain);
  }
}

TEST(ShieldTermTest, ZeroLambdaGivesZero) {
  Rng rng = MakeRng(3);
  const ImageShape s{1, 8, 8};
  const Classifier model = Classifier::Mlp(s, 3, 1);
  const ShieldConfig config{0.0, 4, 4, 1.0};
  EXPECT_LT(std::abs(ShieldTerm(model, RandomBatch(6, s, rng), config, rng).item()), 1e-9);
}

TEST(ShieldTermTest, InputIndependentModelGivesZero) {
  Rng rng = MakeRng(4);
  const ImageShape s{1, 8, 8};
  Classifier model = Classifier::Mlp(s, 3, 1);
  Tensor first = model.Parameters()[0];
  for (double& w : first.mutable_data()) w = 0.0;
  const ShieldConfig config{50.0, 4, 4, 1.0};
  EXPECT_LT(std::abs(ShieldTerm(model, RandomBatch(6, s, rng), config, rng).item()), 1e-9);
}

// Image 1x1x2 split into two 1x1 features; logits = W^T x + b by hand.
TEST(ShieldTermTest, MatchesHandComputedSymmetricKl) {
  const ImageShape s{1, 1, 2};
  std::vector<Layer> layers;
  layers.push_back(FlattenLayer{});
  layers.push_back(DenseLayer{Tensor::Parameter(Shape{2, 2}, {2.0, -1.0, 0.5, 1.5}),
                              Tensor::Parameter(Shape{2}, {0.1, -0.3})});
  const Classifier model =
      Classifier::FromLayers(Architecture::kMlp, s, 2, std::move(layers));
  const SegmentGrid grid = BuildGrid(s, 1, 2);
  const double x0 = 0.9, x1 = 0.2, mean = (x0 + x1) / 2;
  const std::vector<FeatureMask> masks{FeatureMask{{0, 1}}};
  const double term =
      ShieldTermWithMasks(model, Tensor(Shape{1, 1, 1, 2}, {x0, x1}), grid, masks).item();

  auto probs = [](double a, double b) {
    const double l0 = 2.0 * a + 0.5 * b + 0.1;
    const double l1 = -1.0 * a + 1.5 * b - 0.3;
    const double z = std::exp(l0) + std::exp(l1);
    return std::vector<double>{std::exp(l0) / z, std::exp(l1) / z};
  };
  const auto p = probs(x0, x1), q = probs(mean, x1);
  double expected = 0.0;
  for (int j = 0; j < 2; ++j) {
    expected += q[j] * std::log(q[j] / p[j]) + p[j] * std::log(p[j] / q[j]);
  }
  EXPECT_NEAR(term, expected, 1e-10);
  EXPECT_GT(term, 0.0);
}

TEST(ShieldTermTest, NonnegativeAndSymmetric) {
  Rng rng = MakeRng(5);
  const ImageShape s{1, 8, 8};
  const Classifier model = Classifier::Mlp(s, 4, 2, 16);
  const SegmentGrid grid = BuildGrid(s, 4, 4);
  for (int t = 0; t < 10; ++t) {
    const Tensor x = RandomBatch(5, s, rng);
    const auto masks = DrawShieldMasks(5, grid, 25, rng);
    const Tensor masked = MaskBatch(x, grid, masks);
    const double term = ShieldTermWithMasks(model, x, grid, masks).item();
    const Tensor p = model.Forward(x), q = model.Forward(masked);
    EXPECT_GE(term, 0.0);
    EXPECT_EQ(term, Add(KlDiv(q, p), KlDiv(p, q)).item());
    EXPECT_NEAR(term, Add(KlDiv(p, q), KlDiv(q, p)).item(), 1e-15);
  }
}

TEST(TotalObjectiveTest, ReducesToCrossEntropy) {
  Rng data_rng = MakeRng(6);
  const ImageShape s{1, 8, 8};
  const Classifier model = Classifier::Mlp(s, 3, 4);
  const Tensor x = RandomBatch(4, s, data_rng);
  const std::vector<int> y{0, 1, 2, 1};
  const double ce = CrossEntropy(model.Forward(x), y).item();

  Rng rng = MakeRng(7);
  const ObjectiveTerms off = TotalObjective(model, x, y, {20.0, 4, 4, 0.0}, rng);
  EXPECT_EQ(off.total.item(), ce);
  EXPECT_FALSE(off.shield.has_value());
  EXPECT_EQ(rng, MakeRng(7));  // no masks drawn

  const ObjectiveTerms zero = TotalObjective(model, x, y, {0.0, 4, 4, 1.0}, rng);
  EXPECT_NEAR(zero.total.item(), ce, 1e-9);
}

TEST(TotalObjectiveTest, AddsWeightedTerm) {
  Rng data_rng = MakeRng(8);
  const ImageShape s{1, 8, 8};
  const Classifier model = Classifier::Mlp(s, 3, 5);
  const Tensor x = RandomBatch(4, s, data_rng);
  const std::vector<int> y{2, 1, 0, 0};
  const ShieldConfig config{20.0, 4, 4, 1.0};
  Rng rng = MakeRng(9);
  Rng replay = rng;
  const double total = TotalObjective(model, x, y, config, rng).total.item();

  const SegmentGrid grid = BuildGrid(s, 4, 4);
  const auto masks = DrawShieldMasks(4, grid, 20.0, replay);
  const Tensor p = model.Forward(x), q = model.Forward(MaskBatch(x, grid, masks));
  double term = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double pi = p[i * 3 + j], qi = q[i * 3 + j];
      term += (qi * std::log(qi / pi) + pi * std::log(pi / qi)) / 4.0;
    }
  }
  double ce = 0.0;
  for (std::size_t i = 0; i < 4; ++i) ce -= std::log(p[i * 3 + y[i]]) / 4.0;
  EXPECT_NEAR(total, ce + term, 1e-12);
}

TEST(TotalObjectiveTest, GradientMatchesFiniteDifferencesWithFrozenMasks) {
  Rng rng = MakeRng(10);
  const ImageShape s{1, 4, 4};
  const Classifier model = Classifier::Mlp(s, 3, 6, 5);
  const Tensor x = RandomBatch(3, s, rng);
  const std::vector<int> y{0, 2, 1};
  const SegmentGrid grid = BuildGrid(s, 2, 2);
  const auto masks = DrawShieldMasks(3, grid, 50, rng);
  EXPECT_LT(GradCheck(model.Parameters(),
                      [&] {
                        const Tensor p = model.Forward(x);
                        return Add(CrossEntropy(p, y),
                                   Scale(ShieldTermWithMasks(model, x, grid, masks, p), 0.7));
                      }),
            1e-4);
}

TEST(ShieldConfigTest, Validation) {
  EXPECT_THROW((ShieldConfig{101.0, 8, 8, 1.0}.Validate()), Error);
  EXPECT_THROW((ShieldConfig{10.0, 8, 8, -1.0}.Validate()), Error);
  EXPECT_NO_THROW((ShieldConfig{100.0, 8, 8, 0.0}.Validate()));
}

}  // namespace
}  // namespace shield
