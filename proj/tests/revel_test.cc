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

#include "shield/revel.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "shield/model.hpp"
#include "test_util.hpp"

namespace shield {
namespace {

using ::shield::testing::ConstantBlackBox;
using ::shield::testing::LinearBlackBox;
using ::shield::testing::UniformValues;

Explanation MakeExplanation(std::size_t features, std::vector<double> a,
                            std::vector<double> b, const SegmentGrid& grid) {
  Explanation e;
  e.num_features = features;
  e.num_classes = b.size();
  e.importance = std::move(a);
  e.intercept = std::move(b);
  e.grid = grid;
  return e;
}

std::size_t ArgmaxOf(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

class RevelTest : public ::testing::Test {
 protected:
  RevelTest()
      : rng_(MakeRng(31)),
        image_(Shape{1, 8, 8}, UniformValues(64, 0, 1, rng_)),
        grid_(BuildGrid({1, 8, 8}, 2, 2)) {}

  // Linear box with rows summing to zero and the fitted explanation of it.
  LinearBlackBox Linear(std::vector<double>* a_out = nullptr) {
    std::vector<double> a = UniformValues(4 * 2, -0.1, 0.1, rng_);
    for (std::size_t f = 0; f < 4; ++f) a[f * 2 + 1] = -a[f * 2];
    if (a_out) *a_out = a;
    return LinearBlackBox(image_, grid_, a, {0.5, 0.5});
  }

  static ExplainParams OracleParams() {
    ExplainParams p;
    p.ridge_alpha = 1e-10;
    return p;
  }

  Rng rng_;
  Tensor image_;
  SegmentGrid grid_;
};

TEST(AgreementTest, ClosedForm) {
  const std::vector<double> f{0.5, 0.5};
  EXPECT_EQ(Agreement(f, f), 1.0);
  EXPECT_EQ(Agreement(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_NEAR(Agreement(std::vector<double>{0.6, 0.4}, f), 0.9, 1e-12);
  EXPECT_EQ(Agreement(std::vector<double>{3, 0}, std::vector<double>{0, 0}), 0.0);
  EXPECT_THROW(Agreement(f, std::vector<double>{1.0}), Error);
}

TEST_F(RevelTest, LocalConcordanceExamples) {
  const ConstantBlackBox f{{0.5, 0.5}};
  EXPECT_NEAR(LocalConcordance(MakeExplanation(4, std::vector<double>(8, 0.0), {0.6, 0.4}, grid_),
                               f, image_),
              0.9, 1e-12);
  const ConstantBlackBox onehot{{1.0, 0.0}};
  EXPECT_EQ(LocalConcordance(MakeExplanation(4, std::vector<double>(8, 0.0), {0.0, 1.0}, grid_),
                             onehot, image_),
            0.0);
  const LinearBlackBox box = Linear();
  const Explanation e = Explain(box, image_, grid_, OracleParams());
  EXPECT_NEAR(LocalConcordance(e, box, image_), 1.0, 1e-6);
}

TEST_F(RevelTest, LocalFidelityExamples) {
  const Explanation centroid = MakeExplanation(4, std::vector<double>(8, 0.0), {0.5, 0.5}, grid_);
  const ConstantBlackBox onehot{{1.0, 0.0}};
  Rng r1 = MakeRng(1);
  EXPECT_NEAR(LocalFidelity(centroid, onehot, image_, grid_, 100, r1), 0.5, 1e-15);

  const LinearBlackBox box = Linear();
  const Explanation e = Explain(box, image_, grid_, OracleParams());
  Rng a = MakeRng(2), b = MakeRng(2);
  const double fa = LocalFidelity(e, box, image_, grid_, 100, a);
  EXPECT_NEAR(fa, 1.0, 1e-4);
  EXPECT_EQ(fa, LocalFidelity(e, box, image_, grid_, 100, b));
  EXPECT_THROW(LocalFidelity(e, box, image_, grid_, 0, a), Error);
}

TEST_F(RevelTest, PrescriptivityTwoFeatureCase) {
  // g(1,1) = (1, 0.5); hiding feature 0 gives (0, 0.5), a flip.
  const SegmentGrid grid = BuildGrid({1, 8, 8}, 1, 2);
  const Explanation e = MakeExplanation(2, {1.0, 0.0, 0.0, 0.5}, {0.0, 0.0}, grid);
  const FlipSearch search = GreedyFlipMask(e);
  ASSERT_TRUE(search.flipped);
  EXPECT_EQ(search.mask, (FeatureMask{{0, 1}}));
  // Exhaustive check over the four masks: (0, 1) is the unique one-hide flip.
  std::size_t one_hide_flips = 0;
  for (int bits = 0; bits < 4; ++bits) {
    const FeatureMask z{{static_cast<std::uint8_t>(bits & 1),
                         static_cast<std::uint8_t>((bits >> 1) & 1)}};
    if (z.CountHidden() == 1 && ArgmaxOf(e.Surrogate(z)) != 0) ++one_hide_flips;
  }
  EXPECT_EQ(one_hide_flips, 1u);
}

TEST_F(RevelTest, PrescriptivityLinearAndConstant) {
  const LinearBlackBox box = Linear();
  const Explanation e = Explain(box, image_, grid_, OracleParams());
  const PrescriptivityResult p = Prescriptivity(e, box, image_, grid_);
  if (p.flipped) EXPECT_NEAR(p.value, 1.0, 1e-4);

  const Explanation flat = MakeExplanation(4, std::vector<double>(8, 0.0), {0.3, 0.7}, grid_);
  const PrescriptivityResult none = Prescriptivity(flat, ConstantBlackBox{{0.3, 0.7}}, image_, grid_);
  EXPECT_FALSE(none.flipped);
  EXPECT_EQ(none.value, 0.0);
}

// A linear box whose class flips when its single strong feature is hidden.
TEST_F(RevelTest, PrescriptivityLinearKnownFlip) {
  const std::vector<double> a{0.3, -0.3, 0.0, 0.0, 0.01, -0.01, 0.0, 0.0};
  const LinearBlackBox box(image_, grid_, a, {0.4, 0.6});
  ExplainParams params;
  params.ridge_alpha = 1e-10;
  const Explanation e = Explain(box, image_, grid_, params);
  const PrescriptivityResult p = Prescriptivity(e, box, image_, grid_);
  ASSERT_TRUE(p.flipped);
  EXPECT_EQ(p.flip_mask, (FeatureMask{{0, 1, 1, 1}}));
  EXPECT_NEAR(p.value, 1.0, 1e-4);
}

TEST(PrescriptivityBruteForceTest, GreedyNeverBeatsMinimalFlip) {
  Rng rng = MakeRng(32);
  for (std::size_t f = 2; f <= 12; ++f) {
    const SegmentGrid grid = BuildGrid({1, 12, 12}, 1, f);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t k = 2 + static_cast<std::size_t>(trial % 3);
      const Explanation e = MakeExplanation(f, UniformValues(f * k, -1, 1, rng),
                                            UniformValues(k, 0, 1, rng), grid);
      const std::size_t c = ArgmaxOf(e.Surrogate(FeatureMask::AllKept(f)));
      std::size_t minimal = f + 1;
      for (std::uint32_t bits = 0; bits < (1u << f); ++bits) {
        FeatureMask z = FeatureMask::AllKept(f);
        for (std::size_t i = 0; i < f; ++i) z.kept[i] = (bits >> i) & 1;
        if (ArgmaxOf(e.Surrogate(z)) != c) minimal = std::min(minimal, z.CountHidden());
      }
      const FlipSearch search = GreedyFlipMask(e);
      EXPECT_EQ(search.original_class, c);
      if (search.flipped) {
        EXPECT_NE(ArgmaxOf(e.Surrogate(search.mask)), c);
        EXPECT_GE(search.mask.CountHidden(), minimal);
      } else {
        EXPECT_EQ(ArgmaxOf(e.Surrogate(FeatureMask::AllHidden(f))), c);
      }
    }
  }
}

TEST_F(RevelTest, ConcisenessExamples) {
  std::vector<double> one_hot(8, 0.0);
  one_hot[5] = 0.7;
  EXPECT_EQ(Conciseness(MakeExplanation(4, one_hot, {0, 0}, grid_)), 1.0);
  EXPECT_EQ(Conciseness(MakeExplanation(4, {1, 0, 0, 1, -1, 0, 0, -1}, {0, 0}, grid_)), 0.0);
  EXPECT_NEAR(Conciseness(MakeExplanation(4, {0.6, 0.8, 0.3, 0.4, 0, 0.5, 0, 0}, {0, 0}, grid_)),
              2.0 / 3.0, 1e-15);
  EXPECT_EQ(Conciseness(MakeExplanation(4, std::vector<double>(8, 0.0), {0, 0}, grid_)), 0.0);
}

// Scaling by a power of two is exact, so the result is bitwise unchanged.
// A factor of 3 rounds the entries of 3A, so only near-equality holds.
TEST_F(RevelTest, ConcisenessScaleInvariant) {
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> a = UniformValues(8, -1, 1, rng_);
    std::vector<double> times4(a), times3(a);
    for (double& v : times4) v *= 4.0;
    for (double& v : times3) v *= 3.0;
    const double base = Conciseness(MakeExplanation(4, a, {0, 0}, grid_));
    EXPECT_EQ(base, Conciseness(MakeExplanation(4, times4, {0, 0}, grid_)));
    EXPECT_NEAR(base, Conciseness(MakeExplanation(4, times3, {0, 0}, grid_)), 1e-15);
  }
}

TEST_F(RevelTest, RobustnessExamples) {
  const std::vector<double> a = UniformValues(8, -1, 1, rng_);
  std::vector<double> neg(a);
  for (double& v : neg) v = -v;
  const std::vector<Explanation> same{MakeExplanation(4, a, {0, 0}, grid_),
                                      MakeExplanation(4, a, {0, 0}, grid_)};
  EXPECT_NEAR(Robustness(same), 1.0, 1e-15);
  const std::vector<Explanation> anti{MakeExplanation(4, a, {0, 0}, grid_),
                                      MakeExplanation(4, neg, {0, 0}, grid_)};
  EXPECT_EQ(Robustness(anti), 0.0);

  // Cosines 1, 0.5, 0.5.
  const SegmentGrid g2 = BuildGrid({1, 8, 8}, 1, 2);
  const std::vector<Explanation> three{
      MakeExplanation(2, {1, 0}, {0}, g2), MakeExplanation(2, {1, 0}, {0}, g2),
      MakeExplanation(2, {0.5, std::sqrt(3.0) / 2}, {0}, g2)};
  EXPECT_NEAR(Robustness(three), 2.0 / 3.0, 1e-15);
  const std::vector<Explanation> permuted{three[2], three[0], three[1]};
  EXPECT_NEAR(Robustness(permuted), Robustness(three), 1e-15);

  const std::vector<Explanation> zero{MakeExplanation(4, a, {0, 0}, grid_),
                                      MakeExplanation(4, std::vector<double>(8, 0), {0, 0}, grid_)};
  EXPECT_EQ(Robustness(zero), 0.0);
  EXPECT_THROW(Robustness(std::span<const Explanation>(same).first(1)), Error);
}

TEST_F(RevelTest, RobustnessPermutationInvariant) {
  std::vector<Explanation> expls;
  for (int i = 0; i < 6; ++i) {
    expls.push_back(MakeExplanation(4, UniformValues(8, -1, 1, rng_), {0, 0}, grid_));
  }
  const double base = Robustness(expls);
  std::shuffle(expls.begin(), expls.end(), rng_);
  EXPECT_NEAR(Robustness(expls), base, 1e-14);
}

// Random models, images and explanations: every metric stays in [0, 1].
TEST(MetricFuzzTest, AllValuesInUnitInterval) {
  Rng rng = MakeRng(33);
  const SegmentGrid grid = BuildGrid({1, 8, 8}, 2, 2);
  for (int trial = 0; trial < 1000; ++trial) {
    const Classifier model = Classifier::Mlp({1, 8, 8}, 3, static_cast<std::uint64_t>(trial), 4);
    const Tensor image(Shape{1, 8, 8}, UniformValues(64, 0, 1, rng));
    const double scale = std::pow(10.0, static_cast<double>(trial % 5) - 2.0);
    const Explanation e = MakeExplanation(4, UniformValues(12, -scale, scale, rng),
                                          UniformValues(3, -scale, scale, rng), grid);
    const Explanation e2 = MakeExplanation(4, UniformValues(12, -1, 1, rng), {0, 0, 0}, grid);
    const double values[] = {
        LocalConcordance(e, model, image),
        LocalFidelity(e, model, image, grid, 5, rng),
        Prescriptivity(e, model, image, grid).value,
        Conciseness(e),
        Robustness(std::vector<Explanation>{e, e2}),
    };
    for (double v : values) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST_F(RevelTest, ReportOnLinearBox) {
  const LinearBlackBox box = Linear();
  MetricParams params;
  const MetricReport r = Report(box, image_, grid_, params, 7);
  EXPECT_GE(r.local_concordance, 0.999);
  EXPECT_GE(r.local_fidelity, 0.999);
  EXPECT_GE(r.robustness, 0.999);
  EXPECT_EQ(r.example_id, 7u);
  EXPECT_EQ(r.repeats, 10u);
  EXPECT_EQ(r, Report(box, image_, grid_, params, 7));
}

TEST_F(RevelTest, ReportOnConstantModel) {
  MetricParams params;
  params.explain.samples = 200;
  params.explain.repeats = 2;
  const MetricReport r = Report(ConstantBlackBox{{0.2, 0.8}}, image_, grid_, params);
  EXPECT_EQ(r.conciseness, 0.0);
  EXPECT_EQ(r.prescriptivity, 0.0);
  EXPECT_FALSE(r.prescriptivity_flipped);
}

TEST(MetricCsvTest, RoundTrip) {
  MetricReport r{3, 0.25, 0.5, 0.125, 1.0 / 3.0, 0.9, true, 42, 1000, 10, 100};
  const std::string text = std::string(kMetricCsvHeader) + "\n" + MetricCsvRow(r);
  const auto back = ParseMetricCsv(text);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], r);
  EXPECT_THROW(ParseMetricCsv("bad,header\n"), Error);
}

}  // namespace
}  // namespace shield
