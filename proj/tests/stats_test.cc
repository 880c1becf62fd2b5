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

#include "shield/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "gtest/gtest.h"

namespace shield {
namespace {

// Dirichlet(alpha) closed-form mean and the Monte Carlo standard error of
// each component's sample mean.
struct DirichletMoments {
  std::array<double, 3> mean;
  std::array<double, 3> standard_error;
};

DirichletMoments Moments(std::array<std::size_t, 3> counts, std::size_t mc) {
  std::array<double, 3> alpha{};
  double total = 0.0;
  for (int r = 0; r < 3; ++r) total += alpha[r] = static_cast<double>(counts[r]) + 1.0 / 3.0;
  DirichletMoments m{};
  for (int r = 0; r < 3; ++r) {
    m.mean[r] = alpha[r] / total;
    const double var = alpha[r] * (total - alpha[r]) / (total * total * (total + 1.0));
    m.standard_error[r] = std::sqrt(var / static_cast<double>(mc));
  }
  return m;
}

PairedDifferences Diffs(std::vector<double> v) { return {std::move(v), "m", "s"}; }

TEST(QuantileTest, Examples) {
  EXPECT_EQ(RopeFromQuantile(Diffs({1, -2, 3, -4})), 1.75);
  EXPECT_EQ(RopeFromQuantile(Diffs({0.3, -0.3, 0.3})), 0.3);
  EXPECT_EQ(RopeFromQuantile(Diffs({-0.7})), 0.7);
  EXPECT_EQ(Quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_EQ(Quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_THROW(Quantile({}, 0.5), Error);
}

TEST(SignedTestTest, AllAboveRope) {
  Rng rng = MakeRng(41);
  const PairedDifferences d = Diffs(std::vector<double>(100, 0.5));
  const PosteriorTriple post = SignedTest(d, 0.1, kDefaultMcSamples, rng);
  EXPECT_EQ(post.counts, (std::array<std::size_t, 3>{0, 0, 100}));
  const auto mean = post.Mean();
  const DirichletMoments oracle = Moments(post.counts, kDefaultMcSamples);
  EXPECT_GT(mean[2], 0.97);
  EXPECT_NEAR(oracle.mean[2], (100.0 + 1.0 / 3.0) / 101.0, 1e-15);
  for (int r = 0; r < 3; ++r) EXPECT_LT(std::abs(mean[r] - oracle.mean[r]), 3 * oracle.standard_error[r]);
}

TEST(SignedTestTest, SymmetricInsideRope) {
  Rng rng = MakeRng(42);
  std::vector<double> v;
  for (int i = 0; i < 50; ++i) v.insert(v.end(), {0.2, -0.2});
  const PosteriorTriple post = SignedTest(Diffs(v), 0.25, kDefaultMcSamples, rng);
  EXPECT_EQ(post.counts, (std::array<std::size_t, 3>{0, 100, 0}));
  EXPECT_GT(post.Mean()[1], 0.97);
  EXPECT_EQ(Decide(post, 0.95), Verdict::kRope);
}

TEST(SignedTestTest, BalancedSidesAreSymmetric) {
  Rng rng = MakeRng(43);
  std::vector<double> v;
  for (int i = 0; i < 20; ++i) v.insert(v.end(), {1.0, -1.0});
  const PosteriorTriple post = SignedTest(Diffs(v), 0.5, kDefaultMcSamples, rng);
  const auto mean = post.Mean();
  const DirichletMoments oracle = Moments(post.counts, kDefaultMcSamples);
  EXPECT_LT(std::abs(mean[0] - mean[2]),
            3 * std::hypot(oracle.standard_error[0], oracle.standard_error[2]));
}

TEST(SignedTestTest, SamplesLieOnSimplex) {
  Rng rng = MakeRng(44);
  const PosteriorTriple post = SignedTest(Diffs({0.1, -0.3, 0.0, 0.5, 0.2}), 0.15, 5000, rng);
  ASSERT_EQ(post.samples.size(), 5000u);
  for (const auto& s : post.samples) {
    EXPECT_NEAR(s[0] + s[1] + s[2], 1.0, 1e-12);
    for (double p : s) EXPECT_GE(p, 0.0);
  }
}

TEST(SignedTestTest, BoundaryValuesCountAsRope) {
  EXPECT_EQ(RegionCounts(std::vector<double>{-1.0, 1.0, 1.5, -1.5}, 1.0),
            (std::array<std::size_t, 3>{1, 2, 1}));
}

TEST(SignedTestTest, RejectsFewMonteCarloSamples) {
  Rng rng = MakeRng(45);
  EXPECT_THROW(SignedTest(Diffs({1.0}), 0.1, 999, rng), Error);
}

TEST(SignedTestTest, MoreRightEvidenceNeverLowersRight) {
  std::vector<double> v{-0.4, 0.05, 0.3, 0.6, -0.2, 0.01};
  double previous = 0.0;
  double previous_se = 0.0;
  for (int extra = 0; extra < 8; ++extra) {
    Rng rng = MakeRng(46, Stream::kPosterior, static_cast<std::uint64_t>(extra));
    const PosteriorTriple post = SignedTest(Diffs(v), 0.1, 20000, rng);
    const double right = post.Mean()[2];
    const double se = Moments(post.counts, 20000).standard_error[2];
    EXPECT_GE(right, previous - 3 * std::hypot(se, previous_se));
    // The exact posterior mean is strictly increasing.
    if (extra > 0) {
      auto before = post.counts;
      --before[2];
      EXPECT_GT(Moments(post.counts, 1).mean[2], Moments(before, 1).mean[2]);
    }
    previous = right;
    previous_se = se;
    v.push_back(1.0);
  }
}

TEST(SignedTestTest, NegationSwapsLeftAndRight) {
  const std::vector<double> v{0.4, 0.3, -0.1, 0.8, 0.02, -0.5, 0.6, 0.7};
  std::vector<double> neg(v);
  for (double& x : neg) x = -x;
  Rng a = MakeRng(47), b = MakeRng(48);
  const PosteriorTriple p = SignedTest(Diffs(v), 0.05, kDefaultMcSamples, a);
  const PosteriorTriple q = SignedTest(Diffs(neg), 0.05, kDefaultMcSamples, b);
  const DirichletMoments m = Moments(p.counts, kDefaultMcSamples);
  EXPECT_LT(std::abs(p.Mean()[2] - q.Mean()[0]), 3 * std::sqrt(2.0) * m.standard_error[2]);
  EXPECT_LT(std::abs(p.Mean()[0] - q.Mean()[2]), 3 * std::sqrt(2.0) * m.standard_error[0]);
}

TEST(VerdictTest, Examples) {
  EXPECT_EQ(Decide({0.01, 0.01, 0.98}, 0.95), Verdict::kRight);
  EXPECT_EQ(Decide({0.4, 0.3, 0.3}, 0.95), Verdict::kInconclusive);
  EXPECT_EQ(Decide({0.02, 0.96, 0.02}, 0.95), Verdict::kRope);
  EXPECT_EQ(Decide({0.97, 0.02, 0.01}, 0.95), Verdict::kLeft);
  EXPECT_THROW(Decide({0.3, 0.3, 0.4}, 0.5), Error);
  EXPECT_THROW(Decide({0.3, 0.3, 0.4}, 1.1), Error);
}

TEST(PosteriorSummaryTest, JsonFields) {
  Rng rng = MakeRng(49);
  const PairedDifferences d = PairedDifferences::FromPairs(
      std::vector<double>{0.9, 0.8, 0.7}, std::vector<double>{0.5, 0.8, 0.9},
      "robustness", "pooled");
  EXPECT_NEAR(d.values[0], 0.4, 1e-15);
  const PosteriorTriple post = SignedTest(d, RopeFromQuantile(d), 2000, rng);
  const nlohmann::json j = PosteriorSummary(d, post, 0.95);
  EXPECT_EQ(j["metric"], "robustness");
  EXPECT_EQ(j["scope"], "pooled");
  EXPECT_EQ(j["n"], 3);
  EXPECT_EQ(j["verdict"], "inconclusive");
  const std::string csv = SimplexSamplesCsv(post, 10);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
  EXPECT_THROW(PairedDifferences::FromPairs(std::vector<double>{1.0}, std::vector<double>{},
                                            "m", "s"),
               Error);
}

}  // namespace
}  // namespace shield
