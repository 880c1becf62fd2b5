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

#ifndef SHIELD_STATS_HPP_
#define SHIELD_STATS_HPP_

// Bayesian signed test with a region of practical equivalence (ROPE) for
// paired differences d_i = metric(candidate)_i - metric(baseline)_i.
//
// Counts of d below -rope, inside [-rope, rope] and above rope feed a
// Dirichlet(n_left + s/3, n_rope + s/3, n_right + s/3) posterior (s = 1),
// sampled by normalising independent Gamma draws.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "shield/csv.hpp"
#include "shield/error.hpp"
#include "shield/rng.hpp"

namespace shield {

inline constexpr double kPriorStrength = 1.0;
inline constexpr std::size_t kDefaultMcSamples = 100000;

struct PairedDifferences {
  std::vector<double> values;
  std::string metric;
  std::string scope;  // dataset/model id, or "pooled"

  static PairedDifferences FromPairs(std::span<const double> candidate,
                                     std::span<const double> baseline,
                                     std::string metric, std::string scope) {
    if (candidate.size() != baseline.size()) {
      throw Error(ErrorKind::kConsistency,
                  "paired differences need equal-length samples");
    }
    PairedDifferences d{{}, std::move(metric), std::move(scope)};
    d.values.reserve(candidate.size());
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      d.values.push_back(candidate[i] - baseline[i]);
    }
    return d;
  }
};

// Empirical quantile with linear interpolation between order statistics
// (position q * (n - 1) in the sorted sample).
inline double Quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::kUsage, "quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

// 25% quantile of |d|.
inline double RopeFromQuantile(const PairedDifferences& diffs) {
  std::vector<double> abs_values;
  abs_values.reserve(diffs.values.size());
  for (double d : diffs.values) abs_values.push_back(std::abs(d));
  return Quantile(std::move(abs_values), 0.25);
}

enum class Region { kLeft = 0, kRope = 1, kRight = 2 };

struct PosteriorTriple {
  std::vector<std::array<double, 3>> samples;  // (p_left, p_rope, p_right)
  double rope = 0.0;
  std::array<std::size_t, 3> counts{};         // (n_left, n_rope, n_right)

  std::array<double, 3> Mean() const {
    std::array<double, 3> m{};
    for (const auto& s : samples) {
      for (int r = 0; r < 3; ++r) m[r] += s[r];
    }
    for (double& v : m) v /= static_cast<double>(samples.size());
    return m;
  }

  // Fraction of samples in which each region carries the largest probability.
  std::array<double, 3> WinFraction() const {
    std::array<double, 3> w{};
    for (const auto& s : samples) {
      w[static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin())] += 1.0;
    }
    for (double& v : w) v /= static_cast<double>(samples.size());
    return w;
  }
};

inline std::array<std::size_t, 3> RegionCounts(std::span<const double> diffs,
                                               double rope) {
  std::array<std::size_t, 3> counts{};
  for (double d : diffs) {
    if (d < -rope) {
      ++counts[0];
    } else if (d > rope) {
      ++counts[2];
    } else {
      ++counts[1];
    }
  }
  return counts;
}

inline PosteriorTriple SignedTest(const PairedDifferences& diffs, double rope,
                                  std::size_t mc_samples, Rng& rng) {
  if (mc_samples < 1000) {
    throw Error(ErrorKind::kUsage, "signed_test needs at least 1000 MC samples");
  }
  if (!(rope >= 0.0)) throw Error(ErrorKind::kUsage, "rope must be >= 0");
  PosteriorTriple post;
  post.rope = rope;
  post.counts = RegionCounts(diffs.values, rope);
  std::array<std::gamma_distribution<double>, 3> gammas;
  for (int r = 0; r < 3; ++r) {
    gammas[r] = std::gamma_distribution<double>(
        static_cast<double>(post.counts[r]) + kPriorStrength / 3.0, 1.0);
  }
  post.samples.reserve(mc_samples);
  while (post.samples.size() < mc_samples) {
    std::array<double, 3> g{};
    for (int r = 0; r < 3; ++r) g[r] = gammas[r](rng);
    const double total = g[0] + g[1] + g[2];
    if (!(total > 0.0)) continue;  // all three underflowed; redraw
    post.samples.push_back({g[0] / total, g[1] / total, g[2] / total});
  }
  return post;
}

enum class Verdict { kLeft, kRope, kRight, kInconclusive };

inline std::string_view VerdictName(Verdict v) {
  switch (v) {
    case Verdict::kLeft: return "left";
    case Verdict::kRope: return "rope";
    case Verdict::kRight: return "right";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "inconclusive";
}

// The region whose posterior mean exceeds `threshold`, if any.
inline Verdict Decide(const std::array<double, 3>& mean, double threshold) {
  if (!(threshold > 0.5 && threshold <= 1.0)) {
    throw Error(ErrorKind::kUsage, "verdict threshold must lie in (0.5, 1]");
  }
  if (mean[2] > threshold) return Verdict::kRight;
  if (mean[0] > threshold) return Verdict::kLeft;
  if (mean[1] > threshold) return Verdict::kRope;
  return Verdict::kInconclusive;
}

inline Verdict Decide(const PosteriorTriple& post, double threshold) {
  return Decide(post.Mean(), threshold);
}

inline nlohmann::json PosteriorSummary(const PairedDifferences& diffs,
                                       const PosteriorTriple& post,
                                       double threshold) {
  const auto mean = post.Mean();
  const auto wins = post.WinFraction();
  return {
      {"metric", diffs.metric},
      {"scope", diffs.scope},
      {"n", diffs.values.size()},
      {"rope", post.rope},
      {"counts",
       {{"left", post.counts[0]}, {"rope", post.counts[1]}, {"right", post.counts[2]}}},
      {"mean", {{"left", mean[0]}, {"rope", mean[1]}, {"right", mean[2]}}},
      {"win_fraction", {{"left", wins[0]}, {"rope", wins[1]}, {"right", wins[2]}}},
      {"mc_samples", post.samples.size()},
      {"threshold", threshold},
      {"verdict", std::string(VerdictName(Decide(mean, threshold)))},
  };
}

inline constexpr const char* kSimplexCsvHeader = "p_left,p_rope,p_right";

inline std::string SimplexSamplesCsv(const PosteriorTriple& post,
                                     std::size_t max_rows = 0) {
  std::string out = std::string(kSimplexCsvHeader) + "\n";
  const std::size_t n = max_rows == 0 ? post.samples.size()
                                      : std::min(max_rows, post.samples.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = post.samples[i];
    out += CsvLine({FormatDouble(s[0]), FormatDouble(s[1]), FormatDouble(s[2])});
  }
  return out;
}

}  // namespace shield

#endif  // SHIELD_STATS_HPP_
