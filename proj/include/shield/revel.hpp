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

#ifndef SHIELD_REVEL_HPP_
#define SHIELD_REVEL_HPP_

// Explanation quality metrics. All five lie in [0, 1], higher is better.
//
// Surrogate/model agreement is measured as
//   agreement(u, v) = clamp(1 - |u - v|_2 / sqrt(2), 0, 1)
// since sqrt(2) bounds the distance between two probability vectors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "shield/csv.hpp"
#include "shield/error.hpp"
#include "shield/explain.hpp"
#include "shield/masking.hpp"
#include "shield/rng.hpp"
#include "shield/tensor.hpp"

namespace shield {

inline double Agreement(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::kShape, "agreement: vectors of different length");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) sq += (u[i] - v[i]) * (u[i] - v[i]);
  return std::clamp(1.0 - std::sqrt(sq) / std::sqrt(2.0), 0.0, 1.0);
}

// Row norms at or below this count as zero. Fitting a constant black box
// leaves importances of order 1e-17, not exact zeros.
inline constexpr double kNegligibleImportance = 1e-12;

namespace internal {

inline std::size_t ArgmaxIndex(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

template <BlackBox Model>
std::vector<double> PredictOne(const Model& model, const Tensor& image,
                               const SegmentGrid& grid, const FeatureMask& z) {
  const FeatureMask masks[] = {z};
  return PredictMasked(model, image, grid, masks).front();
}

}  // namespace internal

// Agreement at the original example (nothing hidden).
template <BlackBox Model>
double LocalConcordance(const Explanation& expl, const Model& model,
                        const Tensor& image) {
  const FeatureMask all = FeatureMask::AllKept(expl.num_features);
  const std::vector<double> g = expl.Surrogate(all);
  const Tensor batch = Reshape(image, Shape{1, image.dim(0), image.dim(1), image.dim(2)});
  const Tensor f = model.Predict(batch);
  return Agreement(g, f.data());
}

// Mean agreement over m random keep-masks (keep probability 1/2).
template <BlackBox Model>
double LocalFidelity(const Explanation& expl, const Model& model,
                     const Tensor& image, const SegmentGrid& grid, std::size_t m,
                     Rng& rng) {
  if (m == 0) throw Error(ErrorKind::kUsage, "local_fidelity needs m >= 1");
  std::vector<FeatureMask> masks;
  masks.reserve(m);
  for (std::size_t i = 0; i < m; ++i) masks.push_back(RandomKeepMask(grid.size(), rng));
  const std::vector<std::vector<double>> fs = PredictMasked(model, image, grid, masks);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    total += Agreement(expl.Surrogate(masks[i]), fs[i]);
  }
  return total / static_cast<double>(m);
}

struct FlipSearch {
  FeatureMask mask;      // z0, the first mask whose surrogate class differs
  bool flipped = false;  // false when hiding everything never flips
  std::size_t original_class = 0;
};

// Hides features in decreasing order of A[i, c] - A[i, c2] (c the surrogate's
// class at the full mask, c2 its runner-up) until the surrogate's argmax moves.
inline FlipSearch GreedyFlipMask(const Explanation& expl) {
  const std::size_t f = expl.num_features;
  FlipSearch out{FeatureMask::AllKept(f), false, 0};
  const std::vector<double> g0 = expl.Surrogate(out.mask);
  const std::size_t c = internal::ArgmaxIndex(g0);
  out.original_class = c;
  std::size_t c2 = c == 0 ? 1 : 0;
  for (std::size_t j = 0; j < g0.size(); ++j) {
    if (j != c && g0[j] > g0[c2]) c2 = j;
  }
  std::vector<std::size_t> order(f);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return expl.At(a, c) - expl.At(a, c2) > expl.At(b, c) - expl.At(b, c2);
  });
  for (std::size_t i : order) {
    out.mask.kept[i] = 0;
    if (internal::ArgmaxIndex(expl.Surrogate(out.mask)) != c) {
      out.flipped = true;
      return out;
    }
  }
  return out;
}

struct PrescriptivityResult {
  double value = 0.0;
  bool flipped = false;
  FeatureMask flip_mask;
};

// Agreement at the greedy class-flip mask. When even the all-hidden mask keeps
// the surrogate's class, the value is 0 and `flipped` is false.
template <BlackBox Model>
PrescriptivityResult Prescriptivity(const Explanation& expl, const Model& model,
                                    const Tensor& image, const SegmentGrid& grid) {
  FlipSearch search = GreedyFlipMask(expl);
  if (!search.flipped) return {0.0, false, std::move(search.mask)};
  const std::vector<double> f = internal::PredictOne(model, image, grid, search.mask);
  const double value = Agreement(expl.Surrogate(search.mask), f);
  return {value, true, std::move(search.mask)};
}

// With i_k the L2 norm of row k of A and i~_k = i_k / max_k i_k,
// (n - sum_k i~_k) / (n - 1). A negligible A scores 0.
inline double Conciseness(const Explanation& expl) {
  const std::size_t n = expl.num_features;
  if (n < 2) throw Error(ErrorKind::kUsage, "conciseness needs >= 2 features");
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < expl.num_classes; ++c) sq += expl.At(i, c) * expl.At(i, c);
    norms[i] = std::sqrt(sq);
  }
  const double top = *std::max_element(norms.begin(), norms.end());
  if (!(top > kNegligibleImportance)) return 0.0;
  double total = 0.0;
  for (double v : norms) total += v / top;
  const double nn = static_cast<double>(n);
  return std::clamp((nn - total) / (nn - 1.0), 0.0, 1.0);
}

// Mean over unordered pairs of max(0, cosine) between flattened A matrices.
// A pair involving a negligible A contributes 0.
inline double Robustness(std::span<const Explanation> expls) {
  if (expls.size() < 2) {
    throw Error(ErrorKind::kUsage, "robustness needs at least 2 explanations");
  }
  std::vector<double> norms;
  for (const Explanation& e : expls) {
    if (e.importance.size() != expls.front().importance.size()) {
      throw Error(ErrorKind::kShape, "robustness: explanations differ in size");
    }
    double sq = 0.0;
    for (double v : e.importance) sq += v * v;
    norms.push_back(std::sqrt(sq));
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < expls.size(); ++a) {
    for (std::size_t b = a + 1; b < expls.size(); ++b) {
      ++pairs;
      if (!(norms[a] > kNegligibleImportance) || !(norms[b] > kNegligibleImportance)) {
        continue;
      }
      double dot = 0.0;
      for (std::size_t i = 0; i < expls[a].importance.size(); ++i) {
        dot += expls[a].importance[i] * expls[b].importance[i];
      }
      total += std::clamp(dot / (norms[a] * norms[b]), 0.0, 1.0);
    }
  }
  return total / static_cast<double>(pairs);
}

struct MetricParams {
  ExplainParams explain;
  std::size_t fidelity_samples = 100;
};

struct MetricReport {
  std::uint64_t example_id = 0;
  double local_concordance = 0.0;
  double local_fidelity = 0.0;
  double prescriptivity = 0.0;
  double conciseness = 0.0;
  double robustness = 0.0;
  bool prescriptivity_flipped = false;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::size_t repeats = 0;
  std::size_t fidelity_samples = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

inline constexpr const char* kMetricNames[] = {
    "local_concordance", "local_fidelity", "prescriptivity", "conciseness",
    "robustness"};

inline double MetricValue(const MetricReport& r, std::string_view metric) {
  if (metric == "local_concordance") return r.local_concordance;
  if (metric == "local_fidelity") return r.local_fidelity;
  if (metric == "prescriptivity") return r.prescriptivity;
  if (metric == "conciseness") return r.conciseness;
  if (metric == "robustness") return r.robustness;
  throw Error(ErrorKind::kUsage, "unknown metric '" + std::string(metric) + "'");
}

inline constexpr const char* kMetricCsvHeader =
    "example_id,local_concordance,local_fidelity,prescriptivity,conciseness,"
    "robustness,prescriptivity_flipped,seed,samples,repeats,fidelity_samples";

inline std::string MetricCsvRow(const MetricReport& r) {
  return CsvLine({std::to_string(r.example_id), FormatDouble(r.local_concordance),
                  FormatDouble(r.local_fidelity), FormatDouble(r.prescriptivity),
                  FormatDouble(r.conciseness), FormatDouble(r.robustness),
                  r.prescriptivity_flipped ? "1" : "0", std::to_string(r.seed),
                  std::to_string(r.samples), std::to_string(r.repeats),
                  std::to_string(r.fidelity_samples)});
}

inline std::vector<MetricReport> ParseMetricCsv(std::string_view text) {
  const auto rows = ParseCsv(text);
  if (rows.empty() || CsvLine(rows.front()) != std::string(kMetricCsvHeader) + "\n") {
    throw Error(ErrorKind::kFormat, "metric csv: unexpected header");
  }
  std::vector<MetricReport> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 11) throw Error(ErrorKind::kFormat, "metric csv: bad row width");
    MetricReport r;
    r.example_id = std::stoull(f[0]);
    r.local_concordance = ParseDouble(f[1]);
    r.local_fidelity = ParseDouble(f[2]);
    r.prescriptivity = ParseDouble(f[3]);
    r.conciseness = ParseDouble(f[4]);
    r.robustness = ParseDouble(f[5]);
    r.prescriptivity_flipped = f[6] == "1";
    r.seed = std::stoull(f[7]);
    r.samples = std::stoull(f[8]);
    r.repeats = std::stoull(f[9]);
    r.fidelity_samples = std::stoull(f[10]);
    out.push_back(r);
  }
  return out;
}

// Robustness over params.explain.repeats explanations; the other four metrics
// on the first of them. Deterministic in params.explain.seed.
template <BlackBox Model>
MetricReport Report(const Model& model, const Tensor& image,
                    const SegmentGrid& grid, const MetricParams& params,
                    std::uint64_t example_id = 0) {
  const std::vector<Explanation> expls = RepeatExplanations(
      model, image, grid, params.explain, params.explain.repeats);
  const Explanation& first = expls.front();
  MetricReport r;
  r.example_id = example_id;
  r.seed = params.explain.seed;
  r.samples = params.explain.samples;
  r.repeats = params.explain.repeats;
  r.fidelity_samples = params.fidelity_samples;
  r.robustness = Robustness(expls);
  r.local_concordance = LocalConcordance(first, model, image);
  Rng fidelity_rng = MakeRng(params.explain.seed, Stream::kFidelity);
  r.local_fidelity = LocalFidelity(first, model, image, grid,
                                   params.fidelity_samples, fidelity_rng);
  const PrescriptivityResult p = Prescriptivity(first, model, image, grid);
  r.prescriptivity = p.value;
  r.prescriptivity_flipped = p.flipped;
  r.conciseness = Conciseness(first);
  return r;
}

}  // namespace shield

#endif  // SHIELD_REVEL_HPP_
