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

#ifndef SHIELD_EXPLAIN_HPP_
#define SHIELD_EXPLAIN_HPP_

// Local linear explanations over the segment feature space, LIME style:
// perturb an image by hiding random segments, query the black box, and fit a
// kernel-weighted ridge regression from keep-masks to class probabilities.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shield/error.hpp"
#include "shield/linalg.hpp"
#include "shield/masking.hpp"
#include "shield/rng.hpp"
#include "shield/tensor.hpp"

namespace shield {

// Anything that maps a [b, c, h, w] batch to [b, classes] probabilities
// without recording gradients.
template <class M>
concept BlackBox = requires(const M& m, const Tensor& x) {
  { m.Predict(x) } -> std::convertible_to<Tensor>;
};

struct ExplainParams {
  std::size_t samples = 1000;
  double sigma = 8.0;
  double ridge_alpha = 1e-3;
  std::uint64_t seed = 0;
  std::size_t repeats = 10;
  std::size_t eval_batch = 250;  // images per black-box call
};

// Importances A (features x classes) and intercept b of the surrogate
// g(z) = z^T A + b.
struct Explanation {
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<double> importance;  // row-major [features x classes]
  std::vector<double> intercept;
  SegmentGrid grid;
  std::size_t sample_count = 0;
  double sigma = 0.0;
  double ridge_alpha = 0.0;
  std::uint64_t seed = 0;

  double At(std::size_t feature, std::size_t cls) const {
    return importance[feature * num_classes + cls];
  }

  std::vector<double> Surrogate(const FeatureMask& z) const {
    if (z.size() != num_features) {
      throw Error(ErrorKind::kShape, "surrogate: mask has " +
                                         std::to_string(z.size()) +
                                         " entries for " +
                                         std::to_string(num_features) +
                                         " features");
    }
    std::vector<double> out(intercept);
    for (std::size_t i = 0; i < num_features; ++i) {
      if (!z.kept[i]) continue;
      for (std::size_t c = 0; c < num_classes; ++c) out[c] += At(i, c);
    }
    return out;
  }
};

inline nlohmann::json ToJson(const Explanation& e) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < e.num_features; ++i) {
    rows.push_back(std::vector<double>(
        e.importance.begin() + static_cast<std::ptrdiff_t>(i * e.num_classes),
        e.importance.begin() +
            static_cast<std::ptrdiff_t>((i + 1) * e.num_classes)));
  }
  return {
      {"grid",
       {{"rows", e.grid.rows},
        {"cols", e.grid.cols},
        {"image_shape",
         {e.grid.image_shape.channels, e.grid.image_shape.height,
          e.grid.image_shape.width}}}},
      {"A", rows},
      {"b", e.intercept},
      {"params",
       {{"samples", e.sample_count},
        {"sigma", e.sigma},
        {"ridge_alpha", e.ridge_alpha}}},
      {"seed", e.seed},
  };
}

struct NeighborhoodSample {
  FeatureMask z;
  std::vector<double> y;  // black-box probabilities at the masked image
  double w = 0.0;         // kernel weight in (0, 1]
};

// exp(-d^2 / sigma^2) with d the number of hidden features.
inline double KernelWeight(std::size_t hidden, double sigma) {
  const double d = static_cast<double>(hidden);
  return std::exp(-(d * d) / (sigma * sigma));
}

// Keeps each feature independently with probability 1/2.
inline FeatureMask RandomKeepMask(std::size_t n, Rng& rng) {
  std::bernoulli_distribution keep(0.5);
  FeatureMask mask = FeatureMask::AllKept(n);
  for (auto& k : mask.kept) k = keep(rng) ? 1 : 0;
  return mask;
}

// Evaluates the black box on masked copies of `image`, `chunk` at a time.
template <BlackBox Model>
std::vector<std::vector<double>> PredictMasked(const Model& model,
                                               const Tensor& image,
                                               const SegmentGrid& grid,
                                               std::span<const FeatureMask> masks,
                                               std::size_t chunk = 250) {
  chunk = std::max<std::size_t>(1, chunk);
  std::vector<std::vector<double>> out;
  out.reserve(masks.size());
  for (std::size_t start = 0; start < masks.size(); start += chunk) {
    const std::size_t end = std::min(masks.size(), start + chunk);
    const Tensor batch =
        MaskedBatch(image.data(), grid, masks.subspan(start, end - start));
    const Tensor probs = model.Predict(batch);
    const std::size_t k = probs.dim(1);
    for (std::size_t i = 0; i < end - start; ++i) {
      out.emplace_back(probs.data().begin() + static_cast<std::ptrdiff_t>(i * k),
                       probs.data().begin() +
                           static_cast<std::ptrdiff_t>((i + 1) * k));
    }
  }
  return out;
}

template <BlackBox Model>
std::vector<NeighborhoodSample> SampleNeighborhood(const Model& model,
                                                   const Tensor& image,
                                                   const SegmentGrid& grid,
                                                   std::size_t n, double sigma,
                                                   Rng& rng,
                                                   std::size_t chunk = 250) {
  if (n < grid.size() + 2) {
    throw Error(ErrorKind::kUsage,
                "neighborhood of " + std::to_string(n) + " samples cannot fit " +
                    std::to_string(grid.size()) + " features (need at least " +
                    std::to_string(grid.size() + 2) + ")");
  }
  if (!(sigma > 0.0)) throw Error(ErrorKind::kUsage, "sigma must be positive");
  std::vector<FeatureMask> masks;
  masks.reserve(n);
  for (std::size_t s = 0; s < n; ++s) masks.push_back(RandomKeepMask(grid.size(), rng));
  std::vector<std::vector<double>> ys = PredictMasked(model, image, grid, masks, chunk);
  std::vector<NeighborhoodSample> samples;
  samples.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double w = KernelWeight(masks[s].CountHidden(), sigma);
    samples.push_back(NeighborhoodSample{std::move(masks[s]), std::move(ys[s]), w});
  }
  return samples;
}

// Per-class weighted ridge regression with an unpenalised intercept:
//
//   minimise  sum_s w_s (z_s^T a_c + b_c - y_sc)^2 / sum_s w_s + alpha |a_c|^2
//
// The squared error is normalised by the total weight, so rescaling every
// weight (or duplicating every sample) leaves the fit unchanged.
inline Explanation FitLle(std::span<const NeighborhoodSample> samples,
                          double ridge_alpha, const SegmentGrid& grid) {
  const std::size_t f = grid.size();
  if (samples.size() < f + 2) {
    throw Error(ErrorKind::kUsage, "fit_lle: need at least " +
                                       std::to_string(f + 2) + " samples");
  }
  if (!(ridge_alpha >= 0.0)) {
    throw Error(ErrorKind::kUsage, "fit_lle: ridge_alpha must be >= 0");
  }
  const std::size_t k = samples.front().y.size();
  const std::size_t d = f + 1;  // features then intercept
  double total_w = 0.0;
  for (const NeighborhoodSample& s : samples) {
    if (s.z.size() != f || s.y.size() != k) {
      throw Error(ErrorKind::kShape, "fit_lle: inconsistent sample sizes");
    }
    total_w += s.w;
  }
  if (!(total_w > 0.0)) {
    throw Error(ErrorKind::kUsage, "fit_lle: total sample weight is zero");
  }
  std::vector<double> normal(d * d, 0.0);
  std::vector<double> rhs(d * k, 0.0);
  std::vector<std::size_t> active;
  active.reserve(d);
  for (const NeighborhoodSample& s : samples) {
    const double w = s.w / total_w;
    active.clear();
    for (std::size_t i = 0; i < f; ++i) {
      if (s.z.kept[i]) active.push_back(i);
    }
    active.push_back(f);
    for (std::size_t a : active) {
      for (std::size_t b : active) normal[a * d + b] += w;
      for (std::size_t c = 0; c < k; ++c) rhs[a * k + c] += w * s.y[c];
    }
  }
  for (std::size_t i = 0; i < f; ++i) normal[i * d + i] += ridge_alpha;
  if (!CholeskyFactor(normal, d)) {
    throw Error(ErrorKind::kNumeric,
                "fit_lle: normal equations are singular; use ridge_alpha > 0");
  }
  Explanation e;
  e.num_features = f;
  e.num_classes = k;
  e.importance.assign(f * k, 0.0);
  e.intercept.assign(k, 0.0);
  e.grid = grid;
  e.sample_count = samples.size();
  e.ridge_alpha = ridge_alpha;
  std::vector<double> column(d);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t a = 0; a < d; ++a) column[a] = rhs[a * k + c];
    const std::vector<double> sol = CholeskySolve(normal, d, column);
    for (std::size_t i = 0; i < f; ++i) e.importance[i * k + c] = sol[i];
    e.intercept[c] = sol[f];
  }
  return e;
}

template <BlackBox Model>
Explanation ExplainWithRng(const Model& model, const Tensor& image,
                           const SegmentGrid& grid, const ExplainParams& params,
                           Rng& rng) {
  const std::vector<NeighborhoodSample> samples = SampleNeighborhood(
      model, image, grid, params.samples, params.sigma, rng, params.eval_batch);
  Explanation e = FitLle(samples, params.ridge_alpha, grid);
  e.sigma = params.sigma;
  e.seed = params.seed;
  return e;
}

// Stream of the i-th explanation derived from a base seed.
inline Rng ExplanationRng(std::uint64_t seed, std::size_t index) {
  return MakeRng(seed, Stream::kExplain, index);
}

// The first explanation of the seed's stream family.
template <BlackBox Model>
Explanation Explain(const Model& model, const Tensor& image,
                    const SegmentGrid& grid, const ExplainParams& params) {
  Rng rng = ExplanationRng(params.seed, 0);
  return ExplainWithRng(model, image, grid, params, rng);
}

enum class StreamPolicy { kIndependent, kShared };

// k explanations of one image. kIndependent gives explanation i the stream
// ExplanationRng(seed, i); kShared reuses stream 0 for all of them.
template <BlackBox Model>
std::vector<Explanation> RepeatExplanations(
    const Model& model, const Tensor& image, const SegmentGrid& grid,
    const ExplainParams& params, std::size_t k,
    StreamPolicy policy = StreamPolicy::kIndependent) {
  if (k < 2) throw Error(ErrorKind::kUsage, "repeat_explanations needs k >= 2");
  std::vector<Explanation> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Rng rng = ExplanationRng(params.seed, policy == StreamPolicy::kShared ? 0 : i);
    out.push_back(ExplainWithRng(model, image, grid, params, rng));
  }
  return out;
}

}  // namespace shield

#endif  // SHIELD_EXPLAIN_HPP_
