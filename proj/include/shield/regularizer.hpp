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

#ifndef SHIELD_REGULARIZER_HPP_
#define SHIELD_REGULARIZER_HPP_

// The masked-input consistency penalty
//
//   term(x) = KL(f(x') || f(x)) + KL(f(x) || f(x'))
//
// where x' hides a random lambda-percent of x's grid segments behind the
// image's mean colour, and its composition with the classification loss.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shield/error.hpp"
#include "shield/masking.hpp"
#include "shield/model.hpp"
#include "shield/rng.hpp"
#include "shield/tensor.hpp"

namespace shield {

struct ShieldConfig {
  double lambda_pct = 10.0;
  std::size_t grid_rows = 8;
  std::size_t grid_cols = 8;
  double weight = 1.0;

  void Validate() const {
    if (!(lambda_pct >= 0.0 && lambda_pct <= 100.0)) {
      throw Error(ErrorKind::kUsage, "shield lambda must lie in [0, 100], got " +
                                         std::to_string(lambda_pct));
    }
    if (!(weight >= 0.0) || !std::isfinite(weight)) {
      throw Error(ErrorKind::kUsage, "shield weight must be finite and >= 0");
    }
    if (grid_rows == 0 || grid_cols == 0) {
      throw Error(ErrorKind::kUsage, "shield grid must be at least 1x1");
    }
  }
};

// Mean over rows of sum_i p_i * (ln p_i - ln clamp(q_i)). Entries with
// p_i == 0 contribute nothing.
inline Tensor KlDiv(const Tensor& p, const Tensor& q) {
  if (p.rank() != 2 || p.shape() != q.shape()) {
    throw Error(ErrorKind::kShape, "kl_div: shapes " + ShapeString(p.shape()) +
                                       " and " + ShapeString(q.shape()));
  }
  const std::size_t m = p.dim(0), n = p.dim(1);
  for (const Tensor* t : {&p, &q}) {
    auto v = t->data();
    for (std::size_t i = 0; i < m; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += v[i * n + j];
      if (std::abs(total - 1.0) > 1e-6) {
        throw Error(ErrorKind::kDomain, "kl_div: row " + std::to_string(i) +
                                            " sums to " + std::to_string(total));
      }
    }
  }
  // Clamping p inside the log only touches entries below the floor, whose
  // contribution p * ln p is already below 2e-6 in magnitude; at exactly 0 the
  // product vanishes as required.
  Tensor log_p = Log(Clamp(p, kProbabilityFloor, 1.0));
  Tensor log_q = Log(Clamp(q, kProbabilityFloor, 1.0));
  return Scale(Sum(Mul(p, Sub(log_p, log_q))), 1.0 / static_cast<double>(m));
}

// Per-example masks for a batch, drawn in example order from `rng`.
inline std::vector<FeatureMask> DrawShieldMasks(std::size_t batch_size,
                                                const SegmentGrid& grid,
                                                double lambda_pct, Rng& rng) {
  std::vector<FeatureMask> masks;
  masks.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    masks.push_back(SelectHidden(grid.size(), lambda_pct, rng));
  }
  return masks;
}

// x' for every example of a [b, c, h, w] batch, each with its own mean fill.
inline Tensor MaskBatch(const Tensor& batch, const SegmentGrid& grid,
                        std::span<const FeatureMask> masks) {
  const std::size_t per = grid.image_shape.size();
  if (batch.rank() != 4 || batch.dim(0) != masks.size() ||
      batch.size() != masks.size() * per) {
    throw Error(ErrorKind::kShape, "mask_batch: batch " +
                                       ShapeString(batch.shape()) + " with " +
                                       std::to_string(masks.size()) + " masks");
  }
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    auto image = batch.data().subspan(i * per, per);
    const std::vector<double> fill = NeutralValue(image, grid.image_shape);
    ApplyMaskInto(image, grid, masks[i], fill,
                  std::span<double>(out).subspan(i * per, per));
  }
  return Tensor(batch.shape(), std::move(out));
}

inline SegmentGrid ShieldGrid(const Classifier& model, const ShieldConfig& config) {
  return BuildGrid(model.input_shape(), config.grid_rows, config.grid_cols);
}

// Symmetric KL between the predictions on x and on the given masked copies.
// Differentiable through both forward passes. `clean_probs`, when supplied,
// must be model.Forward(batch) recorded on the same tape.
inline Tensor ShieldTermWithMasks(const Classifier& model, const Tensor& batch,
                                  const SegmentGrid& grid,
                                  std::span<const FeatureMask> masks,
                                  const std::optional<Tensor>& clean_probs = {}) {
  const Tensor masked = MaskBatch(batch, grid, masks);
  const Tensor p_clean = clean_probs ? *clean_probs : model.Forward(batch);
  const Tensor p_masked = model.Forward(masked);
  return Add(KlDiv(p_masked, p_clean), KlDiv(p_clean, p_masked));
}

inline Tensor ShieldTerm(const Classifier& model, const Tensor& batch,
                         const ShieldConfig& config, Rng& rng) {
  config.Validate();
  const SegmentGrid grid = ShieldGrid(model, config);
  const std::vector<FeatureMask> masks =
      DrawShieldMasks(batch.dim(0), grid, config.lambda_pct, rng);
  return ShieldTermWithMasks(model, batch, grid, masks);
}

struct ObjectiveTerms {
  Tensor total;
  Tensor cross_entropy;
  std::optional<Tensor> shield;  // absent when the weight is zero
  Tensor probabilities;          // f(x) on the clean batch
};

// cross_entropy + weight * shield_term. With weight 0 no masks are drawn and
// no extra forward pass runs, so the result is the plain loss bit for bit.
inline ObjectiveTerms TotalObjective(const Classifier& model, const Tensor& batch,
                                     std::span<const int> labels,
                                     const ShieldConfig& config, Rng& rng) {
  config.Validate();
  Tensor probs = model.Forward(batch);
  Tensor ce = CrossEntropy(probs, labels);
  if (config.weight == 0.0) {
    return ObjectiveTerms{ce, ce, std::nullopt, probs};
  }
  const SegmentGrid grid = ShieldGrid(model, config);
  const std::vector<FeatureMask> masks =
      DrawShieldMasks(batch.dim(0), grid, config.lambda_pct, rng);
  Tensor term = ShieldTermWithMasks(model, batch, grid, masks, probs);
  Tensor total = Add(ce, Scale(term, config.weight));
  return ObjectiveTerms{total, ce, term, probs};
}

}  // namespace shield

#endif  // SHIELD_REGULARIZER_HPP_
