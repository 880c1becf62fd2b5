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

#ifndef SHIELD_MASKING_HPP_
#define SHIELD_MASKING_HPP_

// Square-segment feature space over images and the hide-by-mean-colour
// transformation applied to it.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "shield/error.hpp"
#include "shield/model.hpp"
#include "shield/rng.hpp"
#include "shield/tensor.hpp"

namespace shield {

struct SegmentBounds {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t area() const { return height * width; }
};

// Row-major grid of rectangular segments tiling an image. Every row of
// segments but the last has height floor(h / rows); the last absorbs the
// remainder. Columns likewise.
struct SegmentGrid {
  ImageShape image_shape;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<SegmentBounds> segments;

  std::size_t size() const { return segments.size(); }
};

// kept[i] is true when segment i stays visible.
struct FeatureMask {
  std::vector<std::uint8_t> kept;

  static FeatureMask AllKept(std::size_t n) {
    return FeatureMask{std::vector<std::uint8_t>(n, 1)};
  }
  static FeatureMask AllHidden(std::size_t n) {
    return FeatureMask{std::vector<std::uint8_t>(n, 0)};
  }

  std::size_t size() const { return kept.size(); }
  std::size_t CountHidden() const {
    std::size_t hidden = 0;
    for (std::uint8_t k : kept) hidden += k ? 0 : 1;
    return hidden;
  }
  friend bool operator==(const FeatureMask&, const FeatureMask&) = default;
};

inline SegmentGrid BuildGrid(ImageShape shape, std::size_t rows,
                             std::size_t cols) {
  if (rows == 0 || cols == 0 || rows > shape.height || cols > shape.width) {
    throw Error(ErrorKind::kUsage,
                "grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                    " does not fit a " + std::to_string(shape.height) + "x" +
                    std::to_string(shape.width) + " image");
  }
  SegmentGrid grid{shape, rows, cols, {}};
  grid.segments.reserve(rows * cols);
  const std::size_t seg_h = shape.height / rows;
  const std::size_t seg_w = shape.width / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t top = r * seg_h;
    const std::size_t height = (r + 1 == rows) ? shape.height - top : seg_h;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t left = c * seg_w;
      const std::size_t width = (c + 1 == cols) ? shape.width - left : seg_w;
      grid.segments.push_back(SegmentBounds{top, left, height, width});
    }
  }
  return grid;
}

// Per-channel mean over the whole image, laid out [c, h, w].
inline std::vector<double> NeutralValue(std::span<const double> image,
                                        ImageShape shape) {
  if (image.size() != shape.size()) {
    throw Error(ErrorKind::kShape, "neutral_value: image size mismatch");
  }
  const std::size_t area = shape.height * shape.width;
  std::vector<double> color(shape.channels, 0.0);
  for (std::size_t ch = 0; ch < shape.channels; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < area; ++i) acc += image[ch * area + i];
    color[ch] = acc / static_cast<double>(area);
  }
  return color;
}

inline std::vector<double> NeutralValue(const Tensor& image) {
  if (image.rank() != 3) {
    throw Error(ErrorKind::kShape, "neutral_value expects [c, h, w], got " +
                                       ShapeString(image.shape()));
  }
  return NeutralValue(image.data(),
                      ImageShape{image.dim(0), image.dim(1), image.dim(2)});
}

// Number of segments hidden for a percentage: round-half-up of
// lambda/100 * n, raised to 1 whenever lambda > 0.
inline std::size_t HiddenCount(std::size_t num_segments, double lambda_pct) {
  if (!(lambda_pct >= 0.0 && lambda_pct <= 100.0)) {
    throw Error(ErrorKind::kUsage, "lambda must lie in [0, 100], got " +
                                       std::to_string(lambda_pct));
  }
  auto k = static_cast<std::size_t>(
      std::floor(lambda_pct / 100.0 * static_cast<double>(num_segments) + 0.5));
  if (lambda_pct > 0.0 && k == 0) k = 1;
  return std::min(k, num_segments);
}

// Hides HiddenCount(n, lambda) segments drawn uniformly without replacement.
inline FeatureMask SelectHidden(std::size_t num_segments, double lambda_pct,
                                Rng& rng) {
  const std::size_t k = HiddenCount(num_segments, lambda_pct);
  std::vector<std::size_t> order(num_segments);
  std::iota(order.begin(), order.end(), std::size_t{0});
  FeatureMask mask = FeatureMask::AllKept(num_segments);
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, num_segments - 1);
    std::swap(order[i], order[pick(rng)]);
    mask.kept[order[i]] = 0;
  }
  return mask;
}

// Writes the transformed image into `out` (same layout as `image`). Hidden
// segments take the fill colour channel-wise; every other value is copied.
inline void ApplyMaskInto(std::span<const double> image, const SegmentGrid& grid,
                          const FeatureMask& mask, std::span<const double> fill,
                          std::span<double> out) {
  const ImageShape& s = grid.image_shape;
  if (mask.size() != grid.size()) {
    throw Error(ErrorKind::kShape, "mask has " + std::to_string(mask.size()) +
                                       " entries for a grid of " +
                                       std::to_string(grid.size()));
  }
  if (image.size() != s.size() || out.size() != s.size() ||
      fill.size() != s.channels) {
    throw Error(ErrorKind::kShape, "apply_mask: image/fill size mismatch");
  }
  std::copy(image.begin(), image.end(), out.begin());
  const std::size_t area = s.height * s.width;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (mask.kept[i]) continue;
    const SegmentBounds& b = grid.segments[i];
    for (std::size_t ch = 0; ch < s.channels; ++ch) {
      for (std::size_t y = b.top; y < b.top + b.height; ++y) {
        double* row = out.data() + ch * area + y * s.width + b.left;
        std::fill(row, row + b.width, fill[ch]);
      }
    }
  }
}

inline Tensor ApplyMask(const Tensor& image, const SegmentGrid& grid,
                        const FeatureMask& mask, std::span<const double> fill) {
  std::vector<double> out(image.size());
  ApplyMaskInto(image.data(), grid, mask, fill, out);
  return Tensor(image.shape(), std::move(out));
}

// Stacks one masked copy of `image` per mask into a [n, c, h, w] batch, all
// filled with the image's own neutral value.
inline Tensor MaskedBatch(std::span<const double> image, const SegmentGrid& grid,
                          std::span<const FeatureMask> masks) {
  const ImageShape& s = grid.image_shape;
  const std::vector<double> fill = NeutralValue(image, s);
  std::vector<double> out(masks.size() * s.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    ApplyMaskInto(image, grid, masks[i], fill,
                  std::span<double>(out).subspan(i * s.size(), s.size()));
  }
  return Tensor(Shape{masks.size(), s.channels, s.height, s.width},
                std::move(out));
}

}  // namespace shield

#endif  // SHIELD_MASKING_HPP_
