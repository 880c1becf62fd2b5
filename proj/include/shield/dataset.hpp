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

#ifndef SHIELD_DATASET_HPP_
#define SHIELD_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shield/error.hpp"
#include "shield/model.hpp"
#include "shield/rng.hpp"
#include "shield/tensor.hpp"

namespace shield {

enum class SplitRole { kTrain, kTest };

// Images in [0, 1] laid out [N, c, h, w] with one label per image.
struct Dataset {
  std::string name;
  std::vector<double> images;
  std::vector<int> labels;
  ImageShape image_shape;
  std::size_t num_classes = 0;
  SplitRole role = SplitRole::kTrain;

  std::size_t size() const { return labels.size(); }

  std::span<const double> Image(std::size_t i) const {
    return std::span<const double>(images).subspan(i * image_shape.size(),
                                                   image_shape.size());
  }

  Tensor ImageTensor(std::size_t i) const {
    auto v = Image(i);
    return Tensor(Shape{image_shape.channels, image_shape.height,
                        image_shape.width},
                  std::vector<double>(v.begin(), v.end()));
  }

  // [k, c, h, w] batch of the listed examples.
  Tensor Batch(std::span<const std::size_t> indices) const {
    std::vector<double> out;
    out.reserve(indices.size() * image_shape.size());
    for (std::size_t i : indices) {
      auto v = Image(i);
      out.insert(out.end(), v.begin(), v.end());
    }
    return Tensor(Shape{indices.size(), image_shape.channels,
                        image_shape.height, image_shape.width},
                  std::move(out));
  }

  std::vector<int> Labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels[i]);
    return out;
  }

  Dataset Subset(std::span<const std::size_t> indices) const {
    Dataset out{name, {}, Labels(indices), image_shape, num_classes, role};
    out.images.reserve(indices.size() * image_shape.size());
    for (std::size_t i : indices) {
      auto v = Image(i);
      out.images.insert(out.images.end(), v.begin(), v.end());
    }
    return out;
  }

  void Validate() const {
    if (images.size() != labels.size() * image_shape.size()) {
      throw Error(ErrorKind::kConsistency, "dataset '" + name +
                                               "': image buffer does not match "
                                               "label count");
    }
    for (int label : labels) {
      if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
        throw Error(ErrorKind::kConsistency,
                    "dataset '" + name + "': label " + std::to_string(label) +
                        " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
    for (double v : images) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorKind::kConsistency,
                    "dataset '" + name + "': pixel outside [0, 1]");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// IDX (MNIST family) ingestion. Big-endian header: magic 0x00000803 followed
// by count, rows, cols for images; magic 0x00000801 followed by count for
// labels. Pixels are unsigned bytes scaled by 1/255.

namespace internal {

inline std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

inline std::uint32_t ReadBe32(const std::string& bytes, std::size_t offset,
                              const std::string& what) {
  if (bytes.size() < offset + 4) {
    throw Error(ErrorKind::kFormat, what + ": truncated header");
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

}  // namespace internal

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Parses in-memory IDX images and labels. num_classes is max label + 1.
inline Dataset ParseIdx(const std::string& image_bytes,
                        const std::string& label_bytes, std::string name) {
  if (internal::ReadBe32(image_bytes, 0, "idx images") != kIdxImageMagic) {
    throw Error(ErrorKind::kFormat, "idx images: bad magic number");
  }
  if (internal::ReadBe32(label_bytes, 0, "idx labels") != kIdxLabelMagic) {
    throw Error(ErrorKind::kFormat, "idx labels: bad magic number");
  }
  const std::size_t count = internal::ReadBe32(image_bytes, 4, "idx images");
  const std::size_t rows = internal::ReadBe32(image_bytes, 8, "idx images");
  const std::size_t cols = internal::ReadBe32(image_bytes, 12, "idx images");
  const std::size_t label_count =
      internal::ReadBe32(label_bytes, 4, "idx labels");
  if (count != label_count) {
    throw Error(ErrorKind::kConsistency,
                "idx: " + std::to_string(count) + " images but " +
                    std::to_string(label_count) + " labels");
  }
  if (count == 0 || rows == 0 || cols == 0) {
    throw Error(ErrorKind::kFormat, "idx images: empty dimension");
  }
  const std::size_t pixels = rows * cols;
  if (image_bytes.size() != 16 + count * pixels) {
    throw Error(ErrorKind::kFormat,
                "idx images: expected " + std::to_string(16 + count * pixels) +
                    " bytes, found " + std::to_string(image_bytes.size()));
  }
  if (label_bytes.size() != 8 + count) {
    throw Error(ErrorKind::kFormat,
                "idx labels: expected " + std::to_string(8 + count) +
                    " bytes, found " + std::to_string(label_bytes.size()));
  }
  Dataset ds;
  ds.name = std::move(name);
  ds.image_shape = ImageShape{1, rows, cols};
  ds.images.resize(count * pixels);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    ds.images[i] = static_cast<unsigned char>(image_bytes[16 + i]) / 255.0;
  }
  ds.labels.resize(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    ds.labels[i] = static_cast<unsigned char>(label_bytes[8 + i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  return ds;
}

inline Dataset LoadIdx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path,
                       std::string name = "idx") {
  return ParseIdx(internal::ReadFile(images_path),
                  internal::ReadFile(labels_path), std::move(name));
}

// ---------------------------------------------------------------------------
// Synthetic geometric shapes, a desk-scale stand-in for image benchmarks.

enum class ShapeKind { kBar, kCross, kBlob, kRing, kFrame, kDiagonal };

inline ShapeKind ParseShapeKind(std::string_view name) {
  if (name == "bar") return ShapeKind::kBar;
  if (name == "cross") return ShapeKind::kCross;
  if (name == "blob") return ShapeKind::kBlob;
  if (name == "ring") return ShapeKind::kRing;
  if (name == "frame") return ShapeKind::kFrame;
  if (name == "diagonal") return ShapeKind::kDiagonal;
  throw Error(ErrorKind::kUsage, "unknown shape class '" + std::string(name) + "'");
}

struct SynthShapesParams {
  std::size_t num_per_class = 50;
  std::vector<std::string> classes{"bar", "cross", "ring"};
  std::size_t size = 16;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

namespace internal {

// Intensity of `kind` at pixel (y, x) for a shape centred at (cy, cx) with
// radius r (all in pixels).
inline double ShapeIntensity(ShapeKind kind, double y, double x, double cy,
                             double cx, double r) {
  const double dy = y - cy, dx = x - cx;
  const double dist = std::sqrt(dy * dy + dx * dx);
  switch (kind) {
    case ShapeKind::kBar:
      return (std::abs(dy) <= 0.75 && std::abs(dx) <= r) ? 1.0 : 0.0;
    case ShapeKind::kCross:
      return ((std::abs(dy) <= 0.75 && std::abs(dx) <= r) ||
              (std::abs(dx) <= 0.75 && std::abs(dy) <= r))
                 ? 1.0
                 : 0.0;
    case ShapeKind::kBlob:
      return dist <= 0.7 * r ? 1.0 : 0.0;
    case ShapeKind::kRing:
      return std::abs(dist - r) <= 0.8 ? 1.0 : 0.0;
    case ShapeKind::kFrame: {
      const double m = std::max(std::abs(dy), std::abs(dx));
      return std::abs(m - r) <= 0.6 ? 1.0 : 0.0;
    }
    case ShapeKind::kDiagonal:
      return (std::abs(dy - dx) <= 0.9 && std::abs(dy) <= r) ? 1.0 : 0.0;
  }
  return 0.0;
}

}  // namespace internal

// Grayscale shapes with jittered centre and radius plus additive uniform
// noise in [-noise, noise], clamped to [0, 1]. Train and test sets drawn with
// one seed use different streams. Examples are interleaved by
// class (example i has label i % classes), so any prefix stays balanced.
inline Dataset SynthShapes(const SynthShapesParams& params,
                           SplitRole role = SplitRole::kTrain) {
  if (params.size < 8) {
    throw Error(ErrorKind::kUsage, "synth_shapes: size must be at least 8");
  }
  if (params.classes.size() < 2) {
    throw Error(ErrorKind::kUsage, "synth_shapes: need at least 2 classes");
  }
  if (!(params.noise >= 0.0)) {
    throw Error(ErrorKind::kUsage, "synth_shapes: noise must be >= 0");
  }
  std::vector<ShapeKind> kinds;
  for (const std::string& c : params.classes) kinds.push_back(ParseShapeKind(c));

  const std::size_t n = params.num_per_class * kinds.size();
  const double s = static_cast<double>(params.size);
  Rng rng = MakeRng(params.seed, Stream::kSynth,
                    role == SplitRole::kTest ? 1 : 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> noise(-params.noise, params.noise);

  Dataset ds;
  ds.name = "synth_shapes";
  ds.image_shape = ImageShape{1, params.size, params.size};
  ds.num_classes = kinds.size();
  ds.role = role;
  ds.images.resize(n * params.size * params.size);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % kinds.size();
    ds.labels[i] = static_cast<int>(label);
    const double r = s * (0.22 + 0.08 * unit(rng));
    const double cy = s / 2.0 - 0.5 + s * 0.125 * (2.0 * unit(rng) - 1.0);
    const double cx = s / 2.0 - 0.5 + s * 0.125 * (2.0 * unit(rng) - 1.0);
    double* img = ds.images.data() + i * params.size * params.size;
    for (std::size_t y = 0; y < params.size; ++y) {
      for (std::size_t x = 0; x < params.size; ++x) {
        const double v = internal::ShapeIntensity(
            kinds[label], static_cast<double>(y), static_cast<double>(x), cy, cx,
            r);
        img[y * params.size + x] = v;
      }
    }
    if (params.noise > 0.0) {
      for (std::size_t p = 0; p < params.size * params.size; ++p) {
        img[p] = std::clamp(img[p] + noise(rng), 0.0, 1.0);
      }
    }
  }
  return ds;
}

// First `count` examples (or all if fewer).
inline Dataset Head(const Dataset& ds, std::size_t count) {
  std::vector<std::size_t> idx(std::min(count, ds.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return ds.Subset(idx);
}

}  // namespace shield

#endif  // SHIELD_DATASET_HPP_
