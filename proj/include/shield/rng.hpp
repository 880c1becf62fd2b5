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

#ifndef SHIELD_RNG_HPP_
#define SHIELD_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace shield {

using Rng = std::mt19937_64;

// Named substreams. Every consumer of randomness draws from its own stream so
// that enabling one stage (e.g. masking) never perturbs another (e.g. batch
// order).
enum class Stream : std::uint64_t {
  kInit = 1,
  kShuffle = 2,
  kMask = 3,
  kSplit = 4,
  kExplain = 5,
  kFidelity = 6,
  kSynth = 7,
  kPosterior = 8,
  kSubset = 9,
};

// Seeds an engine from a base seed plus any number of stream coordinates.
// std::seed_seq is fully specified by the standard, so the mapping is stable.
inline Rng MakeRng(std::uint64_t seed,
                   std::initializer_list<std::uint64_t> coords = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * coords.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (std::uint64_t c : coords) push(c);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline Rng MakeRng(std::uint64_t seed, Stream stream, std::uint64_t a = 0,
                   std::uint64_t b = 0) {
  return MakeRng(seed, {static_cast<std::uint64_t>(stream), a, b});
}

}  // namespace shield

#endif  // SHIELD_RNG_HPP_
