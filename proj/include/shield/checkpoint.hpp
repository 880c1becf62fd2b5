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

#ifndef SHIELD_CHECKPOINT_HPP_
#define SHIELD_CHECKPOINT_HPP_

// Checkpoint container:
//
//   bytes 0..7    magic "SHLDCKPT"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..19  header length N, uint64 little-endian
//   next N bytes  UTF-8 JSON header
//   remainder     float64 little-endian parameter blocks in layer order,
//                 sizes given by header["parameters"][i]["shape"]

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "shield/error.hpp"
#include "shield/model.hpp"

namespace shield {

inline constexpr char kCheckpointMagic[8] = {'S', 'H', 'L', 'D',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint64_t epoch = 0;
  double validation_loss = 0.0;
};

struct LoadedCheckpoint {
  Classifier model;
  CheckpointInfo info;
  nlohmann::json header;
};

namespace internal {

inline void PutLe(std::string& out, std::uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

inline std::uint64_t GetLe(const std::string& in, std::size_t offset,
                           int bytes) {
  std::uint64_t value = 0;
  for (int i = 0; i < bytes; ++i) {
    value |= static_cast<std::uint64_t>(
                 static_cast<unsigned char>(in[offset + i]))
             << (8 * i);
  }
  return value;
}

inline std::vector<std::string> ParameterNames(const Classifier& model) {
  std::vector<std::string> names;
  std::size_t index = 0;
  for (const Layer& layer : model.layers()) {
    if (std::holds_alternative<DenseLayer>(layer)) {
      names.push_back("dense" + std::to_string(index) + ".weight");
      names.push_back("dense" + std::to_string(index) + ".bias");
    } else if (std::holds_alternative<ConvLayer>(layer)) {
      names.push_back("conv" + std::to_string(index) + ".kernel");
      names.push_back("conv" + std::to_string(index) + ".bias");
    }
    ++index;
  }
  return names;
}

}  // namespace internal

inline std::string EncodeCheckpoint(const Classifier& model,
                                    const CheckpointInfo& info) {
  nlohmann::json header;
  header["architecture"] = std::string(ArchitectureName(model.architecture()));
  header["input_shape"] = {model.input_shape().channels,
                           model.input_shape().height,
                           model.input_shape().width};
  header["num_classes"] = model.num_classes();
  header["hidden"] = model.hidden();
  header["seed"] = model.seed();
  header["epoch"] = info.epoch;
  header["validation_loss"] = info.validation_loss;
  const std::vector<Tensor> params = model.Parameters();
  const std::vector<std::string> names = internal::ParameterNames(model);
  header["parameters"] = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    header["parameters"].push_back(
        {{"name", names[i]}, {"shape", params[i].shape()}});
  }
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  internal::PutLe(out, kCheckpointVersion, 4);
  internal::PutLe(out, text.size(), 8);
  out += text;
  for (const Tensor& p : params) {
    for (double v : p.data()) internal::PutLe(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  return out;
}

inline LoadedCheckpoint DecodeCheckpoint(const std::string& bytes) {
  if (bytes.size() < 20 ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) !=
          0) {
    throw Error(ErrorKind::kFormat, "checkpoint: bad magic");
  }
  const auto version = internal::GetLe(bytes, 8, 4);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kFormat,
                "checkpoint: unsupported version " + std::to_string(version));
  }
  const auto header_len = internal::GetLe(bytes, 12, 8);
  if (header_len > bytes.size() - 20) {
    throw Error(ErrorKind::kFormat, "checkpoint: truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("checkpoint header: ") + e.what());
  }
  const auto shape = header.at("input_shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3) {
    throw Error(ErrorKind::kFormat, "checkpoint: input_shape needs 3 entries");
  }
  const ImageShape input{shape[0], shape[1], shape[2]};
  Classifier model = Classifier::Build(
      ParseArchitecture(header.at("architecture").get<std::string>()), input,
      header.at("num_classes").get<std::size_t>(),
      header.at("seed").get<std::uint64_t>(),
      std::max<std::size_t>(1, header.at("hidden").get<std::size_t>()));
  std::vector<Tensor> params = model.Parameters();
  const auto& listed = header.at("parameters");
  if (listed.size() != params.size()) {
    throw Error(ErrorKind::kConsistency,
                "checkpoint: parameter count does not match architecture");
  }
  std::size_t offset = 20 + header_len;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (listed[i].at("shape").get<Shape>() != params[i].shape()) {
      throw Error(ErrorKind::kConsistency,
                  "checkpoint: shape mismatch for " +
                      listed[i].at("name").get<std::string>());
    }
    std::span<double> w = params[i].mutable_data();
    if (bytes.size() < offset + 8 * w.size()) {
      throw Error(ErrorKind::kFormat, "checkpoint: truncated parameter block");
    }
    for (double& v : w) {
      v = std::bit_cast<double>(internal::GetLe(bytes, offset, 8));
      offset += 8;
    }
    internal::CheckFinite(w, "checkpoint load");
  }
  if (offset != bytes.size()) {
    throw Error(ErrorKind::kFormat, "checkpoint: trailing bytes");
  }
  CheckpointInfo info{header.at("epoch").get<std::uint64_t>(),
                      header.at("validation_loss").get<double>()};
  return LoadedCheckpoint{std::move(model), info, std::move(header)};
}

inline void SaveCheckpoint(const std::filesystem::path& path,
                           const Classifier& model, const CheckpointInfo& info) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const std::string bytes = EncodeCheckpoint(model, info);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return DecodeCheckpoint(bytes);
}

}  // namespace shield

#endif  // SHIELD_CHECKPOINT_HPP_
