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

#ifndef SHIELD_TRAINER_HPP_
#define SHIELD_TRAINER_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "shield/csv.hpp"
#include "shield/dataset.hpp"
#include "shield/error.hpp"
#include "shield/model.hpp"
#include "shield/regularizer.hpp"
#include "shield/rng.hpp"
#include "shield/tensor.hpp"

#ifndef SHIELD_LAB_VERSION
#define SHIELD_LAB_VERSION "0.1.0"
#endif

namespace shield {

inline constexpr std::size_t kEvalChunk = 256;

struct RunManifest {
  std::string dataset_id = "synth_shapes";
  Architecture architecture = Architecture::kMlp;
  std::size_t hidden = Classifier::kDefaultHidden;
  std::uint64_t seed = 0;
  ShieldConfig shield{0.0, 8, 8, 0.0};
  AdamOptions adam;
  std::size_t epochs = 80;
  std::size_t batch_size = 32;
  double train_fraction = 0.9;
  std::string checkpoint_path;
  std::string version = SHIELD_LAB_VERSION;
};

inline nlohmann::json ToJson(const RunManifest& m) {
  return {
      {"dataset_id", m.dataset_id},
      {"model", std::string(ArchitectureName(m.architecture))},
      {"hidden", m.hidden},
      {"seed", m.seed},
      {"shield",
       {{"lambda_pct", m.shield.lambda_pct},
        {"grid_rows", m.shield.grid_rows},
        {"grid_cols", m.shield.grid_cols},
        {"weight", m.shield.weight}}},
      {"optimizer",
       {{"name", "adam"},
        {"lr", m.adam.lr},
        {"beta1", m.adam.beta1},
        {"beta2", m.adam.beta2},
        {"eps", m.adam.eps},
        {"weight_decay", m.adam.weight_decay}}},
      {"epochs", m.epochs},
      {"batch_size", m.batch_size},
      {"split", {{"train", m.train_fraction}, {"validation", 1.0 - m.train_fraction}}},
      {"checkpoint_path", m.checkpoint_path},
      {"version", m.version},
  };
}

inline RunManifest ManifestFromJson(const nlohmann::json& j) {
  RunManifest m;
  m.dataset_id = j.value("dataset_id", m.dataset_id);
  m.architecture = ParseArchitecture(j.value("model", std::string("mlp")));
  m.hidden = j.value("hidden", m.hidden);
  m.seed = j.value("seed", m.seed);
  if (j.contains("shield")) {
    const auto& s = j.at("shield");
    m.shield.lambda_pct = s.value("lambda_pct", m.shield.lambda_pct);
    m.shield.grid_rows = s.value("grid_rows", m.shield.grid_rows);
    m.shield.grid_cols = s.value("grid_cols", m.shield.grid_cols);
    m.shield.weight = s.value("weight", m.shield.weight);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    m.adam.lr = o.value("lr", m.adam.lr);
    m.adam.beta1 = o.value("beta1", m.adam.beta1);
    m.adam.beta2 = o.value("beta2", m.adam.beta2);
    m.adam.eps = o.value("eps", m.adam.eps);
    m.adam.weight_decay = o.value("weight_decay", m.adam.weight_decay);
  }
  m.epochs = j.value("epochs", m.epochs);
  m.batch_size = j.value("batch_size", m.batch_size);
  if (j.contains("split")) m.train_fraction = j.at("split").value("train", 0.9);
  m.checkpoint_path = j.value("checkpoint_path", std::string());
  m.version = j.value("version", m.version);
  return m;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double shield_term_mean = 0.0;
  double wallclock_ms = 0.0;

  // Equality ignores the wall clock.
  friend bool operator==(const EpochRecord& a, const EpochRecord& b) {
    return a.epoch == b.epoch && a.train_loss == b.train_loss &&
           a.train_acc == b.train_acc && a.val_loss == b.val_loss &&
           a.val_acc == b.val_acc && a.shield_term_mean == b.shield_term_mean;
  }
};

struct TrainLog {
  std::vector<EpochRecord> records;

  static constexpr const char* kCsvHeader =
      "epoch,train_loss,train_acc,val_loss,val_acc,shield_term_mean,"
      "wallclock_ms";

  std::string ToCsv() const {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const EpochRecord& r : records) {
      out += CsvLine({std::to_string(r.epoch), FormatDouble(r.train_loss),
                      FormatDouble(r.train_acc), FormatDouble(r.val_loss),
                      FormatDouble(r.val_acc), FormatDouble(r.shield_term_mean),
                      FormatDouble(r.wallclock_ms)});
    }
    return out;
  }

  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

// Seeded shuffle, then the first round(train_fraction * N) examples train and
// the rest validate. With at least two examples, both parts are nonempty.
inline std::pair<Dataset, Dataset> Split(const Dataset& ds, std::uint64_t seed,
                                         double train_fraction = 0.9) {
  if (ds.size() == 0) throw Error(ErrorKind::kUsage, "split: empty dataset");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = MakeRng(seed, Stream::kSplit);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(ds.size()) + 0.5));
  if (ds.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, ds.size() - 1);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> val_idx(order.begin() + n_train, order.end());
  return {ds.Subset(train_idx), ds.Subset(val_idx)};
}

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean cross-entropy and argmax accuracy, with recording suspended.
template <class Model>
Evaluation Evaluate(const Model& model, const Dataset& ds) {
  if (ds.size() == 0) return {};
  Tape::Pause pause;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += kEvalChunk) {
    const std::size_t end = std::min(ds.size(), start + kEvalChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor probs = model.Predict(ds.Batch(idx));
    const std::vector<int> labels = ds.Labels(idx);
    const std::size_t k = probs.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double p = probs.data()[i * k + static_cast<std::size_t>(labels[i])];
      loss_sum -= std::log(std::clamp(p, kProbabilityFloor, 1.0));
    }
    const std::vector<int> predicted = ArgmaxRows(probs);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      correct += predicted[i] == labels[i] ? 1 : 0;
    }
  }
  const double n = static_cast<double>(ds.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

// Keeps the parameters of the epoch with the lowest validation loss; the
// earliest epoch wins ties.
class BestCheckpoint {
 public:
  bool Offer(std::size_t epoch, double val_loss, const Classifier& model) {
    if (best_ && !(val_loss < best_loss_)) return false;
    best_ = model;
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    return true;
  }

  bool has_value() const { return best_.has_value(); }
  const Classifier& model() const { return *best_; }
  double loss() const { return best_loss_; }
  std::size_t epoch() const { return best_epoch_; }

 private:
  std::optional<Classifier> best_;
  double best_loss_ = 0.0;
  std::size_t best_epoch_ = 0;
};

struct TrainResult {
  Classifier model;  // best-validation parameters
  TrainLog log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

// Per-epoch order of training examples.
inline std::vector<std::size_t> EpochOrder(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Trains on `train` and selects by loss on `validation`. The logged
// train_loss is the example-weighted mean of the full objective over the
// epoch's batches; train_acc uses the clean-input predictions of those steps.
inline TrainResult TrainOnSplit(const RunManifest& manifest, const Dataset& train,
                                const Dataset& validation) {
  manifest.shield.Validate();
  if (manifest.batch_size == 0) {
    throw Error(ErrorKind::kUsage, "batch_size must be positive");
  }
  if (train.size() == 0 || validation.size() == 0) {
    throw Error(ErrorKind::kUsage, "train and validation sets must be nonempty");
  }
  Classifier model = Classifier::Build(manifest.architecture, train.image_shape,
                                       train.num_classes, manifest.seed,
                                       manifest.hidden);
  std::vector<Tensor> params = model.Parameters();
  AdamState adam{manifest.adam, 0, {}, {}};
  Rng shuffle_rng = MakeRng(manifest.seed, Stream::kShuffle);
  Rng mask_rng = MakeRng(manifest.seed, Stream::kMask);

  TrainLog log;
  BestCheckpoint best;
  const auto started = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= manifest.epochs; ++epoch) {
    const std::vector<std::size_t> order = EpochOrder(train.size(), shuffle_rng);
    double loss_sum = 0.0, shield_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch_no = 0; start < order.size();
         start += manifest.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + manifest.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor x = train.Batch(idx);
      const std::vector<int> y = train.Labels(idx);

      for (Tensor& p : params) p.ZeroGrad();
      Tape tape;
      Tape::Scope scope(tape);
      ObjectiveTerms terms = TotalObjective(model, x, y, manifest.shield, mask_rng);
      const double value = terms.total.item();
      if (!std::isfinite(value)) {
        throw Error(ErrorKind::kNumeric,
                    "non-finite loss at epoch " + std::to_string(epoch) +
                        ", batch " + std::to_string(batch_no));
      }
      tape.Backward(terms.total);
      AdamStep(adam, params);

      const double weight = static_cast<double>(idx.size());
      loss_sum += value * weight;
      if (terms.shield) shield_sum += terms.shield->item() * weight;
      const std::vector<int> predicted = ArgmaxRows(terms.probabilities);
      for (std::size_t i = 0; i < y.size(); ++i) correct += predicted[i] == y[i];
    }
    const Evaluation val = Evaluate(model, validation);
    const double n = static_cast<double>(train.size());
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / n;
    record.train_acc = static_cast<double>(correct) / n;
    record.val_loss = val.loss;
    record.val_acc = val.accuracy;
    record.shield_term_mean = shield_sum / n;
    record.wallclock_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - started)
                              .count();
    log.records.push_back(record);
    best.Offer(epoch, val.loss, model);
  }
  if (!best.has_value()) {
    // Zero epochs: the initial parameters are the only candidate.
    best.Offer(0, Evaluate(model, validation).loss, model);
  }
  return TrainResult{best.model(), std::move(log), best.epoch(), best.loss()};
}

// Splits `data` 90/10 with the manifest seed and trains.
inline TrainResult Train(const RunManifest& manifest, const Dataset& data) {
  auto [train, validation] = Split(data, manifest.seed, manifest.train_fraction);
  return TrainOnSplit(manifest, train, validation);
}

}  // namespace shield

#endif  // SHIELD_TRAINER_HPP_
