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

#ifndef SHIELD_EXPERIMENT_HPP_
#define SHIELD_EXPERIMENT_HPP_

// Baseline vs SHIELD sweep over lambda: training, test evaluation, metric
// reports on a shared test subset, and Bayesian comparison of the best lambda
// against the baseline. Everything lands under one output directory:
//
//   config.json
//   runs/lambda_<x>/{checkpoint.bin, manifest.json, train_log.csv}
//   summary.csv
//   metrics/lambda_<x>.csv
//   bayes/<metric>.json, bayes/<metric>_samples.csv
//   plots/convergence.csv, plots/violin.csv
//   experiment.json

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "shield/checkpoint.hpp"
#include "shield/csv.hpp"
#include "shield/dataset.hpp"
#include "shield/error.hpp"
#include "shield/explain.hpp"
#include "shield/masking.hpp"
#include "shield/model.hpp"
#include "shield/revel.hpp"
#include "shield/rng.hpp"
#include "shield/stats.hpp"
#include "shield/trainer.hpp"

namespace shield {

inline constexpr const char* kArtifactRootEnv = "SHIELD_LAB_ARTIFACTS";

struct DatasetSpec {
  std::string kind = "synth";  // "synth" or "idx"
  SynthShapesParams synth;
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t train_examples = 200;  // 0 keeps everything
  std::size_t test_examples = 200;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  Architecture model = Architecture::kMlp;
  std::size_t hidden = Classifier::kDefaultHidden;
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double train_fraction = 0.9;
  std::vector<double> lambdas{0, 2, 5, 10, 15, 20};
  double shield_weight = 1.0;
  std::size_t grid_rows = 8;
  std::size_t grid_cols = 8;
  AdamOptions adam;
  ExplainParams explain;
  std::size_t fidelity_samples = 100;
  std::size_t metric_examples = 50;
  std::size_t mc_samples = kDefaultMcSamples;
  double threshold = 0.95;
  std::size_t simplex_rows = 10000;  // 0 dumps every posterior sample

  void Validate() const {
    if (lambdas.empty()) throw Error(ErrorKind::kUsage, "lambda list is empty");
    std::set<double> seen;
    for (double l : lambdas) {
      ShieldConfig{l, grid_rows, grid_cols, shield_weight}.Validate();
      if (!seen.insert(l).second) {
        throw Error(ErrorKind::kUsage, "lambda " + FormatDouble(l) + " listed twice");
      }
    }
    if (epochs == 0) throw Error(ErrorKind::kUsage, "epochs must be positive");
    if (batch_size == 0) throw Error(ErrorKind::kUsage, "batch_size must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw Error(ErrorKind::kUsage, "train_fraction must lie in (0, 1)");
    }
    if (explain.repeats < 2) throw Error(ErrorKind::kUsage, "explain.repeats must be >= 2");
    if (fidelity_samples == 0) throw Error(ErrorKind::kUsage, "fidelity_samples must be >= 1");
    if (mc_samples < 1000) throw Error(ErrorKind::kUsage, "mc_samples must be >= 1000");
    if (!(threshold > 0.5 && threshold <= 1.0)) {
      throw Error(ErrorKind::kUsage, "threshold must lie in (0.5, 1]");
    }
    if (dataset.kind != "synth" && dataset.kind != "idx") {
      throw Error(ErrorKind::kUsage, "dataset.kind must be 'synth' or 'idx'");
    }
  }
};

namespace internal {

inline void RejectUnknownKeys(const nlohmann::json& j, const std::set<std::string>& known,
                              const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::kFormat, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw Error(ErrorKind::kUsage, "unknown config key '" + where + key + "'");
    }
  }
}

}  // namespace internal

inline nlohmann::json ToJson(const ExperimentConfig& c) {
  nlohmann::json dataset{{"kind", c.dataset.kind},
                         {"train_examples", c.dataset.train_examples},
                         {"test_examples", c.dataset.test_examples}};
  if (c.dataset.kind == "synth") {
    dataset["classes"] = c.dataset.synth.classes;
    dataset["size"] = c.dataset.synth.size;
    dataset["noise"] = c.dataset.synth.noise;
    dataset["seed"] = c.dataset.synth.seed;
  } else {
    dataset["train_images"] = c.dataset.train_images;
    dataset["train_labels"] = c.dataset.train_labels;
    dataset["test_images"] = c.dataset.test_images;
    dataset["test_labels"] = c.dataset.test_labels;
  }
  return {
      {"dataset", dataset},
      {"model", std::string(ArchitectureName(c.model))},
      {"hidden", c.hidden},
      {"seed", c.seed},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"train_fraction", c.train_fraction},
      {"lambdas", c.lambdas},
      {"shield_weight", c.shield_weight},
      {"grid", {{"rows", c.grid_rows}, {"cols", c.grid_cols}}},
      {"optimizer",
       {{"lr", c.adam.lr},
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"eps", c.adam.eps},
        {"weight_decay", c.adam.weight_decay}}},
      {"explain",
       {{"samples", c.explain.samples},
        {"sigma", c.explain.sigma},
        {"ridge_alpha", c.explain.ridge_alpha},
        {"repeats", c.explain.repeats}}},
      {"fidelity_samples", c.fidelity_samples},
      {"metric_examples", c.metric_examples},
      {"bayes",
       {{"mc_samples", c.mc_samples},
        {"threshold", c.threshold},
        {"simplex_rows", c.simplex_rows}}},
  };
}

// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& j) {
  using internal::RejectUnknownKeys;
  RejectUnknownKeys(j,
                    {"dataset", "model", "hidden", "seed", "epochs", "batch_size",
                     "train_fraction", "lambdas", "shield_weight", "grid", "optimizer",
                     "explain", "fidelity_samples", "metric_examples", "bayes"},
                    "");
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      RejectUnknownKeys(d,
                        {"kind", "classes", "size", "noise", "seed", "train_examples",
                         "test_examples", "train_images", "train_labels",
                         "test_images", "test_labels"},
                        "dataset.");
      DatasetSpec& s = c.dataset;
      s.kind = d.value("kind", s.kind);
      s.synth.classes = d.value("classes", s.synth.classes);
      s.synth.size = d.value("size", s.synth.size);
      s.synth.noise = d.value("noise", s.synth.noise);
      s.synth.seed = d.value("seed", s.synth.seed);
      s.train_examples = d.value("train_examples", s.train_examples);
      s.test_examples = d.value("test_examples", s.test_examples);
      s.train_images = d.value("train_images", s.train_images);
      s.train_labels = d.value("train_labels", s.train_labels);
      s.test_images = d.value("test_images", s.test_images);
      s.test_labels = d.value("test_labels", s.test_labels);
    }
    c.model = ParseArchitecture(j.value("model", std::string(ArchitectureName(c.model))));
    c.hidden = j.value("hidden", c.hidden);
    c.seed = j.value("seed", c.seed);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.lambdas = j.value("lambdas", c.lambdas);
    c.shield_weight = j.value("shield_weight", c.shield_weight);
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      RejectUnknownKeys(g, {"rows", "cols"}, "grid.");
      c.grid_rows = g.value("rows", c.grid_rows);
      c.grid_cols = g.value("cols", c.grid_cols);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      RejectUnknownKeys(o, {"lr", "beta1", "beta2", "eps", "weight_decay"}, "optimizer.");
      c.adam.lr = o.value("lr", c.adam.lr);
      c.adam.beta1 = o.value("beta1", c.adam.beta1);
      c.adam.beta2 = o.value("beta2", c.adam.beta2);
      c.adam.eps = o.value("eps", c.adam.eps);
      c.adam.weight_decay = o.value("weight_decay", c.adam.weight_decay);
    }
    if (j.contains("explain")) {
      const auto& e = j.at("explain");
      RejectUnknownKeys(e, {"samples", "sigma", "ridge_alpha", "repeats"}, "explain.");
      c.explain.samples = e.value("samples", c.explain.samples);
      c.explain.sigma = e.value("sigma", c.explain.sigma);
      c.explain.ridge_alpha = e.value("ridge_alpha", c.explain.ridge_alpha);
      c.explain.repeats = e.value("repeats", c.explain.repeats);
    }
    c.fidelity_samples = j.value("fidelity_samples", c.fidelity_samples);
    c.metric_examples = j.value("metric_examples", c.metric_examples);
    if (j.contains("bayes")) {
      const auto& b = j.at("bayes");
      RejectUnknownKeys(b, {"mc_samples", "threshold", "simplex_rows"}, "bayes.");
      c.mc_samples = b.value("mc_samples", c.mc_samples);
      c.threshold = b.value("threshold", c.threshold);
      c.simplex_rows = b.value("simplex_rows", c.simplex_rows);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("config: ") + e.what());
  }
  c.Validate();
  return c;
}

inline ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  const std::string text = internal::ReadFile(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  return ExperimentConfigFromJson(j);
}

// $SHIELD_LAB_ARTIFACTS, else ./artifacts.
inline std::filesystem::path DefaultArtifactRoot() {
  const char* env = std::getenv(kArtifactRootEnv);
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("artifacts");
}

inline void WriteFile(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << contents;
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path.string() + "'");
}

inline std::string LambdaTag(double lambda) { return "lambda_" + FormatDouble(lambda); }

struct ExperimentData {
  Dataset train;
  Dataset test;
  std::string id;
};

inline ExperimentData LoadExperimentData(const DatasetSpec& spec) {
  ExperimentData data;
  if (spec.kind == "synth") {
    const std::size_t classes = spec.synth.classes.size();
    auto generate = [&](std::size_t count, SplitRole role) {
      SynthShapesParams p = spec.synth;
      p.num_per_class = (count + classes - 1) / std::max<std::size_t>(classes, 1);
      return Head(SynthShapes(p, role), count);
    };
    data.train = generate(spec.train_examples, SplitRole::kTrain);
    data.test = generate(spec.test_examples, SplitRole::kTest);
    std::string classes_text;
    for (const std::string& c : spec.synth.classes) {
      classes_text += (classes_text.empty() ? "" : "+") + c;
    }
    data.id = "synth_shapes(" + classes_text + ",size=" + std::to_string(spec.synth.size) +
              ",noise=" + FormatDouble(spec.synth.noise) +
              ",seed=" + std::to_string(spec.synth.seed) + ")";
  } else {
    data.train = LoadIdx(spec.train_images, spec.train_labels, "idx_train");
    data.test = LoadIdx(spec.test_images, spec.test_labels, "idx_test");
    data.test.role = SplitRole::kTest;
    if (spec.train_examples > 0) data.train = Head(data.train, spec.train_examples);
    if (spec.test_examples > 0) data.test = Head(data.test, spec.test_examples);
    const std::size_t k = std::max(data.train.num_classes, data.test.num_classes);
    data.train.num_classes = data.test.num_classes = k;
    if (data.train.image_shape.size() != data.test.image_shape.size()) {
      throw Error(ErrorKind::kConsistency, "idx train and test images differ in shape");
    }
    data.id = "idx(" + spec.train_images + ")";
  }
  data.train.Validate();
  data.test.Validate();
  return data;
}

inline RunManifest ManifestFor(const ExperimentConfig& c, double lambda,
                               const std::string& dataset_id) {
  RunManifest m;
  m.dataset_id = dataset_id;
  m.architecture = c.model;
  m.hidden = c.hidden;
  m.seed = c.seed;
  // The baseline carries weight 0 so that it is the plain loop.
  m.shield = {lambda, c.grid_rows, c.grid_cols, lambda > 0.0 ? c.shield_weight : 0.0};
  m.adam = c.adam;
  m.epochs = c.epochs;
  m.batch_size = c.batch_size;
  m.train_fraction = c.train_fraction;
  m.checkpoint_path = "runs/" + LambdaTag(lambda) + "/checkpoint.bin";
  return m;
}

struct LambdaRun {
  double lambda = 0.0;
  TrainResult train;
  Evaluation test;
};

// Trains one lambda and writes runs/lambda_<x>/ under `out_dir`.
inline LambdaRun TrainLambda(const ExperimentConfig& c, double lambda,
                             const ExperimentData& data,
                             const std::filesystem::path& out_dir) {
  const RunManifest manifest = ManifestFor(c, lambda, data.id);
  LambdaRun run{lambda, Train(manifest, data.train), {}};
  run.test = Evaluate(run.train.model, data.test);
  const std::filesystem::path dir = out_dir / "runs" / LambdaTag(lambda);
  std::filesystem::create_directories(dir);
  SaveCheckpoint(out_dir / manifest.checkpoint_path, run.train.model,
                 {run.train.best_epoch, run.train.best_val_loss});
  WriteFile(dir / "manifest.json", ToJson(manifest).dump(2) + "\n");
  WriteFile(dir / "train_log.csv", run.train.log.ToCsv());
  return run;
}

// Seeded sample of test indices, sorted; the same for every lambda.
inline std::vector<std::size_t> MetricSubset(const ExperimentConfig& c,
                                             std::size_t test_size) {
  std::vector<std::size_t> idx(test_size);
  for (std::size_t i = 0; i < test_size; ++i) idx[i] = i;
  if (c.metric_examples >= test_size) return idx;
  Rng rng = MakeRng(c.seed, Stream::kSubset);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(c.metric_examples);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Explanation seed of one test example. Shared across lambdas so that paired
// reports differ only through the model.
inline std::uint64_t ExampleSeed(std::uint64_t seed, std::size_t example_id) {
  Rng rng = MakeRng(seed, Stream::kExplain, example_id, 1);
  return rng();
}

inline MetricParams MetricParamsFor(const ExperimentConfig& c) {
  MetricParams p;
  p.explain = c.explain;
  p.fidelity_samples = c.fidelity_samples;
  return p;
}

template <BlackBox Model>
std::vector<MetricReport> ComputeMetrics(const ExperimentConfig& c, const Model& model,
                                         const Dataset& test,
                                         std::span<const std::size_t> subset) {
  const SegmentGrid grid = BuildGrid(test.image_shape, c.grid_rows, c.grid_cols);
  std::vector<MetricReport> reports;
  reports.reserve(subset.size());
  for (std::size_t id : subset) {
    MetricParams p = MetricParamsFor(c);
    p.explain.seed = ExampleSeed(c.seed, id);
    reports.push_back(Report(model, test.ImageTensor(id), grid, p, id));
  }
  return reports;
}

inline std::string MetricCsv(std::span<const MetricReport> reports) {
  std::string out = std::string(kMetricCsvHeader) + "\n";
  for (const MetricReport& r : reports) out += MetricCsvRow(r);
  return out;
}

struct MetricComparison {
  std::string metric;
  PairedDifferences diffs;
  PosteriorTriple posterior;
  Verdict verdict = Verdict::kInconclusive;
};

// Pairs reports by example id and runs the signed test on candidate minus
// baseline for one metric.
inline MetricComparison CompareMetric(std::span<const MetricReport> baseline,
                                      std::span<const MetricReport> candidate,
                                      const std::string& metric, const std::string& scope,
                                      std::size_t mc_samples, double threshold, Rng& rng) {
  if (baseline.size() != candidate.size()) {
    throw Error(ErrorKind::kConsistency, "metric files have different example counts (" +
                                             std::to_string(baseline.size()) + " vs " +
                                             std::to_string(candidate.size()) + ")");
  }
  std::vector<double> b, s;
  for (std::size_t i = 0; i < baseline.size(); ++i) {
    if (baseline[i].example_id != candidate[i].example_id) {
      throw Error(ErrorKind::kConsistency,
                  "metric files are not paired: example " +
                      std::to_string(baseline[i].example_id) + " vs " +
                      std::to_string(candidate[i].example_id));
    }
    b.push_back(MetricValue(baseline[i], metric));
    s.push_back(MetricValue(candidate[i], metric));
  }
  MetricComparison out{metric, PairedDifferences::FromPairs(s, b, metric, scope), {}, {}};
  out.posterior = SignedTest(out.diffs, RopeFromQuantile(out.diffs), mc_samples, rng);
  out.verdict = Decide(out.posterior, threshold);
  return out;
}

inline Rng PosteriorRng(std::uint64_t seed, std::size_t metric_index, std::size_t scope_index = 0) {
  return MakeRng(seed, Stream::kPosterior, metric_index, scope_index);
}

// Best SHIELD lambda (> 0): highest test accuracy, then lowest test loss,
// then the smaller lambda.
inline std::optional<std::size_t> BestShieldRun(std::span<const LambdaRun> runs) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!(runs[i].lambda > 0.0)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const LambdaRun& a = runs[i];
    const LambdaRun& b = runs[*best];
    if (a.test.accuracy != b.test.accuracy) {
      if (a.test.accuracy > b.test.accuracy) best = i;
    } else if (a.test.loss != b.test.loss) {
      if (a.test.loss < b.test.loss) best = i;
    } else if (a.lambda < b.lambda) {
      best = i;
    }
  }
  return best;
}

struct ExperimentResult {
  std::vector<LambdaRun> runs;
  std::vector<std::size_t> subset;
  std::vector<std::vector<MetricReport>> metrics;  // parallel to runs
  std::optional<std::size_t> best;                 // index into runs
  std::optional<std::size_t> baseline;             // index into runs
  std::vector<MetricComparison> comparisons;       // empty without a pair
  std::vector<std::string> notices;
};

inline constexpr const char* kSummaryCsvHeader =
    "model,lambda,test_accuracy,test_loss,best_epoch";
inline constexpr const char* kConvergenceCsvHeader =
    "lambda,epoch,train_loss,train_acc,val_loss,val_acc,shield_term_mean";
inline constexpr const char* kViolinCsvHeader = "lambda,metric,example_id,value";

inline ExperimentResult RunExperiment(const ExperimentConfig& c,
                                      const std::filesystem::path& out_dir,
                                      std::ostream* log = nullptr) {
  c.Validate();
  auto note = [&](ExperimentResult& r, const std::string& msg) {
    r.notices.push_back(msg);
    if (log) *log << "notice: " << msg << "\n";
  };
  auto progress = [&](const std::string& msg) {
    if (log) *log << msg << "\n" << std::flush;
  };
  std::filesystem::create_directories(out_dir);
  WriteFile(out_dir / "config.json", ToJson(c).dump(2) + "\n");
  const ExperimentData data = LoadExperimentData(c.dataset);
  ExperimentResult result;

  std::string summary = std::string(kSummaryCsvHeader) + "\n";
  std::string convergence = std::string(kConvergenceCsvHeader) + "\n";
  for (double lambda : c.lambdas) {
    progress("train " + LambdaTag(lambda));
    LambdaRun run = TrainLambda(c, lambda, data, out_dir);
    summary += CsvLine({std::string(ArchitectureName(c.model)), FormatDouble(lambda),
                        FormatDouble(run.test.accuracy), FormatDouble(run.test.loss),
                        std::to_string(run.train.best_epoch)});
    for (const EpochRecord& r : run.train.log.records) {
      convergence += CsvLine({FormatDouble(lambda), std::to_string(r.epoch),
                              FormatDouble(r.train_loss), FormatDouble(r.train_acc),
                              FormatDouble(r.val_loss), FormatDouble(r.val_acc),
                              FormatDouble(r.shield_term_mean)});
    }
    if (lambda == 0.0) result.baseline = result.runs.size();
    result.runs.push_back(std::move(run));
  }
  WriteFile(out_dir / "summary.csv", summary);
  WriteFile(out_dir / "plots" / "convergence.csv", convergence);
  result.best = BestShieldRun(result.runs);

  result.subset = MetricSubset(c, data.test.size());
  std::string violin = std::string(kViolinCsvHeader) + "\n";
  for (const LambdaRun& run : result.runs) {
    progress("metrics " + LambdaTag(run.lambda));
    result.metrics.push_back(ComputeMetrics(c, run.train.model, data.test, result.subset));
    const auto& reports = result.metrics.back();
    WriteFile(out_dir / "metrics" / (LambdaTag(run.lambda) + ".csv"), MetricCsv(reports));
    for (const char* metric : kMetricNames) {
      for (const MetricReport& r : reports) {
        violin += CsvLine({FormatDouble(run.lambda), metric, std::to_string(r.example_id),
                           FormatDouble(MetricValue(r, metric))});
      }
    }
  }
  WriteFile(out_dir / "plots" / "violin.csv", violin);

  if (!result.baseline) {
    note(result, "no baseline (lambda 0) in the lambda list; Bayesian tests skipped");
  } else if (!result.best) {
    note(result, "no SHIELD lambda (> 0) in the lambda list; Bayesian tests skipped");
  } else {
    progress("compare " + LambdaTag(result.runs[*result.best].lambda) + " vs baseline");
    for (std::size_t m = 0; m < std::size(kMetricNames); ++m) {
      Rng rng = PosteriorRng(c.seed, m);
      MetricComparison cmp = CompareMetric(result.metrics[*result.baseline],
                                           result.metrics[*result.best], kMetricNames[m],
                                           "pooled", c.mc_samples, c.threshold, rng);
      const std::filesystem::path bayes = out_dir / "bayes";
      WriteFile(bayes / (cmp.metric + ".json"),
                PosteriorSummary(cmp.diffs, cmp.posterior, c.threshold).dump(2) + "\n");
      WriteFile(bayes / (cmp.metric + "_samples.csv"),
                SimplexSamplesCsv(cmp.posterior, c.simplex_rows));
      result.comparisons.push_back(std::move(cmp));
    }
  }

  nlohmann::json runs = nlohmann::json::array();
  for (const LambdaRun& run : result.runs) {
    runs.push_back({{"lambda", run.lambda},
                    {"test_accuracy", run.test.accuracy},
                    {"test_loss", run.test.loss},
                    {"best_epoch", run.train.best_epoch}});
  }
  nlohmann::json verdicts = nlohmann::json::object();
  for (const MetricComparison& cmp : result.comparisons) {
    verdicts[cmp.metric] = std::string(VerdictName(cmp.verdict));
  }
  nlohmann::json summary_json{
      {"dataset_id", data.id},
      {"runs", runs},
      {"baseline_lambda", result.baseline ? nlohmann::json(0.0) : nlohmann::json(nullptr)},
      {"best_lambda", result.best ? nlohmann::json(result.runs[*result.best].lambda)
                                  : nlohmann::json(nullptr)},
      {"metric_examples", result.subset},
      {"verdicts", verdicts},
      {"notices", result.notices},
      {"version", SHIELD_LAB_VERSION},
  };
  WriteFile(out_dir / "experiment.json", summary_json.dump(2) + "\n");
  return result;
}

}  // namespace shield

#endif  // SHIELD_EXPERIMENT_HPP_
