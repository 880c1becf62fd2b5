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

// Command-line front end: train, explain, metrics, compare, run-all.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "shield/checkpoint.hpp"
#include "shield/error.hpp"
#include "shield/experiment.hpp"
#include "shield/explain.hpp"
#include "shield/revel.hpp"
#include "shield/stats.hpp"

namespace {

namespace fs = std::filesystem;
using shield::ExperimentConfig;

// Flags shared by every verb that reads an experiment config.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::vector<double> lambdas;
  std::optional<std::string> model;
  std::optional<std::size_t> metric_examples;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> repeats;
  std::optional<std::size_t> mc_samples;

  void Register(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON experiment config")
        ->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Override the experiment seed");
    app->add_option("--epochs", epochs, "Override the epoch count");
    app->add_option("--lambdas", lambdas, "Override the lambda list (comma separated)")
        ->delimiter(',');
    app->add_option("--model", model, "Override the architecture (mlp, small_conv)");
    app->add_option("--metric-examples", metric_examples,
                    "Override the metric subset size");
    app->add_option("--samples", samples, "Override explanation samples");
    app->add_option("--repeats", repeats, "Override explanations per example");
    app->add_option("--mc-samples", mc_samples, "Override posterior samples");
  }

  ExperimentConfig Load() const {
    ExperimentConfig c = config_path.empty()
                             ? ExperimentConfig{}
                             : shield::LoadExperimentConfig(config_path);
    if (seed) c.seed = *seed;
    if (epochs) c.epochs = *epochs;
    if (!lambdas.empty()) c.lambdas = lambdas;
    if (model) c.model = shield::ParseArchitecture(*model);
    if (metric_examples) c.metric_examples = *metric_examples;
    if (samples) c.explain.samples = *samples;
    if (repeats) c.explain.repeats = *repeats;
    if (mc_samples) c.mc_samples = *mc_samples;
    c.Validate();
    return c;
  }
};

fs::path OutDir(const std::string& flag) {
  return flag.empty() ? shield::DefaultArtifactRoot() : fs::path(flag);
}

int RunTrain(const ConfigFlags& flags, double lambda, const std::string& out) {
  const ExperimentConfig c = flags.Load();
  const fs::path dir = OutDir(out);
  const shield::ExperimentData data = shield::LoadExperimentData(c.dataset);
  const shield::LambdaRun run = shield::TrainLambda(c, lambda, data, dir);
  std::cout << "lambda=" << shield::FormatDouble(lambda)
            << " test_accuracy=" << shield::FormatDouble(run.test.accuracy)
            << " test_loss=" << shield::FormatDouble(run.test.loss)
            << " best_epoch=" << run.train.best_epoch << "\n"
            << "wrote " << (dir / "runs" / shield::LambdaTag(lambda)).string() << "\n";
  return 0;
}

int RunExplain(const ConfigFlags& flags, const std::string& checkpoint, std::size_t index,
               const std::string& out) {
  const ExperimentConfig c = flags.Load();
  const shield::LoadedCheckpoint ckpt = shield::LoadCheckpoint(checkpoint);
  const shield::ExperimentData data = shield::LoadExperimentData(c.dataset);
  if (index >= data.test.size()) {
    throw shield::Error(shield::ErrorKind::kUsage,
                        "--index " + std::to_string(index) + " outside the test set of " +
                            std::to_string(data.test.size()));
  }
  shield::ExplainParams params = c.explain;
  params.seed = shield::ExampleSeed(c.seed, index);
  const shield::SegmentGrid grid =
      shield::BuildGrid(data.test.image_shape, c.grid_rows, c.grid_cols);
  const shield::Explanation e =
      shield::Explain(ckpt.model, data.test.ImageTensor(index), grid, params);
  nlohmann::json j = shield::ToJson(e);
  j["example_id"] = index;
  j["label"] = data.test.labels[index];
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    shield::WriteFile(out, j.dump(2) + "\n");
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int RunMetrics(const ConfigFlags& flags, const std::string& checkpoint,
               const std::string& out) {
  const ExperimentConfig c = flags.Load();
  const shield::LoadedCheckpoint ckpt = shield::LoadCheckpoint(checkpoint);
  const shield::ExperimentData data = shield::LoadExperimentData(c.dataset);
  const std::vector<std::size_t> subset = shield::MetricSubset(c, data.test.size());
  const auto reports = shield::ComputeMetrics(c, ckpt.model, data.test, subset);
  shield::WriteFile(out, shield::MetricCsv(reports));
  std::cout << "wrote " << reports.size() << " reports to " << out << "\n";
  return 0;
}

int RunCompare(const std::vector<std::string>& baselines,
               const std::vector<std::string>& shields, std::vector<std::string> scopes,
               const std::string& out, std::uint64_t seed, std::size_t mc_samples,
               double threshold, std::size_t simplex_rows) {
  if (baselines.size() != shields.size() || baselines.empty()) {
    throw shield::Error(shield::ErrorKind::kUsage,
                        "compare needs matching --baseline/--shield pairs");
  }
  if (scopes.empty()) {
    for (std::size_t i = 0; i < baselines.size(); ++i) scopes.push_back("pair_" + std::to_string(i));
  }
  if (scopes.size() != baselines.size()) {
    throw shield::Error(shield::ErrorKind::kUsage, "one --scope per pair");
  }
  const fs::path dir = OutDir(out);
  std::vector<shield::MetricReport> pooled_base, pooled_shield;
  auto emit = [&](const std::vector<shield::MetricReport>& b,
                  const std::vector<shield::MetricReport>& s, const std::string& scope,
                  std::size_t scope_index) {
    for (std::size_t m = 0; m < std::size(shield::kMetricNames); ++m) {
      shield::Rng rng = shield::PosteriorRng(seed, m, scope_index);
      const auto cmp = shield::CompareMetric(b, s, shield::kMetricNames[m], scope, mc_samples,
                                             threshold, rng);
      shield::WriteFile(dir / scope / (cmp.metric + ".json"),
                        shield::PosteriorSummary(cmp.diffs, cmp.posterior, threshold).dump(2) +
                            "\n");
      shield::WriteFile(dir / scope / (cmp.metric + "_samples.csv"),
                        shield::SimplexSamplesCsv(cmp.posterior, simplex_rows));
      const auto mean = cmp.posterior.Mean();
      std::printf("%-12s %-18s %-13s left=%.4f rope=%.4f right=%.4f\n", scope.c_str(),
                  cmp.metric.c_str(), std::string(shield::VerdictName(cmp.verdict)).c_str(),
                  mean[0], mean[1], mean[2]);
    }
  };
  for (std::size_t i = 0; i < baselines.size(); ++i) {
    const auto b = shield::ParseMetricCsv(shield::internal::ReadFile(baselines[i]));
    const auto s = shield::ParseMetricCsv(shield::internal::ReadFile(shields[i]));
    emit(b, s, scopes[i], i + 1);
    pooled_base.insert(pooled_base.end(), b.begin(), b.end());
    pooled_shield.insert(pooled_shield.end(), s.begin(), s.end());
  }
  emit(pooled_base, pooled_shield, "pooled", 0);
  return 0;
}

int RunAll(const ConfigFlags& flags, const std::string& out) {
  const ExperimentConfig c = flags.Load();
  const fs::path dir = OutDir(out);
  const shield::ExperimentResult r = shield::RunExperiment(c, dir, &std::cerr);
  for (const shield::LambdaRun& run : r.runs) {
    std::printf("lambda=%-4s test_accuracy=%.4f test_loss=%.4f\n",
                shield::FormatDouble(run.lambda).c_str(), run.test.accuracy, run.test.loss);
  }
  if (r.best) {
    std::printf("best lambda %s vs baseline:\n",
                shield::FormatDouble(r.runs[*r.best].lambda).c_str());
  }
  for (const auto& cmp : r.comparisons) {
    std::printf("  %-18s %s\n", cmp.metric.c_str(),
                std::string(shield::VerdictName(cmp.verdict)).c_str());
  }
  std::cout << "artifacts in " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SHIELD regularization lab"};
  app.set_version_flag("--version", std::string(SHIELD_LAB_VERSION));
  app.require_subcommand(1);

  ConfigFlags flags;
  std::string out;

  CLI::App* train = app.add_subcommand("train", "Train one lambda and evaluate on test");
  flags.Register(train);
  double lambda = 0.0;
  train->add_option("--lambda", lambda, "Masked percentage (0 = baseline)");
  train->add_option("-o,--out", out, "Artifact directory");

  CLI::App* explain = app.add_subcommand("explain", "Explain one test example");
  flags.Register(explain);
  std::string checkpoint;
  std::size_t index = 0;
  explain->add_option("--checkpoint", checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  explain->add_option("--index", index, "Test example index");
  explain->add_option("-o,--out", out, "Explanation JSON (default stdout)");

  CLI::App* metrics = app.add_subcommand("metrics", "Metric reports on the test subset");
  flags.Register(metrics);
  metrics->add_option("--checkpoint", checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  metrics->add_option("-o,--out", out, "Metric CSV")->required();

  CLI::App* compare = app.add_subcommand("compare", "Bayesian signed tests on metric CSVs");
  std::vector<std::string> baselines, shields, scopes;
  std::uint64_t seed = 0;
  std::size_t mc_samples = shield::kDefaultMcSamples;
  double threshold = 0.95;
  std::size_t simplex_rows = 10000;
  compare->add_option("--baseline", baselines, "Baseline metric CSV (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  compare->add_option("--shield", shields, "SHIELD metric CSV, paired in order")
      ->required()
      ->check(CLI::ExistingFile);
  compare->add_option("--scope", scopes, "Name of each pair (repeatable)");
  compare->add_option("--seed", seed, "Posterior sampling seed");
  compare->add_option("--mc-samples", mc_samples, "Posterior samples");
  compare->add_option("--threshold", threshold, "Verdict threshold");
  compare->add_option("--simplex-rows", simplex_rows, "Rows dumped per samples CSV (0 = all)");
  compare->add_option("-o,--out", out, "Output directory");

  CLI::App* run_all = app.add_subcommand("run-all", "Full lambda sweep with metrics and tests");
  flags.Register(run_all);
  run_all->add_option("-o,--out", out, "Artifact directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return RunTrain(flags, lambda, out);
    if (explain->parsed()) return RunExplain(flags, checkpoint, index, out);
    if (metrics->parsed()) return RunMetrics(flags, checkpoint, out);
    if (compare->parsed()) {
      return RunCompare(baselines, shields, scopes, out, seed, mc_samples, threshold,
                        simplex_rows);
    }
    if (run_all->parsed()) return RunAll(flags, out);
  } catch (const shield::Error& e) {
    std::cerr << "shield_lab: " << e.what() << "\n";
    return e.kind() == shield::ErrorKind::kUsage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "shield_lab: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
