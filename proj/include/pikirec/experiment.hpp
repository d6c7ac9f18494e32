#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pikirec/dataset.hpp"
#include "pikirec/evaluation.hpp"
#include "pikirec/training.hpp"

namespace pikirec {

inline constexpr const char* kPopularityId = "popularity";
inline constexpr const char* kAntiPopularityId = "anti_popularity";
inline constexpr const char* kLikesId = "wrmf_likes";
inline constexpr const char* kLikesDislikesId = "wrmf_likes_dislikes";

struct ModelSpec {
  std::string name;
  WeightSchema schema;
};

std::vector<ModelSpec> default_models();

struct ExperimentConfig {
  std::optional<std::filesystem::path> data;
  std::optional<SynthParams> synth;
  PersonalizationFilter filter = PersonalizationFilter::kAll;
  double split_ratio = 0.8;
  std::size_t runs = 5;
  std::uint64_t base_seed = 0;
  std::size_t jobs = 1;
  TrainConfig train;
  std::vector<ModelSpec> models = default_models();
  std::filesystem::path out_dir = "results";

  void validate() const;
};

// Flat `dotted.key = value` settings; '#' starts a comment. Later settings
// override earlier ones.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path);

// Human-readable row label, e.g. "WRMF with Likes" for wrmf_likes.
std::string display_name(const std::string& model_id);

struct DatasetSummary {
  std::size_t users = 0;
  std::size_t songs = 0;
  std::size_t interactions = 0;
  std::size_t likes = 0;  // labels 1 or 2
  std::size_t superlikes = 0;
  std::size_t personalized = 0;
  double like_rate = 0.0;
  double personalized_rate = 0.0;
  double popularity_mean = 0.0;
  std::size_t well_known_songs = 0;
  std::size_t lesser_known_songs = 0;
  std::size_t well_known_interactions = 0;
  std::size_t lesser_known_interactions = 0;
};

DatasetSummary summarize_dataset(const Dataset& dataset);
std::string format_summary(const DatasetSummary& summary);

// What one trained model did on one run.
struct ModelRun {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::optional<double> validation_precision;
  StakeholderPrecision precision;
  std::vector<LambdaResult> per_lambda;
  FactorModel model;
};

struct RunInfo {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t evaluation = 0;
  std::size_t cold_pairs = 0;  // eval pairs whose user or song is absent from train
};

struct ModelOutcome {
  std::string id;
  std::optional<WeightSchema> schema;  // empty for baselines
  StakeholderReport report;
  std::vector<ModelRun> runs;  // empty for baselines
};

struct ExperimentResult {
  std::vector<RunInfo> runs;
  std::vector<ModelOutcome> models;  // baselines first, then configured models

  const ModelOutcome& find(const std::string& id) const;
};

// Eval pairs whose user or song never occurs in train.
std::size_t count_cold_pairs(const SplitBundle& split);

// Splits with seed base_seed + k for each run, trains every configured model
// on the identical split, and evaluates models and both baselines.
ExperimentResult run_experiment(const Dataset& dataset, const ExperimentConfig& config);

// Load the configured CSV or generate the configured synthetic dataset.
Dataset load_experiment_dataset(const ExperimentConfig& config);

std::string report_json(const ExperimentResult& result, const ExperimentConfig& config);
std::string report_table(const ExperimentResult& result);

// report.json, report.txt, logs/*.jsonl and models/*.bin under out_dir.
void write_reports(const ExperimentResult& result, const ExperimentConfig& config);

struct PublishedCell {
  std::optional<double> mean;  // percent
  std::optional<double> spread;
};

struct PublishedRow {
  std::string id;
  PublishedCell well_known;
  PublishedCell lesser_known;
  PublishedCell consumers;
};

// Published precision table for the four reference models.
const std::vector<PublishedRow>& published_precisions();

struct ComparisonCell {
  std::optional<double> measured;  // percent
  std::optional<double> measured_std;
  std::optional<double> published;
  std::optional<double> delta;  // measured - published
};

struct ComparisonRow {
  std::string id;
  ComparisonCell well_known;
  ComparisonCell lesser_known;
  ComparisonCell consumers;
};

std::vector<ComparisonRow> compare_with_published(const ExperimentResult& result);
std::string comparison_table(const std::vector<ComparisonRow>& rows);
std::string comparison_json(const std::vector<ComparisonRow>& rows);

// Canonical settings: default models, 5 runs, 80/20 splits, default TrainConfig.
ExperimentConfig reference_config(const std::filesystem::path& data);

}  // namespace pikirec
