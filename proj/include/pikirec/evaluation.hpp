#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pikirec/dataset.hpp"
#include "pikirec/model.hpp"

namespace pikirec {

struct ScoredInteraction {
  UserIndex user = 0;
  ItemIndex item = 0;
  std::uint8_t label = 0;
  double score = 0.0;
};

std::vector<ScoredInteraction> score_interactions(const FactorModel& model,
                                                  std::span<const Interaction> interactions);

// Mean of the two central order statistics for even counts.
double median(std::span<const double> values);

// Interactions scoring strictly above the median of all scores are the
// recommendations; each is further assigned to its song's segment.
struct RecommendationSet {
  std::vector<ScoredInteraction> scored;
  double threshold = 0.0;
  std::vector<std::size_t> recommended;  // indices into `scored`
  std::vector<std::size_t> recommended_well_known;
  std::vector<std::size_t> recommended_lesser_known;
};

RecommendationSet recommend_by_median(std::vector<ScoredInteraction> scored,
                                      std::span<const Segment> song_segments);

// Liked fraction of the above-median entries; nullopt when nothing clears the
// threshold.
std::optional<double> median_consumer_precision(std::span<const ScoredInteraction> scored);

struct PrecisionCell {
  std::size_t recommended = 0;
  std::size_t liked = 0;

  // Undefined (nullopt) for an empty segment, never 0.
  std::optional<double> precision() const {
    if (recommended == 0) return std::nullopt;
    return static_cast<double>(liked) / static_cast<double>(recommended);
  }
};

// Single-run precision for the three stakeholders.
struct StakeholderPrecision {
  PrecisionCell consumers;
  PrecisionCell well_known;
  PrecisionCell lesser_known;

  bool no_recommendations() const { return consumers.recommended == 0; }
};

StakeholderPrecision stakeholder_precision(const RecommendationSet& recs);

// Recommend every evaluation interaction whose song is well-known.
StakeholderPrecision popularity_baseline(std::span<const Interaction> evaluation,
                                         std::span<const Segment> song_segments);
// Recommend every evaluation interaction whose song is lesser-known.
StakeholderPrecision anti_popularity_baseline(std::span<const Interaction> evaluation,
                                              std::span<const Segment> song_segments);

struct MetricSummary {
  std::vector<double> values;  // runs where the metric was defined
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation; 0 for a single run
};

// Mean and sample std; nullopt for an empty input.
std::optional<MetricSummary> summarize(std::span<const double> values);

struct StakeholderReport {
  std::vector<StakeholderPrecision> runs;
  std::optional<MetricSummary> consumers;
  std::optional<MetricSummary> well_known;
  std::optional<MetricSummary> lesser_known;
};

// Per-metric aggregation across runs; runs where a metric is undefined are
// left out of that metric only.
StakeholderReport aggregate_runs(std::span<const StakeholderPrecision> runs);

}  // namespace pikirec
