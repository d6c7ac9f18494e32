#include "pikirec/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace pikirec {

std::vector<ScoredInteraction> score_interactions(const FactorModel& model,
                                                  std::span<const Interaction> interactions) {
  std::vector<ScoredInteraction> out;
  out.reserve(interactions.size());
  for (const auto& x : interactions) {
    out.push_back({x.user, x.item, x.label, predict(model, x.user, x.item)});
  }
  return out;
}

double median(std::span<const double> values) {
  if (values.empty()) throw ValueError("median of an empty set");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

namespace {

double score_median(std::span<const ScoredInteraction> scored) {
  std::vector<double> scores;
  scores.reserve(scored.size());
  for (const auto& s : scored) scores.push_back(s.score);
  return median(scores);
}

}  // namespace

RecommendationSet recommend_by_median(std::vector<ScoredInteraction> scored,
                                      std::span<const Segment> song_segments) {
  if (scored.empty()) throw ValueError("cannot recommend from an empty scored set");
  RecommendationSet recs;
  recs.threshold = score_median(scored);
  recs.scored = std::move(scored);
  for (std::size_t k = 0; k < recs.scored.size(); ++k) {
    const auto& s = recs.scored[k];
    if (!(s.score > recs.threshold)) continue;
    if (s.item >= song_segments.size()) {
      throw IndexError(fmt::format("song {} has no segment assignment", s.item));
    }
    recs.recommended.push_back(k);
    (song_segments[s.item] == Segment::kWellKnown ? recs.recommended_well_known
                                                  : recs.recommended_lesser_known)
        .push_back(k);
  }
  return recs;
}

std::optional<double> median_consumer_precision(std::span<const ScoredInteraction> scored) {
  if (scored.empty()) return std::nullopt;
  const double threshold = score_median(scored);
  PrecisionCell cell;
  for (const auto& s : scored) {
    if (s.score > threshold) {
      ++cell.recommended;
      cell.liked += s.label;
    }
  }
  return cell.precision();
}

StakeholderPrecision stakeholder_precision(const RecommendationSet& recs) {
  auto tally = [&](const std::vector<std::size_t>& idx) {
    PrecisionCell c;
    c.recommended = idx.size();
    for (auto k : idx) c.liked += recs.scored[k].label;
    return c;
  };
  return {tally(recs.recommended), tally(recs.recommended_well_known),
          tally(recs.recommended_lesser_known)};
}

namespace {

StakeholderPrecision segment_baseline(std::span<const Interaction> evaluation,
                                      std::span<const Segment> song_segments, Segment pick) {
  if (evaluation.empty()) throw ValueError("baseline needs a non-empty evaluation set");
  StakeholderPrecision out;
  PrecisionCell& cell = pick == Segment::kWellKnown ? out.well_known : out.lesser_known;
  for (const auto& x : evaluation) {
    if (x.item >= song_segments.size()) {
      throw IndexError(fmt::format("song {} has no segment assignment", x.item));
    }
    if (song_segments[x.item] != pick) continue;
    ++cell.recommended;
    cell.liked += x.label;
  }
  out.consumers = cell;
  return out;
}

}  // namespace

StakeholderPrecision popularity_baseline(std::span<const Interaction> evaluation,
                                         std::span<const Segment> song_segments) {
  return segment_baseline(evaluation, song_segments, Segment::kWellKnown);
}

StakeholderPrecision anti_popularity_baseline(std::span<const Interaction> evaluation,
                                              std::span<const Segment> song_segments) {
  return segment_baseline(evaluation, song_segments, Segment::kLesserKnown);
}

std::optional<MetricSummary> summarize(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  MetricSummary s;
  s.values.assign(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

StakeholderReport aggregate_runs(std::span<const StakeholderPrecision> runs) {
  StakeholderReport report;
  report.runs.assign(runs.begin(), runs.end());
  std::vector<double> consumers, well_known, lesser_known;
  for (const auto& r : runs) {
    if (auto p = r.consumers.precision()) consumers.push_back(*p);
    if (auto p = r.well_known.precision()) well_known.push_back(*p);
    if (auto p = r.lesser_known.precision()) lesser_known.push_back(*p);
  }
  report.consumers = summarize(consumers);
  report.well_known = summarize(well_known);
  report.lesser_known = summarize(lesser_known);
  return report;
}

}  // namespace pikirec
