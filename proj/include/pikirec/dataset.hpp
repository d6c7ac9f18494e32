#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "pikirec/errors.hpp"

namespace pikirec {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;
using Timestamp = std::chrono::sys_time<std::chrono::microseconds>;

// Raw rating as stored in the source CSV.
enum class Label : std::uint8_t { kDislike = 0, kLike = 1, kSuperlike = 2 };

enum class Segment : std::uint8_t { kLesserKnown = 0, kWellKnown = 1 };

const char* segment_name(Segment s);

// Maps {0,1,2} onto {0,1}; superlikes count as likes. Throws ValueError
// for anything else.
int binarize(int label);
int binarize(Label label);

struct InteractionRecord {
  Timestamp timestamp;
  std::string user_id;
  std::string song_id;
  Label label = Label::kDislike;
  bool personalized = false;
  int artist_popularity = 0;
};

struct UserItem {
  UserIndex user = 0;
  ItemIndex item = 0;

  friend bool operator==(const UserItem&, const UserItem&) = default;
  friend auto operator<=>(const UserItem&, const UserItem&) = default;
};

// One binarized observation, addressed by dense indices.
struct Interaction {
  UserIndex user = 0;
  ItemIndex item = 0;
  std::uint8_t label = 0;  // 0 or 1

  UserItem pair() const { return {user, item}; }
  friend bool operator==(const Interaction&, const Interaction&) = default;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

enum class PersonalizationFilter { kAll, kPersonalizedOnly, kRandomOnly };

struct LoadOptions {
  PersonalizationFilter filter = PersonalizationFilter::kAll;
};

// Indexed, deduplicated interaction collection. Immutable once built.
class Dataset {
 public:
  Dataset() = default;

  // Deduplicates (latest timestamp wins, later row on ties), builds dense
  // indices in first-appearance order, and segments songs by popularity.
  static Dataset from_records(std::vector<InteractionRecord> records);

  const std::vector<InteractionRecord>& records() const { return records_; }
  std::size_t num_users() const { return user_ids_.size(); }
  std::size_t num_items() const { return song_ids_.size(); }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::string& user_id(UserIndex u) const { return user_ids_.at(u); }
  const std::string& song_id(ItemIndex i) const { return song_ids_.at(i); }
  UserIndex user_index(const std::string& id) const;
  ItemIndex song_index(const std::string& id) const;

  // Binarized observations, parallel to records().
  const std::vector<Interaction>& interactions() const { return interactions_; }

  int song_popularity(ItemIndex i) const { return song_popularity_.at(i); }
  double popularity_threshold() const { return popularity_threshold_; }
  const std::vector<Segment>& song_segments() const { return song_segment_; }
  Segment song_segment(ItemIndex i) const { return song_segment_.at(i); }

 private:
  std::vector<InteractionRecord> records_;
  std::vector<Interaction> interactions_;
  std::vector<std::string> user_ids_;
  std::vector<std::string> song_ids_;
  std::unordered_map<std::string, UserIndex> user_index_;
  std::unordered_map<std::string, ItemIndex> song_index_;
  std::vector<int> song_popularity_;
  double popularity_threshold_ = 0.0;
  std::vector<Segment> song_segment_;
};

inline constexpr const char* kCsvHeader =
    "timestamp,user_id,song_id,liked,personalized,spotify_popularity";

Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

Dataset load_csv(const std::filesystem::path& path, const LoadOptions& options = {});
Dataset read_csv(std::istream& in, const LoadOptions& options = {});
void write_csv(std::ostream& out, const Dataset& dataset);
void save_csv(const std::filesystem::path& path, const Dataset& dataset);

struct PopularitySegmentation {
  double threshold = 0.0;
  std::vector<Segment> segments;  // indexed by song
};

// Threshold is the mean popularity over records; a song is well-known iff
// its popularity is strictly above it.
PopularitySegmentation segment_by_popularity(const Dataset& dataset);

struct SplitBundle {
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> evaluation;
  std::uint64_t seed = 0;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
};

inline constexpr double kValidationKeepRatio = 0.9;

// Number of a user's n interactions kept on the train side at `ratio`.
// Users with fewer than two interactions keep everything.
std::size_t train_side_count(std::size_t n, double ratio);

// Per-user shuffle-and-cut. Validation is carved from each user's train side
// with the same procedure at kValidationKeepRatio.
SplitBundle stratified_split(const Dataset& dataset, double ratio, std::uint64_t seed);

// Positive/negative observations plus a membership test for the implicit
// missing set U x I \ observed.
class FeedbackPartition {
 public:
  FeedbackPartition(std::span<const Interaction> observed, std::size_t num_users,
                    std::size_t num_items);

  const std::vector<UserItem>& positives() const { return positives_; }
  const std::vector<UserItem>& negatives() const { return negatives_; }
  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }

  bool is_observed(UserItem p) const;
  bool is_missing(UserItem p) const;
  std::uint64_t num_observed_pairs() const { return observed_items_.size(); }
  std::uint64_t num_missing() const;

 private:
  std::size_t num_users_;
  std::size_t num_items_;
  std::vector<UserItem> positives_;
  std::vector<UserItem> negatives_;
  // CSR: observed_items_[row_start_[u] .. row_start_[u+1]) sorted ascending.
  std::vector<std::size_t> row_start_;
  std::vector<ItemIndex> observed_items_;
};

FeedbackPartition partition_feedback(std::span<const Interaction> split,
                                     std::size_t num_users, std::size_t num_items);

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SynthParams {
  std::size_t num_users = 100;
  std::size_t num_songs = 100;
  std::size_t d_true = 2;
  double density = 0.5;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset dataset;
  RowMatrix user_factors;  // rows ordered by synthetic id u<k>
  RowMatrix item_factors;  // rows ordered by synthetic id s<k>
};

// Planted low-rank generator. Label is 1 iff the planted score is strictly
// positive, then flipped with probability `noise`. Every user and song gets
// at least one interaction.
SyntheticData synth_generate(const SynthParams& params);

// Same, with caller-supplied planted factors.
SyntheticData synth_generate_planted(const RowMatrix& user_factors,
                                     const RowMatrix& item_factors, double density,
                                     double noise, std::uint64_t seed);

}  // namespace pikirec
