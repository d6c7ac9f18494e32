#include "pikirec/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include <fmt/format.h>

namespace pikirec {

const char* segment_name(Segment s) {
  return s == Segment::kWellKnown ? "well-known" : "lesser-known";
}

int binarize(int label) {
  switch (label) {
    case 0:
      return 0;
    case 1:
    case 2:
      return 1;
    default:
      throw ValueError(fmt::format("label must be 0, 1 or 2, got {}", label));
  }
}

int binarize(Label label) { return binarize(static_cast<int>(label)); }

UserIndex Dataset::user_index(const std::string& id) const {
  auto it = user_index_.find(id);
  if (it == user_index_.end()) throw IndexError("unknown user id: " + id);
  return it->second;
}

ItemIndex Dataset::song_index(const std::string& id) const {
  auto it = song_index_.find(id);
  if (it == song_index_.end()) throw IndexError("unknown song id: " + id);
  return it->second;
}

Dataset Dataset::from_records(std::vector<InteractionRecord> records) {
  for (const auto& r : records) {
    if (r.artist_popularity < 0 || r.artist_popularity > 100) {
      throw ValueError(fmt::format("artist popularity out of [0, 100]: {}", r.artist_popularity));
    }
    binarize(r.label);
  }

  // Latest timestamp wins; on equal timestamps the later row wins.
  std::map<std::pair<std::string, std::string>, std::size_t> latest;
  for (std::size_t k = 0; k < records.size(); ++k) {
    auto key = std::make_pair(records[k].user_id, records[k].song_id);
    auto [it, inserted] = latest.try_emplace(std::move(key), k);
    if (!inserted && records[k].timestamp >= records[it->second].timestamp) it->second = k;
  }
  std::vector<bool> keep(records.size(), false);
  for (const auto& [key, k] : latest) keep[k] = true;

  Dataset ds;
  ds.records_.reserve(latest.size());
  for (std::size_t k = 0; k < records.size(); ++k) {
    if (keep[k]) ds.records_.push_back(std::move(records[k]));
  }

  std::vector<Timestamp> popularity_time;
  ds.interactions_.reserve(ds.records_.size());
  double popularity_sum = 0.0;
  for (const auto& r : ds.records_) {
    auto [uit, new_user] = ds.user_index_.try_emplace(r.user_id, ds.user_ids_.size());
    if (new_user) ds.user_ids_.push_back(r.user_id);
    auto [sit, new_song] = ds.song_index_.try_emplace(r.song_id, ds.song_ids_.size());
    if (new_song) {
      ds.song_ids_.push_back(r.song_id);
      ds.song_popularity_.push_back(r.artist_popularity);
      popularity_time.push_back(r.timestamp);
    } else if (r.timestamp >= popularity_time[sit->second]) {
      // Artist popularity drifts over time; the most recent observation wins.
      ds.song_popularity_[sit->second] = r.artist_popularity;
      popularity_time[sit->second] = r.timestamp;
    }
    ds.interactions_.push_back(
        {uit->second, sit->second, static_cast<std::uint8_t>(binarize(r.label))});
    popularity_sum += r.artist_popularity;
  }

  if (!ds.records_.empty()) {
    ds.popularity_threshold_ = popularity_sum / static_cast<double>(ds.records_.size());
  }
  ds.song_segment_.resize(ds.song_ids_.size());
  for (std::size_t i = 0; i < ds.song_ids_.size(); ++i) {
    ds.song_segment_[i] = ds.song_popularity_[i] > ds.popularity_threshold_
                              ? Segment::kWellKnown
                              : Segment::kLesserKnown;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Timestamps

namespace {

bool parse_int(std::string_view s, long long& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  text = trim(text);
  auto fail = [&]() -> Timestamp {
    throw ValueError(fmt::format("unparsable timestamp '{}'", text));
  };

  // Bare epoch seconds, optionally fractional.
  if (!text.empty() && text.find('-', 1) == std::string_view::npos) {
    double secs = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), secs);
    if (ec != std::errc() || ptr != text.data() + text.size()) return fail();
    return Timestamp(microseconds(std::llround(secs * 1e6)));
  }

  // YYYY-MM-DD[ T]HH:MM:SS[.ffffff][Z|+00:00|+0000]
  if (text.size() < 19 || text[4] != '-' || text[7] != '-' ||
      (text[10] != ' ' && text[10] != 'T') || text[13] != ':' || text[16] != ':') {
    return fail();
  }
  long long y, mo, d, h, mi, s;
  if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), mo) ||
      !parse_int(text.substr(8, 2), d) || !parse_int(text.substr(11, 2), h) ||
      !parse_int(text.substr(14, 2), mi) || !parse_int(text.substr(17, 2), s)) {
    return fail();
  }
  std::string_view rest = text.substr(19);
  long long micros = 0;
  if (!rest.empty() && rest.front() == '.') {
    rest.remove_prefix(1);
    std::size_t n = 0;
    while (n < rest.size() && rest[n] >= '0' && rest[n] <= '9') ++n;
    if (n == 0) return fail();
    for (std::size_t k = 0; k < 6; ++k) micros = micros * 10 + (k < n ? rest[k] - '0' : 0);
    rest.remove_prefix(n);
  }
  if (!(rest.empty() || rest == "Z" || rest == "+00:00" || rest == "+0000")) return fail();

  year_month_day ymd{year(static_cast<int>(y)), month(static_cast<unsigned>(mo)),
                     day(static_cast<unsigned>(d))};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) return fail();
  return Timestamp(sys_days(ymd).time_since_epoch()) + hours(h) + minutes(mi) + seconds(s) +
         microseconds(micros);
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  auto day_point = floor<days>(ts);
  year_month_day ymd(day_point);
  auto tod = ts - day_point;
  auto h = duration_cast<hours>(tod);
  auto m = duration_cast<minutes>(tod - h);
  auto s = duration_cast<seconds>(tod - h - m);
  auto us = (tod - h - m - s).count();
  auto out = fmt::format("{:04d}-{:02d}-{:02d} {:02d}:{:02d}:{:02d}", static_cast<int>(ymd.year()),
                         static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                         h.count(), m.count(), s.count());
  if (us != 0) out += fmt::format(".{:06d}", us);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr std::array<std::string_view, 6> kColumns = {
    "timestamp", "user_id", "song_id", "liked", "personalized", "spotify_popularity"};

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool keep_row(const InteractionRecord& r, PersonalizationFilter f) {
  switch (f) {
    case PersonalizationFilter::kPersonalizedOnly:
      return r.personalized;
    case PersonalizationFilter::kRandomOnly:
      return !r.personalized;
    case PersonalizationFilter::kAll:
      break;
  }
  return true;
}

}  // namespace

Dataset read_csv(std::istream& in, const LoadOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty file: missing header row", "timestamp");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  // Column position for each expected name, located by header name.
  std::array<std::size_t, kColumns.size()> pos;
  pos.fill(std::string::npos);
  auto header = split_row(line);
  for (std::size_t c = 0; c < header.size(); ++c) {
    auto it = std::find(kColumns.begin(), kColumns.end(), header[c]);
    if (it == kColumns.end()) {
      throw SchemaError(fmt::format("unexpected column '{}'", header[c]), std::string(header[c]));
    }
    auto k = static_cast<std::size_t>(it - kColumns.begin());
    if (pos[k] != std::string::npos) {
      throw SchemaError(fmt::format("duplicate column '{}'", header[c]), std::string(header[c]));
    }
    pos[k] = c;
  }
  for (std::size_t k = 0; k < kColumns.size(); ++k) {
    if (pos[k] == std::string::npos) {
      throw SchemaError(fmt::format("missing column '{}'", kColumns[k]), std::string(kColumns[k]));
    }
  }

  std::vector<InteractionRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_row(line);
    if (fields.size() != kColumns.size()) {
      throw ParseError(fmt::format("line {}: expected {} fields, found {}", line_no,
                                   kColumns.size(), fields.size()),
                       line_no);
    }
    InteractionRecord r;
    long long liked, personalized, popularity;
    try {
      r.timestamp = parse_timestamp(fields[pos[0]]);
    } catch (const ValueError& e) {
      throw ParseError(fmt::format("line {}: {}", line_no, e.what()), line_no);
    }
    r.user_id = std::string(fields[pos[1]]);
    r.song_id = std::string(fields[pos[2]]);
    if (r.user_id.empty() || r.song_id.empty()) {
      throw ParseError(fmt::format("line {}: empty id", line_no), line_no);
    }
    if (!parse_int(fields[pos[3]], liked) || !parse_int(fields[pos[4]], personalized) ||
        !parse_int(fields[pos[5]], popularity)) {
      throw ParseError(fmt::format("line {}: non-integer field", line_no), line_no);
    }
    if (liked < 0 || liked > 2) {
      throw ValueError(fmt::format("line {}: liked must be 0, 1 or 2, got {}", line_no, liked));
    }
    if (personalized != 0 && personalized != 1) {
      throw ValueError(
          fmt::format("line {}: personalized must be 0 or 1, got {}", line_no, personalized));
    }
    if (popularity < 0 || popularity > 100) {
      throw ValueError(fmt::format("line {}: spotify_popularity out of [0, 100]: {}", line_no,
                                   popularity));
    }
    r.label = static_cast<Label>(liked);
    r.personalized = personalized == 1;
    r.artist_popularity = static_cast<int>(popularity);
    if (keep_row(r, options.filter)) records.push_back(std::move(r));
  }
  return Dataset::from_records(std::move(records));
}

Dataset load_csv(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  return read_csv(in, options);
}

void write_csv(std::ostream& out, const Dataset& dataset) {
  out << kCsvHeader << '\n';
  for (const auto& r : dataset.records()) {
    out << format_timestamp(r.timestamp) << ',' << r.user_id << ',' << r.song_id << ','
        << static_cast<int>(r.label) << ',' << (r.personalized ? 1 : 0) << ','
        << r.artist_popularity << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  write_csv(out, dataset);
  if (!out) throw Error(fmt::format("write failed for '{}'", path.string()));
}

PopularitySegmentation segment_by_popularity(const Dataset& dataset) {
  if (dataset.empty()) throw ValueError("cannot segment an empty dataset");
  return {dataset.popularity_threshold(), dataset.song_segments()};
}

// ---------------------------------------------------------------------------
// Splitting

std::size_t train_side_count(std::size_t n, double ratio) {
  if (n < 2) return n;
  // The small slack keeps e.g. 0.29 * 100 from flooring to 28.
  auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  return std::min(k, n);
}

SplitBundle stratified_split(const Dataset& dataset, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ValueError(fmt::format("split ratio must lie in (0, 1), got {}", ratio));
  }
  if (dataset.empty()) throw ValueError("cannot split an empty dataset");

  const auto& all = dataset.interactions();
  std::vector<std::vector<std::size_t>> by_user(dataset.num_users());
  for (std::size_t k = 0; k < all.size(); ++k) by_user[all[k].user].push_back(k);

  SplitBundle bundle;
  bundle.seed = seed;
  bundle.num_users = dataset.num_users();
  bundle.num_items = dataset.num_items();
  std::mt19937_64 rng(seed);
  for (auto& rows : by_user) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const std::size_t train_side = train_side_count(rows.size(), ratio);
    const std::size_t keep = train_side_count(train_side, kValidationKeepRatio);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto& x = all[rows[j]];
      if (j < keep) {
        bundle.train.push_back(x);
      } else if (j < train_side) {
        bundle.validation.push_back(x);
      } else {
        bundle.evaluation.push_back(x);
      }
    }
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Feedback partition

FeedbackPartition::FeedbackPartition(std::span<const Interaction> observed,
                                     std::size_t num_users, std::size_t num_items)
    : num_users_(num_users), num_items_(num_items), row_start_(num_users + 1, 0) {
  for (const auto& x : observed) {
    if (x.user >= num_users || x.item >= num_items) {
      throw IndexError(fmt::format("interaction ({}, {}) outside {} x {}", x.user, x.item,
                                   num_users, num_items));
    }
    if (x.label > 1) throw ValueError("feedback partition expects binarized labels");
    ++row_start_[x.user + 1];
  }
  std::partial_sum(row_start_.begin(), row_start_.end(), row_start_.begin());
  observed_items_.resize(observed.size());
  auto fill = row_start_;
  for (const auto& x : observed) {
    observed_items_[fill[x.user]++] = x.item;
    (x.label == 1 ? positives_ : negatives_).push_back(x.pair());
  }
  for (std::size_t u = 0; u < num_users; ++u) {
    auto first = observed_items_.begin() + static_cast<std::ptrdiff_t>(row_start_[u]);
    auto last = observed_items_.begin() + static_cast<std::ptrdiff_t>(row_start_[u + 1]);
    std::sort(first, last);
    if (std::adjacent_find(first, last) != last) {
      throw ValueError(fmt::format("user {} has a duplicated observation", u));
    }
  }
}

bool FeedbackPartition::is_observed(UserItem p) const {
  if (p.user >= num_users_ || p.item >= num_items_) return false;
  auto first = observed_items_.begin() + static_cast<std::ptrdiff_t>(row_start_[p.user]);
  auto last = observed_items_.begin() + static_cast<std::ptrdiff_t>(row_start_[p.user + 1]);
  return std::binary_search(first, last, p.item);
}

bool FeedbackPartition::is_missing(UserItem p) const {
  return p.user < num_users_ && p.item < num_items_ && !is_observed(p);
}

std::uint64_t FeedbackPartition::num_missing() const {
  return static_cast<std::uint64_t>(num_users_) * num_items_ - observed_items_.size();
}

FeedbackPartition partition_feedback(std::span<const Interaction> split,
                                     std::size_t num_users, std::size_t num_items) {
  return FeedbackPartition(split, num_users, num_items);
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

constexpr int kLowPopularity = 15;
constexpr int kHighPopularity = 85;
constexpr double kPersonalizedRate = 0.66;

}  // namespace

SyntheticData synth_generate_planted(const RowMatrix& user_factors,
                                     const RowMatrix& item_factors, double density,
                                     double noise, std::uint64_t seed) {
  const auto num_users = static_cast<std::size_t>(user_factors.rows());
  const auto num_songs = static_cast<std::size_t>(item_factors.rows());
  if (num_users == 0 || num_songs == 0 || user_factors.cols() == 0) {
    throw ValueError("synthetic sizes must be positive");
  }
  if (user_factors.cols() != item_factors.cols()) {
    throw ValueError("planted factor matrices disagree on dimension");
  }
  if (!(density > 0.0 && density <= 1.0)) throw ValueError("density must lie in (0, 1]");
  if (!(noise >= 0.0 && noise < 0.5)) throw ValueError("noise must lie in [0, 0.5)");

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution include(density);
  std::bernoulli_distribution flip(noise);
  std::bernoulli_distribution personalized(kPersonalizedRate);

  // Songs map onto artists round-robin; the first two artists pin one low and
  // one high popularity so both segments are populated.
  const std::size_t num_artists = std::max<std::size_t>(2, (num_songs + 4) / 5);
  std::vector<int> artist_popularity(num_artists);
  std::uniform_int_distribution<int> pop(0, 100);
  for (std::size_t a = 0; a < num_artists; ++a) {
    artist_popularity[a] = a == 0 ? kLowPopularity : a == 1 ? kHighPopularity : pop(rng);
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<bool> user_seen(num_users, false), song_seen(num_songs, false);
  for (std::size_t u = 0; u < num_users; ++u) {
    for (std::size_t i = 0; i < num_songs; ++i) {
      if (include(rng)) {
        pairs.emplace_back(u, i);
        user_seen[u] = song_seen[i] = true;
      }
    }
  }
  for (std::size_t u = 0; u < num_users; ++u) {
    if (!user_seen[u]) {
      std::size_t i = std::uniform_int_distribution<std::size_t>(0, num_songs - 1)(rng);
      pairs.emplace_back(u, i);
      user_seen[u] = song_seen[i] = true;
    }
  }
  for (std::size_t i = 0; i < num_songs; ++i) {
    if (!song_seen[i]) {
      std::size_t u = std::uniform_int_distribution<std::size_t>(0, num_users - 1)(rng);
      pairs.emplace_back(u, i);
      song_seen[i] = true;
    }
  }
  std::sort(pairs.begin(), pairs.end());

  const auto base = Timestamp(std::chrono::sys_days(std::chrono::year(2021) /
                                                    std::chrono::January / 1)
                                  .time_since_epoch());
  std::vector<InteractionRecord> records;
  records.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [u, i] = pairs[k];
    const double score = user_factors.row(static_cast<Eigen::Index>(u))
                             .dot(item_factors.row(static_cast<Eigen::Index>(i)));
    bool liked = score > 0.0;
    if (flip(rng)) liked = !liked;
    InteractionRecord r;
    r.timestamp = base + std::chrono::seconds(static_cast<long long>(k));
    r.user_id = fmt::format("u{}", u);
    r.song_id = fmt::format("s{}", i);
    r.label = liked ? Label::kLike : Label::kDislike;
    r.personalized = personalized(rng);
    r.artist_popularity = artist_popularity[i % num_artists];
    records.push_back(std::move(r));
  }
  return {Dataset::from_records(std::move(records)), user_factors, item_factors};
}

SyntheticData synth_generate(const SynthParams& params) {
  if (params.num_users == 0 || params.num_songs == 0 || params.d_true == 0) {
    throw ValueError("synthetic sizes must be positive");
  }
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix users(params.num_users, params.d_true);
  RowMatrix items(params.num_songs, params.d_true);
  for (Eigen::Index k = 0; k < users.size(); ++k) users.data()[k] = normal(rng);
  for (Eigen::Index k = 0; k < items.size(); ++k) items.data()[k] = normal(rng);
  return synth_generate_planted(users, items, params.density, params.noise, rng());
}

}  // namespace pikirec
