#include "pikirec/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "json.hpp"

namespace pikirec {

using Json = nlohmann::ordered_json;

std::vector<ModelSpec> default_models() {
  return {{kLikesId, WeightSchema::likes()}, {kLikesDislikesId, WeightSchema::likes_and_dislikes()}};
}

void ExperimentConfig::validate() const {
  if (data && synth) throw ConfigError("configure either a data path or a synthetic dataset, not both");
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  train.validate();
  std::vector<std::string> seen = {kPopularityId, kAntiPopularityId};
  for (const auto& m : models) {
    m.schema.validate();
    if (m.name.empty()) throw ConfigError("model names must not be empty");
    if (std::find(seen.begin(), seen.end(), m.name) != seen.end()) {
      throw ConfigError(fmt::format("duplicate or reserved model name '{}'", m.name));
    }
    seen.push_back(m.name);
  }
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

std::string strip(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(strip(item));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, v));
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      auto x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("{}: expected a non-negative integer, got '{}'", key, v));
}

SynthParams& synth_of(ExperimentConfig& c) {
  if (!c.synth) c.synth = SynthParams{};
  return *c.synth;
}

}  // namespace

void apply_setting(ExperimentConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = strip(raw_key);
  const std::string value = strip(raw_value);
  if (key == "data") {
    c.data = value;
  } else if (key == "filter") {
    if (value == "all") {
      c.filter = PersonalizationFilter::kAll;
    } else if (value == "personalized") {
      c.filter = PersonalizationFilter::kPersonalizedOnly;
    } else if (value == "random") {
      c.filter = PersonalizationFilter::kRandomOnly;
    } else {
      throw ConfigError(fmt::format("filter: expected all|personalized|random, got '{}'", value));
    }
  } else if (key == "split.ratio") {
    c.split_ratio = to_double(key, value);
  } else if (key == "runs") {
    c.runs = to_uint(key, value);
  } else if (key == "seed") {
    c.base_seed = to_uint(key, value);
  } else if (key == "jobs") {
    c.jobs = to_uint(key, value);
  } else if (key == "out") {
    c.out_dir = value;
  } else if (key == "synth.users") {
    synth_of(c).num_users = to_uint(key, value);
  } else if (key == "synth.songs") {
    synth_of(c).num_songs = to_uint(key, value);
  } else if (key == "synth.dim") {
    synth_of(c).d_true = to_uint(key, value);
  } else if (key == "synth.density") {
    synth_of(c).density = to_double(key, value);
  } else if (key == "synth.noise") {
    synth_of(c).noise = to_double(key, value);
  } else if (key == "synth.seed") {
    synth_of(c).seed = to_uint(key, value);
  } else if (key == "train.learning_rate") {
    c.train.learning_rate = to_double(key, value);
  } else if (key == "train.batch_size") {
    c.train.batch_size = to_uint(key, value);
  } else if (key == "train.dim") {
    c.train.dim = to_uint(key, value);
  } else if (key == "train.max_epochs") {
    c.train.max_epochs = to_uint(key, value);
  } else if (key == "train.patience") {
    c.train.patience = to_uint(key, value);
  } else if (key == "train.lambda_grid") {
    c.train.lambda_grid.clear();
    for (const auto& v : split_list(value)) c.train.lambda_grid.push_back(to_double(key, v));
  } else if (key == "models") {
    // Comma list of known ids; resets the model list.
    c.models.clear();
    for (const auto& id : split_list(value)) {
      if (id == kLikesId) {
        c.models.push_back({id, WeightSchema::likes()});
      } else if (id == kLikesDislikesId) {
        c.models.push_back({id, WeightSchema::likes_and_dislikes()});
      } else {
        throw ConfigError(fmt::format("models: unknown model '{}'", id));
      }
    }
  } else if (key.rfind("model.", 0) == 0) {
    // model.<name> = alpha, beta, gamma
    const std::string name = key.substr(6);
    const auto w = split_list(value);
    if (w.size() != 3) throw ConfigError(fmt::format("{}: expected alpha,beta,gamma", key));
    WeightSchema s{to_double(key, w[0]), to_double(key, w[1]), to_double(key, w[2])};
    auto it = std::find_if(c.models.begin(), c.models.end(),
                           [&](const ModelSpec& m) { return m.name == name; });
    if (it != c.models.end()) {
      it->schema = s;
    } else {
      c.models.push_back({name, s});
    }
  } else {
    throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
}

void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (strip(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("{}:{}: expected key = value", path.string(), line_no));
    }
    apply_setting(config, line.substr(0, eq), line.substr(eq + 1));
  }
}

std::string display_name(const std::string& id) {
  if (id == kPopularityId) return "Popularity";
  if (id == kAntiPopularityId) return "Anti-popularity";
  if (id == kLikesId) return "WRMF with Likes";
  if (id == kLikesDislikesId) return "WRMF with Likes and Dislikes";
  return id;
}

// ---------------------------------------------------------------------------
// Dataset summary

DatasetSummary summarize_dataset(const Dataset& dataset) {
  DatasetSummary s;
  s.users = dataset.num_users();
  s.songs = dataset.num_items();
  s.interactions = dataset.size();
  double popularity = 0.0;
  for (const auto& r : dataset.records()) {
    s.likes += binarize(r.label);
    s.superlikes += r.label == Label::kSuperlike;
    s.personalized += r.personalized;
    popularity += r.artist_popularity;
  }
  for (const auto& x : dataset.interactions()) {
    (dataset.song_segment(x.item) == Segment::kWellKnown ? s.well_known_interactions
                                                         : s.lesser_known_interactions)++;
  }
  for (auto seg : dataset.song_segments()) {
    (seg == Segment::kWellKnown ? s.well_known_songs : s.lesser_known_songs)++;
  }
  if (s.interactions > 0) {
    const auto n = static_cast<double>(s.interactions);
    s.like_rate = static_cast<double>(s.likes) / n;
    s.personalized_rate = static_cast<double>(s.personalized) / n;
    s.popularity_mean = popularity / n;
  }
  return s;
}

std::string format_summary(const DatasetSummary& s) {
  std::string out;
  out += fmt::format("users                 {}\n", s.users);
  out += fmt::format("songs                 {}\n", s.songs);
  out += fmt::format("interactions          {}\n", s.interactions);
  out += fmt::format("like rate             {:.4f}  ({} likes, {} superlikes)\n", s.like_rate,
                     s.likes, s.superlikes);
  out += fmt::format("personalized rate     {:.4f}\n", s.personalized_rate);
  out += fmt::format("popularity mean       {:.4f}\n", s.popularity_mean);
  out += fmt::format("well-known songs      {}  ({} interactions)\n", s.well_known_songs,
                     s.well_known_interactions);
  out += fmt::format("lesser-known songs    {}  ({} interactions)\n", s.lesser_known_songs,
                     s.lesser_known_interactions);
  return out;
}

// ---------------------------------------------------------------------------
// Orchestration

const ModelOutcome& ExperimentResult::find(const std::string& id) const {
  for (const auto& m : models) {
    if (m.id == id) return m;
  }
  throw ValueError(fmt::format("no model '{}' in experiment result", id));
}

std::size_t count_cold_pairs(const SplitBundle& split) {
  std::vector<bool> user_seen(split.num_users, false), item_seen(split.num_items, false);
  for (const auto& x : split.train) {
    user_seen[x.user] = true;
    item_seen[x.item] = true;
  }
  std::size_t cold = 0;
  for (const auto& x : split.evaluation) cold += !user_seen[x.user] || !item_seen[x.item];
  return cold;
}

Dataset load_experiment_dataset(const ExperimentConfig& config) {
  if (config.synth) return synth_generate(*config.synth).dataset;
  if (!config.data) throw ConfigError("no dataset configured (use --data or synth.* settings)");
  return load_csv(*config.data, LoadOptions{config.filter});
}

ExperimentResult run_experiment(const Dataset& dataset, const ExperimentConfig& config) {
  config.validate();
  if (dataset.empty()) throw ValueError("dataset is empty");

  ExperimentResult result;
  std::vector<SplitBundle> splits;
  for (std::size_t k = 0; k < config.runs; ++k) {
    const std::uint64_t seed = config.base_seed + k;
    try {
      splits.push_back(stratified_split(dataset, config.split_ratio, seed));
    } catch (const Error& e) {
      throw Error(fmt::format("run {} split: {}", k, e.what()));
    }
    const auto& s = splits.back();
    result.runs.push_back(
        {k, seed, s.train.size(), s.validation.size(), s.evaluation.size(), count_cold_pairs(s)});
  }
  const auto& segments = dataset.song_segments();

  std::vector<StakeholderPrecision> pop, anti;
  for (std::size_t k = 0; k < config.runs; ++k) {
    if (splits[k].evaluation.empty()) {
      throw ValueError(fmt::format("run {} evaluation: evaluation set is empty", k));
    }
    pop.push_back(popularity_baseline(splits[k].evaluation, segments));
    anti.push_back(anti_popularity_baseline(splits[k].evaluation, segments));
  }
  result.models.push_back({kPopularityId, std::nullopt, aggregate_runs(pop), {}});
  result.models.push_back({kAntiPopularityId, std::nullopt, aggregate_runs(anti), {}});

  // One job per (run, model); each owns its model and accumulators.
  const std::size_t num_models = config.models.size();
  const std::size_t num_jobs = config.runs * num_models;
  std::vector<ModelRun> outcomes(num_jobs);
  std::vector<std::exception_ptr> errors(num_jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < num_jobs; j = next++) {
      const std::size_t run = j / num_models;
      const auto& spec = config.models[j % num_models];
      try {
        TrainConfig tc = config.train;
        tc.seed = config.base_seed + run;
        auto trained = train(splits[run], spec.schema, tc);
        auto recs = recommend_by_median(score_interactions(trained.model, splits[run].evaluation),
                                        segments);
        outcomes[j] = {run,
                       tc.seed,
                       trained.lambda,
                       trained.validation_precision,
                       stakeholder_precision(recs),
                       std::move(trained.per_lambda),
                       std::move(trained.model)};
      } catch (const std::exception& e) {
        errors[j] = std::make_exception_ptr(
            Error(fmt::format("run {} model {}: training/evaluation: {}", run, spec.name, e.what())));
      }
    }
  };
  const std::size_t threads = std::min(config.jobs, std::max<std::size_t>(num_jobs, 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t m = 0; m < num_models; ++m) {
    ModelOutcome outcome{config.models[m].name, config.models[m].schema, {}, {}};
    std::vector<StakeholderPrecision> per_run;
    for (std::size_t run = 0; run < config.runs; ++run) {
      auto& o = outcomes[run * num_models + m];
      per_run.push_back(o.precision);
      outcome.runs.push_back(std::move(o));
    }
    outcome.report = aggregate_runs(per_run);
    result.models.push_back(std::move(outcome));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

const char* filter_name(PersonalizationFilter f) {
  switch (f) {
    case PersonalizationFilter::kPersonalizedOnly:
      return "personalized";
    case PersonalizationFilter::kRandomOnly:
      return "random";
    case PersonalizationFilter::kAll:
      break;
  }
  return "all";
}

Json config_json(const ExperimentConfig& c) {
  Json j;
  if (c.data) j["data"] = c.data->string();
  if (c.synth) {
    j["synth"] = {{"users", c.synth->num_users}, {"songs", c.synth->num_songs},
                  {"dim", c.synth->d_true},      {"density", c.synth->density},
                  {"noise", c.synth->noise},     {"seed", c.synth->seed}};
  }
  j["filter"] = filter_name(c.filter);
  j["split_ratio"] = c.split_ratio;
  j["runs"] = c.runs;
  j["base_seed"] = c.base_seed;
  j["train"] = {{"learning_rate", c.train.learning_rate}, {"batch_size", c.train.batch_size},
                {"dim", c.train.dim},                     {"lambda_grid", c.train.lambda_grid},
                {"max_epochs", c.train.max_epochs},       {"patience", c.train.patience}};
  Json models = Json::array();
  for (const auto& m : c.models) {
    models.push_back({{"name", m.name},
                      {"alpha", m.schema.alpha},
                      {"beta", m.schema.beta},
                      {"gamma", m.schema.gamma}});
  }
  j["models"] = models;
  return j;
}

struct StakeholderView {
  const char* name;
  const PrecisionCell StakeholderPrecision::*cell;
  const std::optional<MetricSummary> StakeholderReport::*summary;
};

constexpr StakeholderView kStakeholders[] = {
    {"consumers", &StakeholderPrecision::consumers, &StakeholderReport::consumers},
    {"well_known", &StakeholderPrecision::well_known, &StakeholderReport::well_known},
    {"lesser_known", &StakeholderPrecision::lesser_known, &StakeholderReport::lesser_known},
};

std::string lambda_tag(double lambda) { return fmt::format("{:g}", lambda); }

std::string log_stem(const ModelRun& r, const std::string& model, double lambda) {
  return fmt::format("run{}_seed{}_{}_lambda{}", r.run, r.seed, model, lambda_tag(lambda));
}

}  // namespace

std::string report_json(const ExperimentResult& result, const ExperimentConfig& config) {
  Json root;
  root["config"] = config_json(config);
  root["dispersion"] = "sample standard deviation (n-1) across runs";
  Json runs = Json::array();
  for (const auto& r : result.runs) {
    runs.push_back({{"run", r.run},
                    {"seed", r.seed},
                    {"train", r.train},
                    {"validation", r.validation},
                    {"evaluation", r.evaluation},
                    {"cold_pairs", r.cold_pairs}});
  }
  root["runs"] = runs;

  Json records = Json::array();
  for (const auto& m : result.models) {
    for (const auto& sh : kStakeholders) {
      Json rec;
      rec["model"] = m.id;
      rec["stakeholder"] = sh.name;
      const auto& summary = m.report.*(sh.summary);
      rec["mean"] = summary ? Json(summary->mean) : Json(nullptr);
      rec["std"] = summary ? Json(summary->std) : Json(nullptr);
      rec["defined_runs"] = summary ? summary->values.size() : 0;
      Json per_run = Json::array(), recommended = Json::array(), liked = Json::array();
      for (const auto& run : m.report.runs) {
        const auto& cell = run.*(sh.cell);
        per_run.push_back(opt(cell.precision()));
        recommended.push_back(cell.recommended);
        liked.push_back(cell.liked);
      }
      rec["per_run"] = per_run;
      rec["recommended"] = recommended;
      rec["liked"] = liked;
      records.push_back(rec);
    }
  }
  root["records"] = records;

  Json training = Json::array();
  for (const auto& m : result.models) {
    for (const auto& r : m.runs) {
      training.push_back({{"model", m.id},
                          {"run", r.run},
                          {"seed", r.seed},
                          {"lambda", r.lambda},
                          {"validation_precision", opt(r.validation_precision)}});
    }
  }
  root["training"] = training;
  return root.dump(2) + "\n";
}

namespace {

std::string cell_text(const std::optional<MetricSummary>& s) {
  if (!s) return "–";
  return fmt::format("{:.1f} ± {:.2f}", 100.0 * s->mean, 100.0 * s->std);
}

// Pads by code points so "–" and "±" line up.
std::string pad(const std::string& s, std::size_t width) {
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  return s + std::string(width > cps ? width - cps : 0, ' ');
}

}  // namespace

std::string report_table(const ExperimentResult& result) {
  const std::size_t w0 = 30, w = 26;
  std::string out = pad("Model", w0) + " | " + pad("Well-known artists (%)", w) + " | " +
                    pad("Lesser-known artists (%)", w) + " | Consumers (%)\n";
  out += std::string(w0 + 2 * w + 22, '-') + "\n";
  for (const auto& m : result.models) {
    out += pad(display_name(m.id), w0) + " | " + pad(cell_text(m.report.well_known), w) + " | " +
           pad(cell_text(m.report.lesser_known), w) + " | " + cell_text(m.report.consumers) + "\n";
  }
  out += fmt::format("mean ± sample std over {} run(s); – = no recommendations in that segment\n",
                     result.runs.size());
  return out;
}

void write_reports(const ExperimentResult& result, const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir / "logs");
  fs::create_directories(config.out_dir / "models");
  auto write_text = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw Error(fmt::format("cannot write '{}'", p.string()));
  };
  write_text(config.out_dir / "report.json", report_json(result, config));
  write_text(config.out_dir / "report.txt", report_table(result));

  for (const auto& m : result.models) {
    for (const auto& r : m.runs) {
      save_model(config.out_dir / "models" / fmt::format("run{}_seed{}_{}.bin", r.run, r.seed, m.id),
                 r.model);
      for (const auto& lr : r.per_lambda) {
        std::string lines;
        for (const auto& e : lr.log) {
          Json line = {{"run", r.run},
                       {"seed", r.seed},
                       {"model", m.id},
                       {"epoch", e.epoch},
                       {"lambda", e.lambda},
                       {"mean_batch_loss", e.mean_batch_loss},
                       {"validation_precision", opt(e.validation_precision)},
                       {"wall_seconds", e.wall_seconds}};
          lines += line.dump() + "\n";
        }
        write_text(config.out_dir / "logs" / (log_stem(r, m.id, lr.lambda) + ".jsonl"), lines);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Published comparison

const std::vector<PublishedRow>& published_precisions() {
  static const std::vector<PublishedRow> rows = {
      {kPopularityId, {41.1, 0.04}, {}, {41.1, 0.04}},
      {kAntiPopularityId, {}, {36.3, 0.06}, {36.3, 0.06}},
      {kLikesId, {51.9, 0.29}, {48.2, 0.35}, {50.1, 0.28}},
      {kLikesDislikesId, {61.3, 0.18}, {57.6, 0.46}, {59.6, 0.30}},
  };
  return rows;
}

std::vector<ComparisonRow> compare_with_published(const ExperimentResult& result) {
  std::vector<ComparisonRow> out;
  for (const auto& pub : published_precisions()) {
    const auto it = std::find_if(result.models.begin(), result.models.end(),
                                 [&](const ModelOutcome& m) { return m.id == pub.id; });
    if (it == result.models.end()) continue;
    auto make = [](const std::optional<MetricSummary>& s, const PublishedCell& p) {
      ComparisonCell c;
      if (s) {
        c.measured = 100.0 * s->mean;
        c.measured_std = 100.0 * s->std;
      }
      c.published = p.mean;
      if (c.measured && c.published) c.delta = *c.measured - *c.published;
      return c;
    };
    out.push_back({pub.id, make(it->report.well_known, pub.well_known),
                   make(it->report.lesser_known, pub.lesser_known),
                   make(it->report.consumers, pub.consumers)});
  }
  return out;
}

namespace {

std::string comparison_cell_text(const ComparisonCell& c) {
  auto num = [](const std::optional<double>& v) { return v ? fmt::format("{:.1f}", *v) : "–"; };
  std::string delta = c.delta ? fmt::format("{:+.1f}", *c.delta) : "–";
  return fmt::format("{} / {} ({})", num(c.measured), num(c.published), delta);
}

Json comparison_cell_json(const ComparisonCell& c) {
  return {{"measured", opt(c.measured)},
          {"measured_std", opt(c.measured_std)},
          {"published", opt(c.published)},
          {"delta", opt(c.delta)}};
}

}  // namespace

std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  const std::size_t w0 = 30, w = 24;
  std::string out = pad("Model", w0) + " | " + pad("Well-known (%)", w) + " | " +
                    pad("Lesser-known (%)", w) + " | Consumers (%)\n";
  out += std::string(w0 + 2 * w + 22, '-') + "\n";
  for (const auto& r : rows) {
    out += pad(display_name(r.id), w0) + " | " + pad(comparison_cell_text(r.well_known), w) +
           " | " + pad(comparison_cell_text(r.lesser_known), w) + " | " +
           comparison_cell_text(r.consumers) + "\n";
  }
  out += "cells: measured / published (measured - published), percent\n";
  return out;
}

std::string comparison_json(const std::vector<ComparisonRow>& rows) {
  Json arr = Json::array();
  for (const auto& r : rows) {
    arr.push_back({{"model", r.id},
                   {"well_known", comparison_cell_json(r.well_known)},
                   {"lesser_known", comparison_cell_json(r.lesser_known)},
                   {"consumers", comparison_cell_json(r.consumers)}});
  }
  return arr.dump(2) + "\n";
}

ExperimentConfig reference_config(const std::filesystem::path& data) {
  ExperimentConfig c;
  c.data = data;
  c.runs = 5;
  c.split_ratio = 0.8;
  c.models = default_models();
  c.train = TrainConfig{};
  return c;
}

}  // namespace pikirec
