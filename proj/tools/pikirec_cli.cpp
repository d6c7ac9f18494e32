// pikirec: dataset inspection, synthetic data, and stakeholder experiments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "pikirec/experiment.hpp"

namespace fs = std::filesystem;
using namespace pikirec;

namespace {

struct CommonFlags {
  std::string data;
  std::string config;
  std::size_t runs = 0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out;
  bool personalized_only = false;
  bool random_only = false;

  CLI::Option* runs_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_experiment_flags) {
  cmd->add_option("--data", f.data, "Ratings CSV (timestamp,user_id,song_id,liked,...)");
  auto* p = cmd->add_flag("--personalized-only", f.personalized_only,
                          "Keep only personalized recommendations");
  auto* r = cmd->add_flag("--random-only", f.random_only, "Keep only randomly selected songs");
  p->excludes(r);
  if (!with_experiment_flags) return;
  cmd->add_option("--config", f.config, "Key = value config file; flags override it");
  f.runs_opt = cmd->add_option("--runs", f.runs, "Number of split/train/evaluate runs");
  f.seed_opt = cmd->add_option("--seed", f.seed, "Base seed; run k uses seed + k");
  f.jobs_opt = cmd->add_option("--jobs", f.jobs, "Parallel (run, model) jobs")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory");
}

PersonalizationFilter filter_of(const CommonFlags& f) {
  if (f.personalized_only) return PersonalizationFilter::kPersonalizedOnly;
  if (f.random_only) return PersonalizationFilter::kRandomOnly;
  return PersonalizationFilter::kAll;
}

// Config file first, then flags.
ExperimentConfig build_config(ExperimentConfig base, const CommonFlags& f) {
  if (!f.config.empty()) apply_config_file(base, f.config);
  if (!f.data.empty()) {
    base.data = f.data;
    base.synth.reset();
  }
  if (f.personalized_only || f.random_only) base.filter = filter_of(f);
  if (f.runs_opt && f.runs_opt->count()) base.runs = f.runs;
  if (f.seed_opt && f.seed_opt->count()) base.base_seed = f.seed;
  if (f.jobs_opt && f.jobs_opt->count()) base.jobs = f.jobs;
  if (!f.out.empty()) base.out_dir = f.out;
  return base;
}

template <typename Fn>
int stage(const char* name, Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << fmt::format("pikirec: {} failed: {}\n", name, e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix-factorization music recommender with stakeholder evaluation"};
  app.require_subcommand(1);

  CommonFlags inspect_flags;
  auto* inspect = app.add_subcommand("inspect", "Print dataset statistics");
  add_common(inspect, inspect_flags, false);
  inspect->get_option("--data")->required();

  SynthParams synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a planted low-rank synthetic dataset as CSV");
  synth_cmd->add_option("--users", synth.num_users)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--songs", synth.num_songs)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dim", synth.d_true, "Planted dimension")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--density", synth.density);
  synth_cmd->add_option("--noise", synth.noise, "Label flip probability");
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--out", synth_out, "Output CSV path")->required();

  CommonFlags run_flags;
  auto* run = app.add_subcommand("run", "Split, train, evaluate and write reports");
  add_common(run, run_flags, true);

  CommonFlags table_flags;
  auto* table = app.add_subcommand("reproduce",
                                   "Canonical 5-run experiment compared with published precisions");
  add_common(table, table_flags, true);
  table->get_option("--data")->required();

  CLI11_PARSE(app, argc, argv);

  if (inspect->parsed()) {
    return stage("inspect", [&] {
      const auto ds = load_csv(inspect_flags.data, LoadOptions{filter_of(inspect_flags)});
      std::cout << format_summary(summarize_dataset(ds));
      std::cout << fmt::format("popularity threshold  {:.4f}\n", ds.popularity_threshold());
    });
  }

  if (synth_cmd->parsed()) {
    return stage("synth", [&] {
      const auto data = synth_generate(synth);
      save_csv(synth_out, data.dataset);
      std::cout << format_summary(summarize_dataset(data.dataset));
    });
  }

  if (run->parsed()) {
    ExperimentConfig config;
    if (int rc = stage("config", [&] { config = build_config(config, run_flags); config.validate(); })) {
      return rc;
    }
    Dataset ds;
    if (int rc = stage("load", [&] { ds = load_experiment_dataset(config); })) return rc;
    ExperimentResult result;
    if (int rc = stage("experiment", [&] { result = run_experiment(ds, config); })) return rc;
    return stage("report", [&] {
      write_reports(result, config);
      std::cout << report_table(result);
      std::cout << fmt::format("reports written to {}\n", config.out_dir.string());
    });
  }

  if (table->parsed()) {
    ExperimentConfig config;
    if (int rc = stage("config", [&] {
          config = build_config(reference_config(table_flags.data), table_flags);
          config.validate();
        })) {
      return rc;
    }
    Dataset ds;
    if (int rc = stage("load", [&] { ds = load_experiment_dataset(config); })) return rc;
    ExperimentResult result;
    if (int rc = stage("experiment", [&] { result = run_experiment(ds, config); })) return rc;
    return stage("report", [&] {
      write_reports(result, config);
      const auto rows = compare_with_published(result);
      std::ofstream(config.out_dir / "comparison.json", std::ios::binary) << comparison_json(rows);
      std::ofstream(config.out_dir / "comparison.txt", std::ios::binary) << comparison_table(rows);
      std::cout << report_table(result) << "\n" << comparison_table(rows);
    });
  }
  return 0;
}
