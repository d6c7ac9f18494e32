#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pikirec/dataset.hpp"
#include "pikirec/model.hpp"

namespace pikirec {

// Weights on the positive, negative and missing feedback sets of the
// generalized WRMF objective
//
//   alpha * sum_P (1 - p)^2 + beta * sum_N p^2 + gamma * sum_M p^2
//     + lambda * (|X|_F^2 + |Y|_F^2).
//
// Classic implicit-feedback WRMF (targets 1 on positives, 0 on unobserved
// pairs) is the beta = 0 case. In training the weights double as mixture
// probabilities over the three sets when drawing a batch.
struct WeightSchema {
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 0.0;

  void validate() const;

  // Positives and missing; dislikes are ignored.
  static constexpr WeightSchema likes() { return {0.5, 0.0, 0.5}; }
  // Positives and negatives; nothing sampled from the missing set.
  static constexpr WeightSchema likes_and_dislikes() { return {0.5, 0.5, 0.0}; }
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 512;
  std::size_t dim = kDefaultDim;
  std::vector<double> lambda_grid = {0.1, 0.01, 0.001, 0.0001};
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class FeedbackSource : std::uint8_t { kPositive, kNegative, kMissing };

struct TrainingTriple {
  UserIndex user = 0;
  ItemIndex item = 0;
  double target = 0.0;  // 1 for positives, 0 otherwise
  double weight = 0.0;  // schema weight of the source set
  FeedbackSource source = FeedbackSource::kPositive;
};

struct TrainingBatch {
  std::vector<TrainingTriple> triples;
};

// Uniform draws from U x I rejecting observed pairs. Throws ConfigError if
// the missing set is empty and count > 0.
std::vector<UserItem> sample_missing(const FeedbackPartition& partition, std::size_t count,
                                     std::mt19937_64& rng);
// Every missing pair in row-major order. Test-scale only.
std::vector<UserItem> enumerate_missing(const FeedbackPartition& partition);
// A fixed |P|-sized stand-in for the missing set, seeded.
std::vector<UserItem> missing_stand_in(const FeedbackPartition& partition, std::uint64_t seed);

// The objective with the missing-set sum taken over `missing_sample`.
double objective(const FactorModel& model, const FeedbackPartition& partition,
                 const WeightSchema& schema, double lambda,
                 std::span<const UserItem> missing_sample);

struct DenseGradient {
  RowMatrix user;
  RowMatrix item;
};

DenseGradient objective_gradient(const FactorModel& model, const FeedbackPartition& partition,
                                 const WeightSchema& schema, double lambda,
                                 std::span<const UserItem> missing_sample);

// Source set per draw with probability proportional to its weight, then a
// uniform member of that set.
TrainingBatch sample_batch(const FeedbackPartition& partition, const WeightSchema& schema,
                           std::size_t batch_size, std::mt19937_64& rng);

// Loss whose gradient adagrad_step follows:
//   sum_k w_k (p_k - t_k)^2 + lambda * sum over touched rows |row|^2.
double batch_objective(const FactorModel& model, const TrainingBatch& batch, double lambda);

// Mean weighted squared error over the batch, without regularization.
double batch_data_loss(const FactorModel& model, const TrainingBatch& batch);

struct SparseGradient {
  std::vector<UserIndex> users;  // touched rows, first-touch order
  RowMatrix user_grad;           // one row per entry of `users`
  std::vector<ItemIndex> items;
  RowMatrix item_grad;
};

SparseGradient batch_gradient(const FactorModel& model, const TrainingBatch& batch, double lambda);

inline constexpr double kAdagradEpsilon = 1e-8;

// Running sums of squared gradients, one per parameter.
struct AdagradState {
  RowMatrix user_accum;
  RowMatrix item_accum;
  std::uint64_t iteration = 0;

  static AdagradState zeros_like(const FactorModel& model);
};

// theta <- theta - lr * g / sqrt(G + eps), G including the current g^2.
// Throws TrainingError on a non-finite gradient.
void adagrad_step(FactorModel& model, AdagradState& state, const TrainingBatch& batch,
                  double lambda, double learning_rate);

struct EpochLog {
  double lambda = 0.0;
  std::size_t epoch = 0;  // 1-based
  double mean_batch_loss = 0.0;
  std::optional<double> validation_precision;
  double wall_seconds = 0.0;
};

struct LambdaResult {
  double lambda = 0.0;
  std::optional<double> best_validation_precision;
  std::size_t best_epoch = 0;
  std::vector<EpochLog> log;
};

struct TrainResult {
  FactorModel model;
  double lambda = 0.0;
  std::optional<double> validation_precision;
  std::vector<LambdaResult> per_lambda;
};

// Trains at a single lambda with early stopping on validation consumer
// precision and returns the parameters of the best epoch.
FactorModel train_at_lambda(const SplitBundle& split, const WeightSchema& schema,
                            const TrainConfig& config, double lambda, LambdaResult& result);

// Grid search over config.lambda_grid; the lambda with the highest
// validation precision wins, ties going to the earlier grid entry.
TrainResult train(const SplitBundle& split, const WeightSchema& schema, const TrainConfig& config);

}  // namespace pikirec
