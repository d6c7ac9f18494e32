#include "pikirec/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "pikirec/evaluation.hpp"

namespace pikirec {

void WeightSchema::validate() const {
  if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0) || !std::isfinite(alpha + beta + gamma)) {
    throw ConfigError(fmt::format("schema weights must be finite and non-negative: ({}, {}, {})",
                                  alpha, beta, gamma));
  }
  if (!(alpha + beta + gamma > 0.0)) throw ConfigError("schema weights must not all be zero");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (dim < 1) throw ConfigError("latent dimension must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (lambda_grid.empty()) throw ConfigError("lambda grid must not be empty");
  for (double l : lambda_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda values must be >= 0");
  }
}

// ---------------------------------------------------------------------------
// Missing-set helpers

std::vector<UserItem> sample_missing(const FeedbackPartition& partition, std::size_t count,
                                     std::mt19937_64& rng) {
  std::vector<UserItem> out;
  if (count == 0) return out;
  if (partition.num_missing() == 0) throw ConfigError("missing set is empty");
  std::uniform_int_distribution<UserIndex> user(0, static_cast<UserIndex>(partition.num_users() - 1));
  std::uniform_int_distribution<ItemIndex> item(0, static_cast<ItemIndex>(partition.num_items() - 1));
  out.reserve(count);
  while (out.size() < count) {
    UserItem p{user(rng), item(rng)};
    if (!partition.is_observed(p)) out.push_back(p);
  }
  return out;
}

std::vector<UserItem> enumerate_missing(const FeedbackPartition& partition) {
  std::vector<UserItem> out;
  for (std::size_t u = 0; u < partition.num_users(); ++u) {
    for (std::size_t i = 0; i < partition.num_items(); ++i) {
      UserItem p{static_cast<UserIndex>(u), static_cast<ItemIndex>(i)};
      if (partition.is_missing(p)) out.push_back(p);
    }
  }
  return out;
}

std::vector<UserItem> missing_stand_in(const FeedbackPartition& partition, std::uint64_t seed) {
  if (partition.num_missing() == 0) return {};
  std::mt19937_64 rng(seed);
  return sample_missing(partition, partition.positives().size(), rng);
}

// ---------------------------------------------------------------------------
// Full objective

double objective(const FactorModel& model, const FeedbackPartition& partition,
                 const WeightSchema& schema, double lambda,
                 std::span<const UserItem> missing_sample) {
  auto sum_sq = [&](std::span<const UserItem> pairs, double target) {
    double s = 0.0;
    for (const auto& p : pairs) {
      const double r = predict(model, p.user, p.item) - target;
      s += r * r;
    }
    return s;
  };
  return schema.alpha * sum_sq(partition.positives(), 1.0) +
         schema.beta * sum_sq(partition.negatives(), 0.0) +
         schema.gamma * sum_sq(missing_sample, 0.0) +
         lambda * (model.user_factors.squaredNorm() + model.item_factors.squaredNorm());
}

DenseGradient objective_gradient(const FactorModel& model, const FeedbackPartition& partition,
                                 const WeightSchema& schema, double lambda,
                                 std::span<const UserItem> missing_sample) {
  DenseGradient g{2.0 * lambda * model.user_factors, 2.0 * lambda * model.item_factors};
  auto add = [&](std::span<const UserItem> pairs, double target, double weight) {
    for (const auto& p : pairs) {
      const double c = 2.0 * weight * (predict(model, p.user, p.item) - target);
      g.user.row(p.user) += c * model.item_factors.row(p.item);
      g.item.row(p.item) += c * model.user_factors.row(p.user);
    }
  };
  add(partition.positives(), 1.0, schema.alpha);
  add(partition.negatives(), 0.0, schema.beta);
  add(missing_sample, 0.0, schema.gamma);
  return g;
}

// ---------------------------------------------------------------------------
// Sampling

TrainingBatch sample_batch(const FeedbackPartition& partition, const WeightSchema& schema,
                           std::size_t batch_size, std::mt19937_64& rng) {
  schema.validate();
  if (schema.alpha > 0.0 && partition.positives().empty()) {
    throw ConfigError("alpha > 0 but the positive set is empty");
  }
  if (schema.beta > 0.0 && partition.negatives().empty()) {
    throw ConfigError("beta > 0 but the negative set is empty");
  }
  if (schema.gamma > 0.0 && partition.num_missing() == 0) {
    throw ConfigError("gamma > 0 but the missing set is empty");
  }

  const double total = schema.alpha + schema.beta + schema.gamma;
  std::uniform_real_distribution<double> pick(0.0, total);
  std::uniform_int_distribution<UserIndex> any_user(
      0, static_cast<UserIndex>(partition.num_users() - 1));
  std::uniform_int_distribution<ItemIndex> any_item(
      0, static_cast<ItemIndex>(partition.num_items() - 1));
  auto uniform_member = [&](const std::vector<UserItem>& set) {
    return set[std::uniform_int_distribution<std::size_t>(0, set.size() - 1)(rng)];
  };

  TrainingBatch batch;
  batch.triples.reserve(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const double r = pick(rng);
    TrainingTriple t;
    if (r < schema.alpha || (schema.beta == 0.0 && schema.gamma == 0.0)) {
      const auto p = uniform_member(partition.positives());
      t = {p.user, p.item, 1.0, schema.alpha, FeedbackSource::kPositive};
    } else if (r < schema.alpha + schema.beta || schema.gamma == 0.0) {
      const auto p = uniform_member(partition.negatives());
      t = {p.user, p.item, 0.0, schema.beta, FeedbackSource::kNegative};
    } else {
      UserItem p;
      do {
        p = {any_user(rng), any_item(rng)};
      } while (partition.is_observed(p));
      t = {p.user, p.item, 0.0, schema.gamma, FeedbackSource::kMissing};
    }
    batch.triples.push_back(t);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Batch loss, gradient and Adagrad

double batch_data_loss(const FactorModel& model, const TrainingBatch& batch) {
  if (batch.triples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : batch.triples) {
    const double r = predict(model, t.user, t.item) - t.target;
    s += t.weight * r * r;
  }
  return s / static_cast<double>(batch.triples.size());
}

double batch_objective(const FactorModel& model, const TrainingBatch& batch, double lambda) {
  double s = batch_data_loss(model, batch) * static_cast<double>(batch.triples.size());
  std::unordered_set<UserIndex> users;
  std::unordered_set<ItemIndex> items;
  for (const auto& t : batch.triples) {
    if (users.insert(t.user).second) s += lambda * model.user_factors.row(t.user).squaredNorm();
    if (items.insert(t.item).second) s += lambda * model.item_factors.row(t.item).squaredNorm();
  }
  return s;
}

SparseGradient batch_gradient(const FactorModel& model, const TrainingBatch& batch, double lambda) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  SparseGradient g;
  std::unordered_map<UserIndex, Eigen::Index> user_slot;
  std::unordered_map<ItemIndex, Eigen::Index> item_slot;
  for (const auto& t : batch.triples) {
    if (t.user >= model.num_users() || t.item >= model.num_items()) {
      throw IndexError(fmt::format("batch index ({}, {}) outside model", t.user, t.item));
    }
    if (user_slot.try_emplace(t.user, static_cast<Eigen::Index>(g.users.size())).second) {
      g.users.push_back(t.user);
    }
    if (item_slot.try_emplace(t.item, static_cast<Eigen::Index>(g.items.size())).second) {
      g.items.push_back(t.item);
    }
  }
  g.user_grad.resize(static_cast<Eigen::Index>(g.users.size()), d);
  g.item_grad.resize(static_cast<Eigen::Index>(g.items.size()), d);
  // Regularization enters once per touched row.
  for (std::size_t k = 0; k < g.users.size(); ++k) {
    g.user_grad.row(static_cast<Eigen::Index>(k)) = 2.0 * lambda * model.user_factors.row(g.users[k]);
  }
  for (std::size_t k = 0; k < g.items.size(); ++k) {
    g.item_grad.row(static_cast<Eigen::Index>(k)) = 2.0 * lambda * model.item_factors.row(g.items[k]);
  }
  for (const auto& t : batch.triples) {
    const auto x = model.user_factors.row(t.user);
    const auto y = model.item_factors.row(t.item);
    const double c = 2.0 * t.weight * (x.dot(y) - t.target);
    g.user_grad.row(user_slot[t.user]) += c * y;
    g.item_grad.row(item_slot[t.item]) += c * x;
  }
  return g;
}

AdagradState AdagradState::zeros_like(const FactorModel& model) {
  return {RowMatrix::Zero(model.user_factors.rows(), model.user_factors.cols()),
          RowMatrix::Zero(model.item_factors.rows(), model.item_factors.cols()), 0};
}

namespace {

void check_finite(const RowMatrix& grad, std::span<const std::uint32_t> rows, const char* which,
                  std::uint64_t iteration) {
  for (Eigen::Index r = 0; r < grad.rows(); ++r) {
    for (Eigen::Index c = 0; c < grad.cols(); ++c) {
      if (!std::isfinite(grad(r, c))) {
        throw TrainingError(fmt::format(
            "non-finite gradient at iteration {}: {} factor row {}, coordinate {} (value {})",
            iteration, which, rows[static_cast<std::size_t>(r)], c, grad(r, c)));
      }
    }
  }
}

void apply(RowMatrix& params, RowMatrix& accum, std::span<const std::uint32_t> rows,
           const RowMatrix& grad, double learning_rate) {
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto g = grad.row(static_cast<Eigen::Index>(k));
    auto acc = accum.row(rows[k]);
    acc += g.cwiseAbs2();
    params.row(rows[k]).array() -=
        learning_rate * g.array() / (acc.array() + kAdagradEpsilon).sqrt();
  }
}

}  // namespace

void adagrad_step(FactorModel& model, AdagradState& state, const TrainingBatch& batch,
                  double lambda, double learning_rate) {
  if (state.user_accum.rows() != model.user_factors.rows() ||
      state.user_accum.cols() != model.user_factors.cols() ||
      state.item_accum.rows() != model.item_factors.rows() ||
      state.item_accum.cols() != model.item_factors.cols()) {
    throw ValueError("Adagrad accumulators do not match the model shape");
  }
  ++state.iteration;
  const auto g = batch_gradient(model, batch, lambda);
  check_finite(g.user_grad, g.users, "user", state.iteration);
  check_finite(g.item_grad, g.items, "item", state.iteration);
  apply(model.user_factors, state.user_accum, g.users, g.user_grad, learning_rate);
  apply(model.item_factors, state.item_accum, g.items, g.item_grad, learning_rate);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

double rank_value(const std::optional<double>& p) {
  return p.value_or(-std::numeric_limits<double>::infinity());
}

void check_split(const SplitBundle& split) {
  if (split.train.empty()) throw ConfigError("training set is empty");
  if (split.validation.empty()) throw ConfigError("validation set is empty");
  if (split.num_users == 0 || split.num_items == 0) {
    throw ConfigError("split does not record the dataset dimensions");
  }
}

FactorModel run_lambda(const SplitBundle& split, const FeedbackPartition& partition,
                       const WeightSchema& schema, const TrainConfig& config, double lambda,
                       std::size_t grid_index, LambdaResult& result) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();

  FactorModel model = init_model(split.num_users, split.num_items, config.dim, config.seed);
  AdagradState state = AdagradState::zeros_like(model);
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(grid_index)};
  std::mt19937_64 rng(seq);

  const std::size_t batches_per_epoch =
      (split.train.size() + config.batch_size - 1) / config.batch_size;

  result = LambdaResult{};
  result.lambda = lambda;
  FactorModel best = model;
  double best_value = -std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const auto batch = sample_batch(partition, schema, config.batch_size, rng);
      loss_sum += batch_data_loss(model, batch);
      adagrad_step(model, state, batch, lambda, config.learning_rate);
    }
    const auto precision = median_consumer_precision(score_interactions(model, split.validation));
    result.log.push_back({lambda, epoch, loss_sum / static_cast<double>(batches_per_epoch),
                          precision,
                          std::chrono::duration<double>(Clock::now() - start).count()});
    if (rank_value(precision) > best_value) {
      best_value = rank_value(precision);
      best = model;
      result.best_epoch = epoch;
      result.best_validation_precision = precision;
      since_improvement = 0;
    } else if (++since_improvement >= config.patience) {
      break;
    }
  }
  return best;
}

}  // namespace

FactorModel train_at_lambda(const SplitBundle& split, const WeightSchema& schema,
                            const TrainConfig& config, double lambda, LambdaResult& result) {
  config.validate();
  schema.validate();
  check_split(split);
  const auto partition = partition_feedback(split.train, split.num_users, split.num_items);
  return run_lambda(split, partition, schema, config, lambda, 0, result);
}

TrainResult train(const SplitBundle& split, const WeightSchema& schema, const TrainConfig& config) {
  config.validate();
  schema.validate();
  check_split(split);
  const auto partition = partition_feedback(split.train, split.num_users, split.num_items);

  TrainResult out;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < config.lambda_grid.size(); ++g) {
    LambdaResult lr;
    auto model = run_lambda(split, partition, schema, config, config.lambda_grid[g], g, lr);
    const double value = rank_value(lr.best_validation_precision);
    if (g == 0 || value > best_value) {
      best_value = value;
      out.model = std::move(model);
      out.lambda = lr.lambda;
      out.validation_precision = lr.best_validation_precision;
    }
    out.per_lambda.push_back(std::move(lr));
  }
  return out;
}

}  // namespace pikirec
