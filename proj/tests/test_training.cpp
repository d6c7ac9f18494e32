#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pikirec/evaluation.hpp"
#include "pikirec/training.hpp"

using namespace pikirec;

namespace {

FeedbackPartition partition_of(const oracle::SmallInstance& s) {
  return partition_feedback(s.observed, s.labels.size(), s.labels[0].size());
}

}  // namespace

TEST_CASE("schema and config validation") {
  CHECK_NOTHROW(WeightSchema::likes().validate());
  CHECK_NOTHROW(WeightSchema::likes_and_dislikes().validate());
  CHECK(WeightSchema::likes().beta == 0.0);
  CHECK(WeightSchema::likes().gamma == 0.5);
  CHECK(WeightSchema::likes_and_dislikes().gamma == 0.0);
  CHECK_THROWS_AS((WeightSchema{0, 0, 0}.validate()), ConfigError);
  CHECK_THROWS_AS((WeightSchema{-1, 1, 0}.validate()), ConfigError);

  TrainConfig c;
  CHECK(c.learning_rate == 0.01);
  CHECK(c.batch_size == 512);
  CHECK(c.dim == 20);
  CHECK(c.lambda_grid == std::vector<double>{0.1, 0.01, 0.001, 0.0001});
  CHECK_NOTHROW(c.validate());
  c.lambda_grid.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("objective closed forms") {
  std::vector<Interaction> obs = {{0, 0, 1}, {0, 1, 0}, {1, 1, 1}, {1, 2, 0}, {2, 0, 1}};
  auto p = partition_feedback(obs, 3, 3);
  FactorModel zero{RowMatrix::Zero(3, 4), RowMatrix::Zero(3, 4)};
  CHECK(objective(zero, p, WeightSchema::likes_and_dislikes(), 0.0, {}) ==
        doctest::Approx(0.5 * 3));

  auto m = init_model(3, 3, 4, 2);
  const double norms = m.user_factors.squaredNorm() + m.item_factors.squaredNorm();
  const auto missing = enumerate_missing(p);
  CHECK(objective(m, p, {0, 0, 0}, 1.0, missing) == doctest::Approx(norms).epsilon(1e-14));
}

TEST_CASE("objective matches brute-force enumeration on 2 x 2") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = oracle::small_instance(2, 2, 3, seed);
    auto p = partition_of(s);
    const WeightSchema w{0.7, 0.3, 0.2};
    const double got = objective(s.model, p, w, 0.05, enumerate_missing(p));
    const double want = oracle::brute_force_objective(s.model, s.labels, w, 0.05);
    CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("objective properties") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    auto s = oracle::small_instance(4, 5, 3, rng());
    auto p = partition_of(s);
    const auto missing = enumerate_missing(p);
    std::uniform_real_distribution<double> weight(0.0, 2.0);
    const WeightSchema w{weight(rng), weight(rng), weight(rng)};
    CHECK(objective(s.model, p, w, weight(rng), missing) >= 0.0);

    // beta = 0: the negatives do not matter.
    std::vector<Interaction> without_negatives;
    for (const auto& x : s.observed) {
      if (x.label == 1) without_negatives.push_back(x);
    }
    auto p2 = partition_feedback(without_negatives, 4, 5);
    const WeightSchema no_beta{w.alpha, 0.0, w.gamma};
    CHECK(objective(s.model, p, no_beta, 0.1, missing) ==
          doctest::Approx(objective(s.model, p2, no_beta, 0.1, missing)).epsilon(1e-14));

    // gamma = 0: the missing sample does not matter.
    const WeightSchema no_gamma{w.alpha, w.beta, 0.0};
    CHECK(objective(s.model, p, no_gamma, 0.1, missing) ==
          doctest::Approx(objective(s.model, p, no_gamma, 0.1, {})).epsilon(1e-14));
  }
}

TEST_CASE("objective gradient matches central finite differences") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto s = oracle::small_instance(3, 3, 3, seed);
    auto p = partition_of(s);
    const auto missing = enumerate_missing(p);
    const WeightSchema w{0.5, 0.4, 0.3};
    const double lambda = 0.01;
    auto g = objective_gradient(s.model, p, w, lambda, missing);
    auto fd = oracle::finite_difference_gradient(
        s.model,
        [&](const FactorModel& m) { return oracle::brute_force_objective(m, s.labels, w, lambda); },
        1e-5);
    std::vector<double> analytic(g.user.data(), g.user.data() + g.user.size());
    analytic.insert(analytic.end(), g.item.data(), g.item.data() + g.item.size());
    REQUIRE(analytic.size() == fd.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < fd.size(); ++k) {
      worst = std::max(worst, oracle::relative_error(analytic[k], fd[k]));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("batch gradient matches finite differences of the batch objective") {
  auto s = oracle::small_instance(4, 4, 3, 21);
  auto p = partition_of(s);
  std::mt19937_64 rng(1);
  auto batch = sample_batch(p, {0.4, 0.4, 0.2}, 32, rng);
  const double lambda = 0.05;
  auto g = batch_gradient(s.model, batch, lambda);

  // Scatter the sparse gradient into dense layout; untouched rows stay zero.
  RowMatrix gu = RowMatrix::Zero(4, 3), gi = RowMatrix::Zero(4, 3);
  for (std::size_t k = 0; k < g.users.size(); ++k) gu.row(g.users[k]) = g.user_grad.row(static_cast<Eigen::Index>(k));
  for (std::size_t k = 0; k < g.items.size(); ++k) gi.row(g.items[k]) = g.item_grad.row(static_cast<Eigen::Index>(k));
  std::vector<double> analytic(gu.data(), gu.data() + gu.size());
  analytic.insert(analytic.end(), gi.data(), gi.data() + gi.size());

  auto fd = oracle::finite_difference_gradient(
      s.model, [&](const FactorModel& m) { return batch_objective(m, batch, lambda); }, 1e-5);
  for (std::size_t k = 0; k < fd.size(); ++k) CHECK(oracle::relative_error(analytic[k], fd[k]) < 1e-4);
}

TEST_CASE("sample_batch mixture and targets") {
  auto data = synth_generate({40, 40, 2, 0.3, 0.0, 3}).dataset;
  auto p = partition_feedback(data.interactions(), data.num_users(), data.num_items());
  std::mt19937_64 rng(7);

  SUBCASE("likes and dislikes: half positives") {
    auto batch = sample_batch(p, WeightSchema::likes_and_dislikes(), 100000, rng);
    std::size_t pos = 0;
    for (const auto& t : batch.triples) {
      pos += t.source == FeedbackSource::kPositive;
      CHECK(t.weight == 0.5);
      CHECK(t.target == (t.source == FeedbackSource::kPositive ? 1.0 : 0.0));
      CHECK(t.source != FeedbackSource::kMissing);
    }
    CHECK(std::abs(static_cast<double>(pos) / 100000.0 - 0.5) <= 0.01);
  }
  SUBCASE("positives only") {
    auto batch = sample_batch(p, {1, 0, 0}, 2000, rng);
    for (const auto& t : batch.triples) {
      CHECK(t.source == FeedbackSource::kPositive);
      CHECK(t.target == 1.0);
      CHECK(p.is_observed({t.user, t.item}));
    }
  }
  SUBCASE("likes: missing draws are never observed pairs") {
    auto batch = sample_batch(p, WeightSchema::likes(), 20000, rng);
    std::size_t missing = 0;
    for (const auto& t : batch.triples) {
      CHECK(t.source != FeedbackSource::kNegative);
      if (t.source == FeedbackSource::kMissing) {
        ++missing;
        CHECK(t.target == 0.0);
        CHECK(p.is_missing({t.user, t.item}));
      }
    }
    CHECK(std::abs(static_cast<double>(missing) / 20000.0 - 0.5) <= 0.02);
  }
}

TEST_CASE("sample_batch rejects weight on an empty set") {
  // One user who rated every song: no missing pairs.
  std::vector<Interaction> full = {{0, 0, 1}, {0, 1, 0}, {0, 2, 1}};
  auto p = partition_feedback(full, 1, 3);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(sample_batch(p, WeightSchema::likes(), 8, rng), ConfigError);
  CHECK_NOTHROW(sample_batch(p, WeightSchema::likes_and_dislikes(), 8, rng));

  std::vector<Interaction> only_likes = {{0, 0, 1}};
  auto q = partition_feedback(only_likes, 1, 3);
  CHECK_THROWS_AS(sample_batch(q, WeightSchema::likes_and_dislikes(), 8, rng), ConfigError);
  CHECK_THROWS_AS(sample_missing(p, 1, rng), ConfigError);
}

TEST_CASE("adagrad zero-gradient fixed point") {
  FactorModel zero{RowMatrix::Zero(2, 3), RowMatrix::Zero(2, 3)};
  auto state = AdagradState::zeros_like(zero);
  TrainingBatch batch{{{0, 1, 1.0, 0.5, FeedbackSource::kPositive}}};
  adagrad_step(zero, state, batch, 0.1, 0.01);
  CHECK(zero.user_factors.isZero(0.0));
  CHECK(zero.item_factors.isZero(0.0));
  CHECK(state.iteration == 1);
}

TEST_CASE("adagrad effective step is non-increasing") {
  auto s = oracle::small_instance(5, 5, 3, 8);
  auto p = partition_of(s);
  auto model = s.model;
  auto state = AdagradState::zeros_like(model);
  std::mt19937_64 rng(2);
  RowMatrix prev = RowMatrix::Constant(5, 3, std::numeric_limits<double>::infinity());
  for (int it = 0; it < 50; ++it) {
    adagrad_step(model, state, sample_batch(p, {0.5, 0.5, 0.2}, 8, rng), 0.01, 0.1);
    RowMatrix step = (0.1 / (state.user_accum.array() + kAdagradEpsilon).sqrt()).matrix();
    CHECK((step.array() <= prev.array()).all());
    prev = step;
    CHECK(model.all_finite());
  }
}

TEST_CASE("adagrad single step matches the closed-form update") {
  auto s = oracle::small_instance(2, 2, 2, 4);
  TrainingBatch batch{{{0, 1, 1.0, 0.5, FeedbackSource::kPositive},
                       {0, 0, 0.0, 0.5, FeedbackSource::kNegative}}};
  const double lambda = 0.1, lr = 0.01;
  auto expected = s.model;
  const auto x = s.model.user_factors.row(0).eval();
  const auto y0 = s.model.item_factors.row(0).eval();
  const auto y1 = s.model.item_factors.row(1).eval();
  const double r1 = oracle::naive_dot(s.model, 0, 1) - 1.0;
  const double r0 = oracle::naive_dot(s.model, 0, 0);
  const auto gx = (2 * 0.5 * r1 * y1 + 2 * 0.5 * r0 * y0 + 2 * lambda * x).eval();
  const auto gy1 = (2 * 0.5 * r1 * x + 2 * lambda * y1).eval();
  expected.user_factors.row(0).array() -= lr * gx.array() / (gx.array().square() + kAdagradEpsilon).sqrt();
  expected.item_factors.row(1).array() -= lr * gy1.array() / (gy1.array().square() + kAdagradEpsilon).sqrt();
  const auto gy0 = (2 * 0.5 * r0 * x + 2 * lambda * y0).eval();
  expected.item_factors.row(0).array() -= lr * gy0.array() / (gy0.array().square() + kAdagradEpsilon).sqrt();

  auto model = s.model;
  auto state = AdagradState::zeros_like(model);
  adagrad_step(model, state, batch, lambda, lr);
  CHECK((model.user_factors - expected.user_factors).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((model.item_factors - expected.item_factors).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(model.user_factors.row(1) == s.model.user_factors.row(1));
}

TEST_CASE("adagrad aborts on a non-finite gradient") {
  FactorModel m{RowMatrix::Constant(1, 2, 1e200), RowMatrix::Constant(1, 2, 1e200)};
  auto state = AdagradState::zeros_like(m);
  TrainingBatch batch{{{0, 0, 1.0, 1.0, FeedbackSource::kPositive}}};
  try {
    adagrad_step(m, state, batch, 0.0, 0.01);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    CHECK(what.find("iteration 1") != std::string::npos);
    CHECK(what.find("coordinate") != std::string::npos);
  }
}

TEST_CASE("train recovers planted structure") {
  auto data = synth_generate({50, 50, 2, 0.5, 0.0, 0}).dataset;
  auto split = stratified_split(data, 0.8, 0);
  auto config = oracle::small_data_config();
  config.max_epochs = 50;
  auto result = train(split, WeightSchema::likes_and_dislikes(), config);
  REQUIRE(result.validation_precision.has_value());
  CHECK(*result.validation_precision >= 0.9);
  CHECK(result.model.all_finite());
  CHECK(result.per_lambda.size() == 4);
  for (const auto& lr : result.per_lambda) CHECK(lr.log.size() <= 50);
}

TEST_CASE("training loss decreases") {
  auto data = synth_generate({50, 50, 2, 0.5, 0.0, 0}).dataset;
  auto split = stratified_split(data, 0.8, 0);
  TrainConfig config;
  config.lambda_grid = {0.001};
  config.max_epochs = 20;
  config.patience = 100;
  LambdaResult lr;
  train_at_lambda(split, WeightSchema::likes_and_dislikes(), config, 0.001, lr);
  REQUIRE(lr.log.size() == 20);
  CHECK(lr.log[19].mean_batch_loss < lr.log[0].mean_batch_loss);
}

TEST_CASE("early stopping with a collapsing lambda") {
  auto data = synth_generate({30, 30, 2, 0.5, 0.0, 4}).dataset;
  auto split = stratified_split(data, 0.8, 1);
  TrainConfig config;
  config.patience = 1;
  config.learning_rate = 0.5;
  LambdaResult lr;
  train_at_lambda(split, WeightSchema::likes_and_dislikes(), config, 1000.0, lr);
  REQUIRE_FALSE(lr.log.empty());
  CHECK(lr.log.size() <= lr.best_epoch + config.patience);
  CHECK(lr.log.size() < config.max_epochs);
}

TEST_CASE("training is deterministic") {
  auto data = synth_generate({30, 30, 2, 0.5, 0.1, 6}).dataset;
  auto split = stratified_split(data, 0.8, 2);
  TrainConfig config;
  config.max_epochs = 15;
  config.seed = 42;
  auto a = train(split, WeightSchema::likes(), config);
  auto b = train(split, WeightSchema::likes(), config);
  CHECK(a.lambda == b.lambda);
  CHECK(a.model == b.model);
  REQUIRE(a.per_lambda.size() == b.per_lambda.size());
  for (std::size_t g = 0; g < a.per_lambda.size(); ++g) {
    REQUIRE(a.per_lambda[g].log.size() == b.per_lambda[g].log.size());
    for (std::size_t e = 0; e < a.per_lambda[g].log.size(); ++e) {
      CHECK(a.per_lambda[g].log[e].mean_batch_loss == b.per_lambda[g].log[e].mean_batch_loss);
      CHECK(a.per_lambda[g].log[e].validation_precision == b.per_lambda[g].log[e].validation_precision);
    }
  }
}

TEST_CASE("train needs validation data") {
  auto data = synth_generate({10, 10, 2, 0.5, 0.0, 1}).dataset;
  auto split = stratified_split(data, 0.8, 1);
  split.validation.clear();
  CHECK_THROWS_AS(train(split, WeightSchema::likes(), TrainConfig{}), ConfigError);
}
