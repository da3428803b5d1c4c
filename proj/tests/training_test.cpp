#include "tlsrec/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "support/corpus.hpp"
#include "tlsrec/evaluation.hpp"

using namespace tlsrec;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.h = 2;
  cfg.T = 3;
  cfg.m = 2;
  cfg.C = 4;
  cfg.block_count = 1;
  cfg.dropout_rate = 0.0;
  return cfg;
}

TrainingInstance tiny_instance(const ModelConfig& cfg, std::size_t user, std::uint64_t seed,
                               std::size_t item_count) {
  TrainingInstance inst;
  inst.user_id = user;
  Rng rng(seed);
  for (std::size_t i = 0; i < cfg.T; ++i) {
    Session s;
    for (std::size_t j = 0; j < cfg.m; ++j)
      s.item_ids.push_back(static_cast<std::size_t>(rng.next_below(item_count)));
    inst.input_sessions.push_back(std::move(s));
  }
  inst.target_items = {user};  // distinct, sorted, in range
  inst.delta_index = 1 + static_cast<std::size_t>(rng.next_below(cfg.C));
  return inst;
}

double total_squared_norm(const ParameterSet& params) {
  double total = 0.0;
  for (const auto& entry : params.registry())
    for (double v : entry.tensor->values) total += v * v;
  return total;
}

std::string serialize(const ParameterSet& params) {
  std::ostringstream os(std::ios::binary);
  save_checkpoint(os, params);
  return os.str();
}

TEST(Config, ValidationRejectsBadValues) {
  const TrainConfig good;
  ASSERT_NO_THROW(good.validate());

  auto expect_rejected = [](auto mutate) {
    TrainConfig cfg;
    mutate(cfg);
    EXPECT_THROW(cfg.validate(), ConfigError);
  };
  expect_rejected([](TrainConfig& c) { c.learning_rate = 0.0; });
  expect_rejected([](TrainConfig& c) { c.learning_rate = -0.1; });
  expect_rejected([](TrainConfig& c) { c.batch_size = 0; });
  expect_rejected([](TrainConfig& c) { c.lambda_reg = -1e-9; });
  expect_rejected([](TrainConfig& c) { c.adam_beta1 = 1.0; });
  expect_rejected([](TrainConfig& c) { c.adam_beta2 = -0.1; });
  expect_rejected([](TrainConfig& c) { c.adam_epsilon = 0.0; });
}

TEST(Loss, EqualRatingsGiveLogTwo) {
  const ModelConfig cfg = tiny_config();
  ParameterSet params = init_parameters(cfg, 2, 8, 1);
  Tape tape;
  auto pos = make_parameter(Tensor::scalar(0.7));
  auto neg = make_parameter(Tensor::scalar(0.7));
  auto loss = bpr_batch_loss(&tape, {pos}, {neg}, params, 0.0);
  EXPECT_NEAR(loss->values[0], std::log(2.0), 1e-12);
}

TEST(Loss, SaturatedGapVanishes) {
  const ModelConfig cfg = tiny_config();
  ParameterSet params = init_parameters(cfg, 2, 8, 1);
  Tape tape;
  auto pos = make_parameter(Tensor::scalar(40.0));
  auto neg = make_parameter(Tensor::scalar(0.0));
  auto loss = bpr_batch_loss(&tape, {pos}, {neg}, params, 0.0);
  EXPECT_GE(loss->values[0], 0.0);
  EXPECT_LT(loss->values[0], 1e-12);
}

TEST(Loss, RegularizationAddsLambdaTimesSquaredNorm) {
  const ModelConfig cfg = tiny_config();
  ParameterSet params = init_parameters(cfg, 2, 8, 1);
  const double lambda = 0.5;
  Tape tape;
  auto pos = make_parameter(Tensor::scalar(1.25));
  auto neg = make_parameter(Tensor::scalar(-0.5));
  auto plain = bpr_batch_loss(&tape, {pos}, {neg}, params, 0.0);
  auto regularized = bpr_batch_loss(&tape, {pos}, {neg}, params, lambda);
  EXPECT_NEAR(regularized->values[0] - plain->values[0], lambda * total_squared_norm(params),
              1e-9);
}

TEST(Loss, EmptyBatchRejected) {
  const ModelConfig cfg = tiny_config();
  ParameterSet params = init_parameters(cfg, 2, 8, 1);
  Tape tape;
  EXPECT_THROW(bpr_batch_loss(&tape, {}, {}, params, 0.0), ContractError);
  auto pos = make_parameter(Tensor::scalar(1.0));
  EXPECT_THROW(bpr_batch_loss(&tape, {pos}, {}, params, 0.0), ContractError);
}

// Whole-model gradient check: the taped backward pass against central finite
// differences of the same loss, over every learnable scalar.
TEST(Loss, GradientMatchesFiniteDifferences) {
  const ModelConfig cfg = tiny_config();
  const std::size_t users = 2, items = 8;
  const double lambda = 1e-3;

  std::vector<TrainingInstance> batch;
  batch.push_back(tiny_instance(cfg, 0, 101, items));
  batch.push_back(tiny_instance(cfg, 1, 202, items));
  const std::vector<std::size_t> negatives = {5, 6};

  ParameterSet params = init_parameters(cfg, users, items, 3);

  auto loss_value = [&]() {
    Tape tape;
    std::vector<TensorPtr> positive, negative;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto fwd = forward(&tape, params, batch[i], Mode::inference);
      positive.push_back(
          predict_rating(&tape, fwd.z_user, params.W_item, batch[i].target_items[0]));
      negative.push_back(predict_rating(&tape, fwd.z_user, params.W_item, negatives[i]));
    }
    return bpr_batch_loss(&tape, positive, negative, params, lambda)->values[0];
  };

  // Analytic gradients.
  {
    Tape tape;
    params.zero_grad();
    std::vector<TensorPtr> positive, negative;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto fwd = forward(&tape, params, batch[i], Mode::inference);
      positive.push_back(
          predict_rating(&tape, fwd.z_user, params.W_item, batch[i].target_items[0]));
      negative.push_back(predict_rating(&tape, fwd.z_user, params.W_item, negatives[i]));
    }
    auto loss = bpr_batch_loss(&tape, positive, negative, params, lambda);
    tape.backward(loss);
  }

  const double step = 1e-4;
  std::size_t checked = 0;
  for (const auto& entry : params.registry()) {
    Tensor& t = *entry.tensor;
    ASSERT_EQ(t.grad.size(), t.values.size()) << entry.name;
    for (std::size_t j = 0; j < t.values.size(); ++j) {
      const double saved = t.values[j];
      t.values[j] = saved + step;
      const double up = loss_value();
      t.values[j] = saved - step;
      const double down = loss_value();
      t.values[j] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = t.grad[j];
      const double tol = 1e-2 * std::max({1e-6, std::fabs(numeric), std::fabs(analytic)});
      EXPECT_NEAR(analytic, numeric, tol) << entry.name << "[" << j << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 100u);  // the whole registry was exercised
}

TEST(Adam, ZeroGradientIsANoOp) {
  const ModelConfig cfg = tiny_config();
  ParameterSet params = init_parameters(cfg, 2, 8, 1);
  OptimizerState state = make_optimizer_state(params);
  params.zero_grad();
  const std::string before = serialize(params);
  TrainConfig tc;
  adam_step(params, state, tc);
  EXPECT_EQ(before, serialize(params));
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, SingleStepMatchesClosedForm) {
  const ModelConfig cfg = tiny_config();
  ParameterSet params = init_parameters(cfg, 2, 8, 1);
  OptimizerState state = make_optimizer_state(params);
  params.zero_grad();
  Tensor& w = *params.registry().front().tensor;
  const double g = 0.5;
  const double before = w.values[0];
  const double untouched = w.values[1];
  w.grad[0] = g;
  TrainConfig tc;
  adam_step(params, state, tc);
  // Bias correction makes the first step lr * g / (|g| + eps).
  const double expected = before - tc.learning_rate * g / (std::fabs(g) + tc.adam_epsilon);
  EXPECT_NEAR(w.values[0], expected, 1e-15);
  EXPECT_EQ(w.values[1], untouched);  // zero-gradient coordinates stay put
}

TEST(Adam, MomentumCarriesAcrossSteps) {
  const ModelConfig cfg = tiny_config();
  ParameterSet params = init_parameters(cfg, 2, 8, 1);
  OptimizerState state = make_optimizer_state(params);
  TrainConfig tc;

  params.zero_grad();
  Tensor& w = *params.registry().front().tensor;
  w.grad[0] = 0.5;
  adam_step(params, state, tc);
  const double after_first = w.values[0];

  params.zero_grad();  // no gradient this time
  adam_step(params, state, tc);
  EXPECT_EQ(state.step, 2u);
  // The first moment still remembers the old gradient, so the value moves.
  EXPECT_NE(w.values[0], after_first);
}

TEST(Adam, MomentBuffersTrackRegistry) {
  const ModelConfig cfg = tiny_config();
  ParameterSet params = init_parameters(cfg, 2, 8, 1);
  ModelConfig bigger = cfg;
  bigger.block_count = 2;
  ParameterSet other = init_parameters(bigger, 2, 8, 1);
  OptimizerState mismatched = make_optimizer_state(other);
  params.zero_grad();
  TrainConfig tc;
  EXPECT_THROW(adam_step(params, mismatched, tc), ContractError);
}

TEST(Train, LossIsFiniteAndDeterministicGivenSeed) {
  const auto split = corpus::memorization_split(11);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.batch_size = 16;
  tc.epochs = 3;
  tc.lambda_reg = 1e-6;
  tc.seed = 7;
  const auto a = train(split, corpus::memorization_model(), tc);
  const auto b = train(split, corpus::memorization_model(), tc);
  ASSERT_EQ(a.log.size(), 3u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_TRUE(std::isfinite(a.log[i].train_loss));
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_hit20, b.log[i].val_hit20);
    EXPECT_EQ(a.log[i].val_map20, b.log[i].val_map20);
  }
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  EXPECT_EQ(a.best_checkpoint, b.best_checkpoint);
}

TEST(Train, DifferentSeedsDiverge) {
  const auto split = corpus::memorization_split(11);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.batch_size = 16;
  tc.epochs = 1;
  tc.seed = 1;
  const auto a = train(split, corpus::memorization_model(), tc);
  tc.seed = 2;
  const auto b = train(split, corpus::memorization_model(), tc);
  EXPECT_NE(a.log[0].train_loss, b.log[0].train_loss);
  EXPECT_NE(a.best_checkpoint, b.best_checkpoint);
}

TEST(Train, EmptyTrainSplitRejected) {
  auto split = corpus::memorization_split(11);
  split.train.clear();
  TrainConfig tc;
  tc.epochs = 1;
  EXPECT_THROW(train(split, corpus::memorization_model(), tc), ContractError);
}

TEST(Train, EpochsZeroEmitsInitializedCheckpoint) {
  const auto split = corpus::memorization_split(11);
  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 9;
  const auto result = train(split, corpus::memorization_model(), tc);
  EXPECT_EQ(result.epochs_run, 0u);
  EXPECT_EQ(result.best_epoch, 0u);
  EXPECT_TRUE(result.log.empty());
  const ParameterSet init = init_parameters(corpus::memorization_model(), split.user_count,
                                            split.item_count, tc.seed);
  EXPECT_EQ(result.best_checkpoint, serialize(init));
}

// The planted cycle is learnable: the best checkpoint ranks every validation
// user's next item first.
TEST(Train, MemorizationReachesPerfectHitAtOne) {
  const auto split = corpus::memorization_split(11);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.batch_size = 16;
  tc.epochs = 200;
  tc.lambda_reg = 1e-6;
  tc.seed = 7;
  const auto result = train(split, corpus::memorization_model(), tc);
  const auto report = evaluate(result.best_params, split.validation, {1});
  EXPECT_EQ(report.per_k.at(1).hit, 1.0);
}

TEST(Train, FirstFiveEpochLossesMostlyDecrease) {
  const auto split = corpus::memorization_split(11);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.batch_size = 16;
  tc.epochs = 5;
  tc.lambda_reg = 1e-6;
  tc.seed = 7;
  const auto result = train(split, corpus::memorization_model(), tc);
  ASSERT_EQ(result.log.size(), 5u);
  EXPECT_LT(result.log.back().train_loss, result.log.front().train_loss);
}

TEST(Train, HugeRegularizationShrinksParameterNorms) {
  const auto split = corpus::memorization_split(11);
  TrainConfig tc;
  tc.learning_rate = 0.001;
  tc.batch_size = 16;
  tc.epochs = 5;
  tc.lambda_reg = 1e3;
  tc.seed = 7;
  const auto result = train(split, corpus::memorization_model(), tc);
  ASSERT_EQ(result.log.size(), 5u);
  EXPECT_LT(result.log.back().param_norm, result.log.front().param_norm);
}

TEST(Train, DivergenceAbortsWithDiagnostic) {
  const auto split = corpus::memorization_split(11);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.batch_size = 16;
  tc.epochs = 3;
  tc.seed = 7;
  // A regularization weight this large overflows the penalty term, so the
  // very first batch loss is non-finite and training must abort loudly.
  tc.lambda_reg = 1e308;
  try {
    train(split, corpus::memorization_model(), tc);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("not finite"), std::string::npos);
  }
}

TEST(Train, EarlyStoppingHonorsPatience) {
  const auto split = corpus::memorization_split(11);
  TrainConfig tc;
  tc.learning_rate = 1e-12;  // metrics frozen after the first epoch
  tc.batch_size = 16;
  tc.epochs = 50;
  tc.seed = 7;
  tc.early_stop_patience = 3;
  const auto result = train(split, corpus::memorization_model(), tc);
  EXPECT_EQ(result.best_epoch, 1u);
  EXPECT_EQ(result.epochs_run, 4u);  // one improvement + three stale epochs
}

TEST(Train, ValidationlessTrainingKeepsFinalEpoch) {
  auto split = corpus::memorization_split(11);
  split.validation.clear();
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.batch_size = 16;
  tc.epochs = 3;
  tc.seed = 7;
  const auto result = train(split, corpus::memorization_model(), tc);
  EXPECT_EQ(result.best_epoch, 3u);
  EXPECT_EQ(result.epochs_run, 3u);
  EXPECT_EQ(result.best_hit, 0.0);
}

TEST(EpochRecordLine, FormatsKeyValuePairs) {
  EpochRecord record;
  record.epoch = 3;
  record.train_loss = 1.5;
  record.val_hit20 = 0.25;
  record.val_map20 = 0.125;
  record.wall_seconds = 2.0;
  EXPECT_EQ(epoch_record_line(record),
            "epoch=3 train_loss=1.5 val_hit20=0.25 val_map20=0.125 wall_seconds=2");
}

}  // namespace
