#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tlsrec/dataset.hpp"
#include "tlsrec/error.hpp"
#include "tlsrec/evaluation.hpp"
#include "tlsrec/model.hpp"
#include "tlsrec/rng.hpp"
#include "tlsrec/tensor.hpp"

namespace tlsrec {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::size_t epochs = 100;
  double lambda_reg = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 42;
  std::size_t early_stop_patience = 0;  // 0 disables early stopping

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (lambda_reg < 0.0) throw ConfigError("train: lambda_reg must be >= 0");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0)
      throw ConfigError("train: adam_beta1 must be in [0, 1)");
    if (adam_beta2 < 0.0 || adam_beta2 >= 1.0)
      throw ConfigError("train: adam_beta2 must be in [0, 1)");
    if (adam_epsilon <= 0.0) throw ConfigError("train: adam_epsilon must be > 0");
  }
};

/// First/second moment buffers, one pair per registry entry, plus the global
/// step counter. Built against a ParameterSet and only valid for it.
struct OptimizerState {
  struct Moments {
    std::vector<double> m, v;
  };
  std::vector<Moments> slots;
  std::uint64_t step = 0;
};

inline OptimizerState make_optimizer_state(const ParameterSet& params) {
  OptimizerState state;
  for (const auto& entry : params.registry()) {
    const std::size_t n = entry.tensor->size();
    state.slots.push_back({std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
  return state;
}

/// Taped sum of squares over every learnable tensor.
inline TensorPtr parameter_squared_norm(Tape* tape, const ParameterSet& params) {
  TensorPtr acc;
  for (const auto& entry : params.registry()) {
    auto sq = sum(tape, mul(tape, entry.tensor, entry.tensor));
    acc = acc ? add(tape, acc, sq) : sq;
  }
  return acc;
}

/// Pairwise ranking loss: -sum log sigmoid(r+ - r-) over the pairs, plus
/// lambda times the squared norm of all parameters. A sum, not a mean.
inline TensorPtr bpr_batch_loss(Tape* tape, const std::vector<TensorPtr>& positive,
                                const std::vector<TensorPtr>& negative,
                                const ParameterSet& params, double lambda) {
  if (positive.empty()) throw ContractError("bpr_batch_loss: empty batch");
  if (positive.size() != negative.size())
    throw ContractError("bpr_batch_loss: " + std::to_string(positive.size()) +
                        " positives vs " + std::to_string(negative.size()) + " negatives");
  TensorPtr acc;
  for (std::size_t i = 0; i < positive.size(); ++i) {
    auto diff = add(tape, positive[i], scale(tape, negative[i], -1.0));
    auto term = log(tape, sigmoid(tape, diff));
    acc = acc ? add(tape, acc, term) : term;
  }
  auto loss = scale(tape, acc, -1.0);
  if (lambda > 0.0)
    loss = add(tape, loss, scale(tape, parameter_squared_norm(tape, params), lambda));
  return loss;
}

/// One bias-corrected Adam update, reading each tensor's accumulated grad
/// and writing its values in place. The caller zeroes grads per batch.
inline void adam_step(ParameterSet& params, OptimizerState& state, const TrainConfig& config) {
  const auto registry = params.registry();
  if (state.slots.size() != registry.size())
    throw ContractError("adam_step: optimizer state has " + std::to_string(state.slots.size()) +
                        " slots for " + std::to_string(registry.size()) + " parameters");
  state.step += 1;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < registry.size(); ++i) {
    Tensor& t = *registry[i].tensor;
    if (t.grad.size() != t.values.size())
      throw ContractError("adam_step: parameter '" + registry[i].name + "' has no gradient");
    auto& m = state.slots[i].m;
    auto& v = state.slots[i].v;
    for (std::size_t j = 0; j < t.values.size(); ++j) {
      const double g = t.grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      t.values[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
    }
  }
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_hit20 = 0.0;
  double val_map20 = 0.0;
  double wall_seconds = 0.0;
  double param_norm = 0.0;  // total L2 over all parameters; not part of the log line
};

inline std::string epoch_record_line(const EpochRecord& r) {
  std::ostringstream os;
  os << "epoch=" << r.epoch << " train_loss=" << format_number(r.train_loss)
     << " val_hit20=" << format_number(r.val_hit20)
     << " val_map20=" << format_number(r.val_map20)
     << " wall_seconds=" << format_number(r.wall_seconds);
  return os.str();
}

struct TrainResult {
  std::vector<EpochRecord> log;
  std::string best_checkpoint;  // serialized checkpoint bytes, seed-stable
  ParameterSet best_params;
  std::size_t best_epoch = 0;  // 0 = the initialized parameters
  double best_hit = 0.0;
  double best_map = 0.0;
  std::size_t epochs_run = 0;
};

namespace detail {

inline std::string divergence_diagnostic(std::size_t epoch, std::size_t batch,
                                         const ParameterSet& params) {
  double total = 0.0;
  double worst = -1.0;
  std::string worst_name;
  for (const auto& entry : params.registry()) {
    double sq = 0.0;
    for (double v : entry.tensor->values) sq += v * v;
    total += sq;
    if (sq > worst || !std::isfinite(sq)) {
      worst = sq;
      worst_name = entry.name;
      if (!std::isfinite(sq)) break;
    }
  }
  std::ostringstream os;
  os << "loss is not finite at epoch " << epoch << " batch " << batch
     << "; parameter norms: total_l2=" << format_number(std::sqrt(total)) << ", largest "
     << worst_name << "=" << format_number(std::sqrt(worst));
  return os.str();
}

inline std::string serialize_checkpoint(const ParameterSet& params) {
  std::ostringstream os(std::ios::binary);
  save_checkpoint(os, params);
  return os.str();
}

}  // namespace detail

/// Full optimization loop. Per epoch: seeded shuffle, fresh uniform
/// negatives, one forward per instance in training mode (dropout live), one
/// BPR batch loss + backward + Adam step per batch, then Hit@20 / MAP@20 on
/// the validation split. Keeps the checkpoint of the best validation epoch
/// (hit first, positional-precision sum as tie-break) and stops early after
/// `early_stop_patience` epochs without improvement. With no validation
/// instances every epoch counts as an improvement, so the final parameters
/// win. All randomness derives from the seed; rerunning is byte-identical.
inline TrainResult train(const DatasetSplit& split, const ModelConfig& model_config,
                         const TrainConfig& train_config) {
  model_config.validate();
  train_config.validate();
  if (split.train.empty()) throw ContractError("train: empty training split");

  ParameterSet params =
      init_parameters(model_config, split.user_count, split.item_count, train_config.seed);
  OptimizerState state = make_optimizer_state(params);

  TrainResult result;
  result.best_checkpoint = detail::serialize_checkpoint(params);

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool has_validation = !split.validation.empty();
  double best_hit = -1.0, best_map = -1.0;
  std::size_t stale_epochs = 0;

  for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    Rng rng(Rng::mix(train_config.seed, epoch));
    rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
      const std::size_t batch_index = start / train_config.batch_size;
      const std::size_t stop = std::min(start + train_config.batch_size, order.size());
      Tape tape;
      params.zero_grad();
      std::vector<TensorPtr> positive, negative;
      for (std::size_t i = start; i < stop; ++i) {
        const TrainingInstance& instance = split.train[order[i]];
        auto fwd = forward(&tape, params, instance, Mode::training, &rng);
        auto negatives = sample_negatives(instance.target_items, params.item_count, rng);
        for (std::size_t j = 0; j < instance.target_items.size(); ++j) {
          positive.push_back(
              predict_rating(&tape, fwd.z_user, params.W_item, instance.target_items[j]));
          negative.push_back(predict_rating(&tape, fwd.z_user, params.W_item, negatives[j]));
        }
      }
      auto loss = bpr_batch_loss(&tape, positive, negative, params, train_config.lambda_reg);
      const double loss_value = loss->values[0];
      if (!std::isfinite(loss_value))
        throw DivergenceError(detail::divergence_diagnostic(epoch, batch_index, params));
      tape.backward(loss);
      adam_step(params, state, train_config);
      epoch_loss += loss_value;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss;
    {
      double total = 0.0;
      for (const auto& entry : params.registry())
        for (double v : entry.tensor->values) total += v * v;
      record.param_norm = std::sqrt(total);
    }
    if (has_validation) {
      auto report = evaluate(params, split.validation, {20});
      record.val_hit20 = report.per_k.at(20).hit;
      record.val_map20 = report.per_k.at(20).map;
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(record);
    result.epochs_run = epoch;

    const bool improved =
        !has_validation || record.val_hit20 > best_hit ||
        (record.val_hit20 == best_hit && record.val_map20 > best_map);
    if (improved) {
      best_hit = record.val_hit20;
      best_map = record.val_map20;
      result.best_epoch = epoch;
      result.best_checkpoint = detail::serialize_checkpoint(params);
      stale_epochs = 0;
    } else if (++stale_epochs; train_config.early_stop_patience > 0 &&
                               stale_epochs >= train_config.early_stop_patience) {
      break;
    }
  }

  result.best_hit = best_hit < 0.0 ? 0.0 : best_hit;
  result.best_map = best_map < 0.0 ? 0.0 : best_map;
  std::istringstream stored(result.best_checkpoint);
  result.best_params = load_checkpoint(stored);
  return result;
}

}  // namespace tlsrec
