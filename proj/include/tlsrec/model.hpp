#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tlsrec/dataset.hpp"
#include "tlsrec/error.hpp"
#include "tlsrec/rng.hpp"
#include "tlsrec/serialize.hpp"
#include "tlsrec/tensor.hpp"

namespace tlsrec {

/// Which architecture to build. The reduced forms exist to measure what each
/// component contributes: the first three remove a stage, the gate_* forms
/// replace the time-aware fusion gate with a simpler combiner.
enum class Variant : std::uint8_t {
  full = 0,
  no_short_attention = 1,   // session embedding = mean of raw item embeddings
  no_long_attention = 2,    // pool raw session embeddings, no position/blocks
  single_head = 3,          // session-level attention runs with one head
  gate_average = 4,         // fusion = plain average of short and long
  gate_self_attention = 5,  // fusion = one-head mutual attention, then sum
  gate_multihead = 6,       // fusion = multi-head mutual attention, then sum
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_short_attention: return "-S";
    case Variant::no_long_attention: return "-L";
    case Variant::single_head: return "-M";
    case Variant::gate_average: return "G+A";
    case Variant::gate_self_attention: return "G+S";
    case Variant::gate_multihead: return "G+M";
  }
  return "?";
}

inline Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "-S" || name == "no_short_attention") return Variant::no_short_attention;
  if (name == "-L" || name == "no_long_attention") return Variant::no_long_attention;
  if (name == "-M" || name == "single_head") return Variant::single_head;
  if (name == "G+A" || name == "gate_average") return Variant::gate_average;
  if (name == "G+S" || name == "gate_self_attention") return Variant::gate_self_attention;
  if (name == "G+M" || name == "gate_multihead") return Variant::gate_multihead;
  throw ConfigError("unknown variant '" + name + "'");
}

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {
      Variant::full,          Variant::no_short_attention, Variant::no_long_attention,
      Variant::single_head,   Variant::gate_average,       Variant::gate_self_attention,
      Variant::gate_multihead};
  return v;
}

struct ModelConfig {
  std::size_t d = 64;            // embedding width
  std::size_t h = 8;             // attention heads
  std::size_t T = 0;             // input sessions per instance
  std::size_t m = 0;             // items per padded session
  std::size_t C = 128;           // time-lag buckets
  std::size_t block_count = 1;   // stacked session-attention blocks
  double dropout_rate = 0.5;
  double norm_epsilon = 1e-5;
  Variant variant = Variant::full;

  void validate() const {
    if (d == 0) throw ConfigError("model: d must be >= 1");
    if (h == 0) throw ConfigError("model: h must be >= 1");
    if (d % h != 0)
      throw ConfigError("model: d=" + std::to_string(d) + " not divisible by h=" +
                        std::to_string(h));
    if (T == 0) throw ConfigError("model: T must be >= 1");
    if (m == 0) throw ConfigError("model: m must be >= 1");
    if (C == 0) throw ConfigError("model: C must be >= 1");
    if (block_count == 0) throw ConfigError("model: block_count must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("model: dropout_rate must be in [0, 1)");
    if (norm_epsilon <= 0.0) throw ConfigError("model: norm_epsilon must be > 0");
  }

  // Which stages the variant keeps.
  bool has_short_attention() const { return variant != Variant::no_short_attention; }
  bool has_session_blocks() const { return variant != Variant::no_long_attention; }
  bool has_time_gate() const {
    return variant != Variant::gate_average && variant != Variant::gate_self_attention &&
           variant != Variant::gate_multihead;
  }
  bool has_gate_attention() const {
    return variant == Variant::gate_self_attention || variant == Variant::gate_multihead;
  }
  std::size_t block_heads() const { return variant == Variant::single_head ? 1 : h; }
  std::size_t gate_heads() const { return variant == Variant::gate_multihead ? h : 1; }
};

/// Every learnable tensor of one model, plus the shape facts that define it.
/// `registry()` enumerates the tensors in a fixed, documented order; the
/// checkpoint format and the optimizer state both index by that order.
struct ParameterSet {
  ModelConfig config;
  std::size_t user_count = 0;
  std::size_t item_count = 0;

  TensorPtr W_item;  // d x M
  TensorPtr W_user;  // d x N
  TensorPtr P;       // d x T

  TensorPtr Wq_short, Wk_short, Wv_short;  // d x d

  struct Block {
    std::vector<TensorPtr> Wq, Wk, Wv;  // per head, (d/heads) x d
    TensorPtr Wo;                        // d x d
    TensorPtr norm_alpha, norm_beta;     // d
    TensorPtr ffn_W1, ffn_b1;            // 4d x d, 4d
    TensorPtr ffn_W2, ffn_b2;            // d x 4d, d
  };
  std::vector<Block> blocks;

  TensorPtr W_long, b_long;  // d x d, d
  TensorPtr Y;               // d x C

  TensorPtr Wg_long, Wg_short, Wg_time;  // d x d
  TensorPtr b_gate;                       // d

  struct GateAttention {
    std::vector<TensorPtr> Wq, Wk, Wv;  // per head, (d/heads) x d
    TensorPtr Wo;                        // d x d (multi-head form only)
  };
  GateAttention gate_attention;

  struct NamedParameter {
    std::string name;
    TensorPtr tensor;
  };

  std::vector<NamedParameter> registry() const {
    std::vector<NamedParameter> out;
    auto put = [&out](std::string name, const TensorPtr& t) {
      out.push_back({std::move(name), t});
    };
    put("W_item", W_item);
    put("W_user", W_user);
    if (config.has_session_blocks()) put("P", P);
    if (config.has_short_attention()) {
      put("Wq_short", Wq_short);
      put("Wk_short", Wk_short);
      put("Wv_short", Wv_short);
    }
    if (config.has_session_blocks()) {
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::string base = "block" + std::to_string(b) + ".";
        for (std::size_t j = 0; j < blocks[b].Wq.size(); ++j) {
          const std::string head = base + "head" + std::to_string(j) + ".";
          put(head + "Wq", blocks[b].Wq[j]);
          put(head + "Wk", blocks[b].Wk[j]);
          put(head + "Wv", blocks[b].Wv[j]);
        }
        put(base + "Wo", blocks[b].Wo);
        put(base + "norm_alpha", blocks[b].norm_alpha);
        put(base + "norm_beta", blocks[b].norm_beta);
        put(base + "ffn_W1", blocks[b].ffn_W1);
        put(base + "ffn_b1", blocks[b].ffn_b1);
        put(base + "ffn_W2", blocks[b].ffn_W2);
        put(base + "ffn_b2", blocks[b].ffn_b2);
      }
    }
    put("W_long", W_long);
    put("b_long", b_long);
    if (config.has_time_gate()) {
      put("Y", Y);
      put("Wg_long", Wg_long);
      put("Wg_short", Wg_short);
      put("Wg_time", Wg_time);
      put("b_gate", b_gate);
    }
    if (config.has_gate_attention()) {
      for (std::size_t j = 0; j < gate_attention.Wq.size(); ++j) {
        const std::string head = "gate_attn.head" + std::to_string(j) + ".";
        put(head + "Wq", gate_attention.Wq[j]);
        put(head + "Wk", gate_attention.Wk[j]);
        put(head + "Wv", gate_attention.Wv[j]);
      }
      if (config.variant == Variant::gate_multihead) put("gate_attn.Wo", gate_attention.Wo);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& entry : registry()) n += entry.tensor->size();
    return n;
  }

  void zero_grad() const {
    for (const auto& entry : registry()) entry.tensor->zero_grad();
  }

  bool all_finite() const {
    for (const auto& entry : registry())
      if (!entry.tensor->all_finite()) return false;
    return true;
  }
};

/// Builds the parameter tensors for a config: matrices uniform in
/// (-1/sqrt(d), 1/sqrt(d)), biases zero, norm scales one. Draws happen in
/// registry order from a single stream, so a seed pins every value.
inline ParameterSet init_parameters(const ModelConfig& config, std::size_t user_count,
                                    std::size_t item_count, std::uint64_t seed) {
  config.validate();
  if (user_count == 0 || item_count == 0)
    throw ConfigError("model: need at least one user and one item");

  ParameterSet params;
  params.config = config;
  params.user_count = user_count;
  params.item_count = item_count;

  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.d));
  auto uniform = [&rng, bound](std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (double& v : t.values) v = rng.next_uniform(-bound, bound);
    return make_parameter(std::move(t));
  };
  auto zeros = [](std::vector<std::size_t> shape) {
    return make_parameter(Tensor(std::move(shape)));
  };
  auto ones = [](std::vector<std::size_t> shape) {
    return make_parameter(Tensor::full(std::move(shape), 1.0));
  };

  const std::size_t d = config.d;
  params.W_item = uniform({d, item_count});
  params.W_user = uniform({d, user_count});
  if (config.has_session_blocks()) params.P = uniform({d, config.T});
  if (config.has_short_attention()) {
    params.Wq_short = uniform({d, d});
    params.Wk_short = uniform({d, d});
    params.Wv_short = uniform({d, d});
  }
  if (config.has_session_blocks()) {
    const std::size_t heads = config.block_heads();
    const std::size_t dk = d / heads;
    params.blocks.resize(config.block_count);
    for (auto& block : params.blocks) {
      for (std::size_t j = 0; j < heads; ++j) {
        block.Wq.push_back(uniform({dk, d}));
        block.Wk.push_back(uniform({dk, d}));
        block.Wv.push_back(uniform({dk, d}));
      }
      block.Wo = uniform({d, d});
      block.norm_alpha = ones({d});
      block.norm_beta = zeros({d});
      block.ffn_W1 = uniform({4 * d, d});
      block.ffn_b1 = zeros({4 * d});
      block.ffn_W2 = uniform({d, 4 * d});
      block.ffn_b2 = zeros({d});
    }
  }
  params.W_long = uniform({d, d});
  params.b_long = zeros({d});
  if (config.has_time_gate()) {
    params.Y = uniform({d, config.C});
    params.Wg_long = uniform({d, d});
    params.Wg_short = uniform({d, d});
    params.Wg_time = uniform({d, d});
    params.b_gate = zeros({d});
  }
  if (config.has_gate_attention()) {
    const std::size_t heads = config.gate_heads();
    const std::size_t dk = d / heads;
    for (std::size_t j = 0; j < heads; ++j) {
      params.gate_attention.Wq.push_back(uniform({dk, d}));
      params.gate_attention.Wk.push_back(uniform({dk, d}));
      params.gate_attention.Wv.push_back(uniform({dk, d}));
    }
    if (config.variant == Variant::gate_multihead) params.gate_attention.Wo = uniform({d, d});
  }
  return params;
}

enum class Mode { inference, training };

/// Plain-value snapshot of the intermediate quantities of one forward pass,
/// for inspection exports and tests. For variants without a fusion gate the
/// `gate` field holds the effective per-dimension short-term weight (0.5).
struct ForwardTrace {
  std::size_t d = 0;
  std::size_t T = 0;
  std::vector<double> session_embeddings;  // d x T, column i = s_i
  std::vector<double> short_embedding;     // d, z_short = s_T
  std::vector<double> attentional;         // d x T, column i = z_i
  std::vector<double> long_weights;        // T, pooling weights
  std::vector<double> long_embedding;      // d
  std::vector<double> gate;                // d
  std::vector<double> fused;               // d, z_u
  std::vector<std::vector<double>> block_attention;    // per block: T x T, head-averaged
  std::vector<std::vector<double>> block_preresidual;  // per block: d x T, before residual
};

/// Taped handles for the loss path plus the value trace.
struct ForwardResult {
  TensorPtr z_user;   // fused preference embedding, d
  TensorPtr z_short;  // d
  TensorPtr z_long;   // d
  ForwardTrace trace;
};

// --------------------------------------------------------------------------
// Stage functions. Each one is the executable form of one pipeline stage;
// forward() composes them. All take the tape first, like the primitives.
// --------------------------------------------------------------------------

/// Column lookup of item embeddings for one padded session.
inline TensorPtr embed_session_items(Tape* tape, const TensorPtr& W_item,
                                     const std::vector<std::size_t>& item_ids) {
  return gather_columns(tape, W_item, item_ids);
}

/// Item-level self-attention collapsed to one session embedding: each item
/// attends over all items of the session, and the attentional item
/// embeddings are summed.
inline TensorPtr short_term_session_embedding(Tape* tape, const TensorPtr& E,
                                              const TensorPtr& Wq, const TensorPtr& Wk,
                                              const TensorPtr& Wv) {
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(E->shape[0]));
  auto q = matmul(tape, Wq, E);
  auto k = matmul(tape, Wk, E);
  auto v = matmul(tape, Wv, E);
  auto scores = scale(tape, matmul(tape, transpose(tape, q), k), scale_factor);
  auto weights = softmax_over_keys(tape, scores);           // row j: item j over items l
  auto attended = matmul(tape, v, transpose(tape, weights));  // column j = sum_l w_jl v_l
  return sum_columns(tape, attended);
}

/// S + P, columnwise.
inline TensorPtr inject_positions(Tape* tape, const TensorPtr& S, const TensorPtr& P) {
  return add(tape, S, P);
}

struct BlockOutput {
  TensorPtr output;                    // d x T
  TensorPtr preresidual;               // d x T, attention output before residual
  std::vector<double> head_attention;  // T x T, averaged over heads
};

/// One session-level attention block: per-head causal scaled dot-product
/// attention, vertical head concatenation, output projection, residual with
/// per-column normalization, then a position-wise feed-forward net.
inline BlockOutput multi_head_block(Tape* tape, const TensorPtr& X,
                                    const ParameterSet::Block& block, double norm_epsilon,
                                    const BoolMask& mask, double dropout_rate, Mode mode,
                                    Rng* rng) {
  const std::size_t T = X->shape[1];
  const std::size_t heads = block.Wq.size();
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(block.Wq[0]->shape[0]));

  std::vector<TensorPtr> head_outputs;
  std::vector<double> attention_sum(T * T, 0.0);
  for (std::size_t j = 0; j < heads; ++j) {
    auto q = matmul(tape, block.Wq[j], X);
    auto k = matmul(tape, block.Wk[j], X);
    auto v = matmul(tape, block.Wv[j], X);
    auto scores = scale(tape, matmul(tape, transpose(tape, q), k), scale_factor);
    auto weights = softmax_over_keys(tape, scores, &mask);
    for (std::size_t i = 0; i < T * T; ++i) attention_sum[i] += weights->values[i];
    head_outputs.push_back(matmul(tape, v, transpose(tape, weights)));
  }
  for (double& v : attention_sum) v /= static_cast<double>(heads);

  auto merged = heads == 1 ? head_outputs[0] : concat_rows(tape, head_outputs);
  auto preresidual = matmul(tape, block.Wo, merged);
  auto normed = layer_norm(tape, add(tape, preresidual, X), block.norm_alpha, block.norm_beta,
                           norm_epsilon);
  auto hidden = relu(tape, add_colwise(tape, matmul(tape, block.ffn_W1, normed), block.ffn_b1));
  auto out = add_colwise(tape, matmul(tape, block.ffn_W2, hidden), block.ffn_b2);
  if (mode == Mode::training && dropout_rate > 0.0) out = dropout(tape, out, dropout_rate, *rng);
  return {out, preresidual, std::move(attention_sum)};
}

struct PoolOutput {
  TensorPtr pooled;   // d
  TensorPtr weights;  // T
};

/// Content-based pooling of the per-session columns of Z, queried by the
/// user embedding f_u.
inline PoolOutput long_term_pool(Tape* tape, const TensorPtr& Z, const TensorPtr& f_u,
                                 const TensorPtr& W_long, const TensorPtr& b_long) {
  auto keys = relu(tape, add_colwise(tape, matmul(tape, W_long, Z), b_long));  // d x T
  auto scores = matmul(tape, f_u, keys);                                       // T
  auto weights = softmax_over_keys(tape, scores);
  auto pooled = matmul(tape, Z, weights);  // d x T times T -> d
  return {pooled, weights};
}

struct GateOutput {
  TensorPtr gate;    // d
  TensorPtr fused;   // d
};

/// Lag-conditioned fusion: a sigmoid gate computed from both preference
/// embeddings and the lag-bucket embedding decides, per dimension, how much
/// of the short-term signal survives. delta is 1-based.
inline GateOutput time_gate(Tape* tape, const ParameterSet& params, const TensorPtr& z_long,
                            const TensorPtr& z_short, std::size_t delta, Mode mode, Rng* rng) {
  if (delta < 1 || delta > params.config.C)
    throw IndexError("time_gate: delta " + std::to_string(delta) + " outside [1, " +
                     std::to_string(params.config.C) + "]");
  auto y = reshape(tape, gather_columns(tape, params.Y, {delta - 1}), {params.config.d});
  auto pre = add(tape, add(tape, matmul(tape, params.Wg_long, z_long),
                           matmul(tape, params.Wg_short, z_short)),
                 add(tape, matmul(tape, params.Wg_time, y), params.b_gate));
  if (mode == Mode::training && params.config.dropout_rate > 0.0)
    pre = dropout(tape, pre, params.config.dropout_rate, *rng);
  auto gate = sigmoid(tape, pre);
  auto keep_long = add_scalar(tape, scale(tape, gate, -1.0), 1.0);  // 1 - g
  auto fused = add(tape, mul(tape, gate, z_short), mul(tape, keep_long, z_long));
  return {gate, fused};
}

/// Mutual attention between the two preference embeddings (columns of a
/// d x 2 matrix), summed back into one vector. One head without an output
/// projection in the single-head form; h heads plus a projection otherwise.
inline TensorPtr gate_attention_fuse(Tape* tape, const ParameterSet& params,
                                     const TensorPtr& z_long, const TensorPtr& z_short) {
  const auto& ga = params.gate_attention;
  auto X = concat_columns(tape, {z_long, z_short});  // d x 2
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(ga.Wq[0]->shape[0]));
  std::vector<TensorPtr> head_outputs;
  for (std::size_t j = 0; j < ga.Wq.size(); ++j) {
    auto q = matmul(tape, ga.Wq[j], X);
    auto k = matmul(tape, ga.Wk[j], X);
    auto v = matmul(tape, ga.Wv[j], X);
    auto scores = scale(tape, matmul(tape, transpose(tape, q), k), scale_factor);
    auto weights = softmax_over_keys(tape, scores);
    head_outputs.push_back(matmul(tape, v, transpose(tape, weights)));
  }
  auto merged = head_outputs.size() == 1 ? head_outputs[0] : concat_rows(tape, head_outputs);
  if (params.config.variant == Variant::gate_multihead)
    merged = matmul(tape, ga.Wo, merged);
  return sum_columns(tape, merged);
}

/// Runs the whole network on one padded instance. In training mode dropout
/// is live and draws from `rng`; in inference mode `rng` may be null and the
/// pass is deterministic.
inline ForwardResult forward(Tape* tape, const ParameterSet& params,
                             const TrainingInstance& instance, Mode mode, Rng* rng = nullptr) {
  const ModelConfig& config = params.config;
  if (instance.input_sessions.size() != config.T)
    throw ContractError("forward: instance has " +
                        std::to_string(instance.input_sessions.size()) +
                        " sessions, config expects T=" + std::to_string(config.T));
  for (const Session& s : instance.input_sessions)
    if (s.item_ids.size() != config.m)
      throw ContractError("forward: session of length " + std::to_string(s.item_ids.size()) +
                          ", config expects m=" + std::to_string(config.m));
  if (instance.user_id >= params.user_count)
    throw IndexError("forward: user " + std::to_string(instance.user_id) + " out of range [0, " +
                     std::to_string(params.user_count) + ")");
  const bool needs_rng = mode == Mode::training && config.dropout_rate > 0.0;
  if (needs_rng && rng == nullptr)
    throw ContractError("forward: training mode with dropout needs an rng");

  ForwardTrace trace;
  trace.d = config.d;
  trace.T = config.T;

  // Session embeddings s_1..s_T.
  std::vector<TensorPtr> session_embeddings;
  for (const Session& s : instance.input_sessions) {
    auto E = embed_session_items(tape, params.W_item, s.item_ids);
    if (needs_rng) E = dropout(tape, E, config.dropout_rate, *rng);
    if (config.has_short_attention())
      session_embeddings.push_back(short_term_session_embedding(
          tape, E, params.Wq_short, params.Wk_short, params.Wv_short));
    else
      session_embeddings.push_back(mean_columns(tape, E));
  }
  auto S = concat_columns(tape, session_embeddings);
  auto z_short = session_embeddings.back();
  trace.session_embeddings = S->values;
  trace.short_embedding = z_short->values;

  // Attentional session embeddings Z.
  TensorPtr Z;
  if (config.has_session_blocks()) {
    const BoolMask mask = BoolMask::causal(config.T);
    Z = inject_positions(tape, S, params.P);
    for (const auto& block : params.blocks) {
      auto result = multi_head_block(tape, Z, block, config.norm_epsilon, mask,
                                     config.dropout_rate, mode, rng);
      Z = result.output;
      trace.block_attention.push_back(std::move(result.head_attention));
      trace.block_preresidual.push_back(result.preresidual->values);
    }
  } else {
    Z = S;
  }
  trace.attentional = Z->values;

  // Long-term pooling queried by the user embedding.
  auto f_u = reshape(tape, gather_columns(tape, params.W_user, {instance.user_id}),
                     {config.d});
  auto pool = long_term_pool(tape, Z, f_u, params.W_long, params.b_long);
  trace.long_weights = pool.weights->values;
  trace.long_embedding = pool.pooled->values;

  // Fusion.
  ForwardResult out;
  out.z_short = z_short;
  out.z_long = pool.pooled;
  if (config.has_time_gate()) {
    auto gated = time_gate(tape, params, pool.pooled, z_short, instance.delta_index, mode, rng);
    out.z_user = gated.fused;
    trace.gate = gated.gate->values;
  } else if (config.variant == Variant::gate_average) {
    out.z_user = scale(tape, add(tape, z_short, pool.pooled), 0.5);
    trace.gate.assign(config.d, 0.5);
  } else {
    out.z_user = gate_attention_fuse(tape, params, pool.pooled, z_short);
    trace.gate.assign(config.d, 0.5);
  }
  trace.fused = out.z_user->values;
  out.trace = std::move(trace);
  return out;
}

/// sigmoid(z_u . e_v) for one candidate item.
inline TensorPtr predict_rating(Tape* tape, const TensorPtr& z_user, const TensorPtr& W_item,
                                std::size_t item_id) {
  auto e_v = reshape(tape, gather_columns(tape, W_item, {item_id}), {W_item->shape[0]});
  return sigmoid(tape, matmul(tape, z_user, e_v));
}

/// Ratings for a list of candidate items, as one taped vector.
inline TensorPtr score_items(Tape* tape, const TensorPtr& z_user, const TensorPtr& W_item,
                             const std::vector<std::size_t>& item_ids) {
  auto picked = gather_columns(tape, W_item, item_ids);           // d x k
  return sigmoid(tape, matmul(tape, transpose(tape, picked), z_user));  // k
}

/// Ratings for every item, untaped: the evaluation fast path.
inline std::vector<double> score_all_items(const ParameterSet& params,
                                           const std::vector<double>& z_user) {
  const std::size_t d = params.config.d;
  const std::size_t M = params.item_count;
  if (z_user.size() != d) throw ContractError("score_all_items: embedding has wrong length");
  const auto& table = params.W_item->values;
  std::vector<double> ratings(M);
  for (std::size_t v = 0; v < M; ++v) {
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += z_user[i] * table[i * M + v];
    ratings[v] = dot >= 0.0 ? 1.0 / (1.0 + std::exp(-dot)) : std::exp(dot) / (1.0 + std::exp(dot));
  }
  return ratings;
}

// --------------------------------------------------------------------------
// Checkpoints: header (version, config, N, M) then the registry tensors in
// order, each with its name and shape. save -> load -> save is byte-exact.
// --------------------------------------------------------------------------

namespace detail {

constexpr char kCheckpointMagic[5] = "TLSC";
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const ParameterSet& params) {
  write_bytes(out, detail::kCheckpointMagic, 4);
  write_u32(out, detail::kCheckpointVersion);
  const ModelConfig& c = params.config;
  write_u64(out, c.d);
  write_u64(out, c.h);
  write_u64(out, c.T);
  write_u64(out, c.m);
  write_u64(out, c.C);
  write_u64(out, c.block_count);
  write_f64(out, c.dropout_rate);
  write_f64(out, c.norm_epsilon);
  write_u8(out, static_cast<std::uint8_t>(c.variant));
  write_u64(out, params.user_count);
  write_u64(out, params.item_count);

  const auto registry = params.registry();
  write_u64(out, registry.size());
  for (const auto& entry : registry) {
    write_string(out, entry.name);
    write_u64(out, entry.tensor->shape.size());
    for (std::size_t dim : entry.tensor->shape) write_u64(out, dim);
    for (double v : entry.tensor->values) write_f64(out, v);
  }
}

inline ParameterSet load_checkpoint(std::istream& in) {
  expect_magic(in, detail::kCheckpointMagic, "checkpoint");
  const std::uint32_t version = read_u32(in);
  if (version != detail::kCheckpointVersion)
    throw IoError("checkpoint version " + std::to_string(version) + " not supported");
  ModelConfig config;
  config.d = read_u64(in);
  config.h = read_u64(in);
  config.T = read_u64(in);
  config.m = read_u64(in);
  config.C = read_u64(in);
  config.block_count = read_u64(in);
  config.dropout_rate = read_f64(in);
  config.norm_epsilon = read_f64(in);
  const std::uint8_t variant_tag = read_u8(in);
  if (variant_tag > static_cast<std::uint8_t>(Variant::gate_multihead))
    throw IoError("checkpoint: unknown variant tag " + std::to_string(variant_tag));
  config.variant = static_cast<Variant>(variant_tag);
  const std::size_t user_count = read_u64(in);
  const std::size_t item_count = read_u64(in);

  ParameterSet params = init_parameters(config, user_count, item_count, 0);
  const auto registry = params.registry();
  const std::uint64_t entry_count = read_u64(in);
  if (entry_count != registry.size())
    throw IoError("checkpoint: expected " + std::to_string(registry.size()) +
                  " tensors, file has " + std::to_string(entry_count));
  for (const auto& entry : registry) {
    const std::string name = read_string(in);
    if (name != entry.name)
      throw IoError("checkpoint: expected tensor '" + entry.name + "', file has '" + name + "'");
    std::vector<std::size_t> shape(read_u64(in));
    for (std::size_t& dim : shape) dim = read_u64(in);
    if (shape != entry.tensor->shape)
      throw IoError("checkpoint: tensor '" + name + "' has shape " +
                    Tensor::shape_string(shape) + ", expected " +
                    Tensor::shape_string(entry.tensor->shape));
    for (double& v : entry.tensor->values) v = read_f64(in);
  }
  return params;
}

inline void save_checkpoint(const std::string& path, const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_checkpoint(out, params);
}

inline ParameterSet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return load_checkpoint(in);
}

}  // namespace tlsrec
