#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tlsrec/error.hpp"
#include "tlsrec/rng.hpp"
#include "tlsrec/serialize.hpp"

namespace tlsrec {

/// One implicit-feedback event; ids are dense indices assigned at parse time.
struct Interaction {
  std::size_t user_id = 0;
  std::size_t item_id = 0;
  std::int64_t timestamp = 0;  // seconds since epoch

  bool operator==(const Interaction&) const = default;
};

/// How the raw interaction log is laid out: field delimiter, which column
/// holds what, and whether the first line is a header to skip.
struct FormatDescriptor {
  char delimiter = '\t';
  std::size_t user_column = 0;
  std::size_t item_column = 1;
  std::size_t time_column = 2;
  bool has_header = false;

  std::size_t column_count() const {
    return std::max({user_column, item_column, time_column}) + 1;
  }
};

/// Parse output: interactions with dense ids plus the label tables mapping
/// each dense id back to the raw token it replaced.
struct ParsedInteractions {
  std::vector<Interaction> interactions;
  std::vector<std::string> user_labels;
  std::vector<std::string> item_labels;

  std::size_t user_count() const { return user_labels.size(); }
  std::size_t item_count() const { return item_labels.size(); }
};

/// Reads delimiter-separated rows and assigns dense user/item ids in order of
/// first appearance. Every non-empty line must have exactly the arity the
/// descriptor implies; violations name the 1-based line number.
inline ParsedInteractions parse_interactions(std::istream& in, const FormatDescriptor& fmt) {
  ParsedInteractions out;
  std::unordered_map<std::string, std::size_t> user_ids, item_ids;
  std::string line;
  std::size_t line_no = 0;
  const std::size_t want_cols = fmt.column_count();

  auto intern = [](std::unordered_map<std::string, std::size_t>& table,
                   std::vector<std::string>& labels, const std::string& token) {
    auto [it, fresh] = table.emplace(token, labels.size());
    if (fresh) labels.push_back(token);
    return it->second;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (fmt.has_header && line_no == 1) continue;
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(fmt.delimiter, start);
      fields.push_back(line.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (fields.size() != want_cols)
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(want_cols) + " fields, got " +
                       std::to_string(fields.size()));
    const std::string& user_tok = fields[fmt.user_column];
    const std::string& item_tok = fields[fmt.item_column];
    const std::string& time_tok = fields[fmt.time_column];
    if (user_tok.empty() || item_tok.empty())
      throw ParseError("line " + std::to_string(line_no) + ": empty id field");

    std::int64_t ts = 0;
    const auto [end, ec] =
        std::from_chars(time_tok.data(), time_tok.data() + time_tok.size(), ts);
    if (ec != std::errc{} || end != time_tok.data() + time_tok.size())
      throw ParseError("line " + std::to_string(line_no) + ": timestamp '" + time_tok +
                       "' is not an integer");

    out.interactions.push_back({intern(user_ids, out.user_labels, user_tok),
                                intern(item_ids, out.item_labels, item_tok), ts});
  }
  return out;
}

/// Groups interactions by user and time-sorts each user's list (stable, so
/// same-timestamp events keep their input order).
inline std::vector<std::vector<Interaction>> group_by_user(const ParsedInteractions& parsed) {
  std::vector<std::vector<Interaction>> per_user(parsed.user_count());
  for (const Interaction& it : parsed.interactions) per_user[it.user_id].push_back(it);
  for (auto& rows : per_user)
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Interaction& a, const Interaction& b) {
                       return a.timestamp < b.timestamp;
                     });
  return per_user;
}

/// A run of interactions whose consecutive gaps never exceed the threshold.
struct Session {
  std::vector<std::size_t> item_ids;
  std::int64_t start_ts = 0;
  std::int64_t end_ts = 0;

  bool operator==(const Session&) const = default;
};

/// Cuts one user's time-sorted interactions into sessions: a new session
/// starts exactly when the gap to the previous event exceeds the threshold.
inline std::vector<Session> split_sessions(const std::vector<Interaction>& rows,
                                           std::int64_t threshold_seconds) {
  if (threshold_seconds <= 0) throw ContractError("split_sessions: threshold must be > 0");
  std::vector<Session> sessions;
  for (const Interaction& it : rows) {
    if (sessions.empty() || it.timestamp - sessions.back().end_ts > threshold_seconds) {
      sessions.push_back({{it.item_id}, it.timestamp, it.timestamp});
    } else {
      sessions.back().item_ids.push_back(it.item_id);
      sessions.back().end_ts = it.timestamp;
    }
  }
  return sessions;
}

/// One supervised example: T input sessions predicting the items of the
/// session that follows, together with the elapsed-time signal.
struct TrainingInstance {
  std::size_t user_id = 0;
  std::vector<Session> input_sessions;       // exactly T once windowed
  std::vector<std::size_t> target_items;     // sorted, unique
  std::int64_t time_lag_seconds = 0;         // target start - last input end
  std::size_t delta_index = 1;               // discretized lag in [1, C]
};

/// Slides a width-(T+1) window (stride 1) over the user's session sequence;
/// in each window the first T sessions are inputs and the last is the
/// target. Sequences shorter than T+1 are left-padded by repeating the first
/// session. Users with fewer than two sessions yield nothing (the caller
/// counts them).
inline std::vector<TrainingInstance> window_instances(std::size_t user_id,
                                                      const std::vector<Session>& sessions,
                                                      std::size_t T) {
  if (T == 0) throw ContractError("window_instances: T must be >= 1");
  std::vector<TrainingInstance> out;
  const std::size_t n = sessions.size();
  if (n < 2) return out;

  auto make_instance = [&](const std::vector<const Session*>& inputs, const Session& target) {
    TrainingInstance inst;
    inst.user_id = user_id;
    for (const Session* s : inputs) inst.input_sessions.push_back(*s);
    std::set<std::size_t> uniq(target.item_ids.begin(), target.item_ids.end());
    inst.target_items.assign(uniq.begin(), uniq.end());
    inst.time_lag_seconds = target.start_ts - inputs.back()->end_ts;
    return inst;
  };

  if (n >= T + 1) {
    for (std::size_t p = 0; p + T < n; ++p) {
      std::vector<const Session*> inputs;
      for (std::size_t i = 0; i < T; ++i) inputs.push_back(&sessions[p + i]);
      out.push_back(make_instance(inputs, sessions[p + T]));
    }
  } else {
    const std::size_t pad = T + 1 - n;  // leading copies of the first session
    std::vector<const Session*> inputs;
    for (std::size_t i = 0; i < T; ++i) inputs.push_back(&sessions[i < pad ? 0 : i - pad]);
    out.push_back(make_instance(inputs, sessions[n - 1]));
  }
  return out;
}

/// Extends a session to exactly m items by repeating its final item.
inline Session pad_session(Session session, std::size_t m) {
  if (session.item_ids.empty()) throw ContractError("pad_session: empty session");
  if (session.item_ids.size() > m)
    throw ContractError("pad_session: session of length " +
                        std::to_string(session.item_ids.size()) + " exceeds m=" +
                        std::to_string(m));
  while (session.item_ids.size() < m) session.item_ids.push_back(session.item_ids.back());
  return session;
}

/// Smallest strictly positive gap between successive interactions of one
/// time-sorted list. Same-timestamp pairs are skipped so the result is
/// always usable as a divisor.
inline std::int64_t min_positive_gap(const std::vector<Interaction>& rows) {
  std::int64_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::int64_t gap = rows[i].timestamp - rows[i - 1].timestamp;
    if (gap > 0 && (best == 0 || gap < best)) best = gap;
  }
  if (best == 0)
    throw ContractError("min_positive_gap: user has no strictly positive time gap");
  return best;
}

/// Maps an elapsed time onto the discrete index set {1..C}: the lag is
/// measured in multiples of the user's minimum gap, rounded up, clamped into
/// range at both ends. Negative lags mean the data is out of order.
inline std::size_t compute_time_lag(std::int64_t delta_t_seconds, std::int64_t delta_min,
                                    std::size_t C) {
  if (delta_min <= 0) throw ContractError("compute_time_lag: delta_min must be > 0");
  if (C == 0) throw ContractError("compute_time_lag: C must be >= 1");
  if (delta_t_seconds < 0)
    throw DataError("compute_time_lag: negative lag " + std::to_string(delta_t_seconds) +
                    "s (target precedes input)");
  const std::uint64_t dt = static_cast<std::uint64_t>(delta_t_seconds);
  const std::uint64_t dm = static_cast<std::uint64_t>(delta_min);
  std::uint64_t delta = (dt + dm - 1) / dm;  // ceil
  if (delta < 1) delta = 1;
  if (delta > C) delta = C;
  return static_cast<std::size_t>(delta);
}

/// Draws one unobserved item per positive, uniformly over the complement of
/// the target set, independently (with replacement) across positives.
inline std::vector<std::size_t> sample_negatives(const std::vector<std::size_t>& target_items,
                                                 std::size_t item_count, Rng& rng) {
  if (item_count <= target_items.size())
    throw ContractError("sample_negatives: need more items than targets (" +
                        std::to_string(item_count) + " <= " +
                        std::to_string(target_items.size()) + ")");
  std::vector<std::size_t> negatives;
  negatives.reserve(target_items.size());
  auto observed = [&](std::size_t item) {
    return std::binary_search(target_items.begin(), target_items.end(), item);
  };
  for (std::size_t i = 0; i < target_items.size(); ++i) {
    std::size_t candidate;
    do {
      candidate = static_cast<std::size_t>(rng.next_below(item_count));
    } while (observed(candidate));
    negatives.push_back(candidate);
  }
  return negatives;
}

/// Train/validation/test partition plus the shape facts every consumer needs.
struct DatasetSplit {
  std::vector<TrainingInstance> train;
  std::vector<TrainingInstance> validation;
  std::vector<TrainingInstance> test;
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  std::size_t max_session_length = 0;   // m
  std::size_t sessions_per_instance = 0;  // T
};

namespace detail {

/// Largest-remainder apportionment of n into three parts. Ties go to the
/// earlier split (train before validation before test). Users with one or
/// two instances feed train first, then test; with three or more, every
/// split whose ratio is positive receives at least one instance.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& ratios) {
  if (n == 0) return {0, 0, 0};
  if (n == 1) return {1, 0, 0};
  if (n == 2) return {1, 0, 1};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double exact = ratios[s] * static_cast<double>(n);
    counts[s] = static_cast<std::size_t>(exact);
    remainder[s] = exact - static_cast<double>(counts[s]);
    assigned += counts[s];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < 3; ++s)
      if (remainder[s] > remainder[best]) best = s;
    counts[best] += 1;
    remainder[best] = -1.0;
    assigned += 1;
  }
  for (std::size_t s = 0; s < 3; ++s) {
    if (counts[s] > 0 || ratios[s] <= 0.0) continue;
    std::size_t donor = 0;
    for (std::size_t t = 1; t < 3; ++t)
      if (counts[t] > counts[donor]) donor = t;
    counts[donor] -= 1;
    counts[s] += 1;
  }
  return counts;
}

}  // namespace detail

/// Randomly partitions each user's instances by the given ratios. The draw
/// for a user depends only on (seed, user id), so the partition is stable
/// under any processing order.
inline DatasetSplit split_dataset(const std::vector<TrainingInstance>& instances,
                                  const std::array<double, 3>& ratios, std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw ContractError("split_dataset: ratios must sum to 1, got " + std::to_string(total));
  for (double r : ratios)
    if (r < 0.0) throw ContractError("split_dataset: ratios must be non-negative");

  std::size_t max_user = 0;
  for (const auto& inst : instances) max_user = std::max(max_user, inst.user_id);
  std::vector<std::vector<std::size_t>> per_user(instances.empty() ? 0 : max_user + 1);
  for (std::size_t i = 0; i < instances.size(); ++i)
    per_user[instances[i].user_id].push_back(i);

  DatasetSplit split;
  for (std::size_t user = 0; user < per_user.size(); ++user) {
    auto& order = per_user[user];
    if (order.empty()) continue;
    Rng rng(Rng::mix(seed, user));
    rng.shuffle(order);
    const auto counts = detail::split_counts(order.size(), ratios);
    std::size_t at = 0;
    for (std::size_t i = 0; i < counts[0]; ++i) split.train.push_back(instances[order[at++]]);
    for (std::size_t i = 0; i < counts[1]; ++i) split.validation.push_back(instances[order[at++]]);
    for (std::size_t i = 0; i < counts[2]; ++i) split.test.push_back(instances[order[at++]]);
  }
  return split;
}

/// Everything the ingest stage produces besides the instances themselves.
struct IngestResult {
  std::vector<TrainingInstance> instances;  // padded, lags discretized
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  std::size_t interaction_count = 0;
  std::size_t session_count = 0;
  std::size_t max_session_length = 0;  // m, over every session in the corpus
  std::size_t skipped_users = 0;       // users with fewer than two sessions
};

/// Full preprocessing pipeline: group, sessionize, window, pad, discretize.
inline IngestResult build_dataset(const ParsedInteractions& parsed,
                                  std::int64_t threshold_seconds, std::size_t T, std::size_t C) {
  if (T == 0) throw ContractError("build_dataset: T must be >= 1");
  if (C == 0) throw ContractError("build_dataset: C must be >= 1");
  IngestResult result;
  result.user_count = parsed.user_count();
  result.item_count = parsed.item_count();
  result.interaction_count = parsed.interactions.size();

  const auto per_user = group_by_user(parsed);
  std::vector<std::vector<Session>> user_sessions(per_user.size());
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    user_sessions[u] = split_sessions(per_user[u], threshold_seconds);
    result.session_count += user_sessions[u].size();
    for (const Session& s : user_sessions[u])
      result.max_session_length = std::max(result.max_session_length, s.item_ids.size());
  }

  for (std::size_t u = 0; u < per_user.size(); ++u) {
    if (user_sessions[u].size() < 2) {
      if (!per_user[u].empty()) result.skipped_users += 1;
      continue;
    }
    const std::int64_t delta_min = min_positive_gap(per_user[u]);
    for (TrainingInstance& inst : window_instances(u, user_sessions[u], T)) {
      inst.delta_index = compute_time_lag(inst.time_lag_seconds, delta_min, C);
      for (Session& s : inst.input_sessions)
        s = pad_session(std::move(s), result.max_session_length);
      result.instances.push_back(std::move(inst));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Instance file: a self-describing binary artifact carrying the partitioned
// instances plus every shape fact needed to rebuild tensors without the raw
// log. Layout (little-endian): magic "TLSI", version, N, M, T, m, C,
// session threshold, split seed, then each instance tagged by its split.
// ---------------------------------------------------------------------------

struct InstanceFileHeader {
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  std::size_t sessions_per_instance = 0;  // T
  std::size_t max_session_length = 0;     // m
  std::size_t lag_bucket_count = 0;       // C
  std::int64_t threshold_seconds = 0;
  std::uint64_t seed = 0;
};

namespace detail {

constexpr char kInstanceMagic[5] = "TLSI";
constexpr std::uint32_t kInstanceVersion = 1;

inline void write_instance(std::ostream& out, const TrainingInstance& inst, std::uint8_t tag,
                           std::size_t T, std::size_t m) {
  if (inst.input_sessions.size() != T)
    throw ContractError("instance file: instance has " +
                        std::to_string(inst.input_sessions.size()) + " sessions, expected " +
                        std::to_string(T));
  write_u8(out, tag);
  write_u64(out, inst.user_id);
  write_i64(out, inst.time_lag_seconds);
  write_u64(out, inst.delta_index);
  for (const Session& s : inst.input_sessions) {
    if (s.item_ids.size() != m)
      throw ContractError("instance file: unpadded session of length " +
                          std::to_string(s.item_ids.size()));
    write_i64(out, s.start_ts);
    write_i64(out, s.end_ts);
    for (std::size_t item : s.item_ids) write_u64(out, item);
  }
  write_u64(out, inst.target_items.size());
  for (std::size_t item : inst.target_items) write_u64(out, item);
}

inline TrainingInstance read_instance(std::istream& in, std::size_t T, std::size_t m) {
  TrainingInstance inst;
  inst.user_id = read_u64(in);
  inst.time_lag_seconds = read_i64(in);
  inst.delta_index = read_u64(in);
  inst.input_sessions.resize(T);
  for (Session& s : inst.input_sessions) {
    s.start_ts = read_i64(in);
    s.end_ts = read_i64(in);
    s.item_ids.resize(m);
    for (std::size_t& item : s.item_ids) item = read_u64(in);
  }
  inst.target_items.resize(read_u64(in));
  for (std::size_t& item : inst.target_items) item = read_u64(in);
  return inst;
}

}  // namespace detail

inline void write_instance_file(std::ostream& out, const InstanceFileHeader& header,
                                const DatasetSplit& split) {
  write_bytes(out, detail::kInstanceMagic, 4);
  write_u32(out, detail::kInstanceVersion);
  write_u64(out, header.user_count);
  write_u64(out, header.item_count);
  write_u64(out, header.sessions_per_instance);
  write_u64(out, header.max_session_length);
  write_u64(out, header.lag_bucket_count);
  write_i64(out, header.threshold_seconds);
  write_u64(out, header.seed);
  write_u64(out, split.train.size() + split.validation.size() + split.test.size());
  const std::size_t T = header.sessions_per_instance, m = header.max_session_length;
  for (const auto& inst : split.train) detail::write_instance(out, inst, 0, T, m);
  for (const auto& inst : split.validation) detail::write_instance(out, inst, 1, T, m);
  for (const auto& inst : split.test) detail::write_instance(out, inst, 2, T, m);
}

inline std::pair<InstanceFileHeader, DatasetSplit> read_instance_file(std::istream& in) {
  expect_magic(in, detail::kInstanceMagic, "instance");
  const std::uint32_t version = read_u32(in);
  if (version != detail::kInstanceVersion)
    throw IoError("instance file version " + std::to_string(version) + " not supported");
  InstanceFileHeader header;
  header.user_count = read_u64(in);
  header.item_count = read_u64(in);
  header.sessions_per_instance = read_u64(in);
  header.max_session_length = read_u64(in);
  header.lag_bucket_count = read_u64(in);
  header.threshold_seconds = read_i64(in);
  header.seed = read_u64(in);
  const std::uint64_t count = read_u64(in);

  DatasetSplit split;
  split.user_count = header.user_count;
  split.item_count = header.item_count;
  split.sessions_per_instance = header.sessions_per_instance;
  split.max_session_length = header.max_session_length;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint8_t tag = read_u8(in);
    auto inst = detail::read_instance(in, header.sessions_per_instance,
                                      header.max_session_length);
    switch (tag) {
      case 0: split.train.push_back(std::move(inst)); break;
      case 1: split.validation.push_back(std::move(inst)); break;
      case 2: split.test.push_back(std::move(inst)); break;
      default: throw IoError("instance file: unknown split tag " + std::to_string(tag));
    }
  }
  return {header, split};
}

inline void write_instance_file(const std::string& path, const InstanceFileHeader& header,
                                const DatasetSplit& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_instance_file(out, header, split);
}

inline std::pair<InstanceFileHeader, DatasetSplit> read_instance_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_instance_file(in);
}

}  // namespace tlsrec
