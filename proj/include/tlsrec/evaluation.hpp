#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tlsrec/dataset.hpp"
#include "tlsrec/error.hpp"
#include "tlsrec/model.hpp"

namespace tlsrec {

/// Full decimal round-trip precision for report and CSV numbers.
inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// All item ids ordered by descending rating, ties by ascending id.
/// Excluded ids sink to the back (same ordering rule among themselves).
inline std::vector<std::size_t> rank_items(const std::vector<double>& ratings,
                                           const std::vector<std::size_t>& excluded = {}) {
  std::vector<std::size_t> sorted_excluded = excluded;
  std::sort(sorted_excluded.begin(), sorted_excluded.end());
  auto is_excluded = [&sorted_excluded](std::size_t id) {
    return std::binary_search(sorted_excluded.begin(), sorted_excluded.end(), id);
  };
  std::vector<std::size_t> order(ratings.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool ea = is_excluded(a), eb = is_excluded(b);
    if (ea != eb) return eb;
    if (ratings[a] != ratings[b]) return ratings[a] > ratings[b];
    return a < b;
  });
  return order;
}

namespace detail {

inline bool contains_sorted(const std::vector<std::size_t>& sorted, std::size_t id) {
  return std::binary_search(sorted.begin(), sorted.end(), id);
}

}  // namespace detail

/// 1 iff any ground-truth item appears in the first k ranks. `ground_truth`
/// must be sorted ascending (instances keep their targets that way).
inline double hit_at_k(const std::vector<std::size_t>& ground_truth,
                       const std::vector<std::size_t>& ranking, std::size_t k) {
  if (ground_truth.empty()) throw ContractError("hit_at_k: empty ground truth");
  const std::size_t top = std::min(k, ranking.size());
  for (std::size_t p = 0; p < top; ++p)
    if (detail::contains_sorted(ground_truth, ranking[p])) return 1.0;
  return 0.0;
}

/// Positional precision sum over the hits in the top k: each hit at 1-based
/// rank r contributes (hits ranked before it + 1) / r. Deliberately NOT
/// divided by the ground-truth size; see average_precision_at_k for the
/// normalized form.
inline double map_at_k(const std::vector<std::size_t>& ground_truth,
                       const std::vector<std::size_t>& ranking, std::size_t k) {
  const std::size_t top = std::min(k, ranking.size());
  double sum = 0.0;
  std::size_t hits_before = 0;
  for (std::size_t p = 0; p < top; ++p)
    if (detail::contains_sorted(ground_truth, ranking[p])) {
      sum += static_cast<double>(hits_before + 1) / static_cast<double>(p + 1);
      ++hits_before;
    }
  return sum;
}

/// Standard average precision at k: the positional precision sum divided by
/// the ground-truth size.
inline double average_precision_at_k(const std::vector<std::size_t>& ground_truth,
                                     const std::vector<std::size_t>& ranking, std::size_t k) {
  if (ground_truth.empty()) throw ContractError("average_precision_at_k: empty ground truth");
  return map_at_k(ground_truth, ranking, k) / static_cast<double>(ground_truth.size());
}

/// Per-cutoff metric means over a set of instances. `map` is the positional
/// precision sum; `ap` its size-normalized counterpart.
struct MetricRow {
  double hit = 0.0;
  double map = 0.0;
  double ap = 0.0;
};

struct RankingReport {
  std::map<std::size_t, MetricRow> per_k;
  std::size_t instance_count = 0;
};

/// Ranks every item for each instance (inference mode, deterministic) and
/// averages Hit@k / MAP@k / AP@k over the instances for each cutoff.
inline RankingReport evaluate(const ParameterSet& params,
                              const std::vector<TrainingInstance>& instances,
                              const std::vector<std::size_t>& ks = {20, 30},
                              bool exclude_input_items = false) {
  if (ks.empty()) throw ContractError("evaluate: need at least one cutoff");
  RankingReport report;
  for (std::size_t k : ks) report.per_k[k] = MetricRow{};
  for (const TrainingInstance& instance : instances) {
    auto result = forward(nullptr, params, instance, Mode::inference);
    auto ratings = score_all_items(params, result.z_user->values);
    std::vector<std::size_t> excluded;
    if (exclude_input_items)
      for (const Session& s : instance.input_sessions)
        excluded.insert(excluded.end(), s.item_ids.begin(), s.item_ids.end());
    auto ranking = rank_items(ratings, excluded);
    for (std::size_t k : ks) {
      MetricRow& row = report.per_k[k];
      row.hit += hit_at_k(instance.target_items, ranking, k);
      row.map += map_at_k(instance.target_items, ranking, k);
      row.ap += average_precision_at_k(instance.target_items, ranking, k);
    }
    ++report.instance_count;
  }
  if (report.instance_count > 0)
    for (auto& [k, row] : report.per_k) {
      row.hit /= static_cast<double>(report.instance_count);
      row.map /= static_cast<double>(report.instance_count);
      row.ap /= static_cast<double>(report.instance_count);
    }
  return report;
}

/// Human-readable metric table.
inline std::string report_table(const RankingReport& report) {
  std::ostringstream os;
  os << "instances: " << report.instance_count << "\n";
  os << std::left << std::setw(6) << "k" << std::setw(24) << "hit@k" << std::setw(24) << "map@k"
     << "ap@k\n";
  for (const auto& [k, row] : report.per_k)
    os << std::left << std::setw(6) << k << std::setw(24) << format_number(row.hit)
       << std::setw(24) << format_number(row.map) << format_number(row.ap) << "\n";
  return os.str();
}

/// One machine-parsable line per (metric, cutoff): "<metric> <k> <value>".
inline std::string report_records(const RankingReport& report) {
  std::ostringstream os;
  for (const auto& [k, row] : report.per_k) {
    os << "hit " << k << " " << format_number(row.hit) << "\n";
    os << "map " << k << " " << format_number(row.map) << "\n";
    os << "ap " << k << " " << format_number(row.ap) << "\n";
  }
  return os.str();
}

/// What one instance looks like from the inside: the last block's
/// head-averaged session-attention matrix, and the fusion gate swept over
/// every lag bucket with the instance's embeddings held fixed.
struct InspectionResult {
  std::size_t d = 0;
  std::size_t T = 0;
  std::size_t C = 0;
  std::vector<double> attention;               // T x T, lower-triangular
  std::vector<std::vector<double>> gate_rows;  // C rows of d values, row i = lag bucket i+1
  std::vector<double> gate_row_means;          // C
};

inline InspectionResult export_inspection(const ParameterSet& params,
                                          const TrainingInstance& instance) {
  const ModelConfig& config = params.config;
  if (!config.has_session_blocks())
    throw ContractError("inspection needs session-level attention; variant " +
                        std::string(variant_name(config.variant)) + " has none");
  auto result = forward(nullptr, params, instance, Mode::inference);

  InspectionResult out;
  out.d = config.d;
  out.T = config.T;
  out.C = config.C;
  out.attention = result.trace.block_attention.back();
  for (std::size_t delta = 1; delta <= config.C; ++delta) {
    std::vector<double> row;
    if (config.has_time_gate()) {
      auto gated = time_gate(nullptr, params, result.z_long, result.z_short, delta,
                             Mode::inference, nullptr);
      row = gated.gate->values;
    } else {
      row.assign(config.d, 0.5);  // fixed effective mix; no lag sensitivity to sweep
    }
    double mean = 0.0;
    for (double g : row) mean += g;
    out.gate_row_means.push_back(mean / static_cast<double>(config.d));
    out.gate_rows.push_back(std::move(row));
  }
  return out;
}

/// CSV with one row per query session; column j holds the attention paid to
/// session j.
inline void write_attention_csv(std::ostream& os, const InspectionResult& inspection) {
  os << "query";
  for (std::size_t j = 1; j <= inspection.T; ++j) os << ",session" << j;
  os << "\n";
  for (std::size_t i = 0; i < inspection.T; ++i) {
    os << (i + 1);
    for (std::size_t j = 0; j < inspection.T; ++j)
      os << "," << format_number(inspection.attention[i * inspection.T + j]);
    os << "\n";
  }
}

/// CSV with one row per lag bucket: the d gate entries plus their mean.
inline void write_gate_csv(std::ostream& os, const InspectionResult& inspection) {
  os << "delta";
  for (std::size_t j = 1; j <= inspection.d; ++j) os << ",g" << j;
  os << ",mean\n";
  for (std::size_t i = 0; i < inspection.C; ++i) {
    os << (i + 1);
    for (double g : inspection.gate_rows[i]) os << "," << format_number(g);
    os << "," << format_number(inspection.gate_row_means[i]) << "\n";
  }
}

}  // namespace tlsrec
