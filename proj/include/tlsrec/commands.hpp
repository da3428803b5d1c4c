#pragma once

// The five CLI commands as library functions. Each takes a validated
// RunConfig, performs one stage of the pipeline, and leaves its artifacts
// under the configured output directory:
//
//   <output>/config_snapshot.ini    canonical config echo (every command)
//   <output>/instances.bin          packed instances (ingest)
//   <output>/instance_header.txt    human-readable header echo (ingest)
//   <output>/user_map.tsv           dense user id -> raw token (ingest)
//   <output>/item_map.tsv           dense item id -> raw token (ingest)
//   <output>/checkpoints/           best.ckpt, ablation variants (train/ablate)
//   <output>/logs/                  per-epoch training logs (train/ablate)
//   <output>/reports/               ingest/eval/ablation reports (all)
//   <output>/inspect/               attention + gate CSVs (inspect)
//
// Every artifact is produced deterministically from the config and seeds:
// re-running a command overwrites each file with identical bytes.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tlsrec/config.hpp"
#include "tlsrec/dataset.hpp"
#include "tlsrec/error.hpp"
#include "tlsrec/evaluation.hpp"
#include "tlsrec/model.hpp"
#include "tlsrec/training.hpp"

namespace tlsrec {

namespace detail {

inline void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory '" + path + "': " + ec.message());
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline void write_snapshot(const RunConfig& config) {
  ensure_dir(config.output_dir);
  write_file(config.output_dir + "/config_snapshot.ini", config_snapshot(config));
}

inline std::string instances_path(const RunConfig& config) {
  return config.output_dir + "/instances.bin";
}

inline std::string default_checkpoint_path(const RunConfig& config) {
  return config.output_dir + "/checkpoints/best.ckpt";
}

inline std::pair<InstanceFileHeader, DatasetSplit> load_split(const RunConfig& config) {
  const std::string path = instances_path(config);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open instance file '" + path + "' (run ingest first)");
  return read_instance_file(in);
}

/// The instance file is the source of truth for data-shaped dimensions, but
/// the config must agree with it — a silent mismatch would train a model on
/// data shaped by someone else's settings.
inline ModelConfig bind_model(const RunConfig& config, const InstanceFileHeader& header) {
  if (header.sessions_per_instance != config.dataset.T)
    throw ContractError("config dataset.T=" + std::to_string(config.dataset.T) +
                        " but instance file was built with T=" +
                        std::to_string(header.sessions_per_instance));
  if (header.lag_bucket_count != config.dataset.C)
    throw ContractError("config dataset.C=" + std::to_string(config.dataset.C) +
                        " but instance file was built with C=" +
                        std::to_string(header.lag_bucket_count));
  if (header.threshold_seconds != config.dataset.threshold_seconds)
    throw ContractError(
        "config dataset.threshold_seconds=" + std::to_string(config.dataset.threshold_seconds) +
        " but instance file was built with threshold_seconds=" +
        std::to_string(header.threshold_seconds));
  ModelConfig model = config.model;
  model.T = header.sessions_per_instance;
  model.m = header.max_session_length;
  model.C = header.lag_bucket_count;
  model.validate();
  return model;
}

/// A checkpoint must describe the same universe as the instance file.
inline void check_checkpoint_matches(const ParameterSet& params,
                                     const InstanceFileHeader& header) {
  const ModelConfig& c = params.config;
  if (params.user_count != header.user_count || params.item_count != header.item_count ||
      c.T != header.sessions_per_instance || c.m != header.max_session_length ||
      c.C != header.lag_bucket_count)
    throw ContractError(
        "checkpoint (users=" + std::to_string(params.user_count) +
        ", items=" + std::to_string(params.item_count) + ", T=" + std::to_string(c.T) +
        ", m=" + std::to_string(c.m) + ", C=" + std::to_string(c.C) +
        ") does not match instance file (users=" + std::to_string(header.user_count) +
        ", items=" + std::to_string(header.item_count) +
        ", T=" + std::to_string(header.sessions_per_instance) +
        ", m=" + std::to_string(header.max_session_length) +
        ", C=" + std::to_string(header.lag_bucket_count) + ")");
}

inline std::string header_echo(const InstanceFileHeader& header, const DatasetSplit& split) {
  std::ostringstream os;
  os << "users = " << header.user_count << "\n";
  os << "items = " << header.item_count << "\n";
  os << "sessions_per_instance = " << header.sessions_per_instance << "\n";
  os << "max_session_length = " << header.max_session_length << "\n";
  os << "lag_buckets = " << header.lag_bucket_count << "\n";
  os << "threshold_seconds = " << header.threshold_seconds << "\n";
  os << "split_seed = " << header.seed << "\n";
  os << "instances_train = " << split.train.size() << "\n";
  os << "instances_validation = " << split.validation.size() << "\n";
  os << "instances_test = " << split.test.size() << "\n";
  return os.str();
}

inline std::string label_table(const std::vector<std::string>& labels) {
  std::ostringstream os;
  for (std::size_t i = 0; i < labels.size(); ++i) os << i << "\t" << labels[i] << "\n";
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestSummary {
  InstanceFileHeader header;
  std::size_t interaction_count = 0;
  std::size_t session_count = 0;
  std::size_t skipped_users = 0;
  std::size_t instance_count = 0;
  std::string report;         // corpus statistics, one `key = value` per line
  std::string instances_path;
};

inline IngestSummary cmd_ingest(const RunConfig& config) {
  const auto& ds = config.dataset;
  std::ifstream raw(ds.path);
  if (!raw) throw IoError("cannot open input '" + ds.path + "' for reading");
  const ParsedInteractions parsed = parse_interactions(raw, ds.format());

  const IngestResult ingest =
      build_dataset(parsed, ds.threshold_seconds, ds.T, ds.C);
  DatasetSplit split = split_dataset(ingest.instances, ds.split_ratios, ds.split_seed);
  split.user_count = ingest.user_count;
  split.item_count = ingest.item_count;
  split.max_session_length = ingest.max_session_length;
  split.sessions_per_instance = ds.T;

  IngestSummary summary;
  summary.header.user_count = ingest.user_count;
  summary.header.item_count = ingest.item_count;
  summary.header.sessions_per_instance = ds.T;
  summary.header.max_session_length = ingest.max_session_length;
  summary.header.lag_bucket_count = ds.C;
  summary.header.threshold_seconds = ds.threshold_seconds;
  summary.header.seed = ds.split_seed;
  summary.interaction_count = ingest.interaction_count;
  summary.session_count = ingest.session_count;
  summary.skipped_users = ingest.skipped_users;
  summary.instance_count = ingest.instances.size();

  const double denom =
      static_cast<double>(ingest.user_count) * static_cast<double>(ingest.item_count);
  const double avg_len =
      ingest.session_count
          ? static_cast<double>(ingest.interaction_count) /
                static_cast<double>(ingest.session_count)
          : 0.0;
  std::ostringstream report;
  report << "users = " << ingest.user_count << "\n";
  report << "items = " << ingest.item_count << "\n";
  report << "interactions = " << ingest.interaction_count << "\n";
  report << "sessions = " << ingest.session_count << "\n";
  report << "avg_session_length = " << format_number(avg_len) << "\n";
  report << "density = "
         << format_number(denom > 0.0 ? static_cast<double>(ingest.interaction_count) / denom
                                      : 0.0)
         << "\n";
  report << "instances = " << ingest.instances.size() << "\n";
  report << "skipped_users = " << ingest.skipped_users << "\n";
  summary.report = report.str();

  detail::write_snapshot(config);
  detail::ensure_dir(config.output_dir + "/reports");
  summary.instances_path = detail::instances_path(config);
  std::ostringstream packed(std::ios::binary);
  write_instance_file(packed, summary.header, split);
  detail::write_file(summary.instances_path, packed.str());
  detail::write_file(config.output_dir + "/instance_header.txt",
                     detail::header_echo(summary.header, split));
  detail::write_file(config.output_dir + "/user_map.tsv",
                     detail::label_table(parsed.user_labels));
  detail::write_file(config.output_dir + "/item_map.tsv",
                     detail::label_table(parsed.item_labels));
  detail::write_file(config.output_dir + "/reports/ingest_report.txt", summary.report);
  return summary;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainSummary {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_hit = 0.0;
  double best_map = 0.0;
  std::string checkpoint_path;
  std::string log_path;
};

inline TrainSummary cmd_train(const RunConfig& config) {
  auto [header, split] = detail::load_split(config);
  const ModelConfig model = detail::bind_model(config, header);

  TrainResult result = train(split, model, config.train);

  detail::write_snapshot(config);
  detail::ensure_dir(config.output_dir + "/checkpoints");
  detail::ensure_dir(config.output_dir + "/logs");

  TrainSummary summary;
  summary.epochs_run = result.epochs_run;
  summary.best_epoch = result.best_epoch;
  summary.best_hit = result.best_hit;
  summary.best_map = result.best_map;
  summary.checkpoint_path = detail::default_checkpoint_path(config);
  summary.log_path = config.output_dir + "/logs/train_log.txt";

  detail::write_file(summary.checkpoint_path, result.best_checkpoint);
  std::ostringstream log;
  for (const EpochRecord& record : result.log) log << epoch_record_line(record) << "\n";
  detail::write_file(summary.log_path, log.str());
  return summary;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalSummary {
  RankingReport report;
  std::string table;       // human-readable metric table
  std::string table_path;
  std::string records_path;
};

inline EvalSummary cmd_eval(const RunConfig& config, std::string checkpoint_path = "") {
  auto [header, split] = detail::load_split(config);
  if (checkpoint_path.empty()) checkpoint_path = detail::default_checkpoint_path(config);
  const ParameterSet params = load_checkpoint(checkpoint_path);
  detail::check_checkpoint_matches(params, header);

  EvalSummary summary;
  summary.report =
      evaluate(params, split.test, config.eval.ks, config.eval.exclude_input_items);
  summary.table = report_table(summary.report);

  detail::write_snapshot(config);
  detail::ensure_dir(config.output_dir + "/reports");
  summary.table_path = config.output_dir + "/reports/eval_report.txt";
  summary.records_path = config.output_dir + "/reports/eval_records.txt";
  detail::write_file(summary.table_path, summary.table);
  detail::write_file(summary.records_path, report_records(summary.report));
  return summary;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateRow {
  Variant variant = Variant::full;
  RankingReport report;
};

struct AblateSummary {
  std::vector<AblateRow> rows;
  std::string table;  // TSV: variant, then hit@k and map@k per cutoff
  std::string table_path;
};

/// Trains and evaluates every requested variant under one shared seed, so
/// the rows differ only in architecture.
inline AblateSummary cmd_ablate(const RunConfig& config) {
  auto [header, split] = detail::load_split(config);
  const ModelConfig base = detail::bind_model(config, header);

  detail::write_snapshot(config);
  detail::ensure_dir(config.output_dir + "/checkpoints");
  detail::ensure_dir(config.output_dir + "/logs");
  detail::ensure_dir(config.output_dir + "/reports");

  AblateSummary summary;
  std::ostringstream table;
  table << "variant";
  for (std::size_t k : config.eval.ks) table << "\thit@" << k << "\tmap@" << k;
  table << "\n";

  for (Variant variant : config.ablate.variants) {
    ModelConfig model = base;
    model.variant = variant;
    TrainResult result = train(split, model, config.train);
    AblateRow row;
    row.variant = variant;
    row.report =
        evaluate(result.best_params, split.test, config.eval.ks,
                 config.eval.exclude_input_items);

    // File names use the spelled-out variant tag ("G+A" is not path-friendly).
    std::string tag = variant_name(variant);
    for (char& ch : tag) {
      if (ch == '-') ch = 'm';
      if (ch == '+') ch = '_';
    }
    detail::write_file(config.output_dir + "/checkpoints/ablate_" + tag + ".ckpt",
                       result.best_checkpoint);
    std::ostringstream log;
    for (const EpochRecord& record : result.log) log << epoch_record_line(record) << "\n";
    detail::write_file(config.output_dir + "/logs/ablate_" + tag + ".txt", log.str());

    table << variant_name(variant);
    for (std::size_t k : config.eval.ks) {
      const MetricRow& metrics = row.report.per_k.at(k);
      table << "\t" << format_number(metrics.hit) << "\t" << format_number(metrics.map);
    }
    table << "\n";
    summary.rows.push_back(std::move(row));
  }

  summary.table = table.str();
  summary.table_path = config.output_dir + "/reports/ablation.tsv";
  detail::write_file(summary.table_path, summary.table);
  return summary;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

struct InspectSummary {
  std::size_t user = 0;
  std::string attention_path;
  std::string gate_path;
};

/// Exports the session-attention matrix and the lag-swept gate for the
/// selected user's first test instance.
inline InspectSummary cmd_inspect(const RunConfig& config, std::string checkpoint_path = "") {
  auto [header, split] = detail::load_split(config);
  if (checkpoint_path.empty()) checkpoint_path = detail::default_checkpoint_path(config);
  const ParameterSet params = load_checkpoint(checkpoint_path);
  detail::check_checkpoint_matches(params, header);

  const TrainingInstance* chosen = nullptr;
  for (const TrainingInstance& inst : split.test) {
    if (inst.user_id == config.inspect.user) {
      chosen = &inst;
      break;
    }
  }
  if (!chosen)
    throw LookupError("inspect: no test instance for user " +
                      std::to_string(config.inspect.user));

  const InspectionResult inspection = export_inspection(params, *chosen);

  detail::write_snapshot(config);
  detail::ensure_dir(config.output_dir + "/inspect");
  const std::string stem = config.output_dir + "/inspect/user" +
                           std::to_string(config.inspect.user) + "_delta1-" +
                           std::to_string(params.config.C);

  InspectSummary summary;
  summary.user = config.inspect.user;
  summary.attention_path = stem + "_attention.csv";
  summary.gate_path = stem + "_gate.csv";
  std::ostringstream attention;
  write_attention_csv(attention, inspection);
  detail::write_file(summary.attention_path, attention.str());
  std::ostringstream gate;
  write_gate_csv(gate, inspection);
  detail::write_file(summary.gate_path, gate.str());
  return summary;
}

}  // namespace tlsrec
