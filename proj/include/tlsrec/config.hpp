#pragma once

// Run configuration: a flat INI-style file with [section] headers and
// `key = value` lines drives every CLI command, so one file is the single
// source of truth for a whole experiment. Parsing is strict — unknown
// sections or keys, malformed values, and duplicate assignments are
// config errors that name the offending line — and a parsed config can be
// re-serialized as a canonical snapshot that is byte-identical across runs.
//
// Grammar (documented here as the reference):
//   - Lines are independent; there are no continuations.
//   - Blank lines are ignored. Lines whose first non-space character is
//     '#' or ';' are comments. Inline comments are not supported: '#'
//     inside a value is part of the value.
//   - `[name]` opens a section; `key = value` assigns inside it. Keys and
//     values are trimmed of surrounding whitespace.
//   - Sections and keys may appear in any order; each key at most once.

#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tlsrec/dataset.hpp"
#include "tlsrec/error.hpp"
#include "tlsrec/evaluation.hpp"
#include "tlsrec/model.hpp"
#include "tlsrec/training.hpp"

namespace tlsrec {

struct DatasetConfig {
  std::string path;
  std::string delimiter = "tab";  // tab | comma | semicolon | space | pipe
  std::size_t user_column = 0;
  std::size_t item_column = 1;
  std::size_t time_column = 2;
  bool has_header = false;
  std::int64_t threshold_seconds = 7200;
  std::size_t T = 4;    // input sessions per instance
  std::size_t C = 128;  // time-lag buckets
  std::array<double, 3> split_ratios = {0.7, 0.1, 0.2};
  std::uint64_t split_seed = 42;

  char delimiter_char() const {
    if (delimiter == "tab") return '\t';
    if (delimiter == "comma") return ',';
    if (delimiter == "semicolon") return ';';
    if (delimiter == "space") return ' ';
    if (delimiter == "pipe") return '|';
    throw ConfigError("dataset: unknown delimiter '" + delimiter +
                      "' (expected tab, comma, semicolon, space, or pipe)");
  }

  FormatDescriptor format() const {
    FormatDescriptor fmt;
    fmt.delimiter = delimiter_char();
    fmt.user_column = user_column;
    fmt.item_column = item_column;
    fmt.time_column = time_column;
    fmt.has_header = has_header;
    return fmt;
  }

  void validate() const {
    if (threshold_seconds <= 0) throw ConfigError("dataset: threshold_seconds must be > 0");
    if (T == 0) throw ConfigError("dataset: T must be >= 1");
    if (C == 0) throw ConfigError("dataset: C must be >= 1");
    delimiter_char();  // rejects unknown names
    if (user_column == item_column || user_column == time_column ||
        item_column == time_column)
      throw ConfigError("dataset: user/item/time columns must be distinct");
    double total = 0.0;
    for (double r : split_ratios) {
      if (r < 0.0) throw ConfigError("dataset: split ratios must be non-negative");
      total += r;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw ConfigError("dataset: split ratios must sum to 1");
  }
};

struct EvalConfig {
  std::vector<std::size_t> ks = {20, 30};
  bool exclude_input_items = false;

  void validate() const {
    if (ks.empty()) throw ConfigError("eval: ks must name at least one cutoff");
    for (std::size_t k : ks)
      if (k == 0) throw ConfigError("eval: cutoffs must be >= 1");
  }
};

struct AblateConfig {
  std::vector<Variant> variants = all_variants();
};

struct InspectConfig {
  std::size_t user = 0;  // dense user id whose first test instance is exported
};

struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;  // T, m, C are bound from the instance file at command time
  TrainConfig train;
  EvalConfig eval;
  AblateConfig ablate;
  InspectConfig inspect;
  std::string output_dir = "runs/default";

  void validate() const {
    dataset.validate();
    train.validate();
    eval.validate();
    if (output_dir.empty()) throw ConfigError("output: dir must not be empty");
    if (ablate.variants.empty())
      throw ConfigError("ablate: variants must name at least one variant");
    // The model's T/m/C come from the data; validate the standalone fields
    // now so a bad width or dropout fails before any computation starts.
    ModelConfig probe = model;
    probe.T = dataset.T;
    probe.C = dataset.C;
    probe.m = 1;
    probe.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string token;
  std::istringstream in(value);
  while (std::getline(in, token, ',')) {
    token = trim(token);
    if (!token.empty()) out.push_back(token);
  }
  return out;
}

/// Context string for value-parse failures: "key 'train.epochs'".
inline std::string key_context(const std::string& section, const std::string& key) {
  return "key '" + section + "." + key + "'";
}

inline std::uint64_t parse_u64(const std::string& value, const std::string& ctx) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(ctx + ": expected a non-negative integer, got '" + value + "'");
  }
}

inline std::int64_t parse_i64(const std::string& value, const std::string& ctx) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(ctx + ": expected an integer, got '" + value + "'");
  }
}

inline double parse_f64(const std::string& value, const std::string& ctx) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(ctx + ": expected a number, got '" + value + "'");
  }
}

inline bool parse_bool(const std::string& value, const std::string& ctx) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError(ctx + ": expected true or false, got '" + value + "'");
}

/// Routes one `section.key = value` assignment into the config. Throws
/// ConfigError for unknown sections or keys; the caller adds line context.
inline void assign(RunConfig& config, const std::string& section, const std::string& key,
                   const std::string& value) {
  const std::string ctx = key_context(section, key);
  if (section == "dataset") {
    auto& d = config.dataset;
    if (key == "path") d.path = value;
    else if (key == "delimiter") d.delimiter = value;
    else if (key == "user_column") d.user_column = parse_u64(value, ctx);
    else if (key == "item_column") d.item_column = parse_u64(value, ctx);
    else if (key == "time_column") d.time_column = parse_u64(value, ctx);
    else if (key == "has_header") d.has_header = parse_bool(value, ctx);
    else if (key == "threshold_seconds") d.threshold_seconds = parse_i64(value, ctx);
    else if (key == "T") d.T = parse_u64(value, ctx);
    else if (key == "C") d.C = parse_u64(value, ctx);
    else if (key == "split_train") d.split_ratios[0] = parse_f64(value, ctx);
    else if (key == "split_validation") d.split_ratios[1] = parse_f64(value, ctx);
    else if (key == "split_test") d.split_ratios[2] = parse_f64(value, ctx);
    else if (key == "split_seed") d.split_seed = parse_u64(value, ctx);
    else throw ConfigError("unknown " + ctx);
  } else if (section == "model") {
    auto& m = config.model;
    if (key == "d") m.d = parse_u64(value, ctx);
    else if (key == "h") m.h = parse_u64(value, ctx);
    else if (key == "block_count") m.block_count = parse_u64(value, ctx);
    else if (key == "dropout_rate") m.dropout_rate = parse_f64(value, ctx);
    else if (key == "norm_epsilon") m.norm_epsilon = parse_f64(value, ctx);
    else if (key == "variant") m.variant = parse_variant(value);
    else throw ConfigError("unknown " + ctx);
  } else if (section == "train") {
    auto& t = config.train;
    if (key == "learning_rate") t.learning_rate = parse_f64(value, ctx);
    else if (key == "batch_size") t.batch_size = parse_u64(value, ctx);
    else if (key == "epochs") t.epochs = parse_u64(value, ctx);
    else if (key == "lambda_reg") t.lambda_reg = parse_f64(value, ctx);
    else if (key == "adam_beta1") t.adam_beta1 = parse_f64(value, ctx);
    else if (key == "adam_beta2") t.adam_beta2 = parse_f64(value, ctx);
    else if (key == "adam_epsilon") t.adam_epsilon = parse_f64(value, ctx);
    else if (key == "seed") t.seed = parse_u64(value, ctx);
    else if (key == "early_stop_patience") t.early_stop_patience = parse_u64(value, ctx);
    else throw ConfigError("unknown " + ctx);
  } else if (section == "eval") {
    auto& e = config.eval;
    if (key == "ks") {
      e.ks.clear();
      for (const std::string& token : split_list(value))
        e.ks.push_back(parse_u64(token, ctx));
    } else if (key == "exclude_input_items") {
      e.exclude_input_items = parse_bool(value, ctx);
    } else {
      throw ConfigError("unknown " + ctx);
    }
  } else if (section == "ablate") {
    if (key == "variants") {
      config.ablate.variants.clear();
      for (const std::string& token : split_list(value)) {
        try {
          config.ablate.variants.push_back(parse_variant(token));
        } catch (const ConfigError&) {
          std::string valid;
          for (Variant v : all_variants()) {
            if (!valid.empty()) valid += ", ";
            valid += variant_name(v);
          }
          throw ConfigError(ctx + ": unknown variant '" + token + "' (valid: " + valid + ")");
        }
      }
    } else {
      throw ConfigError("unknown " + ctx);
    }
  } else if (section == "inspect") {
    if (key == "user") config.inspect.user = parse_u64(value, ctx);
    else throw ConfigError("unknown " + ctx);
  } else if (section == "output") {
    if (key == "dir") config.output_dir = value;
    else throw ConfigError("unknown " + ctx);
  } else {
    throw ConfigError("unknown section [" + section + "]");
  }
}

}  // namespace detail

/// Parses a config stream. Defaults apply to every key the file leaves out.
inline RunConfig parse_run_config(std::istream& in) {
  RunConfig config;
  std::string line, section;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;  // "section.key" -> first line
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = detail::trim(line);
    if (text.empty() || text[0] == '#' || text[0] == ';') continue;
    if (text.front() == '[') {
      if (text.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": section header missing ']'");
      section = detail::trim(text.substr(1, text.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
      continue;
    }
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + text + "'");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": assignment before any [section]");
    const std::string key = detail::trim(text.substr(0, eq));
    const std::string value = detail::trim(text.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    const std::string qualified = section + "." + key;
    auto [it, inserted] = seen.emplace(qualified, line_no);
    if (!inserted)
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" +
                        qualified + "' (first set on line " + std::to_string(it->second) + ")");
    try {
      detail::assign(config, section, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "' for reading");
  return parse_run_config(in);
}

/// Applies one `section.key=value` override (the CLI's --set flag).
inline void apply_override(RunConfig& config, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + spec + "': expected section.key=value");
  const std::string path = detail::trim(spec.substr(0, eq));
  const std::string value = detail::trim(spec.substr(eq + 1));
  const std::size_t dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == path.size())
    throw ConfigError("override '" + spec + "': expected section.key=value");
  detail::assign(config, path.substr(0, dot), path.substr(dot + 1), value);
}

/// Canonical serialization: every key in a fixed order, numbers rendered
/// with round-trip precision. Equal configs produce identical bytes, which
/// is what makes the on-disk config snapshot a reproducibility receipt.
inline std::string config_snapshot(const RunConfig& config) {
  std::ostringstream os;
  const auto& d = config.dataset;
  os << "[dataset]\n";
  os << "path = " << d.path << "\n";
  os << "delimiter = " << d.delimiter << "\n";
  os << "user_column = " << d.user_column << "\n";
  os << "item_column = " << d.item_column << "\n";
  os << "time_column = " << d.time_column << "\n";
  os << "has_header = " << (d.has_header ? "true" : "false") << "\n";
  os << "threshold_seconds = " << d.threshold_seconds << "\n";
  os << "T = " << d.T << "\n";
  os << "C = " << d.C << "\n";
  os << "split_train = " << format_number(d.split_ratios[0]) << "\n";
  os << "split_validation = " << format_number(d.split_ratios[1]) << "\n";
  os << "split_test = " << format_number(d.split_ratios[2]) << "\n";
  os << "split_seed = " << d.split_seed << "\n";
  os << "\n[model]\n";
  os << "d = " << config.model.d << "\n";
  os << "h = " << config.model.h << "\n";
  os << "block_count = " << config.model.block_count << "\n";
  os << "dropout_rate = " << format_number(config.model.dropout_rate) << "\n";
  os << "norm_epsilon = " << format_number(config.model.norm_epsilon) << "\n";
  os << "variant = " << variant_name(config.model.variant) << "\n";
  os << "\n[train]\n";
  os << "learning_rate = " << format_number(config.train.learning_rate) << "\n";
  os << "batch_size = " << config.train.batch_size << "\n";
  os << "epochs = " << config.train.epochs << "\n";
  os << "lambda_reg = " << format_number(config.train.lambda_reg) << "\n";
  os << "adam_beta1 = " << format_number(config.train.adam_beta1) << "\n";
  os << "adam_beta2 = " << format_number(config.train.adam_beta2) << "\n";
  os << "adam_epsilon = " << format_number(config.train.adam_epsilon) << "\n";
  os << "seed = " << config.train.seed << "\n";
  os << "early_stop_patience = " << config.train.early_stop_patience << "\n";
  os << "\n[eval]\n";
  os << "ks = ";
  for (std::size_t i = 0; i < config.eval.ks.size(); ++i)
    os << (i ? "," : "") << config.eval.ks[i];
  os << "\n";
  os << "exclude_input_items = " << (config.eval.exclude_input_items ? "true" : "false")
     << "\n";
  os << "\n[ablate]\n";
  os << "variants = ";
  for (std::size_t i = 0; i < config.ablate.variants.size(); ++i)
    os << (i ? "," : "") << variant_name(config.ablate.variants[i]);
  os << "\n";
  os << "\n[inspect]\n";
  os << "user = " << config.inspect.user << "\n";
  os << "\n[output]\n";
  os << "dir = " << config.output_dir << "\n";
  return os.str();
}

}  // namespace tlsrec
