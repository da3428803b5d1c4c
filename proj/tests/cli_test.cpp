// Tests for the run-configuration grammar and the five pipeline commands.
//
// The config tests exercise the INI parser's strictness guarantees (line
// numbers in diagnostics, duplicate detection, canonical snapshots). The
// command tests run the real pipeline — ingest, train, eval, ablate,
// inspect — against a small deterministic corpus written to a scratch
// directory, and check both the returned summaries and the artifacts left
// on disk.

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tlsrec/tlsrec.hpp"

namespace tlsrec {
namespace {

namespace fs = std::filesystem;

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(static_cast<bool>(in)) << "cannot open " << path;
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// Training log lines end with a wall-clock field; drop it so two logs can
// be compared on their deterministic content.
std::string without_timings(const std::string& log) {
  std::ostringstream os;
  for (const std::string& line : lines_of(log)) {
    const std::size_t cut = line.rfind(" wall_seconds=");
    os << (cut == std::string::npos ? line : line.substr(0, cut)) << "\n";
  }
  return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string field;
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

// ---------------------------------------------------------------------------
// Config grammar
// ---------------------------------------------------------------------------

TEST(Config, DefaultsValidate) {
  RunConfig config;
  EXPECT_NO_THROW(config.validate());
}

TEST(Config, ParsesEverySection) {
  std::istringstream in(
      "# experiment file\n"
      "[dataset]\n"
      "path = data/events.tsv\n"
      "delimiter = comma\n"
      "user_column = 2\n"
      "item_column = 0\n"
      "time_column = 1\n"
      "has_header = true\n"
      "threshold_seconds = 1800\n"
      "T = 3\n"
      "C = 16\n"
      "split_train = 0.8\n"
      "split_validation = 0.1\n"
      "split_test = 0.1\n"
      "split_seed = 9\n"
      "\n"
      "[model]\n"
      "d = 32\n"
      "h = 4\n"
      "block_count = 2\n"
      "dropout_rate = 0.1\n"
      "variant = G+A\n"
      "\n"
      "[train]\n"
      "learning_rate = 0.005\n"
      "batch_size = 64\n"
      "epochs = 30\n"
      "lambda_reg = 0.0001\n"
      "seed = 123\n"
      "early_stop_patience = 5\n"
      "\n"
      "[eval]\n"
      "ks = 5, 10, 20\n"
      "exclude_input_items = true\n"
      "\n"
      "[ablate]\n"
      "variants = full, -S, gate_average\n"
      "\n"
      "[inspect]\n"
      "user = 7\n"
      "\n"
      "[output]\n"
      "dir = runs/exp1\n");
  const RunConfig config = parse_run_config(in);
  EXPECT_EQ(config.dataset.path, "data/events.tsv");
  EXPECT_EQ(config.dataset.delimiter_char(), ',');
  EXPECT_EQ(config.dataset.user_column, 2u);
  EXPECT_TRUE(config.dataset.has_header);
  EXPECT_EQ(config.dataset.threshold_seconds, 1800);
  EXPECT_EQ(config.dataset.T, 3u);
  EXPECT_EQ(config.dataset.C, 16u);
  EXPECT_DOUBLE_EQ(config.dataset.split_ratios[0], 0.8);
  EXPECT_EQ(config.dataset.split_seed, 9u);
  EXPECT_EQ(config.model.d, 32u);
  EXPECT_EQ(config.model.h, 4u);
  EXPECT_EQ(config.model.block_count, 2u);
  EXPECT_DOUBLE_EQ(config.model.dropout_rate, 0.1);
  EXPECT_EQ(config.model.variant, Variant::gate_average);
  EXPECT_DOUBLE_EQ(config.train.learning_rate, 0.005);
  EXPECT_EQ(config.train.batch_size, 64u);
  EXPECT_EQ(config.train.epochs, 30u);
  EXPECT_EQ(config.train.seed, 123u);
  EXPECT_EQ(config.train.early_stop_patience, 5u);
  EXPECT_EQ(config.eval.ks, (std::vector<std::size_t>{5, 10, 20}));
  EXPECT_TRUE(config.eval.exclude_input_items);
  const std::vector<Variant> expected = {Variant::full, Variant::no_short_attention,
                                         Variant::gate_average};
  EXPECT_EQ(config.ablate.variants, expected);
  EXPECT_EQ(config.inspect.user, 7u);
  EXPECT_EQ(config.output_dir, "runs/exp1");
}

TEST(Config, KeysLeftOutKeepDefaults) {
  std::istringstream in("[train]\nepochs = 3\n");
  const RunConfig config = parse_run_config(in);
  EXPECT_EQ(config.train.epochs, 3u);
  EXPECT_EQ(config.train.batch_size, 128u);          // default
  EXPECT_EQ(config.dataset.threshold_seconds, 7200); // default
  EXPECT_EQ(config.eval.ks, (std::vector<std::size_t>{20, 30}));
  EXPECT_EQ(config.ablate.variants, all_variants());
}

TEST(Config, SnapshotIsCanonicalUnderReparse) {
  std::istringstream in(
      "; sections in scrambled order, extra whitespace\n"
      "[eval]\n"
      "ks =  3 ,5\n"
      "[train]\n"
      "  epochs=7\n"
      "[dataset]\n"
      "path = x.tsv\n"
      "C = 8\n");
  const RunConfig config = parse_run_config(in);
  const std::string once = config_snapshot(config);
  std::istringstream again(once);
  const std::string twice = config_snapshot(parse_run_config(again));
  EXPECT_EQ(once, twice);
  EXPECT_TRUE(contains(once, "ks = 3,5\n"));
  EXPECT_TRUE(contains(once, "epochs = 7\n"));
  EXPECT_TRUE(contains(once, "variants = full,-S,-L,-M,G+A,G+S,G+M\n"));
}

TEST(Config, UnknownKeyNamesTheLine) {
  std::istringstream in("[train]\nepochs = 3\nmomentum = 0.9\n");
  try {
    parse_run_config(in);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(contains(e.what(), "line 3")) << e.what();
    EXPECT_TRUE(contains(e.what(), "train.momentum")) << e.what();
  }
}

TEST(Config, UnknownSectionRejected) {
  std::istringstream in("[optimizer]\nwarmup = 5\n");
  try {
    parse_run_config(in);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(contains(e.what(), "unknown section [optimizer]")) << e.what();
  }
}

TEST(Config, DuplicateKeyNamesBothLines) {
  std::istringstream in("[train]\nepochs = 3\nseed = 1\nepochs = 9\n");
  try {
    parse_run_config(in);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(contains(e.what(), "line 4")) << e.what();
    EXPECT_TRUE(contains(e.what(), "duplicate key 'train.epochs'")) << e.what();
    EXPECT_TRUE(contains(e.what(), "line 2")) << e.what();
  }
}

TEST(Config, MalformedValuesRejected) {
  const char* bad[] = {
      "[train]\nepochs = three\n",          // not an integer
      "[train]\nepochs = -2\n",             // negative for unsigned
      "[train]\nlearning_rate = fast\n",    // not a number
      "[dataset]\nhas_header = yes\n",      // not a bool
      "[eval]\nks = 5, x\n",                // bad list element
      "[ablate]\nvariants = full, tiny\n",  // unknown variant
  };
  for (const char* text : bad) {
    std::istringstream in(text);
    EXPECT_THROW(parse_run_config(in), ConfigError) << text;
  }
}

TEST(Config, UnknownVariantDiagnosticListsValidNames) {
  std::istringstream in("[ablate]\nvariants = tiny\n");
  try {
    parse_run_config(in);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(contains(e.what(), "unknown variant 'tiny'")) << e.what();
    EXPECT_TRUE(contains(e.what(), "full")) << e.what();
    EXPECT_TRUE(contains(e.what(), "G+M")) << e.what();
  }
}

TEST(Config, StructuralErrorsRejected) {
  {
    std::istringstream in("epochs = 3\n");  // assignment before any section
    EXPECT_THROW(parse_run_config(in), ConfigError);
  }
  {
    std::istringstream in("[train\nepochs = 3\n");  // unterminated header
    EXPECT_THROW(parse_run_config(in), ConfigError);
  }
  {
    std::istringstream in("[train]\njust some words\n");  // no '='
    EXPECT_THROW(parse_run_config(in), ConfigError);
  }
  {
    std::istringstream in("[train]\n= 3\n");  // empty key
    EXPECT_THROW(parse_run_config(in), ConfigError);
  }
}

TEST(Config, OverrideChangesExactlyOneKey) {
  RunConfig config;
  apply_override(config, "train.epochs=17");
  EXPECT_EQ(config.train.epochs, 17u);
  apply_override(config, "eval.ks = 4,8");
  EXPECT_EQ(config.eval.ks, (std::vector<std::size_t>{4, 8}));
  apply_override(config, "output.dir=elsewhere");
  EXPECT_EQ(config.output_dir, "elsewhere");
  EXPECT_THROW(apply_override(config, "train.epochs"), ConfigError);   // no '='
  EXPECT_THROW(apply_override(config, "epochs=3"), ConfigError);       // no section
  EXPECT_THROW(apply_override(config, "train.warmup=3"), ConfigError); // unknown key
}

TEST(Config, ValidateRejectsInconsistentSettings) {
  {
    RunConfig config;
    config.dataset.split_ratios = {0.5, 0.2, 0.2};  // sums to 0.9
    EXPECT_THROW(config.validate(), ConfigError);
  }
  {
    RunConfig config;
    config.dataset.delimiter = "colon";
    EXPECT_THROW(config.validate(), ConfigError);
  }
  {
    RunConfig config;
    config.dataset.user_column = config.dataset.item_column;
    EXPECT_THROW(config.validate(), ConfigError);
  }
  {
    RunConfig config;
    config.eval.ks = {};
    EXPECT_THROW(config.validate(), ConfigError);
  }
  {
    RunConfig config;
    config.output_dir = "";
    EXPECT_THROW(config.validate(), ConfigError);
  }
  {
    RunConfig config;
    config.model.d = 9;  // not divisible by h = 2
    EXPECT_THROW(config.validate(), ConfigError);
  }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

// Scratch-directory fixture with a small deterministic corpus: 3 users,
// 6 sessions each, 2 items per session drawn from a shared 6-item pool.
// Sessions are 600 s dense internally and 9400 s apart, so a 3600 s
// threshold yields exactly 6 sessions per user; with T = 2 input sessions
// per window each user contributes 4 instances (12 total).
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    base_ = (fs::temp_directory_path() /
             (std::string("tlsrec_cli_") + info->name()))
                .string();
    fs::remove_all(base_);
    fs::create_directories(base_);
    corpus_path_ = base_ + "/events.tsv";
    write_corpus(corpus_path_, /*extra_item=*/false);
  }

  void TearDown() override { fs::remove_all(base_); }

  static void write_corpus(const std::string& path, bool extra_item) {
    const char* users[] = {"alice", "bob", "carol"};
    std::ofstream out(path, std::ios::binary);
    ASSERT_TRUE(static_cast<bool>(out));
    for (std::size_t u = 0; u < 3; ++u) {
      const std::int64_t base_time = 1000000 + static_cast<std::int64_t>(u) * 777;
      for (std::size_t s = 0; s < 6; ++s) {
        for (std::size_t k = 0; k < 2; ++k) {
          const std::size_t item = (2 * u + s + k) % 6;
          const std::int64_t t =
              base_time + static_cast<std::int64_t>(s) * 10000 +
              static_cast<std::int64_t>(k) * 600;
          out << users[u] << "\titem" << item << "\t" << t << "\n";
        }
      }
    }
    if (extra_item) out << "alice\titem6\t2000000\n";
  }

  RunConfig base_config(const std::string& run_name = "run") const {
    RunConfig config;
    config.dataset.path = corpus_path_;
    config.dataset.threshold_seconds = 3600;
    config.dataset.T = 2;
    config.dataset.C = 4;
    config.dataset.split_ratios = {0.6, 0.2, 0.2};
    config.dataset.split_seed = 11;
    config.model.d = 8;
    config.model.h = 2;
    config.model.block_count = 1;
    config.model.dropout_rate = 0.0;
    config.train.learning_rate = 0.01;
    config.train.batch_size = 4;
    config.train.epochs = 2;
    config.train.seed = 5;
    config.eval.ks = {3, 5};
    config.output_dir = base_ + "/" + run_name;
    config.validate();
    return config;
  }

  std::string base_;
  std::string corpus_path_;
};

TEST_F(CliTest, IngestReportsCorpusStatistics) {
  const RunConfig config = base_config();
  const IngestSummary summary = cmd_ingest(config);

  EXPECT_EQ(summary.header.user_count, 3u);
  EXPECT_EQ(summary.header.item_count, 6u);
  EXPECT_EQ(summary.header.sessions_per_instance, 2u);
  EXPECT_EQ(summary.header.max_session_length, 2u);
  EXPECT_EQ(summary.header.lag_bucket_count, 4u);
  EXPECT_EQ(summary.interaction_count, 36u);
  EXPECT_EQ(summary.session_count, 18u);
  EXPECT_EQ(summary.instance_count, 12u);
  EXPECT_EQ(summary.skipped_users, 0u);
  EXPECT_TRUE(contains(summary.report, "users = 3\n"));
  EXPECT_TRUE(contains(summary.report, "avg_session_length = 2\n"));
  EXPECT_TRUE(contains(summary.report, "density = 2\n"));  // 36 / (3 * 6)
  EXPECT_TRUE(contains(summary.report, "instances = 12\n"));

  // Every ingest artifact lands on disk, and the snapshot is the canonical
  // serialization of the exact config used.
  EXPECT_TRUE(fs::exists(config.output_dir + "/instances.bin"));
  EXPECT_TRUE(fs::exists(config.output_dir + "/instance_header.txt"));
  EXPECT_TRUE(fs::exists(config.output_dir + "/reports/ingest_report.txt"));
  EXPECT_EQ(read_text(config.output_dir + "/reports/ingest_report.txt"), summary.report);
  EXPECT_EQ(read_text(config.output_dir + "/config_snapshot.ini"), config_snapshot(config));

  // The header echo names the split sizes, which must add up to 12.
  const std::string echo = read_text(config.output_dir + "/instance_header.txt");
  EXPECT_TRUE(contains(echo, "users = 3\n"));
  EXPECT_TRUE(contains(echo, "split_seed = 11\n"));
}

TEST_F(CliTest, IngestMapsKeepRawTokensInFirstAppearanceOrder) {
  const RunConfig config = base_config();
  cmd_ingest(config);
  const auto users = lines_of(read_text(config.output_dir + "/user_map.tsv"));
  ASSERT_EQ(users.size(), 3u);
  EXPECT_EQ(users[0], "0\talice");
  EXPECT_EQ(users[1], "1\tbob");
  EXPECT_EQ(users[2], "2\tcarol");
  const auto items = lines_of(read_text(config.output_dir + "/item_map.tsv"));
  ASSERT_EQ(items.size(), 6u);
  EXPECT_EQ(items[0], "0\titem0");
  EXPECT_EQ(items[5], "5\titem5");
}

TEST_F(CliTest, IngestIsByteDeterministic) {
  const RunConfig config = base_config();
  cmd_ingest(config);
  const std::string first = read_text(config.output_dir + "/instances.bin");
  cmd_ingest(config);
  EXPECT_EQ(read_text(config.output_dir + "/instances.bin"), first);

  RunConfig other = base_config("run_b");
  cmd_ingest(other);
  EXPECT_EQ(read_text(other.output_dir + "/instances.bin"), first);
}

TEST_F(CliTest, TrainWithoutIngestFails) {
  const RunConfig config = base_config();
  try {
    cmd_train(config);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_TRUE(contains(e.what(), "run ingest first")) << e.what();
  }
}

TEST_F(CliTest, MismatchedDatasetSettingsRejected) {
  RunConfig config = base_config();
  cmd_ingest(config);
  {
    RunConfig bad = config;
    bad.dataset.T = 3;
    try {
      cmd_train(bad);
      FAIL() << "expected ContractError";
    } catch (const ContractError& e) {
      EXPECT_TRUE(contains(e.what(), "dataset.T=3")) << e.what();
      EXPECT_TRUE(contains(e.what(), "T=2")) << e.what();
    }
  }
  {
    RunConfig bad = config;
    bad.dataset.C = 8;
    EXPECT_THROW(cmd_train(bad), ContractError);
  }
  {
    RunConfig bad = config;
    bad.dataset.threshold_seconds = 999;
    try {
      cmd_train(bad);
      FAIL() << "expected ContractError";
    } catch (const ContractError& e) {
      EXPECT_TRUE(contains(e.what(), "threshold_seconds")) << e.what();
    }
  }
}

TEST_F(CliTest, TrainWritesCheckpointAndLog) {
  const RunConfig config = base_config();
  cmd_ingest(config);
  const TrainSummary summary = cmd_train(config);

  EXPECT_EQ(summary.epochs_run, 2u);
  EXPECT_TRUE(fs::exists(summary.checkpoint_path));
  const auto log_lines = lines_of(read_text(summary.log_path));
  ASSERT_EQ(log_lines.size(), 2u);
  for (const std::string& line : log_lines) EXPECT_EQ(line.rfind("epoch=", 0), 0u) << line;

  // The checkpoint loads back and matches the bound dimensions.
  const ParameterSet params = load_checkpoint(summary.checkpoint_path);
  EXPECT_EQ(params.user_count, 3u);
  EXPECT_EQ(params.item_count, 6u);
  EXPECT_EQ(params.config.T, 2u);
  EXPECT_EQ(params.config.m, 2u);
  EXPECT_EQ(params.config.C, 4u);
  EXPECT_EQ(params.config.variant, Variant::full);
}

TEST_F(CliTest, TrainWithZeroEpochsKeepsInitialParameters) {
  RunConfig config = base_config();
  config.train.epochs = 0;
  cmd_ingest(config);
  const TrainSummary summary = cmd_train(config);
  EXPECT_EQ(summary.epochs_run, 0u);
  EXPECT_EQ(read_text(summary.log_path), "");

  // The written checkpoint is exactly the seeded initialization.
  std::ifstream packed(config.output_dir + "/instances.bin", std::ios::binary);
  const auto [header, split] = read_instance_file(packed);
  ModelConfig model = config.model;
  model.T = header.sessions_per_instance;
  model.m = header.max_session_length;
  model.C = header.lag_bucket_count;
  const ParameterSet init =
      init_parameters(model, header.user_count, header.item_count, config.train.seed);
  std::ostringstream expected(std::ios::binary);
  save_checkpoint(expected, init);
  EXPECT_EQ(read_text(summary.checkpoint_path), expected.str());
}

TEST_F(CliTest, TrainedCheckpointRecordsVariant) {
  RunConfig config = base_config();
  config.model.variant = Variant::gate_average;
  config.train.epochs = 1;
  cmd_ingest(config);
  const TrainSummary summary = cmd_train(config);
  const ParameterSet params = load_checkpoint(summary.checkpoint_path);
  EXPECT_EQ(params.config.variant, Variant::gate_average);
}

TEST_F(CliTest, EvalReportsRequestedCutoffsDeterministically) {
  const RunConfig config = base_config();
  cmd_ingest(config);
  cmd_train(config);
  const EvalSummary first = cmd_eval(config);
  const EvalSummary second = cmd_eval(config);
  EXPECT_EQ(first.table, second.table);
  EXPECT_EQ(read_text(first.table_path), first.table);

  ASSERT_EQ(first.report.per_k.size(), 2u);
  ASSERT_TRUE(first.report.per_k.count(3));
  ASSERT_TRUE(first.report.per_k.count(5));
  EXPECT_GT(first.report.instance_count, 0u);
  for (const auto& [k, row] : first.report.per_k) {
    EXPECT_GE(row.hit, 0.0);
    EXPECT_LE(row.hit, 1.0);
    EXPECT_GE(row.map, 0.0);
  }

  // The records file has one "<metric> <k> <value>" line per metric/cutoff.
  const auto records = lines_of(read_text(first.records_path));
  ASSERT_EQ(records.size(), 6u);
  EXPECT_EQ(records[0].rfind("hit 3 ", 0), 0u) << records[0];
  EXPECT_EQ(records[3].rfind("hit 5 ", 0), 0u) << records[3];
}

TEST_F(CliTest, EvalRejectsCheckpointFromDifferentUniverse) {
  const RunConfig config = base_config();
  cmd_ingest(config);
  cmd_train(config);

  // Re-ingest after the corpus gained a 7th item: the stored checkpoint
  // no longer matches the instance file and must be refused.
  write_corpus(corpus_path_, /*extra_item=*/true);
  cmd_ingest(config);
  try {
    cmd_eval(config);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_TRUE(contains(e.what(), "does not match instance file")) << e.what();
    EXPECT_TRUE(contains(e.what(), "items=7")) << e.what();
  }
}

TEST_F(CliTest, AblateWritesOneRowPerVariant) {
  RunConfig config = base_config();
  config.ablate.variants = {Variant::full, Variant::single_head};
  cmd_ingest(config);
  const AblateSummary summary = cmd_ablate(config);

  ASSERT_EQ(summary.rows.size(), 2u);
  EXPECT_EQ(summary.rows[0].variant, Variant::full);
  EXPECT_EQ(summary.rows[1].variant, Variant::single_head);

  const auto table = lines_of(summary.table);
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[0], "variant\thit@3\tmap@3\thit@5\tmap@5");
  EXPECT_EQ(table[1].rfind("full\t", 0), 0u) << table[1];
  EXPECT_EQ(table[2].rfind("-M\t", 0), 0u) << table[2];
  EXPECT_EQ(read_text(summary.table_path), summary.table);

  // Variant tags are spelled out in file names ('-' and '+' are awkward).
  EXPECT_TRUE(fs::exists(config.output_dir + "/checkpoints/ablate_full.ckpt"));
  EXPECT_TRUE(fs::exists(config.output_dir + "/checkpoints/ablate_mM.ckpt"));
  EXPECT_TRUE(fs::exists(config.output_dir + "/logs/ablate_full.txt"));
  EXPECT_TRUE(fs::exists(config.output_dir + "/logs/ablate_mM.txt"));

  // The saved variant checkpoints record their architecture.
  const ParameterSet single =
      load_checkpoint(config.output_dir + "/checkpoints/ablate_mM.ckpt");
  EXPECT_EQ(single.config.variant, Variant::single_head);
}

TEST_F(CliTest, AblateCoversEveryVariant) {
  RunConfig config = base_config();
  config.train.epochs = 1;
  config.eval.ks = {3};
  cmd_ingest(config);
  const AblateSummary summary = cmd_ablate(config);
  ASSERT_EQ(summary.rows.size(), all_variants().size());
  const auto table = lines_of(summary.table);
  ASSERT_EQ(table.size(), 1u + all_variants().size());
  for (std::size_t i = 1; i < table.size(); ++i) {
    // Each row is variant + (hit, map) per cutoff, tab-separated.
    std::size_t tabs = 0;
    for (char ch : table[i]) tabs += (ch == '\t');
    EXPECT_EQ(tabs, 2u) << table[i];
  }
}

// The single-head variant must behave exactly like the full model built
// with one head: parameter shapes ignore the head count, so under the same
// seed both runs see identical initial weights, batches, and negatives.
TEST_F(CliTest, SingleHeadVariantMatchesFullModelWithOneHead) {
  RunConfig full = base_config("run_full");
  full.model.h = 1;
  cmd_ingest(full);
  const TrainSummary full_train = cmd_train(full);
  const EvalSummary full_eval = cmd_eval(full);

  RunConfig single = base_config("run_single");
  single.model.h = 2;
  single.model.variant = Variant::single_head;
  cmd_ingest(single);
  const TrainSummary single_train = cmd_train(single);
  const EvalSummary single_eval = cmd_eval(single);

  EXPECT_EQ(without_timings(read_text(full_train.log_path)),
            without_timings(read_text(single_train.log_path)));
  EXPECT_EQ(full_eval.table, single_eval.table);
}

TEST_F(CliTest, InspectExportsAttentionAndGateSweep) {
  const RunConfig config = base_config();
  cmd_ingest(config);
  cmd_train(config);

  // Pick a user that actually has a test instance.
  std::ifstream packed(config.output_dir + "/instances.bin", std::ios::binary);
  const auto [header, split] = read_instance_file(packed);
  ASSERT_FALSE(split.test.empty());
  RunConfig chosen = config;
  chosen.inspect.user = split.test.front().user_id;

  const InspectSummary summary = cmd_inspect(chosen);
  EXPECT_EQ(summary.user, chosen.inspect.user);

  // Attention CSV: header plus T rows; row i holds softmax weights over
  // sessions 1..i and exact zeros afterwards (causal masking).
  const auto attention = lines_of(read_text(summary.attention_path));
  ASSERT_EQ(attention.size(), 1u + 2u);
  EXPECT_EQ(attention[0], "query,session1,session2");
  for (std::size_t i = 1; i < attention.size(); ++i) {
    const auto fields = split_csv(attention[i]);
    ASSERT_EQ(fields.size(), 3u);
    EXPECT_EQ(fields[0], std::to_string(i));
    double sum = 0.0;
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const double a = std::stod(fields[j]);
      if (j > i) EXPECT_EQ(a, 0.0) << "row " << i << " col " << j;
      sum += a;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }

  // Gate CSV: one row per lag bucket; the mean column is the row mean and
  // every gate value is a proper sigmoid output.
  const auto gate = lines_of(read_text(summary.gate_path));
  ASSERT_EQ(gate.size(), 1u + 4u);
  EXPECT_EQ(gate[0].rfind("delta,g1,", 0), 0u);
  for (std::size_t i = 1; i < gate.size(); ++i) {
    const auto fields = split_csv(gate[i]);
    ASSERT_EQ(fields.size(), 1u + 8u + 1u);
    EXPECT_EQ(fields[0], std::to_string(i));
    double sum = 0.0;
    for (std::size_t j = 1; j <= 8; ++j) {
      const double g = std::stod(fields[j]);
      EXPECT_GT(g, 0.0);
      EXPECT_LT(g, 1.0);
      sum += g;
    }
    EXPECT_NEAR(std::stod(fields.back()), sum / 8.0, 1e-12);
  }
}

TEST_F(CliTest, InspectFailsForUserWithoutTestInstances) {
  RunConfig config = base_config();
  config.inspect.user = 999;
  cmd_ingest(config);
  cmd_train(config);
  try {
    cmd_inspect(config);
    FAIL() << "expected LookupError";
  } catch (const LookupError& e) {
    EXPECT_TRUE(contains(e.what(), "no test instance for user 999")) << e.what();
  }
}

TEST_F(CliTest, InspectRejectsVariantWithoutSessionAttention) {
  RunConfig config = base_config();
  config.model.variant = Variant::no_long_attention;
  config.train.epochs = 1;
  cmd_ingest(config);
  cmd_train(config);
  std::ifstream packed(config.output_dir + "/instances.bin", std::ios::binary);
  const auto [header, split] = read_instance_file(packed);
  ASSERT_FALSE(split.test.empty());
  config.inspect.user = split.test.front().user_id;
  EXPECT_THROW(cmd_inspect(config), ContractError);
}

TEST_F(CliTest, InspectShowsConstantGateForGatelessVariant) {
  RunConfig config = base_config();
  config.model.variant = Variant::gate_average;
  config.train.epochs = 1;
  cmd_ingest(config);
  cmd_train(config);
  std::ifstream packed(config.output_dir + "/instances.bin", std::ios::binary);
  const auto [header, split] = read_instance_file(packed);
  ASSERT_FALSE(split.test.empty());
  config.inspect.user = split.test.front().user_id;

  const InspectSummary summary = cmd_inspect(config);
  const auto gate = lines_of(read_text(summary.gate_path));
  ASSERT_EQ(gate.size(), 1u + 4u);
  for (std::size_t i = 1; i < gate.size(); ++i) {
    const auto fields = split_csv(gate[i]);
    for (std::size_t j = 1; j < fields.size(); ++j)
      EXPECT_EQ(std::stod(fields[j]), 0.5) << gate[i];
  }
}

TEST_F(CliTest, EvalAcceptsExplicitCheckpointPath) {
  RunConfig config = base_config();
  config.ablate.variants = {Variant::gate_average};
  cmd_ingest(config);
  cmd_ablate(config);
  const std::string path = config.output_dir + "/checkpoints/ablate_G_A.ckpt";
  ASSERT_TRUE(fs::exists(path));
  const EvalSummary summary = cmd_eval(config, path);
  EXPECT_GT(summary.report.instance_count, 0u);
}

}  // namespace
}  // namespace tlsrec
