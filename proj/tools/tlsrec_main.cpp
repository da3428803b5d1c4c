// tlsrec command-line interface.
//
// One declarative config file drives five subcommands:
//
//   tlsrec ingest  --config run.ini [--set section.key=value ...]
//   tlsrec train   --config run.ini [--set ...]
//   tlsrec eval    --config run.ini [--checkpoint path] [--set ...]
//   tlsrec ablate  --config run.ini [--set ...]
//   tlsrec inspect --config run.ini [--checkpoint path] [--user id] [--set ...]
//
// Exit code 0 on success. On failure, one machine-parsable line goes to
// stderr — "<error-class>: <message>" — and the exit code is nonzero.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tlsrec/tlsrec.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Path to the run config (INI)")
      ->required();
  cmd->add_option("--set", args.overrides,
                  "Override a config value as section.key=value (repeatable)");
}

tlsrec::RunConfig resolve_config(const CommonArgs& args) {
  tlsrec::RunConfig config = tlsrec::load_run_config(args.config_path);
  for (const std::string& spec : args.overrides) tlsrec::apply_override(config, spec);
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tlsrec: hierarchical self-attention recommender with a time-gated fusion"};
  app.require_subcommand(1);

  CommonArgs ingest_args, train_args, eval_args, ablate_args, inspect_args;
  std::string eval_checkpoint, inspect_checkpoint;
  std::size_t inspect_user = 0;
  bool inspect_user_set = false;

  CLI::App* ingest = app.add_subcommand("ingest", "Parse a raw log into packed instances");
  add_common(ingest, ingest_args);

  CLI::App* train = app.add_subcommand("train", "Train on packed instances");
  add_common(train, train_args);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_checkpoint,
                   "Checkpoint to evaluate (default: <output>/checkpoints/best.ckpt)");

  CLI::App* ablate = app.add_subcommand("ablate", "Train and evaluate the model variants");
  add_common(ablate, ablate_args);

  CLI::App* inspect =
      app.add_subcommand("inspect", "Export attention and gate CSVs for one user");
  add_common(inspect, inspect_args);
  inspect->add_option("--checkpoint", inspect_checkpoint,
                      "Checkpoint to inspect (default: <output>/checkpoints/best.ckpt)");
  inspect->add_option("--user", inspect_user, "Dense user id to export")
      ->each([&](const std::string&) { inspect_user_set = true; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      const tlsrec::RunConfig config = resolve_config(ingest_args);
      const tlsrec::IngestSummary summary = tlsrec::cmd_ingest(config);
      std::cout << summary.report;
      std::cout << "wrote " << summary.instances_path << "\n";
    } else if (train->parsed()) {
      const tlsrec::RunConfig config = resolve_config(train_args);
      const tlsrec::TrainSummary summary = tlsrec::cmd_train(config);
      std::cout << "epochs_run = " << summary.epochs_run << "\n";
      std::cout << "best_epoch = " << summary.best_epoch << "\n";
      std::cout << "best_val_hit20 = " << tlsrec::format_number(summary.best_hit) << "\n";
      std::cout << "best_val_map20 = " << tlsrec::format_number(summary.best_map) << "\n";
      std::cout << "wrote " << summary.checkpoint_path << "\n";
      std::cout << "wrote " << summary.log_path << "\n";
    } else if (eval->parsed()) {
      const tlsrec::RunConfig config = resolve_config(eval_args);
      const tlsrec::EvalSummary summary = tlsrec::cmd_eval(config, eval_checkpoint);
      std::cout << summary.table;
      std::cout << "wrote " << summary.table_path << "\n";
      std::cout << "wrote " << summary.records_path << "\n";
    } else if (ablate->parsed()) {
      const tlsrec::RunConfig config = resolve_config(ablate_args);
      const tlsrec::AblateSummary summary = tlsrec::cmd_ablate(config);
      std::cout << summary.table;
      std::cout << "wrote " << summary.table_path << "\n";
    } else if (inspect->parsed()) {
      tlsrec::RunConfig config = resolve_config(inspect_args);
      if (inspect_user_set) config.inspect.user = inspect_user;
      const tlsrec::InspectSummary summary = tlsrec::cmd_inspect(config, inspect_checkpoint);
      std::cout << "wrote " << summary.attention_path << "\n";
      std::cout << "wrote " << summary.gate_path << "\n";
    }
  } catch (const tlsrec::Error& e) {
    std::cerr << e.error_class() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal-error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
