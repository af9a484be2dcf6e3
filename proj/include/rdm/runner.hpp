#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rdm/config.hpp"
#include "rdm/reporting.hpp"
#include "rdm/trainer.hpp"

namespace rdm::cli {

// Run directory layout: <out_root>/<config-hash>-s<seed>-l<lambda>/ with
// metrics.csv, summary.json, config.json, model.rdmp (selected checkpoint)
// and last.rdmp (final parameters, used by --resume).
struct RunPaths {
  std::string run_dir;
  std::string metrics_csv;
  std::string summary_json;
  std::string config_echo;
  std::string best_checkpoint;
  std::string last_checkpoint;
};

RunPaths run_paths(const std::string& out_root, const config::AppConfig& cfg);

// Expected dataset file paths for a config: env<k>.rdmd per training
// environment, test.rdmd, and manifest.json.
std::vector<std::string> dataset_paths(const std::string& data_dir, const config::AppConfig& cfg);

// Generates every environment, writes RDMD containers plus manifest.json.
// Returns the written paths.
std::vector<std::string> cmd_generate(const config::AppConfig& cfg, const std::string& data_dir);

// Loads previously generated data (DataError listing expected paths when
// missing or stale), trains, writes artifacts. With resume=true an existing
// run directory continues from its last checkpoint and step counter.
struct TrainArtifacts {
  RunPaths paths;
  trainer::TrainResult result;
};
TrainArtifacts cmd_train(const config::AppConfig& cfg, const std::string& out_root, const std::string& data_dir,
                         bool resume = false);

// Accuracy/mean-risk of a checkpoint on every split; returns the JSON text
// it prints.
std::string cmd_evaluate(const config::AppConfig& cfg, const std::string& checkpoint_path,
                         const std::string& data_dir);

struct SweepSpec {
  std::vector<std::uint64_t> seeds;
  std::vector<double> lambdas;
  int parallel = 1;  // capped by RDM_THREADS
};

struct SweepResult {
  std::vector<reporting::TableRow> table;
  std::vector<std::string> warnings;
  std::string table_csv_path;
  std::string table_text_path;
};

// Sequential (or optionally parallel) runs over the seed x lambda grid; a
// failed cell is recorded and the sweep continues.
SweepResult cmd_sweep(const config::AppConfig& cfg, const std::string& out_root, const std::string& data_dir,
                      const SweepSpec& sweep);

// Risk-distribution histogram + KDE export for a checkpoint over all
// domains (train, validation and test splits pooled per domain).
struct ReportPaths {
  std::string hist_csv;
  std::string hist_json;
};
ReportPaths cmd_report_hist(const config::AppConfig& cfg, const std::string& checkpoint_path,
                            const std::string& data_dir, const std::string& out_dir,
                            const reporting::HistogramSpec& spec);

// Comparison table over all run summaries found one level under runs_root.
SweepResult cmd_report_table(const std::string& runs_root, const std::string& out_dir);

// Effective worker count: min(requested, RDM_THREADS env if set).
int effective_parallelism(int requested);

}  // namespace rdm::cli
