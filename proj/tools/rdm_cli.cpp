#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rdm/errors.hpp"
#include "rdm/runner.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::string data_dir;
  std::int64_t seed = -1;
  double lambda = -1.0;

  std::string data_or_default() const { return data_dir.empty() ? out_dir + "/data" : data_dir; }

  rdm::config::AppConfig load() const {
    rdm::config::AppConfig cfg = rdm::config::load_config_file(config_path);
    if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
    if (lambda >= 0.0) cfg.train.objective.lambda = lambda;
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonArgs& args, bool need_lambda = true) {
  cmd->add_option("--config", args.config_path, "JSON config file")->required();
  cmd->add_option("--out", args.out_dir, "output root directory");
  cmd->add_option("--data", args.data_dir, "dataset directory (default: <out>/data)");
  cmd->add_option("--seed", args.seed, "override train.seed");
  if (need_lambda) cmd->add_option("--lambda", args.lambda, "override objective.lambda");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk distribution matching for domain generalisation"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, sweep_args, report_args;

  CLI::App* gen = app.add_subcommand("generate", "generate environment datasets");
  add_common(gen, gen_args, false);

  CLI::App* train = app.add_subcommand("train", "train one run");
  bool resume = false;
  add_common(train, train_args);
  train->add_flag("--resume", resume, "continue from an existing checkpoint");

  CLI::App* eval = app.add_subcommand("evaluate", "evaluate a checkpoint");
  std::string checkpoint;
  add_common(eval, eval_args, false);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint (.rdmp)")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "run a seed x lambda grid");
  std::vector<std::uint64_t> seeds;
  std::vector<double> lambdas;
  int parallel = 1;
  add_common(sweep, sweep_args, false);
  sweep->add_option("--seeds", seeds, "seed list")->delimiter(',')->required();
  sweep->add_option("--lambdas", lambdas, "lambda grid")->delimiter(',')->required();
  sweep->add_option("--parallel", parallel, "concurrent runs (capped by RDM_THREADS)");

  CLI::App* report = app.add_subcommand("report", "histogram/table exports");
  CLI::App* hist = report->add_subcommand("hist", "risk histogram + KDE export");
  std::string hist_checkpoint;
  int hist_bins = 30;
  add_common(hist, report_args, false);
  hist->add_option("--checkpoint", hist_checkpoint, "model checkpoint (.rdmp)")->required();
  hist->add_option("--bins", hist_bins, "histogram bin count");
  CLI::App* table = report->add_subcommand("table", "comparison table over run summaries");
  std::string runs_root, table_out = "out";
  table->add_option("--runs", runs_root, "directory containing run directories")->required();
  table->add_option("--out", table_out, "output directory");
  report->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto paths = rdm::cli::cmd_generate(gen_args.load(), gen_args.data_or_default());
      for (const auto& p : paths) std::cout << p << "\n";
      return 0;
    }
    if (train->parsed()) {
      auto art = rdm::cli::cmd_train(train_args.load(), train_args.out_dir, train_args.data_or_default(), resume);
      std::cout << "run dir: " << art.paths.run_dir << "\n"
                << "best step: " << art.result.best_step << "\n"
                << "test accuracy: " << art.result.test_accuracy << "\n";
      if (art.result.diverged) {
        std::cerr << "training diverged at step " << art.result.completed_steps
                  << "; last-good checkpoint written\n";
        return 4;
      }
      return 0;
    }
    if (eval->parsed()) {
      std::cout << rdm::cli::cmd_evaluate(eval_args.load(), checkpoint, eval_args.data_or_default());
      return 0;
    }
    if (sweep->parsed()) {
      rdm::cli::SweepSpec spec{seeds, lambdas, parallel};
      auto result = rdm::cli::cmd_sweep(sweep_args.load(), sweep_args.out_dir, sweep_args.data_or_default(), spec);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << rdm::reporting::table_text(result.table);
      return 0;
    }
    if (hist->parsed()) {
      rdm::reporting::HistogramSpec spec;
      spec.bins = hist_bins;
      auto paths = rdm::cli::cmd_report_hist(report_args.load(), hist_checkpoint, report_args.data_or_default(),
                                             report_args.out_dir, spec);
      std::cout << paths.hist_csv << "\n" << paths.hist_json << "\n";
      return 0;
    }
    if (table->parsed()) {
      auto result = rdm::cli::cmd_report_table(runs_root, table_out);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << rdm::reporting::table_text(result.table);
      return 0;
    }
  } catch (const rdm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rdm::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const rdm::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
