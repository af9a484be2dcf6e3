#include "rdm/runner.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "rdm/errors.hpp"
#include "rdm/io_util.hpp"
#include "rdm/kernel.hpp"
#include "rdm/model.hpp"

namespace rdm::cli {

namespace fs = std::filesystem;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << content;
  if (!out) throw DataError("write failed for " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

nlohmann::json summary_json(const config::AppConfig& cfg, const trainer::TrainResult& r) {
  nlohmann::json j;
  j["config"] = config::to_json(cfg);
  j["objective"] = objectives::to_string(cfg.train.objective.kind);
  j["lambda"] = cfg.train.objective.lambda;
  j["seed"] = cfg.train.seed;
  j["best_step"] = r.best_step;
  j["best_selection_accuracy"] = r.best_selection_accuracy;
  j["completed_steps"] = r.completed_steps;
  j["diverged"] = r.diverged;
  j["train_accuracy"] = r.train_accuracy;
  j["val_accuracy"] = r.val_accuracy;
  j["test_val_accuracy"] = r.test_val_accuracy;
  j["test_accuracy"] = r.test_accuracy;
  j["wall_clock_seconds"] = r.metrics.wall_clock_seconds;
  return j;
}

// Loads the generated environments for cfg, validating the manifest hash.
trainer::ExperimentData load_data(const config::AppConfig& cfg, const std::string& data_dir) {
  std::vector<std::string> expected = dataset_paths(data_dir, cfg);
  std::vector<std::string> missing;
  for (const std::string& p : expected) {
    if (!fs::exists(p)) missing.push_back(p);
  }
  if (!missing.empty()) {
    std::string msg = "missing data files (run 'generate' first):";
    for (const std::string& p : missing) msg += "\n  " + p;
    throw DataError(msg);
  }

  nlohmann::json manifest = nlohmann::json::parse(read_file(expected.back()));
  std::string want = config::dataset_hash(cfg.dataset);
  if (manifest.value("dataset_hash", "") != want) {
    throw DataError("data manifest hash mismatch in " + expected.back() + " (expected " + want +
                    "); regenerate the datasets");
  }

  trainer::ExperimentData out;
  for (std::size_t i = 0; i < cfg.dataset.train_envs.size(); ++i) {
    data::DomainDataset full = data::read_rdmd(expected[i]);
    full.domain_id = static_cast<int>(i);
    full.env = {cfg.dataset.train_envs[i].agreement, cfg.dataset.train_envs[i].label_noise, full.n(),
                cfg.dataset.env_seed(i)};
    auto [head, tail] = data::split_head(full, cfg.dataset.train_envs[i].n);
    out.train.push_back(std::move(head));
    out.train_val.push_back(std::move(tail));
  }
  std::size_t m = cfg.dataset.train_envs.size();
  data::DomainDataset full = data::read_rdmd(expected[m]);
  full.domain_id = static_cast<int>(m);
  full.env = {cfg.dataset.test_env.agreement, cfg.dataset.test_env.label_noise, full.n(), cfg.dataset.env_seed(m)};
  auto [head, tail] = data::split_head(full, cfg.dataset.test_env.n);
  out.test = std::move(head);
  out.test_val = std::move(tail);
  return out;
}

}  // namespace

int effective_parallelism(int requested) {
  int k = std::max(1, requested);
  if (const char* env = std::getenv("RDM_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) k = std::min(k, cap);
  }
  return k;
}

RunPaths run_paths(const std::string& out_root, const config::AppConfig& cfg) {
  RunPaths p;
  p.run_dir = out_root + "/" + config::config_hash(cfg) + "-s" + std::to_string(cfg.train.seed) + "-l" +
              fmt_double(cfg.train.objective.lambda);
  p.metrics_csv = p.run_dir + "/metrics.csv";
  p.summary_json = p.run_dir + "/summary.json";
  p.config_echo = p.run_dir + "/config.json";
  p.best_checkpoint = p.run_dir + "/model.rdmp";
  p.last_checkpoint = p.run_dir + "/last.rdmp";
  return p;
}

std::vector<std::string> dataset_paths(const std::string& data_dir, const config::AppConfig& cfg) {
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < cfg.dataset.train_envs.size(); ++i) {
    paths.push_back(data_dir + "/env" + std::to_string(i) + ".rdmd");
  }
  paths.push_back(data_dir + "/test.rdmd");
  paths.push_back(data_dir + "/manifest.json");
  return paths;
}

std::vector<std::string> cmd_generate(const config::AppConfig& cfg, const std::string& data_dir) {
  cfg.dataset.validate();
  fs::create_directories(data_dir);
  trainer::ExperimentData built = config::build_data(cfg.dataset);
  std::vector<std::string> paths = dataset_paths(data_dir, cfg);

  nlohmann::json manifest;
  manifest["dataset_hash"] = config::dataset_hash(cfg.dataset);
  manifest["kind"] = cfg.dataset.kind;
  manifest["files"] = nlohmann::json::array();

  for (std::size_t i = 0; i < built.train.size(); ++i) {
    // One file per environment: train split followed by its validation split.
    data::DomainDataset full;
    full.domain_id = built.train[i].domain_id;
    full.env = built.train[i].env;
    full.num_classes = built.train[i].num_classes;
    std::size_t d = built.train[i].dim();
    std::size_t n = built.train[i].n() + built.train_val[i].n();
    full.inputs = Tensor::zeros({n, d});
    std::copy_n(built.train[i].inputs.data(), built.train[i].inputs.size(), full.inputs.data());
    std::copy_n(built.train_val[i].inputs.data(), built.train_val[i].inputs.size(),
                full.inputs.data() + built.train[i].inputs.size());
    full.labels = built.train[i].labels;
    full.labels.insert(full.labels.end(), built.train_val[i].labels.begin(), built.train_val[i].labels.end());
    data::write_rdmd(paths[i], full);
    manifest["files"].push_back({{"path", paths[i]},
                                 {"domain_id", full.domain_id},
                                 {"n", cfg.dataset.train_envs[i].n},
                                 {"n_val", cfg.dataset.train_envs[i].n_val},
                                 {"agreement", cfg.dataset.train_envs[i].agreement},
                                 {"label_noise", cfg.dataset.train_envs[i].label_noise}});
  }

  {
    data::DomainDataset full;
    full.domain_id = built.test.domain_id;
    full.env = built.test.env;
    full.num_classes = built.test.num_classes;
    std::size_t d = built.test.dim();
    std::size_t n = built.test.n() + built.test_val.n();
    full.inputs = Tensor::zeros({n, d});
    std::copy_n(built.test.inputs.data(), built.test.inputs.size(), full.inputs.data());
    std::copy_n(built.test_val.inputs.data(), built.test_val.inputs.size(),
                full.inputs.data() + built.test.inputs.size());
    full.labels = built.test.labels;
    full.labels.insert(full.labels.end(), built.test_val.labels.begin(), built.test_val.labels.end());
    data::write_rdmd(paths[built.train.size()], full);
    manifest["files"].push_back({{"path", paths[built.train.size()]},
                                 {"domain_id", full.domain_id},
                                 {"n", cfg.dataset.test_env.n},
                                 {"n_val", cfg.dataset.test_env.n_val},
                                 {"agreement", cfg.dataset.test_env.agreement},
                                 {"label_noise", cfg.dataset.test_env.label_noise}});
  }

  write_file(paths.back(), manifest.dump(2) + "\n");
  return paths;
}

TrainArtifacts cmd_train(const config::AppConfig& cfg, const std::string& out_root, const std::string& data_dir,
                         bool resume) {
  cfg.train.validate();
  auto data = std::make_shared<trainer::ExperimentData>(load_data(cfg, data_dir));
  RunPaths paths = run_paths(out_root, cfg);
  fs::create_directories(paths.run_dir);

  trainer::TrainResult result;
  bool appended = false;
  if (resume && fs::exists(paths.last_checkpoint) && fs::exists(paths.summary_json) &&
      fs::exists(paths.metrics_csv)) {
    nlohmann::json prev = nlohmann::json::parse(read_file(paths.summary_json));
    int completed = prev.value("completed_steps", 0);
    model::MlpParams params = model::load_checkpoint(paths.last_checkpoint);
    trainer::TrainSession session(cfg.train, data, std::move(params), completed);
    session.run();
    model::save_checkpoint(paths.last_checkpoint, session.params());
    result = session.finish();
    // Continue the metric log rather than restarting it.
    std::string csv = result.metrics.to_csv();
    std::string body = csv.substr(csv.find('\n') + 1);
    std::ofstream out(paths.metrics_csv, std::ios::binary | std::ios::app);
    out << body;
    appended = true;
  } else {
    trainer::TrainSession session(cfg.train, data);
    session.run();
    model::save_checkpoint(paths.last_checkpoint, session.params());
    result = session.finish();
  }

  if (!appended) write_file(paths.metrics_csv, result.metrics.to_csv());
  model::save_checkpoint(paths.best_checkpoint, result.best_params);
  write_file(paths.config_echo, config::to_json(cfg).dump(2) + "\n");
  write_file(paths.summary_json, summary_json(cfg, result).dump(2) + "\n");
  return {paths, result};
}

std::string cmd_evaluate(const config::AppConfig& cfg, const std::string& checkpoint_path,
                         const std::string& data_dir) {
  trainer::ExperimentData data = load_data(cfg, data_dir);
  model::MlpParams params = model::load_checkpoint(checkpoint_path);
  nlohmann::json j;
  auto put = [&](const char* key, const data::DomainDataset& ds) {
    trainer::EvalResult r = trainer::evaluate(params, ds);
    j[key].push_back({{"domain_id", ds.domain_id}, {"accuracy", r.accuracy}, {"mean_risk", r.mean_risk}});
  };
  for (const auto& ds : data.train) put("train", ds);
  for (const auto& ds : data.train_val) put("val", ds);
  put("val", data.test_val);
  put("test", data.test);
  return j.dump(2) + "\n";
}

SweepResult cmd_sweep(const config::AppConfig& cfg, const std::string& out_root, const std::string& data_dir,
                      const SweepSpec& sweep) {
  if (sweep.seeds.empty()) throw ConfigError("sweep: seed list must be nonempty");
  if (sweep.lambdas.empty()) throw ConfigError("sweep: lambda grid must be nonempty");

  struct Cell {
    config::AppConfig cfg;
    reporting::RunSummary summary;
    std::string error;
  };
  std::vector<Cell> cells;
  bool multi_lambda = sweep.lambdas.size() > 1;
  for (std::uint64_t seed : sweep.seeds) {
    for (double lam : sweep.lambdas) {
      Cell c;
      c.cfg = cfg;
      c.cfg.train.seed = seed;
      c.cfg.train.objective.lambda = lam;
      c.summary.label = objectives::to_string(cfg.train.objective.kind);
      if (multi_lambda) c.summary.label += "(lambda=" + fmt_double(lam) + ")";
      c.summary.seed = seed;
      cells.push_back(std::move(c));
    }
  }

  int workers = effective_parallelism(sweep.parallel);
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&]() {
    for (;;) {
      std::size_t idx;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= cells.size()) return;
        idx = next++;
      }
      Cell& c = cells[idx];
      try {
        TrainArtifacts art = cmd_train(c.cfg, out_root, data_dir, false);
        c.summary.test_accuracy = art.result.test_accuracy;
        c.summary.ok = !art.result.diverged;
        if (art.result.diverged) c.error = "diverged";
      } catch (const std::exception& e) {
        c.summary.ok = false;
        c.error = e.what();
      }
    }
  };

  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepResult result;
  std::vector<reporting::RunSummary> summaries;
  for (const Cell& c : cells) {
    summaries.push_back(c.summary);
    if (!c.summary.ok) {
      result.warnings.push_back("run seed=" + std::to_string(c.summary.seed) + " label=" + c.summary.label +
                                " failed: " + c.error);
    }
  }
  result.table = reporting::compare_table(summaries, &result.warnings);
  fs::create_directories(out_root);
  result.table_csv_path = out_root + "/table.csv";
  result.table_text_path = out_root + "/table.txt";
  write_file(result.table_csv_path, reporting::table_csv(result.table));
  write_file(result.table_text_path, reporting::table_text(result.table));

  nlohmann::json manifest;
  manifest["config_hash"] = config::config_hash(cfg);
  manifest["config"] = config::to_json(cfg);
  manifest["output_dir"] = out_root;
  manifest["seeds"] = sweep.seeds;
  manifest["lambdas"] = sweep.lambdas;
  manifest["runs"] = nlohmann::json::array();
  for (const Cell& c : cells) {
    manifest["runs"].push_back({{"seed", c.summary.seed},
                                {"lambda", c.cfg.train.objective.lambda},
                                {"run_dir", run_paths(out_root, c.cfg).run_dir},
                                {"ok", c.summary.ok}});
  }
  write_file(out_root + "/sweep_manifest.json", manifest.dump(2) + "\n");
  return result;
}

ReportPaths cmd_report_hist(const config::AppConfig& cfg, const std::string& checkpoint_path,
                            const std::string& data_dir, const std::string& out_dir,
                            const reporting::HistogramSpec& spec) {
  trainer::ExperimentData data = load_data(cfg, data_dir);
  model::MlpParams params = model::load_checkpoint(checkpoint_path);

  // Pool each domain's splits so the histogram covers its full sample.
  std::vector<reporting::RiskSample> samples;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    reporting::RiskSample s;
    s.domain_id = data.train[i].domain_id;
    s.risks = model::eval_risks(params, data.train[i].inputs, data.train[i].labels);
    std::vector<double> val = model::eval_risks(params, data.train_val[i].inputs, data.train_val[i].labels);
    s.risks.insert(s.risks.end(), val.begin(), val.end());
    samples.push_back(std::move(s));
  }
  {
    reporting::RiskSample s;
    s.domain_id = data.test.domain_id;
    s.risks = model::eval_risks(params, data.test.inputs, data.test.labels);
    std::vector<double> val = model::eval_risks(params, data.test_val.inputs, data.test_val.labels);
    s.risks.insert(s.risks.end(), val.begin(), val.end());
    samples.push_back(std::move(s));
  }

  reporting::HistogramReport report = reporting::risk_histogram(samples, spec);
  fs::create_directories(out_dir);
  ReportPaths paths;
  paths.hist_csv = out_dir + "/risk_histogram.csv";
  paths.hist_json = out_dir + "/risk_histogram.json";
  write_file(paths.hist_csv, reporting::histogram_csv(report));
  write_file(paths.hist_json, reporting::histogram_json(report));
  return paths;
}

SweepResult cmd_report_table(const std::string& runs_root, const std::string& out_dir) {
  std::vector<reporting::RunSummary> summaries;
  std::vector<fs::path> files;
  if (!fs::exists(runs_root)) throw DataError("report: runs root " + runs_root + " does not exist");
  for (const auto& entry : fs::directory_iterator(runs_root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "summary.json")) {
      files.push_back(entry.path() / "summary.json");
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("report: no run summaries found under " + runs_root);

  // Annotate labels with lambda only where an objective was swept over
  // multiple values.
  struct Entry {
    std::string objective;
    double lambda;
    reporting::RunSummary summary;
  };
  std::vector<Entry> entries;
  for (const fs::path& f : files) {
    nlohmann::json j = nlohmann::json::parse(read_file(f.string()));
    Entry e;
    e.objective = j.value("objective", "?");
    e.lambda = j.value("lambda", 0.0);
    e.summary.seed = j.value("seed", 0ULL);
    e.summary.test_accuracy = j.value("test_accuracy", 0.0);
    e.summary.ok = !j.value("diverged", false);
    entries.push_back(std::move(e));
  }
  for (Entry& e : entries) {
    bool multi = false;
    for (const Entry& other : entries) {
      if (other.objective == e.objective && other.lambda != e.lambda) multi = true;
    }
    e.summary.label = multi ? e.objective + "(lambda=" + fmt_double(e.lambda) + ")" : e.objective;
    summaries.push_back(e.summary);
  }

  SweepResult result;
  result.table = reporting::compare_table(summaries, &result.warnings);
  fs::create_directories(out_dir);
  result.table_csv_path = out_dir + "/table.csv";
  result.table_text_path = out_dir + "/table.txt";
  write_file(result.table_csv_path, reporting::table_csv(result.table));
  write_file(result.table_text_path, reporting::table_text(result.table));
  return result;
}

}  // namespace rdm::cli
