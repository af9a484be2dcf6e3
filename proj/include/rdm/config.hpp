#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rdm/data.hpp"
#include "rdm/trainer.hpp"

namespace rdm::config {

// One environment's sample budget: n main samples (train split for training
// environments, test split for the test environment) plus n_val held out
// for validation.
struct EnvConfig {
  double agreement = 0.5;
  double label_noise = 0.25;
  std::size_t n = 0;
  std::size_t n_val = 0;
  std::optional<std::uint64_t> seed;  // derived from (data seed, domain id) when absent
};

struct DatasetConfig {
  std::string kind = "cmnist";        // cmnist | two_feature
  std::string source = "procedural";  // cmnist only: procedural | idx
  std::string idx_dir;                // cmnist + idx: directory with the four MNIST files
  std::uint64_t seed = 0;
  std::vector<EnvConfig> train_envs;
  EnvConfig test_env;

  void validate() const;
  std::uint64_t env_seed(std::size_t domain_id) const;
};

struct AppConfig {
  std::string name = "run";
  DatasetConfig dataset;
  trainer::TrainConfig train;
};

AppConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const AppConfig& cfg);
AppConfig load_config_file(const std::string& path);

// Content hash of the resolved config with train.seed and objective.lambda
// normalized out, so artifact paths are derivable from (hash, seed, lambda).
std::string config_hash(const AppConfig& cfg);

// Hash of the dataset section alone (seed included); stamped into the data
// manifest so training can detect stale or foreign data files.
std::string dataset_hash(const DatasetConfig& cfg);

// In-memory dataset generation per the config. The test environment is
// split into a validation part and a test part.
trainer::ExperimentData build_data(const DatasetConfig& cfg);

}  // namespace rdm::config
