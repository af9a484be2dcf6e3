#include "rdm/config.hpp"

#include <fstream>
#include <set>

#include "rdm/errors.hpp"
#include "rdm/io_util.hpp"

namespace rdm::config {

namespace {

void check_keys(const nlohmann::json& j, const char* section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(std::string("config: section '") + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(std::string("config: unknown key '") + it.key() + "' in section '" + section + "'");
    }
  }
}

EnvConfig parse_env(const nlohmann::json& j, const char* section) {
  check_keys(j, section, {"agreement", "label_noise", "n", "n_val", "seed"});
  EnvConfig e;
  if (!j.contains("agreement")) throw ConfigError(std::string("config: ") + section + " needs 'agreement'");
  e.agreement = j.at("agreement").get<double>();
  if (j.contains("label_noise")) e.label_noise = j.at("label_noise").get<double>();
  if (!j.contains("n")) throw ConfigError(std::string("config: ") + section + " needs 'n'");
  e.n = j.at("n").get<std::size_t>();
  if (j.contains("n_val")) e.n_val = j.at("n_val").get<std::size_t>();
  if (j.contains("seed")) e.seed = j.at("seed").get<std::uint64_t>();
  return e;
}

nlohmann::json env_json(const EnvConfig& e) {
  nlohmann::json j = {{"agreement", e.agreement}, {"label_noise", e.label_noise}, {"n", e.n}, {"n_val", e.n_val}};
  if (e.seed) j["seed"] = *e.seed;
  return j;
}

void validate_env(const EnvConfig& e, const char* what) {
  data::EnvironmentSpec spec{e.agreement, e.label_noise, e.n + e.n_val, 0};
  try {
    spec.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(std::string(what) + ": " + err.what());
  }
  if (e.n < 1) throw ConfigError(std::string(what) + ": n must be >= 1");
}

}  // namespace

void DatasetConfig::validate() const {
  if (kind != "cmnist" && kind != "two_feature") {
    throw ConfigError("config: dataset.kind must be 'cmnist' or 'two_feature', got '" + kind + "'");
  }
  if (kind == "cmnist" && source != "procedural" && source != "idx") {
    throw ConfigError("config: dataset.source must be 'procedural' or 'idx', got '" + source + "'");
  }
  if (kind == "cmnist" && source == "idx" && idx_dir.empty()) {
    throw ConfigError("config: dataset.idx_dir required when source is 'idx'");
  }
  if (train_envs.empty()) throw ConfigError("config: at least one training environment required");
  for (std::size_t i = 0; i < train_envs.size(); ++i) {
    validate_env(train_envs[i], ("train_envs[" + std::to_string(i) + "]").c_str());
    if (train_envs[i].n_val < 1) {
      throw ConfigError("config: train_envs[" + std::to_string(i) + "] needs n_val >= 1");
    }
  }
  validate_env(test_env, "test_env");
  if (test_env.n_val < 1) throw ConfigError("config: test_env needs n_val >= 1 for test-domain validation");
}

std::uint64_t DatasetConfig::env_seed(std::size_t domain_id) const {
  const EnvConfig& e = domain_id < train_envs.size() ? train_envs[domain_id] : test_env;
  if (e.seed) return *e.seed;
  return mix64(seed, 0xE57ULL + domain_id);
}

AppConfig parse_config(const nlohmann::json& j) {
  check_keys(j, "root", {"name", "dataset", "objective", "train"});
  AppConfig cfg;
  if (j.contains("name")) cfg.name = j.at("name").get<std::string>();

  if (!j.contains("dataset")) throw ConfigError("config: 'dataset' section required");
  const nlohmann::json& d = j.at("dataset");
  check_keys(d, "dataset", {"kind", "source", "idx_dir", "seed", "train_envs", "test_env"});
  if (d.contains("kind")) cfg.dataset.kind = d.at("kind").get<std::string>();
  if (d.contains("source")) cfg.dataset.source = d.at("source").get<std::string>();
  if (d.contains("idx_dir")) cfg.dataset.idx_dir = d.at("idx_dir").get<std::string>();
  if (d.contains("seed")) cfg.dataset.seed = d.at("seed").get<std::uint64_t>();
  if (!d.contains("train_envs")) throw ConfigError("config: dataset.train_envs required");
  for (const auto& e : d.at("train_envs")) cfg.dataset.train_envs.push_back(parse_env(e, "train_envs"));
  if (!d.contains("test_env")) throw ConfigError("config: dataset.test_env required");
  cfg.dataset.test_env = parse_env(d.at("test_env"), "test_env");

  if (j.contains("objective")) {
    const nlohmann::json& o = j.at("objective");
    check_keys(o, "objective", {"kind", "lambda", "beta", "eta", "bandwidths"});
    if (o.contains("kind")) cfg.train.objective.kind = objectives::kind_from_string(o.at("kind").get<std::string>());
    if (o.contains("lambda")) cfg.train.objective.lambda = o.at("lambda").get<double>();
    if (o.contains("beta")) cfg.train.objective.beta = o.at("beta").get<double>();
    if (o.contains("eta")) cfg.train.objective.eta = o.at("eta").get<double>();
    if (o.contains("bandwidths")) {
      cfg.train.objective.kernel.bandwidths = o.at("bandwidths").get<std::vector<double>>();
    }
  }

  if (j.contains("train")) {
    const nlohmann::json& t = j.at("train");
    check_keys(t, "train",
               {"steps", "pre_train_steps", "lr", "lr_after_pretrain", "batch_size", "weight_decay", "cosine",
                "selection", "seed", "eval_interval", "hidden", "dropout", "with_replacement",
                "divergence_threshold", "adam_beta1", "adam_beta2", "adam_eps"});
    if (t.contains("steps")) cfg.train.steps = t.at("steps").get<int>();
    if (t.contains("pre_train_steps")) cfg.train.pre_train_steps = t.at("pre_train_steps").get<int>();
    if (t.contains("lr")) cfg.train.lr = t.at("lr").get<double>();
    if (t.contains("lr_after_pretrain")) cfg.train.lr_after_pretrain = t.at("lr_after_pretrain").get<double>();
    if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<int>();
    if (t.contains("weight_decay")) cfg.train.weight_decay = t.at("weight_decay").get<double>();
    if (t.contains("cosine")) cfg.train.cosine = t.at("cosine").get<bool>();
    if (t.contains("selection")) cfg.train.selection = trainer::selection_from_string(t.at("selection").get<std::string>());
    if (t.contains("seed")) cfg.train.seed = t.at("seed").get<std::uint64_t>();
    if (t.contains("eval_interval")) cfg.train.eval_interval = t.at("eval_interval").get<int>();
    if (t.contains("hidden")) cfg.train.hidden = t.at("hidden").get<std::size_t>();
    if (t.contains("dropout")) cfg.train.dropout = t.at("dropout").get<double>();
    if (t.contains("with_replacement")) cfg.train.with_replacement = t.at("with_replacement").get<bool>();
    if (t.contains("divergence_threshold")) cfg.train.divergence_threshold = t.at("divergence_threshold").get<double>();
    if (t.contains("adam_beta1")) cfg.train.adam_beta1 = t.at("adam_beta1").get<double>();
    if (t.contains("adam_beta2")) cfg.train.adam_beta2 = t.at("adam_beta2").get<double>();
    if (t.contains("adam_eps")) cfg.train.adam_eps = t.at("adam_eps").get<double>();
  }

  cfg.dataset.validate();
  cfg.train.validate();
  return cfg;
}

nlohmann::json to_json(const AppConfig& cfg) {
  nlohmann::json d = {
      {"kind", cfg.dataset.kind},
      {"seed", cfg.dataset.seed},
      {"train_envs", nlohmann::json::array()},
      {"test_env", env_json(cfg.dataset.test_env)},
  };
  if (cfg.dataset.kind == "cmnist") {
    d["source"] = cfg.dataset.source;
    if (!cfg.dataset.idx_dir.empty()) d["idx_dir"] = cfg.dataset.idx_dir;
  }
  for (const EnvConfig& e : cfg.dataset.train_envs) d["train_envs"].push_back(env_json(e));

  nlohmann::json o = {
      {"kind", objectives::to_string(cfg.train.objective.kind)},
      {"lambda", cfg.train.objective.lambda},
      {"beta", cfg.train.objective.beta},
      {"eta", cfg.train.objective.eta},
      {"bandwidths", cfg.train.objective.kernel.bandwidths},
  };

  nlohmann::json t = {
      {"steps", cfg.train.steps},
      {"pre_train_steps", cfg.train.pre_train_steps},
      {"lr", cfg.train.lr},
      {"lr_after_pretrain", cfg.train.lr_after_pretrain},
      {"batch_size", cfg.train.batch_size},
      {"weight_decay", cfg.train.weight_decay},
      {"cosine", cfg.train.cosine},
      {"selection", trainer::to_string(cfg.train.selection)},
      {"seed", cfg.train.seed},
      {"eval_interval", cfg.train.eval_interval},
      {"hidden", cfg.train.hidden},
      {"dropout", cfg.train.dropout},
      {"with_replacement", cfg.train.with_replacement},
      {"divergence_threshold", cfg.train.divergence_threshold},
      {"adam_beta1", cfg.train.adam_beta1},
      {"adam_beta2", cfg.train.adam_beta2},
      {"adam_eps", cfg.train.adam_eps},
  };

  return nlohmann::json{{"name", cfg.name}, {"dataset", d}, {"objective", o}, {"train", t}};
}

AppConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }
  return parse_config(j);
}

std::string config_hash(const AppConfig& cfg) {
  AppConfig normalized = cfg;
  normalized.train.seed = 0;
  normalized.train.objective.lambda = 0.0;
  return hex64(fnv1a64(to_json(normalized).dump()));
}

std::string dataset_hash(const DatasetConfig& cfg) {
  AppConfig shell;
  shell.dataset = cfg;
  return hex64(fnv1a64(to_json(shell).at("dataset").dump()));
}

trainer::ExperimentData build_data(const DatasetConfig& cfg) {
  cfg.validate();
  trainer::ExperimentData out;
  std::size_t m = cfg.train_envs.size();

  auto make_env = [&](const EnvConfig& e, std::size_t domain_id, data::DigitSource* digits) {
    data::EnvironmentSpec spec{e.agreement, e.label_noise, e.n + e.n_val, cfg.env_seed(domain_id)};
    if (cfg.kind == "two_feature") {
      return data::make_two_feature_env(spec, static_cast<int>(domain_id));
    }
    return data::make_colored_env(*digits, spec, static_cast<int>(domain_id));
  };

  if (cfg.kind == "cmnist" && cfg.source == "idx") {
    data::DigitSet train_set =
        data::load_idx(cfg.idx_dir + "/train-images-idx3-ubyte", cfg.idx_dir + "/train-labels-idx1-ubyte");
    data::DigitSet test_set =
        data::load_idx(cfg.idx_dir + "/t10k-images-idx3-ubyte", cfg.idx_dir + "/t10k-labels-idx1-ubyte");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t need = cfg.train_envs[i].n + cfg.train_envs[i].n_val;
      if (offset + need > train_set.n()) {
        throw DataError("config: MNIST training set too small for the requested environment sizes");
      }
      data::IdxDigits digits(train_set, offset, offset + need);
      data::DomainDataset full = make_env(cfg.train_envs[i], i, &digits);
      auto [head, tail] = data::split_head(full, cfg.train_envs[i].n);
      out.train.push_back(std::move(head));
      out.train_val.push_back(std::move(tail));
      offset += need;
    }
    std::size_t need = cfg.test_env.n + cfg.test_env.n_val;
    if (need > test_set.n()) throw DataError("config: MNIST test set too small for the requested test environment");
    data::IdxDigits digits(test_set, 0, need);
    data::DomainDataset full = make_env(cfg.test_env, m, &digits);
    auto [head, tail] = data::split_head(full, cfg.test_env.n);
    out.test = std::move(head);
    out.test_val = std::move(tail);
    return out;
  }

  data::ProceduralDigits procedural;
  for (std::size_t i = 0; i < m; ++i) {
    data::DomainDataset full = make_env(cfg.train_envs[i], i, &procedural);
    auto [head, tail] = data::split_head(full, cfg.train_envs[i].n);
    out.train.push_back(std::move(head));
    out.train_val.push_back(std::move(tail));
  }
  data::DomainDataset full = make_env(cfg.test_env, m, &procedural);
  auto [head, tail] = data::split_head(full, cfg.test_env.n);
  out.test = std::move(head);
  out.test_val = std::move(tail);
  return out;
}

}  // namespace rdm::config
