#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rdm/data.hpp"
#include "rdm/model.hpp"
#include "rdm/objectives.hpp"

namespace rdm::trainer {

enum class SelectionMode { TrainDomainValidation, TestDomainValidation };

SelectionMode selection_from_string(const std::string& s);
std::string to_string(SelectionMode m);

struct TrainConfig {
  objectives::ObjectiveConfig objective;
  int steps = 600;
  int pre_train_steps = 0;       // phase 1: plain ERM
  double lr = 1e-4;              // phase-1 learning rate
  double lr_after_pretrain = -1; // phase-2 learning rate; < 0 means same as lr
  int batch_size = 512;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  bool cosine = true;
  SelectionMode selection = SelectionMode::TestDomainValidation;
  std::uint64_t seed = 0;
  int eval_interval = 15;
  std::size_t hidden = 390;
  double dropout = 0.2;
  bool with_replacement = true;
  double divergence_threshold = 1e6;

  double phase2_lr() const { return lr_after_pretrain < 0.0 ? lr : lr_after_pretrain; }
  void validate() const;  // ConfigError
};

struct ExperimentData {
  std::vector<data::DomainDataset> train;      // one per training domain
  std::vector<data::DomainDataset> train_val;  // parallel validation splits
  data::DomainDataset test_val;                // validation split of the test domain
  data::DomainDataset test;
};

struct MetricRow {
  int step = 0;
  int domain_id = 0;
  std::string split;  // train | val | test
  double accuracy = 0.0;
  double mean_risk = 0.0;
  double penalty = 0.0;
  int worst_domain = -1;
  double lr = 0.0;
};

struct TrainMetrics {
  std::vector<MetricRow> rows;
  double wall_clock_seconds = 0.0;  // not part of the CSV

  // header: step,domain_id,split,accuracy,mean_risk,penalty,worst_domain,lr
  std::string to_csv() const;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_risk = 0.0;
};

// Deterministic eval-mode accuracy and mean cross-entropy.
EvalResult evaluate(const model::MlpParams& params, const data::DomainDataset& ds);

// --- optimizer ---------------------------------------------------------

struct AdamState {
  std::vector<Tensor> m, v;  // flatten() layout: W0, b0, W1, b1, ...
  long t = 0;

  static AdamState init(const model::MlpParams& params);
};

// Bias-corrected Adam with decoupled weight decay (lr * wd * param
// subtraction). grads follow the flatten() layout. Throws DivergenceError
// naming the parameter on non-finite gradients.
void adam_step(model::MlpParams& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// base * 0.5 * (1 + cos(pi * step / total)).
double cosine_lr(int step, int total_steps, double base_lr);

// --- training loop -------------------------------------------------------

struct TrainResult {
  model::MlpParams best_params;
  TrainMetrics metrics;
  int best_step = 0;
  double best_selection_accuracy = 0.0;
  bool diverged = false;
  int completed_steps = 0;
  // Final accuracies of best_params.
  std::vector<double> train_accuracy;
  std::vector<double> val_accuracy;
  double test_val_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Step-level training state. Copyable: a copy continues independently with
// identical future behaviour, which backs both --resume and objective
// branching after a shared ERM pre-training phase.
class TrainSession {
 public:
  TrainSession(TrainConfig cfg, std::shared_ptr<const ExperimentData> data);
  // Resume at a given step count from checkpointed parameters (fresh Adam
  // state; the RNG stream is fast-forwarded through the skipped steps).
  TrainSession(TrainConfig cfg, std::shared_ptr<const ExperimentData> data, model::MlpParams params,
               int completed_steps);

  int step() const { return step_; }
  bool diverged() const { return diverged_; }
  const TrainConfig& config() const { return cfg_; }
  const model::MlpParams& params() const { return params_; }

  // Copy of this session with a different objective (GroupDRO weights
  // reset). State, step counter and RNG stream carry over.
  TrainSession with_objective(const objectives::ObjectiveConfig& objective) const;

  void run_steps(int k);  // stops early on divergence
  void run();             // all remaining steps

  TrainResult finish() const;

 private:
  void do_step();
  void eval_and_record(double lr_used);

  TrainConfig cfg_;
  std::shared_ptr<const ExperimentData> data_;
  model::MlpParams params_;
  AdamState adam_;
  Rng batch_rng_;
  objectives::GroupDroState dro_;
  int step_ = 0;
  bool diverged_ = false;
  double last_penalty_ = 0.0;
  int last_worst_ = -1;
  TrainMetrics metrics_;
  model::MlpParams best_params_;
  int best_step_ = 0;
  double best_selection_ = -1.0;
  double started_at_ = 0.0;
};

// Phase 1: pre_train_steps of plain ERM at cfg.lr; phase 2: the configured
// objective at cfg.phase2_lr(). Returns the checkpoint maximising the
// model-selection accuracy plus the full metric log.
TrainResult train(const TrainConfig& cfg, std::shared_ptr<const ExperimentData> data);

}  // namespace rdm::trainer
