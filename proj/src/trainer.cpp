#include "rdm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "rdm/errors.hpp"
#include "rdm/io_util.hpp"

namespace rdm::trainer {

namespace {

constexpr double kPi = 3.14159265358979323846;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

const char* param_name(std::size_t flat_index, std::string& storage) {
  storage = (flat_index % 2 == 0 ? "W" : "b") + std::to_string(flat_index / 2);
  return storage.c_str();
}

}  // namespace

SelectionMode selection_from_string(const std::string& s) {
  if (s == "train-domain-validation") return SelectionMode::TrainDomainValidation;
  if (s == "test-domain-validation") return SelectionMode::TestDomainValidation;
  throw ConfigError("unknown selection mode '" + s +
                    "' (valid: train-domain-validation, test-domain-validation)");
}

std::string to_string(SelectionMode m) {
  return m == SelectionMode::TrainDomainValidation ? "train-domain-validation" : "test-domain-validation";
}

void TrainConfig::validate() const {
  objective.validate();
  if (steps < 1) throw ConfigError("train: steps must be >= 1");
  if (pre_train_steps < 0 || pre_train_steps > steps) {
    throw ConfigError("train: pre_train_steps must be in [0, steps]");
  }
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be > 0");
  if (lr_after_pretrain >= 0.0 && !(lr_after_pretrain > 0.0)) {
    throw ConfigError("train: lr_after_pretrain must be > 0");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (eval_interval < 1) throw ConfigError("train: eval_interval must be >= 1");
  if (hidden < 1) throw ConfigError("train: hidden width must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("train: dropout must be in [0,1)");
  if (!(divergence_threshold > 0.0)) throw ConfigError("train: divergence threshold must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train: weight decay must be >= 0");
}

std::string TrainMetrics::to_csv() const {
  std::ostringstream os;
  os << "step,domain_id,split,accuracy,mean_risk,penalty,worst_domain,lr\n";
  for (const MetricRow& r : rows) {
    os << r.step << ',' << r.domain_id << ',' << r.split << ',' << fmt_double(r.accuracy) << ','
       << fmt_double(r.mean_risk) << ',' << fmt_double(r.penalty) << ',' << r.worst_domain << ','
       << fmt_double(r.lr) << '\n';
  }
  return os.str();
}

EvalResult evaluate(const model::MlpParams& params, const data::DomainDataset& ds) {
  model::EvalForward fw = model::eval_forward(params, ds.inputs, ds.labels);
  std::size_t n = ds.n(), c = params.output_dim();
  std::size_t correct = 0;
  double risk_acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* zi = fw.logits.data() + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (zi[j] > zi[best]) best = j;
    }
    if (static_cast<int>(best) == ds.labels[i]) ++correct;
    risk_acc += fw.risks[i];
  }
  return {static_cast<double>(correct) / static_cast<double>(n), risk_acc / static_cast<double>(n)};
}

AdamState AdamState::init(const model::MlpParams& params) {
  AdamState s;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    s.m.push_back(Tensor::zeros(params.weights[l].shape()));
    s.m.push_back(Tensor::zeros(params.biases[l].shape()));
    s.v.push_back(Tensor::zeros(params.weights[l].shape()));
    s.v.push_back(Tensor::zeros(params.biases[l].shape()));
  }
  return s;
}

void adam_step(model::MlpParams& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               double weight_decay, double beta1, double beta2, double eps) {
  if (grads.size() != 2 * params.num_layers()) {
    throw std::invalid_argument("adam_step: gradient list does not match parameter layout");
  }
  std::string name;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!all_finite(grads[k])) {
      throw DivergenceError(std::string("adam_step: non-finite gradient for parameter ") + param_name(k, name));
    }
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    Tensor& p = (k % 2 == 0) ? params.weights[k / 2] : params.biases[k / 2];
    const Tensor& g = grads[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g.is_scalar() && p.size() == 1 ? g.value() : g[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
    }
  }
}

double cosine_lr(int step, int total_steps, double base_lr) {
  return base_lr * 0.5 * (1.0 + std::cos(kPi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

TrainSession::TrainSession(TrainConfig cfg, std::shared_ptr<const ExperimentData> data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      batch_rng_(Rng::stream(cfg_.seed, 1)),
      started_at_(now_seconds()) {
  cfg_.validate();
  if (data_ == nullptr || data_->train.empty()) throw ConfigError("train: no training domains");
  if (data_->train_val.size() != data_->train.size()) {
    throw ConfigError("train: validation splits must parallel the training domains");
  }
  if (cfg_.objective.kind != objectives::Kind::Erm && data_->train.size() < 2) {
    throw ConfigError("train: penalised objectives need >= 2 training domains");
  }
  std::vector<std::size_t> dims = {data_->train[0].dim(), cfg_.hidden, cfg_.hidden, data_->train[0].num_classes};
  params_ = model::init_xavier(dims, mix64(cfg_.seed, 0xA11CEULL), cfg_.dropout);
  adam_ = AdamState::init(params_);
  dro_ = objectives::GroupDroState::uniform(data_->train.size());
  best_params_ = params_;
}

TrainSession::TrainSession(TrainConfig cfg, std::shared_ptr<const ExperimentData> data, model::MlpParams params,
                           int completed_steps)
    : TrainSession(std::move(cfg), std::move(data)) {
  if (completed_steps < 0 || completed_steps > cfg_.steps) {
    throw ConfigError("train: resume step count out of range");
  }
  params_ = std::move(params);
  adam_ = AdamState::init(params_);
  best_params_ = params_;
  // Fast-forward the batch stream through the steps already taken.
  for (int s = 0; s < completed_steps; ++s) {
    (void)data::sample_domain_batches(data_->train, static_cast<std::size_t>(cfg_.batch_size), batch_rng_,
                                      cfg_.with_replacement);
  }
  step_ = completed_steps;
  best_step_ = completed_steps;
}

TrainSession TrainSession::with_objective(const objectives::ObjectiveConfig& objective) const {
  TrainSession copy = *this;
  copy.cfg_.objective = objective;
  copy.cfg_.validate();
  copy.dro_ = objectives::GroupDroState::uniform(data_->train.size());
  return copy;
}

void TrainSession::do_step() {
  int idx = step_;  // 0-based
  bool phase1 = idx < cfg_.pre_train_steps;
  double base_lr = phase1 ? cfg_.lr : cfg_.phase2_lr();
  double lr = cfg_.cosine ? cosine_lr(idx, cfg_.steps, base_lr) : base_lr;

  std::vector<data::DomainBatch> batches = data::sample_domain_batches(
      data_->train, static_cast<std::size_t>(cfg_.batch_size), batch_rng_, cfg_.with_replacement);

  ad::Tape tape;
  model::BoundParams bound = model::bind(tape, params_);
  std::vector<objectives::DomainTerms> terms;
  terms.reserve(batches.size());
  std::uint64_t step_seed = mix64(cfg_.seed, static_cast<std::uint64_t>(idx) + 0x5749ULL);
  for (const data::DomainBatch& b : batches) {
    model::ForwardResult fw = model::forward_risks(tape, bound, b, /*train_mode=*/true, step_seed);
    terms.push_back({b.domain_id, fw.risks, fw.logits, &b.labels});
  }

  objectives::ObjectiveConfig effective = cfg_.objective;
  if (phase1) {
    effective.kind = objectives::Kind::Erm;
  }
  objectives::LossParts parts = objectives::build_objective(tape, terms, effective, &dro_);

  double loss = parts.total.value().value();
  if (!std::isfinite(loss) || std::abs(loss) > cfg_.divergence_threshold) {
    diverged_ = true;
    return;
  }
  last_penalty_ = parts.penalty_value;
  last_worst_ = parts.worst_domain;

  std::vector<Tensor> grads;
  try {
    std::vector<Tensor> all = tape.backward(parts.total);
    grads.reserve(2 * params_.num_layers());
    for (std::size_t l = 0; l < params_.num_layers(); ++l) {
      grads.push_back(std::move(all[static_cast<std::size_t>(bound.weights[l].id)]));
      grads.push_back(std::move(all[static_cast<std::size_t>(bound.biases[l].id)]));
    }
    adam_step(params_, grads, adam_, lr, cfg_.weight_decay, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps);
  } catch (const DivergenceError&) {
    diverged_ = true;
    return;
  }

  ++step_;
  if (step_ % cfg_.eval_interval == 0 || step_ == cfg_.steps) eval_and_record(lr);
}

void TrainSession::eval_and_record(double lr_used) {
  auto push = [&](const data::DomainDataset& ds, const char* split) {
    EvalResult r = evaluate(params_, ds);
    metrics_.rows.push_back({step_, ds.domain_id, split, r.accuracy, r.mean_risk, last_penalty_, last_worst_, lr_used});
    return r;
  };

  for (const auto& ds : data_->train) push(ds, "train");
  double val_acc_sum = 0.0;
  for (const auto& ds : data_->train_val) val_acc_sum += push(ds, "val").accuracy;
  EvalResult test_val = push(data_->test_val, "val");
  push(data_->test, "test");

  double selection = cfg_.selection == SelectionMode::TrainDomainValidation
                         ? val_acc_sum / static_cast<double>(data_->train_val.size())
                         : test_val.accuracy;
  if (selection > best_selection_) {
    best_selection_ = selection;
    best_params_ = params_;
    best_step_ = step_;
  }
}

void TrainSession::run_steps(int k) {
  for (int i = 0; i < k && step_ < cfg_.steps && !diverged_; ++i) do_step();
}

void TrainSession::run() { run_steps(cfg_.steps - step_); }

TrainResult TrainSession::finish() const {
  TrainResult r;
  r.best_params = best_params_;
  r.metrics = metrics_;
  r.metrics.wall_clock_seconds = now_seconds() - started_at_;
  r.best_step = best_step_;
  r.best_selection_accuracy = best_selection_ < 0.0 ? 0.0 : best_selection_;
  r.diverged = diverged_;
  r.completed_steps = step_;
  for (const auto& ds : data_->train) r.train_accuracy.push_back(evaluate(best_params_, ds).accuracy);
  for (const auto& ds : data_->train_val) r.val_accuracy.push_back(evaluate(best_params_, ds).accuracy);
  r.test_val_accuracy = evaluate(best_params_, data_->test_val).accuracy;
  r.test_accuracy = evaluate(best_params_, data_->test).accuracy;
  return r;
}

TrainResult train(const TrainConfig& cfg, std::shared_ptr<const ExperimentData> data) {
  TrainSession session(cfg, std::move(data));
  session.run();
  return session.finish();
}

}  // namespace rdm::trainer
