#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rdm/data.hpp"
#include "rdm/tape.hpp"
#include "rdm/tensor.hpp"

namespace rdm::model {

// MLP weights/biases for architecture d -> h -> ... -> C with ReLU hidden
// activations and dropout after each hidden layer.
struct MlpParams {
  std::vector<std::size_t> dims;  // layer widths, length L+1
  std::vector<Tensor> weights;    // [dims[l], dims[l+1]]
  std::vector<Tensor> biases;     // [dims[l+1]]
  double dropout_rate = 0.0;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }
  std::size_t num_parameters() const;

  // Flat view in (W0, b0, W1, b1, ...) order, for optimizers and checks.
  std::vector<Tensor> flatten() const;
  void unflatten(const std::vector<Tensor>& flat);
};

// Weights ~ Uniform(+-sqrt(6/(fan_in+fan_out))), biases zero. Deterministic
// per seed.
MlpParams init_xavier(const std::vector<std::size_t>& dims, std::uint64_t seed, double dropout_rate = 0.0);

struct BoundParams {
  std::vector<ad::Var> weights, biases;
  const MlpParams* src = nullptr;
};

// Records the parameters as grad-tracked tape leaves.
BoundParams bind(ad::Tape& tape, const MlpParams& params);

struct ForwardResult {
  ad::Var logits;  // [n, C]
  ad::Var risks;   // [n] per-sample softmax cross-entropy
};

// Forward pass with per-sample risk extraction. Dropout masks are active
// only in train mode and are seeded by (step_seed, domain_id, layer), so a
// fixed seed reproduces the exact same masks.
ForwardResult forward_risks(ad::Tape& tape, const BoundParams& params, const Tensor& inputs,
                            const std::vector<int>& labels, bool train_mode, std::uint64_t step_seed, int domain_id);

ForwardResult forward_risks(ad::Tape& tape, const BoundParams& params, const data::DomainBatch& batch,
                            bool train_mode, std::uint64_t step_seed);

// Eval-mode logits (dropout off, untracked). Same primitive path as the
// training forward, so values agree bitwise with a dropout-free pass.
Tensor eval_logits(const MlpParams& params, const Tensor& inputs);

// Eval-mode per-sample risks.
std::vector<double> eval_risks(const MlpParams& params, const Tensor& inputs, const std::vector<int>& labels);

struct EvalForward {
  Tensor logits;
  std::vector<double> risks;
};

// One eval-mode pass yielding both logits and per-sample risks.
EvalForward eval_forward(const MlpParams& params, const Tensor& inputs, const std::vector<int>& labels);

// Checkpoint: flat binary {magic "RDMP", dims, f64 parameter blob},
// round-trip exact.
void save_checkpoint(const std::string& path, const MlpParams& params);
MlpParams load_checkpoint(const std::string& path);

}  // namespace rdm::model
