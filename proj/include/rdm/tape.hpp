#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rdm/tensor.hpp"

namespace rdm::ad {

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,       // tensor * double constant
  MatMul,
  AddRow,      // matrix + broadcast row vector
  SubScalar,   // tensor - broadcast scalar node
  Relu,
  Sigmoid,
  Exp,
  Log,
  Square,
  Sum,
  Mean,
  Concat,
  Dropout,
  SoftmaxXent,  // per-sample cross-entropy of row-wise softmax
  IrmScaleGrad, // d(mean risk)/ds of logits scaled by dummy s, at s = 1
  Mmd2,         // biased multi-bandwidth RBF MMD^2 between two samples
};

const char* op_name(OpKind kind);

class Tape;

// Handle to a tape node. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  bool requires_grad() const;
};

struct Node {
  OpKind kind = OpKind::Leaf;
  std::vector<std::int32_t> inputs;
  Tensor value;
  bool requires_grad = false;
  // Op-specific saved state needed by backward.
  Tensor saved;                    // dropout mask, softmax probabilities
  std::vector<std::int32_t> iaux;  // class labels
  std::vector<double> daux;        // scale constant, bandwidths
};

// Ordered record of primitive ops. Construction order is topological by
// definition: an op can only consume already-recorded nodes.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);

  const Node& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar root. Returns one gradient tensor per node
  // id: grad-tracked leaves always get a tensor (zeros if the root does not
  // depend on them); nodes the sweep never touches keep an empty tensor.
  // The sweep visits each node at most once and is fully deterministic.
  std::vector<Tensor> backward(Var root) const;

  Var emit(Node node);

 private:
  std::vector<Node> nodes_;
};

// --- primitive ops -----------------------------------------------------
// Every op validates input shapes and throws std::invalid_argument naming
// the op and offending shapes. The result is recorded on the tape; it is
// grad-tracked iff any input is.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var matmul(Var a, Var b);
Var add_row(Var mat, Var row);
Var sub_scalar(Var t, Var s);
Var relu(Var x);
Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);
Var sum(Var x);
Var mean(Var x);
Var concat(std::span<const Var> parts);
Var dropout(Var x, double rate, std::uint64_t seed);
Var softmax_xent(Var logits, const std::vector<int>& labels);
Var irm_scale_grad(Var logits, const std::vector<int>& labels);
Var mmd2(Var x, Var y, std::span<const double> bandwidths);

// variance = mean((v - mean(v))^2), composed from primitives.
Var variance(Var v);

}  // namespace rdm::ad
