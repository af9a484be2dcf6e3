#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "rdm/tape.hpp"
#include "rdm/tensor.hpp"

namespace rdm::ad {

// Builds a scalar loss on the given tape from grad-tracked parameter leaves
// (one Var per parameter tensor, same order as the tensors passed to the
// checker). Must be deterministic: dropout off or fixed-seeded.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;  // index into the parameter tensor list
  std::size_t worst_entry = 0;  // flat index within that tensor
  double tol = 0.0;
  bool passed = true;
};

// Compares tape gradients against central finite differences for every
// entry of every parameter tensor. Relative error is
// |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
// Throws if eps <= 0 or the loss is non-finite at any probe point.
FiniteDiffReport finite_diff_check(const LossBuilder& loss_fn, const std::vector<Tensor>& params, double eps,
                                   double tol);

}  // namespace rdm::ad
