#include "rdm/finite_diff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rdm::ad {

namespace {

double eval_loss(const LossBuilder& fn, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, false));
  Var root = fn(tape, leaves);
  double v = root.value().value();
  if (!std::isfinite(v)) {
    throw std::runtime_error("finite_diff_check: non-finite loss at probe point");
  }
  return v;
}

}  // namespace

FiniteDiffReport finite_diff_check(const LossBuilder& loss_fn, const std::vector<Tensor>& params, double eps,
                                   double tol) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");

  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, true));
  Var root = loss_fn(tape, leaves);
  if (!std::isfinite(root.value().value())) {
    throw std::runtime_error("finite_diff_check: non-finite loss at base point");
  }
  std::vector<Tensor> grads = tape.backward(root);

  FiniteDiffReport report;
  report.tol = tol;
  std::vector<Tensor> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor& analytic = grads[static_cast<std::size_t>(leaves[p].id)];
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      double orig = probe[p][i];
      probe[p][i] = orig + eps;
      double up = eval_loss(loss_fn, probe);
      probe[p][i] = orig - eps;
      double down = eval_loss(loss_fn, probe);
      probe[p][i] = orig;
      double numeric = (up - down) / (2.0 * eps);
      double a = analytic.is_scalar() ? analytic.value() : analytic[i];
      double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p;
        report.worst_entry = i;
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace rdm::ad
