#include "rdm/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

#include "rdm/rng.hpp"

namespace rdm::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

Tape* common_tape(const char* op, std::span<const Var> vars) {
  Tape* tape = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) shape_error(op, "invalid input var");
    if (tape == nullptr) tape = v.tape;
    if (v.tape != tape) shape_error(op, "inputs recorded on different tapes");
  }
  return tape;
}

bool any_tracked(const Tape& tape, std::span<const Var> vars) {
  for (const Var& v : vars) {
    if (tape.node(v.id).requires_grad) return true;
  }
  return false;
}

Var emit_op(const char* op, OpKind kind, std::span<const Var> inputs, Tensor value, Tensor saved = {},
            std::vector<std::int32_t> iaux = {}, std::vector<double> daux = {}) {
  Tape* tape = common_tape(op, inputs);
  Node n;
  n.kind = kind;
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) n.inputs.push_back(v.id);
  n.value = std::move(value);
  n.requires_grad = any_tracked(*tape, inputs);
  n.saved = std::move(saved);
  n.iaux = std::move(iaux);
  n.daux = std::move(daux);
  return tape->emit(std::move(n));
}

// Multi-bandwidth RBF kernel mean and its derivative in the first argument.
double rbf_avg(double u, double v, std::span<const double> bw) {
  double d2 = (u - v) * (u - v);
  double acc = 0.0;
  for (double s : bw) acc += std::exp(-d2 / (2.0 * s));
  return acc / static_cast<double>(bw.size());
}

double rbf_avg_du(double u, double v, std::span<const double> bw) {
  double d = u - v;
  double acc = 0.0;
  for (double s : bw) acc += -(d / s) * std::exp(-d * d / (2.0 * s));
  return acc / static_cast<double>(bw.size());
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::MatMul: return "matmul";
    case OpKind::AddRow: return "add_row";
    case OpKind::SubScalar: return "sub_scalar";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Square: return "square";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Concat: return "concat";
    case OpKind::Dropout: return "dropout";
    case OpKind::SoftmaxXent: return "softmax_xent";
    case OpKind::IrmScaleGrad: return "irm_scale_grad";
    case OpKind::Mmd2: return "mmd2";
  }
  return "?";
}

const Tensor& Var::value() const { return tape->node(id).value; }
bool Var::requires_grad() const { return tape->node(id).requires_grad; }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return emit(std::move(n));
}

Var Tape::emit(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var add(Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (!ta.same_shape(tb)) shape_error("add", "shape mismatch " + shape_str(ta) + " vs " + shape_str(tb));
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  Var in[] = {a, b};
  return emit_op("add", OpKind::Add, in, std::move(out));
}

Var sub(Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (!ta.same_shape(tb)) shape_error("sub", "shape mismatch " + shape_str(ta) + " vs " + shape_str(tb));
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
  Var in[] = {a, b};
  return emit_op("sub", OpKind::Sub, in, std::move(out));
}

Var mul(Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (!ta.same_shape(tb)) shape_error("mul", "shape mismatch " + shape_str(ta) + " vs " + shape_str(tb));
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  Var in[] = {a, b};
  return emit_op("mul", OpKind::Mul, in, std::move(out));
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  Var in[] = {a};
  return emit_op("scale", OpKind::Scale, in, std::move(out), {}, {}, {c});
}

Var matmul(Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() != 2 || tb.rank() != 2) {
    shape_error("matmul", "rank-2 operands required, got " + shape_str(ta) + " and " + shape_str(tb));
  }
  if (ta.cols() != tb.rows()) {
    shape_error("matmul", "inner dimensions disagree: " + shape_str(ta) + " x " + shape_str(tb));
  }
  std::size_t n = ta.rows(), k = ta.cols(), m = tb.cols();
  Tensor out = Tensor::zeros({n, m});
  ConstMap A(ta.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  ConstMap B(tb.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
  MutMap O(out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  O.noalias() = A * B;
  Var in[] = {a, b};
  return emit_op("matmul", OpKind::MatMul, in, std::move(out));
}

Var add_row(Var mat, Var row) {
  const Tensor& tm = mat.value();
  const Tensor& tr = row.value();
  if (tm.rank() != 2 || tr.rank() != 1 || tm.cols() != tr.shape()[0]) {
    shape_error("add_row", "expected [n,m] + [m], got " + shape_str(tm) + " + " + shape_str(tr));
  }
  Tensor out = tm;
  std::size_t n = tm.rows(), m = tm.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += tr[j];
  }
  Var in[] = {mat, row};
  return emit_op("add_row", OpKind::AddRow, in, std::move(out));
}

Var sub_scalar(Var t, Var s) {
  const Tensor& tt = t.value();
  const Tensor& ts = s.value();
  if (!ts.is_scalar()) shape_error("sub_scalar", "second operand must be scalar, got " + shape_str(ts));
  Tensor out = tt;
  double v = ts.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= v;
  Var in[] = {t, s};
  return emit_op("sub_scalar", OpKind::SubScalar, in, std::move(out));
}

Var relu(Var x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  Var in[] = {x};
  return emit_op("relu", OpKind::Relu, in, std::move(out));
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  Var in[] = {x};
  return emit_op("sigmoid", OpKind::Sigmoid, in, std::move(out));
}

Var exp(Var x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  Var in[] = {x};
  return emit_op("exp", OpKind::Exp, in, std::move(out));
}

Var log(Var x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  Var in[] = {x};
  return emit_op("log", OpKind::Log, in, std::move(out));
}

Var square(Var x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
  Var in[] = {x};
  return emit_op("square", OpKind::Square, in, std::move(out));
}

Var sum(Var x) {
  const Tensor& t = x.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i];
  Var in[] = {x};
  return emit_op("sum", OpKind::Sum, in, Tensor::scalar(acc));
}

Var mean(Var x) {
  const Tensor& t = x.value();
  if (t.size() == 0) shape_error("mean", "empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i];
  Var in[] = {x};
  return emit_op("mean", OpKind::Mean, in, Tensor::scalar(acc / static_cast<double>(t.size())));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) shape_error("concat", "no inputs");
  std::vector<double> data;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    if (t.rank() > 1) shape_error("concat", "inputs must be scalars or vectors, got " + shape_str(t));
    data.insert(data.end(), t.data(), t.data() + t.size());
  }
  return emit_op("concat", OpKind::Concat, parts, Tensor::vector(std::move(data)));
}

Var dropout(Var x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) shape_error("dropout", "rate must be in [0,1), got " + std::to_string(rate));
  if (rate == 0.0) return x;
  const Tensor& t = x.value();
  Tensor mask = Tensor::zeros(t.shape());
  Rng rng(seed);
  double keep = 1.0 - rate;
  double inv = 1.0 / keep;
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(keep) ? inv : 0.0;
  Tensor out = t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Var in[] = {x};
  return emit_op("dropout", OpKind::Dropout, in, std::move(out), std::move(mask), {}, {rate});
}

Var softmax_xent(Var logits, const std::vector<int>& labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) shape_error("softmax_xent", "logits must be [n,C], got " + shape_str(z));
  std::size_t n = z.rows(), c = z.cols();
  if (labels.size() != n) {
    shape_error("softmax_xent",
                "label count " + std::to_string(labels.size()) + " does not match batch " + std::to_string(n));
  }
  Tensor probs = Tensor::zeros({n, c});
  Tensor risks = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      shape_error("softmax_xent", "label " + std::to_string(y) + " out of range for " + std::to_string(c) + " classes");
    }
    const double* zi = z.data() + i * c;
    double zmax = zi[0];
    for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, zi[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(zi[j] - zmax);
    double lse = zmax + std::log(denom);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(zi[j] - lse);
    risks[i] = lse - zi[static_cast<std::size_t>(y)];
  }
  Var in[] = {logits};
  return emit_op("softmax_xent", OpKind::SoftmaxXent, in, std::move(risks), std::move(probs),
                 std::vector<std::int32_t>(labels.begin(), labels.end()));
}

Var irm_scale_grad(Var logits, const std::vector<int>& labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) shape_error("irm_scale_grad", "logits must be [n,C], got " + shape_str(z));
  std::size_t n = z.rows(), c = z.cols();
  if (labels.size() != n) {
    shape_error("irm_scale_grad",
                "label count " + std::to_string(labels.size()) + " does not match batch " + std::to_string(n));
  }
  Tensor probs = Tensor::zeros({n, c});
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      shape_error("irm_scale_grad", "label " + std::to_string(y) + " out of range");
    }
    const double* zi = z.data() + i * c;
    double zmax = zi[0];
    for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, zi[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(zi[j] - zmax);
    double lse = zmax + std::log(denom);
    double pz = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double p = std::exp(zi[j] - lse);
      probs[i * c + j] = p;
      pz += p * zi[j];
    }
    acc += pz - zi[static_cast<std::size_t>(y)];
  }
  Var in[] = {logits};
  return emit_op("irm_scale_grad", OpKind::IrmScaleGrad, in, Tensor::scalar(acc / static_cast<double>(n)),
                 std::move(probs), std::vector<std::int32_t>(labels.begin(), labels.end()));
}

Var mmd2(Var x, Var y, std::span<const double> bandwidths) {
  const Tensor& tx = x.value();
  const Tensor& ty = y.value();
  if (tx.rank() != 1 || ty.rank() != 1) {
    shape_error("mmd2", "rank-1 samples required, got " + shape_str(tx) + " and " + shape_str(ty));
  }
  if (tx.size() == 0 || ty.size() == 0) shape_error("mmd2", "empty sample");
  if (bandwidths.empty()) shape_error("mmd2", "empty bandwidth set");
  for (double s : bandwidths) {
    if (!(s > 0.0)) shape_error("mmd2", "bandwidth must be positive, got " + std::to_string(s));
  }
  std::size_t n = tx.size(), m = ty.size();
  double kxx = 0.0, kxy = 0.0, kyy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) kxx += rbf_avg(tx[i], tx[j], bandwidths);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) kxy += rbf_avg(tx[i], ty[j], bandwidths);
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) kyy += rbf_avg(ty[i], ty[j], bandwidths);
  }
  double nn = static_cast<double>(n), mm = static_cast<double>(m);
  double v = kxx / (nn * nn) - 2.0 * kxy / (nn * mm) + kyy / (mm * mm);
  Var in[] = {x, y};
  return emit_op("mmd2", OpKind::Mmd2, in, Tensor::scalar(v), {}, {},
                 std::vector<double>(bandwidths.begin(), bandwidths.end()));
}

Var variance(Var v) {
  Var m = mean(v);
  return mean(square(sub_scalar(v, m)));
}

std::vector<Tensor> Tape::backward(Var root) const {
  if (!root.valid() || root.tape != this) {
    throw std::invalid_argument("backward: root is not a node of this tape");
  }
  const Node& r = node(root.id);
  if (!r.value.is_scalar()) {
    throw std::invalid_argument("backward: root must be scalar, got " + shape_str(r.value));
  }

  std::vector<Tensor> grads(nodes_.size());
  auto acc_slot = [&](std::int32_t in) -> Tensor* {
    const Node& ni = nodes_[static_cast<std::size_t>(in)];
    if (!ni.requires_grad) return nullptr;
    Tensor& g = grads[static_cast<std::size_t>(in)];
    if (g.empty() && !(ni.value.is_scalar())) g = Tensor::zeros(ni.value.shape());
    if (g.empty()) g = Tensor::scalar(0.0);
    return &g;
  };

  if (r.requires_grad) {
    grads[static_cast<std::size_t>(root.id)] = Tensor::scalar(1.0);
    for (std::int32_t id = root.id; id >= 0; --id) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      const Tensor& g = grads[static_cast<std::size_t>(id)];
      if (g.empty() || n.kind == OpKind::Leaf || !n.requires_grad) continue;
      switch (n.kind) {
        case OpKind::Add: {
          if (Tensor* da = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
          if (Tensor* db = acc_slot(n.inputs[1]))
            for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i];
          break;
        }
        case OpKind::Sub: {
          if (Tensor* da = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
          if (Tensor* db = acc_slot(n.inputs[1]))
            for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] -= g[i];
          break;
        }
        case OpKind::Mul: {
          const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
          const Tensor& b = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
          if (Tensor* da = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * b[i];
          if (Tensor* db = acc_slot(n.inputs[1]))
            for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * a[i];
          break;
        }
        case OpKind::Scale: {
          double c = n.daux[0];
          if (Tensor* da = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += c * g[i];
          break;
        }
        case OpKind::MatMul: {
          const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
          const Tensor& b = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
          auto nr = static_cast<Eigen::Index>(a.rows());
          auto nk = static_cast<Eigen::Index>(a.cols());
          auto nm = static_cast<Eigen::Index>(b.cols());
          ConstMap A(a.data(), nr, nk), B(b.data(), nk, nm), G(g.data(), nr, nm);
          if (Tensor* da = acc_slot(n.inputs[0])) {
            MutMap D(da->data(), nr, nk);
            D.noalias() += G * B.transpose();
          }
          if (Tensor* db = acc_slot(n.inputs[1])) {
            MutMap D(db->data(), nk, nm);
            D.noalias() += A.transpose() * G;
          }
          break;
        }
        case OpKind::AddRow: {
          const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
          std::size_t nr = a.rows(), nm = a.cols();
          if (Tensor* da = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
          if (Tensor* dr = acc_slot(n.inputs[1])) {
            for (std::size_t i = 0; i < nr; ++i)
              for (std::size_t j = 0; j < nm; ++j) (*dr)[j] += g[i * nm + j];
          }
          break;
        }
        case OpKind::SubScalar: {
          if (Tensor* dt = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*dt)[i] += g[i];
          if (Tensor* ds = acc_slot(n.inputs[1])) {
            double s = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
            (*ds)[0] -= s;
          }
          break;
        }
        case OpKind::Relu: {
          const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
          if (Tensor* dx = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += x[i] > 0.0 ? g[i] : 0.0;
          break;
        }
        case OpKind::Sigmoid: {
          if (Tensor* dx = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
          break;
        }
        case OpKind::Exp: {
          if (Tensor* dx = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * n.value[i];
          break;
        }
        case OpKind::Log: {
          const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
          if (Tensor* dx = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] / x[i];
          break;
        }
        case OpKind::Square: {
          const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
          if (Tensor* dx = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += 2.0 * x[i] * g[i];
          break;
        }
        case OpKind::Sum: {
          double gv = g.value();
          if (Tensor* dx = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += gv;
          break;
        }
        case OpKind::Mean: {
          const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
          double gv = g.value() / static_cast<double>(x.size());
          if (Tensor* dx = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += gv;
          break;
        }
        case OpKind::Concat: {
          std::size_t off = 0;
          for (std::int32_t in_id : n.inputs) {
            const Tensor& part = nodes_[static_cast<std::size_t>(in_id)].value;
            if (Tensor* dp = acc_slot(in_id)) {
              for (std::size_t i = 0; i < part.size(); ++i) (*dp)[i] += g[off + i];
            }
            off += part.size();
          }
          break;
        }
        case OpKind::Dropout: {
          if (Tensor* dx = acc_slot(n.inputs[0]))
            for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * n.saved[i];
          break;
        }
        case OpKind::SoftmaxXent: {
          const Tensor& probs = n.saved;
          std::size_t rows = probs.rows(), cols = probs.cols();
          if (Tensor* dz = acc_slot(n.inputs[0])) {
            for (std::size_t i = 0; i < rows; ++i) {
              double gi = g[i];
              auto y = static_cast<std::size_t>(n.iaux[i]);
              for (std::size_t j = 0; j < cols; ++j) {
                double delta = (j == y) ? 1.0 : 0.0;
                (*dz)[i * cols + j] += gi * (probs[i * cols + j] - delta);
              }
            }
          }
          break;
        }
        case OpKind::IrmScaleGrad: {
          const Tensor& z = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
          const Tensor& probs = n.saved;
          std::size_t rows = probs.rows(), cols = probs.cols();
          double gv = g.value() / static_cast<double>(rows);
          if (Tensor* dz = acc_slot(n.inputs[0])) {
            for (std::size_t i = 0; i < rows; ++i) {
              double pz = 0.0;
              for (std::size_t j = 0; j < cols; ++j) pz += probs[i * cols + j] * z[i * cols + j];
              auto y = static_cast<std::size_t>(n.iaux[i]);
              for (std::size_t j = 0; j < cols; ++j) {
                double p = probs[i * cols + j];
                double delta = (j == y) ? 1.0 : 0.0;
                (*dz)[i * cols + j] += gv * (p * (1.0 + z[i * cols + j] - pz) - delta);
              }
            }
          }
          break;
        }
        case OpKind::Mmd2: {
          const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
          const Tensor& y = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
          std::span<const double> bw(n.daux);
          std::size_t nx = x.size(), ny = y.size();
          double fx = static_cast<double>(nx), fy = static_cast<double>(ny);
          double gv = g.value();
          if (Tensor* dx = acc_slot(n.inputs[0])) {
            for (std::size_t p = 0; p < nx; ++p) {
              double sxx = 0.0, sxy = 0.0;
              for (std::size_t j = 0; j < nx; ++j) sxx += rbf_avg_du(x[p], x[j], bw);
              for (std::size_t j = 0; j < ny; ++j) sxy += rbf_avg_du(x[p], y[j], bw);
              (*dx)[p] += gv * (2.0 * sxx / (fx * fx) - 2.0 * sxy / (fx * fy));
            }
          }
          if (Tensor* dy = acc_slot(n.inputs[1])) {
            for (std::size_t q = 0; q < ny; ++q) {
              double syy = 0.0, syx = 0.0;
              for (std::size_t j = 0; j < ny; ++j) syy += rbf_avg_du(y[q], y[j], bw);
              for (std::size_t i = 0; i < nx; ++i) syx += rbf_avg_du(y[q], x[i], bw);
              (*dy)[q] += gv * (2.0 * syy / (fy * fy) - 2.0 * syx / (fx * fy));
            }
          }
          break;
        }
        case OpKind::Leaf:
          break;
      }
    }
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::Leaf && nodes_[i].requires_grad && grads[i].empty()) {
      grads[i] = nodes_[i].value.is_scalar() ? Tensor::scalar(0.0) : Tensor::zeros(nodes_[i].value.shape());
    }
  }
  return grads;
}

}  // namespace rdm::ad
