#include "rdm/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "rdm/errors.hpp"
#include "rdm/rng.hpp"

namespace rdm::model {

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (const Tensor& w : weights) n += w.size();
  for (const Tensor& b : biases) n += b.size();
  return n;
}

std::vector<Tensor> MlpParams::flatten() const {
  std::vector<Tensor> flat;
  flat.reserve(2 * num_layers());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    flat.push_back(weights[l]);
    flat.push_back(biases[l]);
  }
  return flat;
}

void MlpParams::unflatten(const std::vector<Tensor>& flat) {
  for (std::size_t l = 0; l < num_layers(); ++l) {
    weights[l] = flat[2 * l];
    biases[l] = flat[2 * l + 1];
  }
}

MlpParams init_xavier(const std::vector<std::size_t>& dims, std::uint64_t seed, double dropout_rate) {
  if (dims.size() < 2) throw ConfigError("model: at least input and output dims required");
  MlpParams p;
  p.dims = dims;
  p.dropout_rate = dropout_rate;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::size_t fan_in = dims[l], fan_out = dims[l + 1];
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-a, a);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Tensor::zeros({fan_out}));
  }
  return p;
}

BoundParams bind(ad::Tape& tape, const MlpParams& params) {
  BoundParams bp;
  bp.src = &params;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    bp.weights.push_back(tape.leaf(params.weights[l], true));
    bp.biases.push_back(tape.leaf(params.biases[l], true));
  }
  return bp;
}

namespace {

ad::Var forward_logits(ad::Tape& tape, const BoundParams& params, const Tensor& inputs, bool train_mode,
                       std::uint64_t step_seed, int domain_id) {
  const MlpParams& src = *params.src;
  if (inputs.rank() != 2 || inputs.cols() != src.input_dim()) {
    throw std::invalid_argument("forward_risks: input width " + shape_str(inputs) + " does not match model input " +
                                std::to_string(src.input_dim()));
  }
  ad::Var h = tape.leaf(inputs, false);
  std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    h = ad::add_row(ad::matmul(h, params.weights[l]), params.biases[l]);
    if (l + 1 < layers) {
      h = ad::relu(h);
      if (train_mode && src.dropout_rate > 0.0) {
        std::uint64_t mask_seed = mix64(mix64(step_seed, static_cast<std::uint64_t>(domain_id) + 1), l + 1);
        h = ad::dropout(h, src.dropout_rate, mask_seed);
      }
    }
  }
  return h;
}

}  // namespace

ForwardResult forward_risks(ad::Tape& tape, const BoundParams& params, const Tensor& inputs,
                            const std::vector<int>& labels, bool train_mode, std::uint64_t step_seed, int domain_id) {
  ad::Var logits = forward_logits(tape, params, inputs, train_mode, step_seed, domain_id);
  ad::Var risks = ad::softmax_xent(logits, labels);
  return {logits, risks};
}

ForwardResult forward_risks(ad::Tape& tape, const BoundParams& params, const data::DomainBatch& batch,
                            bool train_mode, std::uint64_t step_seed) {
  return forward_risks(tape, params, batch.inputs, batch.labels, train_mode, step_seed, batch.domain_id);
}

Tensor eval_logits(const MlpParams& params, const Tensor& inputs) {
  ad::Tape tape;
  BoundParams bp;
  bp.src = &params;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    bp.weights.push_back(tape.leaf(params.weights[l], false));
    bp.biases.push_back(tape.leaf(params.biases[l], false));
  }
  return forward_logits(tape, bp, inputs, false, 0, 0).value();
}

std::vector<double> eval_risks(const MlpParams& params, const Tensor& inputs, const std::vector<int>& labels) {
  return eval_forward(params, inputs, labels).risks;
}

EvalForward eval_forward(const MlpParams& params, const Tensor& inputs, const std::vector<int>& labels) {
  ad::Tape tape;
  BoundParams bp;
  bp.src = &params;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    bp.weights.push_back(tape.leaf(params.weights[l], false));
    bp.biases.push_back(tape.leaf(params.biases[l], false));
  }
  ad::Var logits = forward_logits(tape, bp, inputs, false, 0, 0);
  ad::Var risks = ad::softmax_xent(logits, labels);
  const Tensor& r = risks.value();
  return {logits.value(), std::vector<double>(r.data(), r.data() + r.size())};
}

void save_checkpoint(const std::string& path, const MlpParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
  out.write("RDMP", 4);
  auto write_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  write_u32(1);  // version
  write_u32(static_cast<std::uint32_t>(params.dims.size()));
  for (std::size_t d : params.dims) write_u32(static_cast<std::uint32_t>(d));
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    out.write(reinterpret_cast<const char*>(params.weights[l].data()),
              static_cast<std::streamsize>(params.weights[l].size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(params.biases[l].data()),
              static_cast<std::streamsize>(params.biases[l].size() * sizeof(double)));
  }
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

MlpParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RDMP", 4) != 0) throw DataError("checkpoint: wrong magic in " + path);
  auto read_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw DataError("checkpoint: truncated file " + path);
    return v;
  };
  std::uint32_t version = read_u32();
  if (version != 1) throw DataError("checkpoint: unsupported version in " + path);
  std::uint32_t ndims = read_u32();
  if (ndims < 2) throw DataError("checkpoint: invalid dims in " + path);
  MlpParams p;
  for (std::uint32_t i = 0; i < ndims; ++i) p.dims.push_back(read_u32());
  for (std::size_t l = 0; l + 1 < p.dims.size(); ++l) {
    Tensor w = Tensor::zeros({p.dims[l], p.dims[l + 1]});
    in.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
    Tensor b = Tensor::zeros({p.dims[l + 1]});
    in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated file " + path);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

}  // namespace rdm::model
