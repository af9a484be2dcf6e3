#include "rdm/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rdm {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " does not match data length " +
                                std::to_string(data_.size()));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::vector(std::vector<double> data) {
  std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("Tensor::rows: rank-2 required, got " + shape_str(*this));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("Tensor::cols: rank-2 required, got " + shape_str(*this));
  return shape_[1];
}

double& Tensor::at2(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

double Tensor::value() const {
  if (!is_scalar()) throw std::invalid_argument("Tensor::value: scalar required, got " + shape_str(*this));
  return data_[0];
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

bool all_finite(const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) return false;
  }
  return true;
}

void require_finite(const Tensor& t, const std::string& what) {
  if (!all_finite(t)) {
    throw std::invalid_argument(what + ": non-finite value encountered");
  }
}

}  // namespace rdm
