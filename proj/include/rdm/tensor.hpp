#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace rdm {

// Dense row-major tensor of 64-bit reals. Rank 0 is a scalar (one entry).
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool is_scalar() const { return shape_.empty(); }

  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at2(std::size_t r, std::size_t c);
  double at2(std::size_t r, std::size_t c) const;

  // Value of a scalar tensor.
  double value() const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);
std::string shape_str(const Tensor& t);

bool all_finite(const Tensor& t);

// Throws std::invalid_argument naming `what` if t has a NaN/Inf entry.
void require_finite(const Tensor& t, const std::string& what);

}  // namespace rdm
