// Dense row-major float64 tensors and the stateless kernels that operate on
// them. Everything differentiable lives in autograd.h; this header only knows
// about values.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "arf/check.h"

namespace arf {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> data);

  // Convenience for hand-written matrices in tests and examples.
  static Tensor matrix(int rows, int cols, std::initializer_list<double> values);
  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 accessors. A rank-1 tensor is treated as a single row.
  int rows() const;
  int cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(int r);
  std::span<const double> row(int r) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  double item() const;

  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

bool same_shape(const Tensor& a, const Tensor& b);

// Forward kernels. All take rank-2 inputs unless stated otherwise.
namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a^T * b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// log(sum(exp(x))). Entries may be -inf; all -inf gives -inf.
double logsumexp(std::span<const double> x);
double log_add(double a, double b);

double gelu(double x);
double gelu_grad(double x);

}  // namespace kernels

}  // namespace arf
