#include "arf/tensor.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace arf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t extent_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    ARF_CHECK(e > 0, "tensor extents must be positive, got " << e);
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

ConstMap as_map(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
MutMap as_map(Tensor& t) { return MutMap(t.data(), t.rows(), t.cols()); }

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(extent_product(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  ARF_CHECK(extent_product(shape_) == data_.size(),
            "shape product " << extent_product(shape_) << " != data length " << data_.size());
}

Tensor Tensor::matrix(int rows, int cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

int Tensor::rows() const {
  ARF_CHECK(rank() == 1 || rank() == 2, "rank-2 accessor on rank " << rank());
  return rank() == 1 ? 1 : shape_[0];
}

int Tensor::cols() const {
  ARF_CHECK(rank() == 1 || rank() == 2, "rank-2 accessor on rank " << rank());
  return rank() == 1 ? shape_[0] : shape_[1];
}

std::span<double> Tensor::row(int r) {
  const int c = cols();
  return {data_.data() + static_cast<std::size_t>(r) * c, static_cast<std::size_t>(c)};
}

std::span<const double> Tensor::row(int r) const {
  const int c = cols();
  return {data_.data() + static_cast<std::size_t>(r) * c, static_cast<std::size_t>(c)};
}

double Tensor::item() const {
  ARF_CHECK(data_.size() == 1, "item() on tensor with " << data_.size() << " values");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  ARF_CHECK(a.cols() == b.rows(),
            "matmul inner extents differ: " << a.cols() << " vs " << b.rows());
  Tensor out({a.rows(), b.cols()});
  as_map(out).noalias() = as_map(a) * as_map(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  ARF_CHECK(a.cols() == b.cols(),
            "matmul_nt inner extents differ: " << a.cols() << " vs " << b.cols());
  Tensor out({a.rows(), b.rows()});
  as_map(out).noalias() = as_map(a) * as_map(b).transpose();
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  ARF_CHECK(a.rows() == b.rows(),
            "matmul_tn inner extents differ: " << a.rows() << " vs " << b.rows());
  Tensor out({a.cols(), b.cols()});
  as_map(out).noalias() = as_map(a).transpose() * as_map(b);
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  as_map(out) = as_map(a).transpose();
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out = x;
  for (int r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  Tensor out = x;
  for (int r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double lse = logsumexp(row);
    for (double& v : row) v -= lse;
  }
  return out;
}

double logsumexp(std::span<const double> x) {
  ARF_CHECK(!x.empty(), "logsumexp of empty sequence");
  const double mx = *std::max_element(x.begin(), x.end());
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

}  // namespace kernels

}  // namespace arf
