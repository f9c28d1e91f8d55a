// Internal: zero-copy Eigen views of Tensor storage.
#pragma once

#include <Eigen/Core>

#include "arf/tensor.h"

namespace arf::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap cmap(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
inline MutMap mmap(Tensor& t) { return MutMap(t.data(), t.rows(), t.cols()); }

}  // namespace arf::detail
