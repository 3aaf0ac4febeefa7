#ifndef POINTGCN_TENSOR_HPP
#define POINTGCN_TENSOR_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace pointgcn {

/// Dense column-major matrix. Feature maps are n x C: one row per vertex.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
using SparseMatrix = Eigen::SparseMatrix<T, Eigen::RowMajor>;

template <typename T>
using FeatureMatrix = Matrix<T>;

}  // namespace pointgcn

#endif  // POINTGCN_TENSOR_HPP
