#ifndef POINTGCN_CHEBFILTER_HPP
#define POINTGCN_CHEBFILTER_HPP

#include "pointgcn/tensor.hpp"

namespace pointgcn {

/// Learnable Chebyshev coefficients theta[k][c][o] for k = 0..K.
///
/// Stored as a single ((K+1) * C_in) x C_out matrix, block k occupying rows
/// [k * C_in, (k+1) * C_in), so the filter response is one product of the
/// stacked basis [T_0 X | T_1 X | ... | T_K X] with `theta`. An empty `bias`
/// disables the per-output-channel offset.
template <typename T>
struct ChebFilterBank {
    int order = 0;
    Eigen::Index in_channels = 0;
    Eigen::Index out_channels = 0;
    Matrix<T> theta;
    Vector<T> bias;

    ChebFilterBank() = default;
    ChebFilterBank(int K, Eigen::Index c_in, Eigen::Index c_out, bool with_bias = false)
        : order(K), in_channels(c_in), out_channels(c_out),
          theta(Matrix<T>::Zero((K + 1) * c_in, c_out)),
          bias(with_bias ? Vector<T>::Zero(c_out) : Vector<T>()) {}

    T& at(int k, Eigen::Index c, Eigen::Index o) { return theta(k * in_channels + c, o); }
    T at(int k, Eigen::Index c, Eigen::Index o) const { return theta(k * in_channels + c, o); }
    bool has_bias() const { return bias.size() > 0; }
};

template <typename T>
struct ChebGradients {
    Matrix<T> dX;
    Matrix<T> dTheta;
    Vector<T> dBias;  // empty when the bank has no bias
};

/// Stacked basis [T_0(Lt) X | ... | T_K(Lt) X] via the three-term recursion.
template <typename T>
Matrix<T> chebyshev_basis(const SparseMatrix<T>& Lt, const Matrix<T>& X, int K);

template <typename T>
Matrix<T> cheb_apply(const SparseMatrix<T>& Lt, const Matrix<T>& X, const ChebFilterBank<T>& bank);

/// Filter response from a basis already computed by chebyshev_basis.
template <typename T>
Matrix<T> cheb_apply_basis(const Matrix<T>& basis, const ChebFilterBank<T>& bank);

template <typename T>
ChebGradients<T> cheb_backward(const SparseMatrix<T>& Lt, const Matrix<T>& X, const ChebFilterBank<T>& bank,
                               const Matrix<T>& dY);

/// Backward pass reusing the forward basis. dX is skipped when `want_dx` is false.
template <typename T>
ChebGradients<T> cheb_backward_basis(const SparseMatrix<T>& Lt, const Matrix<T>& basis,
                                     const ChebFilterBank<T>& bank, const Matrix<T>& dY, bool want_dx = true);

/// Reference filter computed in the Laplacian eigenbasis: U g(Lambda) U^T X
/// for every (input, output) channel pair. Dense, O(n^3); for verification.
Matrix<double> cheb_spectral_oracle(const Matrix<double>& Lt_dense, const Matrix<double>& X,
                                    const ChebFilterBank<double>& bank);

}  // namespace pointgcn

#endif  // POINTGCN_CHEBFILTER_HPP
