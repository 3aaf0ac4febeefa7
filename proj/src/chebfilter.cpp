#include "pointgcn/chebfilter.hpp"

#include <stdexcept>
#include <string>

namespace pointgcn {

namespace {

template <typename T>
void check_bank(const ChebFilterBank<T>& bank) {
    if (bank.order < 0) throw std::invalid_argument("chebfilter: negative order");
    if (bank.theta.rows() != (bank.order + 1) * bank.in_channels || bank.theta.cols() != bank.out_channels)
        throw std::invalid_argument("chebfilter: theta shape does not match (K+1) x C_in x C_out");
    if (bank.has_bias() && bank.bias.size() != bank.out_channels)
        throw std::invalid_argument("chebfilter: bias length does not match C_out");
}

template <typename T>
void check_input(const SparseMatrix<T>& Lt, Eigen::Index rows, Eigen::Index cols, const ChebFilterBank<T>& bank) {
    check_bank(bank);
    if (Lt.rows() != Lt.cols()) throw std::invalid_argument("chebfilter: Laplacian is not square");
    if (rows != Lt.rows())
        throw std::invalid_argument("chebfilter: feature rows (" + std::to_string(rows) +
                                    ") != graph size (" + std::to_string(Lt.rows()) + ")");
    if (cols != bank.in_channels)
        throw std::invalid_argument("chebfilter: feature channels (" + std::to_string(cols) +
                                    ") != filter input channels (" + std::to_string(bank.in_channels) + ")");
}

}  // namespace

template <typename T>
Matrix<T> chebyshev_basis(const SparseMatrix<T>& Lt, const Matrix<T>& X, int K) {
    const Eigen::Index n = X.rows(), c = X.cols();
    Matrix<T> basis(n, (K + 1) * c);
    basis.leftCols(c) = X;
    if (K >= 1) basis.middleCols(c, c).noalias() = Lt * X;
    for (int k = 2; k <= K; ++k) {
        basis.middleCols(k * c, c).noalias() = T(2) * (Lt * basis.middleCols((k - 1) * c, c));
        basis.middleCols(k * c, c) -= basis.middleCols((k - 2) * c, c);
    }
    return basis;
}

template <typename T>
Matrix<T> cheb_apply_basis(const Matrix<T>& basis, const ChebFilterBank<T>& bank) {
    check_bank(bank);
    if (basis.cols() != bank.theta.rows()) throw std::invalid_argument("chebfilter: basis width mismatch");
    Matrix<T> Y = basis * bank.theta;
    if (bank.has_bias()) Y.rowwise() += bank.bias.transpose();
    return Y;
}

template <typename T>
Matrix<T> cheb_apply(const SparseMatrix<T>& Lt, const Matrix<T>& X, const ChebFilterBank<T>& bank) {
    check_input(Lt, X.rows(), X.cols(), bank);
    return cheb_apply_basis(chebyshev_basis(Lt, X, bank.order), bank);
}

template <typename T>
ChebGradients<T> cheb_backward_basis(const SparseMatrix<T>& Lt, const Matrix<T>& basis,
                                     const ChebFilterBank<T>& bank, const Matrix<T>& dY, bool want_dx) {
    check_bank(bank);
    const Eigen::Index c = bank.in_channels;
    const int K = bank.order;
    if (basis.cols() != bank.theta.rows() || basis.rows() != Lt.rows())
        throw std::invalid_argument("chebfilter: basis shape mismatch in backward");
    if (dY.rows() != basis.rows() || dY.cols() != bank.out_channels)
        throw std::invalid_argument("chebfilter: upstream gradient shape mismatch");

    ChebGradients<T> g;
    // coefficient gradients accumulate in double
    g.dTheta = (basis.template cast<double>().transpose() * dY.template cast<double>()).template cast<T>();
    if (bank.has_bias()) g.dBias = dY.template cast<double>().colwise().sum().transpose().template cast<T>();
    if (!want_dx) return g;

    // dX = sum_k T_k(Lt) (dY theta_k^T), evaluated by Clenshaw's recurrence
    const Matrix<T> G = dY * bank.theta.transpose();
    const Eigen::Index n = dY.rows();
    Matrix<T> b1 = Matrix<T>::Zero(n, c), b2 = Matrix<T>::Zero(n, c), b0(n, c);
    for (int k = K; k >= 1; --k) {
        b0.noalias() = T(2) * (Lt * b1);
        b0 += G.middleCols(k * c, c) - b2;
        std::swap(b2, b1);
        std::swap(b1, b0);
    }
    g.dX = G.leftCols(c) - b2;
    if (K >= 1) g.dX.noalias() += Lt * b1;
    return g;
}

template <typename T>
ChebGradients<T> cheb_backward(const SparseMatrix<T>& Lt, const Matrix<T>& X, const ChebFilterBank<T>& bank,
                               const Matrix<T>& dY) {
    check_input(Lt, X.rows(), X.cols(), bank);
    return cheb_backward_basis(Lt, chebyshev_basis(Lt, X, bank.order), bank, dY, true);
}

Matrix<double> cheb_spectral_oracle(const Matrix<double>& Lt_dense, const Matrix<double>& X,
                                    const ChebFilterBank<double>& bank) {
    check_bank(bank);
    const Eigen::Index n = Lt_dense.rows();
    if (Lt_dense.cols() != n) throw std::invalid_argument("cheb_spectral_oracle: matrix is not square");
    const double scale = std::max(1.0, Lt_dense.cwiseAbs().maxCoeff());
    if ((Lt_dense - Lt_dense.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw std::invalid_argument("cheb_spectral_oracle: matrix is not symmetric");
    if (X.rows() != n || X.cols() != bank.in_channels)
        throw std::invalid_argument("cheb_spectral_oracle: feature shape mismatch");

    Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(Lt_dense);
    if (eig.info() != Eigen::Success) throw std::runtime_error("cheb_spectral_oracle: eigensolver failed");
    const Matrix<double>& U = eig.eigenvectors();
    const Vector<double>& lambda = eig.eigenvalues();
    const Matrix<double> Xhat = U.transpose() * X;

    // Tk(i, k) = T_k(lambda_i)
    const int K = bank.order;
    Matrix<double> Tk(n, K + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        Tk(i, 0) = 1.0;
        if (K >= 1) Tk(i, 1) = lambda[i];
        for (int k = 2; k <= K; ++k) Tk(i, k) = 2.0 * lambda[i] * Tk(i, k - 1) - Tk(i, k - 2);
    }

    const Eigen::Index cin = bank.in_channels;
    Matrix<double> Yhat = Matrix<double>::Zero(n, bank.out_channels);
    for (int k = 0; k <= K; ++k) {
        const Matrix<double> theta_k = bank.theta.middleRows(k * cin, cin);
        Yhat += Tk.col(k).asDiagonal() * (Xhat * theta_k);
    }
    Matrix<double> Y = U * Yhat;
    if (bank.has_bias()) Y.rowwise() += bank.bias.transpose();
    return Y;
}

#define POINTGCN_INSTANTIATE(T)                                                                             \
    template Matrix<T> chebyshev_basis<T>(const SparseMatrix<T>&, const Matrix<T>&, int);                  \
    template Matrix<T> cheb_apply<T>(const SparseMatrix<T>&, const Matrix<T>&, const ChebFilterBank<T>&);  \
    template Matrix<T> cheb_apply_basis<T>(const Matrix<T>&, const ChebFilterBank<T>&);                    \
    template ChebGradients<T> cheb_backward<T>(const SparseMatrix<T>&, const Matrix<T>&,                   \
                                               const ChebFilterBank<T>&, const Matrix<T>&);                \
    template ChebGradients<T> cheb_backward_basis<T>(const SparseMatrix<T>&, const Matrix<T>&,             \
                                                     const ChebFilterBank<T>&, const Matrix<T>&, bool);

POINTGCN_INSTANTIATE(float)
POINTGCN_INSTANTIATE(double)
#undef POINTGCN_INSTANTIATE

}  // namespace pointgcn
