#include "test_support.hpp"

#include "pointgcn/chebfilter.hpp"

#include <doctest.h>

using namespace pointgcn;
using namespace pointgcn::testing;

namespace {

ChebFilterBank<double> random_bank(int K, Eigen::Index cin, Eigen::Index cout, std::uint64_t seed, bool bias = false) {
    ChebFilterBank<double> b(K, cin, cout, bias);
    b.theta = random_matrix<double>(b.theta.rows(), b.theta.cols(), seed);
    if (bias) b.bias = random_matrix<double>(cout, 1, seed + 1);
    return b;
}

SparseMatrix<double> random_laplacian(std::size_t n, std::size_t k, std::uint64_t seed) {
    return build_rescaled_laplacian(random_cloud(n, seed), {k}).matrix;
}

}  // namespace

TEST_CASE("order 0 with unit coefficient is the identity") {
    const SparseMatrix<double> Lt = random_laplacian(10, 3, 1);
    ChebFilterBank<double> b(0, 1, 1);
    b.at(0, 0, 0) = 1.0;
    const Matrix<double> X = random_matrix<double>(10, 1, 2);
    CHECK((cheb_apply(Lt, X, b) - X).norm() == 0.0);
}

TEST_CASE("order 1 with coefficients [0, 1] applies the Laplacian") {
    const SparseMatrix<double> Lt = random_laplacian(10, 3, 1);
    ChebFilterBank<double> b(1, 1, 1);
    b.at(1, 0, 0) = 1.0;
    const Matrix<double> X = random_matrix<double>(10, 1, 2);
    CHECK(relative_error(cheb_apply(Lt, X, b), Matrix<double>(Lt * X)) < 1e-15);
}

TEST_CASE("recursion matches the spectral oracle") {
    const SparseMatrix<double> Lt = random_laplacian(15, 4, 3);
    const auto bank = random_bank(3, 2, 3, 4, true);
    const Matrix<double> X = random_matrix<double>(15, 2, 5);
    CHECK(relative_error(cheb_apply(Lt, X, bank), cheb_spectral_oracle(dense(Lt), X, bank)) < 1e-6);
}

TEST_CASE("spectral oracle on a diagonal operator") {
    // T_k(x) = cos(k arccos x) on [-1, 1]
    const Eigen::VectorXd lambda = Eigen::VectorXd::LinSpaced(6, -0.9, 0.8);
    const Eigen::MatrixXd Lt = lambda.asDiagonal();
    const auto bank = random_bank(4, 2, 2, 7);
    const Matrix<double> X = random_matrix<double>(6, 2, 8);
    const Matrix<double> Y = cheb_spectral_oracle(Lt, X, bank);
    for (Eigen::Index i = 0; i < 6; ++i)
        for (Eigen::Index o = 0; o < 2; ++o) {
            double want = 0.0;
            for (int k = 0; k <= 4; ++k)
                for (Eigen::Index c = 0; c < 2; ++c) want += bank.at(k, c, o) * std::cos(k * std::acos(lambda(i))) * X(i, c);
            CHECK(Y(i, o) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("constant polynomial in the oracle mixes channels only") {
    const SparseMatrix<double> Lt = random_laplacian(12, 3, 9);
    ChebFilterBank<double> b(3, 3, 2);
    b.theta.topRows(3) = random_matrix<double>(3, 2, 10);
    const Matrix<double> X = random_matrix<double>(12, 3, 11);
    CHECK(relative_error(cheb_spectral_oracle(dense(Lt), X, b), Matrix<double>(X * b.theta.topRows(3))) < 1e-12);
}

TEST_CASE("spectral oracle rejects non-symmetric input") {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
    A(0, 1) = 0.5;
    CHECK_THROWS(cheb_spectral_oracle(A, Matrix<double>::Ones(3, 1), random_bank(1, 1, 1, 1)));
}

TEST_CASE("cheb_apply shape checks") {
    const SparseMatrix<double> Lt = random_laplacian(10, 3, 1);
    CHECK_THROWS(cheb_apply(Lt, Matrix<double>(Matrix<double>::Ones(9, 2)), random_bank(2, 2, 1, 1)));
    CHECK_THROWS(cheb_apply(Lt, Matrix<double>(Matrix<double>::Ones(10, 3)), random_bank(2, 2, 1, 1)));
}

TEST_CASE("backward of a zero upstream gradient is zero") {
    const SparseMatrix<double> Lt = random_laplacian(12, 3, 2);
    const auto bank = random_bank(3, 2, 2, 3);
    const auto g = cheb_backward(Lt, random_matrix<double>(12, 2, 4), bank, Matrix<double>(Matrix<double>::Zero(12, 2)));
    CHECK(g.dX.norm() == 0.0);
    CHECK(g.dTheta.norm() == 0.0);
}

TEST_CASE("backward of the identity filter") {
    const SparseMatrix<double> Lt = random_laplacian(12, 3, 2);
    ChebFilterBank<double> b(0, 1, 1);
    b.at(0, 0, 0) = 1.0;
    const Matrix<double> X = random_matrix<double>(12, 1, 5);
    const Matrix<double> dY = random_matrix<double>(12, 1, 6);
    const auto g = cheb_backward(Lt, X, b, dY);
    CHECK((g.dX - dY).norm() == 0.0);
    CHECK(g.dTheta(0, 0) == doctest::Approx(X.col(0).dot(dY.col(0))).epsilon(1e-14));
}

TEST_CASE("backward matches central finite differences") {
    const SparseMatrix<double> Lt = random_laplacian(12, 4, 12);
    auto bank = random_bank(3, 2, 3, 13, true);
    Matrix<double> X = random_matrix<double>(12, 2, 14);
    auto loss = [&] { return cheb_apply(Lt, X, bank).squaredNorm(); };
    const Matrix<double> dY = 2.0 * cheb_apply(Lt, X, bank);
    const auto g = cheb_backward(Lt, X, bank, dY);

    const auto ndx = numeric_gradient(X.data(), std::size_t(X.size()), loss, 1e-3);
    CHECK(gradient_error(flat(g.dX), ndx) < 1e-5);
    const auto ndt = numeric_gradient(bank.theta.data(), std::size_t(bank.theta.size()), loss, 1e-3);
    CHECK(gradient_error(flat(g.dTheta), ndt) < 1e-5);
    const auto ndb = numeric_gradient(bank.bias.data(), std::size_t(bank.bias.size()), loss, 1e-3);
    CHECK(gradient_error(flat(g.dBias), ndb) < 1e-5);
}

TEST_CASE("single precision backward agrees with double") {
    const SparseMatrix<double> Lt = random_laplacian(30, 5, 21);
    const auto bank = random_bank(3, 4, 5, 22, true);
    const Matrix<double> X = random_matrix<double>(30, 4, 23);
    const Matrix<double> dY = random_matrix<double>(30, 5, 24);
    const auto gd = cheb_backward(Lt, X, bank, dY);
    ChebFilterBank<float> bf(3, 4, 5, true);
    bf.theta = bank.theta.cast<float>();
    bf.bias = bank.bias.cast<float>();
    const SparseMatrix<float> Ltf = Lt.cast<float>();
    const auto gf = cheb_backward(Ltf, Matrix<float>(X.cast<float>()), bf, Matrix<float>(dY.cast<float>()));
    CHECK(relative_error(gf.dX.cast<double>(), gd.dX) < 1e-5);
    CHECK(relative_error(gf.dTheta.cast<double>(), gd.dTheta) < 1e-5);
    CHECK(relative_error(cheb_apply(Ltf, Matrix<float>(X.cast<float>()), bf).cast<double>(), cheb_apply(Lt, X, bank)) <
          1e-5);
}

TEST_CASE("cheb_apply is permutation equivariant") {
    const PointCloud c = random_cloud(40, 31);
    const auto perm = random_permutation(40, 32);
    const SparseMatrix<double> Lt = build_rescaled_laplacian(c, {6}).matrix;
    const auto bank = random_bank(3, 2, 2, 33);
    const Matrix<double> X = random_matrix<double>(40, 2, 34);
    Eigen::MatrixXd Pd = Eigen::MatrixXd::Zero(40, 40);
    for (std::size_t i = 0; i < 40; ++i) Pd(Eigen::Index(i), Eigen::Index(perm[i])) = 1.0;
    const Matrix<double> PX = Pd * X;
    const SparseMatrix<double> PLPt = (Pd * dense(Lt) * Pd.transpose()).sparseView();
    const Matrix<double> lhs = cheb_apply(PLPt, PX, bank);
    const Matrix<double> rhs = Pd * cheb_apply(Lt, X, bank);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("filter response is K-hop local") {
    const PointCloud c = random_cloud(80, 41);
    const WeightedGraph g = knn_graph(c, 3);
    const SparseMatrix<double> Lt = build_rescaled_laplacian(c, {3}).matrix;
    for (int K : {1, 2, 3}) {
        const auto bank = random_bank(K, 2, 2, 42 + std::uint64_t(K));
        const Matrix<double> X = random_matrix<double>(80, 2, 50);
        Matrix<double> X2 = X;
        const std::size_t j = 17;
        X2.row(Eigen::Index(j)) += Eigen::RowVector2d(0.7, -0.3);
        const Matrix<double> dY = cheb_apply(Lt, X2, bank) - cheb_apply(Lt, X, bank);
        const auto hops = hop_distances(g.adjacency, j);
        int near_changed = 0;
        for (Eigen::Index i = 0; i < 80; ++i) {
            const bool far = hops[std::size_t(i)] < 0 || hops[std::size_t(i)] > K;
            if (far) CHECK(dY.row(i).cwiseAbs().maxCoeff() == 0.0);
            else near_changed += dY.row(i).cwiseAbs().maxCoeff() > 0.0;
        }
        CHECK(near_changed > 1);
    }
}

TEST_CASE("cheb_apply is linear in X and in theta") {
    const SparseMatrix<double> Lt = random_laplacian(20, 4, 61);
    const auto a = random_bank(2, 3, 2, 62), b = random_bank(2, 3, 2, 63);
    const Matrix<double> X = random_matrix<double>(20, 3, 64), Z = random_matrix<double>(20, 3, 65);
    CHECK(relative_error(cheb_apply(Lt, Matrix<double>(2.0 * X - 0.5 * Z), a),
                         Matrix<double>(2.0 * cheb_apply(Lt, X, a) - 0.5 * cheb_apply(Lt, Z, a))) < 1e-12);
    ChebFilterBank<double> ab = a;
    ab.theta = 3.0 * a.theta + b.theta;
    CHECK(relative_error(cheb_apply(Lt, X, ab), Matrix<double>(3.0 * cheb_apply(Lt, X, a) + cheb_apply(Lt, X, b))) <
          1e-12);
}
