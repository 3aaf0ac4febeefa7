#include "test_support.hpp"

#include <doctest.h>

#include <set>

using namespace pointgcn;
using namespace pointgcn::testing;

namespace {

SparseMatrix<double> sparse_from(const Eigen::MatrixXd& d) { return d.sparseView(); }

WeightedGraph two_vertex_graph() {
    Eigen::MatrixXd w(2, 2);
    w << 0, 1, 1, 0;
    return {2, sparse_from(w), 1.0};
}

std::set<std::pair<int, int>> edge_set(const SparseMatrix<double>& w) {
    std::set<std::pair<int, int>> out;
    for (int r = 0; r < w.outerSize(); ++r)
        for (SparseMatrix<double>::InnerIterator it(w, r); it; ++it) out.insert({int(it.row()), int(it.col())});
    return out;
}

}  // namespace

TEST_CASE("coincident neighbours get weight one") {
    const PointCloud c{{{0, 0, 0}, {0, 0, 0}, {1, 0, 0}, {1, 0.1f, 0}}, std::nullopt};
    const WeightedGraph g = knn_graph(c, 1);
    CHECK(g.adjacency.coeff(0, 1) == 1.0);
    CHECK(g.adjacency.coeff(1, 0) == 1.0);
}

TEST_CASE("three collinear points with k = 1") {
    const PointCloud c{{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}, std::nullopt};
    const WeightedGraph g = knn_graph(c, 1);
    CHECK(edge_set(g.adjacency) == std::set<std::pair<int, int>>{{0, 1}, {1, 0}, {1, 2}, {2, 1}});
    // directed squared distances 1 (0->1), 1 (1->0), 4 (2->1): mean 2
    CHECK(g.sigma_squared == doctest::Approx(2.0));
    CHECK(g.adjacency.coeff(0, 1) == doctest::Approx(std::exp(-0.5)));
    CHECK(g.adjacency.coeff(1, 2) == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("kNN graph is exactly symmetric with weights in (0, 1]") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const WeightedGraph g = knn_graph(random_cloud(60, s), 7);
        const Eigen::MatrixXd w = dense(g.adjacency);
        CHECK((w - w.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(w.diagonal().cwiseAbs().maxCoeff() == 0.0);
        for (int r = 0; r < g.adjacency.outerSize(); ++r)
            for (SparseMatrix<double>::InnerIterator it(g.adjacency, r); it; ++it) {
                CHECK(it.value() > 0.0);
                CHECK(it.value() <= 1.0);
            }
        for (Eigen::Index i = 0; i < w.rows(); ++i) CHECK((w.row(i).array() > 0).count() >= 7);
    }
}

TEST_CASE("kNN graph argument checks") {
    const PointCloud c = random_cloud(5, 1);
    CHECK_THROWS(knn_graph(c, 5));
    CHECK_THROWS(knn_graph(c, 0));
    CHECK_NOTHROW(knn_graph(c, 4));
}

TEST_CASE("mutual symmetrization keeps a subset of union edges") {
    const PointCloud c = random_cloud(40, 13);
    const auto u = edge_set(knn_graph(c, 10).adjacency);
    const auto m = edge_set(knn_graph(c, 10, SigmaPolicy::adaptive(), Symmetrization::Mutual).adjacency);
    CHECK(m.size() < u.size());
    for (const auto& e : m) CHECK(u.count(e) == 1);
}

TEST_CASE("fixed sigma uses the given width") {
    const PointCloud c{{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}, std::nullopt};
    const WeightedGraph g = knn_graph(c, 1, SigmaPolicy::fixed(2.0));
    CHECK(g.adjacency.coeff(0, 1) == doctest::Approx(std::exp(-1.0 / 4.0)));
}

TEST_CASE("normalized Laplacian of a single edge") {
    const Eigen::MatrixXd L = dense(normalized_laplacian(two_vertex_graph()));
    Eigen::MatrixXd want(2, 2);
    want << 1, -1, -1, 1;
    CHECK((L - want).norm() < 1e-15);
    const Eigen::VectorXd ev = eigenvalues(L);
    CHECK(ev(0) == doctest::Approx(0.0));
    CHECK(ev(1) == doctest::Approx(2.0));
}

TEST_CASE("normalized Laplacian kernel is D^(1/2) 1") {
    const WeightedGraph g = knn_graph(random_cloud(50, 3), 6);
    const SparseMatrix<double> L = normalized_laplacian(g);
    Eigen::VectorXd v(g.n);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = std::sqrt(g.adjacency.row(i).sum());
    CHECK((L * v).norm() < 1e-6);
    const Eigen::MatrixXd Ld = dense(L);
    CHECK((Ld.diagonal().array() - 1.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("normalized Laplacian spectrum lies in [0, 2]") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Eigen::VectorXd ev = eigenvalues(dense(normalized_laplacian(knn_graph(random_cloud(20, 40 + s), 4))));
        CHECK(ev.minCoeff() >= -1e-9);
        CHECK(ev.maxCoeff() <= 2.0 + 1e-9);
    }
}

TEST_CASE("normalized Laplacian rejects isolated vertices") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
    w(0, 1) = w(1, 0) = 1.0;
    CHECK_THROWS(normalized_laplacian(WeightedGraph{3, sparse_from(w), 1.0}));
}

TEST_CASE("lambda_max estimates") {
    CHECK(std::abs(estimate_lambda_max(normalized_laplacian(two_vertex_graph())) - 2.0) <= 0.002);

    SparseMatrix<double> I(7, 7);
    I.setIdentity();
    CHECK(std::abs(estimate_lambda_max(I) - 1.0) <= 0.001);

    for (std::uint64_t s = 0; s < 5; ++s) {
        const SparseMatrix<double> L = normalized_laplacian(knn_graph(random_cloud(30, 70 + s), 5));
        const double exact = eigenvalues(dense(L)).maxCoeff();
        CHECK(std::abs(estimate_lambda_max(L) - exact) / exact < 1e-3);
    }
}

TEST_CASE("lambda_max falls back to 2 when iteration does not converge") {
    const SparseMatrix<double> L = normalized_laplacian(knn_graph(random_cloud(30, 5), 5));
    CHECK(estimate_lambda_max(L, 1e-3, 1) == 2.0);
}

TEST_CASE("rescaled Laplacian examples") {
    SparseMatrix<double> I(4, 4);
    I.setIdentity();
    const RescaledLaplacian r = rescale_laplacian(I, 1.0);
    CHECK((dense(r.matrix) - Eigen::MatrixXd::Identity(4, 4)).norm() == 0.0);

    const RescaledLaplacian r2 = rescale_laplacian(normalized_laplacian(two_vertex_graph()), 2.0);
    Eigen::MatrixXd want(2, 2);
    want << 0, -1, -1, 0;
    CHECK((dense(r2.matrix) - want).norm() < 1e-15);
    const Eigen::VectorXd ev = eigenvalues(dense(r2.matrix));
    CHECK(ev(0) == doctest::Approx(-1.0));
    CHECK(ev(1) == doctest::Approx(1.0));

    CHECK_THROWS(rescale_laplacian(I, 0.0));
    CHECK_THROWS(rescale_laplacian(I, -1.0));
}

TEST_CASE("rescaled spectrum of random graphs lies in [-1.002, 1.002]") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const RescaledLaplacian r = build_rescaled_laplacian(random_cloud(25, 90 + s), {6});
        CHECK(r.lambda_max > 0.0);
        CHECK(r.lambda_max <= 2.0);
        const Eigen::VectorXd ev = eigenvalues(dense(r.matrix));
        CHECK(ev.minCoeff() >= -1.002);
        CHECK(ev.maxCoeff() <= 1.002);
    }
}

TEST_CASE("graph weights are invariant to rigid motion") {
    const PointCloud c = random_cloud(64, 17);
    const Eigen::Matrix3d R = random_rotation(4);
    const Eigen::Vector3d t(0.3, -2.0, 5.0);
    PointCloud moved = c;
    for (auto& p : moved.points) {
        const Eigen::Vector3d q = R * Eigen::Vector3d(p.x, p.y, p.z) + t;
        p = {float(q.x()), float(q.y()), float(q.z())};
    }
    const Eigen::MatrixXd a = dense(knn_graph(c, 8).adjacency);
    const Eigen::MatrixXd b = dense(knn_graph(moved, 8).adjacency);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("graph weights are permutation equivariant") {
    const PointCloud c = random_cloud(50, 23);
    const auto perm = random_permutation(c.size(), 2);
    const Eigen::MatrixXd a = dense(knn_graph(c, 6).adjacency);
    const Eigen::MatrixXd b = dense(knn_graph(subset(c, perm), 6).adjacency);
    double worst = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t j = 0; j < perm.size(); ++j)
            worst = std::max(worst, std::abs(b(Eigen::Index(i), Eigen::Index(j)) -
                                             a(Eigen::Index(perm[i]), Eigen::Index(perm[j]))));
    CHECK(worst < 1e-12);
}

TEST_CASE("hop distances on a path") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(5, 5);
    for (int i = 0; i + 1 < 4; ++i) w(i, i + 1) = w(i + 1, i) = 1.0;
    const auto d = hop_distances(sparse_from(w), 0);
    CHECK(d == std::vector<int>{0, 1, 2, 3, -1});
}
