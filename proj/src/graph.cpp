#include "pointgcn/graph.hpp"

#include "pointgcn/random.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace pointgcn {

namespace {

struct Neighbor {
    double d2;
    std::size_t index;
    bool operator<(const Neighbor& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

}  // namespace

WeightedGraph knn_graph(const PointCloud& cloud, std::size_t k, SigmaPolicy sigma, Symmetrization sym) {
    const std::size_t n = cloud.size();
    if (k == 0 || k >= n)
        throw std::invalid_argument("knn_graph: need 1 <= k < n (k=" + std::to_string(k) +
                                    ", n=" + std::to_string(n) + ")");
    if (sigma.kind == SigmaPolicy::Kind::Fixed && !(sigma.sigma > 0.0))
        throw std::invalid_argument("knn_graph: fixed sigma must be positive");

    // directed[i * k + r] is the r-th nearest neighbour of i
    std::vector<Neighbor> directed(n * k);
    std::vector<Neighbor> row;
    row.reserve(n - 1);
    double sum_d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) row.push_back({squared_distance(cloud.points[i], cloud.points[j]), j});
        }
        std::partial_sort(row.begin(), row.begin() + std::ptrdiff_t(k), row.end());
        for (std::size_t r = 0; r < k; ++r) {
            directed[i * k + r] = row[r];
            sum_d2 += row[r].d2;
        }
    }

    double sigma2 = sigma.sigma * sigma.sigma;
    if (sigma.kind == SigmaPolicy::Kind::MeanKnnSquaredDistance) {
        sigma2 = sum_d2 / double(n * k);
        if (!(sigma2 > 0.0)) sigma2 = 1.0;  // every neighbour coincides; all weights are exp(0)
    }

    std::vector<std::pair<std::size_t, std::size_t>> edges;
    edges.reserve(2 * n * k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t j = directed[i * k + r].index;
            edges.emplace_back(i, j);
            edges.emplace_back(j, i);
        }
    }
    std::sort(edges.begin(), edges.end());
    if (sym == Symmetrization::Union) {
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    } else {
        // an edge present in both directions appears exactly twice
        std::vector<std::pair<std::size_t, std::size_t>> mutual;
        for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
            if (edges[e] == edges[e + 1]) {
                mutual.push_back(edges[e]);
                ++e;
            }
        }
        edges = std::move(mutual);
    }

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(edges.size());
    std::vector<char> has_neighbor(n, 0);
    for (const auto& [i, j] : edges) {
        const double w = std::max(std::exp(-squared_distance(cloud.points[i], cloud.points[j]) / sigma2),
                                  std::numeric_limits<double>::min());
        triplets.emplace_back(int(i), int(j), w);
        has_neighbor[i] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!has_neighbor[i])
            throw std::runtime_error("knn_graph: vertex " + std::to_string(i) + " has no neighbour after symmetrization");
    }

    WeightedGraph g;
    g.n = n;
    g.sigma_squared = sigma2;
    g.adjacency.resize(Eigen::Index(n), Eigen::Index(n));
    g.adjacency.setFromTriplets(triplets.begin(), triplets.end());
    g.adjacency.makeCompressed();
    return g;
}

SparseMatrix<double> normalized_laplacian(const WeightedGraph& graph) {
    const auto& W = graph.adjacency;
    const Eigen::Index n = W.rows();
    Vector<double> inv_sqrt_deg(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double deg = 0.0;
        for (SparseMatrix<double>::InnerIterator it(W, i); it; ++it) deg += it.value();
        if (!(deg > 0.0))
            throw std::invalid_argument("normalized_laplacian: vertex " + std::to_string(i) + " is isolated");
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(std::size_t(W.nonZeros() + n));
    for (Eigen::Index i = 0; i < n; ++i) {
        triplets.emplace_back(int(i), int(i), 1.0);
        for (SparseMatrix<double>::InnerIterator it(W, i); it; ++it) {
            if (it.col() == i) continue;
            triplets.emplace_back(int(i), int(it.col()), -inv_sqrt_deg[i] * it.value() * inv_sqrt_deg[it.col()]);
        }
    }
    SparseMatrix<double> L(n, n);
    L.setFromTriplets(triplets.begin(), triplets.end());
    L.makeCompressed();
    return L;
}

double estimate_lambda_max(const SparseMatrix<double>& L, double tol, int max_iter,
                           const std::optional<Vector<double>>& start) {
    const Eigen::Index n = L.rows();
    if (n == 0) return 2.0;

    Vector<double> v;
    if (start && start->size() == n && start->norm() > 0.0) {
        v = *start;
    } else {
        v.resize(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v[i] = double(splitmix64(std::uint64_t(i)) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
    v.normalize();

    const double threshold = 1e-3 * tol;
    double lambda = 0.0;
    Vector<double> w(n);
    for (int iter = 0; iter < max_iter; ++iter) {
        w.noalias() = L * v;
        const double next = v.dot(w);
        const double wn = w.norm();
        if (!(wn > 0.0)) return 2.0;
        v = w / wn;
        if (iter > 0 && std::abs(next - lambda) <= threshold * std::abs(next)) return next;
        lambda = next;
    }
    return 2.0;
}

RescaledLaplacian rescale_laplacian(const SparseMatrix<double>& L, double lambda_max) {
    if (!(lambda_max > 0.0)) throw std::invalid_argument("rescale_laplacian: lambda_max must be positive");
    const Eigen::Index n = L.rows();
    SparseMatrix<double> I(n, n);
    I.setIdentity();
    RescaledLaplacian out;
    out.lambda_max = lambda_max;
    out.matrix = (2.0 / lambda_max) * L - I;
    out.matrix.prune(0.0, 0.0);
    out.matrix.makeCompressed();
    return out;
}

Vector<double> coordinate_hash_vector(const PointCloud& cloud) {
    Vector<double> v(Eigen::Index(cloud.size()));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        const std::uint64_t h =
            mix_seed(std::bit_cast<std::uint32_t>(p.x),
                     {std::bit_cast<std::uint32_t>(p.y), std::bit_cast<std::uint32_t>(p.z)});
        v[Eigen::Index(i)] = double(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
    return v;
}

RescaledLaplacian build_rescaled_laplacian(const PointCloud& cloud, const GraphOptions& options) {
    const WeightedGraph g = knn_graph(cloud, options.k, options.sigma, options.sym);
    const SparseMatrix<double> L = normalized_laplacian(g);
    const double lambda = estimate_lambda_max(L, options.lambda_tol, options.lambda_max_iter,
                                              coordinate_hash_vector(cloud));
    return rescale_laplacian(L, lambda);
}

std::vector<int> hop_distances(const SparseMatrix<double>& adjacency, std::size_t source) {
    const auto n = std::size_t(adjacency.rows());
    std::vector<int> hops(n, -1);
    std::deque<std::size_t> queue{source};
    hops.at(source) = 0;
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        for (SparseMatrix<double>::InnerIterator it(adjacency, Eigen::Index(u)); it; ++it) {
            const auto v = std::size_t(it.col());
            if (v != u && hops[v] < 0) {
                hops[v] = hops[u] + 1;
                queue.push_back(v);
            }
        }
    }
    return hops;
}

}  // namespace pointgcn
