#ifndef POINTGCN_GRAPH_HPP
#define POINTGCN_GRAPH_HPP

#include "pointgcn/pointcloud.hpp"
#include "pointgcn/tensor.hpp"

#include <optional>

namespace pointgcn {

/// Kernel width rule for the Gaussian edge weights exp(-d^2 / sigma^2).
struct SigmaPolicy {
    enum class Kind { MeanKnnSquaredDistance, Fixed };
    Kind kind = Kind::MeanKnnSquaredDistance;
    double sigma = 1.0;  // used by Kind::Fixed

    static SigmaPolicy adaptive() { return {}; }
    static SigmaPolicy fixed(double sigma) { return {Kind::Fixed, sigma}; }
};

/// How directed kNN relations become undirected edges.
enum class Symmetrization {
    Union,   // i~j if j in kNN(i) or i in kNN(j)
    Mutual,  // i~j if both hold; may leave vertices isolated (rejected)
};

struct WeightedGraph {
    std::size_t n = 0;
    SparseMatrix<double> adjacency;  // symmetric, zero diagonal, weights in (0, 1]
    double sigma_squared = 1.0;
};

struct RescaledLaplacian {
    SparseMatrix<double> matrix;  // 2 L / lambda_max - I
    double lambda_max = 2.0;
};

WeightedGraph knn_graph(const PointCloud& cloud, std::size_t k,
                        SigmaPolicy sigma = SigmaPolicy::adaptive(),
                        Symmetrization sym = Symmetrization::Union);

/// L = I - D^{-1/2} W D^{-1/2}. Throws if some vertex has zero degree.
SparseMatrix<double> normalized_laplacian(const WeightedGraph& graph);

/// Power iteration with Rayleigh-quotient estimates. Stops once the
/// relative change between iterates drops below 1e-3 * tol; returns 2 (the
/// normalized-Laplacian bound) if that does not happen within max_iter.
double estimate_lambda_max(const SparseMatrix<double>& L, double tol = 1e-3, int max_iter = 200,
                           const std::optional<Vector<double>>& start = std::nullopt);

RescaledLaplacian rescale_laplacian(const SparseMatrix<double>& L, double lambda_max);

/// Start vector for power iteration derived from the point coordinates, so
/// that permuting the cloud permutes the vector.
Vector<double> coordinate_hash_vector(const PointCloud& cloud);

struct GraphOptions {
    std::size_t k = 40;
    SigmaPolicy sigma = SigmaPolicy::adaptive();
    Symmetrization sym = Symmetrization::Union;
    double lambda_tol = 1e-4;
    int lambda_max_iter = 1000;
};

/// knn_graph -> normalized_laplacian -> estimate_lambda_max -> rescale_laplacian.
RescaledLaplacian build_rescaled_laplacian(const PointCloud& cloud, const GraphOptions& options);

/// Number of hops from `source` to every vertex (-1 if unreachable).
std::vector<int> hop_distances(const SparseMatrix<double>& adjacency, std::size_t source);

}  // namespace pointgcn

#endif  // POINTGCN_GRAPH_HPP
