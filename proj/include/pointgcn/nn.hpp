#ifndef POINTGCN_NN_HPP
#define POINTGCN_NN_HPP

#include "pointgcn/pointcloud.hpp"
#include "pointgcn/random.hpp"
#include "pointgcn/tensor.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace pointgcn {

enum class Mode { Train, Eval };

// ---------------------------------------------------------------- ReLU

template <typename T>
Matrix<T> relu(const Matrix<T>& X);

/// Gradient of relu at pre-activation `X`; zero wherever X <= 0.
template <typename T>
Matrix<T> relu_backward(const Matrix<T>& X, const Matrix<T>& dY);

// ------------------------------------------------------------- dropout

/// Inverted dropout. `mask` holds 0 or 1/keep per entry, and is left empty
/// when the layer acts as the identity (eval mode or keep == 1).
template <typename M>
struct Dropout {
    M output;
    M mask;
};

template <typename M>
Dropout<M> dropout(const M& X, double keep, Mode mode, std::uint64_t seed) {
    if (!(keep > 0.0 && keep <= 1.0)) throw std::invalid_argument("dropout: keep probability must be in (0, 1]");
    Dropout<M> out;
    if (mode == Mode::Eval || keep == 1.0) {
        out.output = X;
        return out;
    }
    using Scalar = typename M::Scalar;
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Scalar scale = Scalar(1.0 / keep);
    out.mask.resize(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < out.mask.size(); ++i) out.mask.data()[i] = unit(rng) < keep ? scale : Scalar(0);
    out.output = X.cwiseProduct(out.mask);
    return out;
}

template <typename M>
M dropout_backward(const M& mask, const M& dY) {
    if (mask.size() == 0) return dY;
    return dY.cwiseProduct(mask);
}

// -------------------------------------------------------- global pool

/// Column-wise max followed by column-wise population variance.
template <typename T>
struct GlobalPool {
    Vector<T> output;                    // [max_0..max_{C-1}, var_0..var_{C-1}]
    std::vector<Eigen::Index> argmax;    // lowest row index attaining each max
    Vector<double> mean;
};

template <typename T>
GlobalPool<T> global_pool(const Matrix<T>& H);

template <typename T>
Matrix<T> global_pool_backward(const Matrix<T>& H, const GlobalPool<T>& pool, const Vector<T>& dOut);

// ------------------------------------------------ multi-resolution pool

enum class ClusterMode {
    NearestNeighbors,  // each centroid pools its cluster_k nearest points (clusters overlap)
    Partition,         // each point joins its nearest centroid
};

struct PoolingClusters {
    std::vector<std::size_t> centroids;             // indices into the source cloud, FPS order
    std::vector<std::vector<std::size_t>> members;  // per centroid, ascending vertex index
};

PoolingClusters build_clusters(const PointCloud& cloud, std::size_t m, std::size_t cluster_k, std::uint64_t seed,
                               ClusterMode mode = ClusterMode::NearestNeighbors);

template <typename T>
struct ClusterPool {
    Matrix<T> output;                  // m x C
    std::vector<Eigen::Index> source;  // source row of output(j, c) at j + m * c
};

template <typename T>
ClusterPool<T> cluster_max_pool(const Matrix<T>& H, const PoolingClusters& clusters);

template <typename T>
Matrix<T> cluster_max_pool_backward(Eigen::Index n, const ClusterPool<T>& pool, const Matrix<T>& dOut);

template <typename T>
struct MultiresPool {
    ClusterPool<T> pool;
    PoolingClusters clusters;
    PointCloud centroids;
};

/// FPS centroids, nearest-neighbour clusters and per-cluster max.
template <typename T>
MultiresPool<T> multires_pool(const Matrix<T>& H, const PointCloud& cloud, std::size_t m, std::size_t cluster_k,
                              std::uint64_t seed, ClusterMode mode = ClusterMode::NearestNeighbors);

// ------------------------------------------------------ classifier head

template <typename T>
Vector<T> softmax(const Vector<T>& logits);

template <typename T>
struct FcSoftmax {
    Vector<T> logits;
    Vector<T> probs;
};

/// logits = W f + b, probs = softmax(logits).
template <typename T>
FcSoftmax<T> fc_softmax(const Vector<T>& f, const Matrix<T>& W, const Vector<T>& b);

template <typename T>
struct FcGradients {
    Vector<T> df;
    Matrix<T> dW;
    Vector<T> db;
};

template <typename T>
FcGradients<T> fc_backward(const Vector<T>& f, const Matrix<T>& W, const Vector<T>& dlogits);

struct ClassWeights {
    std::vector<double> weights;

    static ClassWeights uniform(std::size_t classes) { return {std::vector<double>(classes, 1.0)}; }
    std::size_t size() const { return weights.size(); }
};

/// w_c proportional to 1 / counts[c], scaled to mean 1.
ClassWeights class_weights_from_counts(const std::vector<std::size_t>& counts);

template <typename T>
struct LossResult {
    double loss = 0.0;
    Vector<T> dlogits;
};

template <typename T>
LossResult<T> weighted_cross_entropy(const Vector<T>& probs, int label, const ClassWeights& cw);

// ------------------------------------------------------- active points

struct ActivePoint {
    int layer = 0;
    std::size_t filter = 0;
    std::size_t vertex = 0;
};

std::vector<ActivePoint> active_points(const std::vector<Eigen::Index>& argmax, int layer);

}  // namespace pointgcn

#endif  // POINTGCN_NN_HPP
