#include "pointgcn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace pointgcn {

template <typename T>
Matrix<T> relu(const Matrix<T>& X) {
    return X.cwiseMax(T(0));
}

template <typename T>
Matrix<T> relu_backward(const Matrix<T>& X, const Matrix<T>& dY) {
    if (X.rows() != dY.rows() || X.cols() != dY.cols()) throw std::invalid_argument("relu_backward: shape mismatch");
    return (X.array() > T(0)).select(dY, T(0));
}

template <typename T>
GlobalPool<T> global_pool(const Matrix<T>& H) {
    const Eigen::Index n = H.rows(), C = H.cols();
    if (n < 2) throw std::invalid_argument("global_pool: need at least 2 rows for variance pooling");
    GlobalPool<T> out;
    out.output.resize(2 * C);
    out.argmax.resize(std::size_t(C));
    out.mean.resize(C);
    for (Eigen::Index c = 0; c < C; ++c) {
        const auto col = H.col(c);
        Eigen::Index best = 0;
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (col[i] > col[best]) best = i;
            sum += double(col[i]);
        }
        const double mu = sum / double(n);
        double ss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = double(col[i]) - mu;
            ss += d * d;
        }
        out.output[c] = col[best];
        out.output[C + c] = T(ss / double(n));
        out.argmax[std::size_t(c)] = best;
        out.mean[c] = mu;
    }
    return out;
}

template <typename T>
Matrix<T> global_pool_backward(const Matrix<T>& H, const GlobalPool<T>& pool, const Vector<T>& dOut) {
    const Eigen::Index n = H.rows(), C = H.cols();
    if (dOut.size() != 2 * C || pool.mean.size() != C) throw std::invalid_argument("global_pool_backward: shape mismatch");
    Matrix<T> dH(n, C);
    for (Eigen::Index c = 0; c < C; ++c) {
        const double scale = 2.0 * double(dOut[C + c]) / double(n);
        const double mu = pool.mean[c];
        for (Eigen::Index i = 0; i < n; ++i) dH(i, c) = T(scale * (double(H(i, c)) - mu));
        dH(pool.argmax[std::size_t(c)], c) += dOut[c];
    }
    return dH;
}

PoolingClusters build_clusters(const PointCloud& cloud, std::size_t m, std::size_t cluster_k, std::uint64_t seed,
                               ClusterMode mode) {
    const std::size_t n = cloud.size();
    if (m == 0 || m > n) throw std::invalid_argument("multires_pool: centroid count must be in [1, n]");
    if (mode == ClusterMode::NearestNeighbors && (cluster_k == 0 || cluster_k > n))
        throw std::invalid_argument("multires_pool: cluster_k must be in [1, n]");

    PoolingClusters out;
    out.centroids = farthest_point_sample(cloud, m, seed);
    out.members.resize(m);

    if (mode == ClusterMode::NearestNeighbors) {
        std::vector<std::pair<double, std::size_t>> row(n);
        for (std::size_t j = 0; j < m; ++j) {
            const Point3& c = cloud.points[out.centroids[j]];
            for (std::size_t i = 0; i < n; ++i) row[i] = {squared_distance(cloud.points[i], c), i};
            std::partial_sort(row.begin(), row.begin() + std::ptrdiff_t(cluster_k), row.end());
            auto& mem = out.members[j];
            mem.reserve(cluster_k);
            for (std::size_t r = 0; r < cluster_k; ++r) mem.push_back(row[r].second);
            std::sort(mem.begin(), mem.end());
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < m; ++j) {
                const double d = squared_distance(cloud.points[i], cloud.points[out.centroids[j]]);
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            out.members[best].push_back(i);
        }
    }
    return out;
}

template <typename T>
ClusterPool<T> cluster_max_pool(const Matrix<T>& H, const PoolingClusters& clusters) {
    const auto m = Eigen::Index(clusters.members.size());
    const Eigen::Index C = H.cols();
    ClusterPool<T> out;
    out.output.resize(m, C);
    out.source.resize(std::size_t(m * C));
    for (Eigen::Index c = 0; c < C; ++c) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto& mem = clusters.members[std::size_t(j)];
            if (mem.empty()) throw std::invalid_argument("multires_pool: empty cluster");
            auto best = Eigen::Index(mem.front());
            for (std::size_t i : mem) {
                if (Eigen::Index(i) >= H.rows()) throw std::invalid_argument("multires_pool: member index out of range");
                if (H(Eigen::Index(i), c) > H(best, c)) best = Eigen::Index(i);
            }
            out.output(j, c) = H(best, c);
            out.source[std::size_t(j + m * c)] = best;
        }
    }
    return out;
}

template <typename T>
Matrix<T> cluster_max_pool_backward(Eigen::Index n, const ClusterPool<T>& pool, const Matrix<T>& dOut) {
    const Eigen::Index m = pool.output.rows(), C = pool.output.cols();
    if (dOut.rows() != m || dOut.cols() != C) throw std::invalid_argument("multires_pool backward: shape mismatch");
    Matrix<T> dH = Matrix<T>::Zero(n, C);
    for (Eigen::Index c = 0; c < C; ++c)
        for (Eigen::Index j = 0; j < m; ++j) dH(pool.source[std::size_t(j + m * c)], c) += dOut(j, c);
    return dH;
}

template <typename T>
MultiresPool<T> multires_pool(const Matrix<T>& H, const PointCloud& cloud, std::size_t m, std::size_t cluster_k,
                              std::uint64_t seed, ClusterMode mode) {
    if (std::size_t(H.rows()) != cloud.size()) throw std::invalid_argument("multires_pool: feature rows != point count");
    MultiresPool<T> out;
    out.clusters = build_clusters(cloud, m, cluster_k, seed, mode);
    out.pool = cluster_max_pool(H, out.clusters);
    out.centroids = subset(cloud, out.clusters.centroids);
    return out;
}

template <typename T>
Vector<T> softmax(const Vector<T>& logits) {
    const T top = logits.maxCoeff();
    Vector<T> p = (logits.array() - top).exp().matrix();
    p /= p.sum();
    return p;
}

template <typename T>
FcSoftmax<T> fc_softmax(const Vector<T>& f, const Matrix<T>& W, const Vector<T>& b) {
    if (W.cols() != f.size() || W.rows() != b.size()) throw std::invalid_argument("fc_softmax: shape mismatch");
    FcSoftmax<T> out;
    out.logits = W * f + b;
    out.probs = softmax(out.logits);
    return out;
}

template <typename T>
FcGradients<T> fc_backward(const Vector<T>& f, const Matrix<T>& W, const Vector<T>& dlogits) {
    if (W.cols() != f.size() || W.rows() != dlogits.size()) throw std::invalid_argument("fc_backward: shape mismatch");
    FcGradients<T> g;
    g.dW = dlogits * f.transpose();
    g.db = dlogits;
    g.df = W.transpose() * dlogits;
    return g;
}

ClassWeights class_weights_from_counts(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw std::invalid_argument("class_weights_from_counts: no classes");
    ClassWeights cw;
    cw.weights.resize(counts.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0)
            throw std::invalid_argument("class_weights_from_counts: class " + std::to_string(c) +
                                        " has no training instances");
        cw.weights[c] = 1.0 / double(counts[c]);
        sum += cw.weights[c];
    }
    const double mean = sum / double(counts.size());
    for (double& w : cw.weights) w /= mean;
    return cw;
}

template <typename T>
LossResult<T> weighted_cross_entropy(const Vector<T>& probs, int label, const ClassWeights& cw) {
    if (label < 0 || Eigen::Index(label) >= probs.size())
        throw std::invalid_argument("weighted_cross_entropy: label " + std::to_string(label) + " out of range");
    if (cw.size() != std::size_t(probs.size()))
        throw std::invalid_argument("weighted_cross_entropy: class weight count mismatch");
    const double w = cw.weights[std::size_t(label)];
    LossResult<T> out;
    out.loss = -w * std::log(double(probs[label]) + 1e-12);
    out.dlogits = probs;
    out.dlogits[label] -= T(1);
    out.dlogits *= T(w);
    return out;
}

std::vector<ActivePoint> active_points(const std::vector<Eigen::Index>& argmax, int layer) {
    std::vector<ActivePoint> out;
    out.reserve(argmax.size());
    for (std::size_t f = 0; f < argmax.size(); ++f) out.push_back({layer, f, std::size_t(argmax[f])});
    return out;
}

#define POINTGCN_INSTANTIATE(T)                                                                                  \
    template Matrix<T> relu<T>(const Matrix<T>&);                                                               \
    template Matrix<T> relu_backward<T>(const Matrix<T>&, const Matrix<T>&);                                    \
    template GlobalPool<T> global_pool<T>(const Matrix<T>&);                                                    \
    template Matrix<T> global_pool_backward<T>(const Matrix<T>&, const GlobalPool<T>&, const Vector<T>&);       \
    template ClusterPool<T> cluster_max_pool<T>(const Matrix<T>&, const PoolingClusters&);                      \
    template Matrix<T> cluster_max_pool_backward<T>(Eigen::Index, const ClusterPool<T>&, const Matrix<T>&);     \
    template MultiresPool<T> multires_pool<T>(const Matrix<T>&, const PointCloud&, std::size_t, std::size_t,    \
                                              std::uint64_t, ClusterMode);                                      \
    template Vector<T> softmax<T>(const Vector<T>&);                                                            \
    template FcSoftmax<T> fc_softmax<T>(const Vector<T>&, const Matrix<T>&, const Vector<T>&);                  \
    template FcGradients<T> fc_backward<T>(const Vector<T>&, const Matrix<T>&, const Vector<T>&);               \
    template LossResult<T> weighted_cross_entropy<T>(const Vector<T>&, int, const ClassWeights&);

POINTGCN_INSTANTIATE(float)
POINTGCN_INSTANTIATE(double)
#undef POINTGCN_INSTANTIATE

}  // namespace pointgcn
