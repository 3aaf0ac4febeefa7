#ifndef POINTGCN_MODEL_HPP
#define POINTGCN_MODEL_HPP

#include "pointgcn/chebfilter.hpp"
#include "pointgcn/graph.hpp"
#include "pointgcn/nn.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace pointgcn {

enum class PoolingMode { Global, Multires };

std::string to_string(PoolingMode mode);
PoolingMode parse_pooling_mode(const std::string& text);
std::string to_string(ClusterMode mode);
ClusterMode parse_cluster_mode(const std::string& text);

/// Architecture hyperparameters. Defaults reproduce the two-layer network
/// used for ModelNet40.
struct ModelConfig {
    std::size_t knn_k = 40;
    int cheb_order = 3;
    std::array<std::size_t, 2> filters{1000, 1000};
    PoolingMode pooling = PoolingMode::Global;
    std::size_t centroid_count = 55;
    std::size_t cluster_k = 50;
    ClusterMode cluster_mode = ClusterMode::NearestNeighbors;
    std::size_t class_count = 40;
    double keep_conv = 0.9;
    double keep_fc = 0.5;
    double weight_decay = 2e-4;
    bool conv_bias = true;
    bool multires_concat = false;  // also feed layer-1 global statistics to the FC layer
    std::uint64_t fps_seed = 0;    // first centroid of multi-resolution pooling
    SigmaPolicy sigma = SigmaPolicy::adaptive();
    double lambda_tol = 1e-4;
    int lambda_max_iter = 1000;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    /// Length of the vector entering the fully-connected layer.
    std::size_t feature_size() const;

    /// `key = value` lines; parse rejects unknown keys.
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
    /// Applies one key/value pair. Returns false if the key is unknown.
    bool set(const std::string& key, const std::string& value);
};

template <typename T>
struct ModelParams {
    ChebFilterBank<T> conv1;
    ChebFilterBank<T> conv2;
    Matrix<T> fc_weight;  // C x F
    Vector<T> fc_bias;    // C
};

/// A view of one parameter tensor as a contiguous array.
template <typename T>
struct ParamRef {
    std::string name;
    T* data = nullptr;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;  // 1 for vectors
    bool is_vector = false;
    bool decays = false;    // weights take part in l2 regularisation, biases do not
    Eigen::Index size() const { return rows * cols; }
};

template <typename T>
std::vector<ParamRef<T>> parameter_refs(ModelParams<T>& params);

template <typename T>
std::vector<ParamRef<const T>> parameter_refs(const ModelParams<T>& params);

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& params);

template <typename Dst, typename Src>
ModelParams<Dst> cast_params(const ModelParams<Src>& params);

/// Glorot-uniform weights, zero biases.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

/// Throws std::invalid_argument naming the first dimension that disagrees.
template <typename T>
void check_params(const ModelParams<T>& params, const ModelConfig& config);

/// Everything about a cloud that depends only on its geometry: the full
/// resolution graph and, for multi-resolution pooling, the clusters and the
/// graph on the centroids.
template <typename T>
struct GraphContext {
    SparseMatrix<T> laplacian;
    double lambda_max = 2.0;
    PoolingClusters clusters;
    SparseMatrix<T> coarse_laplacian;
    double coarse_lambda_max = 2.0;
};

template <typename T>
GraphContext<T> build_graph_context(const PointCloud& cloud, const ModelConfig& config);

template <typename T>
struct ForwardCache {
    bool valid = false;
    const GraphContext<T>* graph = nullptr;
    Matrix<T> input;
    Matrix<T> basis1, pre1;
    Dropout<Matrix<T>> drop1;
    GlobalPool<T> pool1;
    ClusterPool<T> cluster_pool;
    Matrix<T> basis2, pre2;
    Dropout<Matrix<T>> drop2;
    GlobalPool<T> pool2;
    Vector<T> features;
    Dropout<Vector<T>> drop_fc;
    FcSoftmax<T> head;
};

template <typename T>
struct ForwardResult {
    Vector<T> probs;
    ForwardCache<T> cache;
    std::vector<ActivePoint> active;  // vertex indices refer to the input cloud
};

/// The cache keeps a pointer to `graph`, which must outlive the backward call.
template <typename T>
ForwardResult<T> forward(const GraphContext<T>& graph, const PointCloud& cloud, const ModelParams<T>& params,
                         const ModelConfig& config, Mode mode, std::uint64_t dropout_seed = 0);

template <typename T>
struct BackwardResult {
    ModelParams<T> grads;
    double loss = 0.0;  // weighted cross-entropy plus the l2 term
};

/// Gradient of weighted cross-entropy + weight_decay * sum ||w||^2.
/// Consumes the cache: a second call on the same cache throws.
template <typename T>
BackwardResult<T> backward(ForwardCache<T>& cache, int label, const ClassWeights& cw, const ModelParams<T>& params,
                           const ModelConfig& config, double weight_decay);

/// grads += 2 * weight_decay * w for every decaying tensor; returns weight_decay * sum ||w||^2.
template <typename T>
double add_weight_decay(ModelParams<T>& grads, const ModelParams<T>& params, double weight_decay);

}  // namespace pointgcn

#endif  // POINTGCN_MODEL_HPP
