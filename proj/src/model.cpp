#include "pointgcn/model.hpp"

#include "pointgcn/random.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace pointgcn {

std::string to_string(PoolingMode mode) { return mode == PoolingMode::Global ? "global" : "multires"; }

PoolingMode parse_pooling_mode(const std::string& text) {
    if (text == "global") return PoolingMode::Global;
    if (text == "multires") return PoolingMode::Multires;
    throw std::invalid_argument("unknown pooling mode '" + text + "' (expected global|multires)");
}

std::string to_string(ClusterMode mode) { return mode == ClusterMode::NearestNeighbors ? "knn" : "partition"; }

ClusterMode parse_cluster_mode(const std::string& text) {
    if (text == "knn") return ClusterMode::NearestNeighbors;
    if (text == "partition") return ClusterMode::Partition;
    throw std::invalid_argument("unknown cluster mode '" + text + "' (expected knn|partition)");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != v.size() || x < 0) throw std::invalid_argument("config: " + key + " expects a non-negative integer, got '" + v + "'");
    return std::size_t(x);
}

double parse_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != v.size()) throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw std::invalid_argument("config: " + key + " expects true|false, got '" + v + "'");
}

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
    if (knn_k == 0) fail("knn_k must be positive");
    if (cheb_order < 0) fail("cheb_order must be non-negative");
    if (filters[0] == 0 || filters[1] == 0) fail("filters must be positive");
    if (class_count < 2) fail("class_count must be at least 2");
    if (!(keep_conv > 0.0 && keep_conv <= 1.0)) fail("keep_conv must be in (0, 1]");
    if (!(keep_fc > 0.0 && keep_fc <= 1.0)) fail("keep_fc must be in (0, 1]");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (sigma.kind == SigmaPolicy::Kind::Fixed && !(sigma.sigma > 0.0)) fail("sigma must be positive");
    if (pooling == PoolingMode::Multires) {
        if (centroid_count < 3) fail("centroid_count must be at least 3");
        if (cluster_mode == ClusterMode::NearestNeighbors && cluster_k == 0) fail("cluster_k must be positive");
    }
}

std::size_t ModelConfig::feature_size() const {
    if (pooling == PoolingMode::Global || multires_concat) return 2 * (filters[0] + filters[1]);
    return 2 * filters[1];
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "knn_k = " << knn_k << "\n"
       << "cheb_order = " << cheb_order << "\n"
       << "filters = " << filters[0] << "," << filters[1] << "\n"
       << "pooling = " << to_string(pooling) << "\n"
       << "centroid_count = " << centroid_count << "\n"
       << "cluster_k = " << cluster_k << "\n"
       << "cluster_mode = " << to_string(cluster_mode) << "\n"
       << "class_count = " << class_count << "\n"
       << "keep_conv = " << keep_conv << "\n"
       << "keep_fc = " << keep_fc << "\n"
       << "weight_decay = " << weight_decay << "\n"
       << "conv_bias = " << (conv_bias ? "true" : "false") << "\n"
       << "multires_concat = " << (multires_concat ? "true" : "false") << "\n"
       << "fps_seed = " << fps_seed << "\n"
       << "sigma = ";
    if (sigma.kind == SigmaPolicy::Kind::Fixed)
        os << sigma.sigma;
    else
        os << "adaptive";
    os << "\n"
       << "lambda_tol = " << lambda_tol << "\n"
       << "lambda_max_iter = " << lambda_max_iter << "\n";
    return os.str();
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
    if (key == "knn_k") knn_k = parse_count(key, value);
    else if (key == "cheb_order") cheb_order = int(parse_count(key, value));
    else if (key == "filters") {
        const auto comma = value.find(',');
        if (comma == std::string::npos) throw std::invalid_argument("config: filters expects two comma-separated counts");
        filters[0] = parse_count(key, trim(value.substr(0, comma)));
        filters[1] = parse_count(key, trim(value.substr(comma + 1)));
    } else if (key == "pooling") pooling = parse_pooling_mode(value);
    else if (key == "centroid_count") centroid_count = parse_count(key, value);
    else if (key == "cluster_k") cluster_k = parse_count(key, value);
    else if (key == "cluster_mode") cluster_mode = parse_cluster_mode(value);
    else if (key == "class_count") class_count = parse_count(key, value);
    else if (key == "keep_conv") keep_conv = parse_real(key, value);
    else if (key == "keep_fc") keep_fc = parse_real(key, value);
    else if (key == "weight_decay") weight_decay = parse_real(key, value);
    else if (key == "conv_bias") conv_bias = parse_bool(key, value);
    else if (key == "multires_concat") multires_concat = parse_bool(key, value);
    else if (key == "fps_seed") fps_seed = parse_count(key, value);
    else if (key == "sigma") sigma = value == "adaptive" ? SigmaPolicy::adaptive() : SigmaPolicy::fixed(parse_real(key, value));
    else if (key == "lambda_tol") lambda_tol = parse_real(key, value);
    else if (key == "lambda_max_iter") lambda_max_iter = int(parse_count(key, value));
    else return false;
    return true;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig config;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!config.set(key, trim(line.substr(eq + 1))))
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    return config;
}

template <typename T>
std::vector<ParamRef<T>> parameter_refs(ModelParams<T>& p) {
    std::vector<ParamRef<T>> refs;
    auto mat = [&](const char* name, Matrix<T>& m, bool decays) {
        refs.push_back({name, m.data(), m.rows(), m.cols(), false, decays});
    };
    auto vec = [&](const char* name, Vector<T>& v) {
        if (v.size() > 0) refs.push_back({name, v.data(), v.size(), 1, true, false});
    };
    mat("conv1.theta", p.conv1.theta, true);
    vec("conv1.bias", p.conv1.bias);
    mat("conv2.theta", p.conv2.theta, true);
    vec("conv2.bias", p.conv2.bias);
    mat("fc.weight", p.fc_weight, true);
    vec("fc.bias", p.fc_bias);
    return refs;
}

template <typename T>
std::vector<ParamRef<const T>> parameter_refs(const ModelParams<T>& p) {
    std::vector<ParamRef<const T>> out;
    for (const auto& r : parameter_refs(const_cast<ModelParams<T>&>(p)))
        out.push_back({r.name, r.data, r.rows, r.cols, r.is_vector, r.decays});
    return out;
}

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
    ModelParams<T> z = p;
    for (auto& r : parameter_refs(z)) std::fill(r.data, r.data + r.size(), T(0));
    return z;
}

template <typename Dst, typename Src>
ModelParams<Dst> cast_params(const ModelParams<Src>& p) {
    auto bank = [](const ChebFilterBank<Src>& b) {
        ChebFilterBank<Dst> out;
        out.order = b.order;
        out.in_channels = b.in_channels;
        out.out_channels = b.out_channels;
        out.theta = b.theta.template cast<Dst>();
        out.bias = b.bias.template cast<Dst>();
        return out;
    };
    ModelParams<Dst> out;
    out.conv1 = bank(p.conv1);
    out.conv2 = bank(p.conv2);
    out.fc_weight = p.fc_weight.template cast<Dst>();
    out.fc_bias = p.fc_bias.template cast<Dst>();
    return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    const int K = config.cheb_order;
    const auto F1 = Eigen::Index(config.filters[0]), F2 = Eigen::Index(config.filters[1]);
    ModelParams<T> p;
    p.conv1 = ChebFilterBank<T>(K, 3, F1, config.conv_bias);
    p.conv2 = ChebFilterBank<T>(K, F1, F2, config.conv_bias);
    p.fc_weight = Matrix<T>::Zero(Eigen::Index(config.class_count), Eigen::Index(config.feature_size()));
    p.fc_bias = Vector<T>::Zero(Eigen::Index(config.class_count));

    Rng rng(seed);
    auto glorot = [&](Matrix<T>& m, double fan_in, double fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = T(dist(rng));
    };
    glorot(p.conv1.theta, double((K + 1) * 3), double(F1));
    glorot(p.conv2.theta, double((K + 1) * F1), double(F2));
    glorot(p.fc_weight, double(config.feature_size()), double(config.class_count));
    return p;
}

template <typename T>
void check_params(const ModelParams<T>& p, const ModelConfig& config) {
    auto expect = [](const char* what, Eigen::Index got, Eigen::Index want) {
        if (got != want)
            throw std::invalid_argument(std::string("parameter/config mismatch: ") + what + " is " +
                                        std::to_string(got) + ", config expects " + std::to_string(want));
    };
    const int K = config.cheb_order;
    const auto F1 = Eigen::Index(config.filters[0]), F2 = Eigen::Index(config.filters[1]);
    expect("conv1 order", p.conv1.order, K);
    expect("conv2 order", p.conv2.order, K);
    expect("conv1 input channels", p.conv1.in_channels, 3);
    expect("conv1 filters", p.conv1.out_channels, F1);
    expect("conv2 input channels", p.conv2.in_channels, F1);
    expect("conv2 filters", p.conv2.out_channels, F2);
    expect("conv1.theta rows", p.conv1.theta.rows(), (K + 1) * 3);
    expect("conv1.theta cols", p.conv1.theta.cols(), F1);
    expect("conv2.theta rows", p.conv2.theta.rows(), (K + 1) * F1);
    expect("conv2.theta cols", p.conv2.theta.cols(), F2);
    expect("conv1.bias length", p.conv1.bias.size(), config.conv_bias ? F1 : 0);
    expect("conv2.bias length", p.conv2.bias.size(), config.conv_bias ? F2 : 0);
    expect("fc.weight rows (classes)", p.fc_weight.rows(), Eigen::Index(config.class_count));
    expect("fc.weight cols (features)", p.fc_weight.cols(), Eigen::Index(config.feature_size()));
    expect("fc.bias length", p.fc_bias.size(), Eigen::Index(config.class_count));
}

template <typename T>
GraphContext<T> build_graph_context(const PointCloud& cloud, const ModelConfig& config) {
    GraphOptions opts;
    opts.k = config.knn_k;
    opts.sigma = config.sigma;
    opts.lambda_tol = config.lambda_tol;
    opts.lambda_max_iter = config.lambda_max_iter;

    GraphContext<T> ctx;
    const RescaledLaplacian full = build_rescaled_laplacian(cloud, opts);
    ctx.laplacian = full.matrix.template cast<T>();
    ctx.lambda_max = full.lambda_max;

    if (config.pooling == PoolingMode::Multires) {
        if (cloud.size() < config.centroid_count)
            throw std::invalid_argument("multires pooling: cloud has " + std::to_string(cloud.size()) +
                                        " points, fewer than centroid_count " + std::to_string(config.centroid_count));
        ctx.clusters = build_clusters(cloud, config.centroid_count, config.cluster_k, config.fps_seed, config.cluster_mode);
        GraphOptions coarse = opts;
        coarse.k = std::min(config.knn_k, config.centroid_count - 1);
        const RescaledLaplacian lc = build_rescaled_laplacian(subset(cloud, ctx.clusters.centroids), coarse);
        ctx.coarse_laplacian = lc.matrix.template cast<T>();
        ctx.coarse_lambda_max = lc.lambda_max;
    }
    return ctx;
}

template <typename T>
ForwardResult<T> forward(const GraphContext<T>& graph, const PointCloud& cloud, const ModelParams<T>& params,
                         const ModelConfig& config, Mode mode, std::uint64_t dropout_seed) {
    check_params(params, config);
    const auto n = Eigen::Index(cloud.size());
    if (graph.laplacian.rows() != n) throw std::invalid_argument("forward: graph context does not match the cloud");
    const bool multires = config.pooling == PoolingMode::Multires;
    if (multires && cloud.size() < config.centroid_count)
        throw std::invalid_argument("forward: cloud has fewer points than centroid_count");

    ForwardResult<T> out;
    ForwardCache<T>& c = out.cache;
    c.graph = &graph;
    c.input.resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = cloud.points[std::size_t(i)];
        c.input(i, 0) = T(p.x);
        c.input(i, 1) = T(p.y);
        c.input(i, 2) = T(p.z);
    }

    c.basis1 = chebyshev_basis(graph.laplacian, c.input, params.conv1.order);
    c.pre1 = cheb_apply_basis(c.basis1, params.conv1);
    c.drop1 = dropout(relu(c.pre1), config.keep_conv, mode, mix_seed(dropout_seed, {1}));
    const Matrix<T>& h1 = c.drop1.output;

    const bool pool_layer1 = !multires || config.multires_concat;
    if (pool_layer1) c.pool1 = global_pool(h1);

    const SparseMatrix<T>* second_graph = &graph.laplacian;
    const Matrix<T>* second_input = &h1;
    if (multires) {
        c.cluster_pool = cluster_max_pool(h1, graph.clusters);
        second_graph = &graph.coarse_laplacian;
        second_input = &c.cluster_pool.output;
    }
    c.basis2 = chebyshev_basis(*second_graph, *second_input, params.conv2.order);
    c.pre2 = cheb_apply_basis(c.basis2, params.conv2);
    c.drop2 = dropout(relu(c.pre2), config.keep_conv, mode, mix_seed(dropout_seed, {2}));
    c.pool2 = global_pool(c.drop2.output);

    const Eigen::Index s2 = c.pool2.output.size();
    if (pool_layer1) {
        const Eigen::Index s1 = c.pool1.output.size();
        c.features.resize(s1 + s2);
        c.features << c.pool1.output, c.pool2.output;
    } else {
        c.features = c.pool2.output;
    }
    c.drop_fc = dropout(c.features, config.keep_fc, mode, mix_seed(dropout_seed, {3}));
    c.head = fc_softmax(c.drop_fc.output, params.fc_weight, params.fc_bias);
    c.valid = true;
    out.probs = c.head.probs;

    if (pool_layer1) out.active = active_points(c.pool1.argmax, 1);
    auto layer2 = active_points(c.pool2.argmax, 2);
    if (multires)
        for (auto& a : layer2) a.vertex = graph.clusters.centroids[a.vertex];
    out.active.insert(out.active.end(), layer2.begin(), layer2.end());
    return out;
}

template <typename T>
double add_weight_decay(ModelParams<T>& grads, const ModelParams<T>& params, double weight_decay) {
    if (weight_decay == 0.0) return 0.0;
    const auto prefs = parameter_refs(params);
    auto grefs = parameter_refs(grads);
    double penalty = 0.0;
    for (std::size_t t = 0; t < prefs.size(); ++t) {
        if (!prefs[t].decays) continue;
        for (Eigen::Index i = 0; i < prefs[t].size(); ++i) {
            const double w = double(prefs[t].data[i]);
            penalty += w * w;
            grefs[t].data[i] += T(2.0 * weight_decay * w);
        }
    }
    return weight_decay * penalty;
}

template <typename T>
BackwardResult<T> backward(ForwardCache<T>& c, int label, const ClassWeights& cw, const ModelParams<T>& params,
                           const ModelConfig& config, double weight_decay) {
    if (!c.valid || c.graph == nullptr) throw std::logic_error("backward: stale or empty forward cache");
    c.valid = false;
    const bool multires = config.pooling == PoolingMode::Multires;
    const bool pool_layer1 = !multires || config.multires_concat;

    BackwardResult<T> out;
    out.grads = zeros_like(params);
    ModelParams<T>& g = out.grads;

    const LossResult<T> loss = weighted_cross_entropy(c.head.probs, label, cw);
    out.loss = loss.loss;

    FcGradients<T> fc = fc_backward(c.drop_fc.output, params.fc_weight, loss.dlogits);
    g.fc_weight = fc.dW;
    g.fc_bias = fc.db;
    const Vector<T> dfeat = dropout_backward(c.drop_fc.mask, fc.df);

    const Eigen::Index s2 = c.pool2.output.size();
    const Eigen::Index s1 = pool_layer1 ? c.pool1.output.size() : 0;
    const Vector<T> dpool2 = dfeat.tail(s2);

    Matrix<T> dh2 = global_pool_backward(c.drop2.output, c.pool2, dpool2);
    dh2 = dropout_backward(c.drop2.mask, dh2);
    const Matrix<T> dz2 = relu_backward(c.pre2, dh2);
    const SparseMatrix<T>& second_graph = multires ? c.graph->coarse_laplacian : c.graph->laplacian;
    ChebGradients<T> cg2 = cheb_backward_basis(second_graph, c.basis2, params.conv2, dz2, true);
    g.conv2.theta = cg2.dTheta;
    if (params.conv2.has_bias()) g.conv2.bias = cg2.dBias;

    Matrix<T> dh1 = multires ? cluster_max_pool_backward(c.drop1.output.rows(), c.cluster_pool, cg2.dX)
                             : std::move(cg2.dX);
    if (pool_layer1) dh1 += global_pool_backward(c.drop1.output, c.pool1, Vector<T>(dfeat.head(s1)));
    dh1 = dropout_backward(c.drop1.mask, dh1);
    const Matrix<T> dz1 = relu_backward(c.pre1, dh1);
    ChebGradients<T> cg1 = cheb_backward_basis(c.graph->laplacian, c.basis1, params.conv1, dz1, false);
    g.conv1.theta = cg1.dTheta;
    if (params.conv1.has_bias()) g.conv1.bias = cg1.dBias;

    out.loss += add_weight_decay(g, params, weight_decay);
    return out;
}

#define POINTGCN_INSTANTIATE(T)                                                                           \
    template std::vector<ParamRef<T>> parameter_refs<T>(ModelParams<T>&);                                \
    template std::vector<ParamRef<const T>> parameter_refs<T>(const ModelParams<T>&);                    \
    template ModelParams<T> zeros_like<T>(const ModelParams<T>&);                                        \
    template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                           \
    template void check_params<T>(const ModelParams<T>&, const ModelConfig&);                            \
    template GraphContext<T> build_graph_context<T>(const PointCloud&, const ModelConfig&);              \
    template ForwardResult<T> forward<T>(const GraphContext<T>&, const PointCloud&, const ModelParams<T>&, \
                                         const ModelConfig&, Mode, std::uint64_t);                       \
    template BackwardResult<T> backward<T>(ForwardCache<T>&, int, const ClassWeights&,                   \
                                           const ModelParams<T>&, const ModelConfig&, double);           \
    template double add_weight_decay<T>(ModelParams<T>&, const ModelParams<T>&, double);

POINTGCN_INSTANTIATE(float)
POINTGCN_INSTANTIATE(double)
#undef POINTGCN_INSTANTIATE

template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);
template ModelParams<float> cast_params<float, float>(const ModelParams<float>&);
template ModelParams<double> cast_params<double, double>(const ModelParams<double>&);

}  // namespace pointgcn
