#include "test_support.hpp"

#include "pointgcn/model.hpp"

#include <doctest.h>

using namespace pointgcn;
using namespace pointgcn::testing;

namespace {

ModelConfig tiny_config(PoolingMode pooling = PoolingMode::Global) {
    ModelConfig c;
    c.knn_k = 5;
    c.cheb_order = 2;
    c.filters = {8, 8};
    c.pooling = pooling;
    c.centroid_count = 8;
    c.cluster_k = 6;
    c.class_count = 3;
    c.weight_decay = 1e-2;
    return c;
}

/// Parameters with non-zero biases so their gradients are exercised too.
ModelParams<double> tiny_params(const ModelConfig& c, std::uint64_t seed) {
    ModelParams<double> p = init_params<double>(c, seed);
    p.conv1.bias = random_matrix<double>(p.conv1.bias.size(), 1, seed + 1, 0.1);
    p.conv2.bias = random_matrix<double>(p.conv2.bias.size(), 1, seed + 2, 0.1);
    p.fc_bias = random_matrix<double>(p.fc_bias.size(), 1, seed + 3, 0.1);
    return p;
}

std::vector<double> flatten(const ModelParams<double>& p) {
    std::vector<double> out;
    for (const auto& r : parameter_refs(p)) out.insert(out.end(), r.data, r.data + r.size());
    return out;
}

void check_full_model_gradient(const ModelConfig& config) {
    const PointCloud cloud = normalize_unit_sphere(random_cloud(24, 3));
    const auto graph = build_graph_context<double>(cloud, config);
    ModelParams<double> params = tiny_params(config, 4);
    const ClassWeights cw{{0.8, 1.3, 0.9}};
    const int label = 1;
    const std::uint64_t dropout_seed = 99;

    auto loss = [&] {
        auto fwd = forward(graph, cloud, params, config, Mode::Train, dropout_seed);
        return backward(fwd.cache, label, cw, params, config, config.weight_decay).loss;
    };
    auto fwd = forward(graph, cloud, params, config, Mode::Train, dropout_seed);
    const ModelParams<double> grads = backward(fwd.cache, label, cw, params, config, config.weight_decay).grads;

    const auto refs = parameter_refs(params);
    const auto grefs = parameter_refs(grads);
    std::vector<double> all_analytic, all_numeric;
    for (std::size_t t = 0; t < refs.size(); ++t) {
        const auto num = numeric_gradient(refs[t].data, std::size_t(refs[t].size()), loss, 1e-6);
        const std::vector<double> ana(grefs[t].data, grefs[t].data + grefs[t].size());
        INFO("tensor " << refs[t].name);
        CHECK(gradient_error(ana, num) < 1e-3);
        all_analytic.insert(all_analytic.end(), ana.begin(), ana.end());
        all_numeric.insert(all_numeric.end(), num.begin(), num.end());
    }
    CHECK(gradient_error(all_analytic, all_numeric) < 1e-3);
}

}  // namespace

TEST_CASE("default config mirrors the published architecture") {
    const ModelConfig c;
    CHECK(c.knn_k == 40);
    CHECK(c.cheb_order == 3);
    CHECK(c.filters == std::array<std::size_t, 2>{1000, 1000});
    CHECK(c.centroid_count == 55);
    CHECK(c.cluster_k == 50);
    CHECK(c.keep_conv == 0.9);
    CHECK(c.keep_fc == 0.5);
    CHECK(c.weight_decay == 2e-4);
    CHECK(c.feature_size() == 4000);
    ModelConfig m = c;
    m.pooling = PoolingMode::Multires;
    CHECK(m.feature_size() == 2000);
    m.multires_concat = true;
    CHECK(m.feature_size() == 4000);
}

TEST_CASE("config text round trip and validation") {
    ModelConfig c = tiny_config(PoolingMode::Multires);
    c.sigma = SigmaPolicy::fixed(0.3);
    c.cluster_mode = ClusterMode::Partition;
    c.keep_fc = 0.123456789012345;
    const ModelConfig back = ModelConfig::from_text(c.to_text());
    CHECK(back.to_text() == c.to_text());
    CHECK(back.keep_fc == c.keep_fc);
    CHECK(back.sigma.kind == SigmaPolicy::Kind::Fixed);

    CHECK_THROWS(ModelConfig::from_text("knn_k = 4\nbogus = 1\n"));
    CHECK_THROWS(ModelConfig::from_text("knn_k 4\n"));
    CHECK(ModelConfig::from_text("# comment\nknn_k = 7\n").knn_k == 7);

    ModelConfig bad = c;
    bad.filters = {0, 8};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.keep_conv = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS(parse_pooling_mode("bogus"));
    CHECK(parse_pooling_mode("multires") == PoolingMode::Multires);
}

TEST_CASE("init_params is deterministic with the documented shapes") {
    const ModelConfig c = tiny_config();
    const auto a = init_params<float>(c, 5), b = init_params<float>(c, 5), d = init_params<float>(c, 6);
    CHECK(a.conv1.theta == b.conv1.theta);
    CHECK(a.fc_weight == b.fc_weight);
    CHECK(a.conv1.theta != d.conv1.theta);
    CHECK(a.conv1.theta.rows() == 3 * 3);
    CHECK(a.conv1.theta.cols() == 8);
    CHECK(a.conv2.theta.rows() == 3 * 8);
    CHECK(a.fc_weight.rows() == 3);
    CHECK(a.fc_weight.cols() == Eigen::Index(c.feature_size()));
    CHECK(a.conv1.bias.norm() == 0.0);
    CHECK(a.fc_bias.norm() == 0.0);
}

TEST_CASE("init_params variance follows the Glorot formula") {
    ModelConfig c;
    c.cheb_order = 3;
    c.filters = {500, 500};
    c.class_count = 2;
    const auto p = init_params<float>(c, 1);
    REQUIRE(p.conv2.theta.size() == 1000000);
    const double fan_in = 4 * 500, fan_out = 500;
    const Eigen::ArrayXd x = Eigen::Map<const Eigen::VectorXf>(p.conv2.theta.data(), p.conv2.theta.size()).cast<double>();
    const double var = (x - x.mean()).square().mean();
    CHECK(std::abs(var / (2.0 / (fan_in + fan_out)) - 1.0) < 0.05);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    CHECK(x.abs().maxCoeff() <= double(float(bound)));  // samples are stored in float
}

TEST_CASE("check_params names the mismatching dimension") {
    const ModelConfig c = tiny_config();
    ModelParams<float> p = init_params<float>(c, 1);
    ModelConfig other = c;
    other.class_count = 5;
    try {
        check_params(p, other);
        FAIL("expected a mismatch");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("class") != std::string::npos);
    }
    other = c;
    other.filters = {8, 9};
    CHECK_THROWS_AS(check_params(p, other), std::invalid_argument);
}

TEST_CASE("forward produces a probability vector, deterministically in eval mode") {
    for (PoolingMode mode : {PoolingMode::Global, PoolingMode::Multires}) {
        const ModelConfig c = tiny_config(mode);
        const PointCloud cloud = normalize_unit_sphere(random_cloud(24, 7));
        const auto g = build_graph_context<float>(cloud, c);
        const auto p = init_params<float>(c, 2);
        const auto a = forward(g, cloud, p, c, Mode::Eval);
        const auto b = forward(g, cloud, p, c, Mode::Eval);
        CHECK((a.probs.array() > 0.0f).all());
        CHECK(std::abs(double(a.probs.sum()) - 1.0) < 1e-6);
        CHECK(a.probs == b.probs);
        const std::size_t pooled_layers = mode == PoolingMode::Global ? 2 : 1;
        CHECK(a.active.size() == pooled_layers * 8);
        for (const auto& ap : a.active) CHECK(ap.vertex < cloud.size());
    }
}

TEST_CASE("multires forward rejects clouds smaller than the centroid count") {
    const ModelConfig c = tiny_config(PoolingMode::Multires);
    const PointCloud cloud = random_cloud(7, 1);
    CHECK_THROWS(build_graph_context<float>(cloud, c));
}

TEST_CASE("global-branch output is invariant to point permutation") {
    const ModelConfig c = tiny_config();
    const PointCloud cloud = normalize_unit_sphere(random_cloud(60, 8));
    const auto p = init_params<float>(c, 3);
    const auto g = build_graph_context<float>(cloud, c);
    const Vector<float> base = forward(g, cloud, p, c, Mode::Eval).probs;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const PointCloud pc = subset(cloud, random_permutation(cloud.size(), s));
        const auto pg = build_graph_context<float>(pc, c);
        CHECK((forward(pg, pc, p, c, Mode::Eval).probs - base).cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("full-model gradients match finite differences (global)") { check_full_model_gradient(tiny_config()); }

TEST_CASE("full-model gradients match finite differences (multires)") {
    check_full_model_gradient(tiny_config(PoolingMode::Multires));
    ModelConfig c = tiny_config(PoolingMode::Multires);
    c.multires_concat = true;
    c.cluster_mode = ClusterMode::Partition;
    check_full_model_gradient(c);
}

TEST_CASE("gradients vanish at a confident correct prediction without decay") {
    ModelConfig c = tiny_config();
    c.keep_conv = c.keep_fc = 1.0;
    const PointCloud cloud = normalize_unit_sphere(random_cloud(24, 9));
    const auto g = build_graph_context<double>(cloud, c);
    ModelParams<double> p = tiny_params(c, 5);
    p.fc_bias(2) = 60.0;
    auto fwd = forward(g, cloud, p, c, Mode::Train, 1);
    CHECK(fwd.probs(2) > 1.0 - 1e-12);
    const auto grads = backward(fwd.cache, 2, ClassWeights::uniform(3), p, c, 0.0).grads;
    for (double v : flatten(grads)) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("weight decay gradient is linear in lambda and skips biases") {
    const ModelConfig c = tiny_config();
    const PointCloud cloud = normalize_unit_sphere(random_cloud(24, 10));
    const auto g = build_graph_context<double>(cloud, c);
    const ModelParams<double> p = tiny_params(c, 6);
    auto grads_at = [&](double lambda) {
        auto fwd = forward(g, cloud, p, c, Mode::Train, 3);
        return flatten(backward(fwd.cache, 0, ClassWeights::uniform(3), p, c, lambda).grads);
    };
    const auto g0 = grads_at(0.0), g1 = grads_at(0.01), g2 = grads_at(0.02);
    const auto w = flatten(p);
    const auto refs = parameter_refs(p);
    std::size_t offset = 0;
    for (const auto& r : refs) {
        for (Eigen::Index i = 0; i < r.size(); ++i, ++offset) {
            const double d1 = g1[offset] - g0[offset], d2 = g2[offset] - g0[offset];
            CHECK(d2 == doctest::Approx(2.0 * d1).epsilon(1e-9));
            CHECK(d1 == doctest::Approx(r.decays ? 2.0 * 0.01 * w[offset] : 0.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("backward consumes the cache") {
    const ModelConfig c = tiny_config();
    const PointCloud cloud = normalize_unit_sphere(random_cloud(24, 11));
    const auto g = build_graph_context<double>(cloud, c);
    const auto p = tiny_params(c, 7);
    auto fwd = forward(g, cloud, p, c, Mode::Train, 1);
    backward(fwd.cache, 0, ClassWeights::uniform(3), p, c, 0.0);
    CHECK_THROWS_AS(backward(fwd.cache, 0, ClassWeights::uniform(3), p, c, 0.0), std::logic_error);
    ForwardCache<double> empty;
    CHECK_THROWS_AS(backward(empty, 0, ClassWeights::uniform(3), p, c, 0.0), std::logic_error);
}

TEST_CASE("first-layer response to one input row is K-hop local") {
    const ModelConfig c = tiny_config();
    const PointCloud cloud = normalize_unit_sphere(random_cloud(60, 12));
    const auto g = build_graph_context<double>(cloud, c);
    const auto p = tiny_params(c, 8);
    PointCloud moved = cloud;
    const std::size_t j = 9;
    moved.points[j].x += 0.05f;
    // the graph context is held fixed: only the feature row of vertex j changes
    const auto a = forward(g, cloud, p, c, Mode::Eval), b = forward(g, moved, p, c, Mode::Eval);
    const auto hops = hop_distances(knn_graph(cloud, c.knn_k).adjacency, j);
    int changed = 0;
    for (Eigen::Index i = 0; i < 60; ++i) {
        const double d = (a.cache.pre1.row(i) - b.cache.pre1.row(i)).cwiseAbs().maxCoeff();
        if (hops[std::size_t(i)] < 0 || hops[std::size_t(i)] > c.cheb_order) CHECK(d == 0.0);
        else changed += d > 0.0;
    }
    CHECK(changed > 1);
}

TEST_CASE("multires with singleton clusters on all points matches the global branch") {
    ModelConfig global = tiny_config();
    ModelConfig multi = tiny_config(PoolingMode::Multires);
    multi.centroid_count = 24;
    multi.cluster_k = 1;
    multi.multires_concat = true;
    multi.knn_k = global.knn_k;
    const PointCloud cloud = normalize_unit_sphere(random_cloud(24, 13));
    const auto p = tiny_params(global, 9);
    const auto gg = build_graph_context<double>(cloud, global);
    const auto gm = build_graph_context<double>(cloud, multi);
    const auto a = forward(gg, cloud, p, global, Mode::Eval);
    const auto b = forward(gm, cloud, p, multi, Mode::Eval);
    CHECK((a.probs - b.probs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("cast_params and zeros_like") {
    const ModelConfig c = tiny_config();
    const auto p = init_params<float>(c, 1);
    const auto d = cast_params<double>(p);
    CHECK(cast_params<float>(d).conv2.theta == p.conv2.theta);
    const auto z = zeros_like(p);
    CHECK(z.fc_weight.rows() == p.fc_weight.rows());
    CHECK(z.fc_weight.norm() == 0.0);
    ModelConfig nobias = c;
    nobias.conv_bias = false;
    const auto q = init_params<float>(nobias, 1);
    CHECK(parameter_refs(q).size() == 4);
    CHECK(parameter_refs(p).size() == 6);
}
