#include "pointgcn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace pointgcn {

template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, std::int64_t t,
                 const AdamOptions& opt) {
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
        throw std::invalid_argument("adam: parameter, gradient and moment sizes differ");
    if (!(opt.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
    if (t < 1) throw std::invalid_argument("adam: step counter must be >= 1");

    const double c1 = 1.0 - std::pow(opt.beta1, double(t));
    const double c2 = 1.0 - std::pow(opt.beta2, double(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = double(grads[i]);
        const double mi = opt.beta1 * double(m[i]) + (1.0 - opt.beta1) * g;
        const double vi = opt.beta2 * double(v[i]) + (1.0 - opt.beta2) * g * g;
        m[i] = T(mi);
        v[i] = T(vi);
        params[i] = T(double(params[i]) - opt.lr * (mi / c1) / (std::sqrt(vi / c2) + opt.eps));
    }
}

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, const AdamOptions& opt) {
    auto p = parameter_refs(params);
    const auto g = parameter_refs(grads);
    auto m = parameter_refs(state.m);
    auto v = parameter_refs(state.v);
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
        throw std::invalid_argument("adam: tensor count mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (g[i].size() != p[i].size() || m[i].size() != p[i].size() || v[i].size() != p[i].size())
            throw std::invalid_argument("adam: shape mismatch for " + p[i].name);
    }
    ++state.t;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto n = std::size_t(p[i].size());
        adam_update<T>({p[i].data, n}, {g[i].data, n}, {m[i].data, n}, {v[i].data, n}, state.t, opt);
    }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::int64_t, const AdamOptions&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                  std::int64_t, const AdamOptions&);
template void adam_step<float>(ModelParams<float>&, const ModelParams<float>&, AdamState<float>&, const AdamOptions&);
template void adam_step<double>(ModelParams<double>&, const ModelParams<double>&, AdamState<double>&,
                                const AdamOptions&);

}  // namespace pointgcn
