#ifndef POINTGCN_OPTIM_HPP
#define POINTGCN_OPTIM_HPP

#include "pointgcn/model.hpp"

#include <cstdint>
#include <span>

namespace pointgcn {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moment estimates, shaped like the parameters.
template <typename T>
struct AdamState {
    ModelParams<T> m;
    ModelParams<T> v;
    std::int64_t t = 0;

    static AdamState zeros(const ModelParams<T>& params) { return {zeros_like(params), zeros_like(params), 0}; }
};

/// One bias-corrected Adam update of a flat parameter block at step `t` (t >= 1).
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, std::int64_t t,
                 const AdamOptions& opt);

/// Advances state.t and updates every tensor of `params`.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, const AdamOptions& opt);

}  // namespace pointgcn

#endif  // POINTGCN_OPTIM_HPP
