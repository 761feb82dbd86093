#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dualdst/autodiff.hpp"
#include "dualdst/tensor.hpp"

namespace dualdst {

// Adam with bias correction. Gradients are clipped to a global norm before
// every step and zeroed afterwards.
struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;
    int64_t step = 0;

    struct Moments {
        Tensor m;
        Tensor v;
    };
    std::map<std::string, Moments> moments;
};

inline void adam_step(const std::vector<Parameter*>& params, AdamState& state) {
    double sq = 0.0;
    for (Parameter* p : params)
        for (double g : p->grad.data) sq += g * g;
    double norm = std::sqrt(sq);
    double scale = (state.clip_norm > 0.0 && norm > state.clip_norm) ? state.clip_norm / norm : 1.0;

    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (Parameter* p : params) {
        auto it = state.moments.find(p->name);
        if (it == state.moments.end()) {
            it = state.moments.emplace(p->name,
                                       AdamState::Moments{Tensor(p->tensor.shape),
                                                          Tensor(p->tensor.shape)}).first;
        } else if (!it->second.m.same_shape(p->tensor)) {
            throw ShapeMismatch("adam_step: moment shape mismatch for " + p->name);
        }
        AdamState::Moments& mo = it->second;
        for (size_t i = 0; i < p->tensor.data.size(); ++i) {
            double g = p->grad.data[i] * scale;
            mo.m.data[i] = state.beta1 * mo.m.data[i] + (1.0 - state.beta1) * g;
            mo.v.data[i] = state.beta2 * mo.v.data[i] + (1.0 - state.beta2) * g * g;
            double mhat = mo.m.data[i] / bc1;
            double vhat = mo.v.data[i] / bc2;
            p->tensor.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        p->zero_grad();
    }
}

// Central-difference gradient check. f runs one forward+backward pass,
// accumulating into the parameters' grads, and returns the loss value.
// Returns max over all coordinates of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline double gradient_check(const std::function<double()>& f,
                             const std::vector<Parameter*>& params, double eps = 1e-5) {
    for (Parameter* p : params) p->zero_grad();
    f();
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) {
        analytic.push_back(p->grad);
        p->zero_grad();
    }

    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        for (size_t i = 0; i < p->tensor.data.size(); ++i) {
            double saved = p->tensor.data[i];
            p->tensor.data[i] = saved + eps;
            double up = f();
            p->tensor.data[i] = saved - eps;
            double down = f();
            p->tensor.data[i] = saved;
            for (Parameter* q : params) q->zero_grad();
            double numeric = (up - down) / (2.0 * eps);
            double a = analytic[pi].data[i];
            double err = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace dualdst
