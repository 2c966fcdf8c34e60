#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tensor.hpp"

namespace sinomar::nn {

/// Adam with bias correction. Paper-scale defaults: lr 1e-4,
/// betas (0.5, 0.999).
struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m;  // first moments per parameter
    std::vector<std::vector<double>> v;  // second moments per parameter

    AdamState() = default;
    explicit AdamState(const std::vector<Tensor>& params, double lr_ = 1e-4, double b1 = 0.5,
                       double b2 = 0.999)
        : lr(lr_), beta1(b1), beta2(b2) {
        for (const Tensor& p : params) {
            m.emplace_back(p->value.size(), 0.0);
            v.emplace_back(p->value.size(), 0.0);
        }
    }
};

/// One bias-corrected Adam update from the gradients currently stored on the
/// parameters. Parameters without an allocated gradient are treated as
/// zero-gradient (left unchanged by the moment decay except for the usual
/// moment shrinkage).
inline void adam_step(std::vector<Tensor>& params, AdamState& st) {
    if (params.size() != st.m.size()) throw std::invalid_argument("adam_step: state/parameter mismatch");
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        p->ensure_grad();
        auto& m = st.m[pi];
        auto& v = st.v[pi];
        for (size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p->value[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

}  // namespace sinomar::nn
