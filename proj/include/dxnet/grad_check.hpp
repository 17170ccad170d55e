// Central-difference gradient checking. Used by the test suite to validate
// every backward implementation against a numeric estimate.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dxnet/autodiff.hpp"

namespace dxnet {

template <typename T>
struct GradCheckResult {
    T max_abs_err = 0;    // max |analytic - numeric| over all checked scalars
    T max_rel_err = 0;    // same, normalized by max(|analytic|, |numeric|, floor)
    std::int64_t checked = 0;

    bool ok(T tol) const { return checked > 0 && max_rel_err <= tol; }
};

// fn rebuilds the graph from the current parameter values and returns a scalar
// loss Variable. Every parameter is perturbed coordinate-wise and the analytic
// gradient from one backward pass is compared against (f(+h) - f(-h)) / 2h.
// Gradients below denom_floor are compared absolutely (against tol *
// denom_floor); central differences carry ~1e-10 of noise, so a tighter floor
// would flag correct near-zero gradients.
template <typename T>
GradCheckResult<T> grad_check(std::vector<Variable<T>> params,
                              const std::function<Variable<T>()>& fn, T h = T(1e-5),
                              T denom_floor = T(1e-4)) {
    for (auto& p : params) p.zero_grad(); // stale grads would pollute the accumulation
    Variable<T> loss = fn();
    backward(loss);
    std::vector<Tensor<T>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p.grad());

    GradCheckResult<T> res;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<T>& v = params[pi].mutable_value();
        for (std::int64_t i = 0; i < v.numel(); ++i) {
            const T orig = v[i];
            v[i] = orig + h;
            const T fp = fn().value()[0];
            v[i] = orig - h;
            const T fm = fn().value()[0];
            v[i] = orig;
            const T numeric = (fp - fm) / (T(2) * h);
            const T a = analytic[pi][i];
            const T abs_err = std::abs(a - numeric);
            const T denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
            res.max_abs_err = std::max(res.max_abs_err, abs_err);
            res.max_rel_err = std::max(res.max_rel_err, abs_err / denom);
            res.checked++;
        }
    }
    return res;
}

} // namespace dxnet
