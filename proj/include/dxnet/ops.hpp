// Differentiable primitives: convolution, batch norm, activations, pooling,
// concatenation, elementwise ops, losses. Convolution is cross-correlation
// with zero padding (no kernel flip), the standard learned-CNN convention.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "dxnet/autodiff.hpp"

namespace dxnet {

// ---------------------------------------------------------------------------
// Specs and state
// ---------------------------------------------------------------------------

struct ConvSpec {
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    std::int64_t kernel_h = 1;
    std::int64_t kernel_w = 1;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    std::int64_t groups = 1; // groups == in_channels -> depthwise
    bool has_bias = false;

    void validate() const {
        if (in_channels <= 0 || out_channels <= 0 || kernel_h <= 0 || kernel_w <= 0)
            throw ConfigError("conv spec extents must be positive");
        if (stride < 1) throw ConfigError("conv stride must be >= 1");
        if (padding < 0) throw ConfigError("conv padding must be >= 0");
        if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0)
            throw ConfigError(detail::msg("groups ", groups, " must divide in=", in_channels,
                                          " and out=", out_channels));
    }
};

template <typename T>
struct BatchNormState {
    Variable<T> gamma; // per-channel scale
    Variable<T> beta;  // per-channel shift
    Tensor<T> running_mean;
    Tensor<T> running_var;
    std::int64_t batches_tracked = 0; // 0 -> running stats not yet initialized
    T momentum = T(0.1);
    T epsilon = T(1e-5);

    std::int64_t channels() const { return gamma.value().numel(); }
};

template <typename T>
BatchNormState<T> make_batch_norm(std::int64_t channels) {
    BatchNormState<T> st;
    st.gamma = Variable<T>(Tensor<T>(Shape{channels}, T(1)), true);
    st.beta = Variable<T>(Tensor<T>(Shape{channels}, T(0)), true);
    st.running_mean = Tensor<T>(Shape{channels}, T(0));
    st.running_var = Tensor<T>(Shape{channels}, T(1));
    return st;
}

enum class ActKind { relu, sigmoid, gaussian_gate };
enum class PoolKind { avg2x2, global_avg };
enum class LossKind { mse, mae, softmax_ce };

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace detail {

struct OwRange {
    std::int64_t lo, hi; // inclusive; empty when lo > hi
};

// Output columns for which the input column ow*stride + k - pad stays in [0, win).
inline OwRange ow_range(std::int64_t k, std::int64_t pad, std::int64_t stride, std::int64_t win,
                        std::int64_t wout) {
    std::int64_t a = pad - k;
    std::int64_t lo = a <= 0 ? 0 : (a + stride - 1) / stride;
    std::int64_t b = win - 1 + pad - k;
    std::int64_t hi = b < 0 ? -1 : std::min(wout - 1, b / stride);
    return {lo, hi};
}

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                    const ConvSpec& s, Tensor<T>& out) {
    const std::int64_t N = x.dim(0), C_in = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t C_out = s.out_channels, OH = out.dim(2), OW = out.dim(3);
    const std::int64_t icpg = C_in / s.groups, ocpg = C_out / s.groups;
    const T* xb = x.data();
    const T* wb = w.data();
    T* ob = out.data();
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t co = 0; co < C_out; ++co) {
            T* oplane = ob + ((n * C_out + co) * OH) * OW;
            const T bv = bias ? (*bias)[co] : T(0);
            for (std::int64_t i = 0; i < OH * OW; ++i) oplane[i] = bv;
            const std::int64_t g = co / ocpg;
            for (std::int64_t cil = 0; cil < icpg; ++cil) {
                const std::int64_t ci = g * icpg + cil;
                const T* xplane = xb + ((n * C_in + ci) * H) * W;
                const T* wk = wb + ((co * icpg + cil) * s.kernel_h) * s.kernel_w;
                for (std::int64_t kh = 0; kh < s.kernel_h; ++kh) {
                    for (std::int64_t kw = 0; kw < s.kernel_w; ++kw) {
                        const T wv = wk[kh * s.kernel_w + kw];
                        const OwRange r = ow_range(kw, s.padding, s.stride, W, OW);
                        if (r.lo > r.hi) continue;
                        for (std::int64_t oh = 0; oh < OH; ++oh) {
                            const std::int64_t ih = oh * s.stride + kh - s.padding;
                            if (ih < 0 || ih >= H) continue;
                            const T* xrow = xplane + ih * W + (kw - s.padding);
                            T* orow = oplane + oh * OW;
                            if (s.stride == 1) {
                                for (std::int64_t ow = r.lo; ow <= r.hi; ++ow)
                                    orow[ow] += wv * xrow[ow];
                            } else {
                                for (std::int64_t ow = r.lo; ow <= r.hi; ++ow)
                                    orow[ow] += wv * xrow[ow * s.stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_x(const Tensor<T>& gout, const Tensor<T>& w, const ConvSpec& s,
                       Tensor<T>& dx) {
    const std::int64_t N = dx.dim(0), C_in = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
    const std::int64_t C_out = s.out_channels, OH = gout.dim(2), OW = gout.dim(3);
    const std::int64_t icpg = C_in / s.groups, ocpg = C_out / s.groups;
    const T* gb = gout.data();
    const T* wb = w.data();
    T* db = dx.data();
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t co = 0; co < C_out; ++co) {
            const T* gplane = gb + ((n * C_out + co) * OH) * OW;
            const std::int64_t g = co / ocpg;
            for (std::int64_t cil = 0; cil < icpg; ++cil) {
                const std::int64_t ci = g * icpg + cil;
                T* xplane = db + ((n * C_in + ci) * H) * W;
                const T* wk = wb + ((co * icpg + cil) * s.kernel_h) * s.kernel_w;
                for (std::int64_t kh = 0; kh < s.kernel_h; ++kh) {
                    for (std::int64_t kw = 0; kw < s.kernel_w; ++kw) {
                        const T wv = wk[kh * s.kernel_w + kw];
                        const OwRange r = ow_range(kw, s.padding, s.stride, W, OW);
                        if (r.lo > r.hi) continue;
                        for (std::int64_t oh = 0; oh < OH; ++oh) {
                            const std::int64_t ih = oh * s.stride + kh - s.padding;
                            if (ih < 0 || ih >= H) continue;
                            T* xrow = xplane + ih * W + (kw - s.padding);
                            const T* grow = gplane + oh * OW;
                            if (s.stride == 1) {
                                for (std::int64_t ow = r.lo; ow <= r.hi; ++ow)
                                    xrow[ow] += wv * grow[ow];
                            } else {
                                for (std::int64_t ow = r.lo; ow <= r.hi; ++ow)
                                    xrow[ow * s.stride] += wv * grow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_w(const Tensor<T>& gout, const Tensor<T>& x, const ConvSpec& s,
                       Tensor<T>& dw) {
    const std::int64_t N = x.dim(0), C_in = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t C_out = s.out_channels, OH = gout.dim(2), OW = gout.dim(3);
    const std::int64_t icpg = C_in / s.groups, ocpg = C_out / s.groups;
    const T* gb = gout.data();
    const T* xb = x.data();
    for (std::int64_t co = 0; co < C_out; ++co) {
        const std::int64_t g = co / ocpg;
        for (std::int64_t cil = 0; cil < icpg; ++cil) {
            const std::int64_t ci = g * icpg + cil;
            T* wk = dw.data() + ((co * icpg + cil) * s.kernel_h) * s.kernel_w;
            for (std::int64_t kh = 0; kh < s.kernel_h; ++kh) {
                for (std::int64_t kw = 0; kw < s.kernel_w; ++kw) {
                    const OwRange r = ow_range(kw, s.padding, s.stride, W, OW);
                    T acc = 0;
                    if (r.lo <= r.hi) {
                        for (std::int64_t n = 0; n < N; ++n) {
                            const T* gplane = gb + ((n * C_out + co) * OH) * OW;
                            const T* xplane = xb + ((n * C_in + ci) * H) * W;
                            for (std::int64_t oh = 0; oh < OH; ++oh) {
                                const std::int64_t ih = oh * s.stride + kh - s.padding;
                                if (ih < 0 || ih >= H) continue;
                                const T* xrow = xplane + ih * W + (kw - s.padding);
                                const T* grow = gplane + oh * OW;
                                if (s.stride == 1) {
                                    for (std::int64_t ow = r.lo; ow <= r.hi; ++ow)
                                        acc += grow[ow] * xrow[ow];
                                } else {
                                    for (std::int64_t ow = r.lo; ow <= r.hi; ++ow)
                                        acc += grow[ow] * xrow[ow * s.stride];
                                }
                            }
                        }
                    }
                    wk[kh * s.kernel_w + kw] = acc;
                }
            }
        }
    }
}

} // namespace detail

template <typename T>
Variable<T> conv2d(const Variable<T>& x, const Variable<T>& w,
                   const std::type_identity_t<std::optional<Variable<T>>>& b,
                   const ConvSpec& spec) {
    spec.validate();
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    if (xv.rank() != 4 || xv.dim(1) != spec.in_channels)
        throw ShapeError(detail::msg("conv2d input must be (N,", spec.in_channels, ",H,W), got ",
                                     shape_str(xv.shape())));
    const std::int64_t icpg = spec.in_channels / spec.groups;
    Shape expect_w{spec.out_channels, icpg, spec.kernel_h, spec.kernel_w};
    if (wv.shape() != expect_w)
        throw ShapeError(detail::msg("conv2d weight must be ", shape_str(expect_w), ", got ",
                                     shape_str(wv.shape())));
    if (spec.has_bias != b.has_value())
        throw ConfigError("conv2d bias presence does not match spec");
    if (b && b->value().shape() != Shape{spec.out_channels})
        throw ShapeError("conv2d bias must be (out_channels)");

    const std::int64_t H = xv.dim(2), W = xv.dim(3);
    const std::int64_t OH = (H + 2 * spec.padding - spec.kernel_h) / spec.stride + 1;
    const std::int64_t OW = (W + 2 * spec.padding - spec.kernel_w) / spec.stride + 1;
    if (H + 2 * spec.padding < spec.kernel_h || W + 2 * spec.padding < spec.kernel_w || OH <= 0 ||
        OW <= 0)
        throw ShapeError(detail::msg("conv2d output size non-positive for input ",
                                     shape_str(xv.shape())));

    Tensor<T> out(Shape{xv.dim(0), spec.out_channels, OH, OW});
    detail::conv2d_forward(xv, wv, b ? &b->value() : nullptr, spec, out);

    std::vector<Variable<T>> ins{x, w};
    if (b) ins.push_back(*b);
    auto back = [spec](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        auto& win = *node.inputs[1];
        if (xin.grad_needed) {
            Tensor<T> dx(xin.value.shape());
            detail::conv2d_backward_x(node.grad, win.value, spec, dx);
            xin.accumulate(dx);
        }
        if (win.grad_needed) {
            Tensor<T> dw(win.value.shape());
            detail::conv2d_backward_w(node.grad, xin.value, spec, dw);
            win.accumulate(dw);
        }
        if (node.inputs.size() > 2 && node.inputs[2]->grad_needed) {
            auto& bin = *node.inputs[2];
            Tensor<T> db(bin.value.shape());
            const std::int64_t N = node.grad.dim(0), C = node.grad.dim(1),
                               HW = node.grad.dim(2) * node.grad.dim(3);
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t c = 0; c < C; ++c) {
                    const T* row = node.grad.data() + (n * C + c) * HW;
                    T acc = 0;
                    for (std::int64_t i = 0; i < HW; ++i) acc += row[i];
                    db[c] += acc;
                }
            bin.accumulate(db);
        }
    };
    return make_op<T>("conv2d", std::move(out), std::move(ins), std::move(back));
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

// Train mode normalizes by batch statistics over (N,H,W) and updates the
// running stats in place; eval mode normalizes by the running stats and
// requires them to have been initialized (a train step or a checkpoint load).
template <typename T>
Variable<T> batch_norm(const Variable<T>& x, BatchNormState<T>& st, Mode mode) {
    const Tensor<T>& xv = x.value();
    if (xv.rank() != 4 || xv.dim(1) != st.channels())
        throw ShapeError(detail::msg("batch_norm input ", shape_str(xv.shape()),
                                     " does not match ", st.channels(), " channels"));
    const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::int64_t m = N * H * W;
    const std::int64_t plane = H * W;

    Tensor<T> xhat(xv.shape());
    std::vector<T> ivar(static_cast<std::size_t>(C));

    if (mode == Mode::train) {
        if (m == 0) throw ShapeError("batch_norm: zero batch in train mode");
        for (std::int64_t c = 0; c < C; ++c) {
            double sum = 0, sq = 0;
            for (std::int64_t n = 0; n < N; ++n) {
                const T* row = xv.data() + (n * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    sum += row[i];
                    sq += double(row[i]) * double(row[i]);
                }
            }
            const double mu = sum / double(m);
            double var = sq / double(m) - mu * mu;
            if (var < 0) var = 0; // numeric guard
            const T iv = T(1) / std::sqrt(T(var) + st.epsilon);
            ivar[static_cast<std::size_t>(c)] = iv;
            for (std::int64_t n = 0; n < N; ++n) {
                const T* row = xv.data() + (n * C + c) * plane;
                T* orow = xhat.data() + (n * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) orow[i] = (row[i] - T(mu)) * iv;
            }
            const double var_running = m > 1 ? var * double(m) / double(m - 1) : var;
            st.running_mean[c] = (T(1) - st.momentum) * st.running_mean[c] + st.momentum * T(mu);
            st.running_var[c] = (T(1) - st.momentum) * st.running_var[c] + st.momentum * T(var_running);
        }
        st.batches_tracked++;
    } else {
        if (st.batches_tracked == 0)
            throw NumericError("batch_norm: eval mode with uninitialized running stats");
        for (std::int64_t c = 0; c < C; ++c) {
            if (st.running_var[c] < 0) throw NumericError("batch_norm: negative running variance");
            const T iv = T(1) / std::sqrt(st.running_var[c] + st.epsilon);
            ivar[static_cast<std::size_t>(c)] = iv;
            const T mu = st.running_mean[c];
            for (std::int64_t n = 0; n < N; ++n) {
                const T* row = xv.data() + (n * C + c) * plane;
                T* orow = xhat.data() + (n * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) orow[i] = (row[i] - mu) * iv;
            }
        }
    }

    Tensor<T> out(xv.shape());
    const Tensor<T>& gv = st.gamma.value();
    const Tensor<T>& bv = st.beta.value();
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            const T* hrow = xhat.data() + (n * C + c) * plane;
            T* orow = out.data() + (n * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) orow[i] = gv[c] * hrow[i] + bv[c];
        }

    auto back = [xhat, ivar, mode, C, plane](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        auto& gin = *node.inputs[1];
        auto& bin = *node.inputs[2];
        const std::int64_t N = node.grad.dim(0);
        const std::int64_t m = N * plane;
        std::vector<T> dgamma(static_cast<std::size_t>(C), T(0));
        std::vector<T> dbeta(static_cast<std::size_t>(C), T(0));
        for (std::int64_t c = 0; c < C; ++c) {
            double dg = 0, db = 0;
            for (std::int64_t n = 0; n < N; ++n) {
                const T* grow = node.grad.data() + (n * C + c) * plane;
                const T* hrow = xhat.data() + (n * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    dg += double(grow[i]) * double(hrow[i]);
                    db += grow[i];
                }
            }
            dgamma[static_cast<std::size_t>(c)] = T(dg);
            dbeta[static_cast<std::size_t>(c)] = T(db);
        }
        if (xin.grad_needed) {
            Tensor<T> dx(xin.value.shape());
            const T* gammav = gin.value.data();
            for (std::int64_t c = 0; c < C; ++c) {
                const T scale = gammav[c] * ivar[static_cast<std::size_t>(c)];
                if (mode == Mode::train) {
                    const T mean_dy = dbeta[static_cast<std::size_t>(c)] / T(m);
                    const T mean_dyh = dgamma[static_cast<std::size_t>(c)] / T(m);
                    for (std::int64_t n = 0; n < N; ++n) {
                        const T* grow = node.grad.data() + (n * C + c) * plane;
                        const T* hrow = xhat.data() + (n * C + c) * plane;
                        T* drow = dx.data() + (n * C + c) * plane;
                        for (std::int64_t i = 0; i < plane; ++i)
                            drow[i] = scale * (grow[i] - mean_dy - hrow[i] * mean_dyh);
                    }
                } else {
                    for (std::int64_t n = 0; n < N; ++n) {
                        const T* grow = node.grad.data() + (n * C + c) * plane;
                        T* drow = dx.data() + (n * C + c) * plane;
                        for (std::int64_t i = 0; i < plane; ++i) drow[i] = scale * grow[i];
                    }
                }
            }
            xin.accumulate(dx);
        }
        if (gin.grad_needed) gin.accumulate(Tensor<T>(Shape{C}, dgamma));
        if (bin.grad_needed) bin.accumulate(Tensor<T>(Shape{C}, dbeta));
    };
    return make_op<T>("batch_norm", std::move(out), {x, st.gamma, st.beta}, std::move(back));
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
Variable<T> activation(const Variable<T>& x, ActKind kind) {
    const Tensor<T>& xv = x.value();
    Tensor<T> out(xv.shape());
    const std::int64_t n = xv.numel();
    switch (kind) {
        case ActKind::relu:
            for (std::int64_t i = 0; i < n; ++i) out[i] = xv[i] > 0 ? xv[i] : T(0);
            break;
        case ActKind::sigmoid:
            for (std::int64_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
            break;
        case ActKind::gaussian_gate:
            for (std::int64_t i = 0; i < n; ++i) out[i] = std::exp(-xv[i] * xv[i]);
            break;
    }
    Tensor<T> saved = out; // sigmoid/gaussian reuse the output in backward
    auto back = [kind, saved](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        if (!xin.grad_needed) return;
        Tensor<T> dx(xin.value.shape());
        const std::int64_t n = dx.numel();
        const Tensor<T>& z = xin.value;
        switch (kind) {
            case ActKind::relu:
                // subgradient 0 at exactly z == 0
                for (std::int64_t i = 0; i < n; ++i) dx[i] = z[i] > 0 ? node.grad[i] : T(0);
                break;
            case ActKind::sigmoid:
                for (std::int64_t i = 0; i < n; ++i)
                    dx[i] = node.grad[i] * saved[i] * (T(1) - saved[i]);
                break;
            case ActKind::gaussian_gate:
                for (std::int64_t i = 0; i < n; ++i)
                    dx[i] = node.grad[i] * (T(-2) * z[i] * saved[i]);
                break;
        }
        xin.accumulate(dx);
    };
    return make_op<T>("activation", std::move(out), {x}, std::move(back));
}

template <typename T>
Variable<T> relu(const Variable<T>& x) {
    return activation(x, ActKind::relu);
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

// avg2x2 on odd dims floors: the trailing row/column is dropped.
template <typename T>
Variable<T> pool(const Variable<T>& x, PoolKind kind) {
    const Tensor<T>& xv = x.value();
    if (xv.rank() != 4) throw ShapeError("pool expects an NCHW tensor");
    const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);

    if (kind == PoolKind::avg2x2) {
        const std::int64_t OH = H / 2, OW = W / 2;
        if (OH == 0 || OW == 0)
            throw ShapeError(detail::msg("avg2x2 pooling empties spatial dims ", H, "x", W));
        Tensor<T> out(Shape{N, C, OH, OW});
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t oh = 0; oh < OH; ++oh)
                    for (std::int64_t ow = 0; ow < OW; ++ow)
                        out.at(n, c, oh, ow) =
                            (xv.at(n, c, 2 * oh, 2 * ow) + xv.at(n, c, 2 * oh, 2 * ow + 1) +
                             xv.at(n, c, 2 * oh + 1, 2 * ow) + xv.at(n, c, 2 * oh + 1, 2 * ow + 1)) *
                            T(0.25);
        auto back = [](VarNode<T>& node) {
            auto& xin = *node.inputs[0];
            if (!xin.grad_needed) return;
            Tensor<T> dx(xin.value.shape());
            const std::int64_t N = node.grad.dim(0), C = node.grad.dim(1), OH = node.grad.dim(2),
                               OW = node.grad.dim(3);
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t c = 0; c < C; ++c)
                    for (std::int64_t oh = 0; oh < OH; ++oh)
                        for (std::int64_t ow = 0; ow < OW; ++ow) {
                            const T q = node.grad.at(n, c, oh, ow) * T(0.25);
                            dx.at(n, c, 2 * oh, 2 * ow) += q;
                            dx.at(n, c, 2 * oh, 2 * ow + 1) += q;
                            dx.at(n, c, 2 * oh + 1, 2 * ow) += q;
                            dx.at(n, c, 2 * oh + 1, 2 * ow + 1) += q;
                        }
            xin.accumulate(dx);
        };
        return make_op<T>("avg2x2", std::move(out), {x}, std::move(back));
    }

    // global average over H, W
    Tensor<T> out(Shape{N, C, 1, 1});
    const std::int64_t plane = H * W;
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            const T* row = xv.data() + (n * C + c) * plane;
            double acc = 0;
            for (std::int64_t i = 0; i < plane; ++i) acc += row[i];
            out.at(n, c, 0, 0) = T(acc / double(plane));
        }
    auto back = [plane](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        if (!xin.grad_needed) return;
        Tensor<T> dx(xin.value.shape());
        const std::int64_t N = node.grad.dim(0), C = node.grad.dim(1);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
                const T q = node.grad.at(n, c, 0, 0) / T(plane);
                T* row = dx.data() + (n * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) row[i] = q;
            }
        xin.accumulate(dx);
    };
    return make_op<T>("global_avg", std::move(out), {x}, std::move(back));
}

// ---------------------------------------------------------------------------
// Concatenation / slicing along channels
// ---------------------------------------------------------------------------

template <typename T>
Variable<T> concat_channels(const std::vector<Variable<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels on empty list");
    const std::int64_t N = xs[0].value().dim(0), H = xs[0].value().dim(2), W = xs[0].value().dim(3);
    std::int64_t C = 0;
    for (const auto& v : xs) {
        const Tensor<T>& t = v.value();
        if (t.rank() != 4 || t.dim(0) != N || t.dim(2) != H || t.dim(3) != W)
            throw ShapeError(detail::msg("concat_channels spatial mismatch: ",
                                         shape_str(t.shape()), " vs (", N, ",*,", H, ",", W, ")"));
        C += t.dim(1);
    }
    Tensor<T> out(Shape{N, C, H, W});
    const std::int64_t plane = H * W;
    for (std::int64_t n = 0; n < N; ++n) {
        std::int64_t c0 = 0;
        for (const auto& v : xs) {
            const Tensor<T>& t = v.value();
            const std::int64_t ci = t.dim(1);
            std::copy(t.data() + n * ci * plane, t.data() + (n + 1) * ci * plane,
                      out.data() + (n * C + c0) * plane);
            c0 += ci;
        }
    }
    auto back = [plane](VarNode<T>& node) {
        const std::int64_t N = node.grad.dim(0), C = node.grad.dim(1);
        std::int64_t c0 = 0;
        for (auto& inp : node.inputs) {
            const std::int64_t ci = inp->value.dim(1);
            if (inp->grad_needed) {
                Tensor<T> dx(inp->value.shape());
                for (std::int64_t n = 0; n < N; ++n)
                    std::copy(node.grad.data() + (n * C + c0) * plane,
                              node.grad.data() + (n * C + c0 + ci) * plane,
                              dx.data() + n * ci * plane);
                inp->accumulate(dx);
            }
            c0 += ci;
        }
    };
    return make_op<T>("concat_channels", std::move(out), xs, std::move(back));
}

template <typename T>
Variable<T> slice_channels(const Variable<T>& x, std::int64_t c_begin, std::int64_t c_end) {
    const Tensor<T>& xv = x.value();
    if (xv.rank() != 4) throw ShapeError("slice_channels expects an NCHW tensor");
    const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (c_begin < 0 || c_end > C || c_begin >= c_end)
        throw ShapeError(detail::msg("bad channel slice [", c_begin, ",", c_end, ") of ", C));
    const std::int64_t plane = H * W, Cs = c_end - c_begin;
    Tensor<T> out(Shape{N, Cs, H, W});
    for (std::int64_t n = 0; n < N; ++n)
        std::copy(xv.data() + (n * C + c_begin) * plane, xv.data() + (n * C + c_end) * plane,
                  out.data() + n * Cs * plane);
    auto back = [c_begin, Cs, plane](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        if (!xin.grad_needed) return;
        Tensor<T> dx(xin.value.shape());
        const std::int64_t N = dx.dim(0), C = dx.dim(1);
        for (std::int64_t n = 0; n < N; ++n)
            std::copy(node.grad.data() + n * Cs * plane, node.grad.data() + (n + 1) * Cs * plane,
                      dx.data() + (n * C + c_begin) * plane);
        xin.accumulate(dx);
    };
    return make_op<T>("slice_channels", std::move(out), {x}, std::move(back));
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Variable<T> hadamard(const Variable<T>& x, const Variable<T>& g) {
    if (!x.value().same_shape(g.value()))
        throw ShapeError(detail::msg("hadamard shape mismatch: ", shape_str(x.value().shape()),
                                     " vs ", shape_str(g.value().shape())));
    Tensor<T> out(x.value().shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = x.value()[i] * g.value()[i];
    auto back = [](VarNode<T>& node) {
        auto& a = *node.inputs[0];
        auto& b = *node.inputs[1];
        const std::int64_t n = node.grad.numel();
        if (a.grad_needed) {
            Tensor<T> da(a.value.shape());
            for (std::int64_t i = 0; i < n; ++i) da[i] = node.grad[i] * b.value[i];
            a.accumulate(da);
        }
        if (b.grad_needed) {
            Tensor<T> db(b.value.shape());
            for (std::int64_t i = 0; i < n; ++i) db[i] = node.grad[i] * a.value[i];
            b.accumulate(db);
        }
    };
    return make_op<T>("hadamard", std::move(out), {x, g}, std::move(back));
}

template <typename T>
Variable<T> add(const Variable<T>& a, const Variable<T>& b) {
    if (!a.value().same_shape(b.value()))
        throw ShapeError(detail::msg("add shape mismatch: ", shape_str(a.value().shape()), " vs ",
                                     shape_str(b.value().shape())));
    Tensor<T> out(a.value().shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
    auto back = [](VarNode<T>& node) {
        for (auto& inp : node.inputs)
            if (inp->grad_needed) inp->accumulate(node.grad);
    };
    return make_op<T>("add", std::move(out), {a, b}, std::move(back));
}

template <typename T>
Variable<T> scale(const Variable<T>& x, T k) {
    Tensor<T> out(x.value().shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * k;
    auto back = [k](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        if (!xin.grad_needed) return;
        Tensor<T> dx(xin.value.shape());
        for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] = node.grad[i] * k;
        xin.accumulate(dx);
    };
    return make_op<T>("scale", std::move(out), {x}, std::move(back));
}

template <typename T>
Variable<T> reshape(const Variable<T>& x, Shape new_shape) {
    Tensor<T> out = x.value().reshaped(std::move(new_shape));
    auto back = [](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        if (!xin.grad_needed) return;
        xin.accumulate(node.grad.reshaped(xin.value.shape()));
    };
    return make_op<T>("reshape", std::move(out), {x}, std::move(back));
}

template <typename T>
Variable<T> sum_all(const Variable<T>& x) {
    double acc = 0;
    for (std::int64_t i = 0; i < x.value().numel(); ++i) acc += x.value()[i];
    Tensor<T> out = Tensor<T>::scalar(T(acc));
    auto back = [](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        if (!xin.grad_needed) return;
        xin.accumulate(Tensor<T>(xin.value.shape(), node.grad[0]));
    };
    return make_op<T>("sum", std::move(out), {x}, std::move(back));
}

// ---------------------------------------------------------------------------
// Linear head, pixel shuffle, dropout
// ---------------------------------------------------------------------------

template <typename T>
Variable<T> linear(const Variable<T>& x, const Variable<T>& w,
                   const std::type_identity_t<std::optional<Variable<T>>>& b) {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
        throw ShapeError(detail::msg("linear expects x(N,C) and w(O,C), got ",
                                     shape_str(xv.shape()), " and ", shape_str(wv.shape())));
    const std::int64_t N = xv.dim(0), C = xv.dim(1), O = wv.dim(0);
    if (b && b->value().shape() != Shape{O}) throw ShapeError("linear bias must be (out_features)");
    Tensor<T> out(Shape{N, O});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t o = 0; o < O; ++o) {
            const T* xr = xv.data() + n * C;
            const T* wr = wv.data() + o * C;
            T acc = b ? b->value()[o] : T(0);
            for (std::int64_t c = 0; c < C; ++c) acc += xr[c] * wr[c];
            out[n * O + o] = acc;
        }
    std::vector<Variable<T>> ins{x, w};
    if (b) ins.push_back(*b);
    auto back = [N, C, O](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        auto& win = *node.inputs[1];
        if (xin.grad_needed) {
            Tensor<T> dx(xin.value.shape());
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t o = 0; o < O; ++o) {
                    const T g = node.grad[n * O + o];
                    const T* wr = win.value.data() + o * C;
                    T* dr = dx.data() + n * C;
                    for (std::int64_t c = 0; c < C; ++c) dr[c] += g * wr[c];
                }
            xin.accumulate(dx);
        }
        if (win.grad_needed) {
            Tensor<T> dw(win.value.shape());
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t o = 0; o < O; ++o) {
                    const T g = node.grad[n * O + o];
                    const T* xr = xin.value.data() + n * C;
                    T* wr = dw.data() + o * C;
                    for (std::int64_t c = 0; c < C; ++c) wr[c] += g * xr[c];
                }
            win.accumulate(dw);
        }
        if (node.inputs.size() > 2 && node.inputs[2]->grad_needed) {
            Tensor<T> db(Shape{O});
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t o = 0; o < O; ++o) db[o] += node.grad[n * O + o];
            node.inputs[2]->accumulate(db);
        }
    };
    return make_op<T>("linear", std::move(out), std::move(ins), std::move(back));
}

// (N, C*s^2, H, W) -> (N, C, s*H, s*W); sub-pixel upsampling.
template <typename T>
Variable<T> pixel_shuffle(const Variable<T>& x, std::int64_t s) {
    const Tensor<T>& xv = x.value();
    if (xv.rank() != 4 || s < 1 || xv.dim(1) % (s * s) != 0)
        throw ShapeError(detail::msg("pixel_shuffle needs channels divisible by ", s * s));
    const std::int64_t N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::int64_t C = Cin / (s * s);
    Tensor<T> out(Shape{N, C, H * s, W * s});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t dy = 0; dy < s; ++dy)
                for (std::int64_t dx = 0; dx < s; ++dx) {
                    const std::int64_t ci = c * s * s + dy * s + dx;
                    for (std::int64_t h = 0; h < H; ++h)
                        for (std::int64_t w = 0; w < W; ++w)
                            out.at(n, c, h * s + dy, w * s + dx) = xv.at(n, ci, h, w);
                }
    auto back = [s, C, H, W](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        if (!xin.grad_needed) return;
        Tensor<T> dx(xin.value.shape());
        const std::int64_t N = dx.dim(0);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t dy = 0; dy < s; ++dy)
                    for (std::int64_t dxx = 0; dxx < s; ++dxx) {
                        const std::int64_t ci = c * s * s + dy * s + dxx;
                        for (std::int64_t h = 0; h < H; ++h)
                            for (std::int64_t w = 0; w < W; ++w)
                                dx.at(n, ci, h, w) = node.grad.at(n, c, h * s + dy, w * s + dxx);
                    }
        xin.accumulate(dx);
    };
    return make_op<T>("pixel_shuffle", std::move(out), {x}, std::move(back));
}

// Inverted dropout; identity in eval mode or at rate 0.
template <typename T>
Variable<T> dropout(const Variable<T>& x, double rate, Rng& rng, Mode mode) {
    if (rate < 0 || rate >= 1) throw ConfigError("dropout rate must be in [0,1)");
    if (mode == Mode::eval || rate == 0) return x;
    const T keep = T(1) - T(rate);
    Tensor<T> mask(x.value().shape());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::int64_t i = 0; i < mask.numel(); ++i)
        mask[i] = u(rng) < rate ? T(0) : T(1) / keep;
    Tensor<T> out(x.value().shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * mask[i];
    auto back = [mask](VarNode<T>& node) {
        auto& xin = *node.inputs[0];
        if (!xin.grad_needed) return;
        Tensor<T> dx(xin.value.shape());
        for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] = node.grad[i] * mask[i];
        xin.accumulate(dx);
    };
    return make_op<T>("dropout", std::move(out), {x}, std::move(back));
}

// ---------------------------------------------------------------------------
// Losses (scalar mean over the batch)
// ---------------------------------------------------------------------------

template <typename T>
Variable<T> mse_loss(const Variable<T>& pred, const Tensor<T>& target) {
    if (!pred.value().same_shape(target))
        throw ShapeError(detail::msg("mse_loss shape mismatch: ", shape_str(pred.value().shape()),
                                     " vs ", shape_str(target.shape())));
    const std::int64_t n = target.numel();
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = double(pred.value()[i]) - double(target[i]);
        acc += d * d;
    }
    Tensor<T> out = Tensor<T>::scalar(T(acc / double(n)));
    auto back = [target, n](VarNode<T>& node) {
        auto& pin = *node.inputs[0];
        if (!pin.grad_needed) return;
        Tensor<T> dp(pin.value.shape());
        const T g = node.grad[0] * T(2) / T(n);
        for (std::int64_t i = 0; i < n; ++i) dp[i] = g * (pin.value[i] - target[i]);
        pin.accumulate(dp);
    };
    return make_op<T>("mse_loss", std::move(out), {pred}, std::move(back));
}

template <typename T>
Variable<T> mae_loss(const Variable<T>& pred, const Tensor<T>& target) {
    if (!pred.value().same_shape(target))
        throw ShapeError(detail::msg("mae_loss shape mismatch: ", shape_str(pred.value().shape()),
                                     " vs ", shape_str(target.shape())));
    const std::int64_t n = target.numel();
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) acc += std::abs(double(pred.value()[i]) - double(target[i]));
    Tensor<T> out = Tensor<T>::scalar(T(acc / double(n)));
    auto back = [target, n](VarNode<T>& node) {
        auto& pin = *node.inputs[0];
        if (!pin.grad_needed) return;
        Tensor<T> dp(pin.value.shape());
        const T g = node.grad[0] / T(n);
        for (std::int64_t i = 0; i < n; ++i) {
            const T d = pin.value[i] - target[i];
            // subgradient 0 at zero residual
            dp[i] = d > 0 ? g : (d < 0 ? -g : T(0));
        }
        pin.accumulate(dp);
    };
    return make_op<T>("mae_loss", std::move(out), {pred}, std::move(back));
}

// Logits (N, K) against integer class indices stored in a (N) tensor.
template <typename T>
Variable<T> softmax_cross_entropy(const Variable<T>& logits, const Tensor<T>& labels) {
    const Tensor<T>& z = logits.value();
    if (z.rank() != 2) throw ShapeError("softmax_cross_entropy expects logits (N, classes)");
    const std::int64_t N = z.dim(0), K = z.dim(1);
    if (labels.numel() != N) throw ShapeError("label count does not match batch");
    std::vector<std::int64_t> idx(static_cast<std::size_t>(N));
    for (std::int64_t n = 0; n < N; ++n) {
        const T v = labels[n];
        const auto k = static_cast<std::int64_t>(v);
        if (T(k) != v || k < 0 || k >= K)
            throw DataError(detail::msg("invalid class index ", double(v), " for ", K, " classes"));
        idx[static_cast<std::size_t>(n)] = k;
    }
    Tensor<T> soft(Shape{N, K});
    double acc = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        const T* row = z.data() + n * K;
        T zmax = row[0];
        for (std::int64_t k = 1; k < K; ++k) zmax = std::max(zmax, row[k]);
        double denom = 0;
        for (std::int64_t k = 0; k < K; ++k) denom += std::exp(double(row[k] - zmax));
        const double logz = std::log(denom) + double(zmax);
        for (std::int64_t k = 0; k < K; ++k)
            soft[n * K + k] = T(std::exp(double(row[k]) - logz));
        acc += logz - double(row[idx[static_cast<std::size_t>(n)]]);
    }
    Tensor<T> out = Tensor<T>::scalar(T(acc / double(N)));
    auto back = [soft, idx, N, K](VarNode<T>& node) {
        auto& lin = *node.inputs[0];
        if (!lin.grad_needed) return;
        Tensor<T> dl(lin.value.shape());
        const T g = node.grad[0] / T(N);
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t k = 0; k < K; ++k) dl[n * K + k] = g * soft[n * K + k];
            dl[n * K + idx[static_cast<std::size_t>(n)]] -= g;
        }
        lin.accumulate(dl);
    };
    return make_op<T>("softmax_cross_entropy", std::move(out), {logits}, std::move(back));
}

template <typename T>
Variable<T> compute_loss(LossKind kind, const Variable<T>& pred, const Tensor<T>& target) {
    switch (kind) {
        case LossKind::mse: return mse_loss(pred, target);
        case LossKind::mae: return mae_loss(pred, target);
        case LossKind::softmax_ce: return softmax_cross_entropy(pred, target);
    }
    throw ConfigError("unknown loss kind");
}

} // namespace dxnet
