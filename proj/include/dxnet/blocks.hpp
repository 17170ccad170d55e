// Network building blocks: the xUnit gating module, DenseNet-style composite
// layers, and transition layers. Parameter bundles own their Variables and can
// enumerate them for the model's parameter store.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dxnet/ops.hpp"

namespace dxnet {

enum class GateKind { sigmoid, gaussian };
enum class CountMode { paper_formula, full };
enum class ParamKind { conv_weight, linear_weight, bias, bn_gamma, bn_beta };

inline const char* gate_name(GateKind g) { return g == GateKind::sigmoid ? "sigmoid" : "gaussian"; }

template <typename T>
struct ParamEntry {
    std::string name;
    ParamKind kind;
    Variable<T> var;
};

template <typename T>
struct BnEntry {
    std::string name;
    std::shared_ptr<BatchNormState<T>> state;
};

// ---------------------------------------------------------------------------
// Specs (pure configuration, no tensors)
// ---------------------------------------------------------------------------

struct XUnitSpec {
    std::int64_t channels = 0;
    GateKind gate = GateKind::sigmoid;
    std::int64_t kernel = 9; // depthwise spatial extent
    bool with_bn = true;

    void validate() const {
        if (channels <= 0) throw ConfigError("xunit channels must be positive");
        if (kernel <= 0 || kernel % 2 == 0) throw ConfigError("xunit kernel must be odd");
    }
};

struct DenseLayerSpec {
    std::int64_t in_channels = 0;
    std::int64_t growth = 0;
    std::int64_t bottleneck = 4; // bottleneck width multiplier on growth
    bool with_bn = true;
    bool with_xunit = true;
    GateKind gate = GateKind::sigmoid;
    double dropout = 0.0;

    void validate() const {
        if (in_channels <= 0 || growth <= 0 || bottleneck <= 0)
            throw ConfigError("dense layer channels must be positive");
        if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0,1)");
    }
};

struct TransitionSpec {
    std::int64_t in_channels = 0;
    double reduction = 0.5;
    bool with_pool = true;
    bool with_bn = true;

    std::int64_t out_channels() const {
        return static_cast<std::int64_t>(reduction * double(in_channels));
    }
    void validate() const {
        if (in_channels <= 0) throw ConfigError("transition channels must be positive");
        if (reduction <= 0 || reduction >= 1) throw ConfigError("reduction must be in (0,1)");
        if (out_channels() <= 0) throw ConfigError("transition output channels must be positive");
    }
};

// ---------------------------------------------------------------------------
// Parameter counting
// ---------------------------------------------------------------------------

// paper_formula counts only the depthwise stage (k*9^2 weights + k biases);
// full counts every learnable scalar in the module.
inline std::int64_t param_count(const XUnitSpec& s, CountMode mode) {
    s.validate();
    const std::int64_t k = s.channels, kk = s.kernel * s.kernel;
    const std::int64_t dw = k * kk + k;
    if (mode == CountMode::paper_formula) return dw;
    std::int64_t total = k * k + dw; // pointwise (no bias) + depthwise
    if (s.with_bn) total += 4 * k;   // two affine BN stages
    return total;
}

inline std::int64_t param_count(const DenseLayerSpec& s, CountMode mode) {
    s.validate();
    const std::int64_t m = s.in_channels, k = s.growth, b = s.bottleneck * k;
    std::int64_t total = 0;
    total += m * b;     // 1x1 conv
    total += b * k * 9; // 3x3 conv
    if (s.with_bn) {
        total += 2 * m + 2 * b; // the two BN affines
    } else {
        total += b + k; // convs carry biases instead
    }
    if (s.with_xunit) {
        XUnitSpec xs{k, s.gate, 9, s.with_bn};
        total += param_count(xs, mode == CountMode::paper_formula ? CountMode::paper_formula
                                                                  : CountMode::full);
    }
    return total;
}

inline std::int64_t param_count(const TransitionSpec& s, CountMode) {
    s.validate();
    const std::int64_t m = s.in_channels, o = s.out_channels();
    std::int64_t total = m * o;
    if (s.with_bn)
        total += 2 * m;
    else
        total += o;
    return total;
}

// ---------------------------------------------------------------------------
// Parameter bundles and forwards
// ---------------------------------------------------------------------------

namespace detail {

// He-style init for conv weights: normal with std sqrt(2 / fan_in).
template <typename T>
Variable<T> init_conv_weight(const ConvSpec& s, Rng& rng) {
    const std::int64_t icpg = s.in_channels / s.groups;
    Tensor<T> w(Shape{s.out_channels, icpg, s.kernel_h, s.kernel_w});
    const double fan_in = double(icpg * s.kernel_h * s.kernel_w);
    fill_normal(w, rng, T(0), T(std::sqrt(2.0 / fan_in)));
    return Variable<T>(std::move(w), true);
}

template <typename T>
Variable<T> init_bias(std::int64_t n) {
    return Variable<T>(Tensor<T>(Shape{n}, T(0)), true);
}

} // namespace detail

template <typename T>
struct XUnitParams {
    XUnitSpec spec;
    Variable<T> pw_weight;
    std::shared_ptr<BatchNormState<T>> bn1; // null when spec.with_bn == false
    Variable<T> dw_weight;
    Variable<T> dw_bias;
    std::shared_ptr<BatchNormState<T>> bn2;

    void collect(const std::string& prefix, std::vector<ParamEntry<T>>& params,
                 std::vector<BnEntry<T>>& bns) const {
        params.push_back({prefix + ".pw.weight", ParamKind::conv_weight, pw_weight});
        if (bn1) {
            params.push_back({prefix + ".bn1.gamma", ParamKind::bn_gamma, bn1->gamma});
            params.push_back({prefix + ".bn1.beta", ParamKind::bn_beta, bn1->beta});
            bns.push_back({prefix + ".bn1", bn1});
        }
        params.push_back({prefix + ".dw.weight", ParamKind::conv_weight, dw_weight});
        params.push_back({prefix + ".dw.bias", ParamKind::bias, dw_bias});
        if (bn2) {
            params.push_back({prefix + ".bn2.gamma", ParamKind::bn_gamma, bn2->gamma});
            params.push_back({prefix + ".bn2.beta", ParamKind::bn_beta, bn2->beta});
            bns.push_back({prefix + ".bn2", bn2});
        }
    }
};

template <typename T>
XUnitParams<T> make_xunit(const XUnitSpec& spec, Rng& rng) {
    spec.validate();
    const std::int64_t k = spec.channels;
    XUnitParams<T> p;
    p.spec = spec;
    p.pw_weight = detail::init_conv_weight<T>({k, k, 1, 1, 1, 0, 1, false}, rng);
    if (spec.with_bn) p.bn1 = std::make_shared<BatchNormState<T>>(make_batch_norm<T>(k));
    p.dw_weight = detail::init_conv_weight<T>({k, k, spec.kernel, spec.kernel, 1, 0, k, false}, rng);
    p.dw_bias = detail::init_bias<T>(k);
    if (spec.with_bn) p.bn2 = std::make_shared<BatchNormState<T>>(make_batch_norm<T>(k));
    return p;
}

template <typename T>
struct XUnitOut {
    Variable<T> y;
    Variable<T> gate; // the multiplicative map, in [0,1] elementwise
};

template <typename T>
XUnitOut<T> xunit_forward_with_gate(const Variable<T>& x, const XUnitParams<T>& p, Mode mode) {
    const XUnitSpec& s = p.spec;
    if (x.value().rank() != 4 || x.value().dim(1) != s.channels)
        throw ShapeError(detail::msg("xunit expects ", s.channels, " channels, got input ",
                                     shape_str(x.value().shape())));
    const std::int64_t k = s.channels;
    Variable<T> z = conv2d(x, p.pw_weight, std::nullopt, ConvSpec{k, k, 1, 1, 1, 0, 1, false});
    if (p.bn1) z = batch_norm(z, *p.bn1, mode);
    z = relu(z);
    z = conv2d(z, p.dw_weight, std::optional<Variable<T>>(p.dw_bias),
               ConvSpec{k, k, s.kernel, s.kernel, 1, (s.kernel - 1) / 2, k, true});
    if (p.bn2) z = batch_norm(z, *p.bn2, mode);
    Variable<T> g = activation(z, s.gate == GateKind::sigmoid ? ActKind::sigmoid
                                                              : ActKind::gaussian_gate);
    return {hadamard(x, g), g};
}

template <typename T>
Variable<T> xunit_forward(const Variable<T>& x, const XUnitParams<T>& p, Mode mode) {
    return xunit_forward_with_gate(x, p, mode).y;
}

template <typename T>
struct DenseLayerParams {
    DenseLayerSpec spec;
    std::shared_ptr<BatchNormState<T>> bn1;
    Variable<T> conv1_weight;
    Variable<T> conv1_bias; // only when spec.with_bn == false
    std::shared_ptr<BatchNormState<T>> bn2;
    Variable<T> conv2_weight;
    Variable<T> conv2_bias;
    std::optional<XUnitParams<T>> xunit;

    void collect(const std::string& prefix, std::vector<ParamEntry<T>>& params,
                 std::vector<BnEntry<T>>& bns) const {
        if (bn1) {
            params.push_back({prefix + ".bn1.gamma", ParamKind::bn_gamma, bn1->gamma});
            params.push_back({prefix + ".bn1.beta", ParamKind::bn_beta, bn1->beta});
            bns.push_back({prefix + ".bn1", bn1});
        }
        params.push_back({prefix + ".conv1.weight", ParamKind::conv_weight, conv1_weight});
        if (conv1_bias.defined())
            params.push_back({prefix + ".conv1.bias", ParamKind::bias, conv1_bias});
        if (bn2) {
            params.push_back({prefix + ".bn2.gamma", ParamKind::bn_gamma, bn2->gamma});
            params.push_back({prefix + ".bn2.beta", ParamKind::bn_beta, bn2->beta});
            bns.push_back({prefix + ".bn2", bn2});
        }
        params.push_back({prefix + ".conv2.weight", ParamKind::conv_weight, conv2_weight});
        if (conv2_bias.defined())
            params.push_back({prefix + ".conv2.bias", ParamKind::bias, conv2_bias});
        if (xunit) xunit->collect(prefix + ".xunit", params, bns);
    }
};

template <typename T>
DenseLayerParams<T> make_dense_layer(const DenseLayerSpec& spec, Rng& rng) {
    spec.validate();
    const std::int64_t m = spec.in_channels, k = spec.growth, b = spec.bottleneck * k;
    DenseLayerParams<T> p;
    p.spec = spec;
    if (spec.with_bn) p.bn1 = std::make_shared<BatchNormState<T>>(make_batch_norm<T>(m));
    p.conv1_weight = detail::init_conv_weight<T>({m, b, 1, 1, 1, 0, 1, false}, rng);
    if (!spec.with_bn) p.conv1_bias = detail::init_bias<T>(b);
    if (spec.with_bn) p.bn2 = std::make_shared<BatchNormState<T>>(make_batch_norm<T>(b));
    p.conv2_weight = detail::init_conv_weight<T>({b, k, 3, 3, 1, 1, 1, false}, rng);
    if (!spec.with_bn) p.conv2_bias = detail::init_bias<T>(k);
    if (spec.with_xunit)
        p.xunit = make_xunit<T>(XUnitSpec{k, spec.gate, 9, spec.with_bn}, rng);
    return p;
}

// BN-ReLU-conv(1x1)-BN-ReLU-conv(3x3)[-xUnit], output concatenated onto the
// input so channels grow by spec.growth. Without BN the pre-activations are
// dropped and the convs carry biases.
template <typename T>
Variable<T> dense_layer_forward(const Variable<T>& x, const DenseLayerParams<T>& p, Mode mode,
                                Rng& rng) {
    const DenseLayerSpec& s = p.spec;
    if (x.value().dim(1) != s.in_channels)
        throw ShapeError(detail::msg("dense layer expects ", s.in_channels, " channels, got ",
                                     x.value().dim(1)));
    const std::int64_t m = s.in_channels, k = s.growth, b = s.bottleneck * k;
    Variable<T> z = x;
    if (p.bn1) {
        z = batch_norm(z, *p.bn1, mode);
        z = relu(z);
    }
    z = conv2d(z, p.conv1_weight,
               p.conv1_bias.defined() ? std::optional<Variable<T>>(p.conv1_bias) : std::nullopt,
               ConvSpec{m, b, 1, 1, 1, 0, 1, p.conv1_bias.defined()});
    if (p.bn2) z = batch_norm(z, *p.bn2, mode);
    z = relu(z);
    z = conv2d(z, p.conv2_weight,
               p.conv2_bias.defined() ? std::optional<Variable<T>>(p.conv2_bias) : std::nullopt,
               ConvSpec{b, k, 3, 3, 1, 1, 1, p.conv2_bias.defined()});
    if (p.xunit) z = xunit_forward(z, *p.xunit, mode);
    if (s.dropout > 0) z = dropout(z, s.dropout, rng, mode);
    return concat_channels<T>({x, z});
}

template <typename T>
struct TransitionParams {
    TransitionSpec spec;
    std::shared_ptr<BatchNormState<T>> bn;
    Variable<T> conv_weight;
    Variable<T> conv_bias;

    void collect(const std::string& prefix, std::vector<ParamEntry<T>>& params,
                 std::vector<BnEntry<T>>& bns) const {
        if (bn) {
            params.push_back({prefix + ".bn.gamma", ParamKind::bn_gamma, bn->gamma});
            params.push_back({prefix + ".bn.beta", ParamKind::bn_beta, bn->beta});
            bns.push_back({prefix + ".bn", bn});
        }
        params.push_back({prefix + ".conv.weight", ParamKind::conv_weight, conv_weight});
        if (conv_bias.defined())
            params.push_back({prefix + ".conv.bias", ParamKind::bias, conv_bias});
    }
};

template <typename T>
TransitionParams<T> make_transition(const TransitionSpec& spec, Rng& rng) {
    spec.validate();
    TransitionParams<T> p;
    p.spec = spec;
    if (spec.with_bn) p.bn = std::make_shared<BatchNormState<T>>(make_batch_norm<T>(spec.in_channels));
    p.conv_weight = detail::init_conv_weight<T>(
        {spec.in_channels, spec.out_channels(), 1, 1, 1, 0, 1, false}, rng);
    if (!spec.with_bn) p.conv_bias = detail::init_bias<T>(spec.out_channels());
    return p;
}

// BN-conv(1x1)-avgpool(2x2); the pool is skipped for resolution-preserving
// tasks and BN is skipped when the network runs without normalization.
template <typename T>
Variable<T> transition_forward(const Variable<T>& x, const TransitionParams<T>& p, Mode mode) {
    const TransitionSpec& s = p.spec;
    if (x.value().dim(1) != s.in_channels)
        throw ShapeError(detail::msg("transition expects ", s.in_channels, " channels, got ",
                                     x.value().dim(1)));
    Variable<T> z = x;
    if (p.bn) z = batch_norm(z, *p.bn, mode);
    z = conv2d(z, p.conv_weight,
               p.conv_bias.defined() ? std::optional<Variable<T>>(p.conv_bias) : std::nullopt,
               ConvSpec{s.in_channels, s.out_channels(), 1, 1, 1, 0, 1, p.conv_bias.defined()});
    if (s.with_pool) z = pool(z, PoolKind::avg2x2);
    return z;
}

} // namespace dxnet
