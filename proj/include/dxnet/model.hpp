// Assembles complete networks from a NetConfig: DenseNet/DxNet trunks with a
// classification head, a residual-learning denoising head, or a sub-pixel
// super-resolution tail with a bicubic global skip.
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dxnet/blocks.hpp"
#include "dxnet/config.hpp"
#include "dxnet/data.hpp"

namespace dxnet {

template <typename T>
struct ParamStore {
    std::vector<ParamEntry<T>> entries;
    std::vector<BnEntry<T>> bns;

    Variable<T>& find(const std::string& name) {
        for (auto& e : entries)
            if (e.name == name) return e.var;
        throw Error(detail::msg("no parameter named '", name, "'"));
    }
    const Variable<T>& find(const std::string& name) const {
        return const_cast<ParamStore*>(this)->find(name);
    }
    BnEntry<T>& find_bn(const std::string& name) {
        for (auto& b : bns)
            if (b.name == name) return b;
        throw Error(detail::msg("no batch-norm state named '", name, "'"));
    }
    std::int64_t scalar_count() const {
        std::int64_t n = 0;
        for (const auto& e : entries) n += e.var.value().numel();
        return n;
    }
};

template <typename T>
struct Model {
    NetConfig config;
    Mode mode = Mode::train;

    // stem
    Variable<T> stem_weight;
    Variable<T> stem_bias; // only without BN
    std::optional<XUnitParams<T>> stem_xunit;

    // trunk
    std::vector<std::vector<DenseLayerParams<T>>> blocks;
    std::vector<TransitionParams<T>> transitions;

    // classification head
    std::shared_ptr<BatchNormState<T>> head_bn;
    Variable<T> fc_weight;
    Variable<T> fc_bias;

    // denoising head
    Variable<T> head_conv_weight;
    Variable<T> head_conv_bias;

    // super-resolution tail
    Variable<T> tail_conv1_weight, tail_conv1_bias;
    Variable<T> tail_conv2_weight, tail_conv2_bias; // scale 4 only
    Variable<T> tail_out_weight, tail_out_bias;

    ParamStore<T> store;
    std::int64_t trunk_channels = 0; // channels leaving the last dense block

    void set_mode(Mode m) { mode = m; }
};

namespace detail {

template <typename T>
void rebuild_store(Model<T>& m) {
    m.store.entries.clear();
    m.store.bns.clear();
    auto& ps = m.store.entries;
    auto& bs = m.store.bns;
    ps.push_back({"stem.conv.weight", ParamKind::conv_weight, m.stem_weight});
    if (m.stem_bias.defined()) ps.push_back({"stem.conv.bias", ParamKind::bias, m.stem_bias});
    if (m.stem_xunit) m.stem_xunit->collect("stem.xunit", ps, bs);
    for (std::size_t bi = 0; bi < m.blocks.size(); ++bi) {
        for (std::size_t li = 0; li < m.blocks[bi].size(); ++li)
            m.blocks[bi][li].collect(detail::msg("block", bi, ".layer", li), ps, bs);
        if (bi < m.transitions.size())
            m.transitions[bi].collect(detail::msg("trans", bi), ps, bs);
    }
    if (m.head_bn) {
        ps.push_back({"head.bn.gamma", ParamKind::bn_gamma, m.head_bn->gamma});
        ps.push_back({"head.bn.beta", ParamKind::bn_beta, m.head_bn->beta});
        bs.push_back({"head.bn", m.head_bn});
    }
    if (m.fc_weight.defined()) {
        ps.push_back({"head.fc.weight", ParamKind::linear_weight, m.fc_weight});
        ps.push_back({"head.fc.bias", ParamKind::bias, m.fc_bias});
    }
    if (m.head_conv_weight.defined()) {
        ps.push_back({"head.conv.weight", ParamKind::conv_weight, m.head_conv_weight});
        ps.push_back({"head.conv.bias", ParamKind::bias, m.head_conv_bias});
    }
    if (m.tail_conv1_weight.defined()) {
        ps.push_back({"tail.conv1.weight", ParamKind::conv_weight, m.tail_conv1_weight});
        ps.push_back({"tail.conv1.bias", ParamKind::bias, m.tail_conv1_bias});
        if (m.tail_conv2_weight.defined()) {
            ps.push_back({"tail.conv2.weight", ParamKind::conv_weight, m.tail_conv2_weight});
            ps.push_back({"tail.conv2.bias", ParamKind::bias, m.tail_conv2_bias});
        }
        ps.push_back({"tail.out.weight", ParamKind::conv_weight, m.tail_out_weight});
        ps.push_back({"tail.out.bias", ParamKind::bias, m.tail_out_bias});
    }
}

} // namespace detail

template <typename T>
Model<T> build_model(const NetConfig& config, Rng& rng) {
    config.validate();
    Model<T> m;
    m.config = config;
    const bool bn = config.with_bn();
    const std::int64_t c_img = config.image_channels();
    const std::int64_t c0 = config.stem_channels();
    const std::int64_t k = config.growth;

    m.stem_weight = detail::init_conv_weight<T>({c_img, c0, 3, 3, 1, 1, 1, false}, rng);
    if (!bn) m.stem_bias = detail::init_bias<T>(c0);
    if (config.task == Task::classification && config.xunit)
        m.stem_xunit = make_xunit<T>(XUnitSpec{c0, config.gate, 9, bn}, rng);

    std::int64_t ch = c0;
    for (std::size_t bi = 0; bi < config.blocks.size(); ++bi) {
        std::vector<DenseLayerParams<T>> layers;
        for (std::int64_t li = 0; li < config.blocks[bi]; ++li) {
            DenseLayerSpec ls;
            ls.in_channels = ch;
            ls.growth = k;
            ls.bottleneck = config.bottleneck;
            ls.with_bn = bn;
            ls.with_xunit = config.xunit;
            ls.gate = config.gate;
            ls.dropout = config.dropout;
            layers.push_back(make_dense_layer<T>(ls, rng));
            ch += k;
        }
        m.blocks.push_back(std::move(layers));
        if (bi + 1 < config.blocks.size()) {
            TransitionSpec ts;
            ts.in_channels = ch;
            ts.reduction = config.reduction;
            ts.with_pool = config.with_pool();
            ts.with_bn = bn;
            m.transitions.push_back(make_transition<T>(ts, rng));
            ch = ts.out_channels();
        }
    }
    m.trunk_channels = ch;

    switch (config.task) {
        case Task::classification: {
            if (bn) m.head_bn = std::make_shared<BatchNormState<T>>(make_batch_norm<T>(ch));
            Tensor<T> w(Shape{config.classes, ch});
            fill_normal(w, rng, T(0), T(std::sqrt(2.0 / double(ch))));
            m.fc_weight = Variable<T>(std::move(w), true);
            m.fc_bias = detail::init_bias<T>(config.classes);
            break;
        }
        case Task::denoising: {
            if (bn) m.head_bn = std::make_shared<BatchNormState<T>>(make_batch_norm<T>(ch));
            m.head_conv_weight = detail::init_conv_weight<T>({ch, c_img, 3, 3, 1, 1, 1, true}, rng);
            m.head_conv_bias = detail::init_bias<T>(c_img);
            break;
        }
        case Task::super_resolution: {
            const std::int64_t cf = c0; // tail feature width
            m.tail_conv1_weight = detail::init_conv_weight<T>({ch, 4 * cf, 3, 3, 1, 1, 1, true}, rng);
            m.tail_conv1_bias = detail::init_bias<T>(4 * cf);
            if (config.scale == 4) {
                m.tail_conv2_weight =
                    detail::init_conv_weight<T>({cf, 4 * cf, 3, 3, 1, 1, 1, true}, rng);
                m.tail_conv2_bias = detail::init_bias<T>(4 * cf);
            }
            m.tail_out_weight = detail::init_conv_weight<T>({cf, c_img, 3, 3, 1, 1, 1, true}, rng);
            m.tail_out_bias = detail::init_bias<T>(c_img);
            break;
        }
    }
    detail::rebuild_store(m);
    return m;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

template <typename T>
struct ForwardResult {
    Variable<T> out;      // logits / noise estimate / HR image
    Variable<T> features; // classification only: pre-pool activations for CAM
};

namespace detail {

template <typename T>
Variable<T> trunk_forward(Model<T>& m, const Variable<T>& x, Rng& rng) {
    const NetConfig& c = m.config;
    Variable<T> z = conv2d(x, m.stem_weight,
                           m.stem_bias.defined() ? std::optional<Variable<T>>(m.stem_bias)
                                                 : std::nullopt,
                           ConvSpec{c.image_channels(), c.stem_channels(), 3, 3, 1, 1, 1,
                                    m.stem_bias.defined()});
    if (m.stem_xunit) z = xunit_forward(z, *m.stem_xunit, m.mode);
    for (std::size_t bi = 0; bi < m.blocks.size(); ++bi) {
        for (auto& layer : m.blocks[bi]) z = dense_layer_forward(z, layer, m.mode, rng);
        if (bi < m.transitions.size()) z = transition_forward(z, m.transitions[bi], m.mode);
    }
    return z;
}

} // namespace detail

template <typename T>
ForwardResult<T> forward_with_features(Model<T>& m, const Tensor<T>& x, Rng& rng) {
    if (x.rank() != 4 || x.dim(1) != m.config.image_channels())
        throw ShapeError(detail::msg("input must be (N,", m.config.image_channels(),
                                     ",H,W), got ", shape_str(x.shape())));
    Variable<T> in(x, false);
    Variable<T> z = detail::trunk_forward(m, in, rng);
    ForwardResult<T> r;
    switch (m.config.task) {
        case Task::classification: {
            if (m.head_bn) z = batch_norm(z, *m.head_bn, m.mode);
            z = relu(z);
            r.features = z;
            Variable<T> pooled = pool(z, PoolKind::global_avg);
            Variable<T> flat = reshape(pooled, Shape{x.dim(0), m.trunk_channels});
            r.out = linear(flat, m.fc_weight, std::optional<Variable<T>>(m.fc_bias));
            break;
        }
        case Task::denoising: {
            if (m.head_bn) {
                z = batch_norm(z, *m.head_bn, m.mode);
                z = relu(z);
            }
            r.out = conv2d(z, m.head_conv_weight, std::optional<Variable<T>>(m.head_conv_bias),
                           ConvSpec{m.trunk_channels, m.config.image_channels(), 3, 3, 1, 1, 1,
                                    true});
            break;
        }
        case Task::super_resolution: {
            const std::int64_t cf = m.config.stem_channels();
            Variable<T> t = conv2d(z, m.tail_conv1_weight,
                                   std::optional<Variable<T>>(m.tail_conv1_bias),
                                   ConvSpec{m.trunk_channels, 4 * cf, 3, 3, 1, 1, 1, true});
            t = pixel_shuffle(t, 2);
            if (m.config.scale == 4) {
                t = conv2d(t, m.tail_conv2_weight, std::optional<Variable<T>>(m.tail_conv2_bias),
                           ConvSpec{cf, 4 * cf, 3, 3, 1, 1, 1, true});
                t = pixel_shuffle(t, 2);
            }
            t = conv2d(t, m.tail_out_weight, std::optional<Variable<T>>(m.tail_out_bias),
                       ConvSpec{cf, m.config.image_channels(), 3, 3, 1, 1, 1, true});
            // global skip: the trunk learns a residual on top of bicubic
            Tensor<T> up(t.value().shape());
            for (std::int64_t n = 0; n < x.dim(0); ++n) {
                Tensor<T> one(Shape{x.dim(1), x.dim(2), x.dim(3)});
                std::copy(x.data() + n * one.numel(), x.data() + (n + 1) * one.numel(),
                          one.data());
                Tensor<T> u = bicubic_resize(one, t.value().dim(2), t.value().dim(3));
                std::copy(u.data(), u.data() + u.numel(), up.data() + n * u.numel());
            }
            r.out = add(t, Variable<T>(std::move(up), false));
            break;
        }
    }
    return r;
}

template <typename T>
Variable<T> forward(Model<T>& m, const Tensor<T>& x, Rng& rng) {
    return forward_with_features(m, x, rng).out;
}

// Dropout-free convenience overload (most paths; throws if dropout is active
// in train mode so no silent nondeterminism sneaks in).
template <typename T>
Variable<T> forward(Model<T>& m, const Tensor<T>& x) {
    if (m.config.dropout > 0 && m.mode == Mode::train)
        throw Error("train-mode forward with dropout requires an RNG");
    Rng rng = make_rng(0);
    return forward(m, x, rng);
}

// Residual-learning denoiser output: the clean estimate y - predicted noise.
template <typename T>
Tensor<T> denoise(Model<T>& m, const Tensor<T>& y) {
    if (m.config.task != Task::denoising) throw ConfigError("denoise needs a denoising model");
    Variable<T> noise = forward(m, y);
    Tensor<T> out(y.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = y[i] - noise.value()[i];
    return out;
}

// ---------------------------------------------------------------------------
// Cloning (copy-on-perturb support for the analysis probe)
// ---------------------------------------------------------------------------

template <typename T>
Model<T> clone_model(const Model<T>& m) {
    Rng rng = make_rng(0);
    Model<T> c = build_model<T>(m.config, rng);
    c.mode = m.mode;
    if (c.store.entries.size() != m.store.entries.size())
        throw Error("clone parameter mismatch");
    for (std::size_t i = 0; i < c.store.entries.size(); ++i) {
        if (c.store.entries[i].name != m.store.entries[i].name)
            throw Error("clone parameter order mismatch");
        c.store.entries[i].var.mutable_value() = m.store.entries[i].var.value();
    }
    for (std::size_t i = 0; i < c.store.bns.size(); ++i) {
        const auto& src = *m.store.bns[i].state;
        auto& dst = *c.store.bns[i].state;
        dst.running_mean = src.running_mean;
        dst.running_var = src.running_var;
        dst.batches_tracked = src.batches_tracked;
    }
    return c;
}

// Conv filter tensors: the perturbation target set of the analysis probe.
template <typename T>
std::vector<ParamEntry<T>*> conv_filter_entries(Model<T>& m) {
    std::vector<ParamEntry<T>*> out;
    for (auto& e : m.store.entries)
        if (e.kind == ParamKind::conv_weight) out.push_back(&e);
    return out;
}

template <typename T>
std::int64_t param_count_full(const Model<T>& m) {
    return m.store.scalar_count();
}

} // namespace dxnet
