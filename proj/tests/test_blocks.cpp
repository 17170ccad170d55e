#include "test_support.hpp"

using namespace dxnet;

TEST_CASE("xunit zero input gives zero output") {
    Rng rng = make_rng(40);
    XUnitSpec spec{4, GateKind::sigmoid, 9, true};
    auto p = make_xunit<float>(spec, rng);
    Tensor<float> xv(Shape{1, 4, 6, 6}, 0.0f);
    auto y = xunit_forward(Variable<float>(xv), p, Mode::train);
    for (std::int64_t i = 0; i < y.value().numel(); ++i) CHECK(y.value()[i] == 0.0f);
}

TEST_CASE("xunit with zeroed branch applies the gate's center value") {
    Rng rng = make_rng(41);
    Tensor<float> xv = ts::random_tensor<float>(Shape{2, 3, 5, 5}, rng);
    for (GateKind g : {GateKind::sigmoid, GateKind::gaussian}) {
        XUnitSpec spec{3, g, 9, true};
        auto p = make_xunit<float>(spec, rng);
        p.dw_weight.mutable_value().fill(0.0f);
        p.dw_bias.mutable_value().fill(0.0f);
        auto y = xunit_forward(Variable<float>(xv), p, Mode::train);
        const float factor = g == GateKind::sigmoid ? 0.5f : 1.0f;
        for (std::int64_t i = 0; i < xv.numel(); ++i)
            CHECK(y.value()[i] == Catch::Approx(double(factor * xv[i])).margin(1e-6));
    }
}

TEST_CASE("xunit gate is in [0,1] and attenuates, output keeps the shape") {
    Rng rng = make_rng(42);
    for (int trial = 0; trial < 40; ++trial) {
        const std::int64_t k = 1 + std::int64_t(rng() % 5);
        const GateKind g = trial % 2 ? GateKind::sigmoid : GateKind::gaussian;
        const bool bn = trial % 3 != 0;
        XUnitSpec spec{k, g, 9, bn};
        auto p = make_xunit<float>(spec, rng);
        Tensor<float> xv = ts::random_tensor<float>(Shape{2, k, 7, 6}, rng, -2.0, 2.0);
        auto out = xunit_forward_with_gate(Variable<float>(xv), p, Mode::train);
        REQUIRE(out.y.value().same_shape(xv));
        for (std::int64_t i = 0; i < xv.numel(); ++i) {
            CHECK(out.gate.value()[i] >= 0.0f);
            CHECK(out.gate.value()[i] <= 1.0f);
            CHECK(std::abs(out.y.value()[i]) <= std::abs(xv[i]));
        }
    }
}

TEST_CASE("xunit rejects channel mismatch") {
    Rng rng = make_rng(43);
    XUnitSpec spec{4, GateKind::sigmoid, 9, true};
    auto p = make_xunit<float>(spec, rng);
    Tensor<float> xv(Shape{1, 3, 6, 6}, 0.0f);
    CHECK_THROWS_AS(xunit_forward(Variable<float>(xv), p, Mode::train), ShapeError);
}

TEST_CASE("xunit parameter count formulas") {
    CHECK(param_count(XUnitSpec{32, GateKind::sigmoid, 9, true}, CountMode::paper_formula) ==
          2624); // 82k at k=32
    CHECK(param_count(XUnitSpec{12, GateKind::sigmoid, 9, true}, CountMode::full) ==
          12 * 12 + 86 * 12); // 1176
    CHECK(param_count(XUnitSpec{12, GateKind::sigmoid, 9, false}, CountMode::full) ==
          12 * 12 + 82 * 12);
    // paper_formula is 82k for every k
    for (std::int64_t k : {1, 3, 12, 16, 64})
        CHECK(param_count(XUnitSpec{k, GateKind::sigmoid, 9, true},
                          CountMode::paper_formula) == 82 * k);
}

TEST_CASE("dense layer grows channels by k") {
    Rng rng = make_rng(44);
    DenseLayerSpec spec;
    spec.in_channels = 24;
    spec.growth = 12;
    auto p = make_dense_layer<float>(spec, rng);
    Tensor<float> xv = ts::random_tensor<float>(Shape{2, 24, 8, 8}, rng);
    Rng drng = make_rng(1);
    auto y = dense_layer_forward(Variable<float>(xv), p, Mode::train, drng);
    CHECK(y.value().dim(1) == 36);
    CHECK(y.value().dim(2) == 8);
    CHECK(y.value().dim(3) == 8);
}

TEST_CASE("dense layer with zeroed 3x3 conv concatenates zeros") {
    Rng rng = make_rng(45);
    DenseLayerSpec spec;
    spec.in_channels = 5;
    spec.growth = 3;
    spec.with_xunit = false;
    auto p = make_dense_layer<float>(spec, rng);
    p.conv2_weight.mutable_value().fill(0.0f);
    Tensor<float> xv = ts::random_tensor<float>(Shape{2, 5, 4, 4}, rng);
    Rng drng = make_rng(1);
    auto y = dense_layer_forward(Variable<float>(xv), p, Mode::train, drng);
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t c = 0; c < 8; ++c)
            for (std::int64_t i = 0; i < 16; ++i) {
                const float got = y.value()[(n * 8 + c) * 16 + i];
                if (c < 5)
                    CHECK(got == xv[(n * 5 + c) * 16 + i]);
                else
                    CHECK(got == 0.0f);
            }
}

TEST_CASE("a stack of dense layers adds n*k channels") {
    Rng rng = make_rng(46);
    const std::int64_t k = 12;
    std::int64_t channels = 24;
    Tensor<float> xv = ts::random_tensor<float>(Shape{1, channels, 4, 4}, rng);
    Variable<float> x(xv);
    Rng drng = make_rng(2);
    for (int i = 0; i < 12; ++i) {
        DenseLayerSpec spec;
        spec.in_channels = channels;
        spec.growth = k;
        auto p = make_dense_layer<float>(spec, rng);
        x = dense_layer_forward(x, p, Mode::train, drng);
        channels += k;
    }
    CHECK(channels == 24 + 12 * 12);
    CHECK(x.value().dim(1) == 168);
}

TEST_CASE("dense layer without xunit is bit-identical to one with the xunit removed") {
    Rng rng = make_rng(47);
    DenseLayerSpec spec;
    spec.in_channels = 6;
    spec.growth = 4;
    spec.with_xunit = true;
    auto p = make_dense_layer<float>(spec, rng);
    auto stripped = p;
    stripped.xunit.reset();
    stripped.spec.with_xunit = false;

    Tensor<float> xv = ts::random_tensor<float>(Shape{2, 6, 5, 5}, rng);
    Rng d1 = make_rng(3), d2 = make_rng(3);
    auto y_with = dense_layer_forward(Variable<float>(xv), p, Mode::train, d1);
    auto y_without = dense_layer_forward(Variable<float>(xv), stripped, Mode::train, d2);
    // the xUnit only reshapes the new maps; the copied input channels match
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t c = 0; c < 6; ++c)
            for (std::int64_t i = 0; i < 25; ++i)
                CHECK(y_with.value()[(n * 10 + c) * 25 + i] ==
                      y_without.value()[(n * 10 + c) * 25 + i]);
    // and the gated maps differ from the raw ones somewhere
    CHECK(ts::max_abs_diff(y_with.value(), y_without.value()) > 0.0);
}

TEST_CASE("dense layer parameter count matches enumerated scalars") {
    Rng rng = make_rng(48);
    for (bool bn : {true, false})
        for (bool xu : {true, false}) {
            DenseLayerSpec spec;
            spec.in_channels = 10;
            spec.growth = 4;
            spec.with_bn = bn;
            spec.with_xunit = xu;
            auto p = make_dense_layer<float>(spec, rng);
            std::vector<ParamEntry<float>> entries;
            std::vector<BnEntry<float>> bns;
            p.collect("layer", entries, bns);
            std::int64_t scalars = 0;
            for (const auto& e : entries) scalars += e.var.value().numel();
            CHECK(scalars == param_count(spec, CountMode::full));
        }
}

TEST_CASE("transition layer shapes and counting") {
    Rng rng = make_rng(49);
    TransitionSpec spec;
    spec.in_channels = 168;
    spec.reduction = 0.5;
    spec.with_pool = true;
    auto p = make_transition<float>(spec, rng);
    Tensor<float> xv = ts::random_tensor<float>(Shape{2, 168, 8, 8}, rng);
    auto y = transition_forward(Variable<float>(xv), p, Mode::train);
    CHECK(y.value().dim(1) == 84);
    CHECK(y.value().dim(2) == 4);
    CHECK(y.value().dim(3) == 4);

    TransitionSpec odd;
    odd.in_channels = 85;
    odd.reduction = 0.5;
    CHECK(odd.out_channels() == 42); // floor

    TransitionSpec nopool;
    nopool.in_channels = 20;
    nopool.reduction = 0.5;
    nopool.with_pool = false;
    auto p2 = make_transition<float>(nopool, rng);
    Tensor<float> xv2 = ts::random_tensor<float>(Shape{1, 20, 7, 9}, rng);
    auto y2 = transition_forward(Variable<float>(xv2), p2, Mode::train);
    CHECK(y2.value().dim(1) == 10);
    CHECK(y2.value().dim(2) == 7); // spatial preserved
    CHECK(y2.value().dim(3) == 9);

    std::vector<ParamEntry<float>> entries;
    std::vector<BnEntry<float>> bns;
    p.collect("trans", entries, bns);
    std::int64_t scalars = 0;
    for (const auto& e : entries) scalars += e.var.value().numel();
    CHECK(scalars == param_count(spec, CountMode::full));
}

TEST_CASE("transition rejects out-of-range reduction") {
    TransitionSpec bad;
    bad.in_channels = 8;
    bad.reduction = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.reduction = 0.05;
    bad.in_channels = 4; // floor(0.2) = 0 channels
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("initialization is seed-deterministic") {
    XUnitSpec spec{6, GateKind::sigmoid, 9, true};
    Rng r1 = make_rng(50), r2 = make_rng(50);
    auto a = make_xunit<double>(spec, r1);
    auto b = make_xunit<double>(spec, r2);
    CHECK(ts::max_abs_diff(a.pw_weight.value(), b.pw_weight.value()) == 0.0);
    CHECK(ts::max_abs_diff(a.dw_weight.value(), b.dw_weight.value()) == 0.0);
}
