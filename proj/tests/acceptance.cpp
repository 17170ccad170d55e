// Acceptance gate for the library. Runs one check per shipping criterion and
// prints a single PASS/FAIL line for each; the exit code is the number of
// failed criteria. The denoiser comparison (C5/C6) trains six small networks
// and dominates the runtime.
#include <dxnet/dxnet.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace dxnet;

namespace {

int g_failures = 0;

void report(const std::string& id, bool ok, const std::string& detail) {
    std::cout << id << (ok ? ": PASS" : ": FAIL");
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n" << std::flush;
    if (!ok) ++g_failures;
}

std::string fmt(double v) { return io::format_g(v); }

struct ScratchDir {
    std::filesystem::path path;
    explicit ScratchDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("dxnet_acceptance_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~ScratchDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// Redirects fd 1 into a file so CLI calls don't interleave with the report.
struct StdoutSilencer {
    int saved;
    explicit StdoutSilencer(const std::string& path) {
        std::cout.flush();
        saved = ::dup(1);
        const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        ::dup2(fd, 1);
        ::close(fd);
    }
    ~StdoutSilencer() {
        std::cout.flush();
        ::dup2(saved, 1);
        ::close(saved);
    }
};

template <typename T>
Tensor<T> rnd(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(s);
    std::uniform_real_distribution<double> d(lo, hi);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = T(d(rng));
    return t;
}

// Values with |v| in [0.1, 1.1]; keeps finite differences away from the
// relu/mae kinks.
template <typename T>
Tensor<T> rnd_away(const Shape& s, Rng& rng) {
    Tensor<T> t = rnd<T>(s, rng);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] += t[i] >= 0 ? T(0.1) : T(-0.1);
    return t;
}

// Band-limited random image in [0,1]; same construction the unit tests use.
template <typename T>
Tensor<T> smooth_image(std::int64_t c, std::int64_t h, std::int64_t w, std::uint64_t seed) {
    Tensor<T> img(Shape{c, h, w});
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> ph(0, 6.283), fr(1, 4), am(0.1, 0.45);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        std::vector<std::array<double, 4>> cs;
        for (int i = 0; i < 5; ++i) cs.push_back({ph(rng), fr(rng), fr(rng), am(rng)});
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                double v = 0.5;
                for (auto& k : cs)
                    v += k[3] * std::sin(k[0] + k[1] * y / double(h) * 6.283 +
                                         k[2] * x / double(w) * 6.283) / 5.0;
                img.at(ch, y, x) = T(std::clamp(v, 0.0, 1.0));
            }
    }
    return img;
}

bool files_equal(const std::string& a, const std::string& b) {
    return detail::read_file_bytes(a) == detail::read_file_bytes(b);
}

// ---------------------------------------------------------------------------
// C1: finite-difference gradient checks
// ---------------------------------------------------------------------------

struct GradCase {
    std::string name;
    double tol;
    std::vector<Variable<double>> params;
    std::function<Variable<double>()> fn;
};

// Reduces a non-scalar output to a scalar with fixed random weights so every
// output element influences the loss.
Variable<double> weighted_sum(const Variable<double>& x, Rng& rng) {
    Variable<double> w(rnd<double>(x.value().shape(), rng), false);
    return sum_all(hadamard(x, w));
}

void check_c1() {
    Rng rng = make_rng(11001);
    std::vector<GradCase> cases;
    auto add_case = [&](std::string name, double tol, std::vector<Variable<double>> params,
                        std::function<Variable<double>()> fn) {
        cases.push_back({std::move(name), tol, std::move(params), std::move(fn)});
    };
    std::uniform_int_distribution<std::int64_t> d2(1, 2), d3(2, 3), d5(3, 5);

    // conv2d, three randomized dense shapes with bias
    for (int t = 0; t < 3; ++t) {
        const std::int64_t N = d2(rng), C = d3(rng), O = d3(rng), H = 2 * d3(rng), W = 2 * d3(rng);
        Variable<double> x(rnd<double>(Shape{N, C, H, W}, rng), true);
        Variable<double> w(rnd<double>(Shape{O, C, 3, 3}, rng), true);
        Variable<double> b(rnd<double>(Shape{O}, rng), true);
        ConvSpec spec{C, O, 3, 3, 1, 1, 1, true};
        add_case(detail::msg("conv3x3 #", t), 1e-4, {x, w, b}, [=]() mutable {
            Rng wr = make_rng(90 + t);
            return weighted_sum(conv2d(x, w, std::optional<Variable<double>>(b), spec), wr);
        });
    }
    {
        // 1x1 conv without bias
        const std::int64_t C = d5(rng), O = d3(rng);
        Variable<double> x(rnd<double>(Shape{2, C, 5, 4}, rng), true);
        Variable<double> w(rnd<double>(Shape{O, C, 1, 1}, rng), true);
        ConvSpec spec{C, O, 1, 1, 1, 0, 1, false};
        add_case("conv1x1", 1e-4, {x, w}, [=]() mutable {
            Rng wr = make_rng(94);
            return weighted_sum(conv2d(x, w, std::nullopt, spec), wr);
        });
    }
    {
        // depthwise 9x9, the gate branch kernel
        const std::int64_t C = 2;
        Variable<double> x(rnd<double>(Shape{1, C, 6, 6}, rng), true);
        Variable<double> w(rnd<double>(Shape{C, 1, 9, 9}, rng, -0.3, 0.3), true);
        Variable<double> b(rnd<double>(Shape{C}, rng), true);
        ConvSpec spec{C, C, 9, 9, 1, 4, C, true};
        add_case("depthwise9x9", 1e-4, {x, w, b}, [=]() mutable {
            Rng wr = make_rng(95);
            return weighted_sum(conv2d(x, w, std::optional<Variable<double>>(b), spec), wr);
        });
    }
    {
        Variable<double> x(rnd<double>(Shape{3, 4}, rng), true);
        Variable<double> w(rnd<double>(Shape{5, 4}, rng), true);
        Variable<double> b(rnd<double>(Shape{5}, rng), true);
        add_case("linear", 1e-4, {x, w, b}, [=]() mutable {
            Rng wr = make_rng(96);
            return weighted_sum(linear(x, w, std::optional<Variable<double>>(b)), wr);
        });
    }
    for (int t = 0; t < 2; ++t) {
        const Mode mode = t == 0 ? Mode::eval : Mode::train;
        const std::int64_t C = d3(rng);
        Variable<double> x(rnd<double>(Shape{3, C, 4, 4}, rng), true);
        auto st = std::make_shared<BatchNormState<double>>(make_batch_norm<double>(C));
        if (mode == Mode::eval) {
            st->running_mean = rnd<double>(Shape{C}, rng);
            st->running_var = rnd<double>(Shape{C}, rng, 0.5, 2.0);
            st->batches_tracked = 1;
        }
        add_case(mode == Mode::eval ? "batch_norm eval" : "batch_norm train",
                 mode == Mode::eval ? 1e-4 : 1e-3, {x, st->gamma, st->beta}, [=]() mutable {
                     Rng wr = make_rng(97 + t);
                     return weighted_sum(batch_norm(x, *st, mode), wr);
                 });
    }
    for (int t = 0; t < 2; ++t) {
        Variable<double> x(rnd<double>(Shape{2, 3, 4, 3}, rng, -2, 2), true);
        const ActKind kind = t == 0 ? ActKind::sigmoid : ActKind::gaussian_gate;
        add_case(t == 0 ? "sigmoid" : "gaussian gate", 1e-4, {x}, [=]() mutable {
            Rng wr = make_rng(99 + t);
            return weighted_sum(activation(x, kind), wr);
        });
    }
    {
        Variable<double> x(rnd_away<double>(Shape{2, 2, 3, 5}, rng), true);
        add_case("relu", 1e-4, {x}, [=]() mutable {
            Rng wr = make_rng(101);
            return weighted_sum(relu(x), wr);
        });
    }
    {
        Variable<double> x(rnd<double>(Shape{2, 3, 6, 4}, rng), true);
        add_case("avg pool 2x2", 1e-4, {x}, [=]() mutable {
            Rng wr = make_rng(102);
            return weighted_sum(pool(x, PoolKind::avg2x2), wr);
        });
    }
    {
        Variable<double> x(rnd<double>(Shape{2, 4, 3, 5}, rng), true);
        add_case("global avg pool", 1e-4, {x}, [=]() mutable {
            Rng wr = make_rng(103);
            return weighted_sum(pool(x, PoolKind::global_avg), wr);
        });
    }
    {
        Variable<double> a(rnd<double>(Shape{2, 2, 3, 3}, rng), true);
        Variable<double> b(rnd<double>(Shape{2, 3, 3, 3}, rng), true);
        Variable<double> c(rnd<double>(Shape{2, 1, 3, 3}, rng), true);
        add_case("concat channels", 1e-4, {a, b, c}, [=]() mutable {
            Rng wr = make_rng(104);
            return weighted_sum(concat_channels<double>({a, b, c}), wr);
        });
    }
    {
        Variable<double> x(rnd<double>(Shape{2, 5, 3, 3}, rng), true);
        add_case("slice channels", 1e-4, {x}, [=]() mutable {
            Rng wr = make_rng(105);
            return weighted_sum(slice_channels(x, 1, 4), wr);
        });
    }
    {
        Variable<double> a(rnd<double>(Shape{2, 3, 4, 2}, rng), true);
        Variable<double> b(rnd<double>(Shape{2, 3, 4, 2}, rng), true);
        add_case("hadamard", 1e-4, {a, b}, [=]() mutable {
            Rng wr = make_rng(106);
            return weighted_sum(hadamard(a, b), wr);
        });
        add_case("add", 1e-4, {a, b}, [=]() mutable {
            Rng wr = make_rng(107);
            return weighted_sum(add(a, b), wr);
        });
    }
    {
        Variable<double> x(rnd<double>(Shape{3, 4, 2, 2}, rng), true);
        add_case("scale+reshape+sum", 1e-4, {x}, [=]() mutable {
            Rng wr = make_rng(108);
            return weighted_sum(reshape(scale(x, 1.7), Shape{3, 16}), wr);
        });
    }
    {
        Variable<double> x(rnd<double>(Shape{1, 8, 3, 4}, rng), true);
        add_case("pixel shuffle", 1e-4, {x}, [=]() mutable {
            Rng wr = make_rng(109);
            return weighted_sum(pixel_shuffle(x, 2), wr);
        });
    }
    {
        Variable<double> x(rnd<double>(Shape{2, 3, 4, 4}, rng), true);
        add_case("dropout", 1e-4, {x}, [=]() mutable {
            Rng dr = make_rng(424242); // same mask on every call
            Rng wr = make_rng(110);
            return weighted_sum(dropout(x, 0.3, dr, Mode::train), wr);
        });
    }
    {
        Variable<double> p(rnd<double>(Shape{2, 1, 3, 4}, rng), true);
        Tensor<double> tgt = rnd<double>(Shape{2, 1, 3, 4}, rng);
        add_case("mse loss", 1e-4, {p}, [=]() { return mse_loss(p, tgt); });
    }
    {
        Variable<double> p(rnd<double>(Shape{2, 1, 3, 4}, rng), true);
        Tensor<double> tgt = p.value();
        Tensor<double> off = rnd_away<double>(tgt.shape(), rng);
        for (std::int64_t i = 0; i < tgt.numel(); ++i) tgt[i] += off[i];
        add_case("mae loss", 1e-4, {p}, [=]() { return mae_loss(p, tgt); });
    }
    {
        Variable<double> z(rnd<double>(Shape{4, 5}, rng, -2, 2), true);
        Tensor<double> labels(Shape{4});
        for (std::int64_t i = 0; i < 4; ++i) labels[i] = double(i % 5);
        add_case("softmax ce", 1e-4, {z}, [=]() { return softmax_cross_entropy(z, labels); });
    }

    // composed modules; parameters pulled out of the bundles via collect()
    auto bundle_params = [](const std::vector<ParamEntry<double>>& entries,
                            std::vector<Variable<double>>& out) {
        for (const auto& e : entries) out.push_back(e.var);
    };
    for (int t = 0; t < 3; ++t) {
        // t=0 sigmoid+bn eval, t=1 gaussian+bn train, t=2 sigmoid no-bn train
        XUnitSpec xs{2, t == 1 ? GateKind::gaussian : GateKind::sigmoid, 9, t < 2};
        XUnitParams<double> xp = make_xunit<double>(xs, rng);
        const Mode mode = t == 0 ? Mode::eval : Mode::train;
        if (mode == Mode::eval && xs.with_bn) {
            // eval refuses untouched running stats; the defaults (0, 1) are fine
            xp.bn1->batches_tracked = 1;
            xp.bn2->batches_tracked = 1;
        }
        Variable<double> x(rnd<double>(Shape{2, 2, 5, 5}, rng), true);
        std::vector<ParamEntry<double>> entries;
        std::vector<BnEntry<double>> bns;
        xp.collect("x", entries, bns);
        std::vector<Variable<double>> params{x};
        bundle_params(entries, params);
        add_case(detail::msg("xunit #", t), t == 1 ? 1e-3 : 1e-4, params, [=]() mutable {
            Rng wr = make_rng(120 + t);
            return weighted_sum(xunit_forward(x, xp, mode), wr);
        });
    }
    for (int t = 0; t < 2; ++t) {
        DenseLayerSpec ds;
        ds.in_channels = 3;
        ds.growth = 2;
        ds.bottleneck = 2;
        ds.with_bn = t == 0;
        ds.with_xunit = true;
        DenseLayerParams<double> dp = make_dense_layer<double>(ds, rng);
        const Mode mode = t == 0 ? Mode::train : Mode::eval;
        Variable<double> x(rnd<double>(Shape{2, 3, 4, 4}, rng), true);
        std::vector<ParamEntry<double>> entries;
        std::vector<BnEntry<double>> bns;
        dp.collect("d", entries, bns);
        std::vector<Variable<double>> params{x};
        bundle_params(entries, params);
        add_case(detail::msg("dense layer #", t), t == 0 ? 1e-3 : 1e-4, params, [=]() mutable {
            Rng dr = make_rng(77);
            Rng wr = make_rng(130 + t);
            return weighted_sum(dense_layer_forward(x, dp, mode, dr), wr);
        });
    }
    for (int t = 0; t < 2; ++t) {
        TransitionSpec ts;
        ts.in_channels = 4;
        ts.reduction = 0.5;
        ts.with_pool = t == 0;
        ts.with_bn = t == 0;
        TransitionParams<double> tp = make_transition<double>(ts, rng);
        const Mode mode = t == 0 ? Mode::train : Mode::eval;
        Variable<double> x(rnd<double>(Shape{2, 4, 4, 6}, rng), true);
        std::vector<ParamEntry<double>> entries;
        std::vector<BnEntry<double>> bns;
        tp.collect("t", entries, bns);
        std::vector<Variable<double>> params{x};
        bundle_params(entries, params);
        add_case(detail::msg("transition #", t), t == 0 ? 1e-3 : 1e-4, params, [=]() mutable {
            Rng wr = make_rng(140 + t);
            return weighted_sum(transition_forward(x, tp, mode), wr);
        });
    }

    double worst = 0;
    std::string worst_name;
    bool ok = cases.size() >= 20;
    std::string fail_detail = ok ? "" : "fewer than 20 shapes";
    for (auto& c : cases) {
        GradCheckResult<double> r = grad_check<double>(c.params, c.fn);
        const double rel = r.max_rel_err;
        if (rel > worst) {
            worst = rel;
            worst_name = c.name;
        }
        if (!(r.checked > 0 && rel < c.tol)) {
            ok = false;
            if (fail_detail.empty())
                fail_detail = detail::msg(c.name, " rel err ", fmt(rel), " vs tol ", fmt(c.tol));
        }
    }
    report("C1 gradient checks", ok,
           ok ? detail::msg(cases.size(), " shapes, worst rel err ", fmt(worst), " [",
                            worst_name, "]")
              : fail_detail);
}

// ---------------------------------------------------------------------------
// C2: gate range and contraction
// ---------------------------------------------------------------------------

void check_c2() {
    using T = float;
    Rng rng = make_rng(22002);
    std::uniform_int_distribution<std::int64_t> dch(1, 4), dhw(4, 8), dn(1, 2);
    bool ok = true;
    std::string fail_detail;
    for (int i = 0; i < 1000 && ok; ++i) {
        XUnitSpec xs{dch(rng), i % 2 ? GateKind::gaussian : GateKind::sigmoid, 9, (i / 2) % 2 == 0};
        XUnitParams<T> xp = make_xunit<T>(xs, rng);
        const Mode mode = (i / 4) % 2 ? Mode::train : Mode::eval;
        if (mode == Mode::eval && xs.with_bn) {
            xp.bn1->batches_tracked = 1;
            xp.bn2->batches_tracked = 1;
        }
        Tensor<T> x = rnd<T>(Shape{dn(rng), xs.channels, dhw(rng), dhw(rng)}, rng, -2, 2);
        XUnitOut<T> out = xunit_forward_with_gate(Variable<T>(x, false), xp, mode);
        const Tensor<T>& y = out.y.value();
        const Tensor<T>& g = out.gate.value();
        if (!(y.shape() == x.shape() && g.shape() == x.shape())) {
            ok = false;
            fail_detail = detail::msg("shape changed on trial ", i);
            break;
        }
        for (std::int64_t j = 0; j < x.numel(); ++j) {
            if (!(g[j] >= T(0) && g[j] <= T(1))) {
                ok = false;
                fail_detail = detail::msg("gate ", fmt(double(g[j])), " outside [0,1] on trial ", i);
                break;
            }
            if (!(std::abs(y[j]) <= std::abs(x[j]))) {
                ok = false;
                fail_detail = detail::msg("|output| ", fmt(std::abs(double(y[j]))), " > |input| ",
                                          fmt(std::abs(double(x[j]))), " on trial ", i);
                break;
            }
        }
    }
    report("C2 gate invariants", ok, ok ? "1000 trials, both gates" : fail_detail);
}

// ---------------------------------------------------------------------------
// C3: parameter accounting
// ---------------------------------------------------------------------------

void check_c3() {
    using T = float;
    bool ok = true;
    std::string fail_detail;
    for (std::int64_t k : {1, 4, 12, 64, 128}) {
        for (bool bn : {true, false}) {
            const std::int64_t n = param_count(XUnitSpec{k, GateKind::sigmoid, 9, bn},
                                               CountMode::paper_formula);
            if (n != 82 * k) {
                ok = false;
                fail_detail = detail::msg("xunit k=", k, " formula count ", n, " != ", 82 * k);
            }
        }
    }

    ScratchDir dir("c3");
    std::vector<NetConfig> matrix;
    {
        NetConfig c; // default classifier, 12-12-12 growth 12
        matrix.push_back(c);
        c.xunit = false;
        c.blocks = {16, 16, 16};
        matrix.push_back(c);
        NetConfig d;
        d.task = Task::classification;
        d.blocks = {2, 3};
        d.growth = 4;
        d.initial_channels = 8;
        d.classes = 7;
        d.bottleneck = 2;
        d.gate = GateKind::gaussian;
        d.bn = false;
        matrix.push_back(d);
        NetConfig e;
        e.task = Task::denoising;
        e.blocks = {2, 2};
        e.growth = 4;
        e.initial_channels = 8;
        matrix.push_back(e);
        NetConfig s;
        s.task = Task::super_resolution;
        s.blocks = {2};
        s.growth = 4;
        s.initial_channels = 8;
        s.scale = 2;
        matrix.push_back(s);
        s.blocks = {1, 2};
        s.growth = 3;
        s.initial_channels = 6;
        s.scale = 4;
        matrix.push_back(s);
    }
    std::int64_t n_dx = 0, n_dn = 0;
    for (std::size_t i = 0; i < matrix.size() && ok; ++i) {
        Rng rng = make_rng(33003 + i);
        Model<T> m = build_model<T>(matrix[i], rng);
        const std::string path = dir.file(detail::msg("m", i, ".dxnt"));
        save_checkpoint(m, path);
        const std::int64_t full = param_count_full(m);
        const std::int64_t ser = checkpoint_param_scalars(path);
        if (full != ser) {
            ok = false;
            fail_detail = detail::msg("config ", i, ": full count ", full,
                                      " != serialized scalars ", ser);
        }
        if (i == 0) n_dx = full;
        if (i == 1) n_dn = full;
    }
    if (ok && !(n_dx >= 425000 && n_dx <= 575000)) {
        ok = false;
        fail_detail = detail::msg("12-12-12 dxnet count ", n_dx, " outside 0.5M +/- 15%");
    }
    if (ok && !(n_dn >= 680000 && n_dn <= 920000)) {
        ok = false;
        fail_detail = detail::msg("16-16-16 densenet count ", n_dn, " outside 0.8M +/- 15%");
    }
    report("C3 parameter accounting", ok,
           ok ? detail::msg("dxnet 12-12-12 = ", n_dx, ", densenet 16-16-16 = ", n_dn)
              : fail_detail);
}

// ---------------------------------------------------------------------------
// C4: trace recovery on a known quadratic
// ---------------------------------------------------------------------------

void check_c4() {
    QuadraticFixture<double> fx = make_quadratic_fixture<double>({1.0, 2.0, 3.0});
    PerturbationConfig pc;
    pc.sigma_grid = {0.0, 0.05, 0.1, 0.15, 0.2};
    pc.seed = 22;
    pc.n_realizations = 1000;
    FlatnessReport fine = estimate_flatness<double>(fx.theta0, fx.eval, pc);
    pc.n_realizations = 250;
    FlatnessReport coarse = estimate_flatness<double>(fx.theta0, fx.eval, pc);
    const double err_fine = std::abs(fine.trace - fx.trace) / fx.trace;
    const double err_coarse = std::abs(coarse.trace - fx.trace) / fx.trace;
    const bool ok = err_fine < 0.05 && err_fine < err_coarse;
    report("C4 quadratic trace recovery", ok,
           detail::msg("trace ", fmt(fine.trace), " vs 6, rel err ", fmt(err_fine),
                       " at n=1000, ", fmt(err_coarse), " at n=250"));
}

// ---------------------------------------------------------------------------
// C5/C6: trained denoiser comparison
// ---------------------------------------------------------------------------

struct DenoiseRun {
    double val_db = 0;
    double noisy_db = 0;
    double trace = 0;
    std::int64_t n_p = 0;
    bool diverged = false;
};

DenoiseRun denoise_experiment(std::uint64_t seed, bool xunit) {
    using T = float;
    std::vector<Tensor<T>> train_imgs;
    for (int i = 0; i < 6; ++i) train_imgs.push_back(smooth_image<T>(1, 64, 64, 100 + i));
    std::vector<Tensor<T>> val_imgs;
    for (int i = 0; i < 2; ++i) val_imgs.push_back(smooth_image<T>(1, 64, 64, 900 + i));
    std::vector<std::pair<Tensor<T>, Tensor<T>>> val_pairs;
    Rng vr = make_rng(77);
    for (int i = 0; i < 24; ++i) {
        const auto& im = val_imgs[i % val_imgs.size()];
        Tensor<T> p = extract_random_patches(im, 1, 16, vr)[0];
        val_pairs.emplace_back(p, add_awgn(p, 50.0, vr));
    }

    DenoiseRun run;
    for (const auto& [clean, noisy] : val_pairs) run.noisy_db += psnr(noisy, clean);
    run.noisy_db /= double(val_pairs.size());

    NetConfig cfg;
    cfg.task = Task::denoising;
    cfg.blocks = {4, 6, 8};
    cfg.growth = 4;
    cfg.initial_channels = 8;
    cfg.xunit = xunit;
    Rng brng = make_rng(seed);
    Model<T> m = build_model<T>(cfg, brng);

    TrainConfig tc = recipe_defaults(Task::denoising);
    tc.epochs = 150;
    tc.batch_size = 8;
    tc.seed = seed;
    tc.eval_every = 50;
    tc.sched.fractions = {0.5, 0.75, 0.9};
    tc.out_dir = "";
    TrainHooks<T> hooks = denoising_hooks<T>(train_imgs, 50.0, 16, 64, val_pairs, tc.batch_size);
    TrainResult r = train(m, hooks, tc);
    run.val_db = r.final_val;
    run.diverged = r.diverged;
    if (run.diverged) return run;

    // fixed probe batches: training patches with frozen noise
    std::vector<std::pair<Tensor<T>, Tensor<T>>> batches;
    Rng pr = make_rng(seed, 9);
    for (int b = 0; b < 3; ++b) {
        std::vector<Tensor<T>> ins, tgts;
        for (int i = 0; i < 8; ++i) {
            const auto& im = train_imgs[(b * 8 + i) % train_imgs.size()];
            Tensor<T> p = extract_random_patches(im, 1, 16, pr)[0];
            Tensor<T> y = add_awgn(p, 50.0, pr);
            Tensor<T> n(p.shape());
            for (std::int64_t j = 0; j < n.numel(); ++j) n[j] = y[j] - p[j];
            ins.push_back(std::move(y));
            tgts.push_back(std::move(n));
        }
        batches.emplace_back(stack_batch(ins), stack_batch(tgts));
    }
    PerturbationConfig pc;
    pc.n_realizations = 100;
    pc.seed = seed + 31;
    FlatnessReport rep = estimate_model_flatness(m, batches, LossKind::mse, pc);
    run.trace = rep.trace;
    run.n_p = rep.n_p;
    return run;
}

void check_c5_c6() {
    int flatter = 0;
    bool trained_ok = true;
    std::ostringstream traces, gains;
    DenoiseRun seed1_dx;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        DenoiseRun dx = denoise_experiment(seed, true);
        DenoiseRun dn = denoise_experiment(seed, false);
        if (seed == 1) seed1_dx = dx;
        if (dx.diverged || dn.diverged) trained_ok = false;
        if (dx.trace < dn.trace) ++flatter;
        traces << (seed > 1 ? "; " : "") << "seed " << seed << ": " << fmt(dx.trace) << " vs "
               << fmt(dn.trace);
        gains << (seed > 1 ? ", " : "") << fmt(dx.val_db - dx.noisy_db);
    }
    report("C5 flatness trend", trained_ok && flatter >= 2,
           detail::msg("dxnet vs densenet trace, ", traces.str(), "; flatter in ", flatter,
                       "/3 seeds"));
    const double gain = seed1_dx.val_db - seed1_dx.noisy_db;
    report("C6 denoising gain", !seed1_dx.diverged && gain > 5.0,
           detail::msg("seed 1: ", fmt(seed1_dx.val_db), " dB vs noisy ",
                       fmt(seed1_dx.noisy_db), " dB, gain ", fmt(gain),
                       " dB; all seeds: ", gains.str()));
}

// ---------------------------------------------------------------------------
// C7: class activation map linearity
// ---------------------------------------------------------------------------

void check_c7() {
    using T = float;
    NetConfig cfg;
    cfg.task = Task::classification;
    cfg.blocks = {2};
    cfg.growth = 4;
    cfg.initial_channels = 8;
    Rng rng = make_rng(70007);
    Model<T> m = build_model<T>(cfg, rng);

    std::vector<Tensor<T>> imgs;
    for (int i = 0; i < 4; ++i) imgs.push_back(smooth_image<T>(3, 32, 32, 700 + i));
    m.set_mode(Mode::train);
    forward(m, stack_batch(imgs), rng); // settle the normalization statistics
    m.set_mode(Mode::eval);

    double worst = 0;
    for (const auto& img : imgs)
        for (std::int64_t cls = 0; cls < cfg.classes; ++cls)
            worst = std::max(worst, cam(m, img, cls).residual);
    report("C7 cam linearity", worst <= 1e-4,
           detail::msg("worst residual ", fmt(worst), " over 4 images x 10 classes"));
}

// ---------------------------------------------------------------------------
// C8: forward shape contracts
// ---------------------------------------------------------------------------

void check_c8() {
    using T = float;
    Rng rng = make_rng(80008);
    std::uniform_int_distribution<std::int64_t> dlayers(1, 3), dgrowth(2, 5), dclasses(2, 10);
    bool ok = true;
    std::string fail_detail;
    auto fail = [&](const std::string& msg) {
        if (ok) fail_detail = msg;
        ok = false;
    };

    // channel arithmetic shared by every task: each dense layer adds exactly
    // growth channels, transitions compress by the reduction rate
    auto check_channels = [&](const Model<T>& m, const NetConfig& c, int trial) {
        std::int64_t ch = c.stem_channels();
        for (std::size_t bi = 0; bi < m.blocks.size(); ++bi) {
            for (std::size_t li = 0; li < m.blocks[bi].size(); ++li) {
                if (m.blocks[bi][li].spec.in_channels != ch)
                    fail(detail::msg("trial ", trial, ": block ", bi, " layer ", li,
                                     " expects ", m.blocks[bi][li].spec.in_channels,
                                     " channels, arithmetic says ", ch));
                ch += c.growth;
            }
            if (bi + 1 < m.blocks.size()) ch = std::int64_t(c.reduction * double(ch));
        }
        if (m.trunk_channels != ch)
            fail(detail::msg("trial ", trial, ": trunk channels ", m.trunk_channels, " != ", ch));
    };

    for (int t = 0; t < 8 && ok; ++t) {
        NetConfig c;
        c.task = Task::classification;
        c.blocks.clear();
        const std::int64_t nb = 1 + t % 3;
        for (std::int64_t b = 0; b < nb; ++b) c.blocks.push_back(dlayers(rng));
        c.growth = dgrowth(rng);
        c.initial_channels = 2 * c.growth;
        c.classes = dclasses(rng);
        c.xunit = t % 2 == 0;
        Rng br = make_rng(8100 + t);
        Model<T> m = build_model<T>(c, br);
        check_channels(m, c, t);
        const std::int64_t N = 2, HW = 16;
        Tensor<T> x = rnd<T>(Shape{N, 3, HW, HW}, rng, 0, 1);
        ForwardResult<T> fr = forward_with_features(m, x, br);
        if (fr.out.value().shape() != Shape{N, c.classes})
            fail(detail::msg("trial ", t, ": logits ", shape_str(fr.out.value().shape())));
        const std::int64_t hw = HW >> (nb - 1);
        if (fr.features.value().shape() != Shape{N, m.trunk_channels, hw, hw})
            fail(detail::msg("trial ", t, ": features ",
                             shape_str(fr.features.value().shape())));
    }
    for (int t = 0; t < 6 && ok; ++t) {
        NetConfig c;
        c.task = Task::denoising;
        c.blocks.clear();
        const std::int64_t nb = 1 + t % 2;
        for (std::int64_t b = 0; b < nb; ++b) c.blocks.push_back(dlayers(rng));
        c.growth = dgrowth(rng);
        c.initial_channels = 2 * c.growth;
        c.xunit = t % 2 == 0;
        Rng br = make_rng(8200 + t);
        Model<T> m = build_model<T>(c, br);
        check_channels(m, c, 100 + t);
        Tensor<T> x = rnd<T>(Shape{1, 1, 12, 14}, rng, 0, 1);
        Variable<T> out = forward(m, x, br);
        if (out.value().shape() != x.shape())
            fail(detail::msg("denoise trial ", t, ": output ",
                             shape_str(out.value().shape()), " != input"));
    }
    for (int t = 0; t < 6 && ok; ++t) {
        NetConfig c;
        c.task = Task::super_resolution;
        c.scale = t % 2 ? 2 : 4;
        c.blocks.clear();
        const std::int64_t nb = 1 + t % 2;
        for (std::int64_t b = 0; b < nb; ++b) c.blocks.push_back(dlayers(rng));
        c.growth = dgrowth(rng);
        c.initial_channels = 2 * c.growth;
        c.xunit = t % 2 == 0;
        Rng br = make_rng(8300 + t);
        Model<T> m = build_model<T>(c, br);
        check_channels(m, c, 200 + t);
        const std::int64_t H = 6, W = 7;
        Tensor<T> x = rnd<T>(Shape{1, 3, H, W}, rng, 0, 1);
        Variable<T> out = forward(m, x, br);
        if (out.value().shape() != Shape{1, 3, H * c.scale, W * c.scale})
            fail(detail::msg("sr trial ", t, " scale ", c.scale, ": output ",
                             shape_str(out.value().shape())));
    }
    report("C8 shape contracts", ok, ok ? "20 randomized configs" : fail_detail);
}

// ---------------------------------------------------------------------------
// C9: byte-identical reruns on the command-line path
// ---------------------------------------------------------------------------

void check_c9() {
    ScratchDir dir("c9");
    const std::string data = dir.file("data");
    std::filesystem::create_directories(data);
    for (int i = 0; i < 4; ++i)
        write_pnm(data + "/img" + std::to_string(i) + ".pgm",
                  smooth_image<float>(1, 24, 24, 9000 + i));
    io::write_text_file(dir.file("net.cfg"),
                        "task = denoising\nblocks = 2\ngrowth = 4\ninitial_channels = 8\n"
                        "channels = 1\n");

    auto run = [&](const std::vector<std::string>& args, const std::string& log) {
        StdoutSilencer quiet(dir.file(log));
        return cli::run_cli(args);
    };
    auto train_args = [&](const std::string& out) {
        return std::vector<std::string>{
            "train", "--config", dir.file("net.cfg"), "--data", data, "--epochs", "2",
            "--batch", "4", "--patch", "8", "--patches", "16", "--sigma", "25",
            "--seed", "9", "--out", out};
    };
    bool ok = run(train_args(dir.file("a")), "ta.log") == 0 &&
              run(train_args(dir.file("b")), "tb.log") == 0;
    std::string fail_detail = ok ? "" : "train run failed";
    if (ok && !files_equal(dir.file("a/history.csv"), dir.file("b/history.csv"))) {
        ok = false;
        fail_detail = "history.csv differs between reruns";
    }
    if (ok && !files_equal(dir.file("a/model.dxnt"), dir.file("b/model.dxnt"))) {
        ok = false;
        fail_detail = "model.dxnt differs between reruns";
    }
    if (ok) {
        auto probe_args = [&](const std::string& out) {
            return std::vector<std::string>{
                "probe", "--checkpoint", dir.file("a/model.dxnt"), "--data", data,
                "--sigmas", "0.01,0.02", "--n", "10", "--batch", "2", "--samples", "4",
                "--patch", "8", "--sigma", "25", "--seed", "11", "--out", out};
        };
        ok = run(probe_args(dir.file("pa")), "pa.log") == 0 &&
             run(probe_args(dir.file("pb")), "pb.log") == 0;
        if (!ok)
            fail_detail = "probe run failed";
        else if (!files_equal(dir.file("pa/flatness.csv"), dir.file("pb/flatness.csv"))) {
            ok = false;
            fail_detail = "flatness.csv differs between reruns";
        }
    }
    report("C9 fixed-seed reproducibility", ok,
           ok ? "train and probe reruns byte-identical" : fail_detail);
}

// ---------------------------------------------------------------------------
// C10: format round trips
// ---------------------------------------------------------------------------

void check_c10() {
    using T = float;
    ScratchDir dir("c10");
    Rng rng = make_rng(101010);
    bool ok = true;
    std::string fail_detail;
    auto fail = [&](const std::string& msg) {
        if (ok) fail_detail = msg;
        ok = false;
    };

    {
        NetConfig cfg;
        cfg.task = Task::denoising;
        cfg.blocks = {2};
        cfg.growth = 4;
        cfg.initial_channels = 8;
        Model<T> m = build_model<T>(cfg, rng);
        m.set_mode(Mode::train);
        forward(m, rnd<T>(Shape{2, 1, 8, 8}, rng, 0, 1), rng); // move the BN buffers
        save_checkpoint(m, dir.file("ck1.dxnt"));
        LoadedCheckpoint<T> lc = load_checkpoint<T>(dir.file("ck1.dxnt"));
        for (std::size_t i = 0; i < m.store.entries.size(); ++i) {
            const Tensor<T>& a = m.store.entries[i].var.value();
            const Tensor<T>& b = lc.model.store.entries[i].var.value();
            for (std::int64_t j = 0; j < a.numel(); ++j)
                if (a[j] != b[j]) fail(detail::msg("checkpoint parameter drifted at ", j));
        }
        for (std::size_t i = 0; i < m.store.bns.size(); ++i) {
            const auto& a = *m.store.bns[i].state;
            const auto& b = *lc.model.store.bns[i].state;
            for (std::int64_t j = 0; j < a.running_mean.numel(); ++j)
                if (a.running_mean[j] != b.running_mean[j] ||
                    a.running_var[j] != b.running_var[j])
                    fail("checkpoint batch-norm buffer drifted");
        }
        save_checkpoint(lc.model, dir.file("ck2.dxnt"));
        if (!files_equal(dir.file("ck1.dxnt"), dir.file("ck2.dxnt")))
            fail("checkpoint re-save is not byte-identical");
    }

    // images built on the 8-bit grid so the decode is exact
    auto grid_image = [&](std::int64_t c, std::int64_t h, std::int64_t w) {
        Tensor<T> t(Shape{c, h, w});
        std::uniform_int_distribution<int> d(0, 255);
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = T(d(rng)) / T(255);
        return t;
    };
    {
        Tensor<T> img = grid_image(1, 9, 7);
        write_pnm(dir.file("a.pgm"), img);
        Tensor<T> back = read_pnm<T>(dir.file("a.pgm")).pixels;
        for (std::int64_t i = 0; i < img.numel(); ++i)
            if (img[i] != back[i]) fail("pgm pixels drifted");
        write_pnm(dir.file("b.pgm"), back);
        if (!files_equal(dir.file("a.pgm"), dir.file("b.pgm")))
            fail("pgm re-encode is not byte-identical");
    }
    {
        Tensor<T> img = grid_image(3, 5, 6);
        write_pnm(dir.file("a.ppm"), img);
        Tensor<T> back = read_pnm<T>(dir.file("a.ppm")).pixels;
        for (std::int64_t i = 0; i < img.numel(); ++i)
            if (img[i] != back[i]) fail("ppm pixels drifted");
        write_pnm(dir.file("b.ppm"), back);
        if (!files_equal(dir.file("a.ppm"), dir.file("b.ppm")))
            fail("ppm re-encode is not byte-identical");
    }
    {
        std::vector<ImageSample<T>> samples;
        for (std::int64_t label : {0, 7, 9}) {
            ImageSample<T> s;
            s.pixels = grid_image(3, 32, 32);
            s.label = label;
            samples.push_back(std::move(s));
        }
        save_cifar10(dir.file("a.bin"), samples);
        std::vector<ImageSample<T>> back = load_cifar10<T>(dir.file("a.bin"));
        if (back.size() != samples.size()) fail("cifar sample count drifted");
        for (std::size_t i = 0; ok && i < samples.size(); ++i) {
            if (back[i].label != samples[i].label) fail("cifar label drifted");
            for (std::int64_t j = 0; j < samples[i].pixels.numel(); ++j)
                if (back[i].pixels[j] != samples[i].pixels[j]) fail("cifar pixels drifted");
        }
        save_cifar10(dir.file("b.bin"), back);
        if (!files_equal(dir.file("a.bin"), dir.file("b.bin")))
            fail("cifar re-encode is not byte-identical");
    }
    report("C10 format round trips", ok,
           ok ? "checkpoint, pgm, ppm, cifar all bit-exact" : fail_detail);
}

} // namespace

int main() {
    check_c1();
    check_c2();
    check_c3();
    check_c4();
    check_c5_c6();
    check_c7();
    check_c8();
    check_c9();
    check_c10();
    return g_failures;
}
