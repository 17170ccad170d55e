// Minima-flatness machinery: Gaussian parameter perturbation, the mean-loss
// curve over a sigma grid, the slope fit that estimates the Hessian trace,
// a 1-D quadratic profile for plotting, and CAM extraction.
#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "dxnet/io.hpp"
#include "dxnet/model.hpp"
#include "dxnet/train.hpp"

namespace dxnet {

struct PerturbationConfig {
    std::vector<double> sigma_grid; // ascending, first entry 0
    std::int64_t n_realizations = 1000;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (sigma_grid.size() < 2)
            throw ConfigError("sigma grid needs at least 2 points; the slope is undefined "
                              "otherwise");
        if (sigma_grid.front() != 0) throw ConfigError("sigma grid must include 0");
        for (std::size_t i = 1; i < sigma_grid.size(); ++i)
            if (sigma_grid[i] <= sigma_grid[i - 1])
                throw ConfigError("sigma grid must be strictly ascending");
        if (n_realizations < 2) throw ConfigError("need at least 2 realizations");
        if (threads < 1) throw ConfigError("threads must be >= 1");
    }
};

struct FlatnessReport {
    std::vector<double> sigma_grid;
    std::vector<double> mean_loss;
    std::vector<double> std_err;
    std::vector<std::int64_t> kept; // realizations with finite loss per sigma
    double baseline = 0;            // L(theta_0)
    double slope = 0;               // d mean-loss / d sigma^2
    double trace = 0;               // 2 * slope
    std::int64_t n_p = 0;           // perturbed scalar count
    double mean_eigenvalue = 0;     // trace / n_p
    std::int64_t excluded = 0;
    std::int64_t evaluated = 0;
};

// A loss functional over the perturbed parameter set; the factory hands each
// worker thread its own instance (workers may carry a private model clone).
template <typename T>
using LossEval = std::function<double(const std::vector<Tensor<T>>&)>;
template <typename T>
using LossEvalFactory = std::function<LossEval<T>(int thread_id)>;

namespace detail {

template <typename T>
void perturb_into(const std::vector<Tensor<T>>& theta0, std::vector<Tensor<T>>& out, double sigma,
                  Rng& rng) {
    std::normal_distribution<double> n(0.0, sigma);
    for (std::size_t t = 0; t < theta0.size(); ++t)
        for (std::int64_t i = 0; i < theta0[t].numel(); ++i)
            out[t][i] = T(double(theta0[t][i]) + n(rng));
}

} // namespace detail

// Mean loss per sigma over n independent N(0, sigma^2 I) perturbations of
// theta0, then an OLS fit of mean loss against sigma^2 with the intercept
// pinned at the measured baseline. Realizations are keyed by (seed, sigma
// index, realization index), so results are identical for any thread count.
template <typename T>
FlatnessReport estimate_flatness(const std::vector<Tensor<T>>& theta0,
                                 const LossEvalFactory<T>& factory,
                                 const PerturbationConfig& cfg) {
    cfg.validate();
    FlatnessReport rep;
    rep.sigma_grid = cfg.sigma_grid;
    for (const auto& t : theta0) rep.n_p += t.numel();
    if (theta0.empty() || rep.n_p == 0) throw Error("empty perturbation target set");

    LossEval<T> base_eval = factory(0);
    rep.baseline = base_eval(theta0);
    if (!std::isfinite(rep.baseline)) throw NumericError("baseline loss is not finite");

    const int n_threads =
        std::max(1, std::min<int>(cfg.threads, int(std::thread::hardware_concurrency())));
    const std::int64_t n = cfg.n_realizations;

    for (std::size_t si = 0; si < cfg.sigma_grid.size(); ++si) {
        const double sigma = cfg.sigma_grid[si];
        if (sigma == 0) {
            // deterministic loss_eval: every realization would equal baseline
            rep.mean_loss.push_back(rep.baseline);
            rep.std_err.push_back(0);
            rep.kept.push_back(n);
            continue;
        }
        std::vector<double> slot(static_cast<std::size_t>(n),
                                 std::numeric_limits<double>::quiet_NaN());
        auto worker = [&](int tid, const LossEval<T>& eval) {
            std::vector<Tensor<T>> theta;
            theta.reserve(theta0.size());
            for (const auto& t : theta0) theta.push_back(zeros_like(t));
            for (std::int64_t r = tid; r < n; r += n_threads) {
                Rng rng = make_rng(cfg.seed, std::uint64_t(si), std::uint64_t(r));
                detail::perturb_into(theta0, theta, sigma, rng);
                try {
                    slot[static_cast<std::size_t>(r)] = eval(theta);
                } catch (const NumericError&) {
                    // stays NaN, counted as excluded
                }
            }
        };
        if (n_threads == 1) {
            worker(0, base_eval);
        } else {
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errs(static_cast<std::size_t>(n_threads));
            for (int t = 0; t < n_threads; ++t)
                pool.emplace_back([&, t] {
                    try {
                        worker(t, t == 0 ? base_eval : factory(t));
                    } catch (...) {
                        errs[static_cast<std::size_t>(t)] = std::current_exception();
                    }
                });
            for (auto& th : pool) th.join();
            for (auto& e : errs)
                if (e) std::rethrow_exception(e);
        }
        double sum = 0, sq = 0;
        std::int64_t kept = 0;
        for (std::int64_t r = 0; r < n; ++r) {
            const double v = slot[static_cast<std::size_t>(r)];
            rep.evaluated++;
            if (std::isfinite(v)) {
                sum += v;
                sq += v * v;
                ++kept;
            } else {
                rep.excluded++;
            }
        }
        if (kept == 0)
            throw NumericError(detail::msg("every realization at sigma ", sigma, " diverged"));
        const double mean = sum / double(kept);
        const double var = std::max(0.0, sq / double(kept) - mean * mean);
        rep.mean_loss.push_back(mean);
        rep.std_err.push_back(kept > 1 ? std::sqrt(var / double(kept - 1)) : 0.0);
        rep.kept.push_back(kept);
    }
    if (rep.evaluated > 0 && double(rep.excluded) > 0.10 * double(rep.evaluated))
        throw NumericError(detail::msg("flatness run unusable: ", rep.excluded, " of ",
                                       rep.evaluated, " realizations diverged (> 10%)"));

    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < rep.sigma_grid.size(); ++i) {
        const double x = rep.sigma_grid[i] * rep.sigma_grid[i];
        sxx += x * x;
        sxy += x * (rep.mean_loss[i] - rep.baseline);
    }
    rep.slope = sxy / sxx;
    rep.trace = 2.0 * rep.slope;
    rep.mean_eigenvalue = rep.trace / double(rep.n_p);
    if (!std::isfinite(rep.trace)) throw NumericError("trace estimate is not finite");
    return rep;
}

template <typename T>
FlatnessReport estimate_flatness(const std::vector<Tensor<T>>& theta0, const LossEval<T>& eval,
                                 const PerturbationConfig& cfg) {
    return estimate_flatness<T>(theta0, LossEvalFactory<T>([&](int) { return eval; }), cfg);
}

// ---------------------------------------------------------------------------
// Automatic sigma grid
// ---------------------------------------------------------------------------

// 8 log-spaced points spanning the sigmas where the mean-loss increase is
// roughly 1% to 100% of the baseline, found by a short bracketing pre-pass
// (a handful of realizations per trial sigma, quadratic extrapolation).
template <typename T>
std::vector<double> auto_sigma_grid(const std::vector<Tensor<T>>& theta0,
                                    const LossEval<T>& eval, double baseline,
                                    std::uint64_t seed, std::int64_t grid_points = 8,
                                    std::int64_t probe_realizations = 8) {
    const double l0 = std::max(std::abs(baseline), 1e-12);
    const double lo_target = 0.01 * l0, hi_target = 1.0 * l0;

    std::vector<Tensor<T>> buf;
    for (const auto& t : theta0) buf.push_back(zeros_like(t));
    std::int64_t trial = 0;
    auto delta = [&](double sigma) {
        double sum = 0;
        std::int64_t kept = 0;
        for (std::int64_t r = 0; r < probe_realizations; ++r) {
            Rng rng = make_rng(seed, 0xb7acce7, std::uint64_t(trial), std::uint64_t(r));
            detail::perturb_into(theta0, buf, sigma, rng);
            try {
                const double v = eval(buf);
                if (std::isfinite(v)) {
                    sum += v;
                    ++kept;
                }
            } catch (const NumericError&) {
            }
        }
        ++trial;
        if (kept == 0) return std::numeric_limits<double>::infinity();
        return sum / double(kept) - baseline;
    };

    double sigma = 1e-3;
    double d = delta(sigma);
    int guard = 0;
    while (d < lo_target && guard++ < 80) {
        sigma *= 4;
        d = delta(sigma);
    }
    while ((!std::isfinite(d) || d > hi_target) && guard++ < 80) {
        sigma /= 4;
        d = delta(sigma);
    }
    if (guard >= 80 || !std::isfinite(d) || d <= 0)
        throw NumericError("auto sigma grid: could not bracket the loss increase");
    // local quadratic growth: delta ~ c * sigma^2
    double sigma_lo = sigma * std::sqrt(lo_target / d);
    double sigma_hi = sigma * std::sqrt(hi_target / d);
    std::vector<double> grid{0.0};
    for (std::int64_t i = 0; i < grid_points; ++i) {
        const double f = grid_points == 1 ? 0.0 : double(i) / double(grid_points - 1);
        grid.push_back(sigma_lo * std::pow(sigma_hi / sigma_lo, f));
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Model adapters
// ---------------------------------------------------------------------------

// Perturbs only convolutional filter tensors; the original model is untouched.
template <typename T>
Model<T> perturb_parameters(const Model<T>& m, double sigma, Rng& rng) {
    if (sigma < 0) throw ConfigError("sigma must be >= 0");
    Model<T> copy = clone_model(m);
    auto targets = conv_filter_entries(copy);
    if (targets.empty()) throw Error("empty perturbation target set");
    std::normal_distribution<double> n(0.0, sigma);
    if (sigma > 0)
        for (auto* e : targets) {
            Tensor<T>& v = e->var.mutable_value();
            for (std::int64_t i = 0; i < v.numel(); ++i) v[i] = T(double(v[i]) + n(rng));
        }
    return copy;
}

// Deterministic dataset loss in eval mode, averaged over fixed batches.
template <typename T>
double dataset_loss(Model<T>& m, const std::vector<std::pair<Tensor<T>, Tensor<T>>>& batches,
                    LossKind kind) {
    if (batches.empty()) throw DataError("no batches to evaluate");
    m.set_mode(Mode::eval);
    double sum = 0;
    for (const auto& [input, target] : batches) {
        Variable<T> out = forward(m, input);
        sum += double(compute_loss(kind, out, target).value()[0]);
    }
    return sum / double(batches.size());
}

template <typename T>
LossEvalFactory<T> model_loss_factory(const Model<T>& m,
                                      std::shared_ptr<std::vector<std::pair<Tensor<T>, Tensor<T>>>>
                                          batches,
                                      LossKind kind) {
    auto proto = std::make_shared<Model<T>>(clone_model(m));
    return LossEvalFactory<T>([proto, batches, kind](int) {
        auto work = std::make_shared<Model<T>>(clone_model(*proto));
        work->set_mode(Mode::eval);
        auto targets = std::make_shared<std::vector<ParamEntry<T>*>>(conv_filter_entries(*work));
        return LossEval<T>([work, targets, kind, batches](const std::vector<Tensor<T>>& theta) {
            if (theta.size() != targets->size()) throw Error("theta arity mismatch");
            for (std::size_t i = 0; i < theta.size(); ++i)
                (*targets)[i]->var.mutable_value() = theta[i];
            return dataset_loss(*work, *batches, kind);
        });
    });
}

template <typename T>
std::vector<Tensor<T>> conv_filter_values(Model<T>& m) {
    std::vector<Tensor<T>> out;
    for (auto* e : conv_filter_entries(m)) out.push_back(e->var.value());
    return out;
}

template <typename T>
FlatnessReport estimate_model_flatness(Model<T>& m,
                                       const std::vector<std::pair<Tensor<T>, Tensor<T>>>& batches,
                                       LossKind kind, PerturbationConfig cfg) {
    auto shared = std::make_shared<std::vector<std::pair<Tensor<T>, Tensor<T>>>>(batches);
    auto factory = model_loss_factory(m, shared, kind);
    std::vector<Tensor<T>> theta0 = conv_filter_values(m);
    if (cfg.sigma_grid.empty()) {
        LossEval<T> eval = factory(0);
        const double baseline = eval(theta0);
        cfg.sigma_grid = auto_sigma_grid<T>(theta0, eval, baseline, cfg.seed);
    }
    return estimate_flatness<T>(theta0, factory, cfg);
}

// ---------------------------------------------------------------------------
// Reports as CSV
// ---------------------------------------------------------------------------

inline std::string flatness_csv(const FlatnessReport& r) {
    std::string out;
    out += detail::msg("# baseline=", io::format_g(r.baseline), " slope=", io::format_g(r.slope),
                       " trace=", io::format_g(r.trace),
                       " mean_eigenvalue=", io::format_g(r.mean_eigenvalue), " n_p=", r.n_p,
                       " excluded=", r.excluded, "\n");
    out += "sigma,sigma_sq,mean_loss,std_err,kept\n";
    for (std::size_t i = 0; i < r.sigma_grid.size(); ++i)
        out += detail::msg(io::format_g(r.sigma_grid[i]), ",",
                           io::format_g(r.sigma_grid[i] * r.sigma_grid[i]), ",",
                           io::format_g(r.mean_loss[i]), ",", io::format_g(r.std_err[i]), ",",
                           r.kept[i], "\n");
    return out;
}

// q(t) = L(theta_0) + 1/2 * mean_eigenvalue * t^2
inline std::vector<std::pair<double, double>> quadratic_profile(const FlatnessReport& r,
                                                                double t_min, double t_max,
                                                                std::int64_t samples = 101) {
    if (samples < 2) throw ConfigError("need at least 2 profile samples");
    std::vector<std::pair<double, double>> out;
    for (std::int64_t i = 0; i < samples; ++i) {
        const double t = t_min + (t_max - t_min) * double(i) / double(samples - 1);
        out.emplace_back(t, r.baseline + 0.5 * r.mean_eigenvalue * t * t);
    }
    return out;
}

inline std::string quadratic_csv(const FlatnessReport& r, double t_min = -1.0, double t_max = 1.0,
                                 std::int64_t samples = 101) {
    std::string out = detail::msg("# q(t) = baseline + 0.5*mean_eigenvalue*t^2, t in [",
                                  io::format_g(t_min), ",", io::format_g(t_max), "]\n");
    out += "t,q\n";
    for (const auto& [t, q] : quadratic_profile(r, t_min, t_max, samples))
        out += detail::msg(io::format_g(t), ",", io::format_g(q), "\n");
    return out;
}

// ---------------------------------------------------------------------------
// Class activation maps
// ---------------------------------------------------------------------------

template <typename T>
struct CamResult {
    std::int64_t class_index = 0;
    Tensor<T> map;     // (H_f, W_f) weighted feature sum
    Tensor<T> overlay; // input resolution, min-max normalized to [0,1]
    double logit = 0;
    double residual = 0; // |mean(map) + bias - logit| / max(1, |logit|)
};

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& hw, std::int64_t out_h, std::int64_t out_w) {
    if (hw.rank() != 2) throw ShapeError("bilinear_upsample expects (H,W)");
    const std::int64_t H = hw.dim(0), W = hw.dim(1);
    Tensor<T> out(Shape{out_h, out_w});
    for (std::int64_t y = 0; y < out_h; ++y) {
        const double sy = (y + 0.5) * double(H) / double(out_h) - 0.5;
        const std::int64_t y1 = std::clamp<std::int64_t>(std::int64_t(std::floor(sy)), 0, H - 1);
        const std::int64_t y2 = std::min<std::int64_t>(y1 + 1, H - 1);
        const double fy = std::clamp(sy - double(y1), 0.0, 1.0);
        for (std::int64_t x = 0; x < out_w; ++x) {
            const double sx = (x + 0.5) * double(W) / double(out_w) - 0.5;
            const std::int64_t x1 =
                std::clamp<std::int64_t>(std::int64_t(std::floor(sx)), 0, W - 1);
            const std::int64_t x2 = std::min<std::int64_t>(x1 + 1, W - 1);
            const double fx = std::clamp(sx - double(x1), 0.0, 1.0);
            const double v = (1 - fy) * ((1 - fx) * hw[y1 * W + x1] + fx * hw[y1 * W + x2]) +
                             fy * ((1 - fx) * hw[y2 * W + x1] + fx * hw[y2 * W + x2]);
            out[y * out_w + x] = T(v);
        }
    }
    return out;
}

template <typename T>
CamResult<T> cam(Model<T>& m, const Tensor<T>& image_chw, std::int64_t class_index) {
    if (m.config.task != Task::classification || !m.fc_weight.defined())
        throw ConfigError("cam needs a classification model with a global-avg + linear head");
    if (class_index < 0 || class_index >= m.config.classes)
        throw ConfigError(detail::msg("class index ", class_index, " out of range"));
    if (image_chw.rank() != 3) throw ShapeError("cam expects a (C,H,W) image");
    m.set_mode(Mode::eval);
    Rng rng = make_rng(0);
    Tensor<T> batch = stack_batch<T>({image_chw});
    ForwardResult<T> fr = forward_with_features(m, batch, rng);
    const Tensor<T>& f = fr.features.value(); // (1, C, Hf, Wf)
    const std::int64_t C = f.dim(1), Hf = f.dim(2), Wf = f.dim(3);

    CamResult<T> r;
    r.class_index = class_index;
    r.map = Tensor<T>(Shape{Hf, Wf}, T(0));
    for (std::int64_t c = 0; c < C; ++c) {
        const T w = m.fc_weight.value()[class_index * C + c];
        for (std::int64_t i = 0; i < Hf * Wf; ++i) r.map[i] += w * f[c * Hf * Wf + i];
    }
    r.logit = double(fr.out.value()[class_index]);
    double mean = 0;
    for (std::int64_t i = 0; i < Hf * Wf; ++i) mean += double(r.map[i]);
    mean /= double(Hf * Wf);
    const double recon = mean + double(m.fc_bias.value()[class_index]);
    r.residual = std::abs(recon - r.logit) / std::max(1.0, std::abs(r.logit));

    r.overlay = bilinear_upsample(r.map, image_chw.dim(1), image_chw.dim(2));
    T lo = r.overlay[0], hi = r.overlay[0];
    for (std::int64_t i = 0; i < r.overlay.numel(); ++i) {
        lo = std::min(lo, r.overlay[i]);
        hi = std::max(hi, r.overlay[i]);
    }
    if (hi > lo)
        for (std::int64_t i = 0; i < r.overlay.numel(); ++i)
            r.overlay[i] = (r.overlay[i] - lo) / (hi - lo);
    else
        r.overlay.fill(T(0));
    return r;
}

template <typename T>
std::string cam_csv(const CamResult<T>& r) {
    std::string out = detail::msg("# class=", r.class_index, " logit=", io::format_g(r.logit),
                                  " residual=", io::format_g(r.residual), "\n");
    out += "y,x,value\n";
    const std::int64_t H = r.map.dim(0), W = r.map.dim(1);
    for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x)
            out += detail::msg(y, ",", x, ",", io::format_g(double(r.map[y * W + x])), "\n");
    return out;
}

// ---------------------------------------------------------------------------
// Quadratic oracle fixture (also wired into the CLI probe verb)
// ---------------------------------------------------------------------------

// L(theta) = 1 + 1/2 * sum_i diag_i * theta_i^2, minimized at theta = 0 with
// Hessian diag(diag) and trace sum(diag).
template <typename T>
struct QuadraticFixture {
    std::vector<Tensor<T>> theta0;
    LossEval<T> eval;
    double trace = 0;
};

template <typename T>
QuadraticFixture<T> make_quadratic_fixture(const std::vector<double>& diag) {
    if (diag.empty()) throw ConfigError("quadratic fixture needs at least one coefficient");
    QuadraticFixture<T> f;
    f.theta0 = {Tensor<T>(Shape{std::int64_t(diag.size())}, T(0))};
    for (double d : diag) f.trace += d;
    f.eval = [diag](const std::vector<Tensor<T>>& theta) {
        double l = 1.0;
        for (std::size_t i = 0; i < diag.size(); ++i) {
            const double t = double(theta[0][std::int64_t(i)]);
            l += 0.5 * diag[i] * t * t;
        }
        return l;
    };
    return f;
}

} // namespace dxnet
