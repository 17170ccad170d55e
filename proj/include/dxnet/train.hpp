// Optimizers, learning-rate schedules, metrics, and the training loop with
// the three task recipes (classification, denoising, super-resolution).
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dxnet/checkpoint.hpp"
#include "dxnet/model.hpp"

namespace dxnet {

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class OptKind { sgd_nesterov, adam };

struct OptimizerConfig {
    OptKind kind = OptKind::sgd_nesterov;
    double lr = 0.1;
    double weight_decay = 0.0; // conv/linear weights only
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
        if (cfg.lr < 0) throw ConfigError("learning rate must be non-negative");
    }

    double lr() const { return cfg_.lr; }
    void set_lr(double lr) {
        if (lr < 0) throw ConfigError("learning rate must be non-negative");
        cfg_.lr = lr;
    }
    const OptimizerConfig& config() const { return cfg_; }

    // One update over every parameter in the store. All gradients are checked
    // before any parameter is touched, so a bad step mutates nothing.
    void step(ParamStore<T>& store) {
        if (m1_.empty()) init_buffers(store);
        for (const auto& e : store.entries) {
            if (!e.var.has_grad())
                throw Error(detail::msg("missing gradient for '", e.name, "'"));
            if (!e.var.grad().all_finite())
                throw NumericError(detail::msg("non-finite gradient for '", e.name, "'"));
        }
        ++step_count_;
        for (std::size_t i = 0; i < store.entries.size(); ++i) {
            auto& e = store.entries[i];
            const bool decay = e.kind == ParamKind::conv_weight ||
                               e.kind == ParamKind::linear_weight;
            const T wd = decay ? T(cfg_.weight_decay) : T(0);
            Tensor<T>& theta = e.var.mutable_value();
            const Tensor<T>& g = e.var.grad();
            const std::int64_t n = theta.numel();
            if (cfg_.kind == OptKind::sgd_nesterov) {
                Tensor<T>& vel = m1_[i];
                const T mu = T(cfg_.momentum), lr = T(cfg_.lr);
                for (std::int64_t j = 0; j < n; ++j) {
                    const T gt = g[j] + wd * theta[j];
                    vel[j] = mu * vel[j] + gt;
                    theta[j] -= lr * (gt + mu * vel[j]);
                }
            } else {
                Tensor<T>& m = m1_[i];
                Tensor<T>& v = m2_[i];
                const T b1 = T(cfg_.beta1), b2 = T(cfg_.beta2), eps = T(cfg_.epsilon);
                const T c1 = T(1.0 - std::pow(cfg_.beta1, double(step_count_)));
                const T c2 = T(1.0 - std::pow(cfg_.beta2, double(step_count_)));
                const T lr = T(cfg_.lr);
                for (std::int64_t j = 0; j < n; ++j) {
                    const T gt = g[j] + wd * theta[j];
                    m[j] = b1 * m[j] + (T(1) - b1) * gt;
                    v[j] = b2 * v[j] + (T(1) - b2) * gt * gt;
                    theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
                }
            }
        }
    }

    std::vector<CkptEntry> export_state(const ParamStore<T>& store) const {
        std::vector<CkptEntry> out;
        out.push_back(make_i64_entry("opt.step_count", step_count_));
        for (std::size_t i = 0; i < store.entries.size(); ++i) {
            const std::string& n = store.entries[i].name;
            if (cfg_.kind == OptKind::sgd_nesterov) {
                out.push_back(make_entry("opt.vel." + n, m1_[i]));
            } else {
                out.push_back(make_entry("opt.m." + n, m1_[i]));
                out.push_back(make_entry("opt.v." + n, m2_[i]));
            }
        }
        return out;
    }

    void import_state(const ParamStore<T>& store, const std::vector<CkptEntry>& entries) {
        init_buffers(store);
        auto find = [&](const std::string& name) -> const CkptEntry& {
            for (const auto& e : entries)
                if (e.name == name) return e;
            throw DataError(detail::msg("missing optimizer state '", name, "'"));
        };
        step_count_ = entry_to_i64(find("opt.step_count"));
        for (std::size_t i = 0; i < store.entries.size(); ++i) {
            const std::string& n = store.entries[i].name;
            if (cfg_.kind == OptKind::sgd_nesterov) {
                m1_[i] = entry_to_tensor<T>(find("opt.vel." + n));
            } else {
                m1_[i] = entry_to_tensor<T>(find("opt.m." + n));
                m2_[i] = entry_to_tensor<T>(find("opt.v." + n));
            }
        }
    }

    std::int64_t moment_scalar_count() const {
        std::int64_t n = 0;
        for (const auto& t : m1_) n += t.numel();
        for (const auto& t : m2_) n += t.numel();
        return n;
    }

private:
    void init_buffers(const ParamStore<T>& store) {
        m1_.clear();
        m2_.clear();
        for (const auto& e : store.entries) {
            m1_.push_back(zeros_like(e.var.value()));
            if (cfg_.kind == OptKind::adam) m2_.push_back(zeros_like(e.var.value()));
        }
    }

    OptimizerConfig cfg_;
    std::int64_t step_count_ = 0;
    std::vector<Tensor<T>> m1_; // velocity (sgd) or first moment (adam)
    std::vector<Tensor<T>> m2_; // second moment (adam)
};

// ---------------------------------------------------------------------------
// Learning-rate schedules
// ---------------------------------------------------------------------------

enum class SchedKind { none, plateau, milestones };

struct LrSchedule {
    SchedKind kind = SchedKind::none;
    double factor = 2.0;
    // plateau
    std::int64_t patience = 10;
    double rel_threshold = 1e-4;
    double min_lr_ratio = 1e-4; // floor = ratio * initial lr
    // milestones, as fractions of the total epoch count
    std::vector<double> fractions;

    // plateau state
    double best = std::numeric_limits<double>::infinity();
    std::int64_t epochs_since_best = 0;

    void validate() const {
        if (kind == SchedKind::none) return;
        if (factor <= 1) throw ConfigError("schedule factor must be > 1");
        if (kind == SchedKind::milestones) {
            double prev = 0;
            for (double f : fractions) {
                if (f <= prev || f >= 1)
                    throw ConfigError("milestone fractions must be strictly increasing in (0,1)");
                prev = f;
            }
        }
    }

    // Milestones: lr for a given (0-based) epoch, computed statelessly.
    double milestone_lr(std::int64_t epoch, std::int64_t total_epochs, double initial_lr) const {
        double lr = initial_lr;
        for (double f : fractions)
            if (epoch >= std::int64_t(f * double(total_epochs))) lr /= factor;
        return lr;
    }

    // Plateau: feed the lower-is-better validation metric after each epoch.
    double plateau_step(double metric, double current_lr, double initial_lr) {
        const double margin = rel_threshold * std::max(std::abs(best), 1e-12);
        if (metric < best - margin || !std::isfinite(best)) {
            best = metric;
            epochs_since_best = 0;
            return current_lr;
        }
        if (++epochs_since_best >= patience) {
            epochs_since_best = 0;
            return std::max(current_lr / factor, initial_lr * min_lr_ratio);
        }
        return current_lr;
    }
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Identical inputs report the 300 dB sentinel so aggregates stay finite.
constexpr double psnr_identical_db = 300.0;

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0,
            std::int64_t border_crop = 0, bool luma_only = false) {
    if (!a.same_shape(b))
        throw ShapeError(detail::msg("psnr shape mismatch: ", shape_str(a.shape()), " vs ",
                                     shape_str(b.shape())));
    if (a.rank() != 3) throw ShapeError("psnr expects (C,H,W) tensors");
    if (peak <= 0) throw ConfigError("psnr peak must be positive");
    const std::int64_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
    const std::int64_t y0 = border_crop, y1 = H - border_crop;
    const std::int64_t x0 = border_crop, x1 = W - border_crop;
    if (y0 >= y1 || x0 >= x1)
        throw Error(detail::msg("psnr crop ", border_crop, " empties a ", H, "x", W, " image"));
    double mse = 0;
    std::int64_t count = 0;
    if (luma_only) {
        if (C != 3 && C != 1) throw ShapeError("luma psnr expects 1 or 3 channels");
        const double wr = 0.299, wg = 0.587, wb = 0.114;
        for (std::int64_t y = y0; y < y1; ++y)
            for (std::int64_t x = x0; x < x1; ++x) {
                double la, lb;
                if (C == 3) {
                    la = wr * a[(0 * H + y) * W + x] + wg * a[(1 * H + y) * W + x] +
                         wb * a[(2 * H + y) * W + x];
                    lb = wr * b[(0 * H + y) * W + x] + wg * b[(1 * H + y) * W + x] +
                         wb * b[(2 * H + y) * W + x];
                } else {
                    la = a[y * W + x];
                    lb = b[y * W + x];
                }
                mse += (la - lb) * (la - lb);
                ++count;
            }
    } else {
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t y = y0; y < y1; ++y)
                for (std::int64_t x = x0; x < x1; ++x) {
                    const double d =
                        double(a[(c * H + y) * W + x]) - double(b[(c * H + y) * W + x]);
                    mse += d * d;
                    ++count;
                }
    }
    mse /= double(count);
    if (mse == 0) return psnr_identical_db;
    return 10.0 * std::log10(peak * peak / mse);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

template <typename T>
double evaluate_classifier(Model<T>& m, const std::vector<ImageSample<T>>& samples,
                           const ChannelStats& stats, std::int64_t batch_size = 64) {
    if (samples.empty()) throw DataError("cannot evaluate on an empty dataset");
    m.set_mode(Mode::eval);
    std::int64_t wrong = 0;
    for (std::size_t at = 0; at < samples.size();) {
        std::vector<Tensor<T>> imgs;
        std::vector<std::int64_t> labels;
        while (at < samples.size() && std::int64_t(imgs.size()) < batch_size) {
            imgs.push_back(normalize_channels(samples[at].pixels, stats.mean, stats.stddev));
            labels.push_back(samples[at].label);
            ++at;
        }
        Variable<T> logits = forward(m, stack_batch(imgs));
        const std::int64_t K = logits.value().dim(1);
        for (std::size_t i = 0; i < imgs.size(); ++i) {
            std::int64_t arg = 0;
            for (std::int64_t k = 1; k < K; ++k)
                if (logits.value()[std::int64_t(i) * K + k] >
                    logits.value()[std::int64_t(i) * K + arg])
                    arg = k;
            if (arg != labels[i]) ++wrong;
        }
    }
    return 100.0 * double(wrong) / double(samples.size());
}

// pairs: (clean, noisy); returns mean PSNR of the denoised outputs.
template <typename T>
double evaluate_denoiser(Model<T>& m,
                         const std::vector<std::pair<Tensor<T>, Tensor<T>>>& pairs) {
    if (pairs.empty()) throw DataError("cannot evaluate on an empty dataset");
    m.set_mode(Mode::eval);
    double sum = 0;
    for (const auto& [clean, noisy] : pairs) {
        Tensor<T> batch = stack_batch<T>({noisy});
        Tensor<T> out = denoise(m, batch);
        sum += psnr(out.reshaped(clean.shape()), clean, 1.0, 0, false);
    }
    return sum / double(pairs.size());
}

// pairs: (hr, lr); PSNR on luma with a 4-pixel border crop.
template <typename T>
double evaluate_sr(Model<T>& m, const std::vector<std::pair<Tensor<T>, Tensor<T>>>& pairs) {
    if (pairs.empty()) throw DataError("cannot evaluate on an empty dataset");
    m.set_mode(Mode::eval);
    double sum = 0;
    for (const auto& [hr, lr] : pairs) {
        Variable<T> out = forward(m, stack_batch<T>({lr}));
        sum += psnr(out.value().reshaped(hr.shape()), hr, 1.0, 4, true);
    }
    return sum / double(pairs.size());
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::int64_t epochs = 1;
    std::int64_t batch_size = 1;
    LossKind loss = LossKind::mse;
    std::uint64_t seed = 0;
    std::int64_t eval_every = 1;
    OptimizerConfig opt;
    LrSchedule sched;
    std::string out_dir; // when set: history.csv + model.dxnt after each eval
};

struct HistoryRow {
    std::int64_t epoch;
    double train_loss;
    double val_metric; // task display metric (error % or PSNR dB)
    double lr;
};

struct TrainResult {
    std::vector<HistoryRow> history;
    bool diverged = false;
    std::int64_t epochs_run = 0;
    double final_val = 0;
};

struct ValResult {
    double display;      // what lands in history.csv
    double lower_better; // what drives the plateau schedule
};

template <typename T>
struct TrainHooks {
    // Batches for one epoch: (input NCHW, loss target).
    std::function<std::vector<std::pair<Tensor<T>, Tensor<T>>>(std::int64_t epoch, Rng&)>
        make_batches;
    std::function<ValResult(Model<T>&)> validate;
};

inline std::string history_csv(const std::vector<HistoryRow>& rows) {
    std::string out = "epoch,train_loss,val_metric,lr\n";
    for (const auto& r : rows)
        out += detail::msg(r.epoch, ",", io::format_g(r.train_loss), ",",
                           io::format_g(r.val_metric), ",", io::format_g(r.lr), "\n");
    return out;
}

template <typename T>
TrainResult train(Model<T>& model, const TrainHooks<T>& hooks, TrainConfig cfg) {
    cfg.sched.validate();
    Optimizer<T> opt(cfg.opt);
    const double initial_lr = cfg.opt.lr;
    TrainResult res;
    const bool emit = !cfg.out_dir.empty();

    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.sched.kind == SchedKind::milestones)
            opt.set_lr(cfg.sched.milestone_lr(epoch, cfg.epochs, initial_lr));
        const double lr_used = opt.lr();

        model.set_mode(Mode::train);
        Rng rng = make_rng(cfg.seed, 1, std::uint64_t(epoch));
        double loss_sum = 0;
        std::int64_t n_batches = 0;
        try {
            auto batches = hooks.make_batches(epoch, rng);
            for (auto& [input, target] : batches) {
                Variable<T> out = forward(model, input, rng);
                Variable<T> loss = compute_loss(cfg.loss, out, target);
                if (!std::isfinite(double(loss.value()[0])))
                    throw NumericError("non-finite training loss");
                backward(loss);
                opt.step(model.store);
                for (auto& e : model.store.entries) e.var.zero_grad();
                loss_sum += double(loss.value()[0]);
                ++n_batches;
            }
        } catch (const NumericError&) {
            res.diverged = true;
            break;
        }
        const double train_loss = n_batches ? loss_sum / double(n_batches) : 0.0;

        double display = res.history.empty() ? 0.0 : res.history.back().val_metric;
        const bool do_eval = (epoch % cfg.eval_every == 0) || epoch == cfg.epochs - 1;
        if (do_eval) {
            ValResult v = hooks.validate(model);
            display = v.display;
            if (cfg.sched.kind == SchedKind::plateau)
                opt.set_lr(cfg.sched.plateau_step(v.lower_better, opt.lr(), initial_lr));
        }
        res.history.push_back({epoch, train_loss, display, lr_used});
        res.epochs_run = epoch + 1;
        res.final_val = display;

        if (emit && do_eval) {
            io::write_text_file(cfg.out_dir + "/history.csv", history_csv(res.history));
            std::vector<CkptEntry> ts;
            ts.push_back(make_i64_entry("train.epoch", epoch));
            ts.push_back(make_f64_entry("train.lr", opt.lr()));
            ts.push_back(make_f64_entry("sched.best", cfg.sched.best));
            ts.push_back(make_i64_entry("sched.epochs_since_best", cfg.sched.epochs_since_best));
            auto os = opt.export_state(model.store);
            ts.insert(ts.end(), os.begin(), os.end());
            save_checkpoint(model, cfg.out_dir + "/model.dxnt", ts);
        }
    }
    if (emit) io::write_text_file(cfg.out_dir + "/history.csv", history_csv(res.history));
    return res;
}

// ---------------------------------------------------------------------------
// Task hook builders
// ---------------------------------------------------------------------------

// Classification: per-epoch shuffle, augmentation per the CIFAR policy,
// validation = top-1 error on the held-out set.
template <typename T>
TrainHooks<T> classification_hooks(std::vector<ImageSample<T>> train,
                                   std::vector<ImageSample<T>> val, ChannelStats stats,
                                   AugmentPolicy policy, std::int64_t batch_size) {
    TrainHooks<T> h;
    auto train_ptr = std::make_shared<std::vector<ImageSample<T>>>(std::move(train));
    auto val_ptr = std::make_shared<std::vector<ImageSample<T>>>(std::move(val));
    h.make_batches = [train_ptr, stats, policy, batch_size](std::int64_t, Rng& rng) {
        std::vector<std::size_t> order(train_ptr->size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<std::pair<Tensor<T>, Tensor<T>>> batches;
        for (std::size_t at = 0; at < order.size();) {
            std::vector<Tensor<T>> imgs;
            std::vector<T> labels;
            while (at < order.size() && std::int64_t(imgs.size()) < batch_size) {
                const auto& s = (*train_ptr)[order[at]];
                imgs.push_back(augment_sample(s.pixels, policy, rng));
                labels.push_back(T(s.label));
                ++at;
            }
            batches.emplace_back(stack_batch(imgs),
                                 Tensor<T>(Shape{std::int64_t(labels.size())}, labels));
        }
        return batches;
    };
    h.validate = [val_ptr, stats](Model<T>& m) {
        const double err = evaluate_classifier(m, *val_ptr, stats);
        return ValResult{err, err};
    };
    return h;
}

// Denoising: random clean patches each epoch with fresh noise; the target is
// the injected noise itself (residual learning). Validation pairs are fixed.
template <typename T>
TrainHooks<T> denoising_hooks(std::vector<Tensor<T>> clean_train, double sigma_255,
                              std::int64_t patch, std::int64_t patches_per_epoch,
                              std::vector<std::pair<Tensor<T>, Tensor<T>>> val_pairs,
                              std::int64_t batch_size, bool rotations = true) {
    TrainHooks<T> h;
    auto imgs = std::make_shared<std::vector<Tensor<T>>>(std::move(clean_train));
    auto val = std::make_shared<std::vector<std::pair<Tensor<T>, Tensor<T>>>>(std::move(val_pairs));
    h.make_batches = [imgs, sigma_255, patch, patches_per_epoch, batch_size,
                      rotations](std::int64_t, Rng& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, imgs->size() - 1);
        std::uniform_int_distribution<int> rot(0, 3);
        std::vector<std::pair<Tensor<T>, Tensor<T>>> batches;
        for (std::int64_t at = 0; at < patches_per_epoch;) {
            std::vector<Tensor<T>> noisy, noise;
            while (at < patches_per_epoch && std::int64_t(noisy.size()) < batch_size) {
                Tensor<T> p = extract_random_patches((*imgs)[pick(rng)], 1, patch, rng)[0];
                if (rotations) p = rotate90(p, rot(rng));
                Tensor<T> y = add_awgn(p, sigma_255, rng);
                Tensor<T> n(p.shape());
                for (std::int64_t i = 0; i < n.numel(); ++i) n[i] = y[i] - p[i];
                noisy.push_back(std::move(y));
                noise.push_back(std::move(n));
                ++at;
            }
            batches.emplace_back(stack_batch(noisy), stack_batch(noise));
        }
        return batches;
    };
    h.validate = [val](Model<T>& m) {
        const double db = evaluate_denoiser(m, *val);
        return ValResult{db, -db};
    };
    return h;
}

// Super-resolution: HR patches (multiple of scale) with 90-degree rotations,
// LR inputs synthesized by bicubic downscale. Validation pairs are fixed.
template <typename T>
TrainHooks<T> sr_hooks(std::vector<Tensor<T>> hr_train, std::int64_t scale, std::int64_t hr_patch,
                       std::int64_t patches_per_epoch,
                       std::vector<std::pair<Tensor<T>, Tensor<T>>> val_pairs,
                       std::int64_t batch_size) {
    if (hr_patch % scale != 0) throw ConfigError("hr patch size must be a multiple of scale");
    TrainHooks<T> h;
    auto imgs = std::make_shared<std::vector<Tensor<T>>>(std::move(hr_train));
    auto val = std::make_shared<std::vector<std::pair<Tensor<T>, Tensor<T>>>>(std::move(val_pairs));
    h.make_batches = [imgs, scale, hr_patch, patches_per_epoch, batch_size](std::int64_t,
                                                                            Rng& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, imgs->size() - 1);
        std::uniform_int_distribution<int> rot(0, 3);
        std::vector<std::pair<Tensor<T>, Tensor<T>>> batches;
        for (std::int64_t at = 0; at < patches_per_epoch;) {
            std::vector<Tensor<T>> lr, hr;
            while (at < patches_per_epoch && std::int64_t(lr.size()) < batch_size) {
                Tensor<T> p = extract_random_patches((*imgs)[pick(rng)], 1, hr_patch, rng)[0];
                p = rotate90(p, rot(rng));
                lr.push_back(bicubic_resize(p, hr_patch / scale, hr_patch / scale));
                hr.push_back(std::move(p));
                ++at;
            }
            batches.emplace_back(stack_batch(lr), stack_batch(hr));
        }
        return batches;
    };
    h.validate = [val](Model<T>& m) {
        const double db = evaluate_sr(m, *val);
        return ValResult{db, -db};
    };
    return h;
}

// ---------------------------------------------------------------------------
// Recipes
// ---------------------------------------------------------------------------

// Defaults per task; callers scale epochs/batch down for desk-size runs.
inline TrainConfig recipe_defaults(Task task) {
    TrainConfig c;
    switch (task) {
        case Task::classification:
            c.epochs = 200;
            c.batch_size = 128;
            c.loss = LossKind::softmax_ce;
            c.opt = {OptKind::sgd_nesterov, 0.1, 5e-4, 0.9, 0.9, 0.999, 1e-8};
            c.sched.kind = SchedKind::plateau;
            c.sched.factor = 2.0;
            break;
        case Task::denoising:
            c.epochs = 5000;
            c.batch_size = 32;
            c.loss = LossKind::mse;
            c.opt = {OptKind::adam, 1e-3, 0.0, 0.9, 0.9, 0.999, 1e-8};
            c.sched.kind = SchedKind::milestones;
            c.sched.factor = 5.0;
            c.sched.fractions = {0.10, 0.25, 0.75, 0.90};
            break;
        case Task::super_resolution:
            c.epochs = 6000;
            c.batch_size = 16;
            c.loss = LossKind::mae;
            c.opt = {OptKind::adam, 1e-4, 0.0, 0.9, 0.9, 0.999, 1e-8};
            c.sched.kind = SchedKind::milestones;
            c.sched.factor = 10.0;
            c.sched.fractions = {0.5};
            break;
    }
    return c;
}

} // namespace dxnet
