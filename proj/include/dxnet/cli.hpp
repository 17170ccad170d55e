// Command-line surface: train / eval / count / probe / cam / denoise /
// sr-infer. Every run writes a manifest (resolved config, seed, argv) to its
// output directory. Exit codes: 0 ok, 2 usage, 3 config error, 4 data error,
// 5 numeric error or divergence, 1 anything else.
#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dxnet/checkpoint.hpp"
#include "dxnet/probe.hpp"
#include "dxnet/train.hpp"

namespace dxnet {
namespace cli {

namespace fs = std::filesystem;

struct Options {
    std::string config_path;
    std::vector<std::string> sets;
    std::string data;
    std::string val_data;
    std::string checkpoint;
    std::string input;
    std::string output = "out";
    std::string ref;
    std::string dtype = "f32";
    std::string sigmas = "auto";
    std::string fixture;
    std::string count_mode = "full";
    std::uint64_t seed = 0;
    int threads = 1;
    std::int64_t epochs = -1;
    std::int64_t batch = -1;
    double lr = -1;
    double noise_sigma = 50.0;
    std::int64_t patch = -1;
    std::int64_t patches = -1;
    std::int64_t eval_every = 1;
    std::int64_t n_realizations = 1000;
    std::int64_t probe_samples = 64;
    std::int64_t class_index = 0;
};

inline std::string join_argv(const std::vector<std::string>& args) {
    std::string out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) out += ' ';
        const bool quote = args[i].find(' ') != std::string::npos;
        if (quote) out += '"';
        out += args[i];
        if (quote) out += '"';
    }
    return out;
}

inline void write_manifest(const std::string& dir, const std::string& verb, std::uint64_t seed,
                           const std::vector<std::string>& argv, const NetConfig* cfg) {
    fs::create_directories(dir);
    std::string m;
    m += detail::msg("dxnet_version=", DXNET_VERSION, "\n");
    m += detail::msg("verb=", verb, "\n");
    m += detail::msg("seed=", seed, "\n");
    m += detail::msg("argv=", join_argv(argv), "\n");
    if (cfg) {
        std::istringstream lines(serialize_config(*cfg));
        std::string line;
        while (std::getline(lines, line)) {
            auto eq = line.find(" = ");
            if (eq != std::string::npos)
                m += detail::msg("config.", line.substr(0, eq), "=", line.substr(eq + 3), "\n");
        }
    }
    io::write_text_file(dir + "/manifest.txt", m);
}

inline NetConfig resolve_config(const Options& o) {
    NetConfig cfg = o.config_path.empty() ? NetConfig{} : load_config(o.config_path);
    for (const auto& s : o.sets) config_set(cfg, s);
    cfg.validate();
    return cfg;
}

inline std::vector<std::string> list_image_files(const std::string& dir) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) throw DataError(detail::msg("'", dir, "' is not a directory"));
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw DataError(detail::msg("no .pgm/.ppm images under '", dir, "'"));
    return out;
}

template <typename T>
std::vector<Tensor<T>> load_images(const std::vector<std::string>& paths) {
    std::vector<Tensor<T>> out;
    for (const auto& p : paths) out.push_back(read_pnm<T>(p).pixels);
    return out;
}

// train/ and val/ subfolders when present, 90/10 split of the listing
// otherwise (every 10th file held out).
template <typename T>
void load_restoration_images(const std::string& root, std::vector<Tensor<T>>& train,
                             std::vector<Tensor<T>>& val) {
    if (fs::is_directory(root + "/train")) {
        train = load_images<T>(list_image_files(root + "/train"));
        if (fs::is_directory(root + "/val"))
            val = load_images<T>(list_image_files(root + "/val"));
    } else {
        const auto files = list_image_files(root);
        std::vector<std::string> tr, va;
        for (std::size_t i = 0; i < files.size(); ++i)
            (files.size() > 1 && i % 10 == 9 ? va : tr).push_back(files[i]);
        train = load_images<T>(tr);
        val = load_images<T>(va);
    }
    if (val.empty()) val = train; // degenerate tiny datasets
}

inline std::vector<double> parse_sigma_list(const std::string& s) {
    if (s == "auto") return {};
    std::vector<double> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (cur.empty()) throw ConfigError("bad --sigmas list");
            out.push_back(std::stod(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (out.empty() || out.front() != 0) out.insert(out.begin(), 0.0);
    std::sort(out.begin(), out.end());
    return out;
}

// Crops (C,H,W) so both dims are multiples of `mult`.
template <typename T>
Tensor<T> crop_to_multiple(const Tensor<T>& img, std::int64_t mult) {
    const std::int64_t h = (img.dim(1) / mult) * mult, w = (img.dim(2) / mult) * mult;
    if (h == 0 || w == 0)
        throw DataError(detail::msg("image ", shape_str(img.shape()), " smaller than ", mult));
    if (h == img.dim(1) && w == img.dim(2)) return img;
    return crop(img, 0, 0, h, w);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

template <typename T>
int run_train(const Options& o, const std::vector<std::string>& argv) {
    NetConfig cfg = resolve_config(o);
    write_manifest(o.output, "train", o.seed, argv, &cfg);

    TrainConfig tc = recipe_defaults(cfg.task);
    if (o.epochs > 0) tc.epochs = o.epochs;
    if (o.batch > 0) tc.batch_size = o.batch;
    if (o.lr > 0) tc.opt.lr = o.lr;
    tc.seed = o.seed;
    tc.eval_every = o.eval_every;
    tc.out_dir = o.output;

    Rng build_rng = make_rng(o.seed);
    Model<T> model = build_model<T>(cfg, build_rng);
    std::cout << "parameters: " << param_count_full(model) << "\n";

    TrainHooks<T> hooks;
    switch (cfg.task) {
        case Task::classification: {
            auto samples = load_cifar10<T>(o.data);
            std::vector<ImageSample<T>> val;
            if (!o.val_data.empty()) {
                val = load_cifar10<T>(o.val_data);
            } else {
                Rng srng = make_rng(o.seed, 4);
                std::shuffle(samples.begin(), samples.end(), srng);
                const std::size_t n_val = std::max<std::size_t>(1, samples.size() / 10);
                val.assign(samples.end() - std::ptrdiff_t(n_val), samples.end());
                samples.resize(samples.size() - n_val);
            }
            ChannelStats stats = channel_stats_cached(o.data, samples);
            AugmentPolicy policy = cifar_policy(stats.mean, stats.stddev);
            hooks = classification_hooks<T>(std::move(samples), std::move(val), stats, policy,
                                            tc.batch_size);
            break;
        }
        case Task::denoising: {
            std::vector<Tensor<T>> train_imgs, val_imgs;
            load_restoration_images<T>(o.data, train_imgs, val_imgs);
            std::vector<std::pair<Tensor<T>, Tensor<T>>> val_pairs;
            for (std::size_t i = 0; i < val_imgs.size(); ++i) {
                Rng nrng = make_rng(o.seed, 2, i);
                val_pairs.emplace_back(val_imgs[i],
                                       add_awgn(val_imgs[i], o.noise_sigma, nrng));
            }
            const std::int64_t patch = o.patch > 0 ? o.patch : 40;
            const std::int64_t per_epoch = o.patches > 0 ? o.patches : 8 * tc.batch_size;
            hooks = denoising_hooks<T>(std::move(train_imgs), o.noise_sigma, patch, per_epoch,
                                       std::move(val_pairs), tc.batch_size);
            break;
        }
        case Task::super_resolution: {
            std::vector<Tensor<T>> train_imgs, val_imgs;
            load_restoration_images<T>(o.data, train_imgs, val_imgs);
            std::vector<std::pair<Tensor<T>, Tensor<T>>> val_pairs;
            for (auto& img : val_imgs) {
                Tensor<T> hr = crop_to_multiple(img, cfg.scale);
                Tensor<T> lr = bicubic_resize(hr, hr.dim(1) / cfg.scale, hr.dim(2) / cfg.scale);
                val_pairs.emplace_back(std::move(hr), std::move(lr));
            }
            const std::int64_t patch = o.patch > 0 ? o.patch : 48;
            const std::int64_t per_epoch = o.patches > 0 ? o.patches : 8 * tc.batch_size;
            hooks = sr_hooks<T>(std::move(train_imgs), cfg.scale, patch, per_epoch,
                                std::move(val_pairs), tc.batch_size);
            break;
        }
    }

    TrainResult res = train(model, hooks, tc);
    if (res.diverged) {
        std::cerr << "training diverged after " << res.epochs_run
                  << " epochs; last good checkpoint retained\n";
        return 5;
    }
    std::cout << "epochs: " << res.epochs_run << "\nfinal val metric: "
              << io::format_g(res.final_val) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

template <typename T>
int run_eval(const Options& o, const std::vector<std::string>& argv) {
    auto loaded = load_checkpoint<T>(o.checkpoint);
    Model<T>& m = loaded.model;
    write_manifest(o.output, "eval", o.seed, argv, &m.config);
    double metric = 0;
    switch (m.config.task) {
        case Task::classification: {
            auto samples = load_cifar10<T>(o.data);
            ChannelStats stats = channel_stats_cached(o.data, samples);
            metric = evaluate_classifier(m, samples, stats);
            std::cout << "top1_error_percent: " << io::format_g(metric) << "\n";
            break;
        }
        case Task::denoising: {
            std::vector<Tensor<T>> tr, va;
            load_restoration_images<T>(o.data, tr, va);
            std::vector<std::pair<Tensor<T>, Tensor<T>>> pairs;
            for (std::size_t i = 0; i < va.size(); ++i) {
                Rng nrng = make_rng(o.seed, 2, i);
                pairs.emplace_back(va[i], add_awgn(va[i], o.noise_sigma, nrng));
            }
            metric = evaluate_denoiser(m, pairs);
            std::cout << "mean_psnr_db: " << io::format_g(metric) << "\n";
            break;
        }
        case Task::super_resolution: {
            std::vector<Tensor<T>> tr, va;
            load_restoration_images<T>(o.data, tr, va);
            std::vector<std::pair<Tensor<T>, Tensor<T>>> pairs;
            for (auto& img : va) {
                Tensor<T> hr = crop_to_multiple(img, m.config.scale);
                Tensor<T> lr = bicubic_resize(hr, hr.dim(1) / m.config.scale,
                                              hr.dim(2) / m.config.scale);
                pairs.emplace_back(std::move(hr), std::move(lr));
            }
            metric = evaluate_sr(m, pairs);
            std::cout << "mean_psnr_y_db: " << io::format_g(metric) << "\n";
            break;
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// count
// ---------------------------------------------------------------------------

inline int run_count(const Options& o, const std::vector<std::string>& argv) {
    NetConfig cfg = resolve_config(o);
    write_manifest(o.output, "count", o.seed, argv, &cfg);
    const bool paper = o.count_mode == "paper_formula";
    if (!paper && o.count_mode != "full")
        throw ConfigError("--mode must be full or paper_formula");

    Rng rng = make_rng(0);
    Model<float> m = build_model<float>(cfg, rng);

    // group parameters by topological segment (stem / blockN / transN / head / tail)
    std::vector<std::pair<std::string, std::int64_t>> segments;
    auto seg_of = [](const std::string& name) {
        return name.substr(0, name.find('.'));
    };
    for (const auto& e : m.store.entries) {
        const std::string seg = seg_of(e.name);
        if (segments.empty() || segments.back().first != seg) segments.push_back({seg, 0});
        segments.back().second += e.var.value().numel();
    }
    // paper_formula replaces each xUnit's true cost with k*9^2 + k
    std::int64_t total = 0;
    if (paper) {
        std::map<std::string, std::int64_t> xunit_full, xunit_k;
        for (const auto& e : m.store.entries) {
            const auto at = e.name.find("xunit");
            if (at == std::string::npos) continue;
            const std::string key = e.name.substr(0, at + 5);
            xunit_full[key] += e.var.value().numel();
            if (e.name.substr(at) == "xunit.dw.bias") xunit_k[key] = e.var.value().numel();
        }
        total = param_count_full(m);
        for (const auto& [key, full] : xunit_full) {
            const std::int64_t k = xunit_k.at(key);
            total += (k * 81 + k) - full;
        }
    } else {
        total = param_count_full(m);
    }

    std::cout << "mode: " << (paper ? "paper_formula" : "full") << "\n";
    for (const auto& [seg, n] : segments) std::cout << seg << ": " << n << "\n";
    std::cout << "total: " << total << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

// Deterministic fixed batches for the probe loss functional.
template <typename T>
std::vector<std::pair<Tensor<T>, Tensor<T>>> probe_batches(Model<T>& m, const Options& o) {
    std::vector<std::pair<Tensor<T>, Tensor<T>>> batches;
    const std::int64_t bs = o.batch > 0 ? o.batch : 16;
    switch (m.config.task) {
        case Task::classification: {
            auto samples = load_cifar10<T>(o.data);
            ChannelStats stats = channel_stats_cached(o.data, samples);
            const std::int64_t n = std::min<std::int64_t>(o.probe_samples,
                                                          std::int64_t(samples.size()));
            for (std::int64_t at = 0; at < n;) {
                std::vector<Tensor<T>> imgs;
                std::vector<T> labels;
                while (at < n && std::int64_t(imgs.size()) < bs) {
                    imgs.push_back(normalize_channels(samples[std::size_t(at)].pixels,
                                                      stats.mean, stats.stddev));
                    labels.push_back(T(samples[std::size_t(at)].label));
                    ++at;
                }
                batches.emplace_back(stack_batch(imgs),
                                     Tensor<T>(Shape{std::int64_t(labels.size())}, labels));
            }
            break;
        }
        case Task::denoising:
        case Task::super_resolution: {
            std::vector<Tensor<T>> tr, va;
            load_restoration_images<T>(o.data, tr, va);
            const std::int64_t patch = o.patch > 0 ? o.patch
                                       : m.config.task == Task::denoising ? 40 : 48;
            for (std::int64_t at = 0; at < o.probe_samples;) {
                std::vector<Tensor<T>> ins, tgts;
                while (at < o.probe_samples && std::int64_t(ins.size()) < bs) {
                    Rng rng = make_rng(o.seed, 7, std::uint64_t(at));
                    const auto& img = tr[std::size_t(at) % tr.size()];
                    Tensor<T> p = extract_random_patches(img, 1, patch, rng)[0];
                    if (m.config.task == Task::denoising) {
                        Tensor<T> y = add_awgn(p, o.noise_sigma, rng);
                        Tensor<T> noise(p.shape());
                        for (std::int64_t i = 0; i < noise.numel(); ++i)
                            noise[i] = y[i] - p[i];
                        ins.push_back(std::move(y));
                        tgts.push_back(std::move(noise));
                    } else {
                        ins.push_back(bicubic_resize(p, patch / m.config.scale,
                                                     patch / m.config.scale));
                        tgts.push_back(std::move(p));
                    }
                    ++at;
                }
                batches.emplace_back(stack_batch(ins), stack_batch(tgts));
            }
            break;
        }
    }
    return batches;
}

template <typename T>
int run_probe(const Options& o, const std::vector<std::string>& argv) {
    PerturbationConfig pc;
    pc.sigma_grid = parse_sigma_list(o.sigmas);
    pc.n_realizations = o.n_realizations;
    pc.seed = o.seed;
    pc.threads = o.threads;

    FlatnessReport rep;
    if (!o.fixture.empty()) {
        write_manifest(o.output, "probe", o.seed, argv, nullptr);
        if (o.fixture.rfind("quadratic:", 0) != 0)
            throw ConfigError("only quadratic:<a1,a2,...> fixtures exist");
        std::vector<double> diag = parse_sigma_list("0," + o.fixture.substr(10));
        diag.erase(diag.begin()); // drop the padding zero
        auto fx = make_quadratic_fixture<T>(diag);
        if (pc.sigma_grid.empty())
            pc.sigma_grid = auto_sigma_grid<T>(fx.theta0, fx.eval, fx.eval(fx.theta0), pc.seed);
        rep = estimate_flatness<T>(fx.theta0, fx.eval, pc);
    } else {
        auto loaded = load_checkpoint<T>(o.checkpoint);
        Model<T>& m = loaded.model;
        write_manifest(o.output, "probe", o.seed, argv, &m.config);
        LossKind kind = m.config.task == Task::classification ? LossKind::softmax_ce
                        : m.config.task == Task::denoising    ? LossKind::mse
                                                              : LossKind::mae;
        auto batches = probe_batches(m, o);
        rep = estimate_model_flatness(m, batches, kind, pc);
    }
    fs::create_directories(o.output);
    io::write_text_file(o.output + "/flatness.csv", flatness_csv(rep));
    io::write_text_file(o.output + "/quadratic.csv", quadratic_csv(rep));
    std::cout << "baseline: " << io::format_g(rep.baseline) << "\n"
              << "slope: " << io::format_g(rep.slope) << "\n"
              << "trace: " << io::format_g(rep.trace) << "\n"
              << "mean_eigenvalue: " << io::format_g(rep.mean_eigenvalue) << "\n"
              << "perturbed_parameters: " << rep.n_p << "\n"
              << "excluded: " << rep.excluded << "/" << rep.evaluated << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// cam / denoise / sr-infer
// ---------------------------------------------------------------------------

template <typename T>
int run_cam(const Options& o, const std::vector<std::string>& argv) {
    auto loaded = load_checkpoint<T>(o.checkpoint);
    Model<T>& m = loaded.model;
    write_manifest(o.output, "cam", o.seed, argv, &m.config);
    Tensor<T> img = read_pnm<T>(o.input).pixels;
    CamResult<T> r = cam(m, img, o.class_index);
    Tensor<T> rgb(Shape{3, r.overlay.dim(0), r.overlay.dim(1)});
    for (std::int64_t c = 0; c < 3; ++c)
        std::copy(r.overlay.data(), r.overlay.data() + r.overlay.numel(),
                  rgb.data() + c * r.overlay.numel());
    write_pnm(o.output + "/cam.ppm", rgb);
    io::write_text_file(o.output + "/cam.csv", cam_csv(r));
    std::cout << "logit: " << io::format_g(r.logit) << "\nresidual: " << io::format_g(r.residual)
              << "\n";
    return 0;
}

template <typename T>
int run_denoise(const Options& o, const std::vector<std::string>& argv) {
    auto loaded = load_checkpoint<T>(o.checkpoint);
    Model<T>& m = loaded.model;
    if (m.config.task != Task::denoising) throw ConfigError("checkpoint is not a denoiser");
    const std::string dir = fs::path(o.output).parent_path().string();
    write_manifest(dir.empty() ? "." : dir, "denoise", o.seed, argv, &m.config);
    Tensor<T> img = read_pnm<T>(o.input).pixels;
    if (img.dim(0) != m.config.image_channels())
        throw DataError(detail::msg("model expects ", m.config.image_channels(),
                                    " channels, image has ", img.dim(0)));
    m.set_mode(Mode::eval);
    Tensor<T> batch = stack_batch<T>({img});
    Tensor<T> clean = denoise(m, batch).reshaped(img.shape());
    write_pnm(o.output, clean);
    if (!o.ref.empty()) {
        Tensor<T> ref = read_pnm<T>(o.ref).pixels;
        std::cout << "psnr_db: " << io::format_g(psnr(clean, ref, 1.0, 0, false)) << "\n";
    }
    return 0;
}

template <typename T>
int run_sr(const Options& o, const std::vector<std::string>& argv) {
    auto loaded = load_checkpoint<T>(o.checkpoint);
    Model<T>& m = loaded.model;
    if (m.config.task != Task::super_resolution)
        throw ConfigError("checkpoint is not a super-resolution model");
    const std::string dir = fs::path(o.output).parent_path().string();
    write_manifest(dir.empty() ? "." : dir, "sr-infer", o.seed, argv, &m.config);
    Tensor<T> img = read_pnm<T>(o.input).pixels;
    if (img.dim(0) != m.config.image_channels())
        throw DataError(detail::msg("model expects ", m.config.image_channels(),
                                    " channels, image has ", img.dim(0)));
    m.set_mode(Mode::eval);
    Variable<T> out = forward(m, stack_batch<T>({img}));
    Tensor<T> sr = out.value().reshaped(
        Shape{img.dim(0), img.dim(1) * m.config.scale, img.dim(2) * m.config.scale});
    write_pnm(o.output, sr);
    if (!o.ref.empty()) {
        Tensor<T> ref = read_pnm<T>(o.ref).pixels;
        std::cout << "psnr_y_db: " << io::format_g(psnr(sr, ref, 1.0, 4, true)) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

// The checkpoint already knows its dtype; pick the matching instantiation.
inline bool checkpoint_is_f64(const std::string& path) {
    CheckpointFile f = read_checkpoint_file(path);
    for (const auto& e : f.main)
        if (e.dtype == CkptDtype::f32 || e.dtype == CkptDtype::f64)
            return e.dtype == CkptDtype::f64;
    return false;
}

inline int run_cli(const std::vector<std::string>& args) {
    Options o;
    CLI::App app{"DxNet building blocks: training, probing, inference"};
    app.set_version_flag("--version", DXNET_VERSION);
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* c, bool with_out = true) {
        c->add_option("--seed", o.seed, "RNG seed (all randomness derives from it)");
        if (with_out) c->add_option("--out", o.output, "output directory");
        c->add_option("--set", o.sets, "config override key=value (repeatable, last wins)");
        c->add_option("--dtype", o.dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
        c->add_option("--threads", o.threads, "worker cap for parallel sections");
    };

    CLI::App* t = app.add_subcommand("train", "train a model per the task recipe");
    add_common(t);
    t->add_option("--config", o.config_path, "NetConfig file")->required();
    t->add_option("--data", o.data, "dataset (CIFAR .bin or image directory)")->required();
    t->add_option("--val-data", o.val_data, "explicit validation dataset");
    t->add_option("--epochs", o.epochs, "override recipe epochs");
    t->add_option("--batch", o.batch, "override recipe batch size");
    t->add_option("--lr", o.lr, "override recipe learning rate");
    t->add_option("--sigma", o.noise_sigma, "denoising noise level on the 0-255 scale");
    t->add_option("--patch", o.patch, "training patch size");
    t->add_option("--patches", o.patches, "patches per epoch");
    t->add_option("--eval-every", o.eval_every, "validation cadence in epochs");

    CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(e);
    e->add_option("--checkpoint", o.checkpoint, "model .dxnt")->required();
    e->add_option("--data", o.data, "evaluation dataset")->required();
    e->add_option("--sigma", o.noise_sigma, "denoising noise level");

    CLI::App* c = app.add_subcommand("count", "parameter accounting for a config");
    add_common(c);
    c->add_option("--config", o.config_path, "NetConfig file")->required();
    c->add_option("--mode", o.count_mode, "full or paper_formula");

    CLI::App* p = app.add_subcommand("probe", "minima-flatness estimation");
    add_common(p);
    p->add_option("--checkpoint", o.checkpoint, "model .dxnt");
    p->add_option("--data", o.data, "dataset for the probe loss");
    p->add_option("--fixture", o.fixture, "synthetic fixture, e.g. quadratic:1,2,3");
    p->add_option("--sigmas", o.sigmas, "auto or comma-separated sigma grid");
    p->add_option("--n", o.n_realizations, "realizations per sigma");
    p->add_option("--sigma", o.noise_sigma, "denoising noise level");
    p->add_option("--patch", o.patch, "probe patch size");
    p->add_option("--batch", o.batch, "probe batch size");
    p->add_option("--samples", o.probe_samples, "probe sample count");

    CLI::App* cm = app.add_subcommand("cam", "class activation map for one image");
    add_common(cm);
    cm->add_option("--checkpoint", o.checkpoint, "model .dxnt")->required();
    cm->add_option("--in", o.input, "input image (.pgm/.ppm)")->required();
    cm->add_option("--class", o.class_index, "class index")->required();

    CLI::App* dn = app.add_subcommand("denoise", "denoise one image");
    add_common(dn, false);
    dn->add_option("--checkpoint", o.checkpoint, "model .dxnt")->required();
    dn->add_option("--in", o.input, "noisy image")->required();
    dn->add_option("--out", o.output, "output image path")->required();
    dn->add_option("--ref", o.ref, "clean reference; prints PSNR");

    CLI::App* sr = app.add_subcommand("sr-infer", "upscale one image");
    add_common(sr, false);
    sr->add_option("--checkpoint", o.checkpoint, "model .dxnt")->required();
    sr->add_option("--in", o.input, "low-resolution image")->required();
    sr->add_option("--out", o.output, "output image path")->required();
    sr->add_option("--ref", o.ref, "high-resolution reference; prints PSNR");

    std::vector<const char*> argv;
    argv.push_back("dxnet");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex);
        return code == 0 ? 0 : 2;
    }

    try {
        const bool probe_fixture = p->parsed() && !o.fixture.empty();
        bool f64 = o.dtype == "f64";
        if (!o.checkpoint.empty() && !probe_fixture && !t->parsed())
            f64 = checkpoint_is_f64(o.checkpoint);
        if (t->parsed()) return f64 ? run_train<double>(o, args) : run_train<float>(o, args);
        if (e->parsed()) return f64 ? run_eval<double>(o, args) : run_eval<float>(o, args);
        if (c->parsed()) return run_count(o, args);
        if (p->parsed()) {
            if (o.fixture.empty() && o.checkpoint.empty())
                throw ConfigError("probe needs --checkpoint or --fixture");
            if (!o.fixture.empty())
                return f64 ? run_probe<double>(o, args) : run_probe<float>(o, args);
            return checkpoint_is_f64(o.checkpoint) ? run_probe<double>(o, args)
                                                   : run_probe<float>(o, args);
        }
        if (cm->parsed()) return f64 ? run_cam<double>(o, args) : run_cam<float>(o, args);
        if (dn->parsed()) return f64 ? run_denoise<double>(o, args) : run_denoise<float>(o, args);
        if (sr->parsed()) return f64 ? run_sr<double>(o, args) : run_sr<float>(o, args);
        return 2;
    } catch (const ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 3;
    } catch (const DataError& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return 4;
    } catch (const NumericError& ex) {
        std::cerr << "numeric error: " << ex.what() << "\n";
        return 5;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}

} // namespace cli
} // namespace dxnet
