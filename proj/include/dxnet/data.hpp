// Dataset ingestion and synthesis: CIFAR-10 binary codec, PGM/PPM images,
// Gaussian noise injection, bicubic resampling, the augmentation policy, and
// patch extraction for restoration training.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dxnet/tensor.hpp"

namespace dxnet {

template <typename T>
struct ImageSample {
    Tensor<T> pixels;       // (C,H,W), [0,1] straight after decode
    std::int64_t label = -1; // class index, or -1 when unlabeled
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary codec (3073-byte records: label, then R,G,B planes)
// ---------------------------------------------------------------------------

namespace detail {
constexpr std::int64_t cifar_record = 1 + 3 * 32 * 32;

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(detail::msg("cannot open '", path, "'"));
    f.seekg(0, std::ios::end);
    const auto len = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(len));
    if (len > 0) f.read(reinterpret_cast<char*>(buf.data()), len);
    if (!f) throw DataError(detail::msg("short read on '", path, "'"));
    return buf;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& buf) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError(detail::msg("cannot write '", path, "'"));
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError(detail::msg("short write on '", path, "'"));
}

inline std::uint8_t quantize_u8(double v) {
    const double r = std::round(v * 255.0);
    return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, r)));
}
} // namespace detail

template <typename T>
std::vector<ImageSample<T>> load_cifar10(const std::string& path) {
    const auto buf = detail::read_file_bytes(path);
    if (buf.empty() || buf.size() % detail::cifar_record != 0)
        throw DataError(detail::msg("'", path, "' length ", buf.size(),
                                    " is not a multiple of ", detail::cifar_record));
    const std::size_t n = buf.size() / detail::cifar_record;
    std::vector<ImageSample<T>> out;
    out.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint8_t* rec = buf.data() + r * detail::cifar_record;
        if (rec[0] > 9)
            throw DataError(detail::msg("record ", r, ": label ", int(rec[0]), " out of range"));
        ImageSample<T> s;
        s.label = rec[0];
        s.pixels = Tensor<T>(Shape{3, 32, 32});
        for (std::int64_t i = 0; i < 3 * 32 * 32; ++i) s.pixels[i] = T(rec[1 + i]) / T(255);
        out.push_back(std::move(s));
    }
    return out;
}

// Encoder counterpart, used to build fixtures and for round-trip checks.
// Pixels are quantized to the nearest 8-bit level.
template <typename T>
void save_cifar10(const std::string& path, const std::vector<ImageSample<T>>& samples) {
    std::vector<std::uint8_t> buf;
    buf.reserve(samples.size() * detail::cifar_record);
    for (const auto& s : samples) {
        if (s.label < 0 || s.label > 9) throw DataError("cifar label must be in [0,9]");
        if (s.pixels.shape() != Shape{3, 32, 32})
            throw DataError("cifar sample must be (3,32,32)");
        buf.push_back(static_cast<std::uint8_t>(s.label));
        for (std::int64_t i = 0; i < 3 * 32 * 32; ++i)
            buf.push_back(detail::quantize_u8(double(s.pixels[i])));
    }
    detail::write_file_bytes(path, buf);
}

// ---------------------------------------------------------------------------
// PGM (P5) / PPM (P6), binary, maxval 255
// ---------------------------------------------------------------------------

namespace detail {
// Reads the next header token, skipping whitespace and '#' comment lines.
inline std::string pnm_token(const std::uint8_t* buf, std::size_t len, std::size_t& pos,
                             const std::string& path) {
    while (pos < len) {
        if (std::isspace(buf[pos])) {
            ++pos;
        } else if (buf[pos] == '#') {
            while (pos < len && buf[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < len && !std::isspace(buf[pos])) tok += char(buf[pos++]);
    if (tok.empty()) throw DataError(detail::msg("'", path, "': truncated header"));
    return tok;
}
} // namespace detail

template <typename T>
ImageSample<T> read_pnm(const std::string& path) {
    const auto buf = detail::read_file_bytes(path);
    std::size_t pos = 0;
    const std::string magic = detail::pnm_token(buf.data(), buf.size(), pos, path);
    std::int64_t channels;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw DataError(detail::msg("'", path, "': unsupported magic '", magic, "'"));
    const std::int64_t w = std::stoll(detail::pnm_token(buf.data(), buf.size(), pos, path));
    const std::int64_t h = std::stoll(detail::pnm_token(buf.data(), buf.size(), pos, path));
    const std::int64_t maxval = std::stoll(detail::pnm_token(buf.data(), buf.size(), pos, path));
    if (maxval != 255) throw DataError(detail::msg("'", path, "': maxval must be 255"));
    if (w <= 0 || h <= 0 || w > (1 << 20) || h > (1 << 20))
        throw DataError(detail::msg("'", path, "': bad dimensions ", w, "x", h));
    ++pos; // single whitespace byte after maxval
    const std::size_t need = static_cast<std::size_t>(channels * w * h);
    if (buf.size() - pos < need)
        throw DataError(detail::msg("'", path, "': truncated pixel data"));
    ImageSample<T> s;
    s.pixels = Tensor<T>(Shape{channels, h, w});
    // file is interleaved row-major; tensor is planar CHW
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < channels; ++c)
                s.pixels[(c * h + y) * w + x] =
                    T(buf[pos + static_cast<std::size_t>((y * w + x) * channels + c)]) / T(255);
    return s;
}

// Writes (1,H,W) as PGM or (3,H,W) as PPM; values clamped to [0,1] and
// quantized.
template <typename T>
void write_pnm(const std::string& path, const Tensor<T>& chw) {
    if (chw.rank() != 3 || (chw.dim(0) != 1 && chw.dim(0) != 3))
        throw DataError(detail::msg("write_pnm needs (1,H,W) or (3,H,W), got ",
                                    shape_str(chw.shape())));
    const std::int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    std::vector<std::uint8_t> buf;
    const std::string header =
        detail::msg(c == 1 ? "P5" : "P6", "\n", w, " ", h, "\n255\n");
    buf.insert(buf.end(), header.begin(), header.end());
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t ch = 0; ch < c; ++ch)
                buf.push_back(detail::quantize_u8(double(chw[(ch * h + y) * w + x])));
    detail::write_file_bytes(path, buf);
}

// ---------------------------------------------------------------------------
// Degradations
// ---------------------------------------------------------------------------

// y = x + n with n ~ N(0, (sigma_255/255)^2), unclipped: the residual target
// stays exactly the injected noise.
template <typename T>
Tensor<T> add_awgn(const Tensor<T>& x, double sigma_255, Rng& rng) {
    if (sigma_255 < 0) throw DataError("noise sigma must be >= 0");
    Tensor<T> y = x;
    if (sigma_255 == 0) return y;
    std::normal_distribution<double> n(0.0, sigma_255 / 255.0);
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = T(double(y[i]) + n(rng));
    return y;
}

// ---------------------------------------------------------------------------
// Bicubic resampling (separable, a = -0.5, antialiased downscale, edge clamp)
// ---------------------------------------------------------------------------

namespace detail {

inline double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
    if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
    return 0;
}

struct ResampleTap {
    std::int64_t first; // first source index
    std::vector<double> weights;
};

// One output coordinate's source taps. When downscaling (scale < 1) the
// kernel support is widened by 1/scale so it acts as an antialias filter;
// weights are normalized to sum to 1 and source indices clamped to the edge.
inline std::vector<ResampleTap> resample_taps(std::int64_t in_size, std::int64_t out_size) {
    const double scale = double(out_size) / double(in_size);
    const double support = scale < 1 ? 2.0 / scale : 2.0;
    std::vector<ResampleTap> taps(static_cast<std::size_t>(out_size));
    for (std::int64_t o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) / scale - 0.5;
        const std::int64_t lo = static_cast<std::int64_t>(std::floor(center - support)) + 1;
        const std::int64_t hi = static_cast<std::int64_t>(std::floor(center + support));
        ResampleTap tap;
        tap.first = lo;
        double sum = 0;
        for (std::int64_t i = lo; i <= hi; ++i) {
            const double t = (i - center) * (scale < 1 ? scale : 1.0);
            const double w = cubic_kernel(t);
            tap.weights.push_back(w);
            sum += w;
        }
        if (sum != 0)
            for (double& w : tap.weights) w /= sum;
        taps[static_cast<std::size_t>(o)] = std::move(tap);
    }
    return taps;
}

} // namespace detail

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& chw, std::int64_t out_h, std::int64_t out_w) {
    if (chw.rank() != 3) throw DataError("bicubic_resize expects a (C,H,W) tensor");
    if (out_h <= 0 || out_w <= 0)
        throw DataError(detail::msg("bicubic output size ", out_h, "x", out_w, " non-positive"));
    const std::int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    const auto col_taps = detail::resample_taps(W, out_w);
    const auto row_taps = detail::resample_taps(H, out_h);

    // horizontal pass, then vertical
    Tensor<double> mid(Shape{C, H, out_w});
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < H; ++y) {
            const T* src = chw.data() + (c * H + y) * W;
            double* dst = mid.data() + (c * H + y) * out_w;
            for (std::int64_t x = 0; x < out_w; ++x) {
                const auto& tap = col_taps[static_cast<std::size_t>(x)];
                double acc = 0;
                for (std::size_t k = 0; k < tap.weights.size(); ++k) {
                    std::int64_t i = tap.first + std::int64_t(k);
                    i = std::clamp<std::int64_t>(i, 0, W - 1);
                    acc += tap.weights[k] * double(src[i]);
                }
                dst[x] = acc;
            }
        }
    Tensor<T> out(Shape{C, out_h, out_w});
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < out_h; ++y) {
            const auto& tap = row_taps[static_cast<std::size_t>(y)];
            T* dst = out.data() + (c * out_h + y) * out_w;
            for (std::int64_t x = 0; x < out_w; ++x) {
                double acc = 0;
                for (std::size_t k = 0; k < tap.weights.size(); ++k) {
                    std::int64_t i = tap.first + std::int64_t(k);
                    i = std::clamp<std::int64_t>(i, 0, H - 1);
                    acc += tap.weights[k] * mid[(c * H + i) * out_w + x];
                }
                dst[x] = T(acc);
            }
        }
    return out;
}

// scale in {0.25, 0.5, 2, 4} per the recipes; other positive factors work too.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& chw, double scale) {
    if (scale <= 0) throw DataError("bicubic scale must be positive");
    const auto out_h = static_cast<std::int64_t>(std::llround(double(chw.dim(1)) * scale));
    const auto out_w = static_cast<std::int64_t>(std::llround(double(chw.dim(2)) * scale));
    if (scale == 1.0) return chw;
    return bicubic_resize(chw, out_h, out_w);
}

// ---------------------------------------------------------------------------
// Geometry helpers
// ---------------------------------------------------------------------------

// Counterclockwise k*90 degrees.
template <typename T>
Tensor<T> rotate90(const Tensor<T>& chw, int k) {
    if (chw.rank() != 3) throw DataError("rotate90 expects a (C,H,W) tensor");
    k = ((k % 4) + 4) % 4;
    if (k == 0) return chw;
    const std::int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    const std::int64_t OH = (k % 2 == 0) ? H : W, OW = (k % 2 == 0) ? W : H;
    Tensor<T> out(Shape{C, OH, OW});
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x) {
                std::int64_t oy = 0, ox = 0;
                switch (k) {
                    case 1: oy = W - 1 - x; ox = y; break;
                    case 2: oy = H - 1 - y; ox = W - 1 - x; break;
                    case 3: oy = x; ox = H - 1 - y; break;
                }
                out[(c * OH + oy) * OW + ox] = chw[(c * H + y) * W + x];
            }
    return out;
}

template <typename T>
Tensor<T> hflip(const Tensor<T>& chw) {
    const std::int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    Tensor<T> out(chw.shape());
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x)
                out[(c * H + y) * W + x] = chw[(c * H + y) * W + (W - 1 - x)];
    return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& chw, std::int64_t y0, std::int64_t x0, std::int64_t h,
               std::int64_t w) {
    const std::int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    if (y0 < 0 || x0 < 0 || y0 + h > H || x0 + w > W)
        throw DataError(detail::msg("crop [", y0, ",", x0, ",", h, ",", w, "] outside ",
                                    shape_str(chw.shape())));
    Tensor<T> out(Shape{C, h, w});
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < h; ++y)
            std::copy(chw.data() + (c * H + y0 + y) * W + x0,
                      chw.data() + (c * H + y0 + y) * W + x0 + w,
                      out.data() + (c * h + y) * w);
    return out;
}

template <typename T>
Tensor<T> zero_pad(const Tensor<T>& chw, std::int64_t pad) {
    const std::int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    Tensor<T> out(Shape{C, H + 2 * pad, W + 2 * pad}, T(0));
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < H; ++y)
            std::copy(chw.data() + (c * H + y) * W, chw.data() + (c * H + y + 1) * W,
                      out.data() + ((c * (H + 2 * pad) + y + pad) * (W + 2 * pad)) + pad);
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentPolicy {
    bool normalize = true;
    std::vector<double> mean; // per channel
    std::vector<double> stddev;
    bool random_crop = true;
    std::int64_t crop_pad = 4;
    bool horizontal_flip = true;
    bool cutout = true;
    std::int64_t cutout_size = 16;
    bool rotations_90 = false; // restoration recipe
};

inline AugmentPolicy cifar_policy(std::vector<double> mean, std::vector<double> stddev) {
    AugmentPolicy p;
    p.mean = std::move(mean);
    p.stddev = std::move(stddev);
    return p;
}

template <typename T>
Tensor<T> normalize_channels(const Tensor<T>& chw, const std::vector<double>& mean,
                             const std::vector<double>& stddev) {
    const std::int64_t C = chw.dim(0), plane = chw.dim(1) * chw.dim(2);
    if (std::int64_t(mean.size()) != C || std::int64_t(stddev.size()) != C)
        throw DataError("normalization stats do not match channel count");
    Tensor<T> out(chw.shape());
    for (std::int64_t c = 0; c < C; ++c) {
        if (stddev[static_cast<std::size_t>(c)] <= 0) throw DataError("stddev must be positive");
        const T m = T(mean[static_cast<std::size_t>(c)]);
        const T inv = T(1.0 / stddev[static_cast<std::size_t>(c)]);
        for (std::int64_t i = 0; i < plane; ++i)
            out[c * plane + i] = (chw[c * plane + i] - m) * inv;
    }
    return out;
}

// Cutout: a square of the given size centered at a uniformly random pixel,
// clipped to the image, filled with zeros (the post-normalization mean).
template <typename T>
void apply_cutout(Tensor<T>& chw, std::int64_t size, Rng& rng) {
    const std::int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    std::uniform_int_distribution<std::int64_t> uy(0, H - 1), ux(0, W - 1);
    const std::int64_t cy = uy(rng), cx = ux(rng);
    const std::int64_t y0 = std::max<std::int64_t>(0, cy - size / 2);
    const std::int64_t y1 = std::min(H, cy + (size + 1) / 2);
    const std::int64_t x0 = std::max<std::int64_t>(0, cx - size / 2);
    const std::int64_t x1 = std::min(W, cx + (size + 1) / 2);
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = y0; y < y1; ++y)
            for (std::int64_t x = x0; x < x1; ++x) chw[(c * H + y) * W + x] = T(0);
}

template <typename T>
Tensor<T> augment_sample(const Tensor<T>& pixels, const AugmentPolicy& p, Rng& rng) {
    Tensor<T> img = pixels;
    if (p.normalize) img = normalize_channels(img, p.mean, p.stddev);
    if (p.random_crop) {
        const std::int64_t H = img.dim(1), W = img.dim(2);
        Tensor<T> padded = zero_pad(img, p.crop_pad);
        std::uniform_int_distribution<std::int64_t> u(0, 2 * p.crop_pad);
        const std::int64_t y0 = u(rng), x0 = u(rng);
        img = crop(padded, y0, x0, H, W);
    }
    if (p.horizontal_flip) {
        std::uniform_int_distribution<int> u(0, 1);
        if (u(rng)) img = hflip(img);
    }
    if (p.rotations_90) {
        std::uniform_int_distribution<int> u(0, 3);
        img = rotate90(img, u(rng));
    }
    if (p.cutout) apply_cutout(img, p.cutout_size, rng);
    return img;
}

// ---------------------------------------------------------------------------
// Channel statistics (computed once, cached beside the dataset)
// ---------------------------------------------------------------------------

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

template <typename T>
ChannelStats compute_channel_stats(const std::vector<ImageSample<T>>& samples) {
    if (samples.empty()) throw DataError("cannot compute stats of an empty dataset");
    const std::int64_t C = samples[0].pixels.dim(0);
    std::vector<double> sum(static_cast<std::size_t>(C), 0), sq(static_cast<std::size_t>(C), 0);
    std::int64_t count = 0;
    for (const auto& s : samples) {
        const std::int64_t plane = s.pixels.dim(1) * s.pixels.dim(2);
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < plane; ++i) {
                const double v = double(s.pixels[c * plane + i]);
                sum[static_cast<std::size_t>(c)] += v;
                sq[static_cast<std::size_t>(c)] += v * v;
            }
        count += s.pixels.dim(1) * s.pixels.dim(2);
    }
    ChannelStats st;
    for (std::int64_t c = 0; c < C; ++c) {
        const double m = sum[static_cast<std::size_t>(c)] / double(count);
        const double var = sq[static_cast<std::size_t>(c)] / double(count) - m * m;
        st.mean.push_back(m);
        st.stddev.push_back(std::sqrt(std::max(var, 1e-12)));
    }
    return st;
}

inline void save_channel_stats(const std::string& path, const ChannelStats& st) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError(detail::msg("cannot write stats cache '", path, "'"));
    f.precision(17);
    for (std::size_t c = 0; c < st.mean.size(); ++c)
        f << st.mean[c] << " " << st.stddev[c] << "\n";
}

inline bool load_channel_stats(const std::string& path, ChannelStats& st) {
    std::ifstream f(path);
    if (!f) return false;
    st.mean.clear();
    st.stddev.clear();
    double m, s;
    while (f >> m >> s) {
        st.mean.push_back(m);
        st.stddev.push_back(s);
    }
    return !st.mean.empty();
}

template <typename T>
ChannelStats channel_stats_cached(const std::string& dataset_path,
                                  const std::vector<ImageSample<T>>& samples) {
    const std::string cache = dataset_path + ".stats";
    ChannelStats st;
    if (load_channel_stats(cache, st) && st.mean.size() == std::size_t(samples[0].pixels.dim(0)))
        return st;
    st = compute_channel_stats(samples);
    save_channel_stats(cache, st);
    return st;
}

// ---------------------------------------------------------------------------
// Patch extraction
// ---------------------------------------------------------------------------

// n random patches from one image; positions drawn uniformly.
template <typename T>
std::vector<Tensor<T>> extract_random_patches(const Tensor<T>& chw, std::int64_t n,
                                              std::int64_t size, Rng& rng) {
    const std::int64_t H = chw.dim(1), W = chw.dim(2);
    if (size > H || size > W)
        throw DataError(detail::msg("patch size ", size, " exceeds image ", H, "x", W));
    std::uniform_int_distribution<std::int64_t> uy(0, H - size), ux(0, W - size);
    std::vector<Tensor<T>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t y0 = uy(rng), x0 = ux(rng);
        out.push_back(crop(chw, y0, x0, size, size));
    }
    return out;
}

// Aligned clean/degraded patch pairs from a pre-degraded image pair.
template <typename T>
std::vector<std::pair<Tensor<T>, Tensor<T>>> extract_patch_pairs(const Tensor<T>& clean,
                                                                 const Tensor<T>& degraded,
                                                                 std::int64_t n,
                                                                 std::int64_t size, Rng& rng) {
    if (!clean.same_shape(degraded)) throw DataError("pair images must share a shape");
    const std::int64_t H = clean.dim(1), W = clean.dim(2);
    if (size > H || size > W)
        throw DataError(detail::msg("patch size ", size, " exceeds image ", H, "x", W));
    std::uniform_int_distribution<std::int64_t> uy(0, H - size), ux(0, W - size);
    std::vector<std::pair<Tensor<T>, Tensor<T>>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t y0 = uy(rng), x0 = ux(rng);
        out.emplace_back(crop(clean, y0, x0, size, size), crop(degraded, y0, x0, size, size));
    }
    return out;
}

// Stacks (C,H,W) samples into one (N,C,H,W) batch tensor.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& samples) {
    if (samples.empty()) throw DataError("cannot stack an empty batch");
    const Shape& s0 = samples[0].shape();
    Shape out_shape{std::int64_t(samples.size())};
    out_shape.insert(out_shape.end(), s0.begin(), s0.end());
    Tensor<T> out(out_shape);
    const std::int64_t per = samples[0].numel();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].shape() != s0) throw DataError("batch samples must share a shape");
        std::copy(samples[i].data(), samples[i].data() + per, out.data() + std::int64_t(i) * per);
    }
    return out;
}

} // namespace dxnet
