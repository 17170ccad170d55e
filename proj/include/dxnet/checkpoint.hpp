// Versioned binary checkpoints. Layout: magic "DXNT", u32 version, u32 entry
// count, entries (u16 name length, name, u8 dtype, u8 rank, u32 dims, raw
// little-endian payload), then a training-state section with the same entry
// encoding. The main section holds the resolved config (as a "__config__"
// byte entry) plus every learnable parameter; batch-norm running statistics
// and optimizer state live in the state section.
#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "dxnet/io.hpp"
#include "dxnet/model.hpp"

namespace dxnet {

enum class CkptDtype : std::uint8_t { f32 = 0, f64 = 1, i64 = 2, u8 = 3 };

constexpr std::uint32_t ckpt_version = 1;

struct CkptEntry {
    std::string name;
    CkptDtype dtype = CkptDtype::f32;
    Shape dims;
    std::vector<std::uint8_t> payload; // raw little-endian scalars

    std::int64_t scalar_count() const { return shape_numel(dims); }
    std::size_t scalar_bytes() const {
        switch (dtype) {
            case CkptDtype::f32: return 4;
            case CkptDtype::f64: return 8;
            case CkptDtype::i64: return 8;
            case CkptDtype::u8: return 1;
        }
        throw DataError("unknown dtype");
    }
};

namespace detail {

template <typename T>
CkptDtype dtype_of();
template <>
inline CkptDtype dtype_of<float>() { return CkptDtype::f32; }
template <>
inline CkptDtype dtype_of<double>() { return CkptDtype::f64; }

} // namespace detail

template <typename T>
CkptEntry make_entry(const std::string& name, const Tensor<T>& t) {
    static_assert(std::is_floating_point_v<T>);
    CkptEntry e;
    e.name = name;
    e.dtype = detail::dtype_of<T>();
    e.dims = t.shape();
    e.payload.reserve(static_cast<std::size_t>(t.numel()) * sizeof(T));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if constexpr (sizeof(T) == 4)
            io::put_f32(e.payload, float(t[i]));
        else
            io::put_f64(e.payload, double(t[i]));
    }
    return e;
}

inline CkptEntry make_i64_entry(const std::string& name, std::int64_t v) {
    CkptEntry e;
    e.name = name;
    e.dtype = CkptDtype::i64;
    e.dims = Shape{1};
    io::put_u64(e.payload, static_cast<std::uint64_t>(v));
    return e;
}

inline CkptEntry make_f64_entry(const std::string& name, double v) {
    CkptEntry e;
    e.name = name;
    e.dtype = CkptDtype::f64;
    e.dims = Shape{1};
    io::put_f64(e.payload, v);
    return e;
}

inline CkptEntry make_text_entry(const std::string& name, const std::string& text) {
    CkptEntry e;
    e.name = name;
    e.dtype = CkptDtype::u8;
    e.dims = Shape{std::int64_t(text.size())};
    e.payload.assign(text.begin(), text.end());
    return e;
}

template <typename T>
Tensor<T> entry_to_tensor(const CkptEntry& e) {
    static_assert(std::is_floating_point_v<T>);
    Tensor<T> t(e.dims);
    io::Reader r{e.payload.data(), e.payload.size()};
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        switch (e.dtype) {
            case CkptDtype::f32: t[i] = T(r.f32(e.name)); break;
            case CkptDtype::f64: t[i] = T(r.f64(e.name)); break;
            case CkptDtype::i64: t[i] = T(std::int64_t(r.u64(e.name))); break;
            default: throw DataError(detail::msg("entry '", e.name, "' is not numeric"));
        }
    }
    return t;
}

inline std::int64_t entry_to_i64(const CkptEntry& e) {
    if (e.dtype != CkptDtype::i64 || e.scalar_count() != 1)
        throw DataError(detail::msg("entry '", e.name, "' is not an i64 scalar"));
    io::Reader r{e.payload.data(), e.payload.size()};
    return static_cast<std::int64_t>(r.u64(e.name));
}

inline double entry_to_f64(const CkptEntry& e) {
    if (e.dtype != CkptDtype::f64 || e.scalar_count() != 1)
        throw DataError(detail::msg("entry '", e.name, "' is not an f64 scalar"));
    io::Reader r{e.payload.data(), e.payload.size()};
    return r.f64(e.name);
}

inline std::string entry_to_text(const CkptEntry& e) {
    if (e.dtype != CkptDtype::u8)
        throw DataError(detail::msg("entry '", e.name, "' is not a byte entry"));
    return std::string(e.payload.begin(), e.payload.end());
}

// ---------------------------------------------------------------------------
// Raw section encode/decode
// ---------------------------------------------------------------------------

namespace detail {

inline void encode_entry(std::vector<std::uint8_t>& buf, const CkptEntry& e) {
    if (e.name.size() > 0xffff) throw DataError("entry name too long");
    io::put_u16(buf, std::uint16_t(e.name.size()));
    buf.insert(buf.end(), e.name.begin(), e.name.end());
    buf.push_back(std::uint8_t(e.dtype));
    if (e.dims.size() > 0xff) throw DataError("entry rank too large");
    buf.push_back(std::uint8_t(e.dims.size()));
    for (auto d : e.dims) io::put_u32(buf, std::uint32_t(d));
    const std::size_t expect = std::size_t(e.scalar_count()) * e.scalar_bytes();
    if (e.payload.size() != expect)
        throw DataError(detail::msg("entry '", e.name, "' payload size mismatch"));
    buf.insert(buf.end(), e.payload.begin(), e.payload.end());
}

inline CkptEntry decode_entry(io::Reader& r) {
    CkptEntry e;
    const std::uint16_t nlen = r.u16("entry header");
    e.name = r.str(nlen, "entry name");
    const std::uint8_t dt = r.u8(detail::msg("dtype of entry '", e.name, "'"));
    if (dt > 3) throw DataError(detail::msg("entry '", e.name, "': unknown dtype code ", int(dt)));
    e.dtype = CkptDtype(dt);
    const std::uint8_t rank = r.u8(detail::msg("rank of entry '", e.name, "'"));
    for (int i = 0; i < rank; ++i)
        e.dims.push_back(std::int64_t(r.u32(detail::msg("dims of entry '", e.name, "'"))));
    const std::size_t bytes = std::size_t(e.scalar_count()) * e.scalar_bytes();
    r.need(bytes, detail::msg("payload for entry '", e.name, "'"));
    e.payload.assign(r.p + r.pos, r.p + r.pos + bytes);
    r.pos += bytes;
    return e;
}

} // namespace detail

struct CheckpointFile {
    std::vector<CkptEntry> main;  // __config__ + parameters
    std::vector<CkptEntry> state; // BN buffers, optimizer moments, train counters
};

inline void write_checkpoint_file(const std::string& path, const CheckpointFile& f) {
    std::vector<std::uint8_t> buf;
    buf.push_back('D');
    buf.push_back('X');
    buf.push_back('N');
    buf.push_back('T');
    io::put_u32(buf, ckpt_version);
    io::put_u32(buf, std::uint32_t(f.main.size()));
    for (const auto& e : f.main) detail::encode_entry(buf, e);
    io::put_u32(buf, std::uint32_t(f.state.size()));
    for (const auto& e : f.state) detail::encode_entry(buf, e);
    dxnet::detail::write_file_bytes(path, buf);
}

inline CheckpointFile read_checkpoint_file(const std::string& path) {
    const auto buf = dxnet::detail::read_file_bytes(path);
    io::Reader r{buf.data(), buf.size()};
    const std::string magic = r.str(4, "magic");
    if (magic != "DXNT") throw DataError(detail::msg("'", path, "': bad checkpoint magic"));
    const std::uint32_t version = r.u32("version");
    if (version != ckpt_version)
        throw DataError(detail::msg("'", path, "': unsupported checkpoint version ", version));
    CheckpointFile f;
    const std::uint32_t n_main = r.u32("entry count");
    for (std::uint32_t i = 0; i < n_main; ++i) f.main.push_back(detail::decode_entry(r));
    const std::uint32_t n_state = r.u32("state entry count");
    for (std::uint32_t i = 0; i < n_state; ++i) f.state.push_back(detail::decode_entry(r));
    return f;
}

// ---------------------------------------------------------------------------
// Model <-> checkpoint
// ---------------------------------------------------------------------------

template <typename T>
void save_checkpoint(const Model<T>& m, const std::string& path,
                     const std::vector<CkptEntry>& train_state = {}) {
    CheckpointFile f;
    f.main.push_back(make_text_entry("__config__", serialize_config(m.config)));
    for (const auto& e : m.store.entries) f.main.push_back(make_entry(e.name, e.var.value()));
    for (const auto& b : m.store.bns) {
        f.state.push_back(make_entry(b.name + ".running_mean", b.state->running_mean));
        f.state.push_back(make_entry(b.name + ".running_var", b.state->running_var));
        f.state.push_back(make_i64_entry(b.name + ".batches_tracked", b.state->batches_tracked));
    }
    f.state.insert(f.state.end(), train_state.begin(), train_state.end());
    write_checkpoint_file(path, f);
}

template <typename T>
struct LoadedCheckpoint {
    Model<T> model;
    std::vector<CkptEntry> train_state; // entries beyond the BN buffers
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    CheckpointFile f = read_checkpoint_file(path);
    if (f.main.empty() || f.main[0].name != "__config__")
        throw DataError(detail::msg("'", path, "': missing __config__ entry"));
    NetConfig cfg = parse_config_text(entry_to_text(f.main[0]));
    Rng rng = make_rng(0);
    LoadedCheckpoint<T> out{build_model<T>(cfg, rng), {}};
    Model<T>& m = out.model;
    if (f.main.size() - 1 != m.store.entries.size())
        throw DataError(detail::msg("'", path, "': expected ", m.store.entries.size(),
                                    " parameters, found ", f.main.size() - 1));
    for (std::size_t i = 0; i < m.store.entries.size(); ++i) {
        const CkptEntry& e = f.main[i + 1];
        auto& p = m.store.entries[i];
        if (e.name != p.name)
            throw DataError(detail::msg("'", path, "': unexpected entry '", e.name,
                                        "' (wanted '", p.name, "')"));
        Tensor<T> t = entry_to_tensor<T>(e);
        if (t.shape() != p.var.value().shape())
            throw DataError(detail::msg("'", path, "': entry '", e.name, "' shape ",
                                        shape_str(t.shape()), " does not match model"));
        p.var.mutable_value() = std::move(t);
    }
    std::size_t si = 0;
    for (auto& b : m.store.bns) {
        if (si + 3 > f.state.size() || f.state[si].name != b.name + ".running_mean")
            throw DataError(detail::msg("'", path, "': missing batch-norm state for '", b.name,
                                        "'"));
        b.state->running_mean = entry_to_tensor<T>(f.state[si++]);
        b.state->running_var = entry_to_tensor<T>(f.state[si++]);
        b.state->batches_tracked = entry_to_i64(f.state[si++]);
    }
    out.train_state.assign(f.state.begin() + std::ptrdiff_t(si), f.state.end());
    return out;
}

// Float-typed scalars in the main section: must equal the model's full
// parameter count (the config text entry is bytes, not parameters).
inline std::int64_t checkpoint_param_scalars(const std::string& path) {
    CheckpointFile f = read_checkpoint_file(path);
    std::int64_t n = 0;
    for (const auto& e : f.main)
        if (e.dtype == CkptDtype::f32 || e.dtype == CkptDtype::f64) n += e.scalar_count();
    return n;
}

inline std::int64_t checkpoint_state_scalars(const std::string& path) {
    CheckpointFile f = read_checkpoint_file(path);
    std::int64_t n = 0;
    for (const auto& e : f.state)
        if (e.dtype != CkptDtype::u8) n += e.scalar_count();
    return n;
}

} // namespace dxnet
