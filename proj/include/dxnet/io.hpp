// Small binary/text I/O helpers shared by the checkpoint codec and the CSV
// emitters. All multi-byte integers are little-endian on disk.
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dxnet/common.hpp"

namespace dxnet {
namespace io {

inline void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
    buf.push_back(std::uint8_t(v & 0xff));
    buf.push_back(std::uint8_t(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<std::uint8_t>& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

inline void put_f64(std::vector<std::uint8_t>& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(buf, bits);
}

// Sequential reader over an in-memory buffer; throws DataError with the
// caller-supplied context string when the buffer runs out.
struct Reader {
    const std::uint8_t* p;
    std::size_t len;
    std::size_t pos = 0;

    void need(std::size_t n, const std::string& what) const {
        if (pos + n > len) throw DataError(detail::msg("truncated ", what));
    }
    std::uint8_t u8(const std::string& what) {
        need(1, what);
        return p[pos++];
    }
    std::uint16_t u16(const std::string& what) {
        need(2, what);
        std::uint16_t v = std::uint16_t(p[pos]) | std::uint16_t(p[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const std::string& what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32(const std::string& what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64(const std::string& what) {
        const std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n, const std::string& what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(p + pos), n);
        pos += n;
        return s;
    }
};

// Shortest round-trip decimal formatting; used for every CSV cell so equal
// doubles always print to equal bytes.
inline std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError(detail::msg("cannot write '", path, "'"));
    f << content;
    if (!f) throw DataError(detail::msg("short write on '", path, "'"));
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(detail::msg("cannot open '", path, "'"));
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

} // namespace io
} // namespace dxnet
