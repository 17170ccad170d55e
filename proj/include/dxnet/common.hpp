// Shared basics: error types, mode switches, seeding helpers.
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#define DXNET_VERSION "0.1.0"

namespace dxnet {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor extents / layout violations.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Bad network or run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// File and format problems (checkpoints, images, datasets).
class DataError : public Error {
public:
    using Error::Error;
};

// NaN/Inf surfaced by an op, or a diverged optimization step.
class NumericError : public Error {
public:
    using Error::Error;
};

enum class Mode { train, eval };

namespace detail {

template <typename... Args>
std::string msg(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Seeding. All randomness in the library flows through mt19937_64 engines
// seeded by mixing a user seed with stream indices, so that independent
// streams (per sample, per realization) are reproducible regardless of
// scheduling.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t state = 0x8e51'ecb3'55c5'4f31ULL;
    std::uint64_t out = 0;
    for (std::uint64_t p : parts) {
        state ^= p + 0x9e3779b97f4a7c15ULL + (state << 6) + (state >> 2);
        out = splitmix64(state);
    }
    return out;
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
    return Rng(mix_seed({seed, a, b, c}));
}

} // namespace dxnet
