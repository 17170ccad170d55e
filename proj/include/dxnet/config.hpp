// NetConfig: the declarative network description, its key-value text format,
// task-dependent defaults, and validation of config combinations.
#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dxnet/blocks.hpp"

namespace dxnet {

enum class Task { classification, denoising, super_resolution };

inline const char* task_name(Task t) {
    switch (t) {
        case Task::classification: return "classification";
        case Task::denoising: return "denoising";
        case Task::super_resolution: return "super_resolution";
    }
    return "?";
}

struct NetConfig {
    Task task = Task::classification;
    std::vector<std::int64_t> blocks = {12, 12, 12}; // dense layers per block
    std::int64_t growth = 12;
    double reduction = 0.5;
    std::int64_t initial_channels = 0; // 0 -> task default (2 * growth)
    bool xunit = true;                 // false -> plain DenseNet
    GateKind gate = GateKind::sigmoid;
    std::optional<bool> bn;   // default: off for super_resolution, on otherwise
    std::optional<bool> pool; // default: on for classification only
    double dropout = 0.0;
    std::int64_t scale = 2;   // super-resolution upscale factor
    std::int64_t channels = 0; // image channels; 0 -> task default
    std::int64_t classes = 10;
    std::int64_t bottleneck = 4;

    bool with_bn() const { return bn.value_or(task != Task::super_resolution); }
    bool with_pool() const { return pool.value_or(task == Task::classification); }
    std::int64_t image_channels() const {
        if (channels > 0) return channels;
        return task == Task::denoising ? 1 : 3;
    }
    std::int64_t stem_channels() const {
        return initial_channels > 0 ? initial_channels : 2 * growth;
    }

    void validate() const {
        if (blocks.empty()) throw ConfigError("blocks must be nonempty");
        for (auto b : blocks)
            if (b <= 0) throw ConfigError("every block must contain at least one layer");
        if (growth <= 0) throw ConfigError("growth must be positive");
        if (reduction <= 0 || reduction >= 1) throw ConfigError("reduction must be in (0,1)");
        if (stem_channels() < growth)
            throw ConfigError(detail::msg("initial_channels ", stem_channels(),
                                          " must be >= growth ", growth));
        if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0,1)");
        if (task == Task::super_resolution && scale != 2 && scale != 4)
            throw ConfigError("scale must be 2 or 4");
        if (task == Task::classification && classes < 2)
            throw ConfigError("classes must be >= 2");
        if (image_channels() <= 0) throw ConfigError("channels must be positive");
        if (bottleneck <= 0) throw ConfigError("bottleneck must be positive");
        if (task == Task::denoising && with_pool())
            throw ConfigError("denoising networks must not pool (spatial dims are preserved)");
        if (task == Task::super_resolution && with_pool())
            throw ConfigError("super-resolution networks must not pool");
        if (task == Task::super_resolution && with_bn())
            throw ConfigError("super-resolution networks run without batch norm");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError(detail::msg("bad boolean for ", key, ": '", v, "'"));
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError(detail::msg("bad integer for ", key, ": '", v, "'"));
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError(detail::msg("bad number for ", key, ": '", v, "'"));
    }
}

// "12-12-12" or "12,12,12"
inline std::vector<std::int64_t> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<std::int64_t> out;
    std::string cur;
    for (char c : v + "-") {
        if (c == '-' || c == ',') {
            if (cur.empty()) throw ConfigError(detail::msg("bad list for ", key, ": '", v, "'"));
            out.push_back(parse_int(key, cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

} // namespace detail

// Applies one "key=value" assignment; used for both config files and CLI
// overrides (last assignment wins).
inline void config_set(NetConfig& c, const std::string& key, const std::string& value) {
    const std::string v = detail::trim(value);
    if (key == "task") {
        if (v == "classification") c.task = Task::classification;
        else if (v == "denoising") c.task = Task::denoising;
        else if (v == "super_resolution" || v == "sr") c.task = Task::super_resolution;
        else throw ConfigError(detail::msg("unknown task '", v, "'"));
    } else if (key == "blocks") {
        c.blocks = detail::parse_int_list(key, v);
    } else if (key == "growth") {
        c.growth = detail::parse_int(key, v);
    } else if (key == "reduction") {
        c.reduction = detail::parse_double(key, v);
    } else if (key == "initial_channels") {
        c.initial_channels = detail::parse_int(key, v);
    } else if (key == "xunit") {
        c.xunit = detail::parse_bool(key, v);
    } else if (key == "gate") {
        if (v == "sigmoid") c.gate = GateKind::sigmoid;
        else if (v == "gaussian") c.gate = GateKind::gaussian;
        else throw ConfigError(detail::msg("unknown gate '", v, "'"));
    } else if (key == "bn") {
        c.bn = detail::parse_bool(key, v);
    } else if (key == "pool") {
        c.pool = detail::parse_bool(key, v);
    } else if (key == "dropout") {
        c.dropout = detail::parse_double(key, v);
    } else if (key == "scale") {
        c.scale = detail::parse_int(key, v);
    } else if (key == "channels") {
        c.channels = detail::parse_int(key, v);
    } else if (key == "classes") {
        c.classes = detail::parse_int(key, v);
    } else if (key == "bottleneck") {
        c.bottleneck = detail::parse_int(key, v);
    } else {
        throw ConfigError(detail::msg("unknown config key '", key, "'"));
    }
}

inline void config_set(NetConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError(detail::msg("expected key=value, got '", assignment, "'"));
    config_set(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

// Flat key-value text: one "key = value" per line, '#' starts a comment,
// blank lines ignored.
inline NetConfig parse_config_text(const std::string& text) {
    NetConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(detail::msg("config line ", lineno, ": expected key=value"));
        config_set(c, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return c;
}

inline NetConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError(detail::msg("cannot open config file '", path, "'"));
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

// Fully resolved, canonically ordered form; stable across runs so it can be
// embedded in manifests and checkpoints.
inline std::string serialize_config(const NetConfig& c) {
    std::ostringstream out;
    out.precision(17); // doubles survive a parse round trip
    out << "task = " << task_name(c.task) << "\n";
    out << "blocks = ";
    for (std::size_t i = 0; i < c.blocks.size(); ++i) out << (i ? "-" : "") << c.blocks[i];
    out << "\n";
    out << "growth = " << c.growth << "\n";
    out << "reduction = " << c.reduction << "\n";
    out << "initial_channels = " << c.stem_channels() << "\n";
    out << "xunit = " << (c.xunit ? "true" : "false") << "\n";
    out << "gate = " << gate_name(c.gate) << "\n";
    out << "bn = " << (c.with_bn() ? "true" : "false") << "\n";
    out << "pool = " << (c.with_pool() ? "true" : "false") << "\n";
    out << "dropout = " << c.dropout << "\n";
    if (c.task == Task::super_resolution) out << "scale = " << c.scale << "\n";
    out << "channels = " << c.image_channels() << "\n";
    if (c.task == Task::classification) out << "classes = " << c.classes << "\n";
    out << "bottleneck = " << c.bottleneck << "\n";
    return out.str();
}

} // namespace dxnet
