#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdopt/common.hpp"

namespace pdopt {

/// Iteration trace: fixed named columns, one numeric row per iteration,
/// plus JSON metadata written to a sidecar file.
struct Trace {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    nlohmann::json metadata = nlohmann::json::object();

    explicit Trace(std::vector<std::string> cols = {}) : columns(std::move(cols)) {}

    void add_row(std::vector<double> row) {
        require(row.size() == columns.size(),
                "trace: row width does not match declared columns");
        rows.push_back(std::move(row));
    }
};

/// FNV-1a hash of the canonical (sorted-key, compact) JSON dump; stored in
/// trace metadata so runs are attributable to an exact configuration.
inline std::uint64_t config_hash(const nlohmann::json& cfg) {
    std::string s = cfg.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace detail {

/// Shortest round-trippable decimal form, locale-independent.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void atomic_write(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), "trace: cannot open " + tmp + " for writing");
        out << content;
        out.flush();
        require(out.good(), "trace: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Write the trace as CSV plus a `<path>.meta.json` sidecar. Both writes go
/// through a temp file and rename, so readers never observe partial output.
/// Output bytes depend only on the trace contents.
inline void write_trace(const Trace& t, const std::string& path) {
    require(!t.columns.empty(), "trace: no columns declared");
    std::string csv;
    for (size_t c = 0; c < t.columns.size(); ++c) {
        if (c) csv += ',';
        csv += t.columns[c];
    }
    csv += '\n';
    for (const auto& row : t.rows) {
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) csv += ',';
            csv += detail::format_double(row[c]);
        }
        csv += '\n';
    }
    detail::atomic_write(path, csv);
    detail::atomic_write(path + ".meta.json", t.metadata.dump(2) + "\n");
}

}  // namespace pdopt
