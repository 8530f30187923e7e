/*
 * Copyright 2026 The verdict-fit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Minimal CSV helpers. Every file we write is UTF-8, LF-terminated, with a
// mandatory header row. Doubles are written in shortest round-trip form so
// that re-reading a file reproduces the in-memory values bit-exactly.

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace verdict::csv {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) throw std::runtime_error("csv: failed to format double");
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::runtime_error("csv: cannot parse number '" + std::string(s) + "'");
    return v;
}

inline std::int64_t parse_int(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::runtime_error("csv: cannot parse integer '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        if (!field.empty() && field.back() == '\r') field.remove_suffix(1);
        out.emplace_back(field);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }

    int require_column(std::string_view name, const std::string& source) const {
        int c = column(name);
        if (c < 0) throw std::runtime_error(source + ": missing column '" + std::string(name) + "'");
        return c;
    }
};

inline Table read_string(const std::string& text, const std::string& source = "csv") {
    Table t;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size())
            throw std::runtime_error(source + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(t.header.size()) + " fields, got " +
                                     std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw std::runtime_error(source + ": empty file (header row required)");
    return t;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Table read_file(const std::string& path) { return read_string(slurp(path), path); }

inline void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << contents;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// Appends fields joined by commas plus a trailing LF.
class RowWriter {
public:
    explicit RowWriter(std::string& sink) : sink_(sink) {}

    RowWriter& operator<<(double v) { return field(format_double(v)); }
    RowWriter& operator<<(std::int64_t v) { return field(std::to_string(v)); }
    RowWriter& operator<<(int v) { return field(std::to_string(v)); }
    RowWriter& operator<<(std::size_t v) { return field(std::to_string(v)); }
    RowWriter& operator<<(const std::string& v) { return field(v); }
    RowWriter& operator<<(const char* v) { return field(v); }

    void end() {
        sink_ += '\n';
        first_ = true;
    }

private:
    RowWriter& field(std::string_view s) {
        if (!first_) sink_ += ',';
        sink_ += s;
        first_ = false;
        return *this;
    }

    std::string& sink_;
    bool first_ = true;
};

}  // namespace verdict::csv
