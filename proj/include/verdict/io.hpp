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

// File formats: datasets, bare signal tables, per-voxel estimates, network
// models, training traces, scatter and sweep tables, and run manifests.
//
// Dataset CSV: voxel_id,f_ic,f_ees,radius_um,d_ees,s0,clean_0..,noisy_0..
// Signal CSV:  voxel_id,s_0..
// Estimates:   voxel_id,f_ic,f_ees,radius_um,d_ees,s0,residual,iterations,converged
//
// Doubles are written in shortest round-trip form, so every table re-reads
// bit-exactly. Model weights are a base64 blob of little-endian float64.

#pragma once

#include <openssl/evp.h>

#include <bit>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "verdict/csv.hpp"
#include "verdict/metrics.hpp"
#include "verdict/mlp.hpp"
#include "verdict/nlls.hpp"
#include "verdict/simulate.hpp"

namespace verdict::io {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Signals and datasets

/// A signal table read from disk. Truth and clean signals are present only
/// for dataset files.
struct SignalFile {
    std::vector<std::int64_t> voxel_ids;
    SignalTable signals;  // noisy signals of a dataset, or the bare signals
    std::optional<std::vector<TissueParams>> truth;
    std::optional<SignalTable> clean;

    std::size_t size() const { return voxel_ids.size(); }
};

inline std::string dataset_to_csv(const SyntheticDataset& ds) {
    const auto m = ds.clean.cols();
    std::string out = "voxel_id";
    for (const char* name : kParamNames) out += std::string(",") + name;
    for (Eigen::Index k = 0; k < m; ++k) out += ",clean_" + std::to_string(k);
    for (Eigen::Index k = 0; k < m; ++k) out += ",noisy_" + std::to_string(k);
    out += '\n';
    csv::RowWriter w(out);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        w << i;
        for (double v : ds.params[i].to_array()) w << v;
        for (Eigen::Index k = 0; k < m; ++k) w << ds.clean(row, k);
        for (Eigen::Index k = 0; k < m; ++k) w << ds.noisy(row, k);
        w.end();
    }
    return out;
}

/// Metadata stored next to a dataset (in its run manifest).
inline Json dataset_metadata(const SyntheticDataset& ds, const std::string& protocol_file,
                             const std::string& generator_name = "uniform-rician/v1") {
    Json j;
    j["seed"] = ds.seed;
    j["snr"] = ds.snr;
    j["n"] = ds.size();
    j["protocol_file"] = protocol_file;
    j["generator_name"] = generator_name;
    j["format_version"] = kFormatVersion;
    return j;
}

inline std::string signals_to_csv(const std::vector<std::int64_t>& ids, const SignalTable& s) {
    if (ids.size() != static_cast<std::size_t>(s.rows())) throw std::invalid_argument("signals_to_csv: id count mismatch");
    std::string out = "voxel_id";
    for (Eigen::Index k = 0; k < s.cols(); ++k) out += ",s_" + std::to_string(k);
    out += '\n';
    csv::RowWriter w(out);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        w << ids[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < s.cols(); ++k) w << s(i, k);
        w.end();
    }
    return out;
}

namespace detail {

inline std::vector<int> prefixed_columns(const csv::Table& t, const std::string& prefix) {
    std::vector<int> cols;
    for (int k = 0;; ++k) {
        const int c = t.column(prefix + std::to_string(k));
        if (c < 0) break;
        cols.push_back(c);
    }
    return cols;
}

inline SignalTable read_block(const csv::Table& t, const std::vector<int>& cols) {
    SignalTable s(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t k = 0; k < cols.size(); ++k)
            s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = csv::parse_double(t.rows[i][cols[k]]);
    return s;
}

inline std::vector<TissueParams> read_params(const csv::Table& t, const std::string& source) {
    std::array<int, kParamCount> c{};
    for (int k = 0; k < kParamCount; ++k) c[k] = t.require_column(kParamNames[k], source);
    std::vector<TissueParams> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        std::array<double, kParamCount> a{};
        for (int k = 0; k < kParamCount; ++k) a[k] = csv::parse_double(row[c[k]]);
        out.push_back(TissueParams::from_array(a));
    }
    return out;
}

inline std::vector<std::int64_t> read_ids(const csv::Table& t, const std::string& source) {
    const int c = t.require_column("voxel_id", source);
    std::vector<std::int64_t> ids;
    ids.reserve(t.rows.size());
    for (const auto& row : t.rows) ids.push_back(csv::parse_int(row[c]));
    return ids;
}

}  // namespace detail

/// Reads a dataset CSV (signals = noisy columns) or a bare signal CSV.
inline SignalFile signals_from_csv(const std::string& text, const std::string& source = "signals") {
    const auto t = csv::read_string(text, source);
    SignalFile f;
    f.voxel_ids = detail::read_ids(t, source);
    const auto noisy = detail::prefixed_columns(t, "noisy_");
    if (!noisy.empty()) {
        const auto clean = detail::prefixed_columns(t, "clean_");
        if (clean.size() != noisy.size())
            throw std::runtime_error(source + ": clean_* and noisy_* column counts differ");
        f.signals = detail::read_block(t, noisy);
        f.clean = detail::read_block(t, clean);
        f.truth = detail::read_params(t, source);
    } else {
        const auto bare = detail::prefixed_columns(t, "s_");
        if (bare.empty()) throw std::runtime_error(source + ": no signal columns (expected noisy_0.. or s_0..)");
        f.signals = detail::read_block(t, bare);
    }
    if (f.size() == 0) throw std::runtime_error(source + ": no voxels");
    return f;
}

inline SignalFile load_signals(const std::string& path) { return signals_from_csv(csv::slurp(path), path); }

// ---------------------------------------------------------------------------
// Estimates

struct EstimateRow {
    std::int64_t voxel_id = 0;
    TissueParams params{};
    double residual = 0.0;  // sum of squared signal residuals
    int iterations = 0;
    bool converged = true;
};

inline constexpr const char* kEstimatesHeader = "voxel_id,f_ic,f_ees,radius_um,d_ees,s0,residual,iterations,converged";

inline std::string estimates_to_csv(const std::vector<EstimateRow>& rows) {
    std::string out = std::string(kEstimatesHeader) + "\n";
    csv::RowWriter w(out);
    for (const auto& r : rows) {
        w << r.voxel_id;
        for (double v : r.params.to_array()) w << v;
        w << r.residual << r.iterations << (r.converged ? 1 : 0);
        w.end();
    }
    return out;
}

inline std::vector<EstimateRow> estimates_from_csv(const std::string& text, const std::string& source = "estimates") {
    const auto t = csv::read_string(text, source);
    const auto ids = detail::read_ids(t, source);
    const auto params = detail::read_params(t, source);
    const int cr = t.require_column("residual", source);
    const int ci = t.require_column("iterations", source);
    const int cc = t.require_column("converged", source);
    std::vector<EstimateRow> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out[i].voxel_id = ids[i];
        out[i].params = params[i];
        out[i].residual = csv::parse_double(t.rows[i][cr]);
        out[i].iterations = static_cast<int>(csv::parse_int(t.rows[i][ci]));
        out[i].converged = csv::parse_int(t.rows[i][cc]) != 0;
    }
    return out;
}

inline std::vector<EstimateRow> load_estimates(const std::string& path) {
    return estimates_from_csv(csv::slurp(path), path);
}

/// Rows for network estimates: residual is the SSE of the fitted signal.
inline std::vector<EstimateRow> estimate_rows(const std::vector<std::int64_t>& ids, const std::vector<TissueParams>& p,
                                              const SignalTable& signals, const VerdictModel& model,
                                              std::size_t threads = 1) {
    if (ids.size() != p.size() || p.size() != static_cast<std::size_t>(signals.rows()))
        throw std::invalid_argument("estimate_rows: size mismatch");
    std::vector<EstimateRow> out(p.size());
    parallel_for(p.size(), threads, [&](std::size_t i) {
        std::vector<double> buf(model.size());
        out[i] = {ids[i], p[i], verdict::detail::sse_at(model, p[i], signals.row(static_cast<Eigen::Index>(i)).data(), buf.data()), 0, true};
    });
    return out;
}

inline std::vector<EstimateRow> estimate_rows(const std::vector<std::int64_t>& ids, const std::vector<FitResult>& fits) {
    if (ids.size() != fits.size()) throw std::invalid_argument("estimate_rows: size mismatch");
    std::vector<EstimateRow> out(fits.size());
    for (std::size_t i = 0; i < fits.size(); ++i)
        out[i] = {ids[i], fits[i].params, fits[i].residual_norm, fits[i].iterations, fits[i].converged};
    return out;
}

inline std::vector<TissueParams> params_of(const std::vector<EstimateRow>& rows) {
    std::vector<TissueParams> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.params);
    return out;
}

// ---------------------------------------------------------------------------
// Models

inline std::string encode_float64_blob(const std::vector<double>& v) {
    std::string bytes(v.size() * 8, '\0');
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto u = std::bit_cast<std::uint64_t>(v[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
    }
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

inline std::vector<double> decode_float64_blob(const std::string& b64, std::size_t count) {
    if (b64.size() % 4 != 0) throw std::runtime_error("weight blob: base64 length is not a multiple of 4");
    std::string bytes(b64.size() / 4 * 3 + 1, '\0');
    int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(bytes.data()),
                            reinterpret_cast<const unsigned char*>(b64.data()), static_cast<int>(b64.size()));
    if (n < 0) throw std::runtime_error("weight blob: invalid base64");
    // EVP_DecodeBlock keeps the zero bytes that stand in for '=' padding
    for (std::size_t k = b64.size(); k > 0 && b64[k - 1] == '='; --k) --n;
    if (static_cast<std::size_t>(n) != count * 8)
        throw std::runtime_error("weight blob: expected " + std::to_string(count) + " float64 values");
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
        v[i] = std::bit_cast<double>(u);
    }
    return v;
}

inline Json model_to_json(const MlpModel& m, const std::string& kind) {
    m.validate();
    Json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = kind;
    j["layer_sizes"] = m.layer_sizes;
    j["activation"] = activation_name(m.activation);
    j["seed"] = m.seed;
    Json ranges = Json::array();
    for (const auto& r : m.output_ranges) ranges.push_back({r.lo, r.hi});
    j["output_ranges"] = ranges;
    j["parameter_count"] = m.parameter_count();
    j["parameter_layout"] = "per layer: weights column-major (out x in), then biases";
    j["parameter_encoding"] = "base64 float64 little-endian";
    j["parameters"] = encode_float64_blob(m.flatten());
    return j;
}

struct LoadedModel {
    MlpModel model;
    std::string kind;
};

inline LoadedModel model_from_json(const Json& j, const std::string& source = "model") {
    try {
        if (j.at("format_version").get<int>() != kFormatVersion)
            throw std::runtime_error("unsupported format_version");
        LoadedModel out;
        out.kind = j.at("kind").get<std::string>();
        const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
        out.model = make_mlp(sizes, activation_from_name(j.at("activation").get<std::string>()),
                             j.at("seed").get<std::uint64_t>());
        for (const auto& r : j.at("output_ranges")) out.model.output_ranges.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
        if (j.at("parameter_encoding").get<std::string>() != "base64 float64 little-endian")
            throw std::runtime_error("unsupported parameter_encoding");
        out.model.unflatten(decode_float64_blob(j.at("parameters").get<std::string>(), out.model.parameter_count()));
        out.model.validate();
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(source + ": malformed model file (" + e.what() + ")");
    } catch (const std::exception& e) {
        throw std::runtime_error(source + ": " + e.what());
    }
}

inline LoadedModel load_model(const std::string& path) {
    Json j;
    try {
        j = Json::parse(csv::slurp(path));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": invalid JSON (" + e.what() + ")");
    }
    return model_from_json(j, path);
}

// ---------------------------------------------------------------------------
// Traces, scatter and sweep tables

inline std::string trace_to_csv(const TrainTrace& t) {
    std::string out = "epoch,train_loss,val_loss\n";
    csv::RowWriter w(out);
    for (std::size_t e = 0; e < t.train_loss.size(); ++e) {
        w << e << t.train_loss[e] << t.val_loss[e];
        w.end();
    }
    return out;
}

inline std::string scatter_to_csv(const std::vector<double>& truth, const std::vector<double>& estimate) {
    if (truth.size() != estimate.size()) throw std::invalid_argument("scatter_to_csv: length mismatch");
    std::string out = "truth,estimate\n";
    csv::RowWriter w(out);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        w << truth[i] << estimate[i];
        w.end();
    }
    return out;
}

/// One (snr, method) block of estimate - truth differences, per parameter.
struct SweepBlock {
    double snr = 0.0;
    std::string method;
    std::array<std::vector<double>, kTissueParamCount> diff;
};

inline SweepBlock sweep_block(double snr, const std::string& method, const std::vector<TissueParams>& truth,
                              const std::vector<TissueParams>& estimate) {
    if (truth.size() != estimate.size()) throw std::invalid_argument("sweep_block: length mismatch");
    SweepBlock b{snr, method, {}};
    for (int p = 0; p < kTissueParamCount; ++p) {
        auto& d = b.diff[static_cast<std::size_t>(p)];
        d.resize(truth.size());
        for (std::size_t i = 0; i < truth.size(); ++i) d[i] = estimate[i].to_array()[p] - truth[i].to_array()[p];
    }
    return b;
}

inline std::string sweep_to_csv(const std::vector<SweepBlock>& blocks) {
    std::string out = "snr,method,param,diff\n";
    csv::RowWriter w(out);
    for (const auto& b : blocks)
        for (int p = 0; p < kTissueParamCount; ++p)
            for (double d : b.diff[static_cast<std::size_t>(p)]) {
                w << b.snr << b.method << kParamNames[p] << d;
                w.end();
            }
    return out;
}

inline std::string sweep_summary_to_csv(const std::vector<SweepBlock>& blocks) {
    std::string out = "snr,method,param,n,q1,median,q3,iqr\n";
    csv::RowWriter w(out);
    for (const auto& b : blocks)
        for (int p = 0; p < kTissueParamCount; ++p) {
            const auto& d = b.diff[static_cast<std::size_t>(p)];
            const auto q = quartiles(d);
            w << b.snr << b.method << kParamNames[p] << d.size() << q.q1 << q.median << q.q3 << q.iqr();
            w.end();
        }
    return out;
}

// ---------------------------------------------------------------------------
// Run manifests

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(csv::slurp(path)); }

struct RunManifest {
    std::vector<std::string> command_line;
    Json seeds = Json::object();
    Json config = Json::object();
    Json extra = Json::object();  // command-specific metadata, e.g. the dataset block
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<std::pair<std::string, double>> stages;  // wall-clock seconds

    /// Digests are taken from the files as they are on disk now.
    Json to_json() const {
        Json j;
        j["format_version"] = kFormatVersion;
        j["tool_version"] = kToolVersion;
        j["command_line"] = command_line;
        j["seeds"] = seeds;
        j["config"] = config;
        for (const auto& [k, v] : extra.items()) j[k] = v;
        auto digests = [](const std::vector<std::string>& paths) {
            Json a = Json::array();
            for (const auto& p : paths) a.push_back({{"path", p}, {"sha256", sha256_file(p)}});
            return a;
        };
        j["inputs"] = digests(inputs);
        j["outputs"] = digests(outputs);
        Json st = Json::object();
        for (const auto& [name, s] : stages) st[name] = s;
        j["wall_clock_s"] = st;
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        j["created_utc"] = buf;
        return j;
    }
};

}  // namespace verdict::io
