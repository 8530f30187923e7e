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

// Accuracy metrics between ground truth O and estimates E, Pearson r, the
// Wilcoxon signed-rank test and the per-method comparison report.
//
// Normalisation is 1/N everywhere. Bias is mean(O - E): positive means the
// method underestimates.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "verdict/tissue.hpp"

namespace verdict {

namespace detail {

inline void check_pair(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
    if (a == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace detail

inline double mse(const std::vector<double>& truth, const std::vector<double>& estimate) {
    detail::check_pair(truth.size(), estimate.size(), "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = truth[i] - estimate[i];
        s += d * d;
    }
    return s / static_cast<double>(truth.size());
}

inline double bias(const std::vector<double>& truth, const std::vector<double>& estimate) {
    detail::check_pair(truth.size(), estimate.size(), "bias");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += truth[i] - estimate[i];
    return s / static_cast<double>(truth.size());
}

/// Population variance around the vector's own mean.
inline double variance(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("variance: empty input");
    const double m = detail::mean(values);
    double s = 0.0;
    for (double x : values) s += (x - m) * (x - m);
    return s / static_cast<double>(values.size());
}

/// What the variance column measures. `estimates` is the default. The
/// printed formula literally spreads the ground truth (`ground_truth`),
/// which is the same for every method; `residuals` spreads O - E so that
/// mse = bias^2 + variance.
enum class VarianceMode { estimates, ground_truth, residuals };

inline VarianceMode variance_mode_from_name(const std::string& s) {
    if (s == "estimates") return VarianceMode::estimates;
    if (s == "ground_truth") return VarianceMode::ground_truth;
    if (s == "residuals") return VarianceMode::residuals;
    throw std::invalid_argument("unknown variance mode '" + s + "' (estimates|ground_truth|residuals)");
}

inline std::string variance_mode_name(VarianceMode m) {
    switch (m) {
        case VarianceMode::ground_truth: return "ground_truth";
        case VarianceMode::residuals: return "residuals";
        default: return "estimates";
    }
}

inline double variance(const std::vector<double>& truth, const std::vector<double>& estimate, VarianceMode mode) {
    detail::check_pair(truth.size(), estimate.size(), "variance");
    switch (mode) {
        case VarianceMode::ground_truth: return variance(truth);
        case VarianceMode::residuals: {
            std::vector<double> r(truth.size());
            for (std::size_t i = 0; i < r.size(); ++i) r[i] = truth[i] - estimate[i];
            return variance(r);
        }
        default: return variance(estimate);
    }
}

/// Sample correlation. Empty when either input is constant (undefined r).
inline std::optional<double> pearson_r(const std::vector<double>& truth, const std::vector<double>& estimate) {
    detail::check_pair(truth.size(), estimate.size(), "pearson_r");
    if (truth.size() < 2) throw std::invalid_argument("pearson_r: need at least 2 samples");
    auto constant = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    };
    if (constant(truth) || constant(estimate)) return std::nullopt;
    const double mx = detail::mean(truth), my = detail::mean(estimate);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double dx = truth[i] - mx, dy = estimate[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Linear-interpolation quantile (the common "type 7" rule).
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile: empty input");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must be in [0, 1]");
    std::sort(v.begin(), v.end());
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Quartiles {
    double q1 = 0.0, median = 0.0, q3 = 0.0;
    double iqr() const { return q3 - q1; }
};

inline Quartiles quartiles(const std::vector<double>& v) {
    return {quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)};
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

enum class WilcoxonMethod { automatic, exact, normal };

struct WilcoxonResult {
    double statistic = 0.0;  // W+ = sum of ranks of positive (a - b)
    double p_two_sided = 1.0;
    std::size_t n = 0;       // pairs left after dropping zero differences
    bool exact = false;
    bool degenerate = false;  // every difference was zero; statistic and p are not meaningful
};

inline constexpr std::size_t kWilcoxonExactMaxN = 25;

namespace detail {

/// Mid-ranks of |d|, multiplied by 2 so tied ranks stay integral.
inline std::vector<std::int64_t> doubled_midranks(const std::vector<double>& abs_d, double* tie_term) {
    const std::size_t n = abs_d.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return abs_d[a] < abs_d[b]; });
    std::vector<std::int64_t> r2(n);
    double ties = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && abs_d[order[j + 1]] == abs_d[order[i]]) ++j;
        const auto first = static_cast<std::int64_t>(i + 1), last = static_cast<std::int64_t>(j + 1);
        for (std::size_t k = i; k <= j; ++k) r2[order[k]] = first + last;
        const double t = static_cast<double>(j - i + 1);
        ties += t * t * t - t;
        i = j + 1;
    }
    if (tie_term) *tie_term = ties;
    return r2;
}

}  // namespace detail

inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& group_a, const std::vector<double>& group_b,
                                           WilcoxonMethod method = WilcoxonMethod::automatic) {
    if (group_a.size() != group_b.size()) throw std::invalid_argument("wilcoxon: groups must be paired (equal length)");
    if (group_a.empty()) throw std::invalid_argument("wilcoxon: empty input");
    std::vector<double> d;
    for (std::size_t i = 0; i < group_a.size(); ++i) {
        const double x = group_a[i] - group_b[i];
        if (!std::isfinite(x)) throw std::invalid_argument("wilcoxon: non-finite difference");
        if (x != 0.0) d.push_back(x);
    }
    WilcoxonResult res;
    res.n = d.size();
    if (d.empty()) {
        res.degenerate = true;
        res.p_two_sided = std::numeric_limits<double>::quiet_NaN();
        res.statistic = std::numeric_limits<double>::quiet_NaN();
        return res;
    }
    if (d.size() < 3) throw std::invalid_argument("wilcoxon: need at least 3 non-zero differences");

    std::vector<double> abs_d(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) abs_d[i] = std::fabs(d[i]);
    double tie_term = 0.0;
    const auto r2 = detail::doubled_midranks(abs_d, &tie_term);
    std::int64_t w2 = 0;  // 2 W+
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i] > 0.0) w2 += r2[i];
    res.statistic = 0.5 * static_cast<double>(w2);

    const auto n = static_cast<double>(d.size());
    res.exact = method == WilcoxonMethod::exact || (method == WilcoxonMethod::automatic && d.size() <= kWilcoxonExactMaxN);
    if (res.exact) {
        if (d.size() > 60) throw std::invalid_argument("wilcoxon: exact enumeration limited to 60 pairs");
        // Null distribution of 2 W+ over the 2^n equally likely sign patterns,
        // as counts scaled by 2^-n per step to stay in range.
        std::int64_t total = 0;
        for (auto r : r2) total += r;
        std::vector<double> dist(static_cast<std::size_t>(total) + 1, 0.0);
        dist[0] = 1.0;
        std::int64_t reach = 0;
        for (auto r : r2) {
            for (std::int64_t s = reach; s >= 0; --s) {
                const double c = dist[static_cast<std::size_t>(s)] * 0.5;
                dist[static_cast<std::size_t>(s)] = c;
                dist[static_cast<std::size_t>(s + r)] += c;
            }
            reach += r;
        }
        double lower = 0.0, upper = 0.0;
        for (std::int64_t s = 0; s <= total; ++s) {
            if (s <= w2) lower += dist[static_cast<std::size_t>(s)];
            if (s >= w2) upper += dist[static_cast<std::size_t>(s)];
        }
        res.p_two_sided = std::min(1.0, 2.0 * std::min(lower, upper));
    } else {
        const double mean = n * (n + 1.0) / 4.0;
        const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
        if (!(var > 0.0)) {
            res.p_two_sided = 1.0;
        } else {
            const double dev = std::max(0.0, std::fabs(res.statistic - mean) - 0.5);
            const double z = dev / std::sqrt(var);
            res.p_two_sided = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Per-method report

struct ParamMetricRow {
    std::string parameter;
    double mse = 0.0;
    double bias = 0.0;
    double variance = 0.0;
    std::optional<double> pearson_r;

    friend bool operator==(const ParamMetricRow&, const ParamMetricRow&) = default;
};

struct MethodEstimates {
    std::string name;
    std::vector<TissueParams> estimates;
    double runtime_s = 0.0;
};

struct MethodMetrics {
    std::string name;
    std::vector<ParamMetricRow> rows;  // f_ic, f_ees, radius_um, d_ees
    double runtime_s = 0.0;
};

struct FitReport {
    nlohmann::ordered_json dataset;  // manifest reference, copied verbatim
    std::vector<MethodMetrics> methods;
    VarianceMode variance_mode = VarianceMode::estimates;

    const MethodMetrics& method(const std::string& name) const {
        for (const auto& m : methods)
            if (m.name == name) return m;
        throw std::out_of_range("report has no method '" + name + "'");
    }
};

inline std::vector<double> param_column(const std::vector<TissueParams>& v, int param) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i].to_array()[static_cast<std::size_t>(param)];
    return out;
}

inline FitReport method_report(const std::vector<TissueParams>& truth, const std::vector<MethodEstimates>& methods,
                               nlohmann::ordered_json dataset = nlohmann::ordered_json::object(),
                               VarianceMode mode = VarianceMode::estimates) {
    if (truth.empty()) throw std::invalid_argument("method_report: empty truth table");
    FitReport rep;
    rep.dataset = std::move(dataset);
    rep.variance_mode = mode;
    for (const auto& m : methods) {
        if (m.estimates.size() != truth.size())
            throw std::invalid_argument("method_report: method '" + m.name + "' has " +
                                        std::to_string(m.estimates.size()) + " voxels, truth has " +
                                        std::to_string(truth.size()));
        for (const auto& other : rep.methods)
            if (other.name == m.name) throw std::invalid_argument("method_report: duplicate method '" + m.name + "'");
        MethodMetrics mm{m.name, {}, m.runtime_s};
        for (int p = 0; p < kTissueParamCount; ++p) {
            const auto o = param_column(truth, p);
            const auto e = param_column(m.estimates, p);
            const bool single = o.size() < 2;
            mm.rows.push_back({kParamNames[static_cast<std::size_t>(p)], verdict::mse(o, e), verdict::bias(o, e),
                               verdict::variance(o, e, mode), single ? std::nullopt : pearson_r(o, e)});
        }
        rep.methods.push_back(std::move(mm));
    }
    return rep;
}

inline nlohmann::ordered_json report_to_json(const FitReport& rep) {
    nlohmann::ordered_json j;
    j["dataset"] = rep.dataset;
    j["variance_mode"] = variance_mode_name(rep.variance_mode);
    j["methods"] = nlohmann::ordered_json::object();
    for (const auto& m : rep.methods) {
        nlohmann::ordered_json jm = nlohmann::ordered_json::object();
        for (const auto& r : m.rows) {
            nlohmann::ordered_json jr;
            jr["mse"] = r.mse;
            jr["bias"] = r.bias;
            jr["variance"] = r.variance;
            jr["pearson_r"] = r.pearson_r ? nlohmann::ordered_json(*r.pearson_r) : nlohmann::ordered_json(nullptr);
            jm[r.parameter] = jr;
        }
        j["methods"][m.name] = jm;
    }
    j["runtimes_s"] = nlohmann::ordered_json::object();
    for (const auto& m : rep.methods) j["runtimes_s"][m.name] = m.runtime_s;
    return j;
}

/// Fixed-width text table: an MSE block, a Bias block and a Variance block,
/// one row per method and one column per tissue parameter.
inline std::string report_to_table(const FitReport& rep) {
    std::size_t name_w = 6;
    for (const auto& m : rep.methods) name_w = std::max(name_w, m.name.size());
    std::string out;
    char buf[64];
    auto header = [&](const char* title) {
        out += title;
        out += '\n';
        out += std::string(name_w, ' ');
        for (int p = 0; p < kTissueParamCount; ++p) {
            std::snprintf(buf, sizeof(buf), "  %12s", kParamNames[static_cast<std::size_t>(p)]);
            out += buf;
        }
        out += '\n';
    };
    auto block = [&](const char* title, auto field) {
        header(title);
        for (const auto& m : rep.methods) {
            out += m.name + std::string(name_w - m.name.size(), ' ');
            for (const auto& r : m.rows) {
                std::snprintf(buf, sizeof(buf), "  %12.4g", field(r));
                out += buf;
            }
            out += '\n';
        }
        out += '\n';
    };
    block("MSE", [](const ParamMetricRow& r) { return r.mse; });
    block("Bias", [](const ParamMetricRow& r) { return r.bias; });
    block("Variance", [](const ParamMetricRow& r) { return r.variance; });
    return out;
}

}  // namespace verdict
