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

// Acquisition protocol: the ordered list of pulsed-gradient spin-echo
// measurement settings that defines the layout of every signal vector.
//
// Units. Files carry b in s/mm^2. Everything downstream works in
// ms / um: b in ms/um^2, diffusivities in um^2/ms, radii in um, timings in
// ms. In that system the proton gyromagnetic ratio is expressed in
// rad ms^-1 T^-1 and gradient strength G comes out in T/um.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "verdict/csv.hpp"

namespace verdict {

/// Proton gyromagnetic ratio, rad ms^-1 T^-1 (2.6752218744e8 rad s^-1 T^-1).
struct PhysicalConstants {
    double gamma = 2.6752218744e5;
};

/// s/mm^2 -> ms/um^2.
inline double b_to_internal(double b_si) {
    if (!(b_si >= 0.0)) throw std::invalid_argument("b-value must be non-negative");
    return b_si / 1000.0;
}

/// ms/um^2 -> s/mm^2.
inline double b_from_internal(double b_internal) {
    if (!(b_internal >= 0.0)) throw std::invalid_argument("b-value must be non-negative");
    return b_internal * 1000.0;
}

struct MeasurementSetting {
    double b = 0.0;      // s/mm^2
    double delta = 0.0;  // gradient pulse duration, ms
    double Delta = 0.0;  // gradient pulse separation, ms
    double te = 0.0;     // echo time, ms (metadata only)
    bool is_b0 = false;

    double b_internal() const { return b_to_internal(b); }

    // Diffusion time (Delta - delta/3), ms.
    double diffusion_time() const { return Delta - delta / 3.0; }

    void validate() const {
        if (!(b >= 0.0) || !std::isfinite(b)) throw std::invalid_argument("measurement: b must be >= 0");
        if (is_b0 != (b == 0.0)) throw std::invalid_argument("measurement: is_b0 must be set iff b == 0");
        if (!(delta > 0.0) || !(delta < Delta) || !std::isfinite(Delta))
            throw std::invalid_argument("measurement: require 0 < delta < Delta");
        if (!(te > 0.0) || !std::isfinite(te)) throw std::invalid_argument("measurement: te must be > 0");
    }

    friend bool operator==(const MeasurementSetting&, const MeasurementSetting&) = default;
};

class AcquisitionProtocol {
public:
    AcquisitionProtocol() = default;

    explicit AcquisitionProtocol(std::vector<MeasurementSetting> settings) : settings_(std::move(settings)) {
        bool any_dw = false;
        for (const auto& s : settings_) {
            s.validate();
            any_dw = any_dw || !s.is_b0;
        }
        if (!any_dw) throw std::invalid_argument("protocol: at least one diffusion-weighted setting required");
    }

    std::size_t size() const { return settings_.size(); }
    const MeasurementSetting& operator[](std::size_t i) const { return settings_[i]; }
    const std::vector<MeasurementSetting>& settings() const { return settings_; }
    auto begin() const { return settings_.begin(); }
    auto end() const { return settings_.end(); }

    std::size_t b0_count() const {
        std::size_t n = 0;
        for (const auto& s : settings_) n += s.is_b0 ? 1 : 0;
        return n;
    }

    friend bool operator==(const AcquisitionProtocol&, const AcquisitionProtocol&) = default;

private:
    std::vector<MeasurementSetting> settings_;
};

/// Optimised prostate protocol: five b/delta/Delta combinations followed by a
/// matched b=0 volume for each, i.e. indices 0-4 are diffusion weighted
/// (b = 90, 500, 1500, 2000, 3000 s/mm^2) and index 5+k is the b=0 partner of
/// index k. TE values are evenly spaced placeholders over 50-90 ms; no model
/// equation consumes them.
inline AcquisitionProtocol default_protocol() {
    struct Row {
        double b, delta, Delta, te;
    };
    static constexpr Row rows[] = {
        {90.0, 3.9, 23.8, 50.0},
        {500.0, 11.4, 31.3, 60.0},
        {1500.0, 23.9, 43.8, 70.0},
        {2000.0, 14.4, 34.3, 80.0},
        {3000.0, 18.9, 38.8, 90.0},
    };
    std::vector<MeasurementSetting> s;
    for (const auto& r : rows) s.push_back({r.b, r.delta, r.Delta, r.te, false});
    for (const auto& r : rows) s.push_back({0.0, r.delta, r.Delta, r.te, true});
    return AcquisitionProtocol(std::move(s));
}

/// Gradient strength (T/um) from b = gamma^2 G^2 delta^2 (Delta - delta/3).
inline double gradient_strength(const MeasurementSetting& s, const PhysicalConstants& c = {}) {
    if (!(s.delta < s.Delta)) throw std::invalid_argument("gradient_strength: require delta < Delta");
    if (s.b == 0.0) return 0.0;
    const double b = s.b_internal();
    return std::sqrt(b / (c.gamma * c.gamma * s.delta * s.delta * s.diffusion_time()));
}

/// b (ms/um^2) implied by a gradient strength; inverse of gradient_strength.
inline double b_from_gradient(double G, double delta, double Delta, const PhysicalConstants& c = {}) {
    return c.gamma * c.gamma * G * G * delta * delta * (Delta - delta / 3.0);
}

inline constexpr const char* kProtocolHeader = "b_s_per_mm2,delta_ms,Delta_ms,te_ms,is_b0";

inline std::string protocol_to_csv(const AcquisitionProtocol& p) {
    std::string out = std::string(kProtocolHeader) + "\n";
    csv::RowWriter w(out);
    for (const auto& s : p) {
        w << s.b << s.delta << s.Delta << s.te << (s.is_b0 ? 1 : 0);
        w.end();
    }
    return out;
}

inline AcquisitionProtocol protocol_from_csv(const std::string& text, const std::string& source = "protocol") {
    auto t = csv::read_string(text, source);
    const int cb = t.require_column("b_s_per_mm2", source);
    const int cd = t.require_column("delta_ms", source);
    const int cD = t.require_column("Delta_ms", source);
    const int ct = t.require_column("te_ms", source);
    const int c0 = t.require_column("is_b0", source);
    std::vector<MeasurementSetting> s;
    for (const auto& row : t.rows) {
        const auto flag = csv::parse_int(row[c0]);
        if (flag != 0 && flag != 1) throw std::runtime_error(source + ": is_b0 must be 0 or 1");
        s.push_back({csv::parse_double(row[cb]), csv::parse_double(row[cd]), csv::parse_double(row[cD]),
                     csv::parse_double(row[ct]), flag == 1});
    }
    return AcquisitionProtocol(std::move(s));
}

inline AcquisitionProtocol load_protocol(const std::string& path) {
    return protocol_from_csv(csv::slurp(path), path);
}

inline void save_protocol(const AcquisitionProtocol& p, const std::string& path) {
    csv::write_file(path, protocol_to_csv(p));
}

}  // namespace verdict
