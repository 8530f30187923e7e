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

#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace verdict {

/// Free model parameters in fixed order. The vascular fraction is derived
/// as 1 - f_ic - f_ees and never stored.
enum class Param : int { FIc = 0, FEes = 1, Radius = 2, DEes = 3, S0 = 4 };

inline constexpr int kParamCount = 5;
inline constexpr int kTissueParamCount = 4;  // excludes s0
inline constexpr std::array<const char*, kParamCount> kParamNames = {"f_ic", "f_ees", "radius_um", "d_ees", "s0"};

struct TissueParams {
    double f_ic = 0.3;
    double f_ees = 0.3;
    double radius = 8.0;  // um
    double d_ees = 2.0;   // um^2/ms
    double s0 = 1.0;

    double f_vasc() const { return 1.0 - f_ic - f_ees; }

    std::array<double, kParamCount> to_array() const { return {f_ic, f_ees, radius, d_ees, s0}; }

    static TissueParams from_array(const std::array<double, kParamCount>& a) {
        return {a[0], a[1], a[2], a[3], a[4]};
    }

    double operator[](Param p) const { return to_array()[static_cast<int>(p)]; }

    friend bool operator==(const TissueParams&, const TissueParams&) = default;
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    double width() const { return hi - lo; }
    bool contains(double v) const { return v >= lo && v <= hi; }
    double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }

    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Closed box of admissible parameter values. The four tissue ranges are the
/// uniform sampling ranges of the simulation; s0 is only used by the fitters.
struct ParameterBox {
    Interval f_ic{0.01, 0.99};
    Interval f_ees{0.01, 0.99};
    Interval radius{0.01, 15.0};
    Interval d_ees{0.5, 3.0};
    Interval s0{0.5, 1.5};

    const Interval& operator[](int i) const {
        switch (i) {
            case 0: return f_ic;
            case 1: return f_ees;
            case 2: return radius;
            case 3: return d_ees;
            default: return s0;
        }
    }

    void validate() const {
        for (int i = 0; i < kParamCount; ++i)
            if (!((*this)[i].lo < (*this)[i].hi))
                throw std::invalid_argument(std::string("parameter box: empty interval for ") + kParamNames[i]);
    }

    friend bool operator==(const ParameterBox&, const ParameterBox&) = default;
};

/// Checks the TissueParams invariants against a box. When allow_unphysical_fvasc
/// is set, f_ic + f_ees may exceed 1 (negative vascular fraction).
inline void validate_params(const TissueParams& p, const ParameterBox& box = {}, bool allow_unphysical_fvasc = false) {
    constexpr double tol = 1e-12;
    auto in = [&](double v, const Interval& iv, const char* name) {
        if (!std::isfinite(v) || v < iv.lo - tol || v > iv.hi + tol)
            throw std::invalid_argument(std::string("tissue parameter out of range: ") + name + " = " + std::to_string(v));
    };
    in(p.f_ic, box.f_ic, "f_ic");
    in(p.f_ees, box.f_ees, "f_ees");
    in(p.radius, box.radius, "radius");
    in(p.d_ees, box.d_ees, "d_ees");
    if (!(p.s0 > 0.0) || !std::isfinite(p.s0)) throw std::invalid_argument("tissue parameter out of range: s0 must be > 0");
    if (!allow_unphysical_fvasc && p.f_ic + p.f_ees > 1.0 + tol)
        throw std::invalid_argument("tissue parameters: f_ic + f_ees exceeds 1");
}

}  // namespace verdict
