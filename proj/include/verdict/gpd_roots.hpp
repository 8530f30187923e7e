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

// Roots x_m of the sphere boundary condition used by the Gaussian phase
// distribution (GPD) restricted-diffusion series:
//
//     J_{3/2}(x) / x = J_{5/2}(x)
//
// With the half-integer Bessel functions written out this is equivalent to
//
//     f(x) = (x^2 - 2) sin x + 2 x cos x = 0,
//
// and f(k pi) = 2 k pi (-1)^k, so exactly one root lies between each pair of
// consecutive extrema of the sign pattern, i.e. in ((m-1) pi, m pi) for the
// m-th root (f ~ x^3/3 > 0 near zero). For a sphere of radius R the series
// uses alpha_m = x_m / R.

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace verdict {

namespace detail {

inline double gpd_condition(double x) { return (x * x - 2.0) * std::sin(x) + 2.0 * x * std::cos(x); }

inline double gpd_condition_derivative(double x) {
    // d/dx[(x^2 - 2) sin x + 2x cos x] = x^2 cos x
    return x * x * std::cos(x);
}

}  // namespace detail

/// Residual of the defining equation in Bessel form, J_{3/2}(x)/x - J_{5/2}(x),
/// written with the closed forms for half-integer orders.
inline double gpd_root_residual(double x) {
    return std::sqrt(2.0 / (std::numbers::pi * x)) * detail::gpd_condition(x) / (x * x);
}

struct SphereRootTable {
    std::vector<double> roots;

    std::size_t m_count() const { return roots.size(); }
    double operator[](std::size_t i) const { return roots[i]; }
};

inline SphereRootTable compute_gpd_roots(std::size_t m_count) {
    if (m_count < 1) throw std::invalid_argument("compute_gpd_roots: m_count must be >= 1");
    constexpr double pi = std::numbers::pi;
    constexpr int kMaxIterations = 200;

    SphereRootTable table;
    table.roots.reserve(m_count);
    for (std::size_t m = 1; m <= m_count; ++m) {
        double lo = (m == 1) ? 0.5 : (m - 1) * pi;
        double hi = m * pi;
        double f_lo = detail::gpd_condition(lo);
        const double f_hi = detail::gpd_condition(hi);
        if (!(f_lo * f_hi < 0.0)) throw std::logic_error("compute_gpd_roots: bracket lost its sign change");

        // Safeguarded Newton: take the Newton step when it stays inside the
        // current bracket, otherwise bisect.
        double x = 0.5 * (lo + hi);
        bool converged = false;
        for (int it = 0; it < kMaxIterations; ++it) {
            const double fx = detail::gpd_condition(x);
            if (fx == 0.0) {
                converged = true;
                break;
            }
            if ((fx < 0.0) == (f_lo < 0.0)) {
                lo = x;
                f_lo = fx;
            } else {
                hi = x;
            }
            const double dfx = detail::gpd_condition_derivative(x);
            double next = (dfx != 0.0) ? x - fx / dfx : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * x) {
                x = next;
                converged = true;
                break;
            }
            x = next;
        }
        if (!converged) throw std::runtime_error("compute_gpd_roots: Newton iteration did not converge");
        table.roots.push_back(x);
    }
    return table;
}

}  // namespace verdict
