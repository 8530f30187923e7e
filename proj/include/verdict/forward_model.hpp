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

// Three-compartment VERDICT signal model (spherical-mean form).
//
//   S = s0 * [ f_vasc * S_vasc(b) + f_ic * S_ic(b, delta, Delta, R) + f_ees * S_ees(b) ]
//
//   S_vasc : randomly oriented sticks ("astrosticks"), d_vasc = 8 um^2/ms
//   S_ic   : impermeable sphere of radius R in the GPD approximation, d_ic = 2 um^2/ms
//   S_ees  : isotropic ball, exp(-b d_ees)
//
// All derivatives are analytic. VerdictModel caches per-measurement constants
// and is immutable after construction, so a single instance can be shared by
// any number of worker threads.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "verdict/gpd_roots.hpp"
#include "verdict/protocol.hpp"
#include "verdict/tissue.hpp"

namespace verdict {

struct ModelConstants {
    double d_ic = 2.0;    // intra-sphere diffusivity, um^2/ms
    double d_vasc = 8.0;  // intra-stick diffusivity, um^2/ms
};

using SignalVector = Eigen::VectorXd;
using JacobianMatrix = Eigen::Matrix<double, Eigen::Dynamic, kParamCount>;

inline constexpr std::size_t kDefaultRootCount = 20;

/// Ball compartment, exp(-b d). b in ms/um^2, d in um^2/ms.
inline double signal_ees(double b, double d_ees) {
    if (!(b >= 0.0)) throw std::invalid_argument("signal_ees: b must be >= 0");
    return std::exp(-b * d_ees);
}

/// Spherical mean of sticks, (sqrt(pi)/2) erf(sqrt(x)) / sqrt(x) with x = b d.
/// Below x = 1e-6 the three-term Taylor series 1 - x/3 + x^2/10 replaces the
/// 0/0 form.
inline double signal_vasc(double b, double d_vasc) {
    if (!(b >= 0.0)) throw std::invalid_argument("signal_vasc: b must be >= 0");
    const double x = b * d_vasc;
    if (x < 1e-6) return 1.0 - x / 3.0 + x * x / 10.0;
    const double z = std::sqrt(x);
    return 0.5 * std::sqrt(std::numbers::pi) * std::erf(z) / z;
}

struct SphereAttenuation {
    double value = 1.0;
    double d_radius = 0.0;  // d value / d radius
};

/// GPD sphere attenuation for a pulsed-gradient measurement.
///
///   ln S = -(2 (gamma G)^2 / d) sum_m alpha_m^-4 / (alpha_m^2 R^2 - 2)
///            * [ 2 delta - (2 + e(Delta-delta) - 2 e(delta) - 2 e(Delta) + e(Delta+delta)) / (alpha_m^2 d) ]
///
/// where e(t) = exp(-alpha_m^2 d t) and alpha_m = x_m / R. With the root table
/// substituted, alpha^-4 / (alpha^2 R^2 - 2) = R^4 / (x^4 (x^2 - 2)), which is
/// what is differentiated for d/dR. Terms decay like x_m^-6, so truncating at
/// 20 roots (x_20 ~ 63) leaves a relative tail below 1e-8 of the exponent.
inline SphereAttenuation sphere_attenuation(double gamma_g_sq, double delta, double Delta, double radius, double d_ic,
                                            const SphereRootTable& roots, bool with_derivative = true) {
    if (roots.m_count() == 0) throw std::invalid_argument("sphere_attenuation: empty root table");
    if (gamma_g_sq == 0.0) return {1.0, 0.0};

    const double R = radius;
    const double R2 = R * R;
    const double R3 = R2 * R;
    const double R4 = R2 * R2;
    double sum = 0.0;
    double dsum = 0.0;
    for (double x : roots.roots) {
        const double x2 = x * x;
        const double c = 1.0 / (x2 * x2 * (x2 - 2.0));
        const double k = x2 * d_ic / R2;  // alpha^2 d
        // below exp(-40) the exponentials vanish against the leading 2
        const bool tiny = k * std::min(delta, Delta - delta) > 40.0;
        const double e_d = tiny ? 0.0 : std::exp(-k * delta);
        const double e_Dmd = tiny ? 0.0 : std::exp(-k * (Delta - delta));
        const double e_D = e_d * e_Dmd;
        const double e_Dpd = e_D * e_d;
        const double N = 2.0 + e_Dmd - 2.0 * e_d - 2.0 * e_D + e_Dpd;
        const double h = 2.0 * delta - N / k;
        sum += c * R4 * h;
        if (with_derivative) {
            const double dN = -(Delta - delta) * e_Dmd + 2.0 * delta * e_d + 2.0 * Delta * e_D - (Delta + delta) * e_Dpd;
            dsum += c * (4.0 * R3 * h + 2.0 * R3 * (dN * k - N) / k);
        }
    }
    const double scale = -2.0 * gamma_g_sq / d_ic;
    SphereAttenuation out;
    out.value = std::exp(scale * sum);
    out.d_radius = with_derivative ? out.value * scale * dsum : 0.0;
    return out;
}

/// Sphere compartment for one measurement setting.
inline double signal_sphere(const MeasurementSetting& setting, double radius, const SphereRootTable& roots,
                            const ModelConstants& model = {}, const PhysicalConstants& phys = {}) {
    if (roots.m_count() == 0) throw std::invalid_argument("signal_sphere: empty root table");
    if (!(radius > 0.0)) throw std::invalid_argument("signal_sphere: radius must be > 0");
    const double G = gradient_strength(setting, phys);
    const double gg = phys.gamma * G * phys.gamma * G;
    return sphere_attenuation(gg, setting.delta, setting.Delta, radius, model.d_ic, roots, false).value;
}

class VerdictModel {
public:
    explicit VerdictModel(AcquisitionProtocol protocol, ModelConstants model = {}, PhysicalConstants phys = {},
                          std::size_t root_count = kDefaultRootCount)
        : protocol_(std::move(protocol)), model_(model), phys_(phys), roots_(compute_gpd_roots(root_count)) {
        cache_.reserve(protocol_.size());
        for (const auto& s : protocol_) {
            Cached c;
            c.is_b0 = s.is_b0;
            c.b = s.b_internal();
            const double G = gradient_strength(s, phys_);
            c.gamma_g_sq = phys_.gamma * G * phys_.gamma * G;
            c.delta = s.delta;
            c.Delta = s.Delta;
            c.s_vasc = signal_vasc(c.b, model_.d_vasc);
            cache_.push_back(c);
        }
    }

    const AcquisitionProtocol& protocol() const { return protocol_; }
    const SphereRootTable& roots() const { return roots_; }
    const ModelConstants& constants() const { return model_; }
    std::size_t size() const { return protocol_.size(); }

    /// Fills signal (length size()) and, if non-null, the row-major
    /// size() x 5 Jacobian. No range validation.
    void evaluate(const TissueParams& p, double* signal, double* jac) const {
        const double f_vasc = 1.0 - p.f_ic - p.f_ees;
        for (std::size_t i = 0; i < cache_.size(); ++i) {
            const Cached& c = cache_[i];
            double* J = jac ? jac + i * kParamCount : nullptr;
            if (c.is_b0) {
                signal[i] = p.s0;
                if (J) {
                    J[0] = J[1] = J[2] = J[3] = 0.0;
                    J[4] = 1.0;
                }
                continue;
            }
            const auto sph = sphere_attenuation(c.gamma_g_sq, c.delta, c.Delta, p.radius, model_.d_ic, roots_, J != nullptr);
            const double s_ees = std::exp(-c.b * p.d_ees);
            const double mix = f_vasc * c.s_vasc + p.f_ic * sph.value + p.f_ees * s_ees;
            signal[i] = p.s0 * mix;
            if (J) {
                J[0] = p.s0 * (sph.value - c.s_vasc);
                J[1] = p.s0 * (s_ees - c.s_vasc);
                J[2] = p.s0 * p.f_ic * sph.d_radius;
                J[3] = -p.s0 * p.f_ees * c.b * s_ees;
                J[4] = mix;
            }
        }
    }

    SignalVector signal(const TissueParams& p, bool allow_unphysical_fvasc = false) const {
        check(p, allow_unphysical_fvasc);
        SignalVector s(size());
        evaluate(p, s.data(), nullptr);
        return s;
    }

    JacobianMatrix jacobian(const TissueParams& p) const {
        check(p, false);
        SignalVector s(size());
        Eigen::Matrix<double, Eigen::Dynamic, kParamCount, Eigen::RowMajor> J(size(), kParamCount);
        evaluate(p, s.data(), J.data());
        return J;
    }

    /// Per-compartment signals for measurement i (vasc, ic, ees).
    std::array<double, 3> compartments(std::size_t i, double radius, double d_ees) const {
        const Cached& c = cache_.at(i);
        if (c.is_b0) return {1.0, 1.0, 1.0};
        return {c.s_vasc,
                sphere_attenuation(c.gamma_g_sq, c.delta, c.Delta, radius, model_.d_ic, roots_, false).value,
                std::exp(-c.b * d_ees)};
    }

private:
    struct Cached {
        bool is_b0 = false;
        double b = 0.0;
        double gamma_g_sq = 0.0;
        double delta = 0.0;
        double Delta = 0.0;
        double s_vasc = 1.0;
    };

    static void check(const TissueParams& p, bool allow_unphysical_fvasc) {
        ParameterBox box;
        box.s0 = {0.0, std::numeric_limits<double>::infinity()};
        validate_params(p, box, allow_unphysical_fvasc);
    }

    AcquisitionProtocol protocol_;
    ModelConstants model_;
    PhysicalConstants phys_;
    SphereRootTable roots_;
    std::vector<Cached> cache_;
};

/// Convenience wrapper; prefer a shared VerdictModel for repeated evaluation.
inline SignalVector signal_total(const TissueParams& params, const AcquisitionProtocol& protocol,
                                 const ModelConstants& model = {}, const PhysicalConstants& phys = {},
                                 std::size_t root_count = kDefaultRootCount) {
    return VerdictModel(protocol, model, phys, root_count).signal(params);
}

/// Analytic d signal / d (f_ic, f_ees, radius, d_ees, s0).
inline JacobianMatrix signal_jacobian(const TissueParams& params, const AcquisitionProtocol& protocol,
                                      const ModelConstants& model = {}, const PhysicalConstants& phys = {},
                                      std::size_t root_count = kDefaultRootCount) {
    return VerdictModel(protocol, model, phys, root_count).jacobian(params);
}

}  // namespace verdict
