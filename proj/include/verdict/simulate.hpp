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

// Synthetic VERDICT datasets: uniform parameter draws, noise-free signals
// from the forward model, and Rician magnitude noise.
//
// Stream layout: voxel i of a dataset with seed s draws its parameters from
// CounterRng(s, 2 i) and its noise from CounterRng(s, 2 i + 1). SNR level k
// of a sweep uses seed derive_seed(master, k).

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "verdict/forward_model.hpp"
#include "verdict/parallel.hpp"
#include "verdict/rng.hpp"

namespace verdict {

using SignalTable = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SamplingRanges {
    Interval f_ic{0.01, 0.99};
    Interval f_ees{0.01, 0.99};
    Interval radius{0.01, 15.0};
    Interval d_ees{0.5, 3.0};

    void validate() const {
        for (const Interval* iv : {&f_ic, &f_ees, &radius, &d_ees})
            if (!(iv->lo < iv->hi)) throw std::invalid_argument("sampling ranges: lower bound must be < upper bound");
    }

    /// Fitting box with these tissue ranges and the default s0 interval.
    ParameterBox to_box() const {
        ParameterBox b;
        b.f_ic = f_ic;
        b.f_ees = f_ees;
        b.radius = radius;
        b.d_ees = d_ees;
        return b;
    }
};

/// One uniform draw. The (f_ic, f_ees) pair is redrawn until
/// f_ic + f_ees <= 1 unless allow_unphysical_fvasc is set; s0 is 1.
inline TissueParams sample_one(const SamplingRanges& r, CounterRng& rng, bool allow_unphysical_fvasc = false) {
    TissueParams p;
    do {
        p.f_ic = rng.uniform(r.f_ic.lo, r.f_ic.hi);
        p.f_ees = rng.uniform(r.f_ees.lo, r.f_ees.hi);
    } while (!allow_unphysical_fvasc && p.f_ic + p.f_ees > 1.0);
    p.radius = rng.uniform(r.radius.lo, r.radius.hi);
    p.d_ees = rng.uniform(r.d_ees.lo, r.d_ees.hi);
    p.s0 = 1.0;
    return p;
}

inline std::vector<TissueParams> sample_params(std::size_t n, const SamplingRanges& r, CounterRng& rng,
                                               bool allow_unphysical_fvasc = false) {
    if (n < 1) throw std::invalid_argument("sample_params: n must be >= 1");
    r.validate();
    std::vector<TissueParams> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_one(r, rng, allow_unphysical_fvasc));
    return out;
}

/// sqrt((s + e1)^2 + e2^2), e1, e2 ~ N(0, sigma^2), sigma = 1/snr (unit s0
/// reference). snr = +inf gives sigma = 0 and returns the input unchanged.
inline void add_rician_noise_inplace(double* values, std::size_t n, double snr, CounterRng& rng) {
    if (!(snr > 0.0)) throw std::invalid_argument("add_rician_noise: snr must be > 0");
    const double sigma = 1.0 / snr;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(values[i] >= 0.0)) throw std::invalid_argument("add_rician_noise: clean values must be >= 0");
        const double e1 = sigma * rng.normal();
        const double e2 = sigma * rng.normal();
        if (sigma == 0.0) continue;
        const double re = values[i] + e1;
        values[i] = std::sqrt(re * re + e2 * e2);
    }
}

inline SignalVector add_rician_noise(const SignalVector& clean, double snr, CounterRng& rng) {
    SignalVector out = clean;
    add_rician_noise_inplace(out.data(), static_cast<std::size_t>(out.size()), snr, rng);
    return out;
}

struct SyntheticDataset {
    std::vector<TissueParams> params;
    SignalTable clean;
    SignalTable noisy;
    double snr = 50.0;
    std::uint64_t seed = 0;
    AcquisitionProtocol protocol;

    std::size_t size() const { return params.size(); }
};

struct SimulationOptions {
    SamplingRanges ranges{};
    bool allow_unphysical_fvasc = false;
    std::size_t threads = 1;
};

inline SyntheticDataset generate_dataset(std::size_t n, double snr, const VerdictModel& model, std::uint64_t seed,
                                         const SimulationOptions& opt = {}) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    if (!(snr > 0.0)) throw std::invalid_argument("generate_dataset: snr must be > 0");
    opt.ranges.validate();
    SyntheticDataset ds;
    ds.snr = snr;
    ds.seed = seed;
    ds.protocol = model.protocol();
    const auto m = static_cast<Eigen::Index>(model.size());
    ds.params.resize(n);
    ds.clean.resize(static_cast<Eigen::Index>(n), m);
    ds.noisy.resize(static_cast<Eigen::Index>(n), m);
    parallel_for(n, opt.threads, [&](std::size_t i) {
        CounterRng param_rng(seed, 2 * static_cast<std::uint64_t>(i));
        CounterRng noise_rng(seed, 2 * static_cast<std::uint64_t>(i) + 1);
        const TissueParams p = sample_one(opt.ranges, param_rng, opt.allow_unphysical_fvasc);
        ds.params[i] = p;
        double* clean = ds.clean.row(static_cast<Eigen::Index>(i)).data();
        model.evaluate(p, clean, nullptr);
        double* noisy = ds.noisy.row(static_cast<Eigen::Index>(i)).data();
        std::copy(clean, clean + m, noisy);
        add_rician_noise_inplace(noisy, static_cast<std::size_t>(m), snr, noise_rng);
    });
    return ds;
}

inline std::vector<SyntheticDataset> snr_sweep(std::size_t n_per_level, const std::vector<double>& snr_levels,
                                               const VerdictModel& model, std::uint64_t master_seed,
                                               const SimulationOptions& opt = {}) {
    if (snr_levels.empty()) throw std::invalid_argument("snr_sweep: no SNR levels given");
    for (double s : snr_levels)
        if (!(s > 0.0)) throw std::invalid_argument("snr_sweep: SNR levels must be > 0");
    std::vector<SyntheticDataset> out;
    out.reserve(snr_levels.size());
    for (std::size_t k = 0; k < snr_levels.size(); ++k)
        out.push_back(generate_dataset(n_per_level, snr_levels[k], model, derive_seed(master_seed, k), opt));
    return out;
}

}  // namespace verdict
