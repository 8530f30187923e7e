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

// Counter-based random streams.
//
// Output n of stream (seed, stream_id) is splitmix64_mix(key + (n+1) * phi)
// with key = splitmix64_mix(seed ^ splitmix64_mix(stream_id + phi)) and phi
// the 64-bit golden-ratio increment. Any (seed, stream) pair can be created
// independently, so per-voxel streams make parallel generation independent
// of worker count and scheduling. Floating-point variates are produced by
// our own transforms (never std::*_distribution, whose algorithms are
// implementation defined).

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace verdict {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Deterministic child seed, e.g. per SNR level of a sweep.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64_mix(master ^ splitmix64_mix(index * kGoldenGamma + 0x632BE59BD9B4E019ULL));
}

class CounterRng {
public:
    static constexpr const char* kName = "splitmix64-counter/v1";

    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(splitmix64_mix(seed ^ splitmix64_mix(stream + kGoldenGamma))) {}

    std::uint64_t next_u64() { return splitmix64_mix(key_ + (++counter_) * kGoldenGamma); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1).
    double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [0, n) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % n));
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Fisher-Yates with CounterRng, so permutations are portable.
template <class RandomIt>
void shuffle(RandomIt first, RandomIt last, CounterRng& rng) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
        const auto j = static_cast<decltype(i)>(rng.below(static_cast<std::uint64_t>(i) + 1));
        using std::swap;
        swap(first[i], first[j]);
    }
}

}  // namespace verdict
