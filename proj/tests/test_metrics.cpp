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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "verdict/metrics.hpp"
#include "verdict/rng.hpp"

using namespace verdict;

namespace {

// Brute force over all 2^n sign patterns, ranks by counting.
double brute_force_p(const std::vector<double>& d) {
    const std::size_t n = d.size();
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::fabs(d[j]) < std::fabs(d[i])) ++less;
            if (std::fabs(d[j]) == std::fabs(d[i])) ++equal;
        }
        rank[i] = less + (equal + 1.0) / 2.0;
    }
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (d[i] > 0) w += rank[i];
    const std::uint64_t patterns = std::uint64_t{1} << n;
    std::uint64_t lo = 0, hi = 0;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1u) s += rank[i];
        if (s <= w + 1e-9) ++lo;
        if (s >= w - 1e-9) ++hi;
    }
    return std::min(1.0, 2.0 * static_cast<double>(std::min(lo, hi)) / static_cast<double>(patterns));
}

}  // namespace

TEST(Mse, HandCases) {
    EXPECT_EQ(mse({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}), 0.0);
    EXPECT_NEAR(mse({1.0, 2.0}, {0.0, 0.0}), 2.5, 1e-12);
    EXPECT_THROW(mse({1.0}, {1.0, 2.0}), std::invalid_argument);
    EXPECT_THROW(mse({}, {}), std::invalid_argument);
}

TEST(Bias, HandCasesAndSign) {
    EXPECT_EQ(bias({0.5, 0.7}, {0.5, 0.7}), 0.0);
    EXPECT_NEAR(bias({1.0, 1.0}, {0.0, 2.0}), 0.0, 1e-12);
    EXPECT_NEAR(bias({2.0, 4.0}, {1.0, 1.0}), 2.0, 1e-12);  // underestimation is positive
    EXPECT_THROW(bias({1.0, 2.0}, {1.0}), std::invalid_argument);
}

TEST(Variance, HandCasesAndModes) {
    EXPECT_EQ(variance({3.0, 3.0, 3.0}), 0.0);
    EXPECT_NEAR(variance({0.0, 2.0}), 1.0, 1e-12);
    const std::vector<double> o{1.0, 2.0, 3.0, 4.0}, e{0.0, 2.0, 2.0, 6.0};
    EXPECT_NEAR(variance(o, e, VarianceMode::estimates), variance(e), 0.0);
    EXPECT_NEAR(variance(o, e, VarianceMode::ground_truth), 1.25, 1e-12);
    // residuals 1, 0, 1, -2: mean 0, mean square 6/4
    EXPECT_NEAR(variance(o, e, VarianceMode::residuals), 1.5, 1e-12);
    EXPECT_EQ(variance_mode_from_name("residuals"), VarianceMode::residuals);
    EXPECT_THROW(variance_mode_from_name("sample"), std::invalid_argument);
    EXPECT_THROW(variance(std::vector<double>{}), std::invalid_argument);
}

TEST(Metrics, FuzzMseDominatesBiasSquaredAndDecomposes) {
    CounterRng rng(11, 0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform(0.0, 300.0));
        std::vector<double> o(n), e(n);
        const double shift = rng.uniform(-2.0, 2.0), scale = rng.uniform(0.0, 5.0);
        for (std::size_t i = 0; i < n; ++i) {
            o[i] = rng.uniform(-10.0, 10.0);
            e[i] = o[i] + shift + scale * rng.normal();
        }
        const double m = mse(o, e), b = bias(o, e);
        ASSERT_GE(m, b * b) << "trial " << trial;
        EXPECT_NEAR(m, b * b + variance(o, e, VarianceMode::residuals), 1e-12 * std::max(1.0, m));
    }
}

TEST(Pearson, HandCasesAndUndefined) {
    const std::vector<double> o{1.0, 2.0, 3.0, 7.0};
    EXPECT_NEAR(*pearson_r(o, o), 1.0, 1e-15);
    std::vector<double> neg;
    for (double x : o) neg.push_back(5.0 - x);
    EXPECT_NEAR(*pearson_r(o, neg), -1.0, 1e-15);
    // sxy = 3, sxx = 2, syy = 42/9 -> 3 / sqrt(84/9) = 9 / sqrt(84)
    EXPECT_NEAR(*pearson_r({1.0, 2.0, 3.0}, {1.0, 2.0, 4.0}), 9.0 / std::sqrt(84.0), 1e-12);
    EXPECT_NEAR(*pearson_r({1.0, 2.0, 3.0}, {1.0, 2.0, 4.0}), 0.98198, 1e-5);
    EXPECT_FALSE(pearson_r({1.0, 2.0, 3.0}, {4.0, 4.0, 4.0}).has_value());
    EXPECT_FALSE(pearson_r({2.0, 2.0}, {1.0, 3.0}).has_value());
    EXPECT_THROW(pearson_r({1.0}, {1.0}), std::invalid_argument);
}

TEST(Pearson, InvariantUnderPositiveAffineMaps) {
    CounterRng rng(5, 0);
    std::vector<double> o(500), e(500), e2(500), o2(500);
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = rng.uniform(0.0, 1.0);
        e[i] = o[i] + 0.3 * rng.normal();
        e2[i] = 3.5 * e[i] - 7.0;
        o2[i] = 0.25 * o[i] + 100.0;
    }
    const double r = *pearson_r(o, e);
    EXPECT_NEAR(*pearson_r(o, e2), r, 1e-12);
    EXPECT_NEAR(*pearson_r(o2, e), r, 1e-12);
}

TEST(Quantile, LinearInterpolation) {
    const std::vector<double> v{4.0, 1.0, 3.0, 2.0};
    EXPECT_EQ(quantile(v, 0.0), 1.0);
    EXPECT_EQ(quantile(v, 1.0), 4.0);
    EXPECT_NEAR(quantile(v, 0.5), 2.5, 1e-15);
    const auto q = quartiles(v);
    EXPECT_NEAR(q.q1, 1.75, 1e-15);
    EXPECT_NEAR(q.q3, 3.25, 1e-15);
    EXPECT_THROW(quantile({}, 0.5), std::invalid_argument);
}

TEST(Wilcoxon, ThreePositivePairs) {
    const auto r = wilcoxon_signed_rank({2.0, 3.0, 5.0}, {1.0, 1.0, 1.0});
    EXPECT_TRUE(r.exact);
    EXPECT_EQ(r.n, 3u);
    EXPECT_EQ(r.statistic, 6.0);
    EXPECT_NEAR(r.p_two_sided, 0.25, 1e-15);
}

TEST(Wilcoxon, IdenticalGroupsAreDegenerate) {
    const auto r = wilcoxon_signed_rank({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0});
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.n, 0u);
    EXPECT_TRUE(std::isnan(r.p_two_sided));
}

TEST(Wilcoxon, ZerosDroppedAndTooFewPairsRejected) {
    const auto r = wilcoxon_signed_rank({1.0, 2.0, 3.0, 4.0, 5.0}, {1.0, 0.0, 0.0, 0.0, 5.0});
    EXPECT_EQ(r.n, 3u);
    EXPECT_EQ(r.statistic, 6.0);
    EXPECT_THROW(wilcoxon_signed_rank({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(wilcoxon_signed_rank({1.0, 2.0}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST(Wilcoxon, SwappingGroupsMirrorsStatistic) {
    CounterRng rng(21, 0);
    for (std::size_t n : {5u, 12u, 20u, 40u}) {
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = std::round(rng.uniform(0.0, 10.0));  // coarse values give ties
            b[i] = std::round(rng.uniform(0.0, 10.0));
        }
        const auto ab = wilcoxon_signed_rank(a, b), ba = wilcoxon_signed_rank(b, a);
        ASSERT_FALSE(ab.degenerate);
        const double nn = static_cast<double>(ab.n);
        EXPECT_EQ(ab.n, ba.n);
        EXPECT_NEAR(ab.statistic + ba.statistic, nn * (nn + 1.0) / 2.0, 1e-12);
        EXPECT_NEAR(ab.p_two_sided, ba.p_two_sided, 1e-12);
    }
}

TEST(Wilcoxon, ExactBranchMatchesBruteForceEnumeration) {
    CounterRng rng(3, 0);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(rng.uniform(0.0, 10.0));
        std::vector<double> a(n), b(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = std::round(rng.uniform(-6.0, 8.0)) / 2.0;  // ties on purpose
            if (a[i] == 0.0) a[i] = 0.5;
        }
        const auto r = wilcoxon_signed_rank(a, b, WilcoxonMethod::exact);
        EXPECT_NEAR(r.p_two_sided, brute_force_p(a), 1e-12) << "trial " << trial;
    }
}

TEST(Wilcoxon, NormalBranchMatchesReferenceImplementation) {
    // Reference values: normal approximation with tie and continuity
    // correction, two-sided, from an established statistics package.
    const std::vector<double> x{0.3, -1.2, 2.5, 2.5, -0.7, 1.1, -2.5, 0.9, 3.1, -0.2, 0.4, 0.4, -0.4, 1.7, 2.2,
                                -3.3, 0.8, 0.05, 1.9, -1.1, 2.8, 0.6, -0.9, 1.3, 0.2, -0.6, 2.5, 0.7, 1.2, -0.8};
    const auto r = wilcoxon_signed_rank(x, std::vector<double>(x.size(), 0.0));
    EXPECT_FALSE(r.exact);
    const double n = 30.0;
    EXPECT_EQ(std::min(r.statistic, n * (n + 1) / 2 - r.statistic), 145.0);
    EXPECT_NEAR(r.p_two_sided, 0.0733832107119049, 1e-10);

    std::vector<double> y;
    for (int i = 1; i <= 30; ++i) y.push_back(i - 3.5);
    const auto s = wilcoxon_signed_rank(y, std::vector<double>(y.size(), 0.0));
    EXPECT_NEAR(s.p_two_sided, 5.20752999398507e-06, 1e-15);
}

TEST(Wilcoxon, ExactAndNormalAgreeAtTwentyPairs) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        CounterRng rng(seed, 0);
        std::vector<double> a(20), b(20);
        const double shift = rng.uniform(-0.6, 0.6);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = rng.normal() + shift;
            b[i] = rng.normal();
        }
        const auto ex = wilcoxon_signed_rank(a, b, WilcoxonMethod::exact);
        const auto ap = wilcoxon_signed_rank(a, b, WilcoxonMethod::normal);
        EXPECT_TRUE(ex.exact);
        EXPECT_FALSE(ap.exact);
        EXPECT_EQ(ex.statistic, ap.statistic);
        EXPECT_NEAR(ex.p_two_sided, ap.p_two_sided, 0.02) << "seed " << seed;
    }
}

namespace {

std::vector<TissueParams> random_params(std::uint64_t seed, std::size_t n) {
    CounterRng rng(seed, 0);
    std::vector<TissueParams> v(n);
    for (auto& p : v) p = {rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5), rng.uniform(0.1, 15.0), rng.uniform(0.5, 3.0), 1.0};
    return v;
}

}  // namespace

TEST(MethodReport, TruthAsEstimateGivesZeroRows) {
    const auto truth = random_params(1, 50);
    const auto rep = method_report(truth, {{"oracle", truth, 0.0}});
    ASSERT_EQ(rep.methods.size(), 1u);
    ASSERT_EQ(rep.methods[0].rows.size(), 4u);
    for (const auto& r : rep.methods[0].rows) {
        EXPECT_EQ(r.mse, 0.0);
        EXPECT_EQ(r.bias, 0.0);
        EXPECT_NEAR(*r.pearson_r, 1.0, 1e-14);
    }
    EXPECT_EQ(rep.methods[0].rows[2].parameter, "radius_um");
}

TEST(MethodReport, IdenticalEstimatesGiveIdenticalRowsAndPureJson) {
    const auto truth = random_params(1, 80);
    const auto est = random_params(2, 80);
    nlohmann::ordered_json manifest = {{"dataset", "d.csv"}, {"seed", 7}};
    const auto rep = method_report(truth, {{"a", est, 1.5}, {"b", est, 2.5}}, manifest);
    EXPECT_EQ(rep.methods[0].rows, rep.methods[1].rows);
    const auto j1 = report_to_json(rep).dump(2);
    const auto j2 = report_to_json(method_report(truth, {{"a", est, 1.5}, {"b", est, 2.5}}, manifest)).dump(2);
    EXPECT_EQ(j1, j2);
    const auto j = report_to_json(rep);
    EXPECT_EQ(j["dataset"]["seed"], 7);
    EXPECT_EQ(j["runtimes_s"]["b"], 2.5);
    EXPECT_DOUBLE_EQ(j["methods"]["a"]["f_ic"]["mse"].get<double>(), rep.methods[0].rows[0].mse);
    const auto table = report_to_table(rep);
    EXPECT_NE(table.find("MSE"), std::string::npos);
    EXPECT_NE(table.find("Bias"), std::string::npos);
    EXPECT_NE(table.find("Variance"), std::string::npos);
}

TEST(MethodReport, ConstantEstimatesReportNullCorrelation) {
    const auto truth = random_params(1, 10);
    std::vector<TissueParams> flat(10, TissueParams{0.2, 0.2, 5.0, 1.0, 1.0});
    const auto j = report_to_json(method_report(truth, {{"flat", flat, 0.0}}));
    EXPECT_TRUE(j["methods"]["flat"]["f_ic"]["pearson_r"].is_null());
}

TEST(MethodReport, RejectsMisalignedAndDuplicateMethods) {
    const auto truth = random_params(1, 10);
    EXPECT_THROW(method_report(truth, {{"short", random_params(2, 9), 0.0}}), std::invalid_argument);
    EXPECT_THROW(method_report(truth, {{"x", truth, 0.0}, {"x", truth, 0.0}}), std::invalid_argument);
    EXPECT_THROW(method_report({}, {}), std::invalid_argument);
}
