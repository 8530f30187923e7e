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

#include "verdict/protocol.hpp"

using namespace verdict;

TEST(DefaultProtocol, HasTenSettingsFiveOfThemB0) {
    const auto p = default_protocol();
    ASSERT_EQ(p.size(), 10u);
    EXPECT_EQ(p.b0_count(), 5u);
}

TEST(DefaultProtocol, PublishedTimingsForB3000) {
    const auto p = default_protocol();
    bool found = false;
    for (const auto& s : p) {
        if (s.b == 3000.0) {
            EXPECT_DOUBLE_EQ(s.delta, 18.9);
            EXPECT_DOUBLE_EQ(s.Delta, 38.8);
            found = true;
        }
    }
    EXPECT_TRUE(found);
}

TEST(DefaultProtocol, PairingAndOrder) {
    const auto p = default_protocol();
    const double b[] = {90, 500, 1500, 2000, 3000};
    const double delta[] = {3.9, 11.4, 23.9, 14.4, 18.9};
    const double Delta[] = {23.8, 31.3, 43.8, 34.3, 38.8};
    for (int k = 0; k < 5; ++k) {
        EXPECT_EQ(p[k].b, b[k]);
        EXPECT_EQ(p[k].delta, delta[k]);
        EXPECT_EQ(p[k].Delta, Delta[k]);
        EXPECT_FALSE(p[k].is_b0);
        // matched b=0 partner
        EXPECT_TRUE(p[5 + k].is_b0);
        EXPECT_EQ(p[5 + k].b, 0.0);
        EXPECT_EQ(p[5 + k].te, p[k].te);
    }
}

TEST(DefaultProtocol, EverySettingValid) {
    for (const auto& s : default_protocol()) {
        EXPECT_LT(s.delta, s.Delta);
        EXPECT_GT(s.te, 0.0);
        EXPECT_NO_THROW(s.validate());
    }
}

TEST(Units, BToInternal) {
    EXPECT_EQ(b_to_internal(0.0), 0.0);
    EXPECT_DOUBLE_EQ(b_to_internal(3000.0), 3.0);
    EXPECT_DOUBLE_EQ(b_to_internal(90.0), 0.09);
    EXPECT_THROW(b_to_internal(-1.0), std::invalid_argument);
    for (double b : {0.0, 90.0, 500.0, 1500.0, 2000.0, 3000.0}) EXPECT_EQ(b_from_internal(b_to_internal(b)), b);
}

TEST(Units, ConversionIsLinearToOneUlp) {
    for (int i = 0; i < 10000; ++i) {
        const double b = 0.37 * i + 0.001 * (i % 7);
        const double back = b_from_internal(b_to_internal(b));
        EXPECT_LE(std::abs(back - b), std::abs(b) * 2.3e-16);
    }
}

TEST(GradientStrength, ZeroForB0) {
    MeasurementSetting s{0.0, 10.0, 30.0, 50.0, true};
    EXPECT_EQ(gradient_strength(s), 0.0);
}

TEST(GradientStrength, ResubstitutionReproducesB) {
    MeasurementSetting s{3000.0, 18.9, 38.8, 90.0, false};
    PhysicalConstants c;
    const double G = gradient_strength(s, c);
    const double b = c.gamma * c.gamma * G * G * s.delta * s.delta * (s.Delta - s.delta / 3.0);
    EXPECT_NEAR(b, 3.0, 3.0 * 1e-12);
}

TEST(GradientStrength, RoundTripAllDefaultSettings) {
    PhysicalConstants c;
    for (const auto& s : default_protocol()) {
        if (s.is_b0) continue;
        const double G = gradient_strength(s, c);
        EXPECT_LE(std::abs(b_from_gradient(G, s.delta, s.Delta, c) - s.b_internal()), 1e-12 * s.b_internal());
    }
}

TEST(GradientStrength, DeterministicAndRejectsBadTiming) {
    MeasurementSetting a{1500.0, 23.9, 43.8, 70.0, false};
    MeasurementSetting b = a;
    EXPECT_EQ(gradient_strength(a), gradient_strength(b));
    MeasurementSetting bad{1500.0, 40.0, 30.0, 70.0, false};
    EXPECT_THROW(gradient_strength(bad), std::invalid_argument);
}

TEST(Protocol, RejectsInvalidSettings) {
    EXPECT_THROW(AcquisitionProtocol({{0.0, 3.0, 20.0, 50.0, true}}), std::invalid_argument);  // no DW
    EXPECT_THROW(AcquisitionProtocol({{100.0, 3.0, 20.0, 50.0, true}}), std::invalid_argument);  // flag mismatch
    EXPECT_THROW(AcquisitionProtocol({{100.0, 30.0, 20.0, 50.0, false}}), std::invalid_argument);
    EXPECT_THROW(AcquisitionProtocol({{100.0, 3.0, 20.0, 0.0, false}}), std::invalid_argument);
}

TEST(ProtocolFile, RoundTripPreservesLayoutBitExactly) {
    const auto p = default_protocol();
    const auto text = protocol_to_csv(p);
    EXPECT_EQ(text.substr(0, text.find('\n')), kProtocolHeader);
    const auto q = protocol_from_csv(text);
    EXPECT_EQ(p, q);
    EXPECT_EQ(protocol_to_csv(q), text);
}

TEST(ProtocolFile, MalformedInputs) {
    EXPECT_THROW(protocol_from_csv("b_s_per_mm2,delta_ms\n90,3\n"), std::runtime_error);
    EXPECT_THROW(protocol_from_csv(std::string(kProtocolHeader) + "\n90,3.9,23.8,50,2\n"), std::runtime_error);
    EXPECT_THROW(protocol_from_csv(std::string(kProtocolHeader) + "\nabc,3.9,23.8,50,0\n"), std::runtime_error);
    EXPECT_THROW(protocol_from_csv(""), std::runtime_error);
}
