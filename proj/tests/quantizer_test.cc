/*
 * Copyright 2026 The elfc Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "elfc/quantizer.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace elfc {
namespace {

TEST(Quantize, Examples) {
  EXPECT_EQ(Quantize(0.5, -6, 30), 32);
  EXPECT_EQ(Quantize(0.0, -6, 30), 0);
  EXPECT_EQ(Quantize(0.0, -40, 128), 0);
  EXPECT_EQ(Quantize(-0.3376, -10, 30), -346);
}

TEST(Quantize, HalfEven) {
  EXPECT_EQ(Quantize(2.5, 0, 30), 2);
  EXPECT_EQ(Quantize(3.5, 0, 30), 4);
  EXPECT_EQ(Quantize(-2.5, 0, 30), -2);
  EXPECT_EQ(Quantize(0.5 * 0.015625, -6, 30), 0);
}

TEST(Quantize, OverflowIsExact) {
  // 8 bits: centered range needs |v| < 128.
  EXPECT_EQ(Quantize(127.0, 0, 8), 127);
  EXPECT_THROW(Quantize(128.0, 0, 8), RangeError);
  EXPECT_THROW(Quantize(-128.0, 0, 8), RangeError);
  EXPECT_EQ(Quantize(127.49, 0, 8), 127);
  EXPECT_THROW(Quantize(127.5, 0, 8), RangeError);
  try {
    Quantize(3.0, -7, 8);
    FAIL();
  } catch (const RangeError& e) {
    std::string w = e.what();
    EXPECT_NE(w.find("x=3"), std::string::npos);
    EXPECT_NE(w.find("2^-7"), std::string::npos);
  }
}

TEST(Quantize, WideRange) {
  double x = std::ldexp(1.0, 100) + std::ldexp(1.0, 60);
  PlainScalar m = Quantize(x, 0, 128);
  EXPECT_EQ(m, (Int128{1} << 100) + (Int128{1} << 60));
}

TEST(Dequantize, Examples) {
  EXPECT_DOUBLE_EQ(Dequantize(32, -6), 0.5);
  EXPECT_DOUBLE_EQ(Dequantize(0, -10), 0.0);
  double x = 0.123;
  EXPECT_LE(std::fabs(Dequantize(Quantize(x, -20, 60), -20) - x),
            std::ldexp(1.0, -21));
}

TEST(Quantize, RoundTripBoundProperty) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(-1000.0, 1000.0);
  for (int k = 0; k < 20000; ++k) {
    int step = -static_cast<int>(g() % 40);
    double x = u(g);
    double back = Dequantize(Quantize(x, step, 64), step);
    ASSERT_LE(std::fabs(back - x), std::ldexp(1.0, step - 1));
  }
}

TEST(Quantize, ScaleCompositionProperty) {
  std::mt19937_64 g(6);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int k = 0; k < 2000; ++k) {
    double x = u(g), y = u(g);
    int sa = -10, sb = -14;
    PlainScalar prod = Quantize(x, sa, 60) * Quantize(y, sb, 60);
    double got = Dequantize(prod, sa + sb);
    double err = std::fabs(got - x * y);
    ASSERT_LE(err, 4.0 * std::ldexp(1.0, sb - 1) + 4.0 * std::ldexp(1.0, sa - 1) +
                       std::ldexp(1.0, sa + sb - 2));
  }
}

TEST(RoundShift, HalfEvenAndRefine) {
  EXPECT_EQ(RoundShift(5, -4, -2), 1);   // 5/4 = 1.25
  EXPECT_EQ(RoundShift(6, -4, -2), 2);   // 1.5 -> 2
  EXPECT_EQ(RoundShift(10, -4, -2), 2);  // 2.5 -> 2
  EXPECT_EQ(RoundShift(-6, -4, -2), -2);
  EXPECT_EQ(RoundShift(-10, -4, -2), -2);
  EXPECT_EQ(RoundShift(-11, -4, -2), -3);
  EXPECT_EQ(RoundShift(3, -2, -5), 24);
}

TEST(Profiles, PaperTables) {
  Profile c = SelectProfile("paper-coarse");
  EXPECT_DOUBLE_EQ(c.scale.L(), std::ldexp(1.0, -6));
  EXPECT_DOUBLE_EQ(c.scale.s1(), std::ldexp(1.0, -12));
  EXPECT_DOUBLE_EQ(c.scale.s2(), 1.0);
  EXPECT_DOUBLE_EQ(c.scale.r(), std::ldexp(1.0, -12));
  EXPECT_EQ(c.params.log_q, 30);
  EXPECT_EQ(c.params.n_L, 329);
  EXPECT_EQ(c.params.sigma, 1);
  EXPECT_EQ(c.params.log_nu, 1);
  EXPECT_EQ(c.params.published_d, 19);

  Profile f = SelectProfile("paper-fine");
  EXPECT_DOUBLE_EQ(f.scale.L(), std::ldexp(1.0, -10));
  EXPECT_DOUBLE_EQ(f.scale.s1(), std::ldexp(1.0, -20));
  EXPECT_DOUBLE_EQ(f.scale.r(), std::ldexp(1.0, -20));
  EXPECT_EQ(f.params.log_q, 60);
  EXPECT_EQ(f.params.n_L, 648);
  EXPECT_EQ(f.params.published_d, 35);

  EXPECT_THROW(SelectProfile("bogus"), LookupError);
  for (const auto& n : ProfileNames()) EXPECT_NO_THROW(SelectProfile(n).params.Validate());
  EXPECT_NO_THROW(SynthesisKeyParams().Validate());
}

TEST(Profiles, KeygenOnPaperCoarse) {
  Profile c = SelectProfile("paper-coarse");
  KeyPair kp = Keygen(c.params, 7);
  Rng rng(1);
  EXPECT_EQ(DecryptLwe(kp.sk, EncryptLwe(kp.pk, 1234, rng)), 1234);
}

}  // namespace
}  // namespace elfc
