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

#include <cmath>
#include <sstream>

namespace elfc {

double ScaleParams::L() const { return std::ldexp(1.0, L_exp); }
double ScaleParams::s1() const { return std::ldexp(1.0, s1_exp); }
double ScaleParams::s2() const { return std::ldexp(1.0, s2_exp); }
double ScaleParams::r() const { return std::ldexp(1.0, r_exp); }

void ScaleParams::Validate() const {
  if (L_exp > 0) throw ParamError("scale L must lie in (0, 1]");
}

namespace {

LweParams Online(int log_q, int n, int d, int published_d, int log_gain) {
  LweParams p;
  p.log_q = log_q;
  p.sigma = 1;
  p.n_L = n;
  p.log_nu = 1;
  p.d = d;
  p.published_d = published_d;
  p.lambda = 32;
  p.log_gain = log_gain;
  return p;
}

const ScaleParams kScale1{-6, -12, 0, -12};
const ScaleParams kScale2{-10, -20, 0, -20};

}  // namespace

Profile SelectProfile(const std::string& name) {
  if (name == "paper-coarse")
    return {name, kScale1, Online(30, 329, 30, 19, 6)};
  if (name == "paper-fine")
    return {name, kScale2, Online(60, 648, 60, 35, 10)};
  if (name == "desk" || name == "desk-coarse")
    return {name, kScale1, Online(30, 16, 30, 0, 6)};
  if (name == "desk-fine")
    return {name, kScale2, Online(60, 16, 60, 0, 10)};
  throw LookupError("unknown profile '" + name + "'");
}

std::vector<std::string> ProfileNames() {
  return {"paper-coarse", "paper-fine", "desk", "desk-coarse", "desk-fine"};
}

LweParams SynthesisKeyParams() {
  LweParams p;
  p.log_q = 128;
  p.sigma = 1;
  p.n_L = 16;
  p.log_nu = 16;
  p.d = 8;
  p.lambda = 32;
  p.log_gain = 0;
  return p;
}

PlainScalar Quantize(double x, int step_exp, int plain_bits) {
  if (!std::isfinite(x)) throw RangeError("cannot quantize non-finite value");
  double v = std::nearbyint(std::ldexp(x, -step_exp));
  double half = std::ldexp(1.0, plain_bits - 1);
  if (std::fabs(v) >= half) {
    std::ostringstream os;
    os.precision(17);
    os << "quantization overflow: x=" << x << " at step 2^" << step_exp
       << " needs |" << v << "| < 2^" << plain_bits - 1;
    throw RangeError(os.str());
  }
  return static_cast<PlainScalar>(v);
}

PlainScalar Quantize(double x, int step_exp, const LweParams& p) {
  return Quantize(x, step_exp, p.log_t());
}

double Dequantize(PlainScalar m, int step_exp) {
  return std::ldexp(static_cast<double>(m), step_exp);
}

IntMatrix QuantizeMatrix(const Eigen::MatrixXd& x, int step_exp,
                         int plain_bits) {
  IntMatrix m(static_cast<int>(x.rows()), static_cast<int>(x.cols()));
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      m.at(i, j) = Quantize(x(i, j), step_exp, plain_bits);
  return m;
}

Eigen::MatrixXd DequantizeMatrix(const IntMatrix& m, int step_exp) {
  Eigen::MatrixXd x(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) x(i, j) = Dequantize(m.at(i, j), step_exp);
  return x;
}

PlainScalar RoundShift(PlainScalar m, int from_exp, int to_exp) {
  if (to_exp <= from_exp) {
    int k = from_exp - to_exp;
    if (k >= 127) throw RangeError("shift too large");
    return m * (Int128{1} << k);
  }
  int k = to_exp - from_exp;
  if (k >= 127) return 0;
  Int128 unit = Int128{1} << k;
  Int128 q = m >> k;  // floor
  Int128 rem = m - q * unit;
  Int128 half = unit >> 1;
  if (rem > half || (rem == half && (q & 1))) ++q;
  return q;
}

}  // namespace elfc
