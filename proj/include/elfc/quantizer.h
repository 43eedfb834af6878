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

#ifndef ELFC_QUANTIZER_H_
#define ELFC_QUANTIZER_H_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "elfc/he_core.h"

namespace elfc {

class LookupError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Power-of-two scales, stored as base-2 exponents.
//   L  : base resolution; the online key embeds plaintexts with gain 1/L
//   s1 : step of integerized controller coefficients
//   s2 : step of the integer state matrix (1 in every shipped profile)
//   r  : step of measurements and fed-back prices
struct ScaleParams {
  int L_exp = -6;
  int s1_exp = -12;
  int s2_exp = 0;
  int r_exp = -12;

  double L() const;
  double s1() const;
  double s2() const;
  double r() const;
  void Validate() const;
};

struct Profile {
  std::string name;
  ScaleParams scale;
  LweParams params;
};

// Names: paper-coarse, paper-fine, desk (= desk-coarse), desk-coarse,
// desk-fine.
Profile SelectProfile(const std::string& name);
std::vector<std::string> ProfileNames();

// Offline key used by encrypted synthesis.
LweParams SynthesisKeyParams();

// Round-half-even of x / 2^step_exp into a plaintext of plain_bits bits.
PlainScalar Quantize(double x, int step_exp, int plain_bits);
PlainScalar Quantize(double x, int step_exp, const LweParams& p);
double Dequantize(PlainScalar m, int step_exp);

IntMatrix QuantizeMatrix(const Eigen::MatrixXd& x, int step_exp,
                         int plain_bits);
Eigen::MatrixXd DequantizeMatrix(const IntMatrix& m, int step_exp);

// Rounds m * 2^from_exp to the grid 2^to_exp (half-even on the exact value).
PlainScalar RoundShift(PlainScalar m, int from_exp, int to_exp);

}  // namespace elfc

#endif  // ELFC_QUANTIZER_H_
