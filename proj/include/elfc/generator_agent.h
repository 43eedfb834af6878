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

// A generator's private type and its price-taking LQ best response.
//
// Stage cost: 0.5 x'Qx + 0.5 u'Ru - p'Cx, with the price p held fixed over
// the horizon. The best response is u = F x + M p.

#ifndef ELFC_GENERATOR_AGENT_H_
#define ELFC_GENERATOR_AGENT_H_

#include <vector>

#include <Eigen/Dense>

#include "elfc/common.h"
#include "elfc/he_core.h"
#include "elfc/second_crypto.h"

namespace elfc {

struct GeneratorType {
  Eigen::MatrixXd A_ii;  // n x n
  Eigen::MatrixXd B;     // n x m
  Eigen::MatrixXd B_w;   // n x 1
  Eigen::MatrixXd C;     // N x n; only the generator's own row is nonzero
  Eigen::MatrixXd Q;     // n x n
  Eigen::MatrixXd R;     // m x m

  void Validate() const;
};

struct LocalGains {
  Eigen::MatrixXd S_bar;
  Eigen::MatrixXd G_bar;
  Eigen::MatrixXd F;
  Eigen::MatrixXd Phi;
  Eigen::MatrixXd M;
};

struct RiccatiOptions {
  double tol = 1e-10;
  int max_iter = 100000;
};

// One backward step S -> Q + A'SA - A'SB (R + B'SB)^-1 B'SA.
Eigen::MatrixXd LocalRiccatiStep(const GeneratorType& t,
                                 const Eigen::MatrixXd& S);
Eigen::MatrixXd SolveLocalRiccati(const GeneratorType& t,
                                  const RiccatiOptions& opt = {});
double LocalRiccatiResidual(const GeneratorType& t, const Eigen::MatrixXd& S);
LocalGains ComputeLocalGains(const Eigen::MatrixXd& S_bar,
                             const GeneratorType& t);
Eigen::VectorXd LocalControl(const LocalGains& g, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& p);

// Finite-horizon best response from x0 over `horizon` steps with terminal
// cost 0.5 x'Qx (S(T) = Q, r(T) = 0). Returns the open-loop input sequence.
std::vector<Eigen::VectorXd> FiniteHorizonPlan(const GeneratorType& t,
                                               const Eigen::VectorXd& x0,
                                               const Eigen::VectorXd& p,
                                               int horizon);
// Objective the plan minimizes, evaluated on the local dynamics.
double FiniteHorizonCost(const GeneratorType& t, const Eigen::VectorXd& x0,
                         const Eigen::VectorXd& p,
                         const std::vector<Eigen::VectorXd>& u);

// Step of every quantity in an encrypted type report.
inline constexpr int kReportStep = -40;

// A generator's reported type and local gains, each entry GSW-encrypted
// under the synthesis key at step 2^kReportStep.
struct EncryptedTypeReport {
  int area = 0;  // 1-based
  GswMatrix A_ii, B, B_w, C, Q, R, F, M;
};

// Encrypts the report under pk1, then wraps the bytes under pk2.
std::vector<uint8_t> SealTypeReport(int area, const GeneratorType& t,
                                    const LocalGains& g, const PublicKey& pk1,
                                    const std::array<uint8_t, 32>& pk2,
                                    Rng& rng);
// Server side: removes the outer layer; the contents stay HE-encrypted.
EncryptedTypeReport OpenTypeReport(const std::vector<uint8_t>& blob,
                                   const SecondCryptoKeys& keys);

}  // namespace elfc

#endif  // ELFC_GENERATOR_AGENT_H_
