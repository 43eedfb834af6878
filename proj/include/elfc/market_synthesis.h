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

// Price-driven market model, LQG synthesis and controller integerization.
//
// Every operation exists twice: a plaintext oracle on Eigen matrices and an
// encrypted version the delegate server runs under the synthesis key with
// the ISO's masked protocols.

#ifndef ELFC_MARKET_SYNTHESIS_H_
#define ELFC_MARKET_SYNTHESIS_H_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "elfc/generator_agent.h"
#include "elfc/he_core.h"
#include "elfc/plant_model.h"
#include "elfc/protocols.h"

namespace elfc {

struct MarketModel {
  Eigen::MatrixXd A_p;      // 4N x 4N, diagonal blocks A_ii + B_i F_i
  Eigen::MatrixXd B_p;      // 4N x N, stacked B_i M_i
  Eigen::MatrixXd C_p;      // N x 4N
  Eigen::MatrixXd B_w;      // 4N x N
  Eigen::MatrixXd V;        // measurement covariance
  Eigen::MatrixXd W;        // disturbance covariance
};

// Quadratic cost of the market after substituting u_i = F_i x_i + M_i p.
struct TotalCost {
  Eigen::MatrixXd Q;        // state
  Eigen::MatrixXd R;        // price
  Eigen::MatrixXd N_cross;  // state-price
};

// Stochastic assumptions behind the filter weights.
struct NoiseModel {
  double load_variance = 0.05 * 0.05 / 3.0;
  double noise_amplitude = 1e-4;
  double regularization = 1e-6;

  double noise_variance() const {
    return noise_amplitude * noise_amplitude / 3.0;
  }
};

struct SynthesisOptions {
  Eigen::MatrixXd Q0;
  double R0 = 25.0;
  // Completing the square removes the state-price cross cost before the
  // Riccati iterations; off means N_cross is dropped.
  bool cross_term = true;
  // Fixed in advance; the filter contracts more slowly.
  int control_iterations = 1000;
  int filter_iterations = 2400;
  // Convergence check after the fixed schedule, in effective steps.
  double residual_steps = 10.0;
  NoiseModel noise;
};

// Defaults of the two-area study.
SynthesisOptions PaperSynthesisOptions();

// A generator's private cost weights.
struct CostWeights {
  Eigen::MatrixXd Q;
  double R = 1.0;
};
std::vector<CostWeights> PaperCostWeights();
// Types whose dynamics are the plant's local blocks.
std::vector<GeneratorType> TypesFromPlant(const DiscreteModel& plant,
                                          const std::vector<CostWeights>& w);

// plant_A supplies the public off-diagonal coupling blocks.
MarketModel AssembleMarketModel(const Eigen::MatrixXd& plant_A,
                                const std::vector<GeneratorType>& types,
                                const std::vector<LocalGains>& gains,
                                const NoiseModel& noise = {});
TotalCost AssembleTotalCost(const Eigen::MatrixXd& Q0, double R0,
                            const std::vector<GeneratorType>& types,
                            const std::vector<LocalGains>& gains);

struct CrossFree {
  Eigen::MatrixXd A_bar;
  Eigen::MatrixXd Q_bar;
  Eigen::MatrixXd RN;  // R^-1 N'
};
CrossFree EliminateCrossTerm(const MarketModel& m, const TotalCost& c,
                             bool enabled = true);

// Control-form Riccati map P -> A'PA - A'PB (R + B'PB)^-1 B'PA + Q.
Eigen::MatrixXd DareStep(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                         const Eigen::MatrixXd& P);
Eigen::MatrixXd DareIterate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                            Eigen::MatrixXd P, int iterations);
// Iterates from P = Q until successive iterates differ by at most tol.
Eigen::MatrixXd SolveDare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                          const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                          double tol = 1e-10, int max_iter = 200000);
double DareResidual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                    const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                    const Eigen::MatrixXd& P);

struct Controller {
  Eigen::MatrixXd A_K;
  Eigen::MatrixXd B_K;
  Eigen::MatrixXd C_K;
};

struct LqgSolution {
  Eigen::MatrixXd P1;
  Eigen::MatrixXd P2;
  Eigen::MatrixXd K;  // price law p = -K x
  Eigen::MatrixXd L;
  Controller controller;
  double residual_control = 0.0;
  double residual_filter = 0.0;
};

Eigen::MatrixXd ControlGain(const Eigen::MatrixXd& P1, const CrossFree& cf,
                            const MarketModel& m, const TotalCost& c);
Eigen::MatrixXd FilterGain(const Eigen::MatrixXd& P2, const MarketModel& m);
Controller RealizeController(const Eigen::MatrixXd& K,
                             const Eigen::MatrixXd& L, const MarketModel& m);
// Plaintext pipeline; both Riccati equations solved to tol.
LqgSolution SolveLqg(const MarketModel& m, const TotalCost& c,
                     const SynthesisOptions& opt, double tol = 1e-10);

// [C; CA; ...; CA^(depth-1)].
Eigen::MatrixXd ObservabilityMatrix(const Eigen::MatrixXd& A,
                                    const Eigen::MatrixXd& C, int depth);
int NumericRank(const Eigen::MatrixXd& m, double rel_tol = 1e-12);
// Throws ObservabilityError when the pair is not observable.
int CheckObservability(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C);

// Deadbeat output injection in observer canonical form. With p outputs and
// n = p * index states, the state z = T x evolves as
//   z+ = R_int z + T B_K y + T H p,   p = Sel z
// with R_int a 0/1 block shift and Sel a 0/1 selection.
struct IntegerForm {
  IntMatrix R_int;
  IntMatrix Sel;
  int index = 0;
  Eigen::MatrixXd T;
  Eigen::MatrixXd T_inv;
  Eigen::MatrixXd H;  // original coordinates
  Eigen::MatrixXd TB;
  Eigen::MatrixXd TH;
};
IntMatrix ShiftPattern(int outputs, int index);
IntMatrix SelectionPattern(int outputs, int index);
IntegerForm IntegerizePlain(const Controller& k);
bool IsNilpotent(const IntMatrix& m);

// Encrypted pipeline ------------------------------------------------------

// Working fixed-point steps (base-2 exponents) of the encrypted pipeline.
struct SynthesisSteps {
  int coeff = -40;         // reported types and gains
  int state = -36;         // A_bar and A_p in the iterations
  int price_map = -40;     // B_p
  int output_map = -36;    // C_p
  int control_iter = -24;  // control Riccati iterate
  int filter_iter = -40;   // normalized filter Riccati iterate
  int inverse = -40;       // outputs of masked inversions
  int control_gain = -32;  // gain products inside the control iteration
  int filter_gain = -44;   // gain products inside the filter iteration
  int gain = -32;          // K, L, A_K
  int realization = -48;   // observability rows and T
  int cross = -56;         // N_cross before the cross-term products
  int cross_gain = -48;    // R^-1 N'
  int guard_bits = 16;     // effective step = working step * 2^guard_bits
};

struct EncryptedModel {
  GswMatrix A_p;     // step state
  GswMatrix A_bar;   // step state
  GswMatrix B_p;     // step price_map
  GswMatrix C_p;     // step output_map
  LweMatrix Q_bar;   // step control_iter
  LweMatrix R;       // step inverse
  LweMatrix RN;      // R^-1 N'
  LweMatrix W_n;     // W / load variance, step filter_iter
  LweMatrix V_n;     // V / load variance
  GswMatrix B_w;     // step coeff
  int n_areas = 0;
};

struct DareSchedule {
  int iterations = 1500;
  int iterate_step = -24;
  int inverse_step = -40;
  int gain_step = -32;
  // Final-update bound in units of 2^check_step; non-positive skips it.
  double residual_tol = 0.0;
  int check_step = 0;
};

struct EncDareResult {
  LweMatrix P;
  // Bound on the last update, certified on a masked copy; 0 when unchecked.
  double final_update_bound = 0.0;
};

// P -> A'(P - PB (R + B'PB)^-1 B'P)A + Q from P0, every inverse through
// masked inversion and every rescale through masked re-encryption.
EncDareResult EncDare(DelegateServer& server, const GswMatrix& A,
                      const GswMatrix& B, const LweMatrix& Q,
                      const LweMatrix& R, const LweMatrix& P0,
                      const DareSchedule& s);

struct EncryptedController {
  LweMatrix P1;   // step control_iter
  LweMatrix P2n;  // normalized, step filter_iter
  LweMatrix K;    // step gain
  LweMatrix L;    // step gain
  GswMatrix A_K;  // step gain
  LweMatrix C_K;  // -K
  int observability_rank = 0;
  // Integer form under the online key, coefficient step s1.
  LweMatrix TB;
  LweMatrix TH;
  LweMatrix TW;  // T B_w, for disturbance feedforward
  IntMatrix R_int;
  IntMatrix Sel;
  int index = 0;
  // Synthesis-key intermediates kept for oracle checks.
  GswMatrix T;
  LweMatrix T_inv;
  LweMatrix H;
  double load_variance = 1.0;
  SynthesisSteps steps;

  int EffectiveStep(int working) const { return working + steps.guard_bits; }
};

EncryptedModel AssembleEncryptedModel(
    DelegateServer& server, const std::vector<EncryptedTypeReport>& reports,
    const Eigen::MatrixXd& plant_A, const SynthesisOptions& opt,
    const SynthesisSteps& steps = {});

EncryptedController SynthesizeEncrypted(
    DelegateServer& server, const std::vector<EncryptedTypeReport>& reports,
    const Eigen::MatrixXd& plant_A, const SynthesisOptions& opt,
    int online_coeff_step, const SynthesisSteps& steps = {});

// Rank certificate over ciphertexts; throws ObservabilityError when short.
int CheckObservabilityEncrypted(DelegateServer& server, const GswMatrix& A,
                                const LweMatrix& C, int depth, int step);

// Rounds every entry to 2^step, matching what an encrypted report carries.
Eigen::MatrixXd RoundToStep(const Eigen::MatrixXd& m, int step);
GeneratorType RoundType(const GeneratorType& t, int step);
LocalGains RoundGains(const LocalGains& g, int step);

}  // namespace elfc

#endif  // ELFC_MARKET_SYNTHESIS_H_
