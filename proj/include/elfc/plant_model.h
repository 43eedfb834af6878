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

// Linearized multi-area swing-equation model. Per-area state order is
// [delta_f, dP_tie, dP_m, dP_g]; one control input (dP_c) and one load
// disturbance (dP_L) per area.

#ifndef ELFC_PLANT_MODEL_H_
#define ELFC_PLANT_MODEL_H_

#include <vector>

#include <Eigen/Dense>

#include "elfc/common.h"

namespace elfc {

inline constexpr int kAreaStates = 4;

struct AreaParams {
  double H = 0.081;
  double D = 0.015;
  double R = 3.1;
  double T_g = 0.070;
  double T_t = 0.393;
  // Tie coefficient to each area (entry for the area itself is ignored).
  std::vector<double> ties;
  // Tie coefficient to an external infinite bus (0 = none).
  double external_tie = 0.0;

  void Validate() const;
};

struct AreaBlocks {
  Eigen::Matrix4d A;
  Eigen::Vector4d b;   // control input dP_c
  Eigen::Vector4d bw;  // load disturbance dP_L
};

struct ContinuousModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Bw;
  int n_areas = 0;
};

struct DiscreteModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Bw;
  std::vector<Eigen::MatrixXd> C_blocks;  // N x 4 each
  double dt = 0.2;
  int n_areas = 0;

  int states() const { return kAreaStates * n_areas; }
  // [C_1 ... C_N], N x 4N.
  Eigen::MatrixXd StackedC() const;
  Eigen::Matrix4d LocalA(int i) const;
  Eigen::Vector4d LocalB(int i) const;
  Eigen::Vector4d LocalBw(int i) const;
};

// Published two-area plant coefficients.
std::vector<AreaParams> PaperTwoAreas();

// textbook_governor switches the dP_g self-term from -1/T_t to -1/T_g.
AreaBlocks BuildAreaContinuous(const AreaParams& p,
                               bool textbook_governor = false);
ContinuousModel AssembleInterconnected(const std::vector<AreaParams>& areas,
                                       bool textbook_governor = false);
// Scaled-and-squared Taylor series, relative tolerance 1e-12.
Eigen::MatrixXd MatrixExp(const Eigen::MatrixXd& m);
DiscreteModel Discretize(const ContinuousModel& c, double dt,
                         const std::vector<AreaParams>& areas);
Eigen::MatrixXd AceOutput(const AreaParams& p, int i, int n_areas);

double SpectralRadius(const Eigen::MatrixXd& a);

}  // namespace elfc

#endif  // ELFC_PLANT_MODEL_H_
