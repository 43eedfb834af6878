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

#include "elfc/plant_model.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace elfc {

void AreaParams::Validate() const {
  if (!(H > 0) || !(T_g > 0) || !(T_t > 0) || !(R > 0))
    throw ParamError("area parameters H, T_g, T_t, R must be positive");
  if (D < 0) throw ParamError("damping D must be nonnegative");
  if (external_tie < 0) throw ParamError("external tie must be nonnegative");
  for (double t : ties)
    if (t < 0) throw ParamError("tie-line coefficients must be nonnegative");
}

std::vector<AreaParams> PaperTwoAreas() {
  AreaParams a1{0.081, 0.015, 3.100, 0.070, 0.393, {0.0, 0.20}, 0.0};
  AreaParams a2{0.091, 0.015, 2.631, 0.067, 0.387, {0.20, 0.0}, 0.0};
  return {a1, a2};
}

AreaBlocks BuildAreaContinuous(const AreaParams& p, bool textbook_governor) {
  p.Validate();
  AreaBlocks blk;
  blk.A.setZero();
  blk.b.setZero();
  blk.bw.setZero();
  const double m = 2.0 * p.H;
  blk.A(0, 0) = -p.D / m;
  blk.A(0, 1) = -1.0 / m;
  blk.A(0, 2) = 1.0 / m;
  blk.A(2, 2) = -1.0 / p.T_t;
  blk.A(2, 3) = 1.0 / p.T_t;
  blk.A(3, 0) = -1.0 / (p.T_g * p.R);
  blk.A(3, 3) = textbook_governor ? -1.0 / p.T_g : -1.0 / p.T_t;
  blk.b(3) = 1.0 / p.T_g;
  blk.bw(0) = -1.0 / m;
  return blk;
}

ContinuousModel AssembleInterconnected(const std::vector<AreaParams>& areas,
                                       bool textbook_governor) {
  const int n = static_cast<int>(areas.size());
  if (n < 1) throw ParamError("at least one area is required");
  for (int i = 0; i < n; ++i) {
    if (!areas[i].ties.empty() && static_cast<int>(areas[i].ties.size()) != n)
      throw ParamError("area " + std::to_string(i + 1) +
                       ": tie table must have one entry per area");
  }
  auto tie = [&](int i, int j) {
    return areas[i].ties.empty() ? 0.0 : areas[i].ties[j];
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::fabs(tie(i, j) - tie(j, i)) > 1e-12)
        throw ParamError("inconsistent tie-line table: T_" +
                         std::to_string(i + 1) + std::to_string(j + 1) +
                         " != T_" + std::to_string(j + 1) +
                         std::to_string(i + 1));

  ContinuousModel c;
  c.n_areas = n;
  c.A = Eigen::MatrixXd::Zero(4 * n, 4 * n);
  c.B = Eigen::MatrixXd::Zero(4 * n, n);
  c.Bw = Eigen::MatrixXd::Zero(4 * n, n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int i = 0; i < n; ++i) {
    AreaBlocks b = BuildAreaContinuous(areas[i], textbook_governor);
    const int o = 4 * i;
    c.A.block<4, 4>(o, o) = b.A;
    c.B.block<4, 1>(o, i) = b.b;
    c.Bw.block<4, 1>(o, i) = b.bw;
    c.A(o + 1, o) += two_pi * areas[i].external_tie;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      c.A(o + 1, o) += two_pi * tie(i, j);
      c.A(o + 1, 4 * j) -= two_pi * tie(i, j);
    }
  }
  return c;
}

Eigen::MatrixXd MatrixExp(const Eigen::MatrixXd& m) {
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  Eigen::MatrixXd a = m / std::ldexp(1.0, squarings);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::MatrixXd term = sum;
  bool converged = false;
  double term_norm = 0;
  for (int k = 1; k <= 60; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
    term_norm = term.cwiseAbs().maxCoeff();
    // Squaring amplifies relative error by up to 2^squarings.
    const double tol =
        std::max(1e-12 * std::ldexp(1.0, -squarings), 1e-17);
    if (term_norm <= tol * std::max(1.0, sum.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream os;
    os << "matrix exponential series did not converge: input norm " << norm
       << ", last term norm " << term_norm;
    throw NonConvergenceError(os.str());
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

DiscreteModel Discretize(const ContinuousModel& c, double dt,
                         const std::vector<AreaParams>& areas) {
  if (!(dt > 0)) throw ParamError("sampling time dt must be positive");
  const int n = static_cast<int>(c.A.rows());
  const int nu = static_cast<int>(c.B.cols());
  const int nw = static_cast<int>(c.Bw.cols());
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + nu + nw, n + nu + nw);
  aug.block(0, 0, n, n) = c.A;
  aug.block(0, n, n, nu) = c.B;
  aug.block(0, n + nu, n, nw) = c.Bw;
  Eigen::MatrixXd e = MatrixExp(aug * dt);
  DiscreteModel d;
  d.A = e.block(0, 0, n, n);
  d.B = e.block(0, n, n, nu);
  d.Bw = e.block(0, n + nu, n, nw);
  d.dt = dt;
  d.n_areas = c.n_areas;
  for (int i = 0; i < c.n_areas; ++i)
    d.C_blocks.push_back(AceOutput(areas[i], i, c.n_areas));
  return d;
}

Eigen::MatrixXd AceOutput(const AreaParams& p, int i, int n_areas) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n_areas, 4);
  c(i, 0) = 1.0 / p.R + p.D;
  c(i, 1) = 1.0;
  return c;
}

Eigen::MatrixXd DiscreteModel::StackedC() const {
  Eigen::MatrixXd c(n_areas, states());
  for (int i = 0; i < n_areas; ++i) c.block(0, 4 * i, n_areas, 4) = C_blocks[i];
  return c;
}

Eigen::Matrix4d DiscreteModel::LocalA(int i) const {
  return A.block<4, 4>(4 * i, 4 * i);
}
Eigen::Vector4d DiscreteModel::LocalB(int i) const {
  return B.block<4, 1>(4 * i, i);
}
Eigen::Vector4d DiscreteModel::LocalBw(int i) const {
  return Bw.block<4, 1>(4 * i, i);
}

double SpectralRadius(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace elfc
