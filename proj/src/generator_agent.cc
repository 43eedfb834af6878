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

#include "elfc/generator_agent.h"

#include <deque>
#include <sstream>

#include "elfc/quantizer.h"
#include "elfc/wire.h"

namespace elfc {

void GeneratorType::Validate() const {
  const auto n = A_ii.rows();
  if (A_ii.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      C.cols() != n || R.rows() != B.cols() || R.cols() != B.cols() ||
      (B_w.size() > 0 && B_w.rows() != n))
    throw ShapeError("generator type has inconsistent dimensions");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ParamError("Q_i must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> qs(Q);
  if (qs.eigenvalues().minCoeff() < -1e-12)
    throw ParamError("Q_i must be positive semidefinite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rs(R);
  if (rs.eigenvalues().minCoeff() <= 0) throw ParamError("R_i must be positive");
}

Eigen::MatrixXd LocalRiccatiStep(const GeneratorType& t,
                                 const Eigen::MatrixXd& S) {
  const Eigen::MatrixXd& A = t.A_ii;
  const Eigen::MatrixXd& B = t.B;
  Eigen::MatrixXd W = t.R + B.transpose() * S * B;
  Eigen::MatrixXd BSA = B.transpose() * S * A;
  Eigen::MatrixXd next = t.Q + A.transpose() * S * A -
                         BSA.transpose() * W.ldlt().solve(BSA);
  return 0.5 * (next + next.transpose());
}

Eigen::MatrixXd SolveLocalRiccati(const GeneratorType& t,
                                  const RiccatiOptions& opt) {
  t.Validate();
  Eigen::MatrixXd S = t.Q;
  std::deque<double> history;
  for (int k = 0; k < opt.max_iter; ++k) {
    Eigen::MatrixXd next = LocalRiccatiStep(t, S);
    double diff = (next - S).cwiseAbs().maxCoeff();
    S = next;
    history.push_back(diff);
    if (history.size() > 8) history.pop_front();
    if (diff <= opt.tol) return S;
    if (!std::isfinite(diff)) break;
  }
  std::ostringstream os;
  os << "local Riccati recursion did not converge in " << opt.max_iter
     << " iterations; last successive differences:";
  for (double h : history) os << ' ' << h;
  throw NonConvergenceError(os.str());
}

double LocalRiccatiResidual(const GeneratorType& t, const Eigen::MatrixXd& S) {
  return (LocalRiccatiStep(t, S) - S).cwiseAbs().maxCoeff();
}

LocalGains ComputeLocalGains(const Eigen::MatrixXd& S_bar,
                             const GeneratorType& t) {
  const Eigen::MatrixXd& A = t.A_ii;
  const Eigen::MatrixXd& B = t.B;
  const auto n = A.rows();
  LocalGains g;
  g.S_bar = S_bar;
  Eigen::MatrixXd W = t.R + B.transpose() * S_bar * B;
  g.G_bar = -W.ldlt().solve(B.transpose());
  g.F = g.G_bar * S_bar * A;
  Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(n, n) - A.transpose() +
                          A.transpose() * S_bar * B * W.ldlt().solve(B.transpose());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(inner);
  if (!lu.isInvertible() || lu.rcond() < 1e-14)
    throw SingularityError("price-to-costate map is singular; M_i undefined");
  g.Phi = -lu.solve(t.C.transpose());
  g.M = g.G_bar * g.Phi;
  return g;
}

Eigen::VectorXd LocalControl(const LocalGains& g, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& p) {
  return g.F * x + g.M * p;
}

std::vector<Eigen::VectorXd> FiniteHorizonPlan(const GeneratorType& t,
                                               const Eigen::VectorXd& x0,
                                               const Eigen::VectorXd& p,
                                               int horizon) {
  const Eigen::MatrixXd& A = t.A_ii;
  const Eigen::MatrixXd& B = t.B;
  const auto n = A.rows();
  std::vector<Eigen::MatrixXd> S(horizon + 1);
  std::vector<Eigen::VectorXd> r(horizon + 1);
  S[horizon] = t.Q;
  r[horizon] = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd cp = t.C.transpose() * p;
  for (int k = horizon - 1; k >= 0; --k) {
    const Eigen::MatrixXd& Sn = S[k + 1];
    Eigen::MatrixXd W = t.R + B.transpose() * Sn * B;
    S[k] = LocalRiccatiStep(t, Sn);
    Eigen::MatrixXd gain =
        Eigen::MatrixXd::Identity(n, n) - Sn * B * W.ldlt().solve(B.transpose());
    r[k] = -cp + A.transpose() * gain * r[k + 1];
  }
  std::vector<Eigen::VectorXd> u;
  Eigen::VectorXd x = x0;
  for (int k = 0; k < horizon; ++k) {
    const Eigen::MatrixXd& Sn = S[k + 1];
    Eigen::MatrixXd W = t.R + B.transpose() * Sn * B;
    Eigen::MatrixXd G = -W.ldlt().solve(B.transpose());
    Eigen::VectorXd uk = G * Sn * A * x + G * r[k + 1];
    u.push_back(uk);
    x = A * x + B * uk;
  }
  return u;
}

double FiniteHorizonCost(const GeneratorType& t, const Eigen::VectorXd& x0,
                         const Eigen::VectorXd& p,
                         const std::vector<Eigen::VectorXd>& u) {
  Eigen::VectorXd x = x0;
  double cost = 0.0;
  for (const auto& uk : u) {
    cost += 0.5 * x.dot(t.Q * x) + 0.5 * uk.dot(t.R * uk) - p.dot(t.C * x);
    x = t.A_ii * x + t.B * uk;
  }
  cost += 0.5 * x.dot(t.Q * x);
  return cost;
}

std::vector<uint8_t> SealTypeReport(int area, const GeneratorType& t,
                                    const LocalGains& g, const PublicKey& pk1,
                                    const std::array<uint8_t, 32>& pk2,
                                    Rng& rng) {
  t.Validate();
  const int bits = pk1.params.log_t();
  ByteWriter w;
  w.Header();
  w.U32(static_cast<uint32_t>(area));
  for (const Eigen::MatrixXd* m : {&t.A_ii, &t.B, &t.B_w, &t.C, &t.Q, &t.R,
                                   &g.F, &g.M})
    Put(w, EncMatrix(pk1, QuantizeMatrix(*m, kReportStep, bits), rng,
                     kReportStep));
  return SecondEncrypt(pk2, w.Take(), rng);
}

EncryptedTypeReport OpenTypeReport(const std::vector<uint8_t>& blob,
                                   const SecondCryptoKeys& keys) {
  std::vector<uint8_t> inner = SecondDecrypt(keys, blob);
  ByteReader r(inner);
  r.Header();
  EncryptedTypeReport rep;
  rep.area = static_cast<int>(r.U32());
  for (GswMatrix* m : {&rep.A_ii, &rep.B, &rep.B_w, &rep.C, &rep.Q, &rep.R,
                       &rep.F, &rep.M})
    Get(r, m);
  if (!r.Done()) throw ProtocolError("trailing bytes in type report");
  return rep;
}

}  // namespace elfc
