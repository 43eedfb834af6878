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

#include "elfc/market_synthesis.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "elfc/quantizer.h"

namespace elfc {

using Eigen::MatrixXd;

SynthesisOptions PaperSynthesisOptions() {
  SynthesisOptions o;
  Eigen::VectorXd q0(8);
  q0 << 600, 50, 50, 20, 400, 120, 50, 30;
  o.Q0 = q0.asDiagonal();
  o.R0 = 25.0;
  return o;
}

std::vector<CostWeights> PaperCostWeights() {
  return {{Eigen::Vector4d(100, 50, 20, 500).asDiagonal(), 100.0},
          {Eigen::Vector4d(200, 45, 30, 400).asDiagonal(), 50.0}};
}

std::vector<GeneratorType> TypesFromPlant(const DiscreteModel& plant,
                                          const std::vector<CostWeights>& w) {
  if (static_cast<int>(w.size()) != plant.n_areas)
    throw ShapeError("need one cost weight per area");
  std::vector<GeneratorType> types;
  for (int i = 0; i < plant.n_areas; ++i) {
    GeneratorType t;
    t.A_ii = plant.LocalA(i);
    t.B = plant.LocalB(i);
    t.B_w = plant.LocalBw(i);
    t.C = plant.C_blocks[i];
    t.Q = w[i].Q;
    t.R = MatrixXd::Constant(1, 1, w[i].R);
    t.Validate();
    types.push_back(std::move(t));
  }
  return types;
}

namespace {

void CheckSizes(const std::vector<GeneratorType>& types,
                const std::vector<LocalGains>& gains) {
  if (types.empty()) throw ShapeError("market needs at least one report");
  if (types.size() != gains.size())
    throw ShapeError("aggregation: " + std::to_string(types.size()) +
                     " types but " + std::to_string(gains.size()) + " gains");
  const auto N = static_cast<Eigen::Index>(types.size());
  for (size_t i = 0; i < types.size(); ++i) {
    const auto& t = types[i];
    const auto& g = gains[i];
    t.Validate();
    const auto n = t.A_ii.rows();
    if (t.B.cols() != 1 || t.C.rows() != N || t.B_w.rows() != n ||
        t.B_w.cols() != 1 || g.F.rows() != 1 || g.F.cols() != n ||
        g.M.rows() != 1 || g.M.cols() != N)
      throw ShapeError("aggregation: report " + std::to_string(i + 1) +
                       " does not match a " + std::to_string(N) +
                       "-area market");
  }
}

std::vector<Eigen::Index> Offsets(const std::vector<GeneratorType>& types) {
  std::vector<Eigen::Index> off{0};
  for (const auto& t : types) off.push_back(off.back() + t.A_ii.rows());
  return off;
}

}  // namespace

MarketModel AssembleMarketModel(const MatrixXd& plant_A,
                                const std::vector<GeneratorType>& types,
                                const std::vector<LocalGains>& gains,
                                const NoiseModel& noise) {
  CheckSizes(types, gains);
  const auto off = Offsets(types);
  const auto n = off.back();
  const auto N = static_cast<Eigen::Index>(types.size());
  if (plant_A.rows() != n || plant_A.cols() != n)
    throw ShapeError("aggregation: plant matrix is " +
                     std::to_string(plant_A.rows()) + "x" +
                     std::to_string(plant_A.cols()) + ", reports need " +
                     std::to_string(n));
  MarketModel m;
  m.A_p = plant_A;
  m.B_p = MatrixXd::Zero(n, N);
  m.C_p = MatrixXd::Zero(N, n);
  m.B_w = MatrixXd::Zero(n, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& t = types[i];
    const auto& g = gains[i];
    const auto ni = t.A_ii.rows();
    m.A_p.block(off[i], off[i], ni, ni) = t.A_ii + t.B * g.F;
    m.B_p.block(off[i], 0, ni, N) = t.B * g.M;
    m.C_p.block(0, off[i], N, ni) = t.C;
    m.B_w.block(off[i], i, ni, 1) = t.B_w;
  }
  m.W = noise.load_variance * m.B_w * m.B_w.transpose() +
        noise.regularization * MatrixXd::Identity(n, n);
  m.V = noise.noise_variance() * MatrixXd::Identity(N, N);
  return m;
}

TotalCost AssembleTotalCost(const MatrixXd& Q0, double R0,
                            const std::vector<GeneratorType>& types,
                            const std::vector<LocalGains>& gains) {
  CheckSizes(types, gains);
  const auto off = Offsets(types);
  const auto n = off.back();
  const auto N = static_cast<Eigen::Index>(types.size());
  if (Q0.rows() != n || Q0.cols() != n)
    throw ShapeError("Q0 must be " + std::to_string(n) + "x" +
                     std::to_string(n));
  Eigen::SelfAdjointEigenSolver<MatrixXd> q0s(0.5 * (Q0 + Q0.transpose()));
  if (q0s.eigenvalues().minCoeff() < -1e-9)
    throw ParamError("Q0 must be positive semidefinite");
  TotalCost c;
  c.Q = Q0;
  c.R = R0 * MatrixXd::Identity(N, N);
  c.N_cross = MatrixXd::Zero(n, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& t = types[i];
    const auto& g = gains[i];
    const auto ni = t.A_ii.rows();
    c.Q.block(off[i], off[i], ni, ni) +=
        t.Q + g.F.transpose() * (t.R * g.F);
    c.N_cross.block(off[i], 0, ni, N) = g.F.transpose() * (t.R * g.M);
    c.R += g.M.transpose() * (t.R * g.M);
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> rs(c.R);
  if (rs.eigenvalues().minCoeff() <= 0)
    throw ValidationError("cost assembly: total price cost R is not positive "
                          "definite");
  return c;
}

CrossFree EliminateCrossTerm(const MarketModel& m, const TotalCost& c,
                             bool enabled) {
  CrossFree f;
  if (!enabled) {
    f.A_bar = m.A_p;
    f.Q_bar = c.Q;
    f.RN = MatrixXd::Zero(c.R.rows(), c.Q.rows());
    return f;
  }
  f.RN = c.R.ldlt().solve(c.N_cross.transpose());
  f.A_bar = m.A_p - m.B_p * f.RN;
  f.Q_bar = c.Q - c.N_cross * f.RN;
  return f;
}

MatrixXd DareStep(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                  const MatrixXd& R, const MatrixXd& P) {
  const MatrixXd G = P * B;
  const MatrixXd Z = R + B.transpose() * G;
  const MatrixXd M = P - G * Z.partialPivLu().solve(G.transpose());
  MatrixXd next = A.transpose() * M * A + Q;
  return 0.5 * (next + next.transpose());
}

MatrixXd DareIterate(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                     const MatrixXd& R, MatrixXd P, int iterations) {
  for (int k = 0; k < iterations; ++k) P = DareStep(A, B, Q, R, P);
  return P;
}

MatrixXd SolveDare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                   const MatrixXd& R, double tol, int max_iter) {
  MatrixXd P = Q;
  double diff = 0.0;
  for (int k = 0; k < max_iter; ++k) {
    MatrixXd next = DareStep(A, B, Q, R, P);
    diff = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (!std::isfinite(diff)) break;
    if (diff <= tol) return P;
  }
  std::ostringstream os;
  os << "Riccati iteration did not reach " << tol << " in " << max_iter
     << " steps (last update " << diff << ")";
  throw NonConvergenceError(os.str());
}

double DareResidual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                    const MatrixXd& R, const MatrixXd& P) {
  return (DareStep(A, B, Q, R, P) - P).cwiseAbs().maxCoeff();
}

MatrixXd ControlGain(const MatrixXd& P1, const CrossFree& cf,
                     const MarketModel& m, const TotalCost& c) {
  const MatrixXd G = P1 * m.B_p;
  const MatrixXd Z = c.R + m.B_p.transpose() * G;
  return Z.partialPivLu().solve(G.transpose() * cf.A_bar) + cf.RN;
}

MatrixXd FilterGain(const MatrixXd& P2, const MarketModel& m) {
  const MatrixXd G = P2 * m.C_p.transpose();
  const MatrixXd Z = m.V + m.C_p * G;
  const MatrixXd AG = m.A_p * G;
  return Z.transpose().partialPivLu().solve(AG.transpose()).transpose();
}

Controller RealizeController(const MatrixXd& K, const MatrixXd& L,
                             const MarketModel& m) {
  Controller k;
  k.A_K = m.A_p - L * m.C_p - m.B_p * K;
  k.B_K = L;
  k.C_K = -K;
  return k;
}

LqgSolution SolveLqg(const MarketModel& m, const TotalCost& c,
                     const SynthesisOptions& opt, double tol) {
  const CrossFree cf = EliminateCrossTerm(m, c, opt.cross_term);
  LqgSolution s;
  s.P1 = SolveDare(cf.A_bar, m.B_p, cf.Q_bar, c.R, tol);
  // Solved on the variance-normalized weights so tol means the same thing
  // for both equations.
  const double var = opt.noise.load_variance;
  s.P2 = var * SolveDare(m.A_p.transpose(), m.C_p.transpose(), m.W / var,
                         m.V / var, tol);
  s.residual_control = DareResidual(cf.A_bar, m.B_p, cf.Q_bar, c.R, s.P1);
  s.residual_filter =
      DareResidual(m.A_p.transpose(), m.C_p.transpose(), m.W, m.V, s.P2);
  s.K = ControlGain(s.P1, cf, m, c);
  s.L = FilterGain(s.P2, m);
  s.controller = RealizeController(s.K, s.L, m);
  return s;
}

MatrixXd ObservabilityMatrix(const MatrixXd& A, const MatrixXd& C, int depth) {
  const auto p = C.rows();
  MatrixXd O(p * depth, A.cols());
  MatrixXd row = C;
  for (int k = 0; k < depth; ++k) {
    O.middleRows(k * p, p) = row;
    row = row * A;
  }
  return O;
}

int NumericRank(const MatrixXd& m, double rel_tol) {
  if (m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0) return 0;
  Eigen::FullPivLU<MatrixXd> lu(m);
  lu.setThreshold(rel_tol);
  return static_cast<int>(lu.rank());
}

int CheckObservability(const MatrixXd& A, const MatrixXd& C) {
  const int n = static_cast<int>(A.rows());
  const int rank = NumericRank(ObservabilityMatrix(A, C, n));
  if (rank < n)
    throw ObservabilityError(
        "controller pair is not observable (rank " + std::to_string(rank) +
        " of " + std::to_string(n) + "); use a minimal realization");
  return rank;
}

IntMatrix ShiftPattern(int outputs, int index) {
  const int n = outputs * index;
  IntMatrix r(n, n);
  for (int i = 0; i < outputs; ++i)
    for (int j = 0; j + 1 < index; ++j) r.at(i * index + j + 1, i * index + j) = 1;
  return r;
}

IntMatrix SelectionPattern(int outputs, int index) {
  IntMatrix s(outputs, outputs * index);
  for (int i = 0; i < outputs; ++i) s.at(i, i * index + index - 1) = 1;
  return s;
}

namespace {

int ObserverIndex(int n, int p) {
  if (p < 1 || n % p != 0)
    throw ValidationError("integerization needs the state dimension (" +
                          std::to_string(n) +
                          ") to be a multiple of the output count (" +
                          std::to_string(p) + ")");
  return n / p;
}

// Rows c_i A^k, k < index, grouped by output.
MatrixXd BlockObservability(const MatrixXd& A, const MatrixXd& C, int index) {
  const auto p = C.rows();
  MatrixXd O(p * index, A.cols());
  for (Eigen::Index i = 0; i < p; ++i) {
    MatrixXd row = C.row(i);
    for (int k = 0; k < index; ++k) {
      O.row(i * index + k) = row;
      row = row * A;
    }
  }
  return O;
}

}  // namespace

IntegerForm IntegerizePlain(const Controller& k) {
  const int n = static_cast<int>(k.A_K.rows());
  const int p = static_cast<int>(k.C_K.rows());
  const int index = ObserverIndex(n, p);
  CheckObservability(k.A_K, k.C_K);
  const MatrixXd O = BlockObservability(k.A_K, k.C_K, index);
  if (NumericRank(O) < n)
    throw ObservabilityError(
        "observability indices are unequal; the block observability matrix "
        "is singular");
  const MatrixXd O_inv = O.partialPivLu().inverse();
  IntegerForm f;
  f.index = index;
  f.T_inv.resize(n, n);
  f.H.resize(n, p);
  for (int i = 0; i < p; ++i) {
    Eigen::VectorXd col = O_inv.col(i * index + index - 1);
    for (int j = 0; j < index; ++j) {
      f.T_inv.col(i * index + j) = col;
      col = k.A_K * col;
    }
    f.H.col(i) = col;
  }
  f.T = f.T_inv.partialPivLu().inverse();
  f.TB = f.T * k.B_K;
  f.TH = f.T * f.H;
  f.R_int = ShiftPattern(p, index);
  f.Sel = SelectionPattern(p, index);
  return f;
}

bool IsNilpotent(const IntMatrix& m) {
  if (m.rows != m.cols) return false;
  IntMatrix pw = m;
  for (int k = 1; k < m.rows; ++k) pw = pw * m;
  return std::all_of(pw.v.begin(), pw.v.end(), [](Int128 v) { return v == 0; });
}

MatrixXd RoundToStep(const MatrixXd& m, int step) {
  return DequantizeMatrix(QuantizeMatrix(m, step, 128), step);
}

GeneratorType RoundType(const GeneratorType& t, int step) {
  GeneratorType r;
  r.A_ii = RoundToStep(t.A_ii, step);
  r.B = RoundToStep(t.B, step);
  r.B_w = RoundToStep(t.B_w, step);
  r.C = RoundToStep(t.C, step);
  r.Q = RoundToStep(t.Q, step);
  r.R = RoundToStep(t.R, step);
  return r;
}

LocalGains RoundGains(const LocalGains& g, int step) {
  LocalGains r = g;
  r.F = RoundToStep(g.F, step);
  r.M = RoundToStep(g.M, step);
  return r;
}

// Encrypted pipeline ---------------------------------------------------------

namespace {

struct KeyRef {
  LweParams params;
  uint64_t key_id = 0;
};

KeyRef SynthesisKey(DelegateServer& server) {
  const PublicKey& pk = server.public_key(KeySlot::kSynthesis);
  return {pk.params, pk.key_id};
}

GswMatrix PublicGsw(const KeyRef& k, const MatrixXd& m, int step) {
  return TrivialMatrix(k.params, k.key_id, QuantizeMatrix(m, step, 128), step);
}

LweMatrix PublicLwe(const KeyRef& k, const MatrixXd& m, int step) {
  return ExtractLwe(PublicGsw(k, m, step));
}

template <class Ct>
void PutBlock(CipherMatrix<Ct>& dst, int r0, int c0,
              const CipherMatrix<Ct>& src) {
  if (src.step_exp != dst.step_exp)
    throw IncompatibleError("block step mismatch");
  for (int i = 0; i < src.rows; ++i)
    for (int j = 0; j < src.cols; ++j) dst.at(r0 + i, c0 + j) = src.at(i, j);
}

LweMatrix Plus(const LweMatrix& a, const LweMatrix& b) {
  const int s = std::min(a.step_exp, b.step_exp);
  return EncMatadd(Refine(a, s), Refine(b, s));
}

LweMatrix Minus(const LweMatrix& a, const LweMatrix& b) {
  const int s = std::min(a.step_exp, b.step_exp);
  return EncMatsub(Refine(a, s), Refine(b, s));
}

LweMatrix Negated(const LweMatrix& m) {
  IntMatrix neg(m.rows, m.rows);
  for (int i = 0; i < m.rows; ++i) neg.at(i, i) = -1;
  return MulPlainLeft(neg, m);
}

// Vertical stack of row blocks sharing one step.
LweMatrix StackRows(const std::vector<LweMatrix>& rows) {
  LweMatrix out;
  out.cols = rows.front().cols;
  out.step_exp = rows.front().step_exp;
  for (const auto& r : rows) {
    if (r.cols != out.cols || r.step_exp != out.step_exp)
      throw IncompatibleError("row blocks disagree");
    out.rows += r.rows;
    out.data.insert(out.data.end(), r.data.begin(), r.data.end());
  }
  return out;
}

void SetColumn(LweMatrix& dst, int j, const LweMatrix& col) {
  PutBlock(dst, 0, j, col);
}

void CheckReport(const EncryptedTypeReport& r, int N, int idx) {
  const int n = r.A_ii.rows;
  const bool ok = r.A_ii.cols == n && r.B.rows == n && r.B.cols == 1 &&
                  r.B_w.rows == n && r.B_w.cols == 1 && r.C.rows == N &&
                  r.C.cols == n && r.Q.rows == n && r.Q.cols == n &&
                  r.R.rows == 1 && r.R.cols == 1 && r.F.rows == 1 &&
                  r.F.cols == n && r.M.rows == 1 && r.M.cols == N;
  if (!ok)
    throw ShapeError("aggregation: encrypted report " + std::to_string(idx) +
                     " does not match a " + std::to_string(N) + "-area market");
}

}  // namespace

EncryptedModel AssembleEncryptedModel(
    DelegateServer& server, const std::vector<EncryptedTypeReport>& reports_in,
    const MatrixXd& plant_A, const SynthesisOptions& opt,
    const SynthesisSteps& st) {
  if (reports_in.empty()) throw ShapeError("market needs at least one report");
  std::vector<EncryptedTypeReport> reports = reports_in;
  std::sort(reports.begin(), reports.end(),
            [](const auto& a, const auto& b) { return a.area < b.area; });
  const int N = static_cast<int>(reports.size());
  std::vector<int> off{0};
  for (int i = 0; i < N; ++i) {
    if (reports[i].area != i + 1)
      throw ProtocolIncompleteError("reports do not cover areas 1.." +
                                    std::to_string(N));
    CheckReport(reports[i], N, i + 1);
    off.push_back(off.back() + reports[i].A_ii.rows);
  }
  const int n = off.back();
  if (plant_A.rows() != n || plant_A.cols() != n)
    throw ShapeError("aggregation: plant matrix does not match the reports");
  if (opt.Q0.rows() != n || opt.Q0.cols() != n)
    throw ShapeError("Q0 must be " + std::to_string(n) + "x" +
                     std::to_string(n));

  const KeyRef key = SynthesisKey(server);
  const int c1 = st.coeff, c2 = 2 * st.coeff;

  // Off-diagonal coupling is public; diagonal blocks come from the reports.
  MatrixXd coupling = plant_A;
  for (int i = 0; i < N; ++i)
    coupling.block(off[i], off[i], off[i + 1] - off[i], off[i + 1] - off[i])
        .setZero();
  LweMatrix A_p = PublicLwe(key, coupling, c2);
  LweMatrix B_p = PublicLwe(key, MatrixXd::Zero(n, N), c2);
  GswMatrix C_p = PublicGsw(key, MatrixXd::Zero(N, n), c1);
  GswMatrix B_w = PublicGsw(key, MatrixXd::Zero(n, N), c1);
  LweMatrix Q = PublicLwe(key, opt.Q0, c2);
  LweMatrix Nx = PublicLwe(key, MatrixXd::Zero(n, N), c2);
  LweMatrix R = PublicLwe(key, opt.R0 * MatrixXd::Identity(N, N), c2);

  for (int i = 0; i < N; ++i) {
    const auto& r = reports[i];
    const LweMatrix F = ExtractLwe(r.F);
    const LweMatrix M = ExtractLwe(r.M);
    PutBlock(A_p, off[i], off[i],
             Plus(ExtractLwe(r.A_ii), EncMatmul(r.B, F)));
    PutBlock(B_p, off[i], 0, EncMatmul(r.B, M));
    PutBlock(C_p, 0, off[i], r.C);
    PutBlock(B_w, off[i], i, r.B_w);
    const GswMatrix Ft = Transpose(r.F);
    const GswMatrix Mt = Transpose(r.M);
    const LweMatrix RF = server.Rescale(EncMatmul(r.R, F), c1);
    const LweMatrix RM = server.Rescale(EncMatmul(r.R, M), c1);
    PutBlock(Q, off[i], off[i],
             Plus(Block(Q, off[i], off[i], r.Q.rows, r.Q.cols),
                  Plus(ExtractLwe(r.Q), EncMatmul(Ft, RF))));
    PutBlock(Nx, off[i], 0, EncMatmul(Ft, RM));
    R = Plus(R, EncMatmul(Mt, RM));
  }

  EncryptedModel em;
  em.n_areas = N;
  em.C_p = server.RescaleGsw(ExtractLwe(C_p), st.output_map);
  em.B_p = server.RescaleGsw(B_p, st.price_map);
  em.R = server.Rescale(R, st.inverse);
  LweMatrix A_bar = A_p;
  LweMatrix Q_bar = Q;
  if (opt.cross_term) {
    const GswMatrix R_inv = server.Inverse(R, st.inverse);
    const GswMatrix N_g = server.RescaleGsw(Nx, st.cross);
    em.RN = server.Rescale(EncMatmul(R_inv, ExtractLwe(Transpose(N_g))),
                           st.cross_gain);
    Q_bar = Minus(Q, EncMatmul(N_g, em.RN));
    A_bar = Minus(A_p, EncMatmul(em.B_p, em.RN));
  } else {
    em.RN = PublicLwe(key, MatrixXd::Zero(N, n), st.cross_gain);
  }
  em.A_p = server.RescaleGsw(A_p, st.state);
  em.A_bar = opt.cross_term ? server.RescaleGsw(A_bar, st.state) : em.A_p;
  em.Q_bar = server.Rescale(Q_bar, st.control_iter);

  const double var = opt.noise.load_variance;
  if (!(var > 0)) throw ParamError("load variance must be positive");
  const LweMatrix BwBwT = EncMatmul(B_w, ExtractLwe(Transpose(B_w)));
  em.W_n = server.Rescale(
      Plus(BwBwT, PublicLwe(key,
                            (opt.noise.regularization / var) *
                                MatrixXd::Identity(n, n),
                            c2)),
      st.filter_iter);
  em.B_w = B_w;
  em.V_n = PublicLwe(key,
                     (opt.noise.noise_variance() / var) *
                         MatrixXd::Identity(N, N),
                     st.filter_iter + 2 * st.output_map);
  return em;
}

EncDareResult EncDare(DelegateServer& server, const GswMatrix& A,
                      const GswMatrix& B, const LweMatrix& Q,
                      const LweMatrix& R, const LweMatrix& P0,
                      const DareSchedule& s) {
  if (A.rows != A.cols || B.rows != A.rows || Q.rows != A.rows ||
      Q.cols != A.rows || R.rows != B.cols || R.cols != B.cols ||
      P0.rows != A.rows || P0.cols != A.rows)
    throw ShapeError("Riccati data has inconsistent dimensions");
  const int p = s.iterate_step;
  const int z_step = p + 2 * B.step_exp;
  const int q_step = p + 2 * A.step_exp;
  if (R.step_exp < z_step || Q.step_exp < q_step)
    throw ValidationError("Riccati weights are finer than the iteration grid");
  const LweMatrix R_z = Refine(R, z_step);
  const LweMatrix Q_q = Refine(Q, q_step);
  const GswMatrix At = Transpose(A);
  const GswMatrix Bt = Transpose(B);

  LweMatrix P = P0.step_exp == p ? P0
                : P0.step_exp > p ? Refine(P0, p)
                                  : server.Rescale(P0, p);
  LweMatrix prev = P;
  for (int it = 0; it < s.iterations; ++it) {
    const LweMatrix G = EncMatmul(P, B);
    const LweMatrix Z = EncMatadd(R_z, EncMatmul(Bt, G));
    const GswMatrix Z_inv =
        server.Inverse(server.EnsureHeadroom(Z), s.inverse_step);
    const GswMatrix J = server.RescaleGsw(EncMatmul(G, Z_inv), s.gain_step);
    const LweMatrix X = server.Rescale(EncMatmul(J, Transpose(G)), p);
    const LweMatrix M = EncMatsub(P, X);
    const LweMatrix Y = EncMatmul(M, A);
    LweMatrix next = EncMatadd(EncMatmul(At, Y), Q_q);
    // (X + X') at half the step is the symmetric part; skew errors would
    // otherwise grow through the gain update.
    next = EncMatadd(next, Transpose(next));
    next.step_exp -= 1;
    prev = std::move(P);
    P = server.Rescale(server.EnsureHeadroom(next), p);
  }

  EncDareResult out;
  if (s.residual_tol > 0 && s.iterations > 0) {
    out.final_update_bound = server.NormBound(EncMatsub(P, prev));
    const double tol = std::ldexp(s.residual_tol, s.check_step);
    if (out.final_update_bound > tol) {
      std::ostringstream os;
      os << "Riccati iterate still moving after " << s.iterations
         << " steps: final update bound " << out.final_update_bound
         << " exceeds " << tol;
      throw NonConvergenceError(os.str());
    }
  }
  out.P = std::move(P);
  return out;
}

int CheckObservabilityEncrypted(DelegateServer& server, const GswMatrix& A,
                                const LweMatrix& C, int depth, int step) {
  std::vector<LweMatrix> rows;
  LweMatrix row = C.step_exp > step ? Refine(C, step) : server.Rescale(C, step);
  for (int k = 0; k < depth; ++k) {
    rows.push_back(row);
    if (k + 1 < depth) row = server.Rescale(EncMatmul(row, A), step);
  }
  const int rank = server.Rank(StackRows(rows));
  if (rank < A.rows)
    throw ObservabilityError(
        "controller pair is not observable (rank " + std::to_string(rank) +
        " of " + std::to_string(A.rows) + "); use a minimal realization");
  return rank;
}

EncryptedController SynthesizeEncrypted(
    DelegateServer& server, const std::vector<EncryptedTypeReport>& reports,
    const MatrixXd& plant_A, const SynthesisOptions& opt,
    int online_coeff_step, const SynthesisSteps& st) {
  const EncryptedModel em =
      AssembleEncryptedModel(server, reports, plant_A, opt, st);
  const int N = em.n_areas;
  const int n = em.A_p.rows;
  EncryptedController ec;
  ec.steps = st;
  ec.load_variance = opt.noise.load_variance;

  DareSchedule ctrl;
  ctrl.iterations = opt.control_iterations;
  ctrl.iterate_step = st.control_iter;
  ctrl.inverse_step = st.inverse;
  ctrl.gain_step = st.control_gain;
  ctrl.residual_tol = opt.residual_steps;
  ctrl.check_step = ec.EffectiveStep(st.control_iter);
  ec.P1 = EncDare(server, em.A_bar, em.B_p, em.Q_bar, em.R, em.Q_bar, ctrl).P;

  const GswMatrix A_pt = Transpose(em.A_p);
  const GswMatrix C_pt = Transpose(em.C_p);
  DareSchedule filt = ctrl;
  filt.iterations = opt.filter_iterations;
  filt.iterate_step = st.filter_iter;
  filt.gain_step = st.filter_gain;
  filt.check_step = ec.EffectiveStep(st.filter_iter);
  ec.P2n = EncDare(server, A_pt, C_pt, em.W_n, em.V_n, em.W_n, filt).P;

  // K = (R + B'P1B)^-1 B'P1 A_bar + R^-1 N'.
  {
    const LweMatrix G = EncMatmul(ec.P1, em.B_p);
    const LweMatrix Z = Plus(em.R, EncMatmul(Transpose(em.B_p), G));
    const GswMatrix Z_inv = server.Inverse(Z, st.inverse);
    const LweMatrix GA =
        server.Rescale(EncMatmul(Transpose(G), em.A_bar), st.gain);
    ec.K = server.Rescale(Plus(EncMatmul(Z_inv, GA), em.RN), st.gain);
  }
  // L = A_p P2 C' (V + C P2 C')^-1, invariant to the variance scaling.
  {
    const LweMatrix G = EncMatmul(ec.P2n, C_pt);
    const LweMatrix Z = Plus(em.V_n, EncMatmul(em.C_p, G));
    const GswMatrix Z_inv = server.Inverse(Z, st.inverse);
    const LweMatrix AG = server.Rescale(EncMatmul(em.A_p, G), st.gain);
    ec.L = server.Rescale(EncMatmul(AG, Z_inv), st.gain);
  }
  // A_K = A_p - L C_p - B_p K; B_K = L; C_K = -K.
  {
    const LweMatrix LC = EncMatmul(ec.L, em.C_p);
    const LweMatrix BK = EncMatmul(em.B_p, ec.K);
    const LweMatrix A_K = Minus(Minus(ExtractLwe(em.A_p), LC), BK);
    ec.A_K = server.RescaleGsw(A_K, st.gain);
    ec.C_K = Negated(ec.K);
  }

  // Rank certificate on the full observability matrix.
  ec.observability_rank =
      CheckObservabilityEncrypted(server, ec.A_K, ec.C_K, n, st.realization);

  // Observer canonical form.
  const int index = ObserverIndex(n, N);
  ec.index = index;
  std::vector<LweMatrix> blocks;
  for (int i = 0; i < N; ++i) {
    LweMatrix row = Refine(Block(ec.C_K, i, 0, 1, n), st.realization);
    for (int k = 0; k < index; ++k) {
      blocks.push_back(row);
      if (k + 1 < index)
        row = server.Rescale(EncMatmul(row, ec.A_K), st.realization);
    }
  }
  const GswMatrix O_inv = server.Inverse(StackRows(blocks), st.realization);
  ec.T_inv = PublicLwe(SynthesisKey(server), MatrixXd::Zero(n, n),
                       st.realization);
  ec.H = PublicLwe(SynthesisKey(server), MatrixXd::Zero(n, N), st.realization);
  for (int i = 0; i < N; ++i) {
    LweMatrix col = Refine(
        ExtractLwe(Block(O_inv, 0, i * index + index - 1, n, 1)),
        st.realization);
    for (int j = 0; j < index; ++j) {
      SetColumn(ec.T_inv, i * index + j, col);
      col = server.Rescale(EncMatmul(ec.A_K, col), st.realization);
    }
    SetColumn(ec.H, i, col);
  }
  ec.T = server.Inverse(ec.T_inv, st.realization);
  ec.R_int = ShiftPattern(N, index);
  ec.Sel = SelectionPattern(N, index);
  ec.TB = server.Transfer(EncMatmul(ec.T, ec.L), online_coeff_step);
  ec.TH = server.Transfer(EncMatmul(ec.T, ec.H), online_coeff_step);
  ec.TW = server.Transfer(EncMatmul(ec.T, ExtractLwe(em.B_w)),
                          online_coeff_step);
  return ec;
}

}  // namespace elfc
