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

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>

#include "elfc/plant_model.h"
#include "elfc/quantizer.h"

namespace elfc {
namespace {

using Eigen::MatrixXd;
using CMatrix = Eigen::MatrixXcd;

constexpr double kGolden = std::numbers::phi;

MatrixXd Mat(std::initializer_list<std::initializer_list<double>> rows) {
  MatrixXd m(static_cast<int>(rows.size()),
             static_cast<int>(rows.begin()->size()));
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

double MaxAbs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

GeneratorType ScalarType(double a, double b, double q, double r) {
  GeneratorType t;
  t.A_ii = Mat({{a}});
  t.B = Mat({{b}});
  t.B_w = Mat({{1}});
  t.C = Mat({{1}});
  t.Q = Mat({{q}});
  t.R = Mat({{r}});
  return t;
}

LocalGains ScalarGains(double f, double m) {
  LocalGains g;
  g.F = Mat({{f}});
  g.M = Mat({{m}});
  return g;
}

// C (zI - A)^-1 B.
CMatrix Response(const MatrixXd& A, const MatrixXd& B, const MatrixXd& C,
                 std::complex<double> z) {
  const auto n = A.rows();
  CMatrix zA = z * CMatrix::Identity(n, n) - A.cast<std::complex<double>>();
  return C.cast<std::complex<double>>() *
         zA.partialPivLu().solve(B.cast<std::complex<double>>());
}

MatrixXd ToReal(const IntMatrix& m) {
  MatrixXd r(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) r(i, j) = static_cast<double>(m.at(i, j));
  return r;
}

struct PaperMarket {
  DiscreteModel plant;
  std::vector<GeneratorType> types;
  std::vector<LocalGains> gains;
  SynthesisOptions opt = PaperSynthesisOptions();

  PaperMarket() {
    const auto areas = PaperTwoAreas();
    plant = Discretize(AssembleInterconnected(areas), 0.2, areas);
    types = TypesFromPlant(plant, PaperCostWeights());
    for (const auto& t : types)
      gains.push_back(ComputeLocalGains(SolveLocalRiccati(t), t));
  }
  MarketModel Model() const {
    return AssembleMarketModel(plant.A, types, gains, opt.noise);
  }
  TotalCost Cost() const {
    return AssembleTotalCost(opt.Q0, opt.R0, types, gains);
  }
};

// Assembly ------------------------------------------------------------------

TEST(Assembly, SingleAreaIsClosedLocalBlock) {
  GeneratorType t = ScalarType(0.9, 2.0, 1.0, 1.0);
  LocalGains g = ScalarGains(-0.3, 0.5);
  MarketModel m = AssembleMarketModel(Mat({{0.9}}), {t}, {g});
  EXPECT_DOUBLE_EQ(m.A_p(0, 0), 0.9 + 2.0 * -0.3);
  EXPECT_DOUBLE_EQ(m.B_p(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.C_p(0, 0), 1.0);
}

TEST(Assembly, PassThroughGainsGivePlant) {
  PaperMarket pm;
  std::vector<LocalGains> pass(2);
  for (int i = 0; i < 2; ++i) {
    pass[i].F = MatrixXd::Zero(1, 4);
    pass[i].M = MatrixXd::Zero(1, 2);
    pass[i].M(0, i) = 1.0;
  }
  MarketModel m = AssembleMarketModel(pm.plant.A, pm.types, pass);
  EXPECT_EQ(m.A_p, pm.plant.A);
  MatrixXd local = MatrixXd::Zero(8, 2);
  for (int i = 0; i < 2; ++i) local.block(4 * i, i, 4, 1) = pm.plant.LocalB(i);
  EXPECT_EQ(m.B_p, local);
  EXPECT_EQ(m.C_p, pm.plant.StackedC());
}

TEST(Assembly, PaperBlocksStable) {
  PaperMarket pm;
  MarketModel m = pm.Model();
  for (int i = 0; i < 2; ++i)
    EXPECT_LT(SpectralRadius(m.A_p.block(4 * i, 4 * i, 4, 4)), 1.0);
  EXPECT_EQ(m.W.rows(), 8);
  EXPECT_EQ(m.V.rows(), 2);
  EXPECT_DOUBLE_EQ(m.V(0, 0), 1e-8 / 3.0);
}

TEST(Assembly, MismatchedReportsRejected) {
  PaperMarket pm;
  auto gains = pm.gains;
  gains.pop_back();
  EXPECT_THROW(AssembleMarketModel(pm.plant.A, pm.types, gains), ShapeError);
  EXPECT_THROW(AssembleMarketModel(MatrixXd::Zero(4, 4), pm.types, pm.gains),
               ShapeError);
}

TEST(TotalCostTest, DecoupledLimit) {
  PaperMarket pm;
  std::vector<LocalGains> zero(2);
  for (auto& g : zero) {
    g.F = MatrixXd::Zero(1, 4);
    g.M = MatrixXd::Zero(1, 2);
  }
  TotalCost c = AssembleTotalCost(pm.opt.Q0, 25.0, pm.types, zero);
  MatrixXd blk = MatrixXd::Zero(8, 8);
  blk.block(0, 0, 4, 4) = pm.types[0].Q;
  blk.block(4, 4, 4, 4) = pm.types[1].Q;
  EXPECT_EQ(c.Q, pm.opt.Q0 + blk);
  EXPECT_EQ(MaxAbs(c.N_cross), 0.0);
  EXPECT_EQ(c.R, 25.0 * MatrixXd::Identity(2, 2));
}

TEST(TotalCostTest, ScalarExpansion) {
  // q0 x^2 + r0 p^2 + q x^2 + r (f x + m p)^2.
  const double q0 = 2, r0 = 3, q = 5, r = 7, f = -0.4, m = 1.5;
  TotalCost c = AssembleTotalCost(Mat({{q0}}), r0, {ScalarType(1, 1, q, r)},
                                  {ScalarGains(f, m)});
  EXPECT_DOUBLE_EQ(c.Q(0, 0), q0 + q + f * f * r);
  EXPECT_DOUBLE_EQ(c.N_cross(0, 0), f * r * m);
  EXPECT_DOUBLE_EQ(c.R(0, 0), r0 + m * m * r);
}

TEST(TotalCostTest, PaperCostIsPsd) {
  PaperMarket pm;
  TotalCost c = pm.Cost();
  Eigen::SelfAdjointEigenSolver<MatrixXd> qs(c.Q);
  EXPECT_GE(qs.eigenvalues().minCoeff(), 0.0);
  MatrixXd joint(10, 10);
  joint << c.Q, c.N_cross, c.N_cross.transpose(), c.R;
  Eigen::SelfAdjointEigenSolver<MatrixXd> js(joint);
  EXPECT_GE(js.eigenvalues().minCoeff(), -1e-9 * js.eigenvalues().maxCoeff());
}

TEST(TotalCostTest, Rejections) {
  EXPECT_THROW(AssembleTotalCost(Mat({{-1}}), 1.0, {ScalarType(1, 1, 1, 1)},
                                 {ScalarGains(0, 0)}),
               ParamError);
  EXPECT_THROW(AssembleTotalCost(Mat({{1}}), 0.0, {ScalarType(1, 1, 1, 1)},
                                 {ScalarGains(0, 0)}),
               ValidationError);
}

TEST(CrossTerm, CompletionPreservesCost) {
  PaperMarket pm;
  MarketModel m = pm.Model();
  TotalCost c = pm.Cost();
  CrossFree cf = EliminateCrossTerm(m, c);
  // x'Qx + 2x'Np + p'Rp = x'Q_bar x + v'Rv with v = p + RN x.
  Rng rng(4);
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd x(8), p(2);
    for (auto& v : x) v = rng.Uniform(-1, 1);
    for (auto& v : p) v = rng.Uniform(-1, 1);
    const double lhs = x.dot(c.Q * x) + 2 * x.dot(c.N_cross * p) + p.dot(c.R * p);
    const Eigen::VectorXd v = p + cf.RN * x;
    const double rhs = x.dot(cf.Q_bar * x) + v.dot(c.R * v);
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(lhs));
  }
  CrossFree off = EliminateCrossTerm(m, c, false);
  EXPECT_EQ(off.A_bar, m.A_p);
  EXPECT_EQ(off.Q_bar, c.Q);
}

// Riccati oracle --------------------------------------------------------------

TEST(Dare, ScalarGoldenRatio) {
  MatrixXd one = Mat({{1}});
  MatrixXd P = SolveDare(one, one, one, one);
  EXPECT_NEAR(P(0, 0), kGolden, 1e-9);
  EXPECT_LT(DareResidual(one, one, one, one, P), 1e-9);
  MarketModel m;
  m.A_p = one;
  m.B_p = one;
  TotalCost c{one, one, Mat({{0}})};
  MatrixXd K = ControlGain(P, EliminateCrossTerm(m, c), m, c);
  EXPECT_NEAR(K(0, 0), kGolden / (1 + kGolden), 1e-9);
  EXPECT_NEAR(K(0, 0), 0.618034, 1e-6);
}

TEST(Dare, ZeroCostAndNoActuation) {
  MatrixXd A = Mat({{0.5, 0.1}, {0, 0.7}});
  MatrixXd B = Mat({{1}, {0.5}});
  EXPECT_EQ(MaxAbs(SolveDare(A, B, MatrixXd::Zero(2, 2), Mat({{1}}))), 0.0);
  MarketModel m;
  m.A_p = A;
  m.B_p = MatrixXd::Zero(2, 1);
  TotalCost c{MatrixXd::Identity(2, 2), Mat({{1}}), MatrixXd::Zero(2, 1)};
  MatrixXd P = SolveDare(A, m.B_p, c.Q, c.R);
  EXPECT_EQ(MaxAbs(ControlGain(P, EliminateCrossTerm(m, c), m, c)), 0.0);
}

TEST(Dare, FilterWithoutProcessNoiseIsZero) {
  MarketModel m;
  m.A_p = Mat({{0.5, 0.1}, {0, 0.7}});
  m.C_p = Mat({{1, 0}});
  m.W = MatrixXd::Zero(2, 2);
  m.V = Mat({{0.1}});
  MatrixXd P2 =
      SolveDare(m.A_p.transpose(), m.C_p.transpose(), m.W, m.V);
  EXPECT_EQ(MaxAbs(P2), 0.0);
  EXPECT_EQ(MaxAbs(FilterGain(P2, m)), 0.0);
}

TEST(Dare, ScalarDuality) {
  const double a = 1.2, c = 0.7, w = 0.3, v = 0.5;
  MatrixXd ctrl = SolveDare(Mat({{a}}), Mat({{c}}), Mat({{w}}), Mat({{v}}));
  MarketModel m;
  m.A_p = Mat({{a}});
  m.C_p = Mat({{c}});
  m.W = Mat({{w}});
  m.V = Mat({{v}});
  MatrixXd filt = SolveDare(m.A_p.transpose(), m.C_p.transpose(), m.W, m.V);
  EXPECT_NEAR(ctrl(0, 0), filt(0, 0), 1e-12);
  // a p a - (a p c)^2 / (v + c p c) + w = p.
  const double p = filt(0, 0);
  EXPECT_NEAR(a * p * a - std::pow(a * p * c, 2) / (v + c * p * c) + w, p,
              1e-9);
}

TEST(Dare, NonConvergenceReported) {
  // (A, B) not stabilizable: the unstable mode is never reached.
  MatrixXd A = Mat({{1.5, 0}, {0, 0.5}});
  MatrixXd B = Mat({{0}, {1}});
  EXPECT_THROW(SolveDare(A, B, MatrixXd::Identity(2, 2), Mat({{1}}), 1e-10,
                         2000),
               NonConvergenceError);
}

TEST(Lqg, PaperResidualsAndStability) {
  PaperMarket pm;
  MarketModel m = pm.Model();
  LqgSolution s = SolveLqg(m, pm.Cost(), pm.opt);
  EXPECT_LE(s.residual_control, 1e-9);
  EXPECT_LE(s.residual_filter, 1e-9);
  EXPECT_LT(SpectralRadius(m.A_p - m.B_p * s.K), 1.0);
  EXPECT_LT(SpectralRadius(m.A_p - s.L * m.C_p), 1.0);
  EXPECT_LT(SpectralRadius(s.controller.A_K), 1.0);
  EXPECT_EQ(s.controller.B_K, s.L);
  EXPECT_EQ(s.controller.C_K, -s.K);
}

TEST(Lqg, ZeroGainsGiveOpenLoopObserver) {
  MarketModel m;
  m.A_p = Mat({{0.5, 0.1}, {0, 0.7}});
  m.B_p = Mat({{1}, {0}});
  m.C_p = Mat({{1, 1}});
  Controller k = RealizeController(MatrixXd::Zero(1, 2),
                                   MatrixXd::Zero(2, 1), m);
  EXPECT_EQ(k.A_K, m.A_p);
}

// Observability and integer form -------------------------------------------------

TEST(Observability, ChainAndBlind) {
  MatrixXd A = Mat({{1, 1}, {0, 1}});
  EXPECT_EQ(CheckObservability(A, Mat({{1, 0}})), 2);
  EXPECT_THROW(CheckObservability(A, Mat({{0, 0}})), ObservabilityError);
  EXPECT_EQ(NumericRank(ObservabilityMatrix(A, Mat({{0, 1}}), 2)), 1);
}

TEST(Integerize, ChainExample) {
  Controller k;
  k.A_K = Mat({{1, 1}, {0, 1}});
  k.C_K = Mat({{1, 0}});
  k.B_K = Mat({{1}, {0}});
  IntegerForm f = IntegerizePlain(k);
  EXPECT_LT(MaxAbs(f.H - Mat({{2}, {1}})), 1e-12);
  MatrixXd deadbeat = k.A_K - f.H * k.C_K;
  EXPECT_LT(MaxAbs(deadbeat - Mat({{-1, 1}, {-1, 1}})), 1e-12);
  EXPECT_NEAR(deadbeat.trace(), 0.0, 1e-12);
  EXPECT_NEAR(deadbeat.determinant(), 0.0, 1e-12);
  EXPECT_LT(MaxAbs(f.T * deadbeat * f.T_inv - ToReal(f.R_int)), 1e-12);
  EXPECT_LT(MaxAbs(k.C_K * f.T_inv - ToReal(f.Sel)), 1e-12);
  EXPECT_TRUE(IsNilpotent(f.R_int));
}

TEST(Integerize, BlindOutputRejected) {
  Controller k;
  k.A_K = Mat({{0, 1}, {0, 0}});
  k.C_K = Mat({{0, 0}});
  k.B_K = Mat({{1}, {1}});
  EXPECT_THROW(IntegerizePlain(k), ObservabilityError);
}

TEST(Integerize, Patterns) {
  IntMatrix r = ShiftPattern(2, 4);
  EXPECT_TRUE(IsNilpotent(r));
  IntMatrix p = r;
  for (int k = 1; k < 3; ++k) p = p * r;
  EXPECT_FALSE(std::all_of(p.v.begin(), p.v.end(),
                           [](Int128 v) { return v == 0; }));
  IntMatrix s = SelectionPattern(2, 4);
  EXPECT_EQ(s.at(0, 3), 1);
  EXPECT_EQ(s.at(1, 7), 1);
  IntMatrix id(2, 2);
  id.at(0, 0) = id.at(1, 1) = 1;
  EXPECT_FALSE(IsNilpotent(id));
}

TEST(Integerize, PaperControllerKeepsResponse) {
  PaperMarket pm;
  MarketModel m = pm.Model();
  LqgSolution s = SolveLqg(m, pm.Cost(), pm.opt);
  const Controller& k = s.controller;
  EXPECT_EQ(CheckObservability(k.A_K, k.C_K), 8);
  IntegerForm f = IntegerizePlain(k);
  EXPECT_EQ(f.index, 4);
  EXPECT_TRUE(IsNilpotent(f.R_int));
  // Closing the price loop recovers T A_K T^-1.
  const MatrixXd closed = ToReal(f.R_int) + f.TH * ToReal(f.Sel);
  Rng rng(9);
  for (int i = 0; i < 10; ++i) {
    const auto z = std::polar(1.0, rng.Uniform(0.0, std::numbers::pi));
    CMatrix g0 = Response(k.A_K, k.B_K, k.C_K, z);
    CMatrix g1 = Response(closed, f.TB, ToReal(f.Sel), z);
    EXPECT_LE((g1 - g0).norm(), 1e-6 * g0.norm());
  }
  // Exact-arithmetic recursion on 200 random inputs.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(8), zst = x;
  double worst = 0.0, scale = 0.0;
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd y(2);
    for (auto& v : y) v = rng.Uniform(-1, 1);
    const Eigen::VectorXd p0 = k.C_K * x;
    const Eigen::VectorXd p1 = ToReal(f.Sel) * zst;
    worst = std::max(worst, (p1 - p0).cwiseAbs().maxCoeff());
    scale = std::max(scale, p0.cwiseAbs().maxCoeff());
    x = k.A_K * x + k.B_K * y;
    zst = ToReal(f.R_int) * zst + f.TB * y + f.TH * p1;
  }
  EXPECT_LE(worst, 1e-8 * scale);
}

// Encrypted pipeline ------------------------------------------------------------

class EncryptedDare : public ::testing::Test {
 protected:
  EncryptedDare()
      : link_(SelectProfile("desk-fine").params, 21),
        bus_(link_),
        server_(bus_, 22),
        rng_(23) {
    server_.Connect(1);
  }

  GswMatrix Gsw(const MatrixXd& m, int step) {
    return EncMatrix(server_.public_key(KeySlot::kSynthesis),
                     QuantizeMatrix(m, step, 128), rng_, step);
  }
  LweMatrix Lwe(const MatrixXd& m, int step) { return ExtractLwe(Gsw(m, step)); }
  MatrixXd Dec(const LweMatrix& m) {
    const SecretKey& sk = link_.iso().secret_key(KeySlot::kSynthesis);
    return DequantizeMatrix(DecryptMatrix(sk, m), m.step_exp);
  }

  static DareSchedule Schedule(int iterations) {
    DareSchedule s;
    s.iterations = iterations;
    s.iterate_step = -40;
    s.inverse_step = -40;
    s.gain_step = -44;
    s.residual_tol = 10.0;
    s.check_step = -24;
    return s;
  }

  LocalIsoLink link_;
  Bus bus_;
  DelegateServer server_;
  Rng rng_;
};

TEST_F(EncryptedDare, ScalarGoldenRatio) {
  const MatrixXd one = Mat({{1}});
  const LweMatrix Q = Lwe(one, -40);
  const DareSchedule s = Schedule(40);
  EncDareResult r =
      EncDare(server_, Gsw(one, -36), Gsw(one, -40), Q, Lwe(one, -40), Q, s);
  EXPECT_NEAR(Dec(r.P)(0, 0), kGolden, 2 * std::ldexp(1.0, s.check_step));
  EXPECT_GT(r.final_update_bound, 0.0);
  EXPECT_LE(r.final_update_bound, 10 * std::ldexp(1.0, s.check_step));
}

TEST_F(EncryptedDare, ZeroCostStaysZero) {
  const MatrixXd A = Mat({{0.5, 0.1}, {0, 0.7}});
  const LweMatrix Q = Lwe(MatrixXd::Zero(2, 2), -40);
  EncDareResult r = EncDare(server_, Gsw(A, -36), Gsw(Mat({{1}, {0.5}}), -40),
                            Q, Lwe(Mat({{1}}), -40), Q, Schedule(5));
  EXPECT_LE(MaxAbs(Dec(r.P)), std::ldexp(1.0, -24));
}

TEST_F(EncryptedDare, ScheduleTooShortIsReported) {
  const MatrixXd one = Mat({{1}});
  const LweMatrix Q = Lwe(one, -40);
  EXPECT_THROW(EncDare(server_, Gsw(one, -36), Gsw(one, -40), Q,
                       Lwe(one, -40), Q, Schedule(3)),
               NonConvergenceError);
}

TEST_F(EncryptedDare, ObservabilityCertificate) {
  const GswMatrix A = Gsw(Mat({{1, 1}, {0, 1}}), -40);
  EXPECT_EQ(CheckObservabilityEncrypted(server_, A, Lwe(Mat({{1, 0}}), -40), 2,
                                        -40),
            2);
  EXPECT_THROW(CheckObservabilityEncrypted(server_, A,
                                           Lwe(Mat({{0, 0}}), -40), 2, -40),
               ObservabilityError);
}

// Full two-area synthesis, shared across the checks below.
class TwoAreaSynthesis : public ::testing::Test {
 protected:
  struct Run {
    Profile profile = SelectProfile("desk-fine");
    PaperMarket pm;
    LocalIsoLink link{profile.params, 31};
    Bus bus{link};
    DelegateServer server{bus, 32};
    EncryptedController ec;
    MarketModel model;     // from the reported (rounded) types
    TotalCost cost;
    LqgSolution oracle;
  };

  static void SetUpTestSuite() {
    run_ = std::make_unique<Run>();
    Run& r = *run_;
    r.server.Connect(2);
    Rng rng(33);
    std::vector<EncryptedTypeReport> reports;
    std::vector<GeneratorType> rt;
    std::vector<LocalGains> rg;
    for (int i = 0; i < 2; ++i) {
      auto blob = SealTypeReport(i + 1, r.pm.types[i], r.pm.gains[i],
                                 r.server.public_key(KeySlot::kSynthesis),
                                 r.server.second_keys().pk2, rng);
      reports.push_back(OpenTypeReport(blob, r.server.second_keys()));
      rt.push_back(RoundType(r.pm.types[i], kReportStep));
      rg.push_back(RoundGains(r.pm.gains[i], kReportStep));
    }
    r.ec = SynthesizeEncrypted(r.server, reports, r.pm.plant.A, r.pm.opt,
                               r.profile.scale.s1_exp);
    r.model = AssembleMarketModel(r.pm.plant.A, rt, rg, r.pm.opt.noise);
    r.cost = AssembleTotalCost(r.pm.opt.Q0, r.pm.opt.R0, rt, rg);
    r.oracle = SolveLqg(r.model, r.cost, r.pm.opt);
  }
  static void TearDownTestSuite() { run_.reset(); }

  static MatrixXd Dec(const LweMatrix& m, KeySlot slot = KeySlot::kSynthesis) {
    return DequantizeMatrix(
        DecryptMatrix(run_->link.iso().secret_key(slot), m), m.step_exp);
  }
  static MatrixXd Dec(const GswMatrix& m) {
    return Dec(ExtractLwe(m));
  }
  static double Tol(int working) {
    return 10 * std::ldexp(1.0, run_->ec.EffectiveStep(working));
  }

  static std::unique_ptr<Run> run_;
};

std::unique_ptr<TwoAreaSynthesis::Run> TwoAreaSynthesis::run_;

TEST_F(TwoAreaSynthesis, MatchesPlaintextOracle) {
  const Run& r = *run_;
  const SynthesisSteps& st = r.ec.steps;
  const double var = r.ec.load_variance;
  EXPECT_LE(r.oracle.residual_control, 1e-9);
  EXPECT_LE(r.oracle.residual_filter, 1e-9);
  EXPECT_LE(MaxAbs(Dec(r.ec.P1) - r.oracle.P1), Tol(st.control_iter));
  EXPECT_LE(MaxAbs(Dec(r.ec.P2n) - r.oracle.P2 / var), Tol(st.filter_iter));
  EXPECT_LE(MaxAbs(Dec(r.ec.K) - r.oracle.K), Tol(st.gain));
  EXPECT_LE(MaxAbs(Dec(r.ec.L) - r.oracle.L), Tol(st.gain));
  EXPECT_LE(MaxAbs(Dec(r.ec.A_K) - r.oracle.controller.A_K), Tol(st.gain));
  EXPECT_LE(MaxAbs(Dec(r.ec.C_K) + r.oracle.K), Tol(st.gain));
}

TEST_F(TwoAreaSynthesis, DecryptedSolutionsSolveTheirEquations) {
  const Run& r = *run_;
  const SynthesisSteps& st = r.ec.steps;
  const double var = r.ec.load_variance;
  const CrossFree cf = EliminateCrossTerm(r.model, r.cost);
  EXPECT_LE(DareResidual(cf.A_bar, r.model.B_p, cf.Q_bar, r.cost.R,
                         Dec(r.ec.P1)),
            Tol(st.control_iter));
  EXPECT_LE(DareResidual(r.model.A_p.transpose(), r.model.C_p.transpose(),
                         r.model.W / var, r.model.V / var, Dec(r.ec.P2n)),
            Tol(st.filter_iter));
}

TEST_F(TwoAreaSynthesis, ControllerResponseMatches) {
  const Run& r = *run_;
  const Controller& k = r.oracle.controller;
  const MatrixXd A_K = Dec(r.ec.A_K), B_K = Dec(r.ec.L), C_K = Dec(r.ec.C_K);
  EXPECT_LT(SpectralRadius(A_K), 1.0);
  Rng rng(34);
  for (int i = 0; i < 10; ++i) {
    const auto z = std::polar(1.0, rng.Uniform(0.0, std::numbers::pi));
    CMatrix g0 = Response(k.A_K, k.B_K, k.C_K, z);
    CMatrix g1 = Response(A_K, B_K, C_K, z);
    EXPECT_LE((g1 - g0).norm(), 1e-6 * g0.norm());
  }
}

TEST_F(TwoAreaSynthesis, IntegerFormUnderOnlineKey) {
  const Run& r = *run_;
  EXPECT_EQ(r.ec.observability_rank, 8);
  EXPECT_EQ(r.ec.index, 4);
  EXPECT_TRUE(IsNilpotent(r.ec.R_int));
  EXPECT_EQ(r.ec.R_int, ShiftPattern(2, 4));
  EXPECT_EQ(r.ec.Sel, SelectionPattern(2, 4));
  EXPECT_EQ(r.ec.TB.step_exp, r.profile.scale.s1_exp);
  // Against the integer form of the decrypted controller, so only the
  // realization and the transfer rounding are measured.
  Controller dec{Dec(r.ec.A_K), Dec(r.ec.L), Dec(r.ec.C_K)};
  IntegerForm f = IntegerizePlain(dec);
  const double s1 = std::ldexp(1.0, r.profile.scale.s1_exp);
  // The ISO rounds the masked product; unmasking scales that half step by
  // the two inverse-mask norms.
  const double transfer = kMaskNormBound * kMaskNormBound * s1 / 2 + 1e-8;
  EXPECT_LE(MaxAbs(Dec(r.ec.TB, KeySlot::kOnline) - f.TB), transfer);
  EXPECT_LE(MaxAbs(Dec(r.ec.TH, KeySlot::kOnline) - f.TH), transfer);
  // Synthesis-key intermediates.
  EXPECT_LE(MaxAbs(Dec(r.ec.T) - f.T), 1e-8 * MaxAbs(f.T));
  EXPECT_LE(MaxAbs(Dec(r.ec.T_inv) - f.T_inv), 1e-7 * MaxAbs(f.T_inv));
  EXPECT_LE(MaxAbs(Dec(r.ec.H) - f.H), 1e-7 * MaxAbs(f.H));
}

}  // namespace
}  // namespace elfc
