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

#include "elfc/closed_loop_sim.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>

#include "elfc/wire.h"

namespace elfc {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr uint64_t kLoadSalt = 0x6c6f61642d736571ULL;
constexpr uint64_t kNoiseSalt = 0x6e6f6973652d7371ULL;
constexpr uint64_t kIsoSalt = 0x69736f2d70617274ULL;
constexpr uint64_t kServerSalt = 0x7365727665722d70ULL;
constexpr uint64_t kGeneratorSalt = 0x67656e2d70617274ULL;

// Encrypted feedforward ships one public-key GSW per area and step.
constexpr double kMaxFeedforwardBytes = 64.0 * 1024 * 1024;

// Measurement frame: step, area, kind, then the value or a GSW ciphertext.
constexpr uint8_t kPlainMeasurement = 0;
constexpr uint8_t kEncryptedLoad = 1;

std::string Fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int TieColumns(int n_areas) { return std::max(1, n_areas - 1); }

double GswBytes(const LweParams& p) {
  return static_cast<double>(p.Rows()) * static_cast<double>(p.GadgetCols()) *
         std::ceil(p.log_q / 8.0);
}

}  // namespace

double DisturbanceModel::Variance() const {
  const double a = amplitude * PerUnit(baseline_mw);
  return a * a / 3.0;
}

void SimConfig::Validate() const {
  const int n = n_areas();
  if (n < 1) throw ParamError("at least one area is required");
  for (const auto& a : areas) a.Validate();
  if (static_cast<int>(weights.size()) != n)
    throw ShapeError("need one cost weight per area");
  for (const auto& w : weights) {
    if (w.Q.rows() != kAreaStates || w.Q.cols() != kAreaStates)
      throw ShapeError("generator state weight must be 4x4");
    if (!(w.R > 0.0)) throw ParamError("generator input weight must be > 0");
  }
  if (synthesis.Q0.rows() != kAreaStates * n ||
      synthesis.Q0.cols() != kAreaStates * n)
    throw ShapeError("system state weight must be " +
                     std::to_string(kAreaStates * n) + " square");
  if (!(synthesis.R0 > 0.0)) throw ParamError("system price weight must be > 0");
  if (horizon < 1) throw ParamError("horizon must be at least one step");
  if (!(dt > 0.0)) throw ParamError("dt must be positive");
  if (!(disturbance.amplitude >= 0.0))
    throw ParamError("disturbance amplitude must be >= 0");
  if (disturbance.hold_steps < 1) throw ParamError("hold_steps must be >= 1");
  if (!(disturbance.base_mva > 0.0)) throw ParamError("base_mva must be > 0");
  for (const auto& s : disturbance.schedule) {
    if (s.area < 1 || s.area > n)
      throw ParamError("load step names area " + std::to_string(s.area));
    if (s.step < 0 || s.step >= horizon)
      throw ParamError("load step at " + std::to_string(s.step) +
                       " is outside the horizon");
  }
  if (!(noise_amplitude >= 0.0))
    throw ParamError("noise amplitude must be >= 0");
  if (!(price_per_unit > 0.0)) throw ParamError("price_per_unit must be > 0");
  if (!(price_tolerance > 0.0)) throw ParamError("price_tolerance must be > 0");
  ResolvedProfile();
}

bool ProfileOverrides::empty() const {
  return !L_exp && !s1_exp && !s2_exp && !r_exp && !log_q && !n_L &&
         !log_nu && !d && !sigma;
}

Profile SimConfig::ResolvedProfile() const {
  Profile p = SelectProfile(crypto_profile);
  const ProfileOverrides& o = overrides;
  if (o.empty()) return p;
  ScaleParams& s = p.scale;
  LweParams& k = p.params;
  if (o.L_exp) {
    s.L_exp = *o.L_exp;
    k.log_gain = -*o.L_exp;
  }
  if (o.s1_exp) s.s1_exp = *o.s1_exp;
  if (o.s2_exp) s.s2_exp = *o.s2_exp;
  if (o.r_exp) s.r_exp = *o.r_exp;
  if (o.log_q) k.log_q = *o.log_q;
  if (o.n_L) k.n_L = *o.n_L;
  if (o.log_nu) k.log_nu = *o.log_nu;
  if (o.d) k.d = *o.d;
  if (o.sigma) k.sigma = *o.sigma;
  k.published_d = 0;
  s.Validate();
  k.Validate();
  p.name += "+overrides";
  return p;
}

SynthesisOptions SimConfig::EffectiveSynthesis() const {
  SynthesisOptions o = synthesis;
  if (disturbance.amplitude > 0.0)
    o.noise.load_variance = disturbance.Variance();
  if (noise_amplitude > 0.0) o.noise.noise_amplitude = noise_amplitude;
  return o;
}

SimConfig PaperTwoAreaConfig() {
  SimConfig c;
  c.plant_profile = "paper-two-area";
  c.areas = PaperTwoAreas();
  c.weights = PaperCostWeights();
  c.synthesis = PaperSynthesisOptions();
  return c;
}

SimConfig SingleAreaConfig() {
  SimConfig c;
  c.plant_profile = "single-area";
  AreaParams a = PaperTwoAreas()[0];
  a.ties = {0.0};
  a.external_tie = 0.2;
  c.areas = {a};
  c.weights = {PaperCostWeights()[0]};
  c.synthesis = PaperSynthesisOptions();
  c.synthesis.Q0 = Eigen::Vector4d(600, 50, 50, 20).asDiagonal();
  c.synthesis.R0 = 25.0;
  return c;
}

SimConfig BuiltinConfig(const std::string& name) {
  if (name == "paper-two-area") return PaperTwoAreaConfig();
  if (name == "single-area") return SingleAreaConfig();
  throw LookupError("unknown plant profile '" + name +
                    "' (known: paper-two-area, single-area)");
}

std::vector<VectorXd> LoadSequence(const SimConfig& cfg) {
  const int n = cfg.n_areas();
  const auto& d = cfg.disturbance;
  std::vector<VectorXd> w(cfg.horizon, VectorXd::Zero(n));
  if (!d.schedule.empty()) {
    auto sched = d.schedule;
    std::stable_sort(sched.begin(), sched.end(),
                     [](const LoadStep& a, const LoadStep& b) {
                       return a.step < b.step;
                     });
    for (const auto& s : sched)
      for (int k = s.step; k < cfg.horizon; ++k)
        w[k](s.area - 1) = d.PerUnit(s.mw);
    return w;
  }
  if (d.amplitude == 0.0) return w;
  Rng rng(Mix64(cfg.seed ^ kLoadSalt));
  const double a = d.amplitude * d.PerUnit(d.baseline_mw);
  VectorXd level = VectorXd::Zero(n);
  for (int k = 0; k < cfg.horizon; ++k) {
    if (k % d.hold_steps == 0)
      for (int i = 0; i < n; ++i) level(i) = rng.Uniform(-a, a);
    w[k] = level;
  }
  return w;
}

std::vector<VectorXd> NoiseSequence(const SimConfig& cfg) {
  const int n = cfg.n_areas();
  std::vector<VectorXd> v(cfg.horizon, VectorXd::Zero(n));
  if (cfg.noise_amplitude == 0.0) return v;
  Rng rng(Mix64(cfg.seed ^ kNoiseSalt));
  for (auto& row : v)
    for (int i = 0; i < n; ++i)
      row(i) = rng.Uniform(-cfg.noise_amplitude, cfg.noise_amplitude);
  return v;
}

Market BuildMarket(const SimConfig& cfg) {
  cfg.Validate();
  Market m;
  m.plant = Discretize(AssembleInterconnected(cfg.areas, cfg.textbook_governor),
                       cfg.dt, cfg.areas);
  m.types = TypesFromPlant(m.plant, cfg.weights);
  for (const auto& t : m.types)
    m.gains.push_back(ComputeLocalGains(SolveLocalRiccati(t), t));
  return m;
}

namespace {

VectorXd GeneratorInputs(const Market& m, const VectorXd& x,
                         const VectorXd& p) {
  const int n = m.plant.n_areas;
  VectorXd u(n);
  for (int i = 0; i < n; ++i)
    u(i) = LocalControl(m.gains[i], x.segment(kAreaStates * i, kAreaStates), p)(0);
  return u;
}

}  // namespace

Trajectory RunPlaintext(const SimConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const Market mk = BuildMarket(cfg);
  const SynthesisOptions opt = cfg.EffectiveSynthesis();
  const MarketModel model =
      AssembleMarketModel(mk.plant.A, mk.types, mk.gains, opt.noise);
  const TotalCost cost = AssembleTotalCost(opt.Q0, opt.R0, mk.types, mk.gains);
  const Controller k = SolveLqg(model, cost, opt).controller;

  const auto loads = LoadSequence(cfg);
  const auto noise = NoiseSequence(cfg);
  const MatrixXd C = mk.plant.StackedC();
  const int n = cfg.n_areas();

  Trajectory tr;
  tr.n_areas = n;
  tr.dt = cfg.dt;
  tr.baseline_price = cfg.baseline_price;
  tr.price_per_unit = cfg.price_per_unit;
  tr.profile = "plaintext";
  tr.seed = cfg.seed;

  VectorXd x = VectorXd::Zero(mk.plant.states());
  VectorXd xk = VectorXd::Zero(k.A_K.rows());
  for (int t = 0; t < cfg.horizon; ++t) {
    StepRecord r;
    r.t = t;
    r.x = x;
    r.w = loads[t];
    r.p = k.C_K * xk;
    r.y = C * x + noise[t];
    r.u = GeneratorInputs(mk, x, r.p);
    xk = k.A_K * xk + k.B_K * r.y;
    if (cfg.feedforward) xk += model.B_w * r.w;
    x = mk.plant.A * x + mk.plant.B * r.u + mk.plant.Bw * r.w;
    tr.steps.push_back(std::move(r));
  }
  tr.wall_seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  return tr;
}

MarketSession::MarketSession(const SimConfig& cfg, bool two_process)
    : cfg_(cfg) {
  cfg_.Validate();
  profile_ = cfg_.ResolvedProfile();
  if (cfg_.feedforward && GswBytes(profile_.params) > kMaxFeedforwardBytes)
    throw ValidationError(
        "feedforward needs one GSW ciphertext per area and step; profile " +
        profile_.name + " makes each " +
        std::to_string(GswBytes(profile_.params) / (1024.0 * 1024.0)) +
        " MiB");
  market_ = BuildMarket(cfg_);
  link_ = MakeIsoLink(profile_.params, Mix64(cfg_.seed ^ kIsoSalt),
                      two_process);
  bus_ = std::make_unique<Bus>(*link_);
  server_ = std::make_unique<DelegateServer>(*bus_,
                                             Mix64(cfg_.seed ^ kServerSalt));
}

MarketSession::~MarketSession() = default;

const EncryptedController& MarketSession::controller() const {
  if (!controller_)
    throw ProtocolIncompleteError("offline phase has not completed");
  return *controller_;
}

IsoParty* MarketSession::local_iso() {
  auto* local = dynamic_cast<LocalIsoLink*>(link_.get());
  return local ? &local->iso() : nullptr;
}

void MarketSession::RunOfflinePhase(const std::vector<int>& reporting) {
  const int n = cfg_.n_areas();
  std::vector<int> senders = reporting;
  if (senders.empty())
    for (int i = 1; i <= n; ++i) senders.push_back(i);

  server_->Connect(n);
  server_->PublishSecondKey(n);

  generator_pk1_.assign(n, PublicKey{});
  generator_online_pk_.assign(n, PublicKey{});
  generator_pk2_.assign(n, {});
  for (int i = 1; i <= n; ++i) {
    const PartyId me = PartyId::Generator(i);
    for (int k = 0; k < 2; ++k) {
      auto f = bus_->Receive(me, MsgKind::kPublicKey);
      if (!f) throw ProtocolIncompleteError(me.Name() + " got no public key");
      ByteReader rd(f->payload);
      const auto slot = static_cast<KeySlot>(rd.U8());
      PublicKey pk;
      Get(rd, &pk);
      (slot == KeySlot::kOnline ? generator_online_pk_ : generator_pk1_)[i - 1] =
          std::move(pk);
    }
    auto f2 = bus_->Receive(me, MsgKind::kSecondPublicKey);
    if (!f2 || f2->payload.size() != 32)
      throw ProtocolIncompleteError(me.Name() + " got no outer-layer key");
    std::copy(f2->payload.begin(), f2->payload.end(),
              generator_pk2_[i - 1].begin());
  }

  for (int i : senders) {
    if (i < 1 || i > n)
      throw ParamError("no generator " + std::to_string(i));
    Rng rng(Mix64(cfg_.seed ^ (kGeneratorSalt + static_cast<uint64_t>(i))));
    bus_->Send(Frame{PartyId::Generator(i), PartyId::Server(),
                     MsgKind::kTypeReport,
                     SealTypeReport(i, market_.types[i - 1],
                                    market_.gains[i - 1], generator_pk1_[i - 1],
                                    generator_pk2_[i - 1], rng)});
  }

  std::vector<std::optional<EncryptedTypeReport>> got(n);
  while (auto f = bus_->Receive(PartyId::Server(), MsgKind::kTypeReport)) {
    EncryptedTypeReport rep = OpenTypeReport(f->payload, server_->second_keys());
    if (rep.area < 1 || rep.area > n || !(f->sender == PartyId::Generator(rep.area)))
      throw ProtocolError("type report from " + f->sender.Name() +
                          " claims area " + std::to_string(rep.area));
    got[rep.area - 1] = std::move(rep);
  }
  std::vector<EncryptedTypeReport> reports;
  std::string missing;
  for (int i = 0; i < n; ++i) {
    if (got[i]) reports.push_back(std::move(*got[i]));
    else missing += (missing.empty() ? "" : ", ") + std::to_string(i + 1);
  }
  if (!missing.empty())
    throw ProtocolIncompleteError("no type report from generator(s) " + missing);

  controller_ = std::make_unique<EncryptedController>(
      SynthesizeEncrypted(*server_, reports, market_.plant.A,
                          cfg_.EffectiveSynthesis(), profile_.scale.s1_exp));
}

Trajectory MarketSession::RunOnlinePhase(bool paced) {
  const EncryptedController& ec = controller();
  const auto t0 = std::chrono::steady_clock::now();
  const int n = cfg_.n_areas();
  const int r_step = profile_.scale.r_exp;
  const LweParams& params = profile_.params;
  const PublicKey& pk = server_->public_key(KeySlot::kOnline);
  const auto loads = LoadSequence(cfg_);
  const auto noise = NoiseSequence(cfg_);
  const MatrixXd C = market_.plant.StackedC();
  const uint64_t calls_before = server_->masked_calls();

  Trajectory tr;
  tr.n_areas = n;
  tr.dt = cfg_.dt;
  tr.baseline_price = cfg_.baseline_price;
  tr.price_per_unit = cfg_.price_per_unit;
  tr.profile = profile_.name;
  tr.seed = cfg_.seed;

  LweMatrix z;
  z.rows = ec.R_int.rows;
  z.cols = 1;
  z.step_exp = profile_.scale.s1_exp + r_step;
  for (int i = 0; i < z.rows; ++i)
    z.data.push_back(TrivialLwe(params, pk.key_id, 0));

  // Adds GSW(m) times column j of coef into acc.
  auto accumulate = [](LweMatrix& acc, const GswColumns& g,
                       const LweMatrix& coef, int j) {
    std::vector<const LweCiphertext*> col;
    for (int i = 0; i < coef.rows; ++i) col.push_back(&coef.at(i, j));
    auto prod = ExternalProductMany(g, col);
    for (int i = 0; i < coef.rows; ++i)
      acc.data[i] = EncAdd(acc.data[i], prod[i]);
  };

  VectorXd x = VectorXd::Zero(market_.plant.states());
  std::vector<double> budgets;
  for (int t = 0; t < cfg_.horizon; ++t) {
    StepRecord r;
    r.t = t;
    r.x = x;
    r.w = loads[t];
    try {
      // Price round: the server sends Sel z, the ISO announces the price.
      auto fresh = server_->PriceRound(MulPlainLeft(ec.Sel, z), t, r_step);
      r.p = VectorXd::Zero(n);
      for (int i = 1; i <= n; ++i) {
        auto f = bus_->Receive(PartyId::Generator(i), MsgKind::kPriceAnnounce);
        if (!f)
          throw ProtocolIncompleteError("generator " + std::to_string(i) +
                                        " got no price at step " +
                                        std::to_string(t));
        ByteReader rd(f->payload);
        if (rd.U32() != static_cast<uint32_t>(t) ||
            rd.U32() != static_cast<uint32_t>(n))
          throw ProtocolError("price announce for the wrong step or shape");
        VectorXd p(n);
        for (int j = 0; j < n; ++j) p(j) = rd.F64();
        if (i == 1) r.p = p;
      }
      r.u = GeneratorInputs(market_, x, r.p);

      // Generators report their ACE, and their load when feeding forward.
      r.y = C * x + noise[t];
      for (int i = 1; i <= n; ++i) {
        ByteWriter w;
        w.U32(static_cast<uint32_t>(t));
        w.U32(static_cast<uint32_t>(i));
        w.U8(kPlainMeasurement);
        w.F64(r.y(i - 1));
        bus_->Send(Frame{PartyId::Generator(i), PartyId::Server(),
                         MsgKind::kMeasurement, w.Take()});
        if (cfg_.feedforward) {
          Rng rng(Mix64(cfg_.seed ^ (kGeneratorSalt + i)) ^
                  Mix64(static_cast<uint64_t>(t) + 1));
          FreshGswStream g(generator_online_pk_[i - 1],
                           Quantize(r.w(i - 1), r_step, params), rng.Next());
          ByteWriter e;
          e.U32(static_cast<uint32_t>(t));
          e.U32(static_cast<uint32_t>(i));
          e.U8(kEncryptedLoad);
          Put(e, g.Materialize());
          bus_->Send(Frame{PartyId::Generator(i), PartyId::Server(),
                           MsgKind::kMeasurement, e.Take()});
        }
      }

      // Server update z+ = R_int z + TB y + TH p (+ TW w).
      LweMatrix next = MulPlainLeft(ec.R_int, z);
      for (int j = 0; j < n; ++j) accumulate(next, fresh[j], ec.TH, j);
      while (auto f = bus_->Receive(PartyId::Server(), MsgKind::kMeasurement)) {
        ByteReader rd(f->payload);
        const uint32_t step = rd.U32();
        const int area = static_cast<int>(rd.U32());
        const uint8_t kind = rd.U8();
        if (step != static_cast<uint32_t>(t) || area < 1 || area > n ||
            !(f->sender == PartyId::Generator(area)))
          throw ProtocolError("measurement frame from " + f->sender.Name() +
                              " does not match step " + std::to_string(t));
        if (kind == kPlainMeasurement) {
          const double y = rd.F64();
          FreshGswStream g(pk, Quantize(y, r_step, params),
                           server_->rng().Next());
          accumulate(next, g, ec.TB, area - 1);
        } else if (kind == kEncryptedLoad) {
          GswCiphertext g;
          Get(rd, &g);
          accumulate(next, DenseColumns(g), ec.TW, area - 1);
        } else {
          throw ProtocolError("unknown measurement kind");
        }
        if (!rd.Done()) throw ProtocolError("trailing bytes in measurement");
      }
      z = std::move(next);
    } catch (const NoiseOverflowError& e) {
      std::string trace;
      const size_t from = budgets.size() > 8 ? budgets.size() - 8 : 0;
      for (size_t k = from; k < budgets.size(); ++k)
        trace += (trace.empty() ? "" : " ") + Fmt(budgets[k]);
      throw NoiseOverflowError("online step " + std::to_string(t) + ": " +
                               e.what() + "; budget trace (fraction of q/4): " +
                               (trace.empty() ? "none" : trace));
    }
    r.noise_budget = static_cast<double>(z.MaxBudget()) /
                     static_cast<double>(params.Quarter());
    budgets.push_back(r.noise_budget);
    x = market_.plant.A * x + market_.plant.B * r.u + market_.plant.Bw * r.w;
    tr.steps.push_back(std::move(r));
    if (paced)
      std::this_thread::sleep_until(
          t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                   std::chrono::duration<double>(cfg_.dt * (t + 1))));
  }
  tr.online_masked_calls = server_->masked_calls() - calls_before;
  tr.wall_seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  return tr;
}

Trajectory RunEncrypted(const SimConfig& cfg, bool two_process, bool paced) {
  MarketSession s(cfg, two_process);
  s.RunOfflinePhase();
  return s.RunOnlinePhase(paced);
}

std::vector<std::string> Trajectory::Header() const {
  std::vector<std::string> h{"t"};
  auto add = [&](const std::string& base, int count) {
    for (int i = 1; i <= count; ++i) h.push_back(base + "_" + std::to_string(i));
  };
  add("delta_f", n_areas);
  add("dP_tie", TieColumns(n_areas));
  add("dP_m", n_areas);
  add("dP_g", n_areas);
  add("ace", n_areas);
  add("p", n_areas);
  add("u", n_areas);
  add("w", n_areas);
  h.push_back("noise_budget");
  return h;
}

std::vector<double> Trajectory::Row(int k) const {
  const StepRecord& s = steps.at(k);
  std::vector<double> row{s.t * dt};
  auto state = [&](int offset) {
    for (int i = 0; i < n_areas; ++i)
      row.push_back(s.x(kAreaStates * i + offset));
  };
  state(0);
  for (int i = 0; i < TieColumns(n_areas); ++i)
    row.push_back(s.x(kAreaStates * i + 1));
  state(2);
  state(3);
  for (int i = 0; i < n_areas; ++i) row.push_back(s.y(i));
  for (int i = 0; i < n_areas; ++i)
    row.push_back(baseline_price + price_per_unit * s.p(i));
  for (int i = 0; i < n_areas; ++i) row.push_back(s.u(i));
  for (int i = 0; i < n_areas; ++i) row.push_back(s.w(i));
  row.push_back(s.noise_budget);
  return row;
}

std::string Trajectory::ToCsv() const {
  std::string out;
  const auto h = Header();
  for (size_t i = 0; i < h.size(); ++i) out += (i ? "," : "") + h[i];
  out += "\n";
  for (int k = 0; k < static_cast<int>(steps.size()); ++k) {
    const auto row = Row(k);
    for (size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + Fmt(row[i]);
    out += "\n";
  }
  return out;
}

std::string Trajectory::ToGnuplot() const {
  std::string out = "#";
  for (const auto& h : Header()) out += " " + h;
  out += "\n";
  for (int k = 0; k < static_cast<int>(steps.size()); ++k) {
    const auto row = Row(k);
    for (size_t i = 0; i < row.size(); ++i) out += (i ? " " : "") + Fmt(row[i]);
    out += "\n";
  }
  return out;
}

void Trajectory::WriteCsv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path);
  f << ToCsv();
  if (!f) throw ValidationError("write failed: " + path);
}

Trajectory Trajectory::FromCsv(const std::string& text, double baseline_price,
                               double price_per_unit) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty trajectory CSV");
  auto split = [](const std::string& s) {
    std::vector<std::string> v;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) v.push_back(cell);
    return v;
  };
  const auto header = split(line);
  int n = 0;
  for (const auto& h : header)
    if (h.rfind("delta_f_", 0) == 0) ++n;
  Trajectory tr;
  tr.n_areas = n;
  tr.baseline_price = baseline_price;
  tr.price_per_unit = price_per_unit;
  if (n < 1 || header != tr.Header())
    throw ValidationError("trajectory CSV header does not match the format");

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ValidationError("trajectory CSV line " + std::to_string(line_no) +
                            ": expected " + std::to_string(header.size()) +
                            " fields");
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ValidationError("trajectory CSV line " + std::to_string(line_no) +
                              ": bad number '" + c + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() >= 2) tr.dt = rows[1][0] - rows[0][0];

  const int ties = TieColumns(n);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (size_t k = 0; k < rows.size(); ++k) {
    const auto& row = rows[k];
    StepRecord s;
    s.t = static_cast<int>(k);
    s.x = VectorXd::Constant(kAreaStates * n, nan);
    size_t c = 1;
    for (int i = 0; i < n; ++i) s.x(kAreaStates * i) = row[c++];
    for (int i = 0; i < ties; ++i) s.x(kAreaStates * i + 1) = row[c++];
    for (int i = 0; i < n; ++i) s.x(kAreaStates * i + 2) = row[c++];
    for (int i = 0; i < n; ++i) s.x(kAreaStates * i + 3) = row[c++];
    s.y.resize(n);
    s.p.resize(n);
    s.u.resize(n);
    s.w.resize(n);
    for (int i = 0; i < n; ++i) s.y(i) = row[c++];
    for (int i = 0; i < n; ++i)
      s.p(i) = (row[c++] - baseline_price) / price_per_unit;
    for (int i = 0; i < n; ++i) s.u(i) = row[c++];
    for (int i = 0; i < n; ++i) s.w(i) = row[c++];
    s.noise_budget = row[c];
    tr.steps.push_back(std::move(s));
  }
  return tr;
}

double RunComparison::MaxAbs(const std::string& name) const {
  for (const auto& s : signals)
    if (s.name == name) return s.max_abs;
  throw LookupError("no signal named " + name);
}

double RunComparison::MaxAbsPrefix(const std::string& prefix) const {
  double m = 0.0;
  for (const auto& s : signals)
    if (s.name.rfind(prefix, 0) == 0) m = std::max(m, s.max_abs);
  return m;
}

std::string RunComparison::Report() const {
  std::ostringstream o;
  o << "signal,max_abs_dev,mean_abs_dev\n";
  for (const auto& s : signals)
    o << s.name << "," << Fmt(s.max_abs) << "," << Fmt(s.mean_abs) << "\n";
  for (size_t i = 0; i < settling_a.size(); ++i)
    o << "settling_steps_area_" << i + 1 << "," << settling_a[i] << ","
      << settling_b[i] << "\n";
  o << "max_price_deviation," << Fmt(max_price_deviation) << "\n";
  o << "tolerance," << Fmt(tolerance) << "\n";
  o << "result," << (pass ? "PASS" : "FAIL") << "\n";
  return o.str();
}

RunComparison CompareRuns(const Trajectory& a, const Trajectory& b,
                          double tolerance) {
  if (a.steps.size() != b.steps.size())
    throw IncompatibleError("runs have different horizons (" +
                            std::to_string(a.steps.size()) + " vs " +
                            std::to_string(b.steps.size()) + " steps)");
  if (a.n_areas != b.n_areas)
    throw IncompatibleError("runs have different area counts");
  if (a.price_per_unit != b.price_per_unit ||
      a.baseline_price != b.baseline_price)
    throw IncompatibleError("runs use different price units");
  RunComparison c;
  c.tolerance = tolerance;
  const auto header = a.Header();
  std::vector<SignalDeviation> dev(header.size());
  for (size_t i = 0; i < header.size(); ++i) dev[i].name = header[i];
  const int steps = static_cast<int>(a.steps.size());
  for (int k = 0; k < steps; ++k) {
    const auto ra = a.Row(k);
    const auto rb = b.Row(k);
    for (size_t i = 0; i < header.size(); ++i) {
      double d = std::abs(ra[i] - rb[i]);
      if (header[i].rfind("p_", 0) == 0) d /= a.price_per_unit;
      dev[i].max_abs = std::max(dev[i].max_abs, d);
      dev[i].mean_abs += d / steps;
    }
  }
  for (auto& d : dev)
    if (d.name != "t" && d.name != "noise_budget") c.signals.push_back(d);
  c.settling_a = SettlingSteps(a);
  c.settling_b = SettlingSteps(b);
  c.max_price_deviation = c.MaxAbsPrefix("p_");
  c.pass = c.MaxAbsPrefix("") <= tolerance;
  return c;
}

std::vector<int> SettlingSteps(const Trajectory& t, double fraction) {
  std::vector<int> out;
  const int steps = static_cast<int>(t.steps.size());
  for (int i = 0; i < t.n_areas; ++i) {
    const int idx = kAreaStates * i;
    double peak = 0.0;
    for (const auto& s : t.steps) peak = std::max(peak, std::abs(s.x(idx)));
    int settle = 0;
    for (int k = steps - 1; k >= 0; --k) {
      if (std::abs(t.steps[k].x(idx)) > fraction * peak) {
        settle = k + 1;
        break;
      }
    }
    out.push_back(peak == 0.0 ? 0 : (settle >= steps ? -1 : settle));
  }
  return out;
}

}  // namespace elfc
