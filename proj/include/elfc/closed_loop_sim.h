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

// Closed-loop market: plant, generators, delegate server and ISO stepping
// together, plus the plaintext reference loop and run comparison.

#ifndef ELFC_CLOSED_LOOP_SIM_H_
#define ELFC_CLOSED_LOOP_SIM_H_

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "elfc/generator_agent.h"
#include "elfc/market_synthesis.h"
#include "elfc/plant_model.h"
#include "elfc/protocols.h"
#include "elfc/quantizer.h"

namespace elfc {

struct LoadStep {
  int step = 0;
  int area = 1;  // 1-based
  double mw = 0.0;
};

struct DisturbanceModel {
  double baseline_mw = 5000.0;
  double base_mva = 1000.0;
  // Random steps are uniform in +-amplitude * baseline, held hold_steps.
  double amplitude = 0.01;
  int hold_steps = 25;
  // Replaces the random steps when non-empty; each entry sets the area's
  // load change from its step on.
  std::vector<LoadStep> schedule;

  double PerUnit(double mw) const { return mw / base_mva; }
  // Variance of one area's random load change in pu.
  double Variance() const;
};

// Config-file replacements for a named crypto profile. Steps and moduli
// are base-2 exponents.
struct ProfileOverrides {
  std::optional<int> L_exp, s1_exp, s2_exp, r_exp;
  std::optional<int> log_q, n_L, log_nu, d;
  std::optional<int64_t> sigma;

  bool empty() const;
};

struct SimConfig {
  std::string plant_profile = "paper-two-area";
  std::vector<AreaParams> areas;
  bool textbook_governor = false;
  std::vector<CostWeights> weights;
  SynthesisOptions synthesis;
  std::string crypto_profile = "paper-fine";
  ProfileOverrides overrides;
  int horizon = 150;
  double dt = 0.2;
  DisturbanceModel disturbance;
  double baseline_price = 135.0;  // $/MW
  double price_per_unit = 1.0;    // $/MW per unit of controller price
  // Uniform measurement noise on each ACE, +-noise_amplitude.
  double noise_amplitude = 1e-4;
  // Tracking tolerance against the plaintext loop, per signal and step.
  double price_tolerance = 2.0 / 1024.0;
  // Controller also receives the encrypted load changes.
  bool feedforward = false;
  uint64_t seed = 1;

  int n_areas() const { return static_cast<int>(areas.size()); }
  void Validate() const;
  // Synthesis options with the filter noise matched to the simulation.
  SynthesisOptions EffectiveSynthesis() const;
  // The named profile with the overrides applied and validated.
  Profile ResolvedProfile() const;
};

SimConfig PaperTwoAreaConfig();
SimConfig SingleAreaConfig();
// Built-in configs by name: "paper-two-area", "single-area".
SimConfig BuiltinConfig(const std::string& name);

struct StepRecord {
  int t = 0;
  Eigen::VectorXd x;  // plant state, 4 per area
  Eigen::VectorXd y;  // measured ACE
  Eigen::VectorXd p;  // price deviation
  Eigen::VectorXd u;
  Eigen::VectorXd w;  // load change, pu
  double noise_budget = 0.0;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  int n_areas = 0;
  double dt = 0.2;
  double baseline_price = 135.0;
  double price_per_unit = 1.0;
  std::string profile;  // crypto profile, or "plaintext"
  uint64_t seed = 0;
  double wall_seconds = 0.0;
  // Masked protocol calls issued while the loop ran.
  uint64_t online_masked_calls = 0;

  std::vector<std::string> Header() const;
  std::vector<double> Row(int k) const;
  std::string ToCsv() const;
  std::string ToGnuplot() const;
  void WriteCsv(const std::string& path) const;
  // Tie flows not written to the CSV come back as NaN.
  static Trajectory FromCsv(const std::string& text,
                            double baseline_price = 135.0,
                            double price_per_unit = 1.0);
};

// Piecewise-constant load changes in pu, one row per step.
std::vector<Eigen::VectorXd> LoadSequence(const SimConfig& cfg);
// Uniform measurement noise, one row per step.
std::vector<Eigen::VectorXd> NoiseSequence(const SimConfig& cfg);

struct Market {
  DiscreteModel plant;
  std::vector<GeneratorType> types;
  std::vector<LocalGains> gains;
};
Market BuildMarket(const SimConfig& cfg);

// Runs the same loop with the unencrypted LQG controller.
Trajectory RunPlaintext(const SimConfig& cfg);

// Generators, delegate server and ISO wired over one bus.
class MarketSession {
 public:
  explicit MarketSession(const SimConfig& cfg, bool two_process = false);
  ~MarketSession();
  MarketSession(const MarketSession&) = delete;
  MarketSession& operator=(const MarketSession&) = delete;

  // Key distribution, type reports and encrypted synthesis. Missing
  // reports raise ProtocolIncompleteError.
  void RunOfflinePhase(const std::vector<int>& reporting = {});
  // Online loop over the configured horizon; paced sleeps to dt per step.
  Trajectory RunOnlinePhase(bool paced = false);

  const SimConfig& config() const { return cfg_; }
  const Profile& profile() const { return profile_; }
  const Market& market() const { return market_; }
  const EncryptedController& controller() const;
  DelegateServer& server() { return *server_; }
  Bus& bus() { return *bus_; }
  IsoLink& link() { return *link_; }
  // Null when the ISO runs in another process.
  IsoParty* local_iso();

 private:
  SimConfig cfg_;
  Profile profile_;
  Market market_;
  std::unique_ptr<IsoLink> link_;
  std::unique_ptr<Bus> bus_;
  std::unique_ptr<DelegateServer> server_;
  std::unique_ptr<EncryptedController> controller_;
  // Keys each generator received, by area.
  std::vector<PublicKey> generator_pk1_;
  std::vector<PublicKey> generator_online_pk_;
  std::vector<std::array<uint8_t, 32>> generator_pk2_;
};

// Offline and online phases in one call.
Trajectory RunEncrypted(const SimConfig& cfg, bool two_process = false,
                        bool paced = false);

// Price signals are in controller units, the rest in plant units.
struct SignalDeviation {
  std::string name;
  double max_abs = 0.0;
  double mean_abs = 0.0;
};

struct RunComparison {
  std::vector<SignalDeviation> signals;
  // First step after which |delta_f_i| stays within 10% of its peak; -1
  // when it never does.
  std::vector<int> settling_a;
  std::vector<int> settling_b;
  double tolerance = 0.0;
  double max_price_deviation = 0.0;
  bool pass = false;

  double MaxAbs(const std::string& name) const;
  // Largest deviation over signals whose name starts with prefix.
  double MaxAbsPrefix(const std::string& prefix) const;
  std::string Report() const;
};

// Per-signal deviation of a against b; pass when every signal stays within
// tolerance at every step.
RunComparison CompareRuns(const Trajectory& a, const Trajectory& b,
                          double tolerance);
std::vector<int> SettlingSteps(const Trajectory& t, double fraction = 0.1);

}  // namespace elfc

#endif  // ELFC_CLOSED_LOOP_SIM_H_
