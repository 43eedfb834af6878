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

#include "elfc/cli.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "elfc/second_crypto.h"
#include "elfc/wire.h"

namespace elfc {

namespace {

using Eigen::MatrixXd;

std::string Fmt(double v, const char* spec = "%.17g") {
  char buf[40];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, ',')) out.push_back(Trim(cell));
  return out;
}

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

class ConfigReader {
 public:
  explicit ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void Fail(const Entry& e, const std::string& msg) const {
    throw ValidationError(source_ + ":" + std::to_string(e.line) + ": " +
                          e.key + ": " + msg);
  }

  double Number(const Entry& e) const {
    try {
      size_t used = 0;
      double v = std::stod(e.value, &used);
      if (used != e.value.size() || !std::isfinite(v)) throw 0;
      return v;
    } catch (...) {
      Fail(e, "expected a number, got '" + e.value + "'");
    }
  }

  double Positive(const Entry& e) const {
    const double v = Number(e);
    if (!(v > 0.0)) Fail(e, "must be positive");
    return v;
  }

  double NonNegative(const Entry& e) const {
    const double v = Number(e);
    if (!(v >= 0.0)) Fail(e, "must be >= 0");
    return v;
  }

  int64_t Integer(const Entry& e, int64_t lo, int64_t hi) const {
    try {
      size_t used = 0;
      long long v = std::stoll(e.value, &used);
      if (used != e.value.size()) throw 0;
      if (v < lo || v > hi)
        Fail(e, "must lie in [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]");
      return v;
    } catch (const ValidationError&) {
      throw;
    } catch (...) {
      Fail(e, "expected an integer, got '" + e.value + "'");
    }
  }

  bool Bool(const Entry& e) const {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    Fail(e, "expected true or false");
  }

  // "2^k" or a decimal that is an exact power of two; returns k.
  int Pow2(const Entry& e) const {
    const auto caret = e.value.find('^');
    if (caret != std::string::npos) {
      if (Trim(e.value.substr(0, caret)) != "2")
        Fail(e, "expected a power of two written 2^k");
      Entry ex = e;
      ex.value = Trim(e.value.substr(caret + 1));
      return static_cast<int>(Integer(ex, -1000, 1000));
    }
    const double v = Number(e);
    int k = 0;
    const double mant = std::frexp(v, &k);
    if (!(v > 0.0) || mant != 0.5) Fail(e, "must be a power of two");
    return k - 1;
  }

  std::vector<double> List(const Entry& e) const {
    std::vector<double> out;
    for (const auto& cell : SplitList(e.value)) {
      Entry c = e;
      c.value = cell;
      out.push_back(Number(c));
    }
    return out;
  }

  // n entries give a diagonal, n*n a row-major matrix.
  MatrixXd Weight(const Entry& e, int n) const {
    const auto v = List(e);
    MatrixXd m = MatrixXd::Zero(n, n);
    if (static_cast<int>(v.size()) == n) {
      for (int i = 0; i < n; ++i) m(i, i) = v[i];
    } else if (static_cast<int>(v.size()) == n * n) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = v[i * n + j];
    } else {
      Fail(e, "expected " + std::to_string(n) + " diagonal entries or " +
                  std::to_string(n * n) + " matrix entries");
    }
    if (!m.isApprox(m.transpose(), 1e-12)) Fail(e, "must be symmetric");
    return m;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

// "area.3.H" -> (3, "H"); index must lie in [1, n].
bool Indexed(const ConfigReader& rd, const Entry& e, const std::string& head,
             int n, int* index, std::string* field) {
  if (e.key.rfind(head + ".", 0) != 0) return false;
  const std::string rest = e.key.substr(head.size() + 1);
  const auto dot = rest.find('.');
  if (dot == std::string::npos) return false;
  Entry idx = e;
  idx.value = rest.substr(0, dot);
  *index = static_cast<int>(rd.Integer(idx, 1, n));
  *field = rest.substr(dot + 1);
  return true;
}

}  // namespace

SimConfig ParseConfig(const std::string& text, const std::string& source) {
  ConfigReader rd(source);
  std::vector<Entry> entries;
  std::map<std::string, int> seen;
  {
    std::istringstream in(text);
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
      ++no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = Trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ValidationError(source + ":" + std::to_string(no) +
                              ": expected 'key = value'");
      Entry e{Trim(line.substr(0, eq)), Trim(line.substr(eq + 1)), no};
      if (e.key.empty()) rd.Fail(e, "empty key");
      if (e.value.empty()) rd.Fail(e, "empty value");
      if (e.key != "disturbance.step") {
        auto [it, fresh] = seen.emplace(e.key, no);
        if (!fresh)
          rd.Fail(e, "duplicate key (first set on line " +
                         std::to_string(it->second) + ")");
      }
      entries.push_back(std::move(e));
    }
  }
  auto find = [&](const std::string& key) -> const Entry* {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  };

  // The plant profile supplies every default; the area count reshapes it.
  SimConfig c;
  if (const Entry* e = find("plant.profile")) {
    try {
      c = BuiltinConfig(e->value);
    } catch (const LookupError& err) {
      rd.Fail(*e, err.what());
    }
  } else {
    c = PaperTwoAreaConfig();
  }
  const int base_areas = c.n_areas();
  int n = base_areas;
  if (const Entry* e = find("plant.areas")) {
    n = static_cast<int>(rd.Integer(*e, 1, 254));
    if (n != base_areas) {
      c.areas.resize(n);
      for (auto& a : c.areas) a.ties.resize(n, 0.0);
      c.weights.resize(n);
      c.synthesis.Q0.resize(0, 0);
    }
  }
  std::vector<bool> weight_set(n, false), area_r_set(n, false);

  for (const auto& e : entries) {
    const std::string& k = e.key;
    int i = 0;
    std::string f;
    if (k == "plant.profile" || k == "plant.areas") continue;
    if (k == "plant.textbook_governor") {
      c.textbook_governor = rd.Bool(e);
    } else if (Indexed(rd, e, "area", n, &i, &f)) {
      AreaParams& a = c.areas[i - 1];
      if (f == "H") a.H = rd.Positive(e);
      else if (f == "D") a.D = rd.NonNegative(e);
      else if (f == "R") a.R = rd.Positive(e);
      else if (f == "T_g") a.T_g = rd.Positive(e);
      else if (f == "T_t") a.T_t = rd.Positive(e);
      else if (f == "external_tie") a.external_tie = rd.NonNegative(e);
      else if (f == "ties") {
        a.ties = rd.List(e);
        if (static_cast<int>(a.ties.size()) != n)
          rd.Fail(e, "expected one tie coefficient per area");
      } else {
        rd.Fail(e, "unknown key");
      }
    } else if (Indexed(rd, e, "type", n, &i, &f)) {
      if (f == "Q") {
        c.weights[i - 1].Q = rd.Weight(e, kAreaStates);
        weight_set[i - 1] = true;
      } else if (f == "R") {
        c.weights[i - 1].R = rd.Positive(e);
        area_r_set[i - 1] = true;
      } else {
        rd.Fail(e, "unknown key");
      }
    } else if (k == "synthesis.Q0") {
      c.synthesis.Q0 = rd.Weight(e, kAreaStates * n);
    } else if (k == "synthesis.R0") {
      c.synthesis.R0 = rd.Positive(e);
    } else if (k == "synthesis.cross_term") {
      c.synthesis.cross_term = rd.Bool(e);
    } else if (k == "synthesis.control_iterations") {
      c.synthesis.control_iterations =
          static_cast<int>(rd.Integer(e, 1, 1000000));
    } else if (k == "synthesis.filter_iterations") {
      c.synthesis.filter_iterations =
          static_cast<int>(rd.Integer(e, 1, 1000000));
    } else if (k == "synthesis.residual_steps") {
      c.synthesis.residual_steps = rd.NonNegative(e);
    } else if (k == "synthesis.load_variance") {
      c.synthesis.noise.load_variance = rd.Positive(e);
    } else if (k == "synthesis.regularization") {
      c.synthesis.noise.regularization = rd.NonNegative(e);
    } else if (k == "crypto.profile") {
      c.crypto_profile = e.value;
      try {
        SelectProfile(e.value);
      } catch (const LookupError& err) {
        rd.Fail(e, err.what());
      }
    } else if (k == "scale.L") {
      c.overrides.L_exp = rd.Pow2(e);
    } else if (k == "scale.s1") {
      c.overrides.s1_exp = rd.Pow2(e);
    } else if (k == "scale.s2") {
      c.overrides.s2_exp = rd.Pow2(e);
    } else if (k == "scale.r") {
      c.overrides.r_exp = rd.Pow2(e);
    } else if (k == "param.q") {
      c.overrides.log_q = rd.Pow2(e);
    } else if (k == "param.nu") {
      c.overrides.log_nu = rd.Pow2(e);
    } else if (k == "param.n_L") {
      c.overrides.n_L = static_cast<int>(rd.Integer(e, 1, 4096));
    } else if (k == "param.d") {
      c.overrides.d = static_cast<int>(rd.Integer(e, 1, 128));
    } else if (k == "param.sigma") {
      c.overrides.sigma = rd.Integer(e, 0, 1 << 20);
    } else if (k == "sim.horizon") {
      c.horizon = static_cast<int>(rd.Integer(e, 1, 10000000));
    } else if (k == "sim.dt") {
      c.dt = rd.Positive(e);
    } else if (k == "sim.seed") {
      c.seed = static_cast<uint64_t>(rd.Integer(e, 0, INT64_MAX));
    } else if (k == "sim.feedforward") {
      c.feedforward = rd.Bool(e);
    } else if (k == "sim.noise_amplitude") {
      c.noise_amplitude = rd.NonNegative(e);
    } else if (k == "sim.baseline_price") {
      c.baseline_price = rd.Number(e);
    } else if (k == "sim.price_per_unit") {
      c.price_per_unit = rd.Positive(e);
    } else if (k == "sim.price_tolerance") {
      c.price_tolerance = rd.Positive(e);
    } else if (k == "disturbance.baseline_mw") {
      c.disturbance.baseline_mw = rd.NonNegative(e);
    } else if (k == "disturbance.base_mva") {
      c.disturbance.base_mva = rd.Positive(e);
    } else if (k == "disturbance.amplitude") {
      c.disturbance.amplitude = rd.NonNegative(e);
    } else if (k == "disturbance.hold_steps") {
      c.disturbance.hold_steps = static_cast<int>(rd.Integer(e, 1, 10000000));
    } else if (k == "disturbance.step") {
      const auto v = SplitList(e.value);
      if (v.size() != 3) rd.Fail(e, "expected 'step, area, MW'");
      Entry s = e, a = e, mw = e;
      s.value = v[0];
      a.value = v[1];
      mw.value = v[2];
      c.disturbance.schedule.push_back(
          {static_cast<int>(rd.Integer(s, 0, 10000000)),
           static_cast<int>(rd.Integer(a, 1, n)), rd.Number(mw)});
    } else {
      rd.Fail(e, "unknown key");
    }
  }

  if (!find("sim.dt"))
    throw ValidationError(source + ": missing required key sim.dt");
  if (!find("sim.horizon"))
    throw ValidationError(source + ": missing required key sim.horizon");
  for (int a = base_areas; a < n; ++a) {
    if (!weight_set[a] || !area_r_set[a])
      throw ValidationError(source + ": area " + std::to_string(a + 1) +
                            " needs type." + std::to_string(a + 1) +
                            ".Q and type." + std::to_string(a + 1) + ".R");
  }
  if (c.synthesis.Q0.size() == 0)
    throw ValidationError(source +
                          ": synthesis.Q0 is required when plant.areas "
                          "changes the area count");
  try {
    c.Validate();
  } catch (const Error& err) {
    throw ValidationError(source + ": " + err.what());
  }
  return c;
}

SimConfig LoadConfig(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ParseConfig(ss.str(), path);
}

std::string CanonicalConfig(const SimConfig& c) {
  std::ostringstream o;
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + Fmt(v[i]);
    return s;
  };
  auto matrix = [&](const MatrixXd& m) {
    std::vector<double> v;
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
    return list(v);
  };
  auto b = [](bool v) { return v ? "true" : "false"; };
  const int n = c.n_areas();
  o << "plant.profile = " << c.plant_profile << "\n";
  o << "plant.areas = " << n << "\n";
  o << "plant.textbook_governor = " << b(c.textbook_governor) << "\n";
  for (int i = 0; i < n; ++i) {
    const AreaParams& a = c.areas[i];
    const std::string p = "area." + std::to_string(i + 1) + ".";
    o << p << "H = " << Fmt(a.H) << "\n" << p << "D = " << Fmt(a.D) << "\n"
      << p << "R = " << Fmt(a.R) << "\n" << p << "T_g = " << Fmt(a.T_g) << "\n"
      << p << "T_t = " << Fmt(a.T_t) << "\n";
    std::vector<double> ties = a.ties;
    ties.resize(n, 0.0);
    o << p << "ties = " << list(ties) << "\n";
    o << p << "external_tie = " << Fmt(a.external_tie) << "\n";
  }
  for (int i = 0; i < n; ++i) {
    const std::string p = "type." + std::to_string(i + 1) + ".";
    o << p << "Q = " << matrix(c.weights[i].Q) << "\n";
    o << p << "R = " << Fmt(c.weights[i].R) << "\n";
  }
  const SynthesisOptions& s = c.synthesis;
  o << "synthesis.Q0 = " << matrix(s.Q0) << "\n";
  o << "synthesis.R0 = " << Fmt(s.R0) << "\n";
  o << "synthesis.cross_term = " << b(s.cross_term) << "\n";
  o << "synthesis.control_iterations = " << s.control_iterations << "\n";
  o << "synthesis.filter_iterations = " << s.filter_iterations << "\n";
  o << "synthesis.residual_steps = " << Fmt(s.residual_steps) << "\n";
  o << "synthesis.load_variance = " << Fmt(s.noise.load_variance) << "\n";
  o << "synthesis.regularization = " << Fmt(s.noise.regularization) << "\n";
  o << "crypto.profile = " << c.crypto_profile << "\n";
  const Profile p = c.ResolvedProfile();
  o << "scale.L = 2^" << p.scale.L_exp << "\n";
  o << "scale.s1 = 2^" << p.scale.s1_exp << "\n";
  o << "scale.s2 = 2^" << p.scale.s2_exp << "\n";
  o << "scale.r = 2^" << p.scale.r_exp << "\n";
  o << "param.q = 2^" << p.params.log_q << "\n";
  o << "param.sigma = " << p.params.sigma << "\n";
  o << "param.n_L = " << p.params.n_L << "\n";
  o << "param.nu = 2^" << p.params.log_nu << "\n";
  o << "param.d = " << p.params.d << "\n";
  o << "sim.horizon = " << c.horizon << "\n";
  o << "sim.dt = " << Fmt(c.dt) << "\n";
  o << "sim.seed = " << c.seed << "\n";
  o << "sim.feedforward = " << b(c.feedforward) << "\n";
  o << "sim.noise_amplitude = " << Fmt(c.noise_amplitude) << "\n";
  o << "sim.baseline_price = " << Fmt(c.baseline_price) << "\n";
  o << "sim.price_per_unit = " << Fmt(c.price_per_unit) << "\n";
  o << "sim.price_tolerance = " << Fmt(c.price_tolerance) << "\n";
  const DisturbanceModel& d = c.disturbance;
  o << "disturbance.baseline_mw = " << Fmt(d.baseline_mw) << "\n";
  o << "disturbance.base_mva = " << Fmt(d.base_mva) << "\n";
  o << "disturbance.amplitude = " << Fmt(d.amplitude) << "\n";
  o << "disturbance.hold_steps = " << d.hold_steps << "\n";
  for (const auto& st : d.schedule)
    o << "disturbance.step = " << st.step << ", " << st.area << ", "
      << Fmt(st.mw) << "\n";
  return o.str();
}

std::string RunManifest::ToJson() const {
  nlohmann::ordered_json j;
  j["artifact_version"] = artifact_version;
  j["command"] = command;
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  j["plant_profile"] = plant_profile;
  j["crypto_profile"] = crypto_profile;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

RunManifest MakeManifest(const std::string& command, const SimConfig& c,
                         const std::vector<std::string>& outputs) {
  RunManifest m;
  m.command = command;
  m.config_digest = Sha256Hex(CanonicalConfig(c));
  m.seed = c.seed;
  m.plant_profile = c.plant_profile;
  m.crypto_profile = c.crypto_profile;
  m.outputs = outputs;
  return m;
}

namespace {

constexpr const char* kControllerTag = "elfc-controller";

void PutScale(ByteWriter& w, const ScaleParams& s) {
  w.I64(s.L_exp);
  w.I64(s.s1_exp);
  w.I64(s.s2_exp);
  w.I64(s.r_exp);
}

int GetInt(ByteReader& r) { return static_cast<int>(r.I64()); }

}  // namespace

std::vector<uint8_t> ExportController(const EncryptedController& ec,
                                      const Profile& profile, double dt) {
  ByteWriter w;
  w.Header();
  w.Str(kControllerTag);
  w.Str(kArtifactVersion);
  w.F64(dt);
  w.Str(profile.name);
  Put(w, profile.params);
  PutScale(w, profile.scale);
  Put(w, ec.R_int);
  Put(w, ec.Sel);
  w.I64(ec.index);
  Put(w, ec.TB);
  Put(w, ec.TH);
  Put(w, ec.TW);
  Put(w, ec.P1);
  Put(w, ec.P2n);
  Put(w, ec.K);
  Put(w, ec.L);
  Put(w, ec.A_K);
  Put(w, ec.C_K);
  Put(w, ec.T);
  Put(w, ec.T_inv);
  Put(w, ec.H);
  w.I64(ec.observability_rank);
  w.F64(ec.load_variance);
  return w.Take();
}

ControllerArtifact ImportController(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  r.Header();
  if (r.Str() != kControllerTag)
    throw ValidationError("not a controller artifact");
  const std::string version = r.Str();
  if (version != kArtifactVersion)
    throw IncompatibleError("controller artifact version " + version +
                            " is not " + kArtifactVersion);
  ControllerArtifact a;
  a.dt = r.F64();
  a.profile = r.Str();
  Get(r, &a.online);
  a.scale.L_exp = GetInt(r);
  a.scale.s1_exp = GetInt(r);
  a.scale.s2_exp = GetInt(r);
  a.scale.r_exp = GetInt(r);
  EncryptedController& ec = a.controller;
  Get(r, &ec.R_int);
  Get(r, &ec.Sel);
  ec.index = GetInt(r);
  Get(r, &ec.TB);
  Get(r, &ec.TH);
  Get(r, &ec.TW);
  Get(r, &ec.P1);
  Get(r, &ec.P2n);
  Get(r, &ec.K);
  Get(r, &ec.L);
  Get(r, &ec.A_K);
  Get(r, &ec.C_K);
  Get(r, &ec.T);
  Get(r, &ec.T_inv);
  Get(r, &ec.H);
  ec.observability_rank = GetInt(r);
  ec.load_variance = r.F64();
  if (!r.Done()) throw ValidationError("trailing bytes in controller artifact");
  return a;
}

std::string RevealController(const EncryptedController& ec,
                             const SecretKey& synthesis,
                             const SecretKey& online) {
  auto dump = [](const MatrixXd& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int i = 0; i < m.rows(); ++i) {
      std::vector<double> row(m.cols());
      for (int j = 0; j < m.cols(); ++j) row[j] = m(i, j);
      rows.push_back(row);
    }
    return rows;
  };
  auto lwe = [&](const LweMatrix& m, const SecretKey& sk) {
    return dump(DequantizeMatrix(DecryptMatrix(sk, m), m.step_exp));
  };
  auto gsw = [&](const GswMatrix& m, const SecretKey& sk) {
    return dump(DequantizeMatrix(DecryptMatrix(sk, m), m.step_exp));
  };
  auto ints = [&](const IntMatrix& m) {
    return dump(DequantizeMatrix(m, 0));
  };
  nlohmann::ordered_json j;
  j["warning"] = "decrypted controller; contains type-derived secrets";
  j["P1"] = lwe(ec.P1, synthesis);
  j["P2_normalized"] = lwe(ec.P2n, synthesis);
  j["K"] = lwe(ec.K, synthesis);
  j["L"] = lwe(ec.L, synthesis);
  j["A_K"] = gsw(ec.A_K, synthesis);
  j["C_K"] = lwe(ec.C_K, synthesis);
  j["T"] = gsw(ec.T, synthesis);
  j["H"] = lwe(ec.H, synthesis);
  j["R_int"] = ints(ec.R_int);
  j["Sel"] = ints(ec.Sel);
  j["TB"] = lwe(ec.TB, online);
  j["TH"] = lwe(ec.TH, online);
  j["TW"] = lwe(ec.TW, online);
  return j.dump(2) + "\n";
}

namespace {

struct CommonFlags {
  std::string config;
  std::string profile;
  std::string out = ".";
  std::optional<uint64_t> seed;
  bool paced = false;
  bool two_process = false;
  bool unsafe_reveal = false;
};

void WriteFile(const std::filesystem::path& p, const std::string& data) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + p.string());
  f << data;
  if (!f) throw ValidationError("write failed: " + p.string());
}

void WriteFile(const std::filesystem::path& p, const std::vector<uint8_t>& b) {
  WriteFile(p, std::string(b.begin(), b.end()));
}

std::string ReadFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

SimConfig ResolveConfig(const CommonFlags& fl) {
  SimConfig c = fl.config.empty() ? PaperTwoAreaConfig() : LoadConfig(fl.config);
  if (const char* env = std::getenv("ELFC_SEED")) {
    try {
      size_t used = 0;
      const std::string s(env);
      c.seed = std::stoull(s, &used);
      if (used != s.size()) throw 0;
    } catch (...) {
      throw ValidationError("ELFC_SEED must be an unsigned integer");
    }
  }
  if (fl.seed) c.seed = *fl.seed;
  if (!fl.profile.empty() && fl.profile != "plaintext") {
    c.crypto_profile = fl.profile;
    c.overrides = {};
  }
  c.Validate();
  return c;
}

std::filesystem::path OutDir(const CommonFlags& fl) {
  std::filesystem::path d(fl.out);
  std::error_code ec;
  std::filesystem::create_directories(d, ec);
  if (ec) throw ValidationError("cannot create " + d.string());
  return d;
}

int Synthesize(const CommonFlags& fl, std::ostream& out) {
  const SimConfig c = ResolveConfig(fl);
  const auto dir = OutDir(fl);
  const auto t0 = std::chrono::steady_clock::now();
  MarketSession s(c, fl.two_process);
  s.RunOfflinePhase();
  std::vector<std::string> outputs{"controller.elfc", "transcript.csv"};
  WriteFile(dir / "controller.elfc",
            ExportController(s.controller(), s.profile(), c.dt));
  s.bus().transcript().WriteCsv((dir / "transcript.csv").string());
  if (fl.unsafe_reveal) {
    IsoParty* iso = s.local_iso();
    if (!iso)
      throw ValidationError(
          "--unsafe-reveal needs the ISO keys in this process; drop "
          "--two-process");
    WriteFile(dir / "controller_reveal.json",
              RevealController(s.controller(),
                               iso->secret_key(KeySlot::kSynthesis),
                               iso->secret_key(KeySlot::kOnline)));
    outputs.push_back("controller_reveal.json");
  }
  const RunManifest m = MakeManifest("synthesize", c, outputs);
  WriteFile(dir / "manifest.json", m.ToJson());
  out << "synthesized " << c.n_areas() << "-area controller under "
      << s.profile().name << " in "
      << Fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           t0)
                 .count(),
             "%.1f")
      << " s; " << s.server().masked_calls() << " masked calls\n";
  out << "config digest " << m.config_digest << "\n";
  return 0;
}

int Run(const CommonFlags& fl, std::ostream& out) {
  const SimConfig c = ResolveConfig(fl);
  const auto dir = OutDir(fl);
  const Trajectory plain = RunPlaintext(c);
  std::vector<std::string> outputs;
  if (fl.profile == "plaintext") {
    WriteFile(dir / "trajectory.csv", plain.ToCsv());
    WriteFile(dir / "trajectory.dat", plain.ToGnuplot());
    outputs = {"trajectory.csv", "trajectory.dat"};
    RunManifest m = MakeManifest("run", c, outputs);
    m.crypto_profile = "plaintext";
    WriteFile(dir / "manifest.json", m.ToJson());
    out << "plaintext run of " << c.horizon << " steps\n";
    return 0;
  }
  MarketSession s(c, fl.two_process);
  s.RunOfflinePhase();
  const Trajectory enc = s.RunOnlinePhase(fl.paced);
  const double tol = c.price_tolerance;
  const RunComparison cmp = CompareRuns(enc, plain, tol);
  WriteFile(dir / "trajectory.csv", enc.ToCsv());
  WriteFile(dir / "trajectory.dat", enc.ToGnuplot());
  WriteFile(dir / "plaintext.csv", plain.ToCsv());
  WriteFile(dir / "comparison.txt", cmp.Report());
  s.bus().transcript().WriteCsv((dir / "transcript.csv").string());
  outputs = {"trajectory.csv", "trajectory.dat", "plaintext.csv",
             "comparison.txt", "transcript.csv"};
  const RunManifest m = MakeManifest("run", c, outputs);
  WriteFile(dir / "manifest.json", m.ToJson());
  const bool degraded = !cmp.pass;
  out << "encrypted run of " << c.horizon << " steps under "
      << s.profile().name << ": online " << Fmt(enc.wall_seconds, "%.1f")
      << " s, max price deviation " << Fmt(cmp.max_price_deviation, "%.3g")
      << ", max delta_f deviation "
      << Fmt(cmp.MaxAbsPrefix("delta_f_"), "%.3g") << " (tolerance "
      << Fmt(tol, "%.3g") << ")\n";
  out << (degraded ? "DEGRADED: tracking outside tolerance\n" : "OK\n");
  return degraded ? 1 : 0;
}

int Compare(const std::string& a_path, const std::string& b_path,
            const CommonFlags& fl, std::optional<double> tolerance,
            std::ostream& out) {
  SimConfig c = fl.config.empty() ? PaperTwoAreaConfig() : LoadConfig(fl.config);
  const double baseline = c.baseline_price;
  const double per_unit = c.price_per_unit;
  const double tol = tolerance ? *tolerance : c.price_tolerance;
  const Trajectory a =
      Trajectory::FromCsv(ReadFile(a_path), baseline, per_unit);
  const Trajectory b =
      Trajectory::FromCsv(ReadFile(b_path), baseline, per_unit);
  const RunComparison r = CompareRuns(a, b, tol);
  out << r.Report();
  if (fl.out != ".") WriteFile(OutDir(fl) / "comparison.txt", r.Report());
  return r.pass ? 0 : 1;
}

int Audit(const std::string& path, std::ostream& out) {
  const auto entries = Transcript::ParseCsv(ReadFile(path));
  const AuditReport r = AuditTranscript(entries);
  out << r.Summary() << "\n";
  for (const auto& f : r.findings)
    out << "seq " << f.seq << " [" << f.rule << "] " << f.detail << "\n";
  return r.ok() ? 0 : static_cast<int>(ErrorKind::kProtocol);
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Encrypted price-based load-frequency-control market", "elfc"};
  app.require_subcommand(1);
  CommonFlags fl;
  auto common = [&](CLI::App* sub, bool run_flags) {
    sub->add_option("--config", fl.config, "config file (key = value)");
    sub->add_option("--seed", fl.seed, "seed; overrides ELFC_SEED and sim.seed");
    sub->add_option("--profile", fl.profile,
                    "crypto profile (paper-coarse, paper-fine, desk, "
                    "desk-coarse, desk-fine; run also takes plaintext)");
    sub->add_option("--out", fl.out, "output directory");
    if (run_flags) {
      sub->add_flag("--two-process", fl.two_process,
                    "run the ISO in a forked process");
    }
  };
  auto* syn = app.add_subcommand("synthesize", "off-line encrypted synthesis");
  common(syn, true);
  syn->add_flag("--unsafe-reveal", fl.unsafe_reveal,
                "also write the decrypted controller as JSON");
  auto* run = app.add_subcommand("run", "synthesis and closed-loop run");
  common(run, true);
  run->add_flag("--paced", fl.paced, "sleep to dt per step");
  auto* cmp = app.add_subcommand("compare", "compare two trajectory CSVs");
  common(cmp, false);
  std::string a_path, b_path;
  std::optional<double> tolerance;
  cmp->add_option("a", a_path, "trajectory CSV")->required();
  cmp->add_option("b", b_path, "reference trajectory CSV")->required();
  cmp->add_option("--tolerance", tolerance,
                  "per-signal tolerance (default sim.price_tolerance)");
  auto* aud = app.add_subcommand("audit", "leakage audit of a transcript");
  std::string transcript;
  aud->add_option("transcript", transcript, "transcript CSV")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "elfc: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kValidation);
  }

  try {
    if (*syn) return Synthesize(fl, out);
    if (*run) return Run(fl, out);
    if (*cmp) return Compare(a_path, b_path, fl, tolerance, out);
    return Audit(transcript, out);
  } catch (const Error& e) {
    err << "elfc: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "elfc: internal error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kProtocol);
  }
}

}  // namespace elfc
