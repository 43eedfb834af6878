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

#include "elfc/he_core.h"

#include <algorithm>
#include <string>

namespace elfc {
namespace {

constexpr uint64_t kColumnSalt = 0xd6e8feb86659fd93ULL;

Zq GadgetPower(const LweParams& p, int j) {
  int shift = j * p.log_nu;
  if (shift >= p.log_q) return 0;
  return Zq{1} << shift;
}

Zq Encode(const LweParams& p, PlainScalar m) {
  Zq t_mask = p.log_t() >= 128 ? ~Zq{0} : ((Zq{1} << p.log_t()) - 1);
  return ((static_cast<Zq>(m) & t_mask) << p.log_gain) & p.Mask();
}

void CheckPlainRange(const LweParams& p, PlainScalar m) {
  if (p.log_t() >= 128) return;
  Int128 half = Int128{1} << (p.log_t() - 1);
  if (m < -half || m >= half) {
    throw RangeError("plaintext " + ToString(m) +
                     " outside centered range of modulus 2^" +
                     std::to_string(p.log_t()));
  }
}

// Phase b + <a, s> for a column stored as (b, a_1..a_n).
Zq Phase(const SecretKey& sk, const Zq* c) {
  Zq acc = c[0];
  for (int i = 0; i < sk.params.n_L; ++i) {
    int8_t si = sk.s[i];
    if (si == 1)
      acc += c[i + 1];
    else if (si == -1)
      acc -= c[i + 1];
  }
  return acc & sk.params.Mask();
}

// Writes b = -<a, s> + e into c[0] given a in c[1..n].
void CloseSample(const SecretKey& sk, Zq* c, int64_t e) {
  c[0] = 0;
  Zq ph = Phase(sk, c);
  c[0] = (static_cast<Zq>(static_cast<Int128>(e)) - ph) & sk.params.Mask();
}

Zq SeedWord(uint64_t base, size_t i, int log_q) {
  if (log_q <= 64) return Mix64(base + i);
  return (static_cast<Zq>(Mix64(base + 2 * i)) << 64) |
         Mix64(base + 2 * i + 1);
}

void CheckSame(const LweParams& a, uint64_t ka, const LweParams& b,
               uint64_t kb) {
  if (!(a == b) || ka != kb) {
    throw IncompatibleError("ciphertexts under different keys or params");
  }
}

void CheckBudget(Zq budget, const LweParams& p, const std::string& where) {
  if (budget >= p.Quarter()) {
    throw NoiseOverflowError("predicted noise budget 2^" +
                             std::to_string(BitLength(budget) - 1) +
                             " reaches q/4" + where);
  }
}

// Gadget digits of an LWE vector; layout matches GSW column order.
void Decompose(const LweParams& p, const Zq* v, std::vector<uint64_t>* out) {
  const size_t rows = p.Rows();
  out->assign(p.GadgetCols(), 0);
  const Zq digit_mask = (Zq{1} << p.log_nu) - 1;
  for (size_t r = 0; r < rows; ++r) {
    Zq x = v[r];
    for (int j = 0; j < p.d; ++j) {
      int shift = j * p.log_nu;
      if (shift >= 128) break;
      (*out)[r * p.d + j] = static_cast<uint64_t>((x >> shift) & digit_mask);
    }
  }
}

void Accumulate(const GswCiphertext& g, const std::vector<uint64_t>& digits,
                Zq* acc) {
  const size_t rows = g.params.Rows();
  const size_t cols = g.params.GadgetCols();
  for (size_t c = 0; c < cols; ++c) {
    const uint64_t dg = digits[c];
    if (dg == 0) continue;
    const Zq* col = g.Column(c);
    if (dg == 1) {
      for (size_t r = 0; r < rows; ++r) acc[r] += col[r];
    } else {
      for (size_t r = 0; r < rows; ++r) acc[r] += col[r] * dg;
    }
  }
}

Zq ProductBudget(const LweParams& p, Zq left_bound, Zq left_budget,
                 Zq right_budget) {
  return SatAdd(SatMul(left_bound, right_budget),
                SatMul(p.ProductExpansion(), left_budget));
}

LweCiphertext EmptyLwe(const LweParams& p, uint64_t id) {
  LweCiphertext c;
  c.params = p;
  c.key_id = id;
  c.body.assign(p.Rows(), 0);
  return c;
}

}  // namespace

void LweParams::Validate() const {
  if (log_q < 2 || log_q > 128) throw ParamError("q must be 2^k, 2<=k<=128");
  if (sigma < 0) throw ParamError("sigma must be >= 0");
  if (n_L < 1) throw ParamError("n_L must be >= 1");
  if (log_nu < 1 || log_nu > 32) throw ParamError("nu must be 2^k, 1<=k<=32");
  if (d < 1) throw ParamError("d must be >= 1");
  if (static_cast<int64_t>(log_nu) * d < log_q) {
    throw ParamError("gadget does not cover the modulus: nu^d = 2^" +
                     std::to_string(log_nu * d) + " < q = 2^" +
                     std::to_string(log_q));
  }
  if (log_gain < 0 || log_gain > log_q - 2) {
    throw ParamError("embedding gain out of range");
  }
  if (log_gain % log_nu != 0) {
    throw ParamError("embedding gain must be a power of nu");
  }
}

std::vector<Zq> SecretKey::Vector() const {
  std::vector<Zq> v(params.Rows());
  v[0] = 1;
  for (int i = 0; i < params.n_L; ++i) v[i + 1] = Reduce(s[i], params);
  return v;
}

Int128 Center(Zq x, int bits) {
  if (bits >= 128) return static_cast<Int128>(x);
  Zq m = (Zq{1} << bits) - 1;
  x &= m;
  if (x >= (Zq{1} << (bits - 1))) {
    return static_cast<Int128>(x) - (Int128{1} << (bits - 1)) -
           (Int128{1} << (bits - 1));
  }
  return static_cast<Int128>(x);
}

Zq Reduce(Int128 v, const LweParams& p) {
  return static_cast<Zq>(v) & p.Mask();
}

IntMatrix IntMatrix::Identity(int n) {
  IntMatrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1;
  return m;
}

IntMatrix IntMatrix::Transposed() const {
  IntMatrix t(cols, rows);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) t.at(j, i) = at(i, j);
  return t;
}

IntMatrix operator*(const IntMatrix& a, const IntMatrix& b) {
  if (a.cols != b.rows) throw ShapeError("integer matrix product shape");
  IntMatrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      Int128 x = a.at(i, k);
      if (x == 0) continue;
      for (int j = 0; j < b.cols; ++j) c.at(i, j) += x * b.at(k, j);
    }
  return c;
}

void DenseColumns::Column(size_t c, Zq* out) const {
  const Zq* col = c_.Column(c);
  std::copy(col, col + c_.params.Rows(), out);
}

void SeededGsw::Column(size_t c, Zq* out) const {
  const Zq mask = p.Mask();
  uint64_t base = Mix64(seed ^ (static_cast<uint64_t>(c) * kColumnSalt));
  out[0] = b[c];
  for (int i = 0; i < p.n_L; ++i) out[i + 1] = SeedWord(base, i, p.log_q) & mask;
}

GswCiphertext SeededGsw::Expand() const {
  GswCiphertext g;
  g.params = p;
  g.key_id = id;
  g.noise_budget = budget;
  g.bound = msg_bound;
  g.body.resize(p.Rows() * p.GadgetCols());
  for (size_t c = 0; c < p.GadgetCols(); ++c) Column(c, &g.body[c * p.Rows()]);
  return g;
}

FreshGswStream::FreshGswStream(const PublicKey& pk, PlainScalar m,
                               uint64_t seed)
    : pk_(pk), m_(m), seed_(seed) {
  CheckPlainRange(pk.params, m);
}

Zq FreshGswStream::noise_budget() const {
  return SatMul(static_cast<Zq>(pk_.params.PublicWeight()),
                static_cast<Zq>(pk_.params.sigma));
}

void FreshGswStream::Column(size_t c, Zq* out) const {
  const LweParams& p = pk_.params;
  const size_t rows = p.Rows();
  const int h = p.PublicWeight();
  std::fill(out, out + rows, Zq{0});
  for (int k = 0; k < h; ++k) {
    uint64_t r = Mix64(seed_ ^ Mix64(static_cast<uint64_t>(c) * 64 + k));
    const Zq* s = pk_.Sample(r % p.PublicSamples());
    if (r >> 63) {
      for (size_t i = 0; i < rows; ++i) out[i] -= s[i];
    } else {
      for (size_t i = 0; i < rows; ++i) out[i] += s[i];
    }
  }
  size_t rho = c / p.d;
  int j = static_cast<int>(c % p.d);
  out[rho] += Reduce(m_, p) * GadgetPower(p, j);
  for (size_t i = 0; i < rows; ++i) out[i] &= p.Mask();
}

GswCiphertext FreshGswStream::Materialize() const {
  GswCiphertext g;
  g.params = pk_.params;
  g.key_id = pk_.key_id;
  g.noise_budget = noise_budget();
  g.bound = bound();
  g.body.resize(g.params.Rows() * g.params.GadgetCols());
  for (size_t c = 0; c < g.params.GadgetCols(); ++c)
    Column(c, &g.body[c * g.params.Rows()]);
  return g;
}

KeyPair Keygen(const LweParams& params, uint64_t seed) {
  params.Validate();
  Rng rng(seed);
  KeyPair kp;
  uint64_t id = Mix64(seed ^ Mix64((static_cast<uint64_t>(params.log_q) << 48) ^
                                   (static_cast<uint64_t>(params.n_L) << 16) ^
                                   (static_cast<uint64_t>(params.log_nu) << 8) ^
                                   static_cast<uint64_t>(params.d) ^
                                   (static_cast<uint64_t>(params.log_gain) << 40)));
  kp.sk.params = params;
  kp.sk.key_id = id;
  kp.sk.s.resize(params.n_L);
  for (auto& si : kp.sk.s) si = static_cast<int8_t>(rng.Bounded(1));
  kp.pk.params = params;
  kp.pk.key_id = id;
  const size_t rows = params.Rows();
  kp.pk.samples.assign(params.PublicSamples() * rows, 0);
  for (size_t k = 0; k < params.PublicSamples(); ++k) {
    Zq* c = &kp.pk.samples[k * rows];
    for (size_t i = 1; i < rows; ++i) c[i] = rng.NextZq() & params.Mask();
    CloseSample(kp.sk, c, rng.Bounded(params.sigma));
  }
  return kp;
}

GswCiphertext TrivialGsw(const LweParams& p, uint64_t key_id, PlainScalar m) {
  CheckPlainRange(p, m);
  GswCiphertext g;
  g.params = p;
  g.key_id = key_id;
  g.bound = AbsU(m);
  g.body.assign(p.Rows() * p.GadgetCols(), 0);
  Zq mr = Reduce(m, p);
  for (size_t c = 0; c < p.GadgetCols(); ++c) {
    size_t rho = c / p.d;
    g.body[c * p.Rows() + rho] = (mr * GadgetPower(p, c % p.d)) & p.Mask();
  }
  return g;
}

LweCiphertext TrivialLwe(const LweParams& p, uint64_t key_id, PlainScalar m) {
  CheckPlainRange(p, m);
  LweCiphertext c = EmptyLwe(p, key_id);
  c.body[0] = Encode(p, m);
  c.bound = AbsU(m);
  return c;
}

GswCiphertext Encrypt(const PublicKey& pk, PlainScalar m, Rng& rng) {
  FreshGswStream s(pk, m, rng.Next());
  return s.Materialize();
}

GswCiphertext EncryptSk(const SecretKey& sk, PlainScalar m, Rng& rng) {
  const LweParams& p = sk.params;
  CheckPlainRange(p, m);
  GswCiphertext g;
  g.params = p;
  g.key_id = sk.key_id;
  g.noise_budget = static_cast<Zq>(p.sigma);
  g.bound = AbsU(m);
  const size_t rows = p.Rows();
  g.body.assign(rows * p.GadgetCols(), 0);
  Zq mr = Reduce(m, p);
  for (size_t c = 0; c < p.GadgetCols(); ++c) {
    Zq* col = &g.body[c * rows];
    for (size_t i = 1; i < rows; ++i) col[i] = rng.NextZq() & p.Mask();
    CloseSample(sk, col, rng.Bounded(p.sigma));
    col[c / p.d] = (col[c / p.d] + mr * GadgetPower(p, c % p.d)) & p.Mask();
  }
  return g;
}

SeededGsw EncryptSeeded(const SecretKey& sk, PlainScalar m, Rng& rng) {
  const LweParams& p = sk.params;
  CheckPlainRange(p, m);
  SeededGsw g;
  g.p = p;
  g.id = sk.key_id;
  g.seed = rng.Next();
  g.budget = static_cast<Zq>(p.sigma);
  g.msg_bound = AbsU(m);
  g.b.resize(p.GadgetCols());
  std::vector<Zq> col(p.Rows());
  std::vector<Zq> skv = sk.Vector();
  Zq mr = Reduce(m, p);
  for (size_t c = 0; c < p.GadgetCols(); ++c) {
    g.b[c] = 0;
    g.Column(c, col.data());
    CloseSample(sk, col.data(), rng.Bounded(p.sigma));
    // Message sits in the phase: m nu^j sk_rho.
    Zq msg = mr * GadgetPower(p, c % p.d) * skv[c / p.d];
    g.b[c] = (col[0] + msg) & p.Mask();
  }
  return g;
}

LweCiphertext EncryptLwe(const PublicKey& pk, PlainScalar m, Rng& rng) {
  const LweParams& p = pk.params;
  CheckPlainRange(p, m);
  LweCiphertext c = EmptyLwe(p, pk.key_id);
  const int h = p.PublicWeight();
  for (int k = 0; k < h; ++k) {
    const Zq* s = pk.Sample(rng.Below(p.PublicSamples()));
    bool neg = rng.Next() & 1;
    for (size_t i = 0; i < p.Rows(); ++i) {
      if (neg)
        c.body[i] -= s[i];
      else
        c.body[i] += s[i];
    }
  }
  c.body[0] += Encode(p, m);
  for (auto& x : c.body) x &= p.Mask();
  c.noise_budget = SatMul(static_cast<Zq>(h), static_cast<Zq>(p.sigma));
  c.bound = AbsU(m);
  return c;
}

LweCiphertext EncryptLweSk(const SecretKey& sk, PlainScalar m, Rng& rng) {
  const LweParams& p = sk.params;
  CheckPlainRange(p, m);
  LweCiphertext c = EmptyLwe(p, sk.key_id);
  for (size_t i = 1; i < p.Rows(); ++i) c.body[i] = rng.NextZq() & p.Mask();
  CloseSample(sk, c.body.data(), rng.Bounded(p.sigma));
  c.body[0] = (c.body[0] + Encode(p, m)) & p.Mask();
  c.noise_budget = static_cast<Zq>(p.sigma);
  c.bound = AbsU(m);
  return c;
}

PlainScalar DecryptLwe(const SecretKey& sk, const LweCiphertext& c) {
  const LweParams& p = sk.params;
  CheckSame(p, sk.key_id, c.params, c.key_id);
  if (c.noise_budget >= p.Quarter()) {
    throw NoiseOverflowError("noise budget 2^" +
                             std::to_string(BitLength(c.noise_budget) - 1) +
                             " at or above q/4; refresh required");
  }
  Zq ph = Phase(sk, c.body.data());
  Zq half_gain = p.log_gain > 0 ? (Zq{1} << (p.log_gain - 1)) : 0;
  Zq x = ((ph + half_gain) & p.Mask()) >> p.log_gain;
  return Center(x, p.log_t());
}

PlainScalar Decrypt(const SecretKey& sk, const GswCiphertext& c) {
  return DecryptLwe(sk, ExtractLwe(c));
}

Int128 MeasureError(const SecretKey& sk, const LweCiphertext& c,
                    PlainScalar m) {
  Zq ph = Phase(sk, c.body.data());
  return Center(ph - Encode(sk.params, m), sk.params.log_q);
}

Int128 MeasureError(const SecretKey& sk, const GswCiphertext& c,
                    PlainScalar m) {
  return MeasureError(sk, ExtractLwe(c), m);
}

LweCiphertext ExtractLwe(const GswCiphertext& g) {
  const LweParams& p = g.params;
  LweCiphertext c;
  c.params = p;
  c.key_id = g.key_id;
  size_t col = static_cast<size_t>(p.log_gain / p.log_nu);
  const Zq* src = g.Column(col);
  c.body.assign(src, src + p.Rows());
  c.noise_budget = g.noise_budget;
  c.bound = g.bound;
  c.level = g.level;
  return c;
}

GswCiphertext EncAdd(const GswCiphertext& a, const GswCiphertext& b) {
  CheckSame(a.params, a.key_id, b.params, b.key_id);
  GswCiphertext c = a;
  const Zq mask = a.params.Mask();
  for (size_t i = 0; i < c.body.size(); ++i)
    c.body[i] = (c.body[i] + b.body[i]) & mask;
  c.noise_budget = SatAdd(a.noise_budget, b.noise_budget);
  c.bound = SatAdd(a.bound, b.bound);
  c.level = std::max(a.level, b.level);
  return c;
}

LweCiphertext EncAdd(const LweCiphertext& a, const LweCiphertext& b) {
  CheckSame(a.params, a.key_id, b.params, b.key_id);
  LweCiphertext c = a;
  const Zq mask = a.params.Mask();
  for (size_t i = 0; i < c.body.size(); ++i)
    c.body[i] = (c.body[i] + b.body[i]) & mask;
  c.noise_budget = SatAdd(a.noise_budget, b.noise_budget);
  c.bound = SatAdd(a.bound, b.bound);
  c.level = std::max(a.level, b.level);
  return c;
}

GswCiphertext EncSub(const GswCiphertext& a, const GswCiphertext& b) {
  return EncAdd(a, ScalarMul(b, -1));
}

LweCiphertext EncSub(const LweCiphertext& a, const LweCiphertext& b) {
  return EncAdd(a, ScalarMul(b, -1));
}

GswCiphertext ScalarMul(const GswCiphertext& a, Int128 k) {
  GswCiphertext c = a;
  const Zq kr = Reduce(k, a.params);
  const Zq mask = a.params.Mask();
  for (auto& x : c.body) x = (x * kr) & mask;
  c.noise_budget = SatMul(a.noise_budget, AbsU(k));
  c.bound = SatMul(a.bound, AbsU(k));
  return c;
}

LweCiphertext ScalarMul(const LweCiphertext& a, Int128 k) {
  LweCiphertext c = a;
  const Zq kr = Reduce(k, a.params);
  const Zq mask = a.params.Mask();
  for (auto& x : c.body) x = (x * kr) & mask;
  c.noise_budget = SatMul(a.noise_budget, AbsU(k));
  c.bound = SatMul(a.bound, AbsU(k));
  return c;
}

LweCiphertext ExternalProduct(const GswCiphertext& a, const LweCiphertext& b) {
  CheckSame(a.params, a.key_id, b.params, b.key_id);
  const LweParams& p = a.params;
  Zq budget = ProductBudget(p, a.bound, a.noise_budget, b.noise_budget);
  CheckBudget(budget, p, " in external product");
  std::vector<uint64_t> digits;
  Decompose(p, b.body.data(), &digits);
  LweCiphertext c = EmptyLwe(p, a.key_id);
  Accumulate(a, digits, c.body.data());
  for (auto& x : c.body) x &= p.Mask();
  c.noise_budget = budget;
  c.bound = SatMul(a.bound, b.bound);
  c.level = std::max(a.level, b.level) + 1;
  return c;
}

std::vector<LweCiphertext> ExternalProductMany(
    const GswColumns& a, const std::vector<const LweCiphertext*>& targets) {
  const LweParams& p = a.params();
  const size_t rows = p.Rows();
  const size_t cols = p.GadgetCols();
  std::vector<std::vector<uint64_t>> digits(targets.size());
  std::vector<LweCiphertext> out;
  out.reserve(targets.size());
  for (size_t t = 0; t < targets.size(); ++t) {
    const LweCiphertext& b = *targets[t];
    CheckSame(p, a.key_id(), b.params, b.key_id);
    Zq budget = ProductBudget(p, a.bound(), a.noise_budget(), b.noise_budget);
    CheckBudget(budget, p, " in external product");
    Decompose(p, b.body.data(), &digits[t]);
    LweCiphertext c = EmptyLwe(p, a.key_id());
    c.noise_budget = budget;
    c.bound = SatMul(a.bound(), b.bound);
    c.level = std::max(a.level(), b.level) + 1;
    out.push_back(std::move(c));
  }
  std::vector<Zq> col(rows);
  for (size_t c = 0; c < cols; ++c) {
    bool needed = false;
    for (size_t t = 0; t < targets.size() && !needed; ++t)
      needed = digits[t][c] != 0;
    if (!needed) continue;
    a.Column(c, col.data());
    for (size_t t = 0; t < targets.size(); ++t) {
      const uint64_t dg = digits[t][c];
      if (dg == 0) continue;
      Zq* acc = out[t].body.data();
      if (dg == 1) {
        for (size_t r = 0; r < rows; ++r) acc[r] += col[r];
      } else {
        for (size_t r = 0; r < rows; ++r) acc[r] += col[r] * dg;
      }
    }
  }
  for (auto& c : out)
    for (auto& x : c.body) x &= p.Mask();
  return out;
}

GswCiphertext EncMult(const GswCiphertext& a, const GswCiphertext& b) {
  CheckSame(a.params, a.key_id, b.params, b.key_id);
  const LweParams& p = a.params;
  Zq budget = ProductBudget(p, a.bound, a.noise_budget, b.noise_budget);
  CheckBudget(budget, p, " in GSW product");
  const size_t rows = p.Rows();
  GswCiphertext c;
  c.params = p;
  c.key_id = a.key_id;
  c.body.assign(b.body.size(), 0);
  std::vector<uint64_t> digits;
  for (size_t col = 0; col < p.GadgetCols(); ++col) {
    Decompose(p, b.Column(col), &digits);
    Zq* acc = &c.body[col * rows];
    Accumulate(a, digits, acc);
    for (size_t r = 0; r < rows; ++r) acc[r] &= p.Mask();
  }
  c.noise_budget = budget;
  c.bound = SatMul(a.bound, b.bound);
  c.level = std::max(a.level, b.level) + 1;
  return c;
}

Zq NoiseEstimate(const GswCiphertext& c) { return c.noise_budget; }
Zq NoiseEstimate(const LweCiphertext& c) { return c.noise_budget; }

// ---------------------------------------------------------------------------
// Matrix lifting.

namespace {

template <class A, class B>
void CheckProductShape(const A& a, const B& b) {
  if (a.cols != b.rows) {
    throw ShapeError("nonconformable product " + std::to_string(a.rows) + "x" +
                     std::to_string(a.cols) + " times " +
                     std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
}

template <class M>
void CheckSameShape(const M& a, const M& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw ShapeError("matrix shapes differ");
  if (a.step_exp != b.step_exp) {
    throw ValidationError("effective steps differ: 2^" +
                          std::to_string(a.step_exp) + " vs 2^" +
                          std::to_string(b.step_exp));
  }
}

std::string EntryTag(int i, int j) {
  return " at entry (" + std::to_string(i) + "," + std::to_string(j) + ")";
}

template <class Ct, class Fn>
CipherMatrix<Ct> MapEntries(const CipherMatrix<Ct>& m, Fn fn) {
  CipherMatrix<Ct> r = m;
  for (auto& c : r.data) c = fn(c);
  return r;
}

template <class Ct>
CipherMatrix<Ct> PlainLeft(const IntMatrix& p, const CipherMatrix<Ct>& m) {
  if (p.cols != m.rows) throw ShapeError("plain-left product shape");
  CipherMatrix<Ct> r;
  r.rows = p.rows;
  r.cols = m.cols;
  r.step_exp = m.step_exp;
  for (int i = 0; i < p.rows; ++i)
    for (int j = 0; j < m.cols; ++j) {
      Ct acc;
      bool first = true;
      for (int k = 0; k < p.cols; ++k) {
        if (p.at(i, k) == 0) continue;
        Ct term = ScalarMul(m.at(k, j), p.at(i, k));
        acc = first ? term : EncAdd(acc, term);
        first = false;
      }
      if (first) acc = ScalarMul(m.at(0, j), 0);
      r.data.push_back(std::move(acc));
    }
  return r;
}

}  // namespace

GswMatrix EncMatrix(const PublicKey& pk, const IntMatrix& m, Rng& rng,
                    int step_exp) {
  GswMatrix r;
  r.rows = m.rows;
  r.cols = m.cols;
  r.step_exp = step_exp;
  for (auto v : m.v) r.data.push_back(Encrypt(pk, v, rng));
  return r;
}

GswMatrix EncMatrixSk(const SecretKey& sk, const IntMatrix& m, Rng& rng,
                      int step_exp) {
  GswMatrix r;
  r.rows = m.rows;
  r.cols = m.cols;
  r.step_exp = step_exp;
  for (auto v : m.v) r.data.push_back(EncryptSk(sk, v, rng));
  return r;
}

LweMatrix EncMatrixLweSk(const SecretKey& sk, const IntMatrix& m, Rng& rng,
                         int step_exp) {
  LweMatrix r;
  r.rows = m.rows;
  r.cols = m.cols;
  r.step_exp = step_exp;
  for (auto v : m.v) r.data.push_back(EncryptLweSk(sk, v, rng));
  return r;
}

GswMatrix TrivialMatrix(const LweParams& params, uint64_t key_id,
                        const IntMatrix& m, int step_exp) {
  GswMatrix r;
  r.rows = m.rows;
  r.cols = m.cols;
  r.step_exp = step_exp;
  for (auto v : m.v) r.data.push_back(TrivialGsw(params, key_id, v));
  return r;
}

GswMatrix EncMatmul(const GswMatrix& a, const GswMatrix& b) {
  CheckProductShape(a, b);
  GswMatrix r;
  r.rows = a.rows;
  r.cols = b.cols;
  r.step_exp = a.step_exp + b.step_exp;
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      GswCiphertext acc;
      for (int k = 0; k < a.cols; ++k) {
        GswCiphertext t;
        try {
          t = EncMult(a.at(i, k), b.at(k, j));
        } catch (const NoiseOverflowError& e) {
          throw NoiseOverflowError(e.what() + EntryTag(i, j));
        }
        acc = k == 0 ? std::move(t) : EncAdd(acc, t);
      }
      CheckBudget(acc.noise_budget, acc.params, EntryTag(i, j));
      r.data.push_back(std::move(acc));
    }
  return r;
}

LweMatrix EncMatmul(const GswMatrix& a, const LweMatrix& b) {
  CheckProductShape(a, b);
  LweMatrix r;
  r.rows = a.rows;
  r.cols = b.cols;
  r.step_exp = a.step_exp + b.step_exp;
  r.data.resize(static_cast<size_t>(a.rows) * b.cols);
  std::vector<uint64_t> digits;
  for (int j = 0; j < b.cols; ++j) {
    std::vector<Zq> budgets(a.rows, 0), bounds(a.rows, 0);
    std::vector<int> levels(a.rows, 0);
    for (int i = 0; i < a.rows; ++i) {
      LweCiphertext c = EmptyLwe(a.at(0, 0).params, a.at(0, 0).key_id);
      r.at(i, j) = std::move(c);
    }
    for (int k = 0; k < a.cols; ++k) {
      const LweCiphertext& t = b.at(k, j);
      Decompose(t.params, t.body.data(), &digits);
      for (int i = 0; i < a.rows; ++i) {
        const GswCiphertext& g = a.at(i, k);
        CheckSame(g.params, g.key_id, t.params, t.key_id);
        Zq bud = ProductBudget(g.params, g.bound, g.noise_budget,
                               t.noise_budget);
        budgets[i] = SatAdd(budgets[i], bud);
        bounds[i] = SatAdd(bounds[i], SatMul(g.bound, t.bound));
        levels[i] = std::max(levels[i], std::max(g.level, t.level) + 1);
        Accumulate(g, digits, r.at(i, j).body.data());
      }
    }
    for (int i = 0; i < a.rows; ++i) {
      LweCiphertext& c = r.at(i, j);
      CheckBudget(budgets[i], c.params, EntryTag(i, j));
      for (auto& x : c.body) x &= c.params.Mask();
      c.noise_budget = budgets[i];
      c.bound = bounds[i];
      c.level = levels[i];
    }
  }
  return r;
}

LweMatrix EncMatmul(const LweMatrix& a, const GswMatrix& b) {
  CheckProductShape(a, b);
  LweMatrix r;
  r.rows = a.rows;
  r.cols = b.cols;
  r.step_exp = a.step_exp + b.step_exp;
  r.data.resize(static_cast<size_t>(a.rows) * b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j)
      r.at(i, j) = EmptyLwe(b.at(0, 0).params, b.at(0, 0).key_id);
  std::vector<Zq> budgets(r.data.size(), 0), bounds(r.data.size(), 0);
  std::vector<int> levels(r.data.size(), 0);
  std::vector<uint64_t> digits;
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      const LweCiphertext& t = a.at(i, k);
      Decompose(t.params, t.body.data(), &digits);
      for (int j = 0; j < b.cols; ++j) {
        const GswCiphertext& g = b.at(k, j);
        CheckSame(g.params, g.key_id, t.params, t.key_id);
        size_t idx = static_cast<size_t>(i) * b.cols + j;
        budgets[idx] = SatAdd(
            budgets[idx],
            ProductBudget(g.params, g.bound, g.noise_budget, t.noise_budget));
        bounds[idx] = SatAdd(bounds[idx], SatMul(g.bound, t.bound));
        levels[idx] = std::max(levels[idx], std::max(g.level, t.level) + 1);
        Accumulate(g, digits, r.at(i, j).body.data());
      }
    }
  for (int i = 0; i < r.rows; ++i)
    for (int j = 0; j < r.cols; ++j) {
      size_t idx = static_cast<size_t>(i) * r.cols + j;
      LweCiphertext& c = r.data[idx];
      CheckBudget(budgets[idx], c.params, EntryTag(i, j));
      for (auto& x : c.body) x &= c.params.Mask();
      c.noise_budget = budgets[idx];
      c.bound = bounds[idx];
      c.level = levels[idx];
    }
  return r;
}

GswMatrix EncMatadd(const GswMatrix& a, const GswMatrix& b) {
  CheckSameShape(a, b);
  GswMatrix r = a;
  for (size_t i = 0; i < r.data.size(); ++i) r.data[i] = EncAdd(a.data[i], b.data[i]);
  return r;
}

LweMatrix EncMatadd(const LweMatrix& a, const LweMatrix& b) {
  CheckSameShape(a, b);
  LweMatrix r = a;
  for (size_t i = 0; i < r.data.size(); ++i) r.data[i] = EncAdd(a.data[i], b.data[i]);
  return r;
}

GswMatrix EncMatsub(const GswMatrix& a, const GswMatrix& b) {
  CheckSameShape(a, b);
  GswMatrix r = a;
  for (size_t i = 0; i < r.data.size(); ++i) r.data[i] = EncSub(a.data[i], b.data[i]);
  return r;
}

LweMatrix EncMatsub(const LweMatrix& a, const LweMatrix& b) {
  CheckSameShape(a, b);
  LweMatrix r = a;
  for (size_t i = 0; i < r.data.size(); ++i) r.data[i] = EncSub(a.data[i], b.data[i]);
  return r;
}

LweMatrix ExtractLwe(const GswMatrix& m) {
  LweMatrix r;
  r.rows = m.rows;
  r.cols = m.cols;
  r.step_exp = m.step_exp;
  for (const auto& g : m.data) r.data.push_back(ExtractLwe(g));
  return r;
}

IntMatrix DecryptMatrix(const SecretKey& sk, const GswMatrix& m) {
  IntMatrix r(m.rows, m.cols);
  for (size_t i = 0; i < m.data.size(); ++i) r.v[i] = Decrypt(sk, m.data[i]);
  return r;
}

IntMatrix DecryptMatrix(const SecretKey& sk, const LweMatrix& m) {
  IntMatrix r(m.rows, m.cols);
  for (size_t i = 0; i < m.data.size(); ++i) r.v[i] = DecryptLwe(sk, m.data[i]);
  return r;
}

GswMatrix MulPlainLeft(const IntMatrix& p, const GswMatrix& m) {
  return PlainLeft(p, m);
}

LweMatrix MulPlainLeft(const IntMatrix& p, const LweMatrix& m) {
  return PlainLeft(p, m);
}

GswMatrix MulPlainRight(const GswMatrix& m, const IntMatrix& p) {
  return Transpose(PlainLeft(p.Transposed(), Transpose(m)));
}

LweMatrix MulPlainRight(const LweMatrix& m, const IntMatrix& p) {
  return Transpose(PlainLeft(p.Transposed(), Transpose(m)));
}

LweMatrix Refine(const LweMatrix& m, int step_exp) {
  if (step_exp > m.step_exp)
    throw ValidationError("refine cannot coarsen a step without the key");
  int k = m.step_exp - step_exp;
  if (k == 0) return m;
  if (k >= 127) throw RangeError("refinement shift too large");
  LweMatrix r = MapEntries(m, [k](const LweCiphertext& c) {
    return ScalarMul(c, Int128{1} << k);
  });
  r.step_exp = step_exp;
  return r;
}

GswMatrix Refine(const GswMatrix& m, int step_exp) {
  if (step_exp > m.step_exp)
    throw ValidationError("refine cannot coarsen a step without the key");
  int k = m.step_exp - step_exp;
  if (k == 0) return m;
  if (k >= 127) throw RangeError("refinement shift too large");
  GswMatrix r = MapEntries(m, [k](const GswCiphertext& c) {
    return ScalarMul(c, Int128{1} << k);
  });
  r.step_exp = step_exp;
  return r;
}

}  // namespace elfc
