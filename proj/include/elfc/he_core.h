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

// Leveled GSW-LWE encryption over Z_q, q a power of two up to 2^128.
//
// An LWE ciphertext (b, a) has phase b + <a, s> = gain * m + e. A GSW
// ciphertext is m * G + [zero encryptions], with G = I_{n+1} (x) (1, nu, ...,
// nu^{d-1}); column rho * d + j carries nu^j in row rho.

#ifndef ELFC_HE_CORE_H_
#define ELFC_HE_CORE_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "elfc/common.h"

namespace elfc {

using PlainScalar = Int128;

struct LweParams {
  int log_q = 30;
  int64_t sigma = 1;
  int n_L = 16;
  int log_nu = 1;
  int d = 30;
  int lambda = 32;
  int log_gain = 0;
  int published_d = 0;

  Zq Mask() const {
    return log_q >= 128 ? ~Zq{0} : ((Zq{1} << log_q) - 1);
  }
  Zq Quarter() const { return Zq{1} << (log_q - 2); }
  Zq Gain() const { return Zq{1} << log_gain; }
  int log_t() const { return log_q - log_gain; }
  size_t Rows() const { return static_cast<size_t>(n_L) + 1; }
  size_t GadgetCols() const { return Rows() * static_cast<size_t>(d); }
  // (n+1) d (nu-1): factor applied to the left operand's noise in a product.
  Zq ProductExpansion() const {
    return SatMul(static_cast<Zq>(GadgetCols()), (Zq{1} << log_nu) - 1);
  }
  size_t PublicSamples() const { return 2 * Rows(); }
  int PublicWeight() const {
    return static_cast<int>(PublicSamples() < 8 ? PublicSamples() : 8);
  }
  void Validate() const;
  bool operator==(const LweParams& o) const {
    return log_q == o.log_q && sigma == o.sigma && n_L == o.n_L &&
           log_nu == o.log_nu && d == o.d && log_gain == o.log_gain;
  }
};

struct SecretKey {
  LweParams params;
  uint64_t key_id = 0;
  std::vector<int8_t> s;
  // (1, s) reduced mod q.
  std::vector<Zq> Vector() const;
};

struct PublicKey {
  LweParams params;
  uint64_t key_id = 0;
  // PublicSamples() rows of (b, a), row-major.
  std::vector<Zq> samples;
  const Zq* Sample(size_t k) const { return samples.data() + k * params.Rows(); }
};

struct KeyPair {
  SecretKey sk;
  PublicKey pk;
};

struct LweCiphertext {
  LweParams params;
  uint64_t key_id = 0;
  std::vector<Zq> body;
  Zq noise_budget = 0;
  Zq bound = 0;
  int level = 0;
};

// GSW matrix, column-major (n+1) x (n+1)d.
struct GswCiphertext {
  LweParams params;
  uint64_t key_id = 0;
  std::vector<Zq> body;
  Zq noise_budget = 0;
  Zq bound = 0;
  int level = 0;

  const Zq* Column(size_t c) const { return body.data() + c * params.Rows(); }
};

// Random-access view over GSW columns; lets large ciphertexts stay implicit.
class GswColumns {
 public:
  virtual ~GswColumns() = default;
  virtual const LweParams& params() const = 0;
  virtual uint64_t key_id() const = 0;
  virtual Zq noise_budget() const = 0;
  virtual Zq bound() const = 0;
  virtual int level() const = 0;
  virtual void Column(size_t c, Zq* out) const = 0;
};

class DenseColumns : public GswColumns {
 public:
  explicit DenseColumns(const GswCiphertext& c) : c_(c) {}
  const LweParams& params() const override { return c_.params; }
  uint64_t key_id() const override { return c_.key_id; }
  Zq noise_budget() const override { return c_.noise_budget; }
  Zq bound() const override { return c_.bound; }
  int level() const override { return c_.level; }
  void Column(size_t c, Zq* out) const override;

 private:
  const GswCiphertext& c_;
};

// Secret-key GSW whose mask part is regenerated from a seed.
struct SeededGsw : public GswColumns {
  LweParams p;
  uint64_t id = 0;
  uint64_t seed = 0;
  std::vector<Zq> b;
  Zq budget = 0;
  Zq msg_bound = 0;

  const LweParams& params() const override { return p; }
  uint64_t key_id() const override { return id; }
  Zq noise_budget() const override { return budget; }
  Zq bound() const override { return msg_bound; }
  int level() const override { return 0; }
  void Column(size_t c, Zq* out) const override;
  GswCiphertext Expand() const;
};

// Public-key GSW encryption generated column by column by its encryptor.
class FreshGswStream : public GswColumns {
 public:
  FreshGswStream(const PublicKey& pk, PlainScalar m, uint64_t seed);
  const LweParams& params() const override { return pk_.params; }
  uint64_t key_id() const override { return pk_.key_id; }
  Zq noise_budget() const override;
  Zq bound() const override { return AbsU(m_); }
  int level() const override { return 0; }
  void Column(size_t c, Zq* out) const override;
  GswCiphertext Materialize() const;

 private:
  const PublicKey& pk_;
  PlainScalar m_;
  uint64_t seed_;
};

// Key generation and encryption.
KeyPair Keygen(const LweParams& params, uint64_t seed);
GswCiphertext Encrypt(const PublicKey& pk, PlainScalar m, Rng& rng);
GswCiphertext EncryptSk(const SecretKey& sk, PlainScalar m, Rng& rng);
SeededGsw EncryptSeeded(const SecretKey& sk, PlainScalar m, Rng& rng);
LweCiphertext EncryptLwe(const PublicKey& pk, PlainScalar m, Rng& rng);
LweCiphertext EncryptLweSk(const SecretKey& sk, PlainScalar m, Rng& rng);
GswCiphertext TrivialGsw(const LweParams& params, uint64_t key_id,
                         PlainScalar m);
LweCiphertext TrivialLwe(const LweParams& params, uint64_t key_id,
                         PlainScalar m);

PlainScalar Decrypt(const SecretKey& sk, const GswCiphertext& c);
PlainScalar DecryptLwe(const SecretKey& sk, const LweCiphertext& c);
// Instrumented decryption: the true error phase - gain * m (centered).
Int128 MeasureError(const SecretKey& sk, const LweCiphertext& c,
                    PlainScalar m);
Int128 MeasureError(const SecretKey& sk, const GswCiphertext& c,
                    PlainScalar m);

// Homomorphic operations.
GswCiphertext EncAdd(const GswCiphertext& a, const GswCiphertext& b);
LweCiphertext EncAdd(const LweCiphertext& a, const LweCiphertext& b);
GswCiphertext EncSub(const GswCiphertext& a, const GswCiphertext& b);
LweCiphertext EncSub(const LweCiphertext& a, const LweCiphertext& b);
GswCiphertext ScalarMul(const GswCiphertext& a, Int128 k);
LweCiphertext ScalarMul(const LweCiphertext& a, Int128 k);
GswCiphertext EncMult(const GswCiphertext& a, const GswCiphertext& b);
LweCiphertext ExternalProduct(const GswCiphertext& a, const LweCiphertext& b);
std::vector<LweCiphertext> ExternalProductMany(
    const GswColumns& a, const std::vector<const LweCiphertext*>& targets);
LweCiphertext ExtractLwe(const GswCiphertext& c);
Zq NoiseEstimate(const GswCiphertext& c);
Zq NoiseEstimate(const LweCiphertext& c);

// Centered representative of x mod 2^bits.
Int128 Center(Zq x, int bits);
Zq Reduce(Int128 v, const LweParams& p);

struct IntMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<Int128> v;

  IntMatrix() = default;
  IntMatrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c) {}
  Int128& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  const Int128& at(int i, int j) const {
    return v[static_cast<size_t>(i) * cols + j];
  }
  static IntMatrix Identity(int n);
  IntMatrix Transposed() const;

  bool operator==(const IntMatrix& o) const = default;
};
IntMatrix operator*(const IntMatrix& a, const IntMatrix& b);

template <class Ct>
struct CipherMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<Ct> data;
  // Effective fixed-point step 2^step_exp of every entry.
  int step_exp = 0;

  Ct& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  const Ct& at(int i, int j) const {
    return data[static_cast<size_t>(i) * cols + j];
  }
  Zq MaxBudget() const {
    Zq m = 0;
    for (const auto& c : data) m = c.noise_budget > m ? c.noise_budget : m;
    return m;
  }
};

using GswMatrix = CipherMatrix<GswCiphertext>;
using LweMatrix = CipherMatrix<LweCiphertext>;

GswMatrix EncMatrix(const PublicKey& pk, const IntMatrix& m, Rng& rng,
                    int step_exp = 0);
GswMatrix EncMatrixSk(const SecretKey& sk, const IntMatrix& m, Rng& rng,
                      int step_exp = 0);
LweMatrix EncMatrixLweSk(const SecretKey& sk, const IntMatrix& m, Rng& rng,
                         int step_exp = 0);
GswMatrix TrivialMatrix(const LweParams& params, uint64_t key_id,
                        const IntMatrix& m, int step_exp = 0);
GswMatrix EncMatmul(const GswMatrix& a, const GswMatrix& b);
LweMatrix EncMatmul(const GswMatrix& a, const LweMatrix& b);
LweMatrix EncMatmul(const LweMatrix& a, const GswMatrix& b);
GswMatrix EncMatadd(const GswMatrix& a, const GswMatrix& b);
LweMatrix EncMatadd(const LweMatrix& a, const LweMatrix& b);
GswMatrix EncMatsub(const GswMatrix& a, const GswMatrix& b);
LweMatrix EncMatsub(const LweMatrix& a, const LweMatrix& b);
LweMatrix ExtractLwe(const GswMatrix& m);
IntMatrix DecryptMatrix(const SecretKey& sk, const GswMatrix& m);
IntMatrix DecryptMatrix(const SecretKey& sk, const LweMatrix& m);

// Public integer matrices acting on ciphertext matrices (masks, selections).
GswMatrix MulPlainLeft(const IntMatrix& p, const GswMatrix& m);
GswMatrix MulPlainRight(const GswMatrix& m, const IntMatrix& p);
LweMatrix MulPlainLeft(const IntMatrix& p, const LweMatrix& m);
LweMatrix MulPlainRight(const LweMatrix& m, const IntMatrix& p);
// Moves to a finer step by an exact power-of-two multiply.
LweMatrix Refine(const LweMatrix& m, int step_exp);
GswMatrix Refine(const GswMatrix& m, int step_exp);

template <class Ct>
CipherMatrix<Ct> Transpose(const CipherMatrix<Ct>& m) {
  CipherMatrix<Ct> t;
  t.rows = m.cols;
  t.cols = m.rows;
  t.step_exp = m.step_exp;
  t.data.reserve(m.data.size());
  for (int i = 0; i < t.rows; ++i)
    for (int j = 0; j < t.cols; ++j) t.data.push_back(m.at(j, i));
  return t;
}

template <class Ct>
CipherMatrix<Ct> Block(const CipherMatrix<Ct>& m, int r0, int c0, int nr,
                       int nc) {
  CipherMatrix<Ct> b;
  b.rows = nr;
  b.cols = nc;
  b.step_exp = m.step_exp;
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nc; ++j) b.data.push_back(m.at(r0 + i, c0 + j));
  return b;
}

}  // namespace elfc

#endif  // ELFC_HE_CORE_H_
