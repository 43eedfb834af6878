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

#include "elfc/wire.h"

#include <cstring>

namespace elfc {

void ByteWriter::U16(uint16_t v) {
  for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void ByteWriter::U32(uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void ByteWriter::U64(uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void ByteWriter::U128(Zq v) {
  U64(static_cast<uint64_t>(v));
  U64(static_cast<uint64_t>(v >> 64));
}
void ByteWriter::F64(double v) {
  uint64_t u;
  std::memcpy(&u, &v, sizeof u);
  U64(u);
}
void ByteWriter::Bytes(const std::vector<uint8_t>& b) {
  U32(static_cast<uint32_t>(b.size()));
  buf_.insert(buf_.end(), b.begin(), b.end());
}
void ByteWriter::Str(const std::string& s) {
  U32(static_cast<uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}
void ByteWriter::Residue(Zq v, int log_q) {
  int nb = (log_q + 7) / 8;
  for (int i = 0; i < nb; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void ByteWriter::Header() {
  for (char c : std::string("ELFC")) buf_.push_back(static_cast<uint8_t>(c));
  U16(kWireVersion);
}

void ByteReader::Need(size_t n) const {
  if (buf_.size() - pos_ < n) throw ProtocolError("truncated message");
}
uint8_t ByteReader::U8() {
  Need(1);
  return buf_[pos_++];
}
uint16_t ByteReader::U16() {
  Need(2);
  uint16_t v = static_cast<uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}
uint32_t ByteReader::U32() {
  Need(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}
uint64_t ByteReader::U64() {
  Need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}
Zq ByteReader::U128() {
  Zq lo = U64();
  Zq hi = U64();
  return lo | (hi << 64);
}
double ByteReader::F64() {
  uint64_t u = U64();
  double v;
  std::memcpy(&v, &u, sizeof v);
  return v;
}
std::vector<uint8_t> ByteReader::Bytes() {
  uint32_t n = U32();
  Need(n);
  std::vector<uint8_t> b(buf_.begin() + pos_, buf_.begin() + pos_ + n);
  pos_ += n;
  return b;
}
std::string ByteReader::Str() {
  uint32_t n = U32();
  Need(n);
  std::string s(buf_.begin() + pos_, buf_.begin() + pos_ + n);
  pos_ += n;
  return s;
}
Zq ByteReader::Residue(int log_q) {
  int nb = (log_q + 7) / 8;
  Need(nb);
  Zq v = 0;
  for (int i = 0; i < nb; ++i) v |= static_cast<Zq>(buf_[pos_ + i]) << (8 * i);
  pos_ += nb;
  return v;
}
void ByteReader::Header() {
  Need(6);
  if (std::memcmp(buf_.data() + pos_, "ELFC", 4) != 0)
    throw ProtocolError("bad magic");
  pos_ += 4;
  uint16_t v = U16();
  if (v != kWireVersion)
    throw ProtocolError("unsupported format version " + std::to_string(v));
}

namespace {

void PutResidues(ByteWriter& w, const std::vector<Zq>& v, int log_q) {
  w.U32(static_cast<uint32_t>(v.size()));
  for (Zq x : v) w.Residue(x, log_q);
}

std::vector<Zq> GetResidues(ByteReader& r, int log_q) {
  uint32_t n = r.U32();
  std::vector<Zq> v;
  v.reserve(n);
  for (uint32_t i = 0; i < n; ++i) v.push_back(r.Residue(log_q));
  return v;
}

template <class Ct>
void PutMatrix(ByteWriter& w, const CipherMatrix<Ct>& m) {
  w.U32(m.rows);
  w.U32(m.cols);
  w.I64(m.step_exp);
  for (const auto& c : m.data) Put(w, c);
}

template <class Ct>
void GetMatrix(ByteReader& r, CipherMatrix<Ct>* m) {
  m->rows = static_cast<int>(r.U32());
  m->cols = static_cast<int>(r.U32());
  m->step_exp = static_cast<int>(r.I64());
  m->data.resize(static_cast<size_t>(m->rows) * m->cols);
  for (auto& c : m->data) Get(r, &c);
}

}  // namespace

void Put(ByteWriter& w, const LweParams& p) {
  w.U16(static_cast<uint16_t>(p.log_q));
  w.I64(p.sigma);
  w.U32(static_cast<uint32_t>(p.n_L));
  w.U16(static_cast<uint16_t>(p.log_nu));
  w.U32(static_cast<uint32_t>(p.d));
  w.U32(static_cast<uint32_t>(p.lambda));
  w.U16(static_cast<uint16_t>(p.log_gain));
  w.U32(static_cast<uint32_t>(p.published_d));
}

void Get(ByteReader& r, LweParams* p) {
  p->log_q = r.U16();
  p->sigma = r.I64();
  p->n_L = static_cast<int>(r.U32());
  p->log_nu = r.U16();
  p->d = static_cast<int>(r.U32());
  p->lambda = static_cast<int>(r.U32());
  p->log_gain = r.U16();
  p->published_d = static_cast<int>(r.U32());
  p->Validate();
}

void Put(ByteWriter& w, const SecretKey& sk) {
  Put(w, sk.params);
  w.U64(sk.key_id);
  w.U32(static_cast<uint32_t>(sk.s.size()));
  for (int8_t v : sk.s) w.U8(static_cast<uint8_t>(v));
}

void Get(ByteReader& r, SecretKey* sk) {
  Get(r, &sk->params);
  sk->key_id = r.U64();
  uint32_t n = r.U32();
  sk->s.resize(n);
  for (auto& v : sk->s) v = static_cast<int8_t>(r.U8());
}

void Put(ByteWriter& w, const PublicKey& pk) {
  Put(w, pk.params);
  w.U64(pk.key_id);
  PutResidues(w, pk.samples, pk.params.log_q);
}

void Get(ByteReader& r, PublicKey* pk) {
  Get(r, &pk->params);
  pk->key_id = r.U64();
  pk->samples = GetResidues(r, pk->params.log_q);
}

void Put(ByteWriter& w, const LweCiphertext& c) {
  Put(w, c.params);
  w.U64(c.key_id);
  PutResidues(w, c.body, c.params.log_q);
  w.U128(c.noise_budget);
  w.U128(c.bound);
  w.U32(static_cast<uint32_t>(c.level));
}

void Get(ByteReader& r, LweCiphertext* c) {
  Get(r, &c->params);
  c->key_id = r.U64();
  c->body = GetResidues(r, c->params.log_q);
  c->noise_budget = r.U128();
  c->bound = r.U128();
  c->level = static_cast<int>(r.U32());
  if (c->body.size() != c->params.Rows())
    throw ProtocolError("LWE ciphertext length mismatch");
}

void Put(ByteWriter& w, const GswCiphertext& c) {
  Put(w, c.params);
  w.U64(c.key_id);
  PutResidues(w, c.body, c.params.log_q);
  w.U128(c.noise_budget);
  w.U128(c.bound);
  w.U32(static_cast<uint32_t>(c.level));
}

void Get(ByteReader& r, GswCiphertext* c) {
  Get(r, &c->params);
  c->key_id = r.U64();
  c->body = GetResidues(r, c->params.log_q);
  c->noise_budget = r.U128();
  c->bound = r.U128();
  c->level = static_cast<int>(r.U32());
  if (c->body.size() != c->params.Rows() * c->params.GadgetCols())
    throw ProtocolError("GSW ciphertext length mismatch");
}

void Put(ByteWriter& w, const SeededGsw& c) {
  Put(w, c.p);
  w.U64(c.id);
  w.U64(c.seed);
  PutResidues(w, c.b, c.p.log_q);
  w.U128(c.budget);
  w.U128(c.msg_bound);
}

void Get(ByteReader& r, SeededGsw* c) {
  Get(r, &c->p);
  c->id = r.U64();
  c->seed = r.U64();
  c->b = GetResidues(r, c->p.log_q);
  c->budget = r.U128();
  c->msg_bound = r.U128();
  if (c->b.size() != c->p.GadgetCols())
    throw ProtocolError("seeded GSW length mismatch");
}

void Put(ByteWriter& w, const IntMatrix& m) {
  w.U32(m.rows);
  w.U32(m.cols);
  for (Int128 v : m.v) w.U128(static_cast<Zq>(v));
}

void Get(ByteReader& r, IntMatrix* m) {
  int rows = static_cast<int>(r.U32());
  int cols = static_cast<int>(r.U32());
  *m = IntMatrix(rows, cols);
  for (auto& v : m->v) v = static_cast<Int128>(r.U128());
}

void Put(ByteWriter& w, const LweMatrix& m) { PutMatrix(w, m); }
void Put(ByteWriter& w, const GswMatrix& m) { PutMatrix(w, m); }
void Get(ByteReader& r, LweMatrix* m) { GetMatrix(r, m); }
void Get(ByteReader& r, GswMatrix* m) { GetMatrix(r, m); }

}  // namespace elfc
