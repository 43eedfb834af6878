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

// Little-endian, length-prefixed binary encoding. Every top-level object
// starts with the magic "ELFC" and a u16 format version.

#ifndef ELFC_WIRE_H_
#define ELFC_WIRE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "elfc/he_core.h"

namespace elfc {

inline constexpr uint16_t kWireVersion = 1;

class ByteWriter {
 public:
  void U8(uint8_t v) { buf_.push_back(v); }
  void U16(uint16_t v);
  void U32(uint32_t v);
  void U64(uint64_t v);
  void I64(int64_t v) { U64(static_cast<uint64_t>(v)); }
  void U128(Zq v);
  void F64(double v);
  void Bytes(const std::vector<uint8_t>& b);
  void Str(const std::string& s);
  // Residue in ceil(log_q / 8) bytes.
  void Residue(Zq v, int log_q);
  void Header();

  const std::vector<uint8_t>& data() const { return buf_; }
  std::vector<uint8_t> Take() { return std::move(buf_); }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<uint8_t>& b) : buf_(b) {}
  uint8_t U8();
  uint16_t U16();
  uint32_t U32();
  uint64_t U64();
  int64_t I64() { return static_cast<int64_t>(U64()); }
  Zq U128();
  double F64();
  std::vector<uint8_t> Bytes();
  std::string Str();
  Zq Residue(int log_q);
  void Header();
  bool Done() const { return pos_ == buf_.size(); }

 private:
  void Need(size_t n) const;
  const std::vector<uint8_t>& buf_;
  size_t pos_ = 0;
};

void Put(ByteWriter& w, const LweParams& p);
void Put(ByteWriter& w, const SecretKey& sk);
void Put(ByteWriter& w, const PublicKey& pk);
void Put(ByteWriter& w, const LweCiphertext& c);
void Put(ByteWriter& w, const GswCiphertext& c);
void Put(ByteWriter& w, const SeededGsw& c);
void Put(ByteWriter& w, const IntMatrix& m);
void Put(ByteWriter& w, const LweMatrix& m);
void Put(ByteWriter& w, const GswMatrix& m);

void Get(ByteReader& r, LweParams* p);
void Get(ByteReader& r, SecretKey* sk);
void Get(ByteReader& r, PublicKey* pk);
void Get(ByteReader& r, LweCiphertext* c);
void Get(ByteReader& r, GswCiphertext* c);
void Get(ByteReader& r, SeededGsw* c);
void Get(ByteReader& r, IntMatrix* m);
void Get(ByteReader& r, LweMatrix* m);
void Get(ByteReader& r, GswMatrix* m);

// Standalone objects with magic and version.
template <class T>
std::vector<uint8_t> Serialize(const T& v) {
  ByteWriter w;
  w.Header();
  Put(w, v);
  return w.Take();
}

template <class T>
T Deserialize(const std::vector<uint8_t>& b) {
  ByteReader r(b);
  r.Header();
  T v;
  Get(r, &v);
  if (!r.Done()) throw ProtocolError("trailing bytes after object");
  return v;
}

}  // namespace elfc

#endif  // ELFC_WIRE_H_
