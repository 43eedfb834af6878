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

// Payload layouts shared by the ISO and the delegate server.

#ifndef ELFC_SRC_PAYLOADS_H_
#define ELFC_SRC_PAYLOADS_H_

#include <string>
#include <vector>

#include "elfc/protocols.h"
#include "elfc/wire.h"

namespace elfc::payload {

struct MaskedRequest {
  uint64_t tag = 0;
  KeySlot slot = KeySlot::kSynthesis;
  ReplyForm form = ReplyForm::kLwe;
  int32_t out_step = 0;
  // Grid below which the masked entries are noise; used for rank decisions.
  int32_t precision_step = 0;
  LweMatrix m;
};

struct MaskedReply {
  uint64_t tag = 0;
  ReplyForm form = ReplyForm::kLwe;
  LweMatrix lwe;
  int rows = 0;
  int cols = 0;
  int32_t step = 0;
  std::vector<SeededGsw> gsw;
  // Rank, or the bit length of the largest masked entry for norm replies.
  uint32_t rank = 0;
};

inline std::vector<uint8_t> Encode(const MaskedRequest& r) {
  ByteWriter w;
  w.U64(r.tag);
  w.U8(static_cast<uint8_t>(r.slot));
  w.U8(static_cast<uint8_t>(r.form));
  w.I64(r.out_step);
  w.I64(r.precision_step);
  Put(w, r.m);
  return w.Take();
}

inline MaskedRequest DecodeRequest(const std::vector<uint8_t>& b) {
  ByteReader rd(b);
  MaskedRequest r;
  r.tag = rd.U64();
  uint8_t slot = rd.U8();
  uint8_t form = rd.U8();
  if (slot > 1 || form > 1) throw ProtocolError("bad masked request header");
  r.slot = static_cast<KeySlot>(slot);
  r.form = static_cast<ReplyForm>(form);
  r.out_step = static_cast<int32_t>(rd.I64());
  r.precision_step = static_cast<int32_t>(rd.I64());
  Get(rd, &r.m);
  if (!rd.Done()) throw ProtocolError("trailing bytes in masked request");
  return r;
}

inline void PutSeeded(ByteWriter& w, int rows, int cols, int32_t step,
                      const std::vector<SeededGsw>& v) {
  w.U32(static_cast<uint32_t>(rows));
  w.U32(static_cast<uint32_t>(cols));
  w.I64(step);
  for (const auto& g : v) Put(w, g);
}

inline std::vector<SeededGsw> GetSeeded(ByteReader& rd, int* rows, int* cols,
                                        int32_t* step) {
  *rows = static_cast<int>(rd.U32());
  *cols = static_cast<int>(rd.U32());
  *step = static_cast<int32_t>(rd.I64());
  const size_t n = static_cast<size_t>(*rows) * static_cast<size_t>(*cols);
  if (n > (1u << 20)) throw ProtocolError("seeded matrix too large");
  std::vector<SeededGsw> v(n);
  for (auto& g : v) Get(rd, &g);
  return v;
}

inline std::vector<uint8_t> Encode(const MaskedReply& r, MsgKind kind) {
  ByteWriter w;
  w.U64(r.tag);
  if (kind == MsgKind::kRankReply || kind == MsgKind::kNormReply) {
    w.U32(r.rank);
    return w.Take();
  }
  w.U8(static_cast<uint8_t>(r.form));
  if (r.form == ReplyForm::kLwe) Put(w, r.lwe);
  else PutSeeded(w, r.rows, r.cols, r.step, r.gsw);
  return w.Take();
}

inline MaskedReply DecodeReply(const std::vector<uint8_t>& b, MsgKind kind) {
  ByteReader rd(b);
  MaskedReply r;
  r.tag = rd.U64();
  if (kind == MsgKind::kRankReply || kind == MsgKind::kNormReply) {
    r.rank = rd.U32();
  } else {
    uint8_t form = rd.U8();
    if (form > 1) throw ProtocolError("bad reply form");
    r.form = static_cast<ReplyForm>(form);
    if (r.form == ReplyForm::kLwe) Get(rd, &r.lwe);
    else r.gsw = GetSeeded(rd, &r.rows, &r.cols, &r.step);
  }
  if (!rd.Done()) throw ProtocolError("trailing bytes in masked reply");
  return r;
}

// Error frames carry a category code and a message.
enum class RemoteError : uint8_t {
  kProtocol = 0,
  kSingularity = 1,
  kUnrecoverableNoise = 2,
  kDecryption = 3,
  kValidation = 4,
  kRange = 5,
  kNoiseOverflow = 6,
};

inline std::vector<uint8_t> EncodeError(RemoteError code, const std::string& msg) {
  ByteWriter w;
  w.U8(static_cast<uint8_t>(code));
  w.Str(msg);
  return w.Take();
}

}  // namespace elfc::payload

#endif  // ELFC_SRC_PAYLOADS_H_
