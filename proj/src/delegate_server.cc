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

#include <cmath>

#include "elfc/protocols.h"
#include "payloads.h"

namespace elfc {
namespace {

constexpr uint64_t kServerRngSalt = 0x5345525645ULL;

MsgKind ExpectedReply(MsgKind k) {
  switch (k) {
    case MsgKind::kMaskedInverse: return MsgKind::kInverseReply;
    case MsgKind::kMaskedReencrypt: return MsgKind::kReencryptReply;
    case MsgKind::kMaskedRescale: return MsgKind::kRescaleReply;
    case MsgKind::kMaskedTransfer: return MsgKind::kTransferReply;
    case MsgKind::kMaskedNorm: return MsgKind::kNormReply;
    default: return MsgKind::kRankReply;
  }
}

GswMatrix ExpandSeeded(const payload::MaskedReply& r) {
  GswMatrix g;
  g.rows = r.rows;
  g.cols = r.cols;
  g.step_exp = r.step;
  g.data.reserve(r.gsw.size());
  for (const auto& s : r.gsw) g.data.push_back(s.Expand());
  return g;
}

template <class M>
M Unmask(const IntMatrix& left, const M& x, const IntMatrix& right) {
  return MulPlainRight(MulPlainLeft(left, x), right);
}

}  // namespace

std::vector<Frame> Bus::CallIso(const Frame& request) {
  transcript_.Record(request);
  std::vector<Frame> mine;
  for (auto& r : iso_.Exchange(request)) {
    transcript_.Record(r);
    if (r.receiver == request.sender) mine.push_back(std::move(r));
    else mailbox_.push_back(std::move(r));
  }
  return mine;
}

void Bus::Send(const Frame& f) {
  transcript_.Record(f);
  mailbox_.push_back(f);
}

std::optional<Frame> Bus::Receive(const PartyId& receiver, MsgKind kind) {
  for (auto it = mailbox_.begin(); it != mailbox_.end(); ++it)
    if (it->receiver == receiver && it->kind == kind) {
      Frame f = std::move(*it);
      mailbox_.erase(it);
      return f;
    }
  return std::nullopt;
}

DelegateServer::DelegateServer(Bus& bus, uint64_t seed)
    : bus_(bus), rng_(Mix64(seed ^ kServerRngSalt)) {
  second_ = SecondKeygen(rng_);
}

void DelegateServer::Connect(int n_generators) {
  ByteWriter w;
  w.U32(static_cast<uint32_t>(n_generators));
  auto replies = bus_.CallIso(
      Frame{PartyId::Server(), PartyId::Iso(), MsgKind::kHello, w.Take()});
  bool have[2] = {false, false};
  for (const auto& f : replies) {
    if (f.kind == MsgKind::kError) RaiseRemoteError(f);
    if (f.kind != MsgKind::kPublicKey) continue;
    ByteReader rd(f.payload);
    uint8_t slot = rd.U8();
    PublicKey pk;
    Get(rd, &pk);
    if (slot == 0) synthesis_pk_ = std::move(pk);
    else online_pk_ = std::move(pk);
    if (slot < 2) have[slot] = true;
  }
  if (!have[0] || !have[1])
    throw ProtocolIncompleteError("ISO did not publish both public keys");
}

const PublicKey& DelegateServer::public_key(KeySlot slot) const {
  return slot == KeySlot::kSynthesis ? synthesis_pk_ : online_pk_;
}

void DelegateServer::PublishSecondKey(int n_generators) {
  for (int i = 1; i <= n_generators; ++i) {
    std::vector<uint8_t> pk(second_.pk2.begin(), second_.pk2.end());
    bus_.Send(Frame{PartyId::Server(), PartyId::Generator(i),
                    MsgKind::kSecondPublicKey, pk});
  }
}

DelegateServer::MaskedReply DelegateServer::Call(MsgKind kind,
                                                 const LweMatrix& m,
                                                 int out_step, KeySlot slot,
                                                 ReplyForm form,
                                                 MaskPair* left,
                                                 MaskPair* right) {
  if (m.rows < 1 || m.cols < 1) throw ShapeError("empty matrix in protocol");
  const Zq quarter = m.data.front().params.Quarter();
  if (m.MaxBudget() >= quarter)
    throw UnrecoverableNoiseError(
        "noise budget already at the overflow threshold; re-encryption must "
        "run before overflow");
  *left = GenMaskPair(m.rows, rng_, tags_);
  *right = GenMaskPair(m.cols, rng_, tags_);
  ++masked_calls_;

  payload::MaskedRequest req;
  req.tag = left->usage_tag;
  req.slot = slot;
  req.form = form;
  req.out_step = out_step;
  try {
    req.m = Unmask(left->phi, m, right->phi);
  } catch (const NoiseOverflowError& e) {
    throw UnrecoverableNoiseError(std::string("masking overflows: ") + e.what());
  }
  req.m.step_exp = m.step_exp;
  const Zq noise = req.m.MaxBudget();
  req.precision_step = m.step_exp + (noise == 0 ? 0 : BitLength(noise) + 1);
  if (record_masks_) mask_log_[req.tag] = {*left, *right};

  auto replies = bus_.CallIso(Frame{PartyId::Server(), PartyId::Iso(), kind,
                                    payload::Encode(req)});
  const MsgKind want = ExpectedReply(kind);
  for (const auto& f : replies) {
    if (f.kind == MsgKind::kError) RaiseRemoteError(f);
    if (f.kind != want || f.Tag() != req.tag) continue;
    payload::MaskedReply rep = payload::DecodeReply(f.payload, want);
    MaskedReply out;
    out.rank = static_cast<int>(rep.rank);
    if (kind == MsgKind::kMaskedRank || kind == MsgKind::kMaskedNorm)
      return out;
    if (rep.form != form) throw ProtocolError("ISO replied in the wrong form");
    if (form == ReplyForm::kLwe) {
      out.lwe = std::move(rep.lwe);
      if (out.lwe.rows != m.cols && kind == MsgKind::kMaskedInverse)
        throw ProtocolError("inverse reply has wrong shape");
    } else {
      out.gsw = ExpandSeeded(rep);
    }
    return out;
  }
  throw ProtocolIncompleteError("no " + KindName(want) + " for tag " +
                                std::to_string(req.tag));
}

GswMatrix DelegateServer::Inverse(const LweMatrix& m, int out_step,
                                  KeySlot slot) {
  if (m.rows != m.cols) throw ShapeError("inverse of a non-square matrix");
  MaskPair l, r;
  auto rep = Call(MsgKind::kMaskedInverse, m, out_step, slot, ReplyForm::kGsw,
                  &l, &r);
  // (Phi1 M Phi2)^-1 = Phi2^-1 M^-1 Phi1^-1.
  GswMatrix out = Unmask(r.phi, rep.gsw, l.phi);
  out.step_exp = out_step;
  return out;
}

LweMatrix DelegateServer::Reencrypt(const LweMatrix& m, KeySlot slot) {
  MaskPair l, r;
  auto rep = Call(MsgKind::kMaskedReencrypt, m, m.step_exp, slot,
                  ReplyForm::kLwe, &l, &r);
  LweMatrix out = Unmask(l.phi_inv, rep.lwe, r.phi_inv);
  out.step_exp = m.step_exp;
  return out;
}

GswMatrix DelegateServer::ReencryptGsw(const LweMatrix& m, KeySlot slot) {
  MaskPair l, r;
  auto rep = Call(MsgKind::kMaskedReencrypt, m, m.step_exp, slot,
                  ReplyForm::kGsw, &l, &r);
  GswMatrix out = Unmask(l.phi_inv, rep.gsw, r.phi_inv);
  out.step_exp = m.step_exp;
  return out;
}

LweMatrix DelegateServer::Rescale(const LweMatrix& m, int out_step,
                                  KeySlot slot) {
  MaskPair l, r;
  auto rep = Call(MsgKind::kMaskedRescale, m, out_step, slot, ReplyForm::kLwe,
                  &l, &r);
  LweMatrix out = Unmask(l.phi_inv, rep.lwe, r.phi_inv);
  out.step_exp = out_step;
  return out;
}

GswMatrix DelegateServer::RescaleGsw(const LweMatrix& m, int out_step,
                                     KeySlot slot) {
  MaskPair l, r;
  auto rep = Call(MsgKind::kMaskedRescale, m, out_step, slot, ReplyForm::kGsw,
                  &l, &r);
  GswMatrix out = Unmask(l.phi_inv, rep.gsw, r.phi_inv);
  out.step_exp = out_step;
  return out;
}

LweMatrix DelegateServer::Transfer(const LweMatrix& m, int out_step) {
  MaskPair l, r;
  auto rep = Call(MsgKind::kMaskedTransfer, m, out_step, KeySlot::kSynthesis,
                  ReplyForm::kLwe, &l, &r);
  LweMatrix out = Unmask(l.phi_inv, rep.lwe, r.phi_inv);
  out.step_exp = out_step;
  return out;
}

int DelegateServer::Rank(const LweMatrix& m, KeySlot slot) {
  MaskPair l, r;
  return Call(MsgKind::kMaskedRank, m, m.step_exp, slot, ReplyForm::kLwe, &l,
              &r)
      .rank;
}

double DelegateServer::NormBound(const LweMatrix& m, KeySlot slot) {
  MaskPair l, r;
  const int bits =
      Call(MsgKind::kMaskedNorm, m, m.step_exp, slot, ReplyForm::kLwe, &l, &r)
          .rank;
  const double line = MaxLineNorm(l.phi_inv) * MaxLineNorm(r.phi_inv);
  return line * std::ldexp(1.0, bits + m.step_exp);
}

LweMatrix DelegateServer::EnsureHeadroom(const LweMatrix& m, KeySlot slot) {
  const Zq quarter = m.data.front().params.Quarter();
  const Zq gain = static_cast<Zq>(kMaskNormBound) * kMaskNormBound;
  if (SatMul(m.MaxBudget(), gain) > quarter / 2) return Reencrypt(m, slot);
  return m;
}

std::vector<SeededGsw> DelegateServer::PriceRound(const LweMatrix& p,
                                                  int step_index, int r_step) {
  ByteWriter w;
  w.U32(static_cast<uint32_t>(step_index));
  w.I64(r_step);
  Put(w, p);
  auto replies = bus_.CallIso(
      Frame{PartyId::Server(), PartyId::Iso(), MsgKind::kPriceCipher, w.Take()});
  for (const auto& f : replies) {
    if (f.kind == MsgKind::kError) RaiseRemoteError(f);
    if (f.kind != MsgKind::kPriceFresh) continue;
    ByteReader rd(f.payload);
    if (rd.U32() != static_cast<uint32_t>(step_index))
      throw ProtocolError("price reply for the wrong step");
    int rows = 0, cols = 0;
    int32_t step = 0;
    auto gs = payload::GetSeeded(rd, &rows, &cols, &step);
    if (rows != p.rows || step != r_step)
      throw ProtocolError("price reply has wrong shape or step");
    return gs;
  }
  throw ProtocolIncompleteError("ISO returned no fresh price at step " +
                                std::to_string(step_index));
}

}  // namespace elfc
