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

#include "elfc/protocols.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "elfc/wire.h"

namespace elfc {
namespace {

struct KindInfo {
  MsgKind kind;
  const char* name;
};

constexpr KindInfo kKinds[] = {
    {MsgKind::kHello, "hello"},
    {MsgKind::kPublicKey, "public_key"},
    {MsgKind::kSecondPublicKey, "second_public_key"},
    {MsgKind::kTypeReport, "type_report"},
    {MsgKind::kMaskedInverse, "masked_inverse"},
    {MsgKind::kInverseReply, "inverse_reply"},
    {MsgKind::kMaskedReencrypt, "masked_reencrypt"},
    {MsgKind::kReencryptReply, "reencrypt_reply"},
    {MsgKind::kMaskedRescale, "masked_rescale"},
    {MsgKind::kRescaleReply, "rescale_reply"},
    {MsgKind::kMaskedTransfer, "masked_transfer"},
    {MsgKind::kTransferReply, "transfer_reply"},
    {MsgKind::kMaskedRank, "masked_rank"},
    {MsgKind::kRankReply, "rank_reply"},
    {MsgKind::kMeasurement, "measurement"},
    {MsgKind::kPriceCipher, "price_cipher"},
    {MsgKind::kPriceFresh, "price_fresh"},
    {MsgKind::kPriceAnnounce, "price_announce"},
    {MsgKind::kError, "error"},
    {MsgKind::kShutdown, "shutdown"},
    {MsgKind::kMaskedNorm, "masked_norm"},
    {MsgKind::kNormReply, "norm_reply"},
};

const char kFrameMagic[4] = {'E', 'L', 'F', 'C'};

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

PartyId PartyFromName(const std::string& s) {
  if (s == "iso") return PartyId::Iso();
  if (s == "server") return PartyId::Server();
  const std::string g = "generator";
  if (s.rfind(g, 0) == 0 && s.size() > g.size())
    return PartyId::Generator(std::stoi(s.substr(g.size())));
  throw ProtocolError("unknown party name '" + s + "'");
}

std::string BaseKind(const std::string& kind) {
  return kind.substr(0, kind.find(':'));
}

}  // namespace

PartyId PartyId::Generator(int i) {
  if (i < 1 || i > 254) throw ParamError("generator index out of range");
  return {Role::kGenerator, i};
}

uint8_t PartyId::Code() const {
  switch (role) {
    case Role::kIso: return 0;
    case Role::kServer: return 1;
    case Role::kGenerator: return static_cast<uint8_t>(1 + index);
  }
  return 0;
}

PartyId PartyId::FromCode(uint8_t c) {
  if (c == 0) return Iso();
  if (c == 1) return Server();
  return Generator(c - 1);
}

std::string PartyId::Name() const {
  switch (role) {
    case Role::kIso: return "iso";
    case Role::kServer: return "server";
    case Role::kGenerator: return "generator" + std::to_string(index);
  }
  return "?";
}

std::string KindName(MsgKind k) {
  for (const auto& e : kKinds)
    if (e.kind == k) return e.name;
  return "unknown";
}

std::optional<MsgKind> KindFromName(const std::string& name) {
  for (const auto& e : kKinds)
    if (name == e.name) return e.kind;
  return std::nullopt;
}

bool IsMaskedRequest(MsgKind k) {
  return k == MsgKind::kMaskedInverse || k == MsgKind::kMaskedReencrypt ||
         k == MsgKind::kMaskedRescale || k == MsgKind::kMaskedTransfer ||
         k == MsgKind::kMaskedRank || k == MsgKind::kMaskedNorm;
}

bool IsMaskedReply(MsgKind k) {
  return k == MsgKind::kInverseReply || k == MsgKind::kReencryptReply ||
         k == MsgKind::kRescaleReply || k == MsgKind::kTransferReply ||
         k == MsgKind::kRankReply || k == MsgKind::kNormReply;
}

std::vector<uint8_t> Frame::Encode() const {
  ByteWriter w;
  for (char c : kFrameMagic) w.U8(static_cast<uint8_t>(c));
  w.U16(kWireVersion);
  w.U8(sender.Code());
  w.U8(receiver.Code());
  w.U8(static_cast<uint8_t>(kind));
  w.U64(payload.size());
  std::vector<uint8_t> out = w.Take();
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Frame Frame::Decode(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  for (char c : kFrameMagic)
    if (r.U8() != static_cast<uint8_t>(c)) throw ProtocolError("bad frame magic");
  if (r.U16() != kWireVersion) throw ProtocolError("unsupported frame version");
  Frame f;
  f.sender = PartyId::FromCode(r.U8());
  f.receiver = PartyId::FromCode(r.U8());
  uint8_t k = r.U8();
  if (KindName(static_cast<MsgKind>(k)) == "unknown")
    throw ProtocolError("unknown message kind " + std::to_string(k));
  f.kind = static_cast<MsgKind>(k);
  uint64_t len = r.U64();
  const size_t head = 4 + 2 + 3 + 8;
  if (bytes.size() - head != len)
    throw ProtocolError("frame length mismatch");
  f.payload.assign(bytes.begin() + head, bytes.end());
  return f;
}

uint64_t Frame::Tag() const {
  if (!IsMaskedRequest(kind) && !IsMaskedReply(kind)) return 0;
  if (payload.size() < 8) return 0;
  uint64_t t = 0;
  for (int i = 0; i < 8; ++i) t |= static_cast<uint64_t>(payload[i]) << (8 * i);
  return t;
}

void Transcript::Record(const Frame& f) {
  TranscriptEntry e;
  e.seq = entries_.size();
  e.sender = f.sender;
  e.receiver = f.receiver;
  e.kind = KindName(f.kind);
  if (IsMaskedRequest(f.kind) || IsMaskedReply(f.kind))
    e.kind += ":tag=" + std::to_string(f.Tag());
  e.digest = Sha256Hex(f.payload);
  e.size = f.payload.size();
  if (keep_payloads_) e.payload = f.payload;
  entries_.push_back(std::move(e));
  for (const auto& o : observers_) o(f);
}

std::string Transcript::ToCsv() const {
  std::ostringstream os;
  os << "seq,sender,receiver,kind,digest,size\n";
  for (const auto& e : entries_)
    os << e.seq << ',' << e.sender.Name() << ',' << e.receiver.Name() << ','
       << e.kind << ',' << e.digest << ',' << e.size << '\n';
  return os.str();
}

void Transcript::WriteCsv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write transcript to " + path);
  out << ToCsv();
}

std::vector<TranscriptEntry> Transcript::ParseCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<TranscriptEntry> out;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = SplitCsvLine(line);
    if (lineno == 1 && !f.empty() && f[0] == "seq") continue;
    if (f.size() != 6)
      throw ProtocolError("transcript line " + std::to_string(lineno) +
                          ": expected 6 columns");
    try {
      TranscriptEntry e;
      e.seq = std::stoull(f[0]);
      e.sender = PartyFromName(f[1]);
      e.receiver = PartyFromName(f[2]);
      e.kind = f[3];
      e.digest = f[4];
      e.size = std::stoull(f[5]);
      out.push_back(std::move(e));
    } catch (const std::logic_error&) {
      throw ProtocolError("transcript line " + std::to_string(lineno) +
                          ": malformed field");
    }
  }
  return out;
}

int MaxLineNorm(const IntMatrix& m) {
  Zq best = 0;
  for (int i = 0; i < m.rows; ++i) {
    Zq s = 0;
    for (int j = 0; j < m.cols; ++j) s += AbsU(m.at(i, j));
    best = std::max(best, s);
  }
  for (int j = 0; j < m.cols; ++j) {
    Zq s = 0;
    for (int i = 0; i < m.rows; ++i) s += AbsU(m.at(i, j));
    best = std::max(best, s);
  }
  return static_cast<int>(best);
}

MaskPair GenMaskPair(int n, Rng& rng, TagCounter& tags) {
  if (n < 1) throw ParamError("mask dimension must be >= 1");
  MaskPair m;
  m.phi = IntMatrix(n, n);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  for (int i = 0; i < n; ++i) m.phi.at(i, perm[i]) = (rng.Next() & 1) ? 1 : -1;
  m.phi_inv = m.phi.Transposed();

  const int ops = 3 * n;
  for (int k = 0; k < ops && n > 1; ++k) {
    int i = static_cast<int>(rng.Below(n));
    int j = static_cast<int>(rng.Below(n - 1));
    if (j >= i) ++j;
    Int128 s = (rng.Next() & 1) ? 1 : -1;
    IntMatrix phi = m.phi, inv = m.phi_inv;
    for (int c = 0; c < n; ++c) phi.at(i, c) += s * phi.at(j, c);
    for (int r = 0; r < n; ++r) inv.at(r, j) -= s * inv.at(r, i);
    if (MaxLineNorm(phi) <= kMaskNormBound && MaxLineNorm(inv) <= kMaskNormBound) {
      m.phi = std::move(phi);
      m.phi_inv = std::move(inv);
    }
  }
  m.usage_tag = tags.Next();
  return m;
}

std::string AuditReport::Summary() const {
  std::ostringstream os;
  os << "entries=" << entries << " masked_requests=" << masked_requests
     << " findings=" << findings.size() << '\n';
  for (const auto& f : findings)
    os << "  seq " << f.seq << " [" << f.rule << "] " << f.detail << '\n';
  return os.str();
}

AuditReport AuditTranscript(const std::vector<TranscriptEntry>& entries) {
  AuditReport rep;
  rep.entries = entries.size();
  std::set<uint64_t> request_tags;
  auto add = [&rep](uint64_t seq, const char* rule, const std::string& d) {
    rep.findings.push_back({seq, rule, d});
  };
  for (const auto& e : entries) {
    const std::string base = BaseKind(e.kind);
    auto kind = KindFromName(base);
    if (!kind) {
      add(e.seq, "known-kind", "unknown message kind '" + e.kind + "'");
      continue;
    }
    uint64_t tag = 0;
    const auto pos = e.kind.find(":tag=");
    if (pos != std::string::npos) {
      try {
        tag = std::stoull(e.kind.substr(pos + 5));
      } catch (const std::logic_error&) {
        add(e.seq, "mask-tag", "unparsable tag in '" + e.kind + "'");
      }
    }
    const MsgKind k = *kind;
    using R = PartyId::Role;

    if (e.receiver.role == R::kIso) {
      const bool allowed = k == MsgKind::kHello || IsMaskedRequest(k) ||
                           k == MsgKind::kPriceCipher ||
                           k == MsgKind::kShutdown;
      if (!allowed)
        add(e.seq, "iso-inbound", base + " must not be delivered to the ISO");
      if (e.sender.role != R::kServer)
        add(e.seq, "iso-inbound", "ISO contacted by " + e.sender.Name());
    }
    if (IsMaskedRequest(k)) {
      ++rep.masked_requests;
      if (tag == 0) add(e.seq, "mask-tag", base + " carries no usage tag");
      else if (!request_tags.insert(tag).second)
        add(e.seq, "mask-tag", "usage tag " + std::to_string(tag) + " reused");
    }
    if (IsMaskedReply(k) && !request_tags.count(tag))
      add(e.seq, "mask-tag", base + " answers unknown tag " + std::to_string(tag));

    if (k == MsgKind::kTypeReport &&
        (e.sender.role != R::kGenerator || e.receiver.role != R::kServer))
      add(e.seq, "type-report-route",
          "type report from " + e.sender.Name() + " to " + e.receiver.Name());

    if (e.receiver.role == R::kServer) {
      const bool allowed =
          k == MsgKind::kPublicKey || k == MsgKind::kTypeReport ||
          IsMaskedReply(k) || k == MsgKind::kMeasurement ||
          k == MsgKind::kPriceFresh || k == MsgKind::kError;
      if (!allowed)
        add(e.seq, "server-inbound", base + " must not be delivered to the server");
    }
    if (e.receiver.role == R::kGenerator) {
      const bool allowed = k == MsgKind::kPublicKey ||
                           k == MsgKind::kSecondPublicKey ||
                           k == MsgKind::kPriceAnnounce;
      if (!allowed)
        add(e.seq, "generator-inbound",
            base + " must not be delivered to " + e.receiver.Name());
    }
    if (k == MsgKind::kPriceAnnounce && e.sender.role != R::kIso)
      add(e.seq, "price-origin", "price announced by " + e.sender.Name());
  }
  return rep;
}

}  // namespace elfc
