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

#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>

#include <Eigen/Dense>

#include "elfc/protocols.h"
#include "elfc/quantizer.h"
#include "payloads.h"

namespace elfc {
namespace {

using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

constexpr uint64_t kSynthesisKeySalt = 0x53594e5448ULL;
constexpr uint64_t kOnlineKeySalt = 0x4f4e4c494eULL;
constexpr uint64_t kIsoRngSalt = 0x49534f52ULL;

MatrixXld ToReal(const IntMatrix& m, int step) {
  MatrixXld r(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      r(i, j) = std::ldexp(static_cast<long double>(m.at(i, j)), step);
  return r;
}

IntMatrix FromReal(const MatrixXld& x, int step, int plain_bits) {
  IntMatrix m(static_cast<int>(x.rows()), static_cast<int>(x.cols()));
  const long double limit = std::ldexp(1.0L, plain_bits - 1);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) {
      long double v = std::nearbyint(std::ldexp(x(i, j), -step));
      if (!std::isfinite(v) || std::fabs(v) >= limit)
        throw RangeError("inverse entry out of plaintext range at step 2^" +
                         std::to_string(step));
      m.at(i, j) = static_cast<Int128>(v);
    }
  return m;
}

// Masked entries rounded to the grid above their noise.
MatrixXld Denoised(const IntMatrix& x, int step, int precision_step) {
  if (precision_step <= step) return ToReal(x, step);
  IntMatrix r(x.rows, x.cols);
  for (size_t i = 0; i < x.v.size(); ++i)
    r.v[i] = RoundShift(x.v[i], step, precision_step);
  return ToReal(r, precision_step);
}

int RankOf(const MatrixXld& m) {
  Eigen::FullPivLU<MatrixXld> lu(m);
  lu.setThreshold(1e-12L);
  return static_cast<int>(lu.rank());
}

Zq MaxAbs(const IntMatrix& m) {
  Zq b = 0;
  for (Int128 v : m.v) b = std::max(b, AbsU(v));
  return b;
}

MsgKind ReplyKind(MsgKind k) {
  switch (k) {
    case MsgKind::kMaskedInverse: return MsgKind::kInverseReply;
    case MsgKind::kMaskedReencrypt: return MsgKind::kReencryptReply;
    case MsgKind::kMaskedRescale: return MsgKind::kRescaleReply;
    case MsgKind::kMaskedTransfer: return MsgKind::kTransferReply;
    case MsgKind::kMaskedRank: return MsgKind::kRankReply;
    case MsgKind::kMaskedNorm: return MsgKind::kNormReply;
    default: throw ProtocolError("not a masked request");
  }
}

Frame ErrorFrame(const Frame& req, payload::RemoteError code,
                 const std::string& msg) {
  Frame f;
  f.sender = PartyId::Iso();
  f.receiver = req.sender;
  f.kind = MsgKind::kError;
  f.payload = payload::EncodeError(code, msg);
  return f;
}

void WriteAll(int fd, const uint8_t* p, size_t n) {
  while (n > 0) {
    ssize_t k = ::write(fd, p, n);
    if (k < 0 && errno == EINTR) continue;
    if (k <= 0) throw ProtocolError("ISO socket write failed");
    p += k;
    n -= static_cast<size_t>(k);
  }
}

bool ReadAll(int fd, uint8_t* p, size_t n) {
  while (n > 0) {
    ssize_t k = ::read(fd, p, n);
    if (k < 0 && errno == EINTR) continue;
    if (k <= 0) return false;
    p += k;
    n -= static_cast<size_t>(k);
  }
  return true;
}

void WriteU64(int fd, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  WriteAll(fd, b, 8);
}

bool ReadU64(int fd, uint64_t* v) {
  uint8_t b[8];
  if (!ReadAll(fd, b, 8)) return false;
  *v = 0;
  for (int i = 0; i < 8; ++i) *v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return true;
}

void WriteFrame(int fd, const Frame& f) {
  auto bytes = f.Encode();
  WriteU64(fd, bytes.size());
  WriteAll(fd, bytes.data(), bytes.size());
}

bool ReadFrame(int fd, Frame* f) {
  uint64_t n = 0;
  if (!ReadU64(fd, &n) || n > (uint64_t{1} << 34)) return false;
  std::vector<uint8_t> bytes(n);
  if (!ReadAll(fd, bytes.data(), n)) return false;
  *f = Frame::Decode(bytes);
  return true;
}

[[noreturn]] void ServeIso(int fd, const LweParams& online, uint64_t seed) {
  int code = 0;
  try {
    IsoParty iso(online, seed);
    Frame f;
    while (ReadFrame(fd, &f)) {
      if (f.kind == MsgKind::kShutdown) break;
      auto replies = iso.Handle(f);
      WriteU64(fd, replies.size());
      for (const auto& r : replies) WriteFrame(fd, r);
    }
  } catch (...) {
    code = 1;
  }
  ::close(fd);
  ::_exit(code);
}

}  // namespace

IsoParty::IsoParty(const LweParams& online, uint64_t seed)
    : synthesis_(Keygen(SynthesisKeyParams(), Mix64(seed ^ kSynthesisKeySalt))),
      online_(Keygen(online, Mix64(seed ^ kOnlineKeySalt))),
      rng_(Mix64(seed ^ kIsoRngSalt)) {}

const KeyPair& IsoParty::Keys(KeySlot slot) const {
  return slot == KeySlot::kSynthesis ? synthesis_ : online_;
}

const PublicKey& IsoParty::public_key(KeySlot slot) const { return Keys(slot).pk; }

const SecretKey& IsoParty::secret_key(KeySlot slot) const { return Keys(slot).sk; }

std::vector<Frame> IsoParty::Handle(const Frame& request) {
  using payload::RemoteError;
  try {
    if (request.receiver.role != PartyId::Role::kIso)
      throw ProtocolError("frame not addressed to the ISO");
    switch (request.kind) {
      case MsgKind::kHello: return Hello(request);
      case MsgKind::kPriceCipher: return Price(request);
      default:
        if (IsMaskedRequest(request.kind)) return Masked(request);
        throw ProtocolError("ISO cannot handle " + KindName(request.kind));
    }
  } catch (const SingularityError& e) {
    return {ErrorFrame(request, RemoteError::kSingularity, e.what())};
  } catch (const UnrecoverableNoiseError& e) {
    return {ErrorFrame(request, RemoteError::kUnrecoverableNoise, e.what())};
  } catch (const NoiseOverflowError& e) {
    return {ErrorFrame(request, RemoteError::kNoiseOverflow, e.what())};
  } catch (const DecryptionError& e) {
    return {ErrorFrame(request, RemoteError::kDecryption, e.what())};
  } catch (const RangeError& e) {
    return {ErrorFrame(request, RemoteError::kRange, e.what())};
  } catch (const ValidationError& e) {
    return {ErrorFrame(request, RemoteError::kValidation, e.what())};
  } catch (const Error& e) {
    return {ErrorFrame(request, RemoteError::kProtocol, e.what())};
  }
}

std::vector<Frame> IsoParty::Hello(const Frame& f) {
  ByteReader rd(f.payload);
  n_generators_ = static_cast<int>(rd.U32());
  if (!rd.Done() || n_generators_ < 1 || n_generators_ > 254)
    throw ProtocolError("malformed hello");
  std::vector<Frame> out;
  auto key_frame = [](PartyId to, KeySlot slot, const PublicKey& pk) {
    ByteWriter w;
    w.U8(static_cast<uint8_t>(slot));
    Put(w, pk);
    return Frame{PartyId::Iso(), to, MsgKind::kPublicKey, w.Take()};
  };
  out.push_back(key_frame(f.sender, KeySlot::kSynthesis, synthesis_.pk));
  out.push_back(key_frame(f.sender, KeySlot::kOnline, online_.pk));
  for (int i = 1; i <= n_generators_; ++i) {
    out.push_back(key_frame(PartyId::Generator(i), KeySlot::kSynthesis,
                            synthesis_.pk));
    out.push_back(
        key_frame(PartyId::Generator(i), KeySlot::kOnline, online_.pk));
  }
  return out;
}

std::vector<Frame> IsoParty::Masked(const Frame& f) {
  payload::MaskedRequest req = payload::DecodeRequest(f.payload);
  const KeyPair& keys = Keys(req.slot);
  IntMatrix x = DecryptMatrix(keys.sk, req.m);
  const int in_step = req.m.step_exp;

  payload::MaskedReply rep;
  rep.tag = req.tag;
  rep.form = req.form;
  IntMatrix y;
  const KeyPair* out_keys = &keys;
  int out_step = req.out_step;

  switch (f.kind) {
    case MsgKind::kMaskedInverse: {
      if (x.rows != x.cols) throw ShapeError("inverse of a non-square matrix");
      const int rank = RankOf(Denoised(x, in_step, req.precision_step));
      if (rank < x.rows)
        throw SingularityError("masked matrix is singular (rank " +
                               std::to_string(rank) + " of " +
                               std::to_string(x.rows) + ")");
      Eigen::PartialPivLU<MatrixXld> lu(ToReal(x, in_step));
      y = FromReal(lu.inverse(), out_step, keys.sk.params.log_t());
      break;
    }
    case MsgKind::kMaskedRank: {
      rep.rank = static_cast<uint32_t>(
          RankOf(Denoised(x, in_step, req.precision_step)));
      Frame out{PartyId::Iso(), f.sender, MsgKind::kRankReply,
                payload::Encode(rep, MsgKind::kRankReply)};
      return {out};
    }
    case MsgKind::kMaskedNorm: {
      rep.rank = static_cast<uint32_t>(BitLength(MaxAbs(x)));
      Frame out{PartyId::Iso(), f.sender, MsgKind::kNormReply,
                payload::Encode(rep, MsgKind::kNormReply)};
      return {out};
    }
    case MsgKind::kMaskedReencrypt:
      y = x;
      out_step = in_step;
      break;
    case MsgKind::kMaskedRescale:
    case MsgKind::kMaskedTransfer:
      if (out_step < in_step)
        throw ValidationError("rescale target step is finer than the input");
      y = IntMatrix(x.rows, x.cols);
      for (size_t i = 0; i < x.v.size(); ++i)
        y.v[i] = RoundShift(x.v[i], in_step, out_step);
      if (f.kind == MsgKind::kMaskedTransfer) {
        if (req.slot != KeySlot::kSynthesis)
          throw ProtocolError("transfer must start from the synthesis key");
        out_keys = &online_;
      }
      break;
    default:
      throw ProtocolError("unexpected masked request");
  }

  const Zq bound = CeilPow2(MaxAbs(y));
  if (BitLength(MaxAbs(y)) >= out_keys->sk.params.log_t())
    throw RangeError("entry exceeds the plaintext range at step 2^" +
                     std::to_string(out_step) +
                     "; choose a coarser coefficient step or a smaller L");
  if (rep.form == ReplyForm::kLwe) {
    rep.lwe = EncMatrixLweSk(out_keys->sk, y, rng_, out_step);
    for (auto& c : rep.lwe.data) c.bound = bound;
  } else {
    rep.rows = y.rows;
    rep.cols = y.cols;
    rep.step = out_step;
    for (Int128 v : y.v) {
      SeededGsw g = EncryptSeeded(out_keys->sk, v, rng_);
      g.msg_bound = bound;
      rep.gsw.push_back(std::move(g));
    }
  }
  MsgKind rk = ReplyKind(f.kind);
  return {Frame{PartyId::Iso(), f.sender, rk, payload::Encode(rep, rk)}};
}

std::vector<Frame> IsoParty::Price(const Frame& f) {
  ByteReader rd(f.payload);
  const uint32_t step = rd.U32();
  const int32_t r_step = static_cast<int32_t>(rd.I64());
  LweMatrix p;
  Get(rd, &p);
  if (!rd.Done() || p.cols != 1) throw ProtocolError("malformed price cipher");
  IntMatrix m = DecryptMatrix(online_.sk, p);
  last_price_step_ = static_cast<int>(step);

  std::vector<Frame> out;
  ByteWriter fresh;
  fresh.U32(step);
  // Announced and re-injected prices are the same value on the r grid.
  std::vector<PlainScalar> rounded;
  for (Int128 v : m.v) rounded.push_back(RoundShift(v, p.step_exp, r_step));
  std::vector<SeededGsw> gs;
  for (PlainScalar v : rounded)
    gs.push_back(EncryptSeeded(online_.sk, v, rng_));
  payload::PutSeeded(fresh, p.rows, 1, r_step, gs);
  out.push_back({PartyId::Iso(), f.sender, MsgKind::kPriceFresh, fresh.Take()});

  for (int i = 1; i <= n_generators_; ++i) {
    ByteWriter w;
    w.U32(step);
    w.U32(static_cast<uint32_t>(rounded.size()));
    for (PlainScalar v : rounded) w.F64(Dequantize(v, r_step));
    out.push_back({PartyId::Iso(), PartyId::Generator(i),
                   MsgKind::kPriceAnnounce, w.Take()});
  }
  return out;
}

[[noreturn]] void RaiseRemoteError(const Frame& f) {
  using payload::RemoteError;
  ByteReader rd(f.payload);
  auto code = static_cast<RemoteError>(rd.U8());
  std::string msg = "ISO: " + rd.Str();
  switch (code) {
    case RemoteError::kSingularity: throw SingularityError(msg);
    case RemoteError::kUnrecoverableNoise: throw UnrecoverableNoiseError(msg);
    case RemoteError::kNoiseOverflow: throw NoiseOverflowError(msg);
    case RemoteError::kDecryption: throw DecryptionError(msg);
    case RemoteError::kRange: throw RangeError(msg);
    case RemoteError::kValidation: throw ValidationError(msg);
    default: throw ProtocolError(msg);
  }
}

std::vector<Frame> LocalIsoLink::Exchange(const Frame& request) {
  Frame in = Frame::Decode(request.Encode());
  std::vector<Frame> out;
  for (const auto& r : iso_.Handle(in)) out.push_back(Frame::Decode(r.Encode()));
  return out;
}

SocketIsoLink::SocketIsoLink(const LweParams& online, uint64_t seed) {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0)
    throw ProtocolError("socketpair failed");
  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw ProtocolError("fork failed");
  }
  if (pid == 0) {
    ::close(sv[0]);
    ServeIso(sv[1], online, seed);
  }
  ::close(sv[1]);
  fd_ = sv[0];
  pid_ = pid;
}

SocketIsoLink::~SocketIsoLink() {
  if (fd_ >= 0) {
    try {
      WriteFrame(fd_, Frame{PartyId::Server(), PartyId::Iso(), MsgKind::kShutdown, {}});
    } catch (const Error&) {
    }
    ::close(fd_);
  }
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::vector<Frame> SocketIsoLink::Exchange(const Frame& request) {
  WriteFrame(fd_, request);
  uint64_t n = 0;
  if (!ReadU64(fd_, &n)) throw ProtocolError("ISO process closed the channel");
  std::vector<Frame> out(n);
  for (auto& f : out)
    if (!ReadFrame(fd_, &f)) throw ProtocolError("truncated ISO reply");
  return out;
}

std::unique_ptr<IsoLink> MakeIsoLink(const LweParams& online, uint64_t seed,
                                     bool two_process) {
  if (two_process) return std::make_unique<SocketIsoLink>(online, seed);
  return std::make_unique<LocalIsoLink>(online, seed);
}

}  // namespace elfc
