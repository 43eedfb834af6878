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

// Party layer: framed messages between the ISO, the delegate server and the
// generators, the masked two-party protocols run between server and ISO, and
// the transcript they leave behind.

#ifndef ELFC_PROTOCOLS_H_
#define ELFC_PROTOCOLS_H_

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "elfc/he_core.h"
#include "elfc/second_crypto.h"

namespace elfc {

// Wire party codes: 0 ISO, 1 delegate server, 1 + i generator i (i >= 1).
struct PartyId {
  enum class Role : uint8_t { kIso, kServer, kGenerator };
  Role role = Role::kIso;
  int index = 0;

  static PartyId Iso() { return {Role::kIso, 0}; }
  static PartyId Server() { return {Role::kServer, 0}; }
  static PartyId Generator(int i);
  uint8_t Code() const;
  static PartyId FromCode(uint8_t c);
  std::string Name() const;
  bool operator==(const PartyId& o) const {
    return role == o.role && index == o.index;
  }
};

enum class MsgKind : uint8_t {
  kHello = 1,
  kPublicKey,
  kSecondPublicKey,
  kTypeReport,
  kMaskedInverse,
  kInverseReply,
  kMaskedReencrypt,
  kReencryptReply,
  kMaskedRescale,
  kRescaleReply,
  kMaskedTransfer,
  kTransferReply,
  kMaskedRank,
  kRankReply,
  kMeasurement,
  kPriceCipher,
  kPriceFresh,
  kPriceAnnounce,
  kError,
  kShutdown,
  kMaskedNorm,
  kNormReply,
};

std::string KindName(MsgKind k);
std::optional<MsgKind> KindFromName(const std::string& name);
// Requests whose payload starts with a u64 mask usage tag.
bool IsMaskedRequest(MsgKind k);
bool IsMaskedReply(MsgKind k);

struct Frame {
  PartyId sender;
  PartyId receiver;
  MsgKind kind = MsgKind::kHello;
  std::vector<uint8_t> payload;

  std::vector<uint8_t> Encode() const;
  static Frame Decode(const std::vector<uint8_t>& bytes);
  // Tag carried by masked requests and replies; 0 otherwise.
  uint64_t Tag() const;
};

struct TranscriptEntry {
  uint64_t seq = 0;
  PartyId sender;
  PartyId receiver;
  std::string kind;  // "masked_inverse:tag=17" for tagged messages
  std::string digest;
  uint64_t size = 0;
  std::vector<uint8_t> payload;  // kept only when requested
};

class Transcript {
 public:
  using Observer = std::function<void(const Frame&)>;

  void Record(const Frame& f);
  const std::vector<TranscriptEntry>& entries() const { return entries_; }
  void set_keep_payloads(bool keep) { keep_payloads_ = keep; }
  void AddObserver(Observer o) { observers_.push_back(std::move(o)); }
  std::string ToCsv() const;
  void WriteCsv(const std::string& path) const;
  static std::vector<TranscriptEntry> ParseCsv(const std::string& text);

 private:
  std::vector<TranscriptEntry> entries_;
  std::vector<Observer> observers_;
  bool keep_payloads_ = false;
};

struct MaskPair {
  IntMatrix phi;
  IntMatrix phi_inv;
  uint64_t usage_tag = 0;
};

class TagCounter {
 public:
  uint64_t Next() { return ++last_; }
  uint64_t last() const { return last_; }

 private:
  uint64_t last_ = 0;
};

// Row/column l1 norm limit on both phi and phi_inv.
inline constexpr int kMaskNormBound = 4;

// Signed permutation followed by random elementary +-1 row operations.
MaskPair GenMaskPair(int n, Rng& rng, TagCounter& tags);
int MaxLineNorm(const IntMatrix& m);

// Which ISO key a masked request refers to.
enum class KeySlot : uint8_t { kSynthesis = 0, kOnline = 1 };
enum class ReplyForm : uint8_t { kLwe = 0, kGsw = 1 };

class IsoParty {
 public:
  IsoParty(const LweParams& online, uint64_t seed);

  // Replies to one request, in delivery order.
  std::vector<Frame> Handle(const Frame& request);

  const PublicKey& public_key(KeySlot slot) const;
  // Test and audit access to the decryption key.
  const SecretKey& secret_key(KeySlot slot) const;
  int n_generators() const { return n_generators_; }
  int last_price_step() const { return last_price_step_; }

 private:
  std::vector<Frame> Hello(const Frame& f);
  std::vector<Frame> Masked(const Frame& f);
  std::vector<Frame> Price(const Frame& f);
  const KeyPair& Keys(KeySlot slot) const;

  KeyPair synthesis_;
  KeyPair online_;
  Rng rng_;
  int n_generators_ = 0;
  int last_price_step_ = -1;
};

// Server-side view of the ISO.
class IsoLink {
 public:
  virtual ~IsoLink() = default;
  virtual std::vector<Frame> Exchange(const Frame& request) = 0;
  virtual bool remote() const { return false; }
};

// Same process; frames still pass through the binary encoding.
class LocalIsoLink : public IsoLink {
 public:
  LocalIsoLink(const LweParams& online, uint64_t seed) : iso_(online, seed) {}
  std::vector<Frame> Exchange(const Frame& request) override;
  IsoParty& iso() { return iso_; }

 private:
  IsoParty iso_;
};

// ISO in a forked child process behind a stream socket pair.
class SocketIsoLink : public IsoLink {
 public:
  SocketIsoLink(const LweParams& online, uint64_t seed);
  ~SocketIsoLink() override;
  SocketIsoLink(const SocketIsoLink&) = delete;
  SocketIsoLink& operator=(const SocketIsoLink&) = delete;
  std::vector<Frame> Exchange(const Frame& request) override;
  bool remote() const override { return true; }

 private:
  int fd_ = -1;
  int pid_ = -1;
};

std::unique_ptr<IsoLink> MakeIsoLink(const LweParams& online, uint64_t seed,
                                     bool two_process);

// Message bus: every frame is recorded; frames between co-located parties
// wait in per-receiver mailboxes.
class Bus {
 public:
  explicit Bus(IsoLink& iso) : iso_(iso) {}

  // Sends a request to the ISO; returns the replies addressed to the sender
  // and queues the rest.
  std::vector<Frame> CallIso(const Frame& request);
  void Send(const Frame& f);
  std::optional<Frame> Receive(const PartyId& receiver, MsgKind kind);
  Transcript& transcript() { return transcript_; }
  IsoLink& iso_link() { return iso_; }

 private:
  IsoLink& iso_;
  Transcript transcript_;
  std::deque<Frame> mailbox_;
};

// Masked operations the server drives with the ISO. All inputs live under
// the key named by `slot`; masked payloads are sent as LWE vectors.
class DelegateServer {
 public:
  DelegateServer(Bus& bus, uint64_t seed);

  // Requests the published keys; n_generators fixes the announce list.
  void Connect(int n_generators);
  const PublicKey& public_key(KeySlot slot) const;
  const SecondCryptoKeys& second_keys() const { return second_; }
  void PublishSecondKey(int n_generators);

  // Masked inversion: result decrypts to M^-1 at step 2^out_step.
  GswMatrix Inverse(const LweMatrix& m, int out_step,
                    KeySlot slot = KeySlot::kSynthesis);
  // Masked re-encryption: same plaintext, fresh noise.
  LweMatrix Reencrypt(const LweMatrix& m, KeySlot slot = KeySlot::kSynthesis);
  GswMatrix ReencryptGsw(const LweMatrix& m,
                         KeySlot slot = KeySlot::kSynthesis);
  // Masked re-encryption with the ISO rounding the masked value to step 2^out_step.
  LweMatrix Rescale(const LweMatrix& m, int out_step,
                    KeySlot slot = KeySlot::kSynthesis);
  GswMatrix RescaleGsw(const LweMatrix& m, int out_step,
                       KeySlot slot = KeySlot::kSynthesis);
  // Synthesis key to online key, rounded to step 2^out_step.
  LweMatrix Transfer(const LweMatrix& m, int out_step);
  // Rank of the decrypted matrix, certified on a masked copy.
  int Rank(const LweMatrix& m, KeySlot slot = KeySlot::kSynthesis);
  // Upper bound on max |entry| of the decrypted matrix, from the bit length
  // of the largest masked entry.
  double NormBound(const LweMatrix& m, KeySlot slot = KeySlot::kSynthesis);
  // Re-encrypts when the masked copy would pass half the overflow threshold.
  LweMatrix EnsureHeadroom(const LweMatrix& m,
                           KeySlot slot = KeySlot::kSynthesis);

  // Online price round: the ISO decrypts p and returns GSW(p) at step 2^r.
  std::vector<SeededGsw> PriceRound(const LweMatrix& p, int step_index,
                                    int r_step);

  Bus& bus() { return bus_; }
  Rng& rng() { return rng_; }
  // Masks by usage tag, retained for audits.
  void set_record_masks(bool on) { record_masks_ = on; }
  const std::map<uint64_t, std::pair<MaskPair, MaskPair>>& mask_log() const {
    return mask_log_;
  }
  uint64_t masked_calls() const { return masked_calls_; }

 private:
  struct MaskedReply {
    LweMatrix lwe;
    GswMatrix gsw;
    int rank = 0;
  };
  MaskedReply Call(MsgKind kind, const LweMatrix& m, int out_step,
                   KeySlot slot, ReplyForm form, MaskPair* left,
                   MaskPair* right);

  Bus& bus_;
  Rng rng_;
  TagCounter tags_;
  SecondCryptoKeys second_;
  PublicKey synthesis_pk_;
  PublicKey online_pk_;
  bool record_masks_ = false;
  uint64_t masked_calls_ = 0;
  std::map<uint64_t, std::pair<MaskPair, MaskPair>> mask_log_;
};

// Throws the error carried by an ISO error frame.
[[noreturn]] void RaiseRemoteError(const Frame& f);

// Batch leakage audit over transcript metadata.
struct AuditFinding {
  uint64_t seq = 0;
  std::string rule;
  std::string detail;
};
struct AuditReport {
  size_t entries = 0;
  size_t masked_requests = 0;
  std::vector<AuditFinding> findings;
  bool ok() const { return findings.empty(); }
  std::string Summary() const;
};
AuditReport AuditTranscript(const std::vector<TranscriptEntry>& entries);

}  // namespace elfc

#endif  // ELFC_PROTOCOLS_H_
