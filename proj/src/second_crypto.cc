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

#include "elfc/second_crypto.h"

#include <sodium.h>

#include <cstring>

namespace elfc {
namespace {

void EnsureSodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw ProtocolError("libsodium initialization failed");
}

template <size_t N>
std::array<uint8_t, N> RandomBytes(Rng& rng) {
  std::array<uint8_t, N> out{};
  for (size_t i = 0; i < N; i += 8) {
    uint64_t w = rng.Next();
    for (size_t k = 0; k < 8 && i + k < N; ++k)
      out[i + k] = static_cast<uint8_t>(w >> (8 * k));
  }
  return out;
}

}  // namespace

SecondCryptoKeys SecondKeygen(Rng& rng) {
  EnsureSodium();
  auto seed = RandomBytes<crypto_box_SEEDBYTES>(rng);
  SecondCryptoKeys k;
  crypto_box_seed_keypair(k.pk2.data(), k.sk2.data(), seed.data());
  return k;
}

std::vector<uint8_t> SecondEncrypt(const std::array<uint8_t, 32>& pk2,
                                   const std::vector<uint8_t>& msg, Rng& rng) {
  EnsureSodium();
  auto seed = RandomBytes<crypto_box_SEEDBYTES>(rng);
  std::array<uint8_t, crypto_box_PUBLICKEYBYTES> eph_pk{};
  std::array<uint8_t, crypto_box_SECRETKEYBYTES> eph_sk{};
  crypto_box_seed_keypair(eph_pk.data(), eph_sk.data(), seed.data());
  auto nonce = RandomBytes<crypto_box_NONCEBYTES>(rng);

  std::vector<uint8_t> out(eph_pk.size() + nonce.size() + crypto_box_MACBYTES +
                           msg.size());
  std::memcpy(out.data(), eph_pk.data(), eph_pk.size());
  std::memcpy(out.data() + eph_pk.size(), nonce.data(), nonce.size());
  uint8_t* box = out.data() + eph_pk.size() + nonce.size();
  if (crypto_box_easy(box, msg.data(), msg.size(), nonce.data(), pk2.data(),
                      eph_sk.data()) != 0)
    throw ProtocolError("second-layer encryption failed");
  sodium_memzero(eph_sk.data(), eph_sk.size());
  return out;
}

std::vector<uint8_t> SecondDecrypt(const SecondCryptoKeys& keys,
                                   const std::vector<uint8_t>& blob) {
  EnsureSodium();
  const size_t head = crypto_box_PUBLICKEYBYTES + crypto_box_NONCEBYTES;
  if (blob.size() < head + crypto_box_MACBYTES)
    throw DecryptionError("second-layer ciphertext too short");
  std::vector<uint8_t> msg(blob.size() - head - crypto_box_MACBYTES);
  if (crypto_box_open_easy(msg.data(), blob.data() + head, blob.size() - head,
                           blob.data() + crypto_box_PUBLICKEYBYTES,
                           blob.data(), keys.sk2.data()) != 0)
    throw DecryptionError("second-layer authentication failed");
  return msg;
}

std::string Sha256Hex(const std::vector<uint8_t>& data) {
  EnsureSodium();
  uint8_t h[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(h, data.data(), data.size());
  static const char* kHex = "0123456789abcdef";
  std::string s;
  for (uint8_t b : h) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 15]);
  }
  return s;
}

std::string Sha256Hex(const std::string& data) {
  return Sha256Hex(std::vector<uint8_t>(data.begin(), data.end()));
}

}  // namespace elfc
