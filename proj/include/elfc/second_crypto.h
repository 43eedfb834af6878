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

// Outer public-key layer protecting generator reports in transit to the
// delegate server (X25519 + XSalsa20-Poly1305 sealed box).

#ifndef ELFC_SECOND_CRYPTO_H_
#define ELFC_SECOND_CRYPTO_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "elfc/common.h"

namespace elfc {

struct SecondCryptoKeys {
  std::array<uint8_t, 32> pk2{};
  std::array<uint8_t, 32> sk2{};
};

SecondCryptoKeys SecondKeygen(Rng& rng);
// Ephemeral key and nonce are drawn from rng, so output is reproducible.
std::vector<uint8_t> SecondEncrypt(const std::array<uint8_t, 32>& pk2,
                                   const std::vector<uint8_t>& msg, Rng& rng);
// Throws DecryptionError on a malformed blob or wrong key.
std::vector<uint8_t> SecondDecrypt(const SecondCryptoKeys& keys,
                                   const std::vector<uint8_t>& blob);

// Hex SHA-256 digest.
std::string Sha256Hex(const std::vector<uint8_t>& data);
std::string Sha256Hex(const std::string& data);

}  // namespace elfc

#endif  // ELFC_SECOND_CRYPTO_H_
