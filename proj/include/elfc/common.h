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

#ifndef ELFC_COMMON_H_
#define ELFC_COMMON_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace elfc {

using Zq = unsigned __int128;
using Int128 = __int128;

// Process exit codes double as error categories.
enum class ErrorKind : int {
  kValidation = 2,
  kProtocol = 3,
  kNoiseOverflow = 4,
  kNonConvergence = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

#define ELFC_DEFINE_ERROR(Name, Kind)                 \
  class Name : public Error {                         \
   public:                                            \
    explicit Name(const std::string& what)            \
        : Error(ErrorKind::Kind, what) {}             \
  };

ELFC_DEFINE_ERROR(ValidationError, kValidation)
ELFC_DEFINE_ERROR(ProtocolError, kProtocol)
ELFC_DEFINE_ERROR(NoiseOverflowError, kNoiseOverflow)
ELFC_DEFINE_ERROR(NonConvergenceError, kNonConvergence)

#undef ELFC_DEFINE_ERROR

class ParamError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class IncompatibleError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class SingularityError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};
class DecryptionError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};
class ProtocolIncompleteError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};
class ObservabilityError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};
class UnrecoverableNoiseError : public NoiseOverflowError {
 public:
  using NoiseOverflowError::NoiseOverflowError;
};

// Deterministic generator shared by every party; one instance per party.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t Next() { return engine_(); }
  Zq NextZq() { return (static_cast<Zq>(engine_()) << 64) | engine_(); }
  // Uniform integer in [-bound, bound].
  int64_t Bounded(int64_t bound) {
    if (bound <= 0) return 0;
    std::uniform_int_distribution<int64_t> dist(-bound, bound);
    return dist(engine_);
  }
  uint64_t Below(uint64_t n) {
    std::uniform_int_distribution<uint64_t> dist(0, n - 1);
    return dist(engine_);
  }
  double Uniform(double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Counter-based mixer used for seed-expanded ciphertext material.
inline uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string ToString(Int128 v);
std::string ToStringU(Zq v);

inline Zq SatAdd(Zq a, Zq b) {
  Zq s = a + b;
  return s < a ? ~Zq{0} : s;
}
inline Zq SatMul(Zq a, Zq b) {
  if (a == 0 || b == 0) return 0;
  if (a > ~Zq{0} / b) return ~Zq{0};
  return a * b;
}
inline Zq AbsU(Int128 v) {
  return v < 0 ? static_cast<Zq>(-(v + 1)) + 1 : static_cast<Zq>(v);
}
// Smallest power of two >= v (v > 0); returns v for v == 0.
Zq CeilPow2(Zq v);
int BitLength(Zq v);

}  // namespace elfc

#endif  // ELFC_COMMON_H_
