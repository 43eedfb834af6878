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

#include "elfc/common.h"

#include <algorithm>

namespace elfc {

std::string ToStringU(Zq v) {
  if (v == 0) return "0";
  std::string s;
  while (v > 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  std::reverse(s.begin(), s.end());
  return s;
}

std::string ToString(Int128 v) {
  if (v < 0) return "-" + ToStringU(AbsU(v));
  return ToStringU(static_cast<Zq>(v));
}

int BitLength(Zq v) {
  int n = 0;
  while (v > 0) {
    ++n;
    v >>= 1;
  }
  return n;
}

Zq CeilPow2(Zq v) {
  if (v <= 1) return v;
  int b = BitLength(v - 1);
  if (b >= 128) return ~Zq{0};
  return Zq{1} << b;
}

}  // namespace elfc
