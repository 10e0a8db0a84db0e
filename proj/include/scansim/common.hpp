/*
 * Copyright 2026 The scan-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SCANSIM_COMMON_HPP
#define SCANSIM_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace scansim {

using Rank = std::uint16_t;
using Cycles = std::uint64_t;

/// Nanoseconds per cycle of the 125 MHz NIC clock.
inline constexpr Cycles kNsPerCycle = 8;

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// True iff v is a power of two (1 counts).
constexpr bool is_pow2(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

/// floor(log2(v)) for v >= 1.
constexpr unsigned log2_floor(std::uint32_t v) {
  unsigned r = 0;
  while (v >>= 1) ++r;
  return r;
}

}  // namespace scansim

#endif  // SCANSIM_COMMON_HPP
