/*
 * Copyright 2026 The clonesim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>

#include "clonesim/types.hpp"

namespace clonesim {

// DDR4 address-mapping model for a single-DIMM desktop part. All bank
// coordinates are XORs of two address bits; the row is the address above
// bit 17. Note rank reuses the ba1 formula on this platform; the redundancy
// is kept as observed rather than folded away.
struct DramCoordinates {
  std::uint8_t channel = 0;
  std::uint8_t bg0 = 0;
  std::uint8_t bg1 = 0;
  std::uint8_t ba0 = 0;
  std::uint8_t ba1 = 0;
  std::uint8_t rank = 0;
  std::uint64_t row = 0;

  auto operator<=>(const DramCoordinates&) const = default;

  bool same_bank(const DramCoordinates& o) const {
    return channel == o.channel && bg0 == o.bg0 && bg1 == o.bg1 &&
           ba0 == o.ba0 && ba1 == o.ba1 && rank == o.rank;
  }
};

// Row bits start where the in-row offset ends.
inline constexpr unsigned kDramRowShift = 18;
// Highest address bit feeding any bank XOR; row-conflict boundaries repeat
// every 1 << (kDramSpanBits) bytes.
inline constexpr unsigned kDramSpanBits = 23;

DramCoordinates dram_map(PhysicalAddress pa);

// Same bank, different row: accessing both forces a row buffer swap and a
// measurably slower pair of reads.
bool row_conflict(PhysicalAddress a, PhysicalAddress b);

}  // namespace clonesim
