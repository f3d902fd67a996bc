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

#include "clonesim/dram.hpp"

namespace clonesim {

DramCoordinates dram_map(PhysicalAddress pa) {
  const std::uint64_t v = pa.value;
  auto b = [v](unsigned i) { return static_cast<std::uint8_t>((v >> i) & 1ull); };

  DramCoordinates c;
  c.channel = b(18) ^ b(15) ^ b(13) ^ b(12) ^ b(9) ^ b(8);
  c.bg0 = b(19) ^ b(15);
  c.bg1 = b(20) ^ b(16);
  c.ba0 = b(21) ^ b(17);
  c.ba1 = b(22) ^ b(18);
  c.rank = b(22) ^ b(18);  // identical to ba1 on this platform, kept as-is
  c.row = v >> kDramRowShift;
  return c;
}

bool row_conflict(PhysicalAddress a, PhysicalAddress b) {
  const DramCoordinates ca = dram_map(a);
  const DramCoordinates cb = dram_map(b);
  return ca.same_bank(cb) && ca.row != cb.row;
}

}  // namespace clonesim
