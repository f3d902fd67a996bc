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

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace clonesim {

using ActorId = std::uint16_t;
using SimTime = double;

// Simulated physical addresses are 34 bits wide (16 GiB of physical space).
inline constexpr unsigned kPhysicalAddressBits = 34;
inline constexpr unsigned kLineOffsetBits = 6;   // 64-byte lines, bits 0..5
inline constexpr unsigned kChannelBits = 6;      // channel-selection bits 6..11
inline constexpr unsigned kPageOffsetBits = 12;  // 4096-byte pages

inline constexpr std::uint64_t kPageSize = 1ull << kPageOffsetBits;
inline constexpr std::uint64_t kLineSize = 1ull << kLineOffsetBits;
inline constexpr std::uint64_t kMaxPhysicalPages =
    1ull << (kPhysicalAddressBits - kPageOffsetBits);

namespace bitops {
// Inclusive bit-range extract; hi < 64.
constexpr std::uint64_t field(std::uint64_t v, unsigned lo, unsigned hi) {
  const std::uint64_t width = hi - lo + 1;
  const std::uint64_t mask = (width >= 64) ? ~0ull : ((1ull << width) - 1);
  return (v >> lo) & mask;
}

constexpr std::uint64_t bit(std::uint64_t v, unsigned i) { return (v >> i) & 1ull; }

constexpr unsigned parity(std::uint64_t v) { return __builtin_parityll(v); }

constexpr bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

constexpr unsigned log2_exact(std::uint64_t v) {
  unsigned n = 0;
  while ((1ull << n) < v) ++n;
  return n;
}
}  // namespace bitops

struct VirtualAddress {
  std::uint64_t value{0};

  constexpr std::uint64_t page_number() const { return value >> kPageOffsetBits; }
  constexpr std::uint64_t page_offset() const { return value & (kPageSize - 1); }
  constexpr std::uint64_t bits(unsigned lo, unsigned hi) const {
    return bitops::field(value, lo, hi);
  }
  auto operator<=>(const VirtualAddress&) const = default;
};

struct PhysicalAddress {
  std::uint64_t value{0};

  constexpr std::uint64_t bit(unsigned i) const { return bitops::bit(value, i); }
  constexpr std::uint64_t bits(unsigned lo, unsigned hi) const {
    return bitops::field(value, lo, hi);
  }
  constexpr std::uint64_t line_offset() const { return bits(0, 5); }
  // Set-index bits inside the page offset: chosen by the enclave via its
  // virtual addresses, untouchable by the OS.
  constexpr std::uint64_t enclave_set_bits() const { return bits(6, 11); }
  // Set-index bits above the page offset: chosen by the OS via frame placement.
  constexpr std::uint64_t os_set_bits() const { return bits(12, 15); }
  constexpr std::uint64_t page_number() const { return value >> kPageOffsetBits; }
  auto operator<=>(const PhysicalAddress&) const = default;
};

// One covert channel = the group of cache sets whose index bits 6..11 equal
// the channel id. 64 channels can coexist without contending.
class Channel {
 public:
  static constexpr unsigned kCount = 1u << kChannelBits;

  constexpr Channel() = default;
  constexpr explicit Channel(unsigned v) : value_(v) {
    if (v >= kCount) throw std::invalid_argument("channel id out of range");
  }
  constexpr unsigned value() const { return value_; }
  // In-page byte offset that pins physical bits 6..11 to this channel.
  constexpr std::uint64_t page_offset() const {
    return static_cast<std::uint64_t>(value_) << kLineOffsetBits;
  }
  auto operator<=>(const Channel&) const = default;

 private:
  std::uint8_t value_{0};
};

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnmappedAddress : SimError {
  using SimError::SimError;
};

struct PhysicalSpaceExhausted : SimError {
  using SimError::SimError;
};

// Raised when a probe-visible inconsistency indicates the OS tampered with
// the enclave's memory layout. Callers treat this as evidence, not a bug.
struct MemoryManipulationError : SimError {
  using SimError::SimError;
};

}  // namespace clonesim
