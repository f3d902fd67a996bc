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
#include <optional>
#include <span>
#include <vector>

#include "clonesim/types.hpp"

namespace clonesim {

// Slice selection: one output bit per row, each the parity of (pa & mask).
// Rows only look at tag bits (>= 16) so that all slices stay reachable from
// any cache set.
class SliceHash {
 public:
  SliceHash() = default;
  explicit SliceHash(std::vector<std::uint64_t> row_masks);

  unsigned output_bits() const { return static_cast<unsigned>(rows_.size()); }
  unsigned operator()(std::uint64_t pa) const;
  const std::vector<std::uint64_t>& rows() const { return rows_; }

  // Default matrix for a power-of-two slice count. Each row pivots on one of
  // the low tag bits (20..22) so small contiguous regions reach every slice.
  static SliceHash default_for(unsigned slices);

 private:
  std::vector<std::uint64_t> rows_;
};

enum class ReplacementPolicy { QuadAge, Lru };

struct CacheGeometry {
  unsigned slices = 8;
  unsigned sets_per_slice = 1024;
  unsigned ways = 16;
  ReplacementPolicy replacement = ReplacementPolicy::QuadAge;
  SliceHash slice_hash = SliceHash::default_for(8);

  // Quad-age parameters: a filled line starts at insertion_age, a hit pulls
  // it back to hit_age, victims are taken from age 3.
  std::uint8_t insertion_age = 1;
  std::uint8_t hit_age = 0;

  static constexpr unsigned line_size = 64;

  unsigned set_bits() const { return bitops::log2_exact(sets_per_slice); }
  std::uint64_t total_lines() const {
    return static_cast<std::uint64_t>(slices) * sets_per_slice * ways;
  }
  std::uint64_t byte_size() const { return total_lines() * line_size; }
  // Cache sets per slice belonging to one channel (those sharing bits 6..11).
  unsigned channel_sets() const { return sets_per_slice >> kChannelBits; }
  // Lines a channel can hold across all slices; the detector can monitor at
  // most this many lines.
  std::uint64_t channel_line_capacity() const {
    return static_cast<std::uint64_t>(channel_sets()) * slices * ways;
  }

  // Throws std::invalid_argument on inconsistent parameters.
  void validate() const;
};

struct DecomposedAddress {
  std::uint64_t line_offset = 0;
  std::uint64_t set_index = 0;
  unsigned slice = 0;
  std::uint64_t tag = 0;

  auto operator<=>(const DecomposedAddress&) const = default;
};

DecomposedAddress decompose(PhysicalAddress pa, const CacheGeometry& geo);

struct CacheLineState {
  std::uint64_t tag = 0;
  bool valid = false;
  std::uint8_t age = 0;          // quad-age position, always in [0, 3]
  ActorId owner = 0;
  std::uint64_t last_use = 0;    // LRU stamp, unused under quad-age
};

struct AccessResult {
  bool hit = false;
  std::optional<std::uint64_t> evicted_tag;
  std::optional<ActorId> evicted_owner;
};

// Single-level inclusive cache; value semantics so tests can fork the state.
class CacheState {
 public:
  explicit CacheState(CacheGeometry geo);

  const CacheGeometry& geometry() const { return geo_; }

  AccessResult access(PhysicalAddress pa, ActorId actor);

  // Ground-truth queries for tests and harnesses; the simulated enclave code
  // never relies on them.
  bool resident(PhysicalAddress pa) const;
  std::optional<ActorId> owner_of(PhysicalAddress pa) const;
  unsigned ways_owned_by(unsigned slice, std::uint64_t set, ActorId actor) const;
  std::span<const CacheLineState> set_lines(unsigned slice, std::uint64_t set) const;

 private:
  std::span<CacheLineState> lines_of(unsigned slice, std::uint64_t set);

  CacheGeometry geo_;
  std::vector<CacheLineState> lines_;
  std::uint64_t use_clock_ = 0;
};

}  // namespace clonesim
