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

#include "clonesim/cache.hpp"

#include <stdexcept>

namespace clonesim {

SliceHash::SliceHash(std::vector<std::uint64_t> row_masks)
    : rows_(std::move(row_masks)) {}

unsigned SliceHash::operator()(std::uint64_t pa) const {
  unsigned out = 0;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    out |= bitops::parity(pa & rows_[i]) << i;
  }
  return out;
}

SliceHash SliceHash::default_for(unsigned slices) {
  if (!bitops::is_pow2(slices)) {
    throw std::invalid_argument("slice count must be a power of two");
  }
  auto mask_of = [](std::initializer_list<unsigned> bits) {
    std::uint64_t m = 0;
    for (unsigned b : bits) m |= 1ull << b;
    return m;
  };
  // Each row pivots on a distinct low tag bit (20/21/22) so that within any
  // few-MiB physical window every slice value is realized.
  static const std::uint64_t kRows[3] = {
      mask_of({16, 19, 20, 25, 28, 31}),
      mask_of({17, 18, 21, 26, 29, 32}),
      mask_of({16, 18, 22, 27, 30, 33}),
  };
  const unsigned bits = bitops::log2_exact(slices);
  if (bits > 3) throw std::invalid_argument("at most 8 slices supported by default hash");
  return SliceHash(std::vector<std::uint64_t>(kRows, kRows + bits));
}

void CacheGeometry::validate() const {
  if (!bitops::is_pow2(sets_per_slice)) {
    throw std::invalid_argument("sets_per_slice must be a power of two");
  }
  if (sets_per_slice < (1u << kChannelBits)) {
    throw std::invalid_argument("sets_per_slice must cover the channel bits");
  }
  if (ways == 0) throw std::invalid_argument("ways must be positive");
  if (slices == 0) throw std::invalid_argument("slices must be positive");
  if (!bitops::is_pow2(slices)) {
    throw std::invalid_argument("slices must be a power of two");
  }
  if (slice_hash.output_bits() != bitops::log2_exact(slices)) {
    throw std::invalid_argument("slice hash width does not match slice count");
  }
  for (std::uint64_t row : slice_hash.rows()) {
    if (row & ((1ull << (kLineOffsetBits + set_bits())) - 1)) {
      throw std::invalid_argument("slice hash must only use tag bits");
    }
    if (row >> kPhysicalAddressBits) {
      throw std::invalid_argument("slice hash mask exceeds physical address width");
    }
  }
  if (insertion_age > 3 || hit_age > 3) {
    throw std::invalid_argument("quad-age positions must be in [0,3]");
  }
}

DecomposedAddress decompose(PhysicalAddress pa, const CacheGeometry& geo) {
  DecomposedAddress d;
  d.line_offset = pa.bits(0, kLineOffsetBits - 1);
  d.set_index = bitops::field(pa.value, kLineOffsetBits,
                              kLineOffsetBits + geo.set_bits() - 1);
  d.slice = geo.slice_hash(pa.value);
  d.tag = pa.value >> (kLineOffsetBits + geo.set_bits());
  return d;
}

CacheState::CacheState(CacheGeometry geo) : geo_(std::move(geo)) {
  geo_.validate();
  lines_.resize(geo_.total_lines());
}

std::span<CacheLineState> CacheState::lines_of(unsigned slice, std::uint64_t set) {
  const std::size_t base =
      (static_cast<std::size_t>(slice) * geo_.sets_per_slice + set) * geo_.ways;
  return {lines_.data() + base, geo_.ways};
}

std::span<const CacheLineState> CacheState::set_lines(unsigned slice,
                                                      std::uint64_t set) const {
  const std::size_t base =
      (static_cast<std::size_t>(slice) * geo_.sets_per_slice + set) * geo_.ways;
  return {lines_.data() + base, geo_.ways};
}

AccessResult CacheState::access(PhysicalAddress pa, ActorId actor) {
  const DecomposedAddress d = decompose(pa, geo_);
  auto set = lines_of(d.slice, d.set_index);
  ++use_clock_;

  for (auto& line : set) {
    if (line.valid && line.tag == d.tag) {
      line.age = geo_.hit_age;
      line.last_use = use_clock_;
      line.owner = actor;
      return {.hit = true, .evicted_tag = std::nullopt, .evicted_owner = std::nullopt};
    }
  }

  // Miss: fill an invalid way if one exists (lowest index), else evict.
  for (auto& line : set) {
    if (!line.valid) {
      line = {.tag = d.tag,
              .valid = true,
              .age = geo_.insertion_age,
              .owner = actor,
              .last_use = use_clock_};
      return {.hit = false, .evicted_tag = std::nullopt, .evicted_owner = std::nullopt};
    }
  }

  CacheLineState* victim = nullptr;
  if (geo_.replacement == ReplacementPolicy::QuadAge) {
    // Age the whole set until some line reaches 3, then take the lowest way
    // among the age-3 lines.
    auto oldest = [&]() -> CacheLineState* {
      for (auto& line : set) {
        if (line.age == 3) return &line;
      }
      return nullptr;
    };
    victim = oldest();
    while (victim == nullptr) {
      for (auto& line : set) ++line.age;
      victim = oldest();
    }
  } else {
    victim = &set[0];
    for (auto& line : set) {
      if (line.last_use < victim->last_use) victim = &line;
    }
  }

  AccessResult r{.hit = false,
                 .evicted_tag = victim->tag,
                 .evicted_owner = victim->owner};
  *victim = {.tag = d.tag,
             .valid = true,
             .age = geo_.insertion_age,
             .owner = actor,
             .last_use = use_clock_};
  return r;
}

bool CacheState::resident(PhysicalAddress pa) const {
  const DecomposedAddress d = decompose(pa, geo_);
  for (const auto& line : set_lines(d.slice, d.set_index)) {
    if (line.valid && line.tag == d.tag) return true;
  }
  return false;
}

std::optional<ActorId> CacheState::owner_of(PhysicalAddress pa) const {
  const DecomposedAddress d = decompose(pa, geo_);
  for (const auto& line : set_lines(d.slice, d.set_index)) {
    if (line.valid && line.tag == d.tag) return line.owner;
  }
  return std::nullopt;
}

unsigned CacheState::ways_owned_by(unsigned slice, std::uint64_t set,
                                   ActorId actor) const {
  unsigned n = 0;
  for (const auto& line : set_lines(slice, set)) {
    if (line.valid && line.owner == actor) ++n;
  }
  return n;
}

}  // namespace clonesim
