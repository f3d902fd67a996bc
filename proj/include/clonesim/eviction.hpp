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
#include <string>
#include <string_view>
#include <vector>

#include "clonesim/types.hpp"
#include "clonesim/world.hpp"

namespace clonesim {

// Pages whose frames agree on physical bits 0..19, discovered through the
// store/load aliasing side channel. Members share one cache set and span
// the slices.
struct SpoilerGroup {
  std::vector<VirtualAddress> members;  // ascending va, leader first
};

struct SpoilerScan {
  std::vector<SpoilerGroup> groups;
  std::vector<std::uint64_t> unmapped_pages;  // vpns that failed to translate
  std::uint64_t region_pages = 0;
  Channel channel;
};

// Spoiler groups merged by shared cache-set index (physical bits 6..15),
// decided purely by eviction probes.
struct CacheGroup {
  std::vector<std::size_t> spoiler_indices;
  std::vector<VirtualAddress> members;  // all addresses of all spoiler groups
};

// Exactly `ways` addresses that map to one (set index, slice) pair.
struct EvictionSet {
  std::vector<VirtualAddress> members;
};

// One eviction set per (channel set, slice): everything a clone running the
// same binary could be told to occupy inside this channel.
struct MonitoringSet {
  Channel channel;
  unsigned ways = 0;
  std::vector<EvictionSet> sets;  // channel_sets() * slices entries

  std::string to_json() const;
  static MonitoringSet from_json(const std::string& text);
};

struct CoverageReport {
  std::size_t group_count = 0;
  std::size_t expected_groups = 0;
  std::size_t min_group_size = 0;
  std::size_t max_group_size = 0;
  std::vector<std::uint64_t> gaps;  // unmapped vpns
  // (group index, member position) pairs whose va spacing is not the 1 MiB
  // aliasing period a linear layout produces.
  std::vector<std::pair<std::size_t, std::size_t>> spacing_anomalies;
  // Filled by the overload that also audits the regrouping: cache-group
  // count vs the channel width, and spoiler groups outside the partition.
  std::size_t cache_group_count = 0;
  std::size_t expected_cache_groups = 0;
  std::vector<std::size_t> unpartitioned_spoilers;
  bool manipulation_evidence = false;

  std::string summary() const;
};

// Channel choice: configured value wins; otherwise the low 6 bits of an
// FNV-1a digest of the binary identity. Clones share the identity and thus
// the channel; an unrelated binary hashing onto the same channel degrades
// availability (a detection DoS), never correctness.
Channel select_channel(std::optional<unsigned> configured,
                       std::string_view identity);

struct BuildOptions {
  std::optional<unsigned> channel;  // overrides identity-derived channel
  std::string identity = "enclave";
  std::uint64_t region_pages = 6144;  // 24 MiB
};

SpoilerScan build_spoiler_groups(World& world, ActorId actor, Channel channel,
                                 std::uint64_t region_pages);

std::vector<CacheGroup> regroup_to_cache_groups(World& world, ActorId actor,
                                                const SpoilerScan& scan);

// Greedy leave-one-out reduction of one cache group to its per-slice
// eviction sets. Throws MemoryManipulationError when some slice cannot be
// covered with exactly `ways` members.
std::vector<EvictionSet> reduce(World& world, ActorId actor,
                                const CacheGroup& group, Channel channel);

CoverageReport verify_coverage(const SpoilerScan& scan);

// Extended audit: also checks that the cache groups partition every spoiler
// group and that their count matches the channel width of the geometry.
CoverageReport verify_coverage(const SpoilerScan& scan,
                               std::span<const CacheGroup> cache_groups,
                               const CacheGeometry& geometry);

// Full pipeline: spoiler scan, regrouping, reduction, assembled in probe
// discovery order.
MonitoringSet build_monitoring_set(World& world, ActorId actor,
                                   const BuildOptions& options);

}  // namespace clonesim
