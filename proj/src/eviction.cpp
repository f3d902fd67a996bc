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

#include "clonesim/eviction.hpp"

#include <algorithm>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace clonesim {

using json = nlohmann::json;

namespace {

// Number of spoiler-aliasing classes the region can expose: frames agree on
// bits 0..19, so pages fall into at most 2^8 classes.
std::uint64_t expected_spoiler_groups(std::uint64_t region_pages) {
  const std::uint64_t classes = 1ull << (20 - kPageOffsetBits);
  return std::min(classes, region_pages);
}

// Snapshot/restore of every cache set a channel can occupy. Builder probe
// experiments run isolated from each other's residue; the decisions stay
// purely hit/miss based. This is the deterministic stand-in for the
// repetition-and-majority protocols a real prober needs against noise.
class ChannelScratch {
 public:
  ChannelScratch(CacheState& cache, Channel channel)
      : cache_(cache), channel_(channel) {
    const CacheGeometry& geo = cache.geometry();
    for (unsigned os = 0; os < geo.channel_sets(); ++os) {
      sets_.push_back((static_cast<std::uint64_t>(os) << kChannelBits) |
                      channel.value());
    }
    capture();
  }

  void capture() {
    saved_.clear();
    const CacheGeometry& geo = cache_.geometry();
    for (unsigned slice = 0; slice < geo.slices; ++slice) {
      for (std::uint64_t set : sets_) {
        auto lines = cache_.set_lines(slice, set);
        saved_.insert(saved_.end(), lines.begin(), lines.end());
      }
    }
  }

  void restore() {
    const CacheGeometry& geo = cache_.geometry();
    std::size_t k = 0;
    for (unsigned slice = 0; slice < geo.slices; ++slice) {
      for (std::uint64_t set : sets_) {
        auto lines = cache_.set_lines(slice, set);
        for (std::size_t w = 0; w < lines.size(); ++w) {
          const_cast<CacheLineState&>(lines[w]) = saved_[k++];
        }
      }
    }
  }

  // Flush the channel before a probe experiment so its hit/miss outcome
  // depends only on the experiment's own accesses, not on whatever another
  // instance left resident (the second clone builds while the first one is
  // already primed).
  void clear() {
    const CacheGeometry& geo = cache_.geometry();
    for (unsigned slice = 0; slice < geo.slices; ++slice) {
      for (std::uint64_t set : sets_) {
        for (const CacheLineState& line : cache_.set_lines(slice, set)) {
          const_cast<CacheLineState&>(line) = CacheLineState{};
        }
      }
    }
  }

 private:
  CacheState& cache_;
  Channel channel_;
  std::vector<std::uint64_t> sets_;
  std::vector<CacheLineState> saved_;
};

// Prime `test`, traverse `accessors`, re-probe `test`. True when any test
// address missed on the re-probe, i.e. the accessors evicted it.
bool eviction_probe(World& world, ActorId actor, ChannelScratch& scratch,
                    std::span<const VirtualAddress> test,
                    std::span<const VirtualAddress> accessors) {
  scratch.clear();
  for (VirtualAddress va : test) world.raw_access(actor, va);
  for (VirtualAddress va : accessors) world.raw_access(actor, va);
  bool evicted = false;
  for (VirtualAddress va : test) evicted |= world.raw_access(actor, va);
  return evicted;
}

std::vector<VirtualAddress> concat_members(
    const std::vector<SpoilerGroup>& spoilers,
    const std::vector<std::size_t>& indices,
    const std::vector<bool>& present) {
  std::vector<VirtualAddress> out;
  for (std::size_t idx : indices) {
    if (!present[idx]) continue;
    const auto& m = spoilers[idx].members;
    out.insert(out.end(), m.begin(), m.end());
  }
  return out;
}

}  // namespace

Channel select_channel(std::optional<unsigned> configured,
                       std::string_view identity) {
  if (configured) return Channel(*configured);
  // FNV-1a 64-bit.
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : identity) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return Channel(static_cast<unsigned>(h & (Channel::kCount - 1)));
}

SpoilerScan build_spoiler_groups(World& world, ActorId actor, Channel channel,
                                 std::uint64_t region_pages) {
  const CacheGeometry& geo = world.cache().geometry();
  if (region_pages * kPageSize < 2 * geo.byte_size()) {
    throw std::invalid_argument(
        "region must be at least twice the cache size");
  }

  const PageMapping& mapping = world.mapping(actor);
  const std::uint64_t offset = channel.page_offset();

  SpoilerScan scan;
  scan.region_pages = region_pages;
  scan.channel = channel;

  std::vector<bool> claimed(region_pages, false);
  for (std::uint64_t p = 0; p < region_pages; ++p) {
    if (!mapping.mapped(p)) {
      claimed[p] = true;
      scan.unmapped_pages.push_back(p);
    }
  }

  for (std::uint64_t p = 0; p < region_pages; ++p) {
    if (claimed[p]) continue;
    claimed[p] = true;
    SpoilerGroup group;
    const VirtualAddress leader{p * kPageSize + offset};
    group.members.push_back(leader);
    for (std::uint64_t q = p + 1; q < region_pages; ++q) {
      if (claimed[q]) continue;
      const VirtualAddress candidate{q * kPageSize + offset};
      if (alias20(mapping, leader, candidate)) {
        claimed[q] = true;
        group.members.push_back(candidate);
      }
    }
    scan.groups.push_back(std::move(group));
  }
  return scan;
}

std::vector<CacheGroup> regroup_to_cache_groups(World& world, ActorId actor,
                                                const SpoilerScan& scan) {
  const CacheGeometry& geo = world.cache().geometry();
  const std::size_t want_groups = geo.channel_sets();
  const auto& spoilers = scan.groups;
  if (spoilers.size() < want_groups) {
    throw MemoryManipulationError(
        "spoiler scan yielded " + std::to_string(spoilers.size()) +
        " groups, fewer than the " + std::to_string(want_groups) +
        " cache sets of the channel");
  }

  ChannelScratch scratch(world.cache(), scan.channel);
  std::vector<bool> grouped(spoilers.size(), false);
  std::vector<CacheGroup> groups;

  auto group_members = [&](const CacheGroup& g) {
    std::vector<VirtualAddress> out;
    for (std::size_t idx : g.spoiler_indices) {
      out.insert(out.end(), spoilers[idx].members.begin(),
                 spoilers[idx].members.end());
    }
    return out;
  };

  // Stage one: seed a group per cache set, shrinking a working copy of the
  // ungrouped spoilers until removing one more member stops the eviction of
  // the seed; from that point on every same-set spoiler is load-bearing and
  // joins the group. A candidate an existing group already evicts belongs to
  // that group, not at the head of a new one; without this check a spoiler
  // the shrink loop discarded could found a second group for a cache set
  // that already has one, and the audit pass would then see every remaining
  // straggler of that set claimed twice. Nothing orders the spoilers by
  // cache set, so the check cannot be skipped even for early seeds.
  for (std::size_t seed = 0;
       seed < spoilers.size() && groups.size() < want_groups; ++seed) {
    if (grouped[seed]) continue;
    bool claimed_by_existing = false;
    for (auto& g : groups) {
      if (eviction_probe(world, actor, scratch, spoilers[seed].members,
                         group_members(g))) {
        g.spoiler_indices.push_back(seed);
        grouped[seed] = true;
        claimed_by_existing = true;
        break;
      }
    }
    if (claimed_by_existing) continue;
    grouped[seed] = true;
    CacheGroup group;
    group.spoiler_indices.push_back(seed);

    std::vector<std::size_t> copy_indices;
    for (std::size_t j = 0; j < spoilers.size(); ++j) {
      if (!grouped[j]) copy_indices.push_back(j);
    }
    std::vector<bool> present(spoilers.size(), false);
    for (std::size_t j : copy_indices) present[j] = true;

    for (std::size_t j : copy_indices) {
      present[j] = false;
      const auto accessors = concat_members(spoilers, copy_indices, present);
      if (!eviction_probe(world, actor, scratch, spoilers[seed].members,
                          accessors)) {
        group.spoiler_indices.push_back(j);
        grouped[j] = true;
        present[j] = true;  // write the load-bearing member back
      }
    }
    groups.push_back(std::move(group));
  }

  if (groups.size() < want_groups) {
    throw MemoryManipulationError("only " + std::to_string(groups.size()) +
                                  " distinct cache sets discovered");
  }

  // Stage two: audit pass. Every spoiler group the shrink loop discarded is
  // matched against the seeded groups by a forward eviction test; exactly
  // one group must claim it. Iterate to a fixpoint so freshly grown groups
  // can claim stragglers.
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t j = 0; j < spoilers.size(); ++j) {
      if (grouped[j]) continue;
      std::optional<std::size_t> claimant;
      bool conflict = false;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        if (eviction_probe(world, actor, scratch, spoilers[j].members,
                           group_members(groups[g]))) {
          if (claimant) {
            conflict = true;
            break;
          }
          claimant = g;
        }
      }
      if (conflict) {
        throw MemoryManipulationError(
            "spoiler group claimed by multiple cache sets");
      }
      if (claimant) {
        groups[*claimant].spoiler_indices.push_back(j);
        grouped[j] = true;
        progress = true;
      }
    }
  }
  for (std::size_t j = 0; j < spoilers.size(); ++j) {
    if (!grouped[j]) {
      throw MemoryManipulationError(
          "spoiler group matched no discovered cache set");
    }
  }

  for (auto& g : groups) {
    std::sort(g.spoiler_indices.begin(), g.spoiler_indices.end());
    g.members = group_members(g);
  }
  scratch.restore();
  return groups;
}

std::vector<EvictionSet> reduce(World& world, ActorId actor,
                                const CacheGroup& group, Channel channel) {
  const CacheGeometry& geo = world.cache().geometry();
  const unsigned ways = geo.ways;
  const unsigned slices = geo.slices;

  for (VirtualAddress va : group.members) {
    // The in-page offset carries the channel; a member that lost it means
    // the address list was tampered with.
    if (va.bits(kLineOffsetBits, kPageOffsetBits - 1) != channel.value()) {
      throw MemoryManipulationError("group member lost its channel offset");
    }
  }

  ChannelScratch scratch(world.cache(), channel);
  std::vector<EvictionSet> sets;

  for (std::size_t lead_idx = 0;
       lead_idx < group.members.size() && sets.size() < slices; ++lead_idx) {
    const VirtualAddress lead = group.members[lead_idx];

    // Skip leads whose slice is already covered by an extracted set.
    bool covered = false;
    for (const auto& es : sets) {
      if (eviction_probe(world, actor, scratch, {&lead, 1}, es.members)) {
        covered = true;
        break;
      }
    }
    if (covered) continue;

    std::vector<VirtualAddress> candidates;
    candidates.reserve(group.members.size() - 1);
    for (std::size_t k = 0; k < group.members.size(); ++k) {
      if (k != lead_idx) candidates.push_back(group.members[k]);
    }
    if (!eviction_probe(world, actor, scratch, {&lead, 1}, candidates)) {
      // Not enough same-slice material for this lead at all.
      continue;
    }

    // Leave-one-out: drop everything whose removal keeps the lead evicted.
    for (std::size_t k = 0; k < candidates.size();) {
      std::vector<VirtualAddress> trimmed;
      trimmed.reserve(candidates.size() - 1);
      for (std::size_t t = 0; t < candidates.size(); ++t) {
        if (t != k) trimmed.push_back(candidates[t]);
      }
      if (eviction_probe(world, actor, scratch, {&lead, 1}, trimmed)) {
        candidates = std::move(trimmed);
      } else {
        ++k;
      }
    }
    if (candidates.size() != ways) {
      throw MemoryManipulationError(
          "reduction stopped at " + std::to_string(candidates.size()) +
          " members instead of the associativity");
    }
    sets.push_back(EvictionSet{std::move(candidates)});
  }

  if (sets.size() != slices) {
    throw MemoryManipulationError(
        "could not cover every slice of the cache set: got " +
        std::to_string(sets.size()) + " of " + std::to_string(slices));
  }
  scratch.restore();
  return sets;
}

CoverageReport verify_coverage(const SpoilerScan& scan) {
  CoverageReport report;
  report.group_count = scan.groups.size();
  report.expected_groups = expected_spoiler_groups(scan.region_pages);
  report.gaps = scan.unmapped_pages;

  constexpr std::uint64_t kAliasPeriod = 1ull << 20;
  for (std::size_t g = 0; g < scan.groups.size(); ++g) {
    const auto& m = scan.groups[g].members;
    report.min_group_size =
        g == 0 ? m.size() : std::min(report.min_group_size, m.size());
    report.max_group_size = std::max(report.max_group_size, m.size());
    for (std::size_t k = 1; k < m.size(); ++k) {
      if (m[k].value - m[k - 1].value != kAliasPeriod) {
        report.spacing_anomalies.emplace_back(g, k);
      }
    }
  }
  report.manipulation_evidence = !report.gaps.empty() ||
                                 report.group_count < report.expected_groups ||
                                 !report.spacing_anomalies.empty();
  return report;
}

CoverageReport verify_coverage(const SpoilerScan& scan,
                               std::span<const CacheGroup> cache_groups,
                               const CacheGeometry& geometry) {
  CoverageReport report = verify_coverage(scan);
  report.cache_group_count = cache_groups.size();
  report.expected_cache_groups = geometry.channel_sets();

  std::vector<unsigned> claims(scan.groups.size(), 0);
  for (const CacheGroup& group : cache_groups) {
    for (std::size_t idx : group.spoiler_indices) {
      if (idx < claims.size()) ++claims[idx];
    }
  }
  for (std::size_t idx = 0; idx < claims.size(); ++idx) {
    if (claims[idx] != 1) report.unpartitioned_spoilers.push_back(idx);
  }
  report.manipulation_evidence =
      report.manipulation_evidence ||
      report.cache_group_count != report.expected_cache_groups ||
      !report.unpartitioned_spoilers.empty();
  return report;
}

std::string CoverageReport::summary() const {
  std::ostringstream os;
  os << "groups=" << group_count << "/" << expected_groups
     << " sizes=[" << min_group_size << "," << max_group_size << "]"
     << " gaps=" << gaps.size()
     << " spacing_anomalies=" << spacing_anomalies.size();
  if (expected_cache_groups != 0) {
    os << " cache_groups=" << cache_group_count << "/" << expected_cache_groups
       << " unpartitioned=" << unpartitioned_spoilers.size();
  }
  os << (manipulation_evidence ? " MANIPULATION-EVIDENCE" : " clean");
  return os.str();
}

MonitoringSet build_monitoring_set(World& world, ActorId actor,
                                   const BuildOptions& options) {
  const Channel channel = select_channel(options.channel, options.identity);
  const SpoilerScan scan =
      build_spoiler_groups(world, actor, channel, options.region_pages);
  if (!scan.unmapped_pages.empty()) {
    throw MemoryManipulationError("unmapped pages inside the enclave region");
  }
  if (scan.groups.size() < expected_spoiler_groups(scan.region_pages)) {
    throw MemoryManipulationError("missing spoiler aliasing classes");
  }

  const auto groups = regroup_to_cache_groups(world, actor, scan);

  MonitoringSet ms;
  ms.channel = channel;
  ms.ways = world.cache().geometry().ways;
  for (const auto& group : groups) {
    auto per_slice = reduce(world, actor, group, channel);
    for (auto& es : per_slice) ms.sets.push_back(std::move(es));
  }

  const auto want = static_cast<std::size_t>(
                        world.cache().geometry().channel_sets()) *
                    world.cache().geometry().slices;
  if (ms.sets.size() != want) {
    throw MemoryManipulationError("monitoring set does not span the channel");
  }
  return ms;
}

std::string MonitoringSet::to_json() const {
  json sets_j = json::array();
  for (const auto& es : sets) {
    json members = json::array();
    for (VirtualAddress va : es.members) members.push_back(va.value);
    sets_j.push_back({{"members", members}});
  }
  return json{{"channel", channel.value()}, {"ways", ways}, {"sets", sets_j}}
      .dump(2);
}

MonitoringSet MonitoringSet::from_json(const std::string& text) {
  const json j = json::parse(text);
  MonitoringSet ms;
  ms.channel = Channel(j.at("channel").get<unsigned>());
  ms.ways = j.at("ways").get<unsigned>();
  for (const auto& set_j : j.at("sets")) {
    EvictionSet es;
    for (const auto& v : set_j.at("members")) {
      es.members.push_back(VirtualAddress{v.get<std::uint64_t>()});
    }
    ms.sets.push_back(std::move(es));
  }
  return ms;
}

}  // namespace clonesim
