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

#include "clonesim/noise.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "clonesim/cache.hpp"

namespace clonesim {

NoiseKind noise_kind_from_string(std::string_view name) {
  if (name == "idle") return NoiseKind::Idle;
  if (name == "streaming") return NoiseKind::Streaming;
  if (name == "random") return NoiseKind::Random;
  if (name == "bursty") return NoiseKind::Bursty;
  throw std::invalid_argument("unknown workload: " + std::string(name));
}

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Idle: return "idle";
    case NoiseKind::Streaming: return "streaming";
    case NoiseKind::Random: return "random";
    case NoiseKind::Bursty: return "bursty";
  }
  return "?";
}

NoiseActor::NoiseActor(ActorId id, NoiseProfile profile, std::uint64_t seed,
                       std::uint64_t turns)
    : SimActor(id), profile_(profile), rng_(seed), turns_left_(turns) {}

bool NoiseActor::allowed(VirtualAddress va) const {
  if (!profile_.exclude_channel) return true;
  return bitops::field(va.page_offset(), kLineOffsetBits,
                       kPageOffsetBits - 1) != *profile_.exclude_channel;
}

VirtualAddress NoiseActor::next_stream_line(World& world) {
  const std::uint64_t lines =
      world.mapping(id()).size() * (kPageSize / kLineSize);
  VirtualAddress va{(cursor_ % lines) * kLineSize};
  ++cursor_;
  return va;
}

VirtualAddress NoiseActor::random_line(World& world) {
  const std::uint64_t lines =
      world.mapping(id()).size() * (kPageSize / kLineSize);
  return VirtualAddress{rng_.uniform(lines) * kLineSize};
}

bool NoiseActor::turn(World& world) {
  if (turns_left_ == 0) return false;
  --turns_left_;
  std::uint64_t batch = 0;
  switch (profile_.kind) {
    case NoiseKind::Idle:
      batch = 0;
      break;
    case NoiseKind::Streaming:
    case NoiseKind::Random:
      batch = static_cast<std::uint64_t>(std::llround(profile_.intensity));
      break;
    case NoiseKind::Bursty:
      // Quiet three turns out of four; bursts carry the whole budget so the
      // long-run rate still tracks the intensity.
      batch = rng_.bernoulli(0.25)
                  ? rng_.poisson(4.0 * profile_.intensity)
                  : 0;
      break;
  }
  for (std::uint64_t i = 0; i < batch; ++i) {
    VirtualAddress va = profile_.kind == NoiseKind::Streaming
                            ? next_stream_line(world)
                            : random_line(world);
    if (!allowed(va)) continue;
    world.raw_access(id(), va);
    ++accesses_;
  }
  return turns_left_ > 0;
}

PolluterActor::PolluterActor(ActorId id, Channel channel, double fraction,
                             std::uint64_t turns)
    : SimActor(id), channel_(channel), fraction_(fraction),
      turns_left_(turns) {
  if (fraction_ < 0.0 || fraction_ > 1.0) {
    throw std::invalid_argument("polluter: fraction must be in [0, 1]");
  }
}

unsigned PolluterActor::prefix_lines(double fraction, unsigned ways) {
  return static_cast<unsigned>(std::lround(fraction * ways));
}

void PolluterActor::build_pool(World& world) {
  const CacheGeometry& geo = world.cache().geometry();
  const std::size_t buckets =
      static_cast<std::size_t>(geo.channel_sets()) * geo.slices;
  pool_.assign(buckets, {});
  const PageMapping& mapping = world.mapping(id());
  // The polluter plays the OS: it reads its own translations directly and
  // picks, per (set, slice), `ways` of its lines inside the victim channel.
  std::size_t filled = 0;
  for (const auto& [vpn, ppn] : mapping.entries()) {
    const VirtualAddress va{(vpn << kPageOffsetBits) | channel_.page_offset()};
    const PhysicalAddress pa{(ppn << kPageOffsetBits) | channel_.page_offset()};
    const DecomposedAddress loc = decompose(pa, geo);
    const std::size_t channel_row = loc.set_index >> kChannelBits;
    const std::size_t bucket = channel_row * geo.slices + loc.slice;
    if (pool_[bucket].size() < geo.ways) {
      pool_[bucket].push_back(va);
      if (pool_[bucket].size() == geo.ways) ++filled;
    }
    if (filled == buckets) break;
  }
  if (filled != buckets) {
    throw SimError("polluter: region too small to cover the channel");
  }
  built_ = true;
}

bool PolluterActor::turn(World& world) {
  if (turns_left_ == 0) return false;
  --turns_left_;
  if (!built_) build_pool(world);
  const unsigned depth =
      prefix_lines(fraction_, world.cache().geometry().ways);
  for (const auto& bucket : pool_) {
    for (unsigned j = 0; j < depth; ++j) {
      world.raw_access(id(), bucket[j]);
    }
  }
  return turns_left_ > 0;
}

}  // namespace clonesim
