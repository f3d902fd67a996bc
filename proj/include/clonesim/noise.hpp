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
#include <string_view>
#include <vector>

#include "clonesim/rng.hpp"
#include "clonesim/types.hpp"
#include "clonesim/world.hpp"

namespace clonesim {

enum class NoiseKind { Idle, Streaming, Random, Bursty };

NoiseKind noise_kind_from_string(std::string_view name);  // throws on unknown
const char* to_string(NoiseKind kind);

struct NoiseProfile {
  NoiseKind kind = NoiseKind::Idle;
  double intensity = 0.0;  // line accesses per turn
  // Skip lines whose page-offset bits select this channel, leaving its
  // sets untouched.
  std::optional<unsigned> exclude_channel;
};

// Background tenant driving its own mapped region: sequential streams,
// uniform random lines, or bursts. The caller installs the mapping before
// the first turn.
class NoiseActor : public SimActor {
 public:
  NoiseActor(ActorId id, NoiseProfile profile, std::uint64_t seed,
             std::uint64_t turns);

  bool turn(World& world) override;
  std::uint64_t accesses_issued() const { return accesses_; }

 private:
  VirtualAddress next_stream_line(World& world);
  VirtualAddress random_line(World& world);
  bool allowed(VirtualAddress va) const;

  NoiseProfile profile_;
  Rng rng_;
  std::uint64_t turns_left_;
  std::uint64_t cursor_ = 0;  // streaming position in lines
  std::uint64_t accesses_ = 0;
};

// OS-grade polluter: holds a fixed pool of `ways` own lines behind every
// (set, slice) of the victim channel and touches the first
// round(fraction * ways) of each pool every turn. Keeping the prefix fixed
// makes the occupancy, and thus the false-positive behaviour, deterministic.
class PolluterActor : public SimActor {
 public:
  PolluterActor(ActorId id, Channel channel, double fraction,
                std::uint64_t turns);

  bool turn(World& world) override;
  // Lines touched per set per turn for a given pool depth.
  static unsigned prefix_lines(double fraction, unsigned ways);

 private:
  void build_pool(World& world);

  Channel channel_;
  double fraction_;
  std::uint64_t turns_left_;
  std::vector<std::vector<VirtualAddress>> pool_;  // per (set, slice)
  bool built_ = false;
};

}  // namespace clonesim
