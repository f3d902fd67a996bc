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

#include "clonesim/world.hpp"

namespace clonesim {

World::World(CacheGeometry geo, LatencyModel latency, double tick_rate,
             std::uint64_t seed)
    : cache_(std::move(geo)),
      latency_(latency),
      clock_(tick_rate),
      rng_(seed) {
  latency_.validate();
}

void World::set_mapping(ActorId actor, PageMapping mapping) {
  mappings_[actor] = std::move(mapping);
}

PageMapping& World::mapping(ActorId actor) {
  auto it = mappings_.find(actor);
  if (it == mappings_.end()) {
    throw SimError("no mapping for actor " + std::to_string(actor));
  }
  return it->second;
}

const PageMapping& World::mapping(ActorId actor) const {
  auto it = mappings_.find(actor);
  if (it == mappings_.end()) {
    throw SimError("no mapping for actor " + std::to_string(actor));
  }
  return it->second;
}

bool World::has_mapping(ActorId actor) const { return mappings_.count(actor) != 0; }

World::Measured World::measured_access(ActorId actor, VirtualAddress va) {
  const PhysicalAddress pa = mapping(actor).translate(va);
  const bool miss = !cache_.access(pa, actor).hit;
  const double latency = latency_.sample(miss, rng_);
  const double reading = clock_.interval_reading(latency, now_);
  advance(latency);
  return {.miss = miss, .reading = reading};
}

bool World::raw_access(ActorId actor, VirtualAddress va) {
  const PhysicalAddress pa = mapping(actor).translate(va);
  const bool miss = !cache_.access(pa, actor).hit;
  advance(miss ? latency_.miss_mean : latency_.hit_mean);
  return miss;
}

void apply_adversary(World& world, const AdversaryScript& script) {
  for (const auto& action : script.actions) {
    if (const auto* swap = std::get_if<SwapPairAction>(&action)) {
      world.mapping(swap->actor).swap_pair(swap->vpn_a, swap->vpn_b);
    } else if (const auto* rm = std::get_if<RemapAction>(&action)) {
      world.mapping(rm->actor).remap(rm->vpn, rm->ppn);
    } else if (const auto* pollute = std::get_if<PolluteChannelAction>(&action)) {
      if (pollute->lines > 0) world.adversary().pollution = *pollute;
    } else if (const auto* slow = std::get_if<SlowClockAction>(&action)) {
      ClockOracle::Perturbation p;
      p.start = world.now() + slow->start;
      p.end = slow->duration > 0 ? p.start + slow->duration : p.start;
      p.scale = slow->factor == 0.0 ? 0.0 : 1.0 / slow->factor;
      world.clock().add_perturbation(p);
    } else if (const auto* sched = std::get_if<StepScheduleAction>(&action)) {
      world.adversary().schedule = sched->order;
    }
  }
}

void Scheduler::add(SimActor& actor) { actors_.push_back(&actor); }

void Scheduler::run(World& world, std::size_t max_turns) {
  std::vector<bool> done(actors_.size(), false);
  std::size_t remaining = actors_.size();
  std::size_t turns = 0;
  while (remaining > 0 && turns < max_turns) {
    for (std::size_t i = 0; i < actors_.size() && turns < max_turns; ++i) {
      if (done[i]) continue;
      ++turns;
      if (!actors_[i]->turn(world)) {
        done[i] = true;
        --remaining;
      }
    }
  }
}

void Scheduler::run_script(World& world, std::span<const ActorId> order) {
  for (ActorId id : order) {
    SimActor* actor = nullptr;
    for (SimActor* a : actors_) {
      if (a->id() == id) {
        actor = a;
        break;
      }
    }
    if (actor == nullptr) {
      throw SimError("schedule names unknown actor " + std::to_string(id));
    }
    actor->turn(world);
  }
}

}  // namespace clonesim
