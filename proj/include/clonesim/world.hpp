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

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "clonesim/cache.hpp"
#include "clonesim/os.hpp"
#include "clonesim/rng.hpp"
#include "clonesim/timing.hpp"

namespace clonesim {

// Shared platform state: the cache, per-actor mappings, the counting-thread
// clock and global sim time. Every cache access flows through here.
class World {
 public:
  World(CacheGeometry geo, LatencyModel latency, double tick_rate,
        std::uint64_t seed);

  CacheState& cache() { return cache_; }
  const CacheState& cache() const { return cache_; }
  ClockOracle& clock() { return clock_; }
  const ClockOracle& clock() const { return clock_; }
  const LatencyModel& latency() const { return latency_; }
  Rng& rng() { return rng_; }

  SimTime now() const { return now_; }
  void advance(SimTime dt) { now_ += dt; }

  void set_mapping(ActorId actor, PageMapping mapping);
  PageMapping& mapping(ActorId actor);                 // throws on unknown actor
  const PageMapping& mapping(ActorId actor) const;
  bool has_mapping(ActorId actor) const;

  struct Measured {
    bool miss = false;       // ground truth from the cache model
    double reading = 0.0;    // counter ticks the measuring thread observed
  };

  // Timed access: the actor measures the read through the counting thread.
  Measured measured_access(ActorId actor, VirtualAddress va);

  // Untimed access (workloads, priming): advances time by the mean latency
  // of the true outcome. Returns true on miss.
  bool raw_access(ActorId actor, VirtualAddress va);

  // Adversary state installed by apply_adversary and consumed by harnesses.
  struct AdversaryState {
    std::optional<PolluteChannelAction> pollution;
    std::vector<ActorId> schedule;  // empty = round-robin
  };
  AdversaryState& adversary() { return adversary_; }
  const AdversaryState& adversary() const { return adversary_; }

 private:
  CacheState cache_;
  LatencyModel latency_;
  ClockOracle clock_;
  Rng rng_;
  SimTime now_ = 0;
  std::map<ActorId, PageMapping> mappings_;
  AdversaryState adversary_;
};

// Mutates the world per the script: mapping actions rewrite the named
// actor's page tables, clock actions perturb the counting thread, pollution
// and schedule actions are parked for the scenario driver.
void apply_adversary(World& world, const AdversaryScript& script);

class SimActor {
 public:
  explicit SimActor(ActorId id) : id_(id) {}
  virtual ~SimActor() = default;

  ActorId id() const { return id_; }
  // One bounded unit of work (a probe pass, a protocol step, a noise batch).
  // Returns false once the actor has nothing left to do.
  virtual bool turn(World& world) = 0;

 private:
  ActorId id_;
};

// Cooperative scheduler over actor turns. Interleavings are expressed as
// explicit turn sequences; round-robin is the default.
class Scheduler {
 public:
  void add(SimActor& actor);

  // Round-robin until every actor finished or the turn budget runs out.
  void run(World& world, std::size_t max_turns);

  // Fixed interleaving; throws SimError on an id with no registered actor.
  void run_script(World& world, std::span<const ActorId> order);

 private:
  std::vector<SimActor*> actors_;
};

}  // namespace clonesim
