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

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clonesim/detector.hpp"
#include "clonesim/world.hpp"

namespace clonesim {

// Platform-backed counter: survives enclave restarts, strictly increasing.
class MonotonicCounter {
 public:
  std::uint64_t read() const { return value_; }
  std::uint64_t increment() { return ++value_; }

 private:
  std::uint64_t value_ = 0;
};

// Sealed storage keyed by enclave identity: every instance of the same
// binary on this platform seals and unseals the same records -- which is
// exactly what clones exploit.
class SealedStore {
 public:
  void seal(const std::string& identity, const std::string& key,
            std::string value);
  std::optional<std::string> unseal(const std::string& identity,
                                    const std::string& key) const;
  std::size_t seal_count(const std::string& identity) const;

 private:
  std::map<std::pair<std::string, std::string>, std::string> records_;
  std::map<std::string, std::size_t> seals_;
};

// One physical machine: shared cache world, hardware counter, sealed store.
struct Platform {
  World world;
  MonotonicCounter counter;
  SealedStore store;

  Platform(CacheGeometry geo, LatencyModel latency, double tick_rate,
           std::uint64_t seed)
      : world(std::move(geo), latency, tick_rate, seed) {}
};

enum class ScenarioKind { BiSgx, Fim, ForKvs, Bug };

ScenarioKind scenario_from_string(std::string_view name);  // throws on unknown
const char* to_string(ScenarioKind kind);

struct AttackOutcome {
  bool forked = false;    // divergent state or behaviour was accepted
  bool detected = false;  // a clone guard flagged the sibling
  bool aborted = false;   // a clone refused to finish its protocol
  std::string description;
};

struct ScenarioOptions {
  bool with_detector = false;
  DetectorConfig detector;  // guard settings; instances stays 1
  BuildOptions build;
  std::uint64_t region_pages = 0;  // 0 = build.region_pages
};

// The two clones of the counter-protected sealing service own two counter
// operations each: a read, and an increment followed by a seal.
enum class BisgxOp { ARead, ASeal, BRead, BSeal };

// Every ordering of the four operations (4! = 24). A clone scheduled to
// seal before its read atomically observes the pre-increment counter value
// instead, so each ordering is executable.
std::vector<std::array<BisgxOp, 4>> bisgx_orderings();

// True when both clones run read before increment+seal -- the orderings a
// sequential service can actually exhibit.
bool bisgx_program_ordered(std::span<const BisgxOp> ordering);

inline constexpr ActorId kCloneA = 1;
inline constexpr ActorId kCloneB = 2;

// Counter-gated sealing service: each clone reads the counter, derives the
// next state and seals it. Orderings where both clones observe the same
// counter value fork the sealed history.
AttackOutcome run_bisgx_attack(Platform& platform,
                               std::span<const BisgxOp> ordering,
                               const ScenarioOptions& options);

// In-memory key-value service behind a request balancer: two clients read
// the same key through different clones and observe conflicting values.
AttackOutcome run_fim_attack(Platform& platform,
                             const ScenarioOptions& options);

// Persistent key-value store with counter-checked freshness: a clone that
// passed its check inside the fork window serves a stale value.
AttackOutcome run_forkvs_attack(Platform& platform,
                                const ScenarioOptions& options);

// Batching proxy whose privacy rests on the anonymity-set size: the
// adversarial balancer isolates the target's message on one clone and tops
// the batch up with its own cover traffic, linking the message to its
// sender (anonymity set of one).
AttackOutcome run_bug_attack(Platform& platform,
                             const ScenarioOptions& options);

// Dispatcher over fresh platforms from the factory; BiSgx runs every
// ordering on its own platform and aggregates the outcomes.
using PlatformFactory = std::function<Platform()>;
AttackOutcome run_scenario(ScenarioKind kind, const PlatformFactory& factory,
                           const ScenarioOptions& options);

}  // namespace clonesim
