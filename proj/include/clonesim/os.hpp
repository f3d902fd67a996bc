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
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "clonesim/types.hpp"

namespace clonesim {

// Page-granular virtual-to-physical mapping for one actor. The OS chooses
// it freely; the enclave can only observe it through probe side effects.
class PageMapping {
 public:
  static constexpr std::uint64_t page_size = kPageSize;

  PageMapping() = default;

  void map(std::uint64_t vpn, std::uint64_t ppn);
  std::uint64_t ppn_of(std::uint64_t vpn) const;  // throws UnmappedAddress
  bool mapped(std::uint64_t vpn) const;
  void unmap(std::uint64_t vpn);

  PhysicalAddress translate(VirtualAddress va) const;

  // Swap the frames behind two mapped pages; injectivity is preserved.
  void swap_pair(std::uint64_t vpn_a, std::uint64_t vpn_b);
  // Point one page at an explicit frame; throws if the frame is already in
  // use by another page of this mapping.
  void remap(std::uint64_t vpn, std::uint64_t ppn);

  bool injective() const;
  std::size_t size() const { return entries_.size(); }
  const std::map<std::uint64_t, std::uint64_t>& entries() const { return entries_; }

 private:
  std::map<std::uint64_t, std::uint64_t> entries_;  // vpn -> ppn
};

// va1 and va2 alias when their translations agree on physical bits 0..19 --
// the hazard window a store/load false dependency reveals.
bool alias20(const PageMapping& mapping, VirtualAddress va1, VirtualAddress va2);

struct LinearPolicy {
  std::uint64_t base_ppn = 0;
};
struct PermutedPolicy {
  std::uint64_t seed = 0;
  std::uint64_t base_ppn = 0;
};

// Script vocabulary. Mapping actions name the actor whose mapping they hit;
// the remaining actions perturb shared platform state.
struct SwapPairAction {
  ActorId actor = 0;
  std::uint64_t vpn_a = 0;
  std::uint64_t vpn_b = 0;
};
struct RemapAction {
  ActorId actor = 0;
  std::uint64_t vpn = 0;
  std::uint64_t ppn = 0;
};
struct PolluteChannelAction {
  std::uint64_t lines = 0;   // lines touched per round within the victim channel
  SimTime interval = 0;      // sim-time between rounds
};
struct SlowClockAction {
  double factor = 1.0;       // counting thread runs 1/factor as fast; 0 stalls it
  SimTime start = 0;
  SimTime duration = 0;      // 0 = open-ended
};
struct StepScheduleAction {
  std::vector<ActorId> order;  // turn sequence consumed by the scheduler
};

using AdversaryAction = std::variant<SwapPairAction, RemapAction,
                                     PolluteChannelAction, SlowClockAction,
                                     StepScheduleAction>;

struct AdversaryScript {
  std::vector<AdversaryAction> actions;

  std::string to_json() const;
  static AdversaryScript from_json(const std::string& text);
};

// An adversarial layout starts linear and applies the script's mapping
// actions (swaps/remaps) on top; non-mapping actions are rejected here.
struct AdversarialPolicy {
  std::uint64_t base_ppn = 0;
  AdversaryScript script;
};

using AllocationPolicy =
    std::variant<LinearPolicy, PermutedPolicy, AdversarialPolicy>;

// Allocate n contiguous virtual pages [0, n) backed per policy. Throws
// PhysicalSpaceExhausted when frames would exceed the 34-bit space.
PageMapping allocate(const AllocationPolicy& policy, std::uint64_t n_pages);

}  // namespace clonesim
