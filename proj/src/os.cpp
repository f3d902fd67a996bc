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

#include "clonesim/os.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "clonesim/rng.hpp"

namespace clonesim {

using json = nlohmann::json;

void PageMapping::map(std::uint64_t vpn, std::uint64_t ppn) {
  if (ppn >= kMaxPhysicalPages) {
    throw PhysicalSpaceExhausted("frame beyond 34-bit physical space");
  }
  entries_[vpn] = ppn;
}

std::uint64_t PageMapping::ppn_of(std::uint64_t vpn) const {
  auto it = entries_.find(vpn);
  if (it == entries_.end()) {
    throw UnmappedAddress("vpn " + std::to_string(vpn) + " is not mapped");
  }
  return it->second;
}

bool PageMapping::mapped(std::uint64_t vpn) const { return entries_.count(vpn) != 0; }

void PageMapping::unmap(std::uint64_t vpn) { entries_.erase(vpn); }

PhysicalAddress PageMapping::translate(VirtualAddress va) const {
  const std::uint64_t ppn = ppn_of(va.page_number());
  return PhysicalAddress{(ppn << kPageOffsetBits) | va.page_offset()};
}

void PageMapping::swap_pair(std::uint64_t vpn_a, std::uint64_t vpn_b) {
  const std::uint64_t pa = ppn_of(vpn_a);
  const std::uint64_t pb = ppn_of(vpn_b);
  entries_[vpn_a] = pb;
  entries_[vpn_b] = pa;
}

void PageMapping::remap(std::uint64_t vpn, std::uint64_t ppn) {
  if (ppn >= kMaxPhysicalPages) {
    throw PhysicalSpaceExhausted("frame beyond 34-bit physical space");
  }
  for (const auto& [v, p] : entries_) {
    if (p == ppn && v != vpn) {
      throw SimError("remap would map two pages to one frame");
    }
  }
  if (!mapped(vpn)) {
    throw UnmappedAddress("remap of unmapped vpn " + std::to_string(vpn));
  }
  entries_[vpn] = ppn;
}

bool PageMapping::injective() const {
  std::set<std::uint64_t> frames;
  for (const auto& [v, p] : entries_) {
    if (!frames.insert(p).second) return false;
  }
  return true;
}

bool alias20(const PageMapping& mapping, VirtualAddress va1, VirtualAddress va2) {
  const PhysicalAddress p1 = mapping.translate(va1);
  const PhysicalAddress p2 = mapping.translate(va2);
  return p1.bits(0, 19) == p2.bits(0, 19);
}

namespace {

PageMapping allocate_linear(std::uint64_t base, std::uint64_t n_pages) {
  if (base + n_pages > kMaxPhysicalPages) {
    throw PhysicalSpaceExhausted("linear allocation exceeds physical space");
  }
  PageMapping m;
  for (std::uint64_t v = 0; v < n_pages; ++v) m.map(v, base + v);
  return m;
}

}  // namespace

PageMapping allocate(const AllocationPolicy& policy, std::uint64_t n_pages) {
  if (const auto* lin = std::get_if<LinearPolicy>(&policy)) {
    return allocate_linear(lin->base_ppn, n_pages);
  }
  if (const auto* perm = std::get_if<PermutedPolicy>(&policy)) {
    if (perm->base_ppn + n_pages > kMaxPhysicalPages) {
      throw PhysicalSpaceExhausted("permuted allocation exceeds physical space");
    }
    std::vector<std::uint64_t> frames(n_pages);
    std::iota(frames.begin(), frames.end(), perm->base_ppn);
    Rng rng(perm->seed);
    rng.shuffle(frames);
    PageMapping m;
    for (std::uint64_t v = 0; v < n_pages; ++v) m.map(v, frames[v]);
    return m;
  }
  const auto& adv = std::get<AdversarialPolicy>(policy);
  PageMapping m = allocate_linear(adv.base_ppn, n_pages);
  for (const auto& action : adv.script.actions) {
    if (const auto* swap = std::get_if<SwapPairAction>(&action)) {
      m.swap_pair(swap->vpn_a, swap->vpn_b);
    } else if (const auto* rm = std::get_if<RemapAction>(&action)) {
      m.remap(rm->vpn, rm->ppn);
    } else {
      throw SimError("adversarial allocation accepts only mapping actions");
    }
  }
  return m;
}

namespace {

json action_to_json(const AdversaryAction& action) {
  json j;
  if (const auto* a = std::get_if<SwapPairAction>(&action)) {
    j = {{"action", "swap_pair"},
         {"actor", a->actor},
         {"vpn_a", a->vpn_a},
         {"vpn_b", a->vpn_b}};
  } else if (const auto* a = std::get_if<RemapAction>(&action)) {
    j = {{"action", "remap"}, {"actor", a->actor}, {"vpn", a->vpn}, {"ppn", a->ppn}};
  } else if (const auto* a = std::get_if<PolluteChannelAction>(&action)) {
    j = {{"action", "pollute_channel"},
         {"lines", a->lines},
         {"interval", a->interval}};
  } else if (const auto* a = std::get_if<SlowClockAction>(&action)) {
    j = {{"action", "slow_clock"},
         {"factor", a->factor},
         {"start", a->start},
         {"duration", a->duration}};
  } else if (const auto* a = std::get_if<StepScheduleAction>(&action)) {
    j = {{"action", "step_schedule"}, {"order", a->order}};
  }
  return j;
}

AdversaryAction action_from_json(const json& j) {
  const std::string kind = j.at("action").get<std::string>();
  if (kind == "swap_pair") {
    return SwapPairAction{j.value("actor", ActorId{0}),
                          j.at("vpn_a").get<std::uint64_t>(),
                          j.at("vpn_b").get<std::uint64_t>()};
  }
  if (kind == "remap") {
    return RemapAction{j.value("actor", ActorId{0}),
                       j.at("vpn").get<std::uint64_t>(),
                       j.at("ppn").get<std::uint64_t>()};
  }
  if (kind == "pollute_channel") {
    return PolluteChannelAction{j.at("lines").get<std::uint64_t>(),
                                j.at("interval").get<SimTime>()};
  }
  if (kind == "slow_clock") {
    return SlowClockAction{j.at("factor").get<double>(),
                           j.value("start", SimTime{0}),
                           j.value("duration", SimTime{0})};
  }
  if (kind == "step_schedule") {
    return StepScheduleAction{j.at("order").get<std::vector<ActorId>>()};
  }
  throw SimError("unknown adversary action: " + kind);
}

}  // namespace

std::string AdversaryScript::to_json() const {
  json j = json::array();
  for (const auto& a : actions) j.push_back(action_to_json(a));
  return json{{"actions", j}}.dump(2);
}

AdversaryScript AdversaryScript::from_json(const std::string& text) {
  const json j = json::parse(text);
  AdversaryScript script;
  for (const auto& item : j.at("actions")) {
    script.actions.push_back(action_from_json(item));
  }
  return script;
}

}  // namespace clonesim
