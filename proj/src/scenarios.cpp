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

#include "clonesim/scenarios.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace clonesim {

void SealedStore::seal(const std::string& identity, const std::string& key,
                       std::string value) {
  records_[{identity, key}] = std::move(value);
  ++seals_[identity];
}

std::optional<std::string> SealedStore::unseal(const std::string& identity,
                                               const std::string& key) const {
  const auto it = records_.find({identity, key});
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::size_t SealedStore::seal_count(const std::string& identity) const {
  const auto it = seals_.find(identity);
  return it == seals_.end() ? 0 : it->second;
}

ScenarioKind scenario_from_string(std::string_view name) {
  if (name == "bisgx") return ScenarioKind::BiSgx;
  if (name == "fim") return ScenarioKind::Fim;
  if (name == "forkvs") return ScenarioKind::ForKvs;
  if (name == "bug") return ScenarioKind::Bug;
  throw std::invalid_argument("unknown scenario: " + std::string(name));
}

const char* to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::BiSgx: return "bisgx";
    case ScenarioKind::Fim: return "fim";
    case ScenarioKind::ForKvs: return "forkvs";
    case ScenarioKind::Bug: return "bug";
  }
  return "?";
}

namespace {

constexpr const char* kIdentity = "guarded-service";

std::uint64_t scenario_region(const ScenarioOptions& options) {
  return options.region_pages != 0 ? options.region_pages
                                   : options.build.region_pages;
}

// One clone's guard state while a scenario drives the protocol around it.
struct GuardedClone {
  explicit GuardedClone(ActorId id) : id(id) {}

  ActorId id;
  std::optional<Monitor> monitor;
  bool flagged = false;
  bool aborted = false;
};

// Startup work a guarded clone performs before serving: map its region,
// survey the channel, calibrate the timer and occupy its ways.
void arm_guard(Platform& platform, GuardedClone& clone,
               const ScenarioOptions& options) {
  const std::uint64_t region = scenario_region(options);
  if (!platform.world.has_mapping(clone.id)) {
    platform.world.set_mapping(
        clone.id, allocate(LinearPolicy{clone.id * region}, region));
  }
  MonitoringSet mset =
      build_monitoring_set(platform.world, clone.id, options.build);
  clone.monitor.emplace(clone.id, std::move(mset), options.detector);
  const CalibrationResult cal = clone.monitor->calibrate(platform.world);
  if (cal.anomaly) {
    clone.flagged = true;
    return;
  }
  if (clone.monitor->prime(platform.world)) {
    clone.flagged = true;
  }
}

// One probe pass through the guard; true when the sibling showed up.
bool probe_flags(Platform& platform, GuardedClone& clone) {
  if (!clone.monitor) return false;
  std::vector<Observation> obs = clone.monitor->probe_pass(platform.world);
  const DetectionResult r =
      clone.monitor->evaluate(platform.world, std::move(obs));
  if (r.verdict != Verdict::NoClone) clone.flagged = true;
  return clone.flagged;
}

}  // namespace

std::vector<std::array<BisgxOp, 4>> bisgx_orderings() {
  std::array<BisgxOp, 4> ops = {BisgxOp::ARead, BisgxOp::ASeal, BisgxOp::BRead,
                                BisgxOp::BSeal};
  std::vector<std::array<BisgxOp, 4>> orderings;
  std::sort(ops.begin(), ops.end());
  do {
    orderings.push_back(ops);
  } while (std::next_permutation(ops.begin(), ops.end()));
  return orderings;
}

bool bisgx_program_ordered(std::span<const BisgxOp> ordering) {
  const auto position = [&](BisgxOp op) {
    return std::find(ordering.begin(), ordering.end(), op) - ordering.begin();
  };
  return position(BisgxOp::ARead) < position(BisgxOp::ASeal) &&
         position(BisgxOp::BRead) < position(BisgxOp::BSeal);
}

AttackOutcome run_bisgx_attack(Platform& platform,
                               std::span<const BisgxOp> ordering,
                               const ScenarioOptions& options) {
  if (ordering.size() != 4) {
    throw std::invalid_argument("bisgx: ordering must hold four operations");
  }
  for (BisgxOp op : {BisgxOp::ARead, BisgxOp::ASeal, BisgxOp::BRead,
                     BisgxOp::BSeal}) {
    if (std::count(ordering.begin(), ordering.end(), op) != 1) {
      throw std::invalid_argument("bisgx: each operation must appear once");
    }
  }

  platform.store.seal(kIdentity, "state@0", "genesis");

  GuardedClone a(kCloneA);
  GuardedClone b(kCloneB);
  if (options.with_detector) {
    arm_guard(platform, a, options);
    arm_guard(platform, b, options);
  }

  struct CloneRun {
    std::optional<std::uint64_t> base;  // counter value the clone read
    bool sealed = false;
    std::uint64_t recorded = 0;  // counter value the sealed blob claims
    std::uint64_t version = 0;
  };
  CloneRun runs[2];
  GuardedClone* guards[2] = {&a, &b};

  for (BisgxOp op : ordering) {
    const std::size_t idx =
        (op == BisgxOp::ARead || op == BisgxOp::ASeal) ? 0 : 1;
    CloneRun& run = runs[idx];
    GuardedClone& guard = *guards[idx];
    if (guard.aborted) continue;
    if (op == BisgxOp::ARead || op == BisgxOp::BRead) {
      run.base = platform.counter.read();
      continue;
    }
    if (options.with_detector && probe_flags(platform, guard)) {
      guard.aborted = true;
      continue;
    }
    run.version = platform.counter.increment();
    // A clone sealing before its scheduled read takes the value it observes
    // at the increment itself.
    run.recorded = run.base.value_or(run.version - 1);
    std::ostringstream state;
    state << "state-from-" << run.recorded;
    platform.store.seal(kIdentity, "state@" + std::to_string(run.version),
                        state.str());
    run.sealed = true;
  }

  AttackOutcome outcome;
  outcome.forked = runs[0].sealed && runs[1].sealed &&
                   runs[0].recorded == runs[1].recorded;
  outcome.detected = a.flagged || b.flagged;
  outcome.aborted = a.aborted || b.aborted;
  std::ostringstream desc;
  const auto blob = [](const CloneRun& run) {
    return run.sealed ? "state-from-" + std::to_string(run.recorded)
                      : std::string("(no blob)");
  };
  desc << "clone A sealed " << blob(runs[0]) << ", clone B sealed "
       << blob(runs[1]) << "; "
       << (outcome.forked ? "two blobs continue the same counter value"
                          : "sealed history stayed a single chain");
  if (outcome.aborted) desc << "; a guard aborted before sealing";
  outcome.description = desc.str();
  return outcome;
}

AttackOutcome run_fim_attack(Platform& platform,
                             const ScenarioOptions& options) {
  GuardedClone a(kCloneA);
  GuardedClone b(kCloneB);
  if (options.with_detector) {
    arm_guard(platform, a, options);
    arm_guard(platform, b, options);
  }

  // Single-instance reference: the same request sequence against one store
  // leaves both clients reading the last write.
  std::map<std::string, std::string> reference;
  reference["x"] = "1";
  reference["x"] = "2";
  const std::string expected = reference.at("x");

  // Balanced across clones, each holding private in-memory state.
  std::map<std::string, std::string> state_a;
  std::map<std::string, std::string> state_b;
  std::optional<std::string> client1_view;
  std::optional<std::string> client2_view;
  bool dropped = false;

  auto serve = [&](GuardedClone& guard, auto&& fn) {
    if (options.with_detector && probe_flags(platform, guard)) {
      guard.aborted = true;
      dropped = true;
      return;
    }
    fn();
  };
  const auto read_x = [](const std::map<std::string, std::string>& state) {
    const auto it = state.find("x");
    return it == state.end() ? std::string("<missing>") : it->second;
  };
  serve(a, [&] { state_a["x"] = "1"; });
  serve(b, [&] { state_b["x"] = "2"; });
  serve(a, [&] { client1_view = read_x(state_a); });
  serve(b, [&] { client2_view = read_x(state_b); });

  AttackOutcome outcome;
  outcome.forked = client1_view && client2_view && *client1_view != *client2_view;
  outcome.detected = a.flagged || b.flagged;
  outcome.aborted = a.aborted || b.aborted;
  std::ostringstream desc;
  if (client1_view && client2_view) {
    desc << "client 1 read '" << *client1_view << "', client 2 read '"
         << *client2_view << "'; a single instance answers '" << expected
         << "' to both";
  } else {
    desc << "guards refused to serve" << (dropped ? " (requests dropped)" : "");
  }
  outcome.description = desc.str();
  return outcome;
}

AttackOutcome run_forkvs_attack(Platform& platform,
                                const ScenarioOptions& options) {
  GuardedClone a(kCloneA);
  GuardedClone b(kCloneB);
  if (options.with_detector) {
    arm_guard(platform, a, options);
    arm_guard(platform, b, options);
  }

  // Genesis: value v1 sealed at counter 1.
  platform.counter.increment();
  platform.store.seal(kIdentity, "kv", "k=v1");
  platform.store.seal(kIdentity, "ver", "1");

  // Both clones start a session and pass the freshness check inside the
  // same fork window (the counter still reads 1 for each).
  const bool a_fresh = platform.store.unseal(kIdentity, "ver") ==
                       std::to_string(platform.counter.read());
  const bool b_fresh = platform.store.unseal(kIdentity, "ver") ==
                       std::to_string(platform.counter.read());

  std::optional<std::string> served;
  bool a_updated = false;
  if (a_fresh) {
    bool abort = false;
    if (options.with_detector && probe_flags(platform, a)) {
      a.aborted = true;
      abort = true;
    }
    if (!abort) {
      const std::uint64_t version = platform.counter.increment();
      platform.store.seal(kIdentity, "kv", "k=v2");
      platform.store.seal(kIdentity, "ver", std::to_string(version));
      a_updated = true;
    }
  }
  if (b_fresh) {
    bool abort = false;
    if (options.with_detector && probe_flags(platform, b)) {
      b.aborted = true;
      abort = true;
    }
    if (!abort) {
      served = "k=v1";  // the snapshot B holds from its session start
    }
  }

  AttackOutcome outcome;
  outcome.forked = a_updated && served.has_value() && *served == "k=v1";
  outcome.detected = a.flagged || b.flagged;
  outcome.aborted = a.aborted || b.aborted;
  std::ostringstream desc;
  if (outcome.forked) {
    desc << "clone B served the stale '" << *served
         << "' after clone A sealed 'k=v2'; the counter check passed in the "
         << "fork window";
  } else if (outcome.aborted) {
    desc << "a guard flagged the sibling and refused the session";
  } else {
    desc << "no stale value crossed sessions";
  }
  outcome.description = desc.str();
  return outcome;
}

AttackOutcome run_bug_attack(Platform& platform,
                             const ScenarioOptions& options) {
  GuardedClone a(kCloneA);
  GuardedClone b(kCloneB);
  if (options.with_detector) {
    arm_guard(platform, a, options);
    arm_guard(platform, b, options);
  }

  // The proxy only flushes a full batch; a single instance would mix all
  // four honest messages into one batch, hiding the target among four
  // senders. The adversarial balancer instead isolates the target on clone
  // A and tops both batches up with its own cover traffic.
  constexpr std::size_t kRequiredAnonymity = 4;
  const std::string target = "alice";

  struct Message {
    std::string client;
    bool honest = false;
  };
  std::vector<Message> batch_a;
  std::vector<Message> batch_b;
  bool refused = false;

  const auto submit = [&](GuardedClone& guard, std::vector<Message>& batch,
                          Message message) {
    if (options.with_detector && probe_flags(platform, guard)) {
      guard.aborted = true;
      refused = true;
      return;
    }
    batch.push_back(std::move(message));
  };
  submit(a, batch_a, {target, true});
  submit(b, batch_b, {"bob", true});
  submit(b, batch_b, {"carol", true});
  submit(b, batch_b, {"dave", true});
  while (batch_a.size() < kRequiredAnonymity && !a.aborted) {
    submit(a, batch_a, {"adversary", false});
  }
  while (batch_b.size() < kRequiredAnonymity && !b.aborted) {
    submit(b, batch_b, {"adversary", false});
  }

  // Adversary's view of a flushed batch: its own cover messages are known,
  // so the target hides only among the honest messages sharing the batch.
  std::size_t anonymity = kRequiredAnonymity;
  bool target_flushed = false;
  for (const auto* batch : {&batch_a, &batch_b}) {
    if (batch->size() < kRequiredAnonymity) continue;
    const bool has_target =
        std::any_of(batch->begin(), batch->end(),
                    [&](const Message& m) { return m.client == target; });
    if (!has_target) continue;
    target_flushed = true;
    anonymity = static_cast<std::size_t>(
        std::count_if(batch->begin(), batch->end(),
                      [](const Message& m) { return m.honest; }));
  }

  AttackOutcome outcome;
  outcome.forked = target_flushed && anonymity < kRequiredAnonymity;
  outcome.detected = a.flagged || b.flagged;
  outcome.aborted = a.aborted || b.aborted;
  std::ostringstream desc;
  if (outcome.forked) {
    desc << "the balancer flushed the target among " << anonymity
         << " honest sender(s) instead of " << kRequiredAnonymity
         << "; every message links to its client";
  } else if (refused) {
    desc << "guards refused to mix while a sibling holds the channel";
  } else {
    desc << "single batch preserved the anonymity set of "
         << kRequiredAnonymity;
  }
  outcome.description = desc.str();
  return outcome;
}

AttackOutcome run_scenario(ScenarioKind kind, const PlatformFactory& factory,
                           const ScenarioOptions& options) {
  switch (kind) {
    case ScenarioKind::BiSgx: {
      AttackOutcome total;
      unsigned forked = 0;
      unsigned forked_program = 0;
      unsigned program = 0;
      unsigned detected = 0;
      const auto orderings = bisgx_orderings();
      for (const auto& ordering : orderings) {
        Platform platform = factory();
        const AttackOutcome o = run_bisgx_attack(platform, ordering, options);
        total.forked |= o.forked;
        total.detected |= o.detected;
        total.aborted |= o.aborted;
        const bool ordered = bisgx_program_ordered(ordering);
        program += ordered;
        if (o.forked) {
          ++forked;
          forked_program += ordered;
        }
        if (o.detected) ++detected;
      }
      std::ostringstream desc;
      desc << forked << " of " << orderings.size() << " operation orderings ("
           << forked_program << " of " << program
           << " program-ordered) forked the sealed history; guards flagged "
           << detected << " of " << orderings.size();
      total.description = desc.str();
      return total;
    }
    case ScenarioKind::Fim: {
      Platform platform = factory();
      return run_fim_attack(platform, options);
    }
    case ScenarioKind::ForKvs: {
      Platform platform = factory();
      return run_forkvs_attack(platform, options);
    }
    case ScenarioKind::Bug: {
      Platform platform = factory();
      return run_bug_attack(platform, options);
    }
  }
  throw std::invalid_argument("unknown scenario kind");
}

}  // namespace clonesim
