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

#include "clonesim/detector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace clonesim {

namespace {

constexpr double kVarianceFloor = 1e-6;

Verdict more_severe(Verdict a, Verdict b) {
  return static_cast<int>(a) >= static_cast<int>(b) ? a : b;
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::NoClone: return "no-clone";
    case Verdict::CloneDetected: return "clone-detected";
    case Verdict::Anomaly: return "anomaly";
  }
  return "?";
}

const char* to_string(AnomalyReason r) {
  switch (r) {
    case AnomalyReason::ClockStall: return "clock-stall";
    case AnomalyReason::OutOfBandLatency: return "out-of-band-latency";
    case AnomalyReason::CoverageFailure: return "coverage-failure";
    case AnomalyReason::ResidencyFailure: return "residency-failure";
    case AnomalyReason::IndistinguishableLatency:
      return "indistinguishable-latency";
  }
  return "?";
}

std::optional<std::pair<unsigned, unsigned>> ways_for_instances(
    unsigned total_ways, unsigned instances) {
  if (total_ways == 0 || instances == 0) return std::nullopt;
  const unsigned lo = total_ways / (instances + 1) + 1;
  const unsigned hi = total_ways / instances;
  if (lo > hi) return std::nullopt;
  return std::make_pair(lo, hi);
}

unsigned default_probe_ways(unsigned total_ways, unsigned instances) {
  const auto interval = ways_for_instances(total_ways, instances);
  if (!interval) {
    throw std::invalid_argument(
        "default_probe_ways: no valid prime depth for this instance count");
  }
  if (instances == 1) {
    // Mid-range depth keeps slack against incidental evictions while still
    // overflowing the set the moment a second copy primes.
    return std::clamp(3 * total_ways / 4, interval->first, interval->second);
  }
  return interval->second;
}

std::vector<std::pair<unsigned, unsigned>> estimation_ladder(
    unsigned total_ways) {
  std::vector<std::pair<unsigned, unsigned>> ladder;
  for (unsigned n = 1; n <= total_ways; ++n) {
    if (!ways_for_instances(total_ways, n)) continue;
    const unsigned depth = default_probe_ways(total_ways, n);
    if (!ladder.empty() && depth >= ladder.back().second) continue;
    ladder.emplace_back(n, depth);
  }
  return ladder;
}

unsigned DetectorConfig::resolved_ways(unsigned total_ways) const {
  return ways_primed != 0 ? ways_primed
                          : default_probe_ways(total_ways, instances);
}

void DetectorConfig::validate(unsigned total_ways) const {
  if (instances == 0) {
    throw std::invalid_argument("detector: instances must be positive");
  }
  const auto interval = ways_for_instances(total_ways, instances);
  if (!interval) {
    throw std::invalid_argument(
        "detector: no prime depth separates this instance count");
  }
  const unsigned m = resolved_ways(total_ways);
  if (m < interval->first || m > interval->second) {
    throw std::invalid_argument(
        "detector: prime depth outside the valid interval");
  }
  if (window == 0) {
    throw std::invalid_argument("detector: window must be positive");
  }
  if (threshold == 0 || threshold > window) {
    throw std::invalid_argument("detector: threshold must be in [1, window]");
  }
  if (calibration_samples < 2) {
    throw std::invalid_argument("detector: need at least two calibration samples");
  }
}

WindowFeatures window_features(std::span<const Observation> window) {
  WindowFeatures f;
  double run = 0.0;
  for (const Observation& o : window) {
    if (o.inferred_miss) {
      f.miss_count += 1.0;
      run += 1.0;
      f.max_run = std::max(f.max_run, run);
    } else {
      run = 0.0;
    }
  }
  return f;
}

std::optional<AnomalyReason> detect_anomaly(std::span<const Observation> window,
                                            const LatencyModel& model,
                                            double tick_rate) {
  for (const Observation& o : window) {
    if (o.reading == 0.0) return AnomalyReason::ClockStall;
    if (model.out_of_band(o.reading / tick_rate)) {
      return AnomalyReason::OutOfBandLatency;
    }
  }
  return std::nullopt;
}

WindowVerdict classify_threshold(std::span<const Observation> window,
                                 unsigned threshold, const LatencyModel& model,
                                 double tick_rate) {
  WindowVerdict verdict;
  verdict.features = window_features(window);
  verdict.anomaly = detect_anomaly(window, model, tick_rate);
  if (verdict.anomaly) {
    verdict.verdict = Verdict::Anomaly;
  } else if (verdict.features.miss_count >= static_cast<double>(threshold)) {
    verdict.verdict = Verdict::CloneDetected;
    verdict.posterior_clone = 1.0;
  } else {
    verdict.verdict = Verdict::NoClone;
  }
  return verdict;
}

void NaiveBayesClassifier::train(std::span<const WindowFeatures> clone_windows,
                                 std::span<const WindowFeatures> clear_windows) {
  if (clone_windows.empty() || clear_windows.empty()) {
    throw std::invalid_argument("bayes: both classes need training windows");
  }
  auto fit = [](std::span<const WindowFeatures> rows, double log_prior) {
    ClassStats s;
    for (const auto& r : rows) {
      s.mean_miss += r.miss_count;
      s.mean_run += r.max_run;
    }
    s.mean_miss /= static_cast<double>(rows.size());
    s.mean_run /= static_cast<double>(rows.size());
    for (const auto& r : rows) {
      s.var_miss += (r.miss_count - s.mean_miss) * (r.miss_count - s.mean_miss);
      s.var_run += (r.max_run - s.mean_run) * (r.max_run - s.mean_run);
    }
    s.var_miss = std::max(s.var_miss / static_cast<double>(rows.size()),
                          kVarianceFloor);
    s.var_run =
        std::max(s.var_run / static_cast<double>(rows.size()), kVarianceFloor);
    s.log_prior = log_prior;
    return s;
  };
  const double total =
      static_cast<double>(clone_windows.size() + clear_windows.size());
  clone_ = fit(clone_windows,
               std::log(static_cast<double>(clone_windows.size()) / total));
  clear_ = fit(clear_windows,
               std::log(static_cast<double>(clear_windows.size()) / total));
  trained_ = true;
}

double NaiveBayesClassifier::log_likelihood(const ClassStats& s,
                                            const WindowFeatures& f) const {
  auto term = [](double x, double mean, double var) {
    return -0.5 * std::log(2.0 * M_PI * var) -
           (x - mean) * (x - mean) / (2.0 * var);
  };
  return s.log_prior + term(f.miss_count, s.mean_miss, s.var_miss) +
         term(f.max_run, s.mean_run, s.var_run);
}

double NaiveBayesClassifier::posterior_clone(const WindowFeatures& f) const {
  if (!trained_) throw SimError("bayes: classifier is not trained");
  const double lc = log_likelihood(clone_, f);
  const double ln = log_likelihood(clear_, f);
  return 1.0 / (1.0 + std::exp(ln - lc));
}

Verdict NaiveBayesClassifier::classify(const WindowFeatures& f) const {
  return posterior_clone(f) > 0.5 ? Verdict::CloneDetected : Verdict::NoClone;
}

Monitor::Monitor(ActorId actor, MonitoringSet monitoring, DetectorConfig config)
    : actor_(actor), monitoring_(std::move(monitoring)), config_(config) {
  if (monitoring_.ways == 0 || monitoring_.sets.empty()) {
    throw std::invalid_argument("monitor: empty monitoring set");
  }
  config_.validate(monitoring_.ways);
  ways_ = config_.resolved_ways(monitoring_.ways);
}

std::optional<AnomalyReason> Monitor::check_coverage(
    const CacheGeometry& geo) const {
  if (!config_.require_full_coverage) return std::nullopt;
  const std::size_t expected =
      static_cast<std::size_t>(geo.channel_sets()) * geo.slices;
  if (monitoring_.sets.size() != expected) return AnomalyReason::CoverageFailure;
  if (monitoring_.ways != geo.ways) return AnomalyReason::CoverageFailure;
  for (const EvictionSet& s : monitoring_.sets) {
    if (s.members.size() != geo.ways) return AnomalyReason::CoverageFailure;
  }
  return std::nullopt;
}

double Monitor::threshold_reading(World& world) const {
  if (calibration_.ok) return calibration_.threshold;
  const LatencyModel& m = world.latency();
  return 0.5 * (m.hit_mean + m.miss_mean) * world.clock().tick_rate();
}

CalibrationResult Monitor::calibrate(World& world) {
  CalibrationResult result;
  const LatencyModel& model = world.latency();
  const double rate = world.clock().tick_rate();
  std::vector<double> first_readings;
  std::vector<double> second_readings;
  // Calibration lines live on monitored pages but one line slot over, in a
  // set outside the channel: nothing in the build or probe path touches
  // them, so the first access is a guaranteed cold miss and the immediate
  // re-access a hit. The cursor keeps recalibrations on fresh lines.
  for (unsigned i = 0; i < config_.calibration_samples; ++i) {
    const std::size_t idx = calibration_cursor_++;
    const std::size_t set_idx = idx % monitoring_.sets.size();
    const std::size_t way_idx =
        (idx / monitoring_.sets.size()) % std::max(1u, ways_);
    // Once every member page has been used, rotate to the next line slot so
    // later calibrations land on lines no earlier calibration warmed up.
    const std::size_t cycle =
        idx / (monitoring_.sets.size() * std::max(1u, ways_));
    const VirtualAddress member = monitoring_.sets[set_idx].members[way_idx];
    const std::uint64_t page =
        member.value & ~((1ull << kPageOffsetBits) - 1);
    const std::uint64_t line =
        bitops::field(member.value, kLineOffsetBits, kPageOffsetBits - 1);
    const std::uint64_t slot_shift = 1 + cycle % (Channel::kCount - 1);
    const std::uint64_t cal_offset =
        ((line + slot_shift) & (Channel::kCount - 1)) << kLineOffsetBits;
    const VirtualAddress va{page | cal_offset};
    first_readings.push_back(world.measured_access(actor_, va).reading);
    second_readings.push_back(world.measured_access(actor_, va).reading);
  }
  for (double r : first_readings) {
    if (r == 0.0) result.anomaly = AnomalyReason::ClockStall;
  }
  for (double r : second_readings) {
    if (r == 0.0) result.anomaly = AnomalyReason::ClockStall;
  }
  if (!result.anomaly) {
    for (double r : first_readings) {
      if (model.out_of_band(r / rate)) {
        result.anomaly = AnomalyReason::OutOfBandLatency;
      }
    }
    for (double r : second_readings) {
      if (model.out_of_band(r / rate)) {
        result.anomaly = AnomalyReason::OutOfBandLatency;
      }
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  result.miss_reading = mean(first_readings);
  result.hit_reading = mean(second_readings);
  const double max_hit =
      *std::max_element(second_readings.begin(), second_readings.end());
  const double min_miss =
      *std::min_element(first_readings.begin(), first_readings.end());
  if (!result.anomaly && max_hit >= min_miss) {
    result.anomaly = AnomalyReason::IndistinguishableLatency;
  }
  result.threshold = 0.5 * (result.hit_reading + result.miss_reading);
  result.ok = !result.anomaly.has_value();
  calibration_ = result;
  return result;
}

bool Monitor::calibration_drifted(const CalibrationResult& fresh,
                                  double tolerance) const {
  if (!calibration_.ok || !fresh.ok) return true;
  const double old_t = calibration_.threshold;
  return std::abs(fresh.threshold - old_t) > tolerance * old_t;
}

std::optional<AnomalyReason> Monitor::prime(World& world) {
  const double thr = threshold_reading(world);
  for (unsigned attempt = 0; attempt <= config_.prime_retries; ++attempt) {
    try {
      for (const EvictionSet& s : monitoring_.sets) {
        for (unsigned j = 0; j < ways_; ++j) {
          world.raw_access(actor_, s.members[j]);
        }
      }
      bool resident = true;
      for (const EvictionSet& s : monitoring_.sets) {
        for (unsigned j = 0; j < ways_ && resident; ++j) {
          if (world.measured_access(actor_, s.members[j]).reading > thr) {
            resident = false;
          }
        }
        if (!resident) break;
      }
      if (resident) return std::nullopt;
    } catch (const UnmappedAddress&) {
      return AnomalyReason::ResidencyFailure;
    }
  }
  return AnomalyReason::ResidencyFailure;
}

void Monitor::touch(World& world) {
  for (const EvictionSet& s : monitoring_.sets) {
    for (unsigned j = 0; j < ways_; ++j) {
      world.raw_access(actor_, s.members[j]);
    }
  }
}

std::vector<Observation> Monitor::probe_pass(World& world) {
  std::vector<Observation> observations;
  observations.reserve(monitoring_.sets.size() * ways_);
  const double thr = threshold_reading(world);
  auto observe = [&](VirtualAddress va) {
    const World::Measured m = world.measured_access(actor_, va);
    observations.push_back(Observation{m.miss, m.reading > thr, m.reading});
  };
  if (config_.probe_order == ProbeOrder::SetInterleaved) {
    for (unsigned j = 0; j < ways_; ++j) {
      for (const EvictionSet& s : monitoring_.sets) {
        observe(s.members[j]);
      }
    }
  } else {
    for (const EvictionSet& s : monitoring_.sets) {
      for (unsigned j = 0; j < ways_; ++j) {
        observe(s.members[j]);
      }
    }
  }
  return observations;
}

DetectionResult Monitor::evaluate(World& world,
                                  std::vector<Observation> observations) const {
  DetectionResult result;
  result.calibration = calibration_;
  const LatencyModel& model = world.latency();
  const double rate = world.clock().tick_rate();
  const std::size_t w = config_.window;
  const std::span<const Observation> all(observations);
  std::vector<std::span<const Observation>> windows;
  if (observations.size() >= w) {
    for (std::size_t i = 0; i + w <= observations.size(); i += w) {
      windows.push_back(all.subspan(i, w));
    }
  } else if (!observations.empty()) {
    windows.push_back(all);
  }
  for (const auto& window : windows) {
    WindowVerdict wv;
    if (config_.classifier == ClassifierKind::Threshold) {
      wv = classify_threshold(window, config_.threshold, model, rate);
    } else {
      wv.features = window_features(window);
      wv.anomaly = detect_anomaly(window, model, rate);
      if (wv.anomaly) {
        wv.verdict = Verdict::Anomaly;
      } else {
        wv.posterior_clone = bayes_.posterior_clone(wv.features);
        wv.verdict = bayes_.classify(wv.features);
      }
    }
    if (wv.anomaly && !result.anomaly) result.anomaly = wv.anomaly;
    result.verdict = more_severe(result.verdict, wv.verdict);
    result.windows.push_back(wv);
  }
  result.observations = std::move(observations);
  return result;
}

DetectionResult Monitor::run(World& world, unsigned passes) {
  DetectionResult result;
  if (auto coverage = check_coverage(world.cache().geometry())) {
    result.verdict = Verdict::Anomaly;
    result.anomaly = coverage;
    return result;
  }
  result.calibration = calibrate(world);
  if (result.calibration.anomaly) {
    result.verdict = Verdict::Anomaly;
    result.anomaly = result.calibration.anomaly;
    return result;
  }
  if (auto primed = prime(world)) {
    result.verdict = Verdict::Anomaly;
    result.anomaly = primed;
    result.calibration = calibration_;
    return result;
  }
  std::vector<Observation> observations;
  for (unsigned p = 0; p < passes; ++p) {
    try {
      std::vector<Observation> pass = probe_pass(world);
      observations.insert(observations.end(), pass.begin(), pass.end());
    } catch (const UnmappedAddress&) {
      result.verdict = Verdict::Anomaly;
      result.anomaly = AnomalyReason::ResidencyFailure;
      result.observations = std::move(observations);
      result.passes = p;
      return result;
    }
  }
  result = evaluate(world, std::move(observations));
  result.passes = passes;
  return result;
}

void Monitor::train(std::span<const WindowFeatures> clone_windows,
                    std::span<const WindowFeatures> clear_windows) {
  bayes_.train(clone_windows, clear_windows);
}

MonitorActor::MonitorActor(Monitor monitor, unsigned passes)
    : SimActor(monitor.actor()),
      monitor_(std::move(monitor)),
      passes_left_(passes) {}

bool MonitorActor::turn(World& world) {
  switch (phase_) {
    case Phase::Calibrate: {
      if (auto coverage = monitor_.check_coverage(world.cache().geometry())) {
        anomaly_ = coverage;
        phase_ = Phase::Done;
        return false;
      }
      calibration_ = monitor_.calibrate(world);
      if (calibration_.anomaly) {
        anomaly_ = calibration_.anomaly;
        phase_ = Phase::Done;
        return false;
      }
      phase_ = Phase::Prime;
      return true;
    }
    case Phase::Prime: {
      if (auto primed = monitor_.prime(world)) {
        anomaly_ = primed;
        phase_ = Phase::Done;
        return false;
      }
      phase_ = Phase::Probe;
      return true;
    }
    case Phase::Probe: {
      if (passes_left_ == 0) {
        phase_ = Phase::Done;
        return false;
      }
      try {
        std::vector<Observation> pass = monitor_.probe_pass(world);
        observations_.insert(observations_.end(), pass.begin(), pass.end());
      } catch (const UnmappedAddress&) {
        anomaly_ = AnomalyReason::ResidencyFailure;
        phase_ = Phase::Done;
        return false;
      }
      if (--passes_left_ == 0) phase_ = Phase::Done;
      return phase_ != Phase::Done;
    }
    case Phase::Done:
      return false;
  }
  return false;
}

DetectionResult MonitorActor::result(World& world) const {
  DetectionResult result = monitor_.evaluate(world, observations_);
  result.calibration = calibration_;
  if (anomaly_) {
    result.verdict = Verdict::Anomaly;
    if (!result.anomaly) result.anomaly = anomaly_;
  }
  return result;
}

FleetResult run_clone_fleet(World& world, const FleetOptions& options) {
  if (options.clones == 0) {
    throw std::invalid_argument("fleet: need at least one clone");
  }
  const std::uint64_t region =
      options.region_pages != 0 ? options.region_pages : options.build.region_pages;
  std::vector<AllocationPolicy> policies = options.policies;
  if (policies.empty()) {
    for (unsigned i = 0; i < options.clones; ++i) {
      policies.push_back(LinearPolicy{i * region});
    }
  }
  if (policies.size() != options.clones) {
    throw std::invalid_argument("fleet: one policy per clone required");
  }

  std::vector<MonitorActor> actors;
  actors.reserve(options.clones);
  for (unsigned i = 0; i < options.clones; ++i) {
    const ActorId id = static_cast<ActorId>(i + 1);
    world.set_mapping(id, allocate(policies[i], region));
    MonitoringSet mset = build_monitoring_set(world, id, options.build);
    actors.emplace_back(Monitor(id, std::move(mset), options.config),
                        options.passes);
  }

  Scheduler scheduler;
  for (MonitorActor& a : actors) scheduler.add(a);
  scheduler.run(world, options.clones * (options.passes + 3));

  FleetResult result;
  for (const MonitorActor& a : actors) {
    result.per_clone.push_back(a.result(world));
    result.verdict = more_severe(result.verdict, result.per_clone.back().verdict);
  }
  return result;
}

unsigned estimate_clone_count(World& world, ActorId self,
                              std::span<const ActorId> others,
                              const EstimateOptions& options) {
  const std::uint64_t region =
      options.region_pages != 0 ? options.region_pages : options.build.region_pages;
  std::vector<ActorId> everyone(others.begin(), others.end());
  everyone.push_back(self);
  std::uint64_t next_base = 0;
  for (ActorId a : everyone) {
    if (!world.has_mapping(a)) {
      world.set_mapping(a, allocate(LinearPolicy{next_base}, region));
    }
    next_base += region;
  }
  std::map<ActorId, MonitoringSet> msets;
  for (ActorId a : everyone) {
    msets.emplace(a, build_monitoring_set(world, a, options.build));
  }

  const unsigned total_ways = msets.at(self).ways;
  const auto ladder =
      options.ladder.empty() ? estimation_ladder(total_ways) : options.ladder;
  if (ladder.empty()) {
    throw std::invalid_argument("estimate: empty ladder");
  }
  const double thr = 0.5 *
                     (world.latency().hit_mean + world.latency().miss_mean) *
                     world.clock().tick_rate();

  auto prime_raw = [&](ActorId a, unsigned depth) {
    for (const EvictionSet& s : msets.at(a).sets) {
      for (unsigned j = 0; j < depth; ++j) {
        world.raw_access(a, s.members[j]);
      }
    }
  };

  for (const auto& [n, depth] : ladder) {
    for (ActorId a : others) prime_raw(a, depth);
    prime_raw(self, depth);
    std::vector<Observation> observations;
    for (unsigned pass = 0; pass < options.passes; ++pass) {
      for (ActorId a : others) prime_raw(a, depth);
      for (unsigned j = 0; j < depth; ++j) {
        for (const EvictionSet& s : msets.at(self).sets) {
          const World::Measured m = world.measured_access(self, s.members[j]);
          observations.push_back(Observation{m.miss, m.reading > thr, m.reading});
        }
      }
    }
    bool tripped = false;
    const std::span<const Observation> all(observations);
    const std::size_t w = options.window;
    for (std::size_t i = 0; i + w <= observations.size() && !tripped; i += w) {
      if (window_features(all.subspan(i, w)).miss_count >=
          static_cast<double>(options.threshold)) {
        tripped = true;
      }
    }
    if (observations.size() < w && !observations.empty() && !tripped) {
      tripped = window_features(all).miss_count >=
                static_cast<double>(options.threshold);
    }
    if (!tripped) return n - 1;
  }
  return ladder.back().first;
}

}  // namespace clonesim
