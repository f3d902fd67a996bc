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
#include <span>
#include <utility>
#include <vector>

#include "clonesim/eviction.hpp"
#include "clonesim/timing.hpp"
#include "clonesim/world.hpp"

namespace clonesim {

enum class ProbeOrder {
  SetInterleaved,  // slot-major: way j of every set, then way j+1
  ColumnMajor,     // diagnostic: all ways of one set, then the next
};

enum class ClassifierKind { Threshold, NaiveBayes };

enum class Verdict { NoClone, CloneDetected, Anomaly };

enum class AnomalyReason {
  ClockStall,
  OutOfBandLatency,
  CoverageFailure,
  ResidencyFailure,
  IndistinguishableLatency,
};

const char* to_string(Verdict v);
const char* to_string(AnomalyReason r);

// Valid prime depths for a W-way set shared by up to `instances` clones:
// deep enough that one extra clone cannot fit (m * (instances+1) > W),
// shallow enough that `instances` legitimate copies coexist without
// evictions (m * instances <= W). Empty for infeasible counts.
std::optional<std::pair<unsigned, unsigned>> ways_for_instances(
    unsigned total_ways, unsigned instances);

// Preferred depth within the valid interval; mid-range for the solo guard,
// the upper bound otherwise.
unsigned default_probe_ways(unsigned total_ways, unsigned instances);

// Ascending (instances, depth) rungs with strictly shrinking depth; walking
// them bounds the number of co-resident copies.
std::vector<std::pair<unsigned, unsigned>> estimation_ladder(
    unsigned total_ways);

struct DetectorConfig {
  unsigned instances = 1;    // clone count the guard is sized against
  unsigned ways_primed = 0;  // 0 = default_probe_ways at runtime
  unsigned window = 16;      // observations folded into one decision
  unsigned threshold = 1;    // inferred misses that trip a window
  ProbeOrder probe_order = ProbeOrder::SetInterleaved;
  ClassifierKind classifier = ClassifierKind::Threshold;
  unsigned calibration_samples = 32;
  unsigned prime_retries = 8;
  bool require_full_coverage = true;

  unsigned resolved_ways(unsigned total_ways) const;
  // Throws std::invalid_argument when the depth leaves the valid interval.
  void validate(unsigned total_ways) const;
};

struct Observation {
  bool miss = false;           // ground truth from the cache model
  bool inferred_miss = false;  // what the reading says
  double reading = 0.0;
};

struct CalibrationResult {
  double hit_reading = 0.0;
  double miss_reading = 0.0;
  double threshold = 0.0;
  bool ok = false;
  std::optional<AnomalyReason> anomaly;
};

struct WindowFeatures {
  double miss_count = 0.0;
  double max_run = 0.0;  // longest consecutive inferred-miss run
};

WindowFeatures window_features(std::span<const Observation> window);

// Readings that no honest hit or miss could produce: a stalled counter
// reads zero, a skewed one lands outside both latency support bands.
std::optional<AnomalyReason> detect_anomaly(std::span<const Observation> window,
                                            const LatencyModel& model,
                                            double tick_rate);

struct WindowVerdict {
  Verdict verdict = Verdict::NoClone;
  WindowFeatures features;
  std::optional<AnomalyReason> anomaly;
  double posterior_clone = 0.0;  // filled by the Bayes classifier
};

WindowVerdict classify_threshold(std::span<const Observation> window,
                                 unsigned threshold, const LatencyModel& model,
                                 double tick_rate);

// Two-class Gaussian naive Bayes over window features.
class NaiveBayesClassifier {
 public:
  void train(std::span<const WindowFeatures> clone_windows,
             std::span<const WindowFeatures> clear_windows);
  bool trained() const { return trained_; }
  double posterior_clone(const WindowFeatures& f) const;  // throws untrained
  Verdict classify(const WindowFeatures& f) const;

 private:
  struct ClassStats {
    double mean_miss = 0.0, var_miss = 0.0;
    double mean_run = 0.0, var_run = 0.0;
    double log_prior = 0.0;
  };
  double log_likelihood(const ClassStats& s, const WindowFeatures& f) const;
  ClassStats clone_;
  ClassStats clear_;
  bool trained_ = false;
};

struct DetectionResult {
  Verdict verdict = Verdict::NoClone;
  CalibrationResult calibration;
  std::vector<Observation> observations;
  std::vector<WindowVerdict> windows;
  std::optional<AnomalyReason> anomaly;  // first reason encountered
  unsigned passes = 0;
};

// One clone's guard: calibrates its timer, keeps m ways of every channel
// set resident, probes them, and folds the readings into verdicts.
class Monitor {
 public:
  Monitor(ActorId actor, MonitoringSet monitoring, DetectorConfig config);

  ActorId actor() const { return actor_; }
  const MonitoringSet& monitoring() const { return monitoring_; }
  const DetectorConfig& config() const { return config_; }
  unsigned probe_ways() const { return ways_; }

  // Coverage shape the configuration demands; nullopt when satisfied.
  std::optional<AnomalyReason> check_coverage(const CacheGeometry& geo) const;

  CalibrationResult calibrate(World& world);
  const CalibrationResult& calibration() const { return calibration_; }
  bool calibration_drifted(const CalibrationResult& fresh,
                           double tolerance = 0.25) const;

  std::optional<AnomalyReason> prime(World& world);
  // Untimed re-access of the primed lines: what a lockstep sibling does
  // each round without gathering observations.
  void touch(World& world);
  std::vector<Observation> probe_pass(World& world);

  // Window assembly + the configured classifier over raw observations.
  DetectionResult evaluate(World& world,
                           std::vector<Observation> observations) const;

  // One-shot: coverage check, calibrate, prime, `passes` probe passes,
  // classification. Suited to a world without interleaved actors.
  DetectionResult run(World& world, unsigned passes);

  void train(std::span<const WindowFeatures> clone_windows,
             std::span<const WindowFeatures> clear_windows);
  const NaiveBayesClassifier& classifier() const { return bayes_; }

 private:
  double threshold_reading(World& world) const;

  ActorId actor_;
  MonitoringSet monitoring_;
  DetectorConfig config_;
  unsigned ways_ = 0;
  CalibrationResult calibration_;
  std::size_t calibration_cursor_ = 0;  // keeps every calibration line fresh
  NaiveBayesClassifier bayes_;
};

// Scheduler adapter: calibrate, prime, then one probe pass per turn.
class MonitorActor : public SimActor {
 public:
  MonitorActor(Monitor monitor, unsigned passes);

  bool turn(World& world) override;
  bool finished() const { return phase_ == Phase::Done; }
  const Monitor& monitor() const { return monitor_; }
  DetectionResult result(World& world) const;  // classify what was gathered

 private:
  enum class Phase { Calibrate, Prime, Probe, Done };
  Monitor monitor_;
  unsigned passes_left_;
  Phase phase_ = Phase::Calibrate;
  std::vector<Observation> observations_;
  std::optional<AnomalyReason> anomaly_;
  CalibrationResult calibration_;
  friend struct FleetResult;
};

struct FleetOptions {
  unsigned clones = 2;
  DetectorConfig config;
  BuildOptions build;
  // One mapping policy per clone; defaults to disjoint linear windows.
  std::vector<AllocationPolicy> policies;
  std::uint64_t region_pages = 0;  // 0 = build.region_pages
  unsigned passes = 4;
};

struct FleetResult {
  std::vector<DetectionResult> per_clone;
  Verdict verdict = Verdict::NoClone;  // most severe across the fleet
};

// Launches `clones` copies of the same guarded binary on one platform:
// every clone builds its channel monitoring set, then all of them prime and
// probe in lockstep turns.
FleetResult run_clone_fleet(World& world, const FleetOptions& options);

struct EstimateOptions {
  BuildOptions build;
  std::uint64_t region_pages = 0;  // 0 = build.region_pages
  unsigned window = 16;
  unsigned threshold = 1;
  unsigned passes = 2;
  // Empty = estimation_ladder(geometry ways).
  std::vector<std::pair<unsigned, unsigned>> ladder;
};

// Walks the ladder with every instance priming in lockstep; the first rung
// whose windows stay clean bounds the co-resident copies, and its instance
// count minus one is the estimate of the *other* copies.
unsigned estimate_clone_count(World& world, ActorId self,
                              std::span<const ActorId> others,
                              const EstimateOptions& options);

}  // namespace clonesim
