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
#include <vector>

#include "clonesim/rng.hpp"
#include "clonesim/types.hpp"

namespace clonesim {

// Abstract access-latency distributions in simulator time units. Hit and
// miss populations are truncated normals whose means keep the 100:450
// ratio of a hit against a memory-served miss; tests pin these defaults.
struct LatencyModel {
  double hit_mean = 100.0;
  double miss_mean = 450.0;
  double hit_sigma = 8.0;
  double miss_sigma = 30.0;
  // Samples are clipped to mean +/- truncate_k * sigma; readings beyond
  // support_k * sigma of both populations match neither distribution.
  double truncate_k = 4.0;
  double support_k = 5.0;

  void validate() const;

  double sample(bool miss, Rng& rng) const {
    return miss ? rng.truncated_normal(miss_mean, miss_sigma, truncate_k)
                : rng.truncated_normal(hit_mean, hit_sigma, truncate_k);
  }

  bool in_hit_support(double reading) const {
    return reading >= hit_mean - support_k * hit_sigma &&
           reading <= hit_mean + support_k * hit_sigma;
  }
  bool in_miss_support(double reading) const {
    return reading >= miss_mean - support_k * miss_sigma &&
           reading <= miss_mean + support_k * miss_sigma;
  }
  // A reading that matches neither population: evidence of clock tampering
  // or interrupted probes.
  bool out_of_band(double reading) const {
    return !in_hit_support(reading) && !in_miss_support(reading);
  }
};

// Counting-thread clock. A measurement converts elapsed latency into ticks;
// the OS can slow or stall the counting thread inside scheduled windows.
class ClockOracle {
 public:
  struct Perturbation {
    SimTime start = 0;
    SimTime end = 0;      // half-open [start, end); end <= start means open-ended
    double scale = 1.0;   // tick-rate multiplier; 0 = stalled thread
  };

  explicit ClockOracle(double tick_rate = 1.0) : tick_rate_(tick_rate) {}

  double tick_rate() const { return tick_rate_; }

  void add_perturbation(Perturbation p) { perturbations_.push_back(p); }
  void clear_perturbations() { perturbations_.clear(); }

  double scale_at(SimTime t) const {
    double s = 1.0;
    for (const auto& p : perturbations_) {
      const bool open_ended = p.end <= p.start;
      if (t >= p.start && (open_ended || t < p.end)) s *= p.scale;
    }
    return s;
  }

  // Ticks observed across an interval of the given latency starting at t.
  // A stalled clock returns 0: two consecutive reads see the same counter.
  double interval_reading(double latency, SimTime t) const {
    return latency * tick_rate_ * scale_at(t);
  }

 private:
  double tick_rate_;
  std::vector<Perturbation> perturbations_;
};

}  // namespace clonesim
