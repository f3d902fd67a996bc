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
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clonesim/config.hpp"
#include "clonesim/detector.hpp"

namespace clonesim {

// Sweep description: a base configuration plus the axes to walk. Parsed
// from the same JSON document as SimConfig with a few extra keys.
struct ExperimentSpec {
  SimConfig base;
  std::vector<unsigned> windows = {1, 4, 16, 64, 256, 1024};
  std::vector<std::string> workloads = {"random"};
  std::vector<double> pollution;  // pool fractions for the pollution sweep
  unsigned calibration_seeds = 4;
  unsigned evaluation_seeds = 12;

  static ExperimentSpec from_json(const std::string& text);
  static ExperimentSpec load(const std::string& path);
};

// One verdict per simulated run.
struct ResultRow {
  std::uint64_t seed = 0;
  unsigned m = 0;
  unsigned w = 0;
  unsigned t = 0;
  unsigned n = 0;
  std::string workload;
  std::uint64_t misses = 0;
  std::string verdict;
  std::string truth;
};

std::string csv_header();
void write_csv(std::ostream& out, std::span<const ResultRow> rows);

// Run-level confusion counts for one sweep point.
struct MetricsRow {
  unsigned w = 0;
  unsigned t = 0;
  std::string workload;
  unsigned tp = 0, fp = 0, tn = 0, fn = 0;

  double f1() const;
  double fpr() const;
  double fnr() const;
};

struct SweepResult {
  std::vector<ResultRow> rows;
  std::vector<MetricsRow> metrics;
};

// One guard's observation stream against an optional lockstep clone and a
// background workload, long enough to cover the largest window.
std::vector<Observation> generate_stream(const ExperimentSpec& spec,
                                         std::uint64_t seed,
                                         bool clone_present,
                                         std::string_view workload);

// Per-window trip count that stays silent on every calibration stream,
// with headroom against seed-to-seed variation.
unsigned tuned_threshold(
    const std::vector<std::vector<Observation>>& calibration_streams,
    unsigned window);

// Window sweep: tunes thresholds on clean calibration seeds, then scores
// clone/clear evaluation runs at every window length.
SweepResult run_window_sweep(const ExperimentSpec& spec);

struct PollutionPoint {
  double fraction = 0.0;
  unsigned trips = 0;
  unsigned runs = 0;
  double fpr() const { return runs ? static_cast<double>(trips) / runs : 0.0; }
};

// Clone-free runs against the channel polluter at each pool fraction; every
// trip is by construction a false positive.
std::vector<PollutionPoint> run_pollution_sweep(const ExperimentSpec& spec,
                                                std::span<const double> fractions,
                                                unsigned seeds,
                                                std::vector<ResultRow>* rows);

}  // namespace clonesim
