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
#include <string>
#include <utility>
#include <vector>

#include "clonesim/cache.hpp"
#include "clonesim/detector.hpp"
#include "clonesim/eviction.hpp"
#include "clonesim/timing.hpp"

namespace clonesim {

// Everything a run needs, loadable from one JSON document. Missing keys
// fall back to the defaults below, so "{}" is a valid configuration.
struct SimConfig {
  CacheGeometry geometry;
  LatencyModel latency;
  double tick_rate = 1.0;
  DetectorConfig detector;
  BuildOptions build;
  std::string workload = "idle";
  double noise_intensity = 0.0;
  std::uint64_t seed = 1;
  unsigned passes = 8;
  unsigned clones = 2;

  static SimConfig from_json(const std::string& text);  // throws on bad input
  static SimConfig load(const std::string& path);
  std::string to_json() const;

  World make_world() const;
};

// Reproducibility record emitted next to result files: the exact command,
// the full effective configuration and every artifact written.
std::string run_manifest(
    const SimConfig& config, const std::string& command,
    const std::vector<std::pair<std::string, std::string>>& outputs);

}  // namespace clonesim
