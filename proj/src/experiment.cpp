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

#include "clonesim/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "clonesim/noise.hpp"
#include "json.hpp"

namespace clonesim {

namespace {

constexpr ActorId kGuard = 1;
constexpr ActorId kSibling = 2;
constexpr ActorId kTenant = 3;
constexpr ActorId kPolluter = 7;
constexpr std::uint64_t kStreamSalt = 0x9E3779B97F4A7C15ull;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::uint64_t count_misses(std::span<const Observation> obs) {
  std::uint64_t n = 0;
  for (const Observation& o : obs) n += o.inferred_miss ? 1 : 0;
  return n;
}

// True when any full window reaches the trip count; short streams fold into
// a single window.
bool stream_trips(std::span<const Observation> obs, unsigned w, unsigned t) {
  if (obs.empty()) return false;
  if (obs.size() < w) {
    return window_features(obs).miss_count >= static_cast<double>(t);
  }
  for (std::size_t i = 0; i + w <= obs.size(); i += w) {
    if (window_features(obs.subspan(i, w)).miss_count >=
        static_cast<double>(t)) {
      return true;
    }
  }
  return false;
}

}  // namespace

ExperimentSpec ExperimentSpec::from_json(const std::string& text) {
  ExperimentSpec spec;
  spec.base = SimConfig::from_json(text);
  const nlohmann::json doc = nlohmann::json::parse(text);
  if (doc.contains("windows")) {
    spec.windows = doc.at("windows").get<std::vector<unsigned>>();
  }
  if (doc.contains("workloads")) {
    spec.workloads = doc.at("workloads").get<std::vector<std::string>>();
  }
  if (doc.contains("pollution")) {
    spec.pollution = doc.at("pollution").get<std::vector<double>>();
  }
  spec.calibration_seeds = doc.value("calibration_seeds", spec.calibration_seeds);
  spec.evaluation_seeds = doc.value("evaluation_seeds", spec.evaluation_seeds);
  return spec;
}

ExperimentSpec ExperimentSpec::load(const std::string& path) {
  return from_json(read_file(path));
}

std::string csv_header() { return "seed,m,w,t,N,workload,misses,verdict,truth"; }

void write_csv(std::ostream& out, std::span<const ResultRow> rows) {
  out << csv_header() << "\n";
  for (const ResultRow& r : rows) {
    out << r.seed << "," << r.m << "," << r.w << "," << r.t << "," << r.n
        << "," << r.workload << "," << r.misses << "," << r.verdict << ","
        << r.truth << "\n";
  }
}

double MetricsRow::f1() const {
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

double MetricsRow::fpr() const {
  const double denom = fp + tn;
  return denom == 0.0 ? 0.0 : fp / denom;
}

double MetricsRow::fnr() const {
  const double denom = fn + tp;
  return denom == 0.0 ? 0.0 : fn / denom;
}

std::vector<Observation> generate_stream(const ExperimentSpec& spec,
                                         std::uint64_t seed,
                                         bool clone_present,
                                         std::string_view workload) {
  const SimConfig& c = spec.base;
  CacheGeometry geo = c.geometry;
  geo.slice_hash = SliceHash::default_for(geo.slices);
  World world(geo, c.latency, c.tick_rate, seed);
  const std::uint64_t region = c.build.region_pages;

  world.set_mapping(kGuard, allocate(LinearPolicy{0}, region));
  Monitor guard(kGuard, build_monitoring_set(world, kGuard, c.build),
                c.detector);
  guard.calibrate(world);
  guard.prime(world);

  std::optional<Monitor> sibling;
  if (clone_present) {
    world.set_mapping(kSibling, allocate(LinearPolicy{region}, region));
    sibling.emplace(kSibling, build_monitoring_set(world, kSibling, c.build),
                    c.detector);
    sibling->prime(world);
  }

  world.set_mapping(kTenant, allocate(LinearPolicy{2 * region}, region));
  NoiseProfile profile;
  profile.kind = noise_kind_from_string(workload);
  profile.intensity = c.noise_intensity;
  NoiseActor tenant(kTenant, profile, seed ^ kStreamSalt, c.passes + 1);

  std::vector<Observation> stream;
  for (unsigned pass = 0; pass < c.passes; ++pass) {
    tenant.turn(world);
    if (sibling) sibling->touch(world);
    std::vector<Observation> obs = guard.probe_pass(world);
    stream.insert(stream.end(), obs.begin(), obs.end());
  }
  return stream;
}

unsigned tuned_threshold(
    const std::vector<std::vector<Observation>>& calibration_streams,
    unsigned window) {
  if (window == 0) throw std::invalid_argument("tuned_threshold: window 0");
  double max_count = 0.0;
  for (const auto& stream : calibration_streams) {
    const std::span<const Observation> all(stream);
    if (stream.size() < window) {
      if (!stream.empty()) {
        max_count = std::max(max_count, window_features(all).miss_count);
      }
      continue;
    }
    for (std::size_t i = 0; i + window <= stream.size(); i += window) {
      max_count =
          std::max(max_count, window_features(all.subspan(i, window)).miss_count);
    }
  }
  // One step above the worst clean window, plus a 25% margin against
  // seed-to-seed variation; degenerate cases fall back to "any miss".
  const auto base = static_cast<unsigned>(max_count);
  unsigned t = (base == 0) ? 1 : base + 1 + base / 4;
  return std::min(t, window);
}

SweepResult run_window_sweep(const ExperimentSpec& spec) {
  SweepResult result;
  const SimConfig& c = spec.base;
  const unsigned m = c.detector.resolved_ways(c.geometry.ways);

  for (const std::string& workload : spec.workloads) {
    std::vector<std::vector<Observation>> calibration;
    for (unsigned i = 0; i < spec.calibration_seeds; ++i) {
      calibration.push_back(
          generate_stream(spec, c.seed + i, false, workload));
    }

    struct EvalRun {
      std::uint64_t seed;
      bool clone;
      std::vector<Observation> stream;
    };
    std::vector<EvalRun> runs;
    for (unsigned i = 0; i < spec.evaluation_seeds; ++i) {
      const std::uint64_t seed = c.seed + 1000 + i;
      runs.push_back({seed, false, generate_stream(spec, seed, false, workload)});
      runs.push_back({seed, true, generate_stream(spec, seed, true, workload)});
    }

    for (unsigned w : spec.windows) {
      const unsigned t = c.detector.threshold > 1
                             ? c.detector.threshold
                             : tuned_threshold(calibration, w);
      MetricsRow metrics;
      metrics.w = w;
      metrics.t = t;
      metrics.workload = workload;
      for (const EvalRun& run : runs) {
        const bool tripped = stream_trips(run.stream, w, t);
        if (run.clone) {
          tripped ? ++metrics.tp : ++metrics.fn;
        } else {
          tripped ? ++metrics.fp : ++metrics.tn;
        }
        ResultRow row;
        row.seed = run.seed;
        row.m = m;
        row.w = w;
        row.t = t;
        row.n = c.detector.instances;
        row.workload = workload;
        row.misses = count_misses(run.stream);
        row.verdict = tripped ? "clone-detected" : "no-clone";
        row.truth = run.clone ? "clone" : "none";
        result.rows.push_back(std::move(row));
      }
      result.metrics.push_back(std::move(metrics));
    }
  }
  return result;
}

std::vector<PollutionPoint> run_pollution_sweep(const ExperimentSpec& spec,
                                                std::span<const double> fractions,
                                                unsigned seeds,
                                                std::vector<ResultRow>* rows) {
  const SimConfig& c = spec.base;
  const unsigned m = c.detector.resolved_ways(c.geometry.ways);
  std::vector<PollutionPoint> points;

  for (double fraction : fractions) {
    PollutionPoint point;
    point.fraction = fraction;
    for (unsigned i = 0; i < seeds; ++i) {
      const std::uint64_t seed = c.seed + i;
      CacheGeometry geo = c.geometry;
      geo.slice_hash = SliceHash::default_for(geo.slices);
      World world(geo, c.latency, c.tick_rate, seed);
      const std::uint64_t region = c.build.region_pages;

      world.set_mapping(kGuard, allocate(LinearPolicy{0}, region));
      Monitor guard(kGuard, build_monitoring_set(world, kGuard, c.build),
                    c.detector);
      guard.calibrate(world);
      guard.prime(world);

      const Channel channel =
          select_channel(c.build.channel, c.build.identity);
      const std::uint64_t pool_region =
          2ull * geo.ways * geo.channel_sets() * geo.slices;
      world.set_mapping(kPolluter,
                        allocate(LinearPolicy{region}, pool_region));
      PolluterActor polluter(kPolluter, channel, fraction, c.passes + 1);

      std::vector<Observation> stream;
      for (unsigned pass = 0; pass < c.passes; ++pass) {
        polluter.turn(world);
        std::vector<Observation> obs = guard.probe_pass(world);
        stream.insert(stream.end(), obs.begin(), obs.end());
      }

      const unsigned t = std::max(1u, c.detector.threshold);
      const bool tripped = stream_trips(stream, c.detector.window, t);
      ++point.runs;
      if (tripped) ++point.trips;
      if (rows != nullptr) {
        ResultRow row;
        row.seed = seed;
        row.m = m;
        row.w = c.detector.window;
        row.t = t;
        row.n = c.detector.instances;
        std::ostringstream name;
        name << "pollution:" << fraction;
        row.workload = name.str();
        row.misses = count_misses(stream);
        row.verdict = tripped ? "clone-detected" : "no-clone";
        row.truth = "none";
        rows->push_back(std::move(row));
      }
    }
    points.push_back(point);
  }
  return points;
}

}  // namespace clonesim
