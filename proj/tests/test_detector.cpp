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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <vector>

#include "clonesim/cache.hpp"
#include "clonesim/detector.hpp"
#include "clonesim/eviction.hpp"
#include "clonesim/os.hpp"
#include "clonesim/world.hpp"
#include "support/oracles.hpp"

using namespace clonesim;

namespace {

constexpr std::uint64_t kRegion = 1024;
constexpr unsigned kChannel = 7;

CacheGeometry small_geometry() {
  CacheGeometry geo;
  geo.slices = 1;
  geo.sets_per_slice = 256;  // 4 monitored sets per channel
  geo.ways = 16;
  geo.slice_hash = SliceHash::default_for(1);
  return geo;
}

CacheGeometry wide_geometry() {
  CacheGeometry geo;
  geo.slices = 1;
  geo.sets_per_slice = 1024;  // 16 monitored sets per channel
  geo.ways = 16;
  geo.slice_hash = SliceHash::default_for(1);
  return geo;
}

World make_world(const CacheGeometry& geo, std::uint64_t seed = 1) {
  return World(geo, LatencyModel{}, 1.0, seed);
}

MonitoringSet build_for(World& world, ActorId actor, std::uint64_t base) {
  world.set_mapping(actor, allocate(LinearPolicy{base}, kRegion));
  BuildOptions opts;
  opts.channel = kChannel;
  opts.region_pages = kRegion;
  return build_monitoring_set(world, actor, opts);
}

Observation hit_obs(double reading = 100.0) {
  return Observation{false, false, reading};
}

Observation miss_obs(double reading = 450.0) {
  return Observation{true, true, reading};
}

std::size_t first_inferred_miss(const std::vector<Observation>& obs) {
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].inferred_miss) return i;
  }
  return obs.size();
}

}  // namespace

TEST_CASE("prime-depth intervals match the shared-capacity arithmetic") {
  // A depth m is valid for n copies of a W-way set iff n copies fit
  // (n*m <= W) while n+1 copies overflow ((n+1)*m > W).
  using Interval = std::pair<unsigned, unsigned>;
  const std::array<std::optional<Interval>, 17> expected16 = {
      std::nullopt,          // n = 0
      Interval{9, 16},       // one guarded copy
      Interval{6, 8},        Interval{5, 5},  Interval{4, 4},
      Interval{3, 3},                         // n = 5
      std::nullopt,          std::nullopt,    // 6 and 7: no integer depth
      Interval{2, 2},                         // n = 8
      std::nullopt,          std::nullopt,    std::nullopt,
      std::nullopt,          std::nullopt,    std::nullopt,
      std::nullopt,          Interval{1, 1},  // n = 16
  };
  for (unsigned n = 0; n < expected16.size(); ++n) {
    const auto got = ways_for_instances(16, n);
    CAPTURE(n);
    REQUIRE(got.has_value() == expected16[n].has_value());
    if (got) {
      CHECK(got->first == expected16[n]->first);
      CHECK(got->second == expected16[n]->second);
    }
  }
  CHECK_FALSE(ways_for_instances(16, 17).has_value());
  CHECK_FALSE(ways_for_instances(0, 1).has_value());
  CHECK_FALSE(ways_for_instances(16, 0).has_value());

  // Every valid interval satisfies the defining inequalities.
  for (unsigned w = 1; w <= 32; ++w) {
    for (unsigned n = 1; n <= w + 1; ++n) {
      const auto got = ways_for_instances(w, n);
      if (!got) continue;
      for (unsigned m = got->first; m <= got->second; ++m) {
        CHECK(m * n <= w);
        CHECK(m * (n + 1) > w);
      }
      if (got->first > 1) CHECK((got->first - 1) * (n + 1) <= w);
      CHECK((got->second + 1) * n > w);
    }
  }
}

TEST_CASE("default probe depth sits inside the valid interval") {
  CHECK(default_probe_ways(16, 1) == 12);  // solo guard keeps mid-range slack
  CHECK(default_probe_ways(16, 2) == 8);
  CHECK(default_probe_ways(16, 3) == 5);
  CHECK(default_probe_ways(16, 4) == 4);
  CHECK(default_probe_ways(16, 5) == 3);
  CHECK(default_probe_ways(16, 8) == 2);
  CHECK(default_probe_ways(16, 16) == 1);
  CHECK_THROWS_AS(default_probe_ways(16, 6), std::invalid_argument);
  CHECK_THROWS_AS(default_probe_ways(16, 7), std::invalid_argument);
  CHECK_THROWS_AS(default_probe_ways(16, 0), std::invalid_argument);

  for (unsigned w : {4u, 8u, 12u, 16u, 24u}) {
    for (unsigned n = 1; n <= w; ++n) {
      const auto interval = ways_for_instances(w, n);
      if (!interval) continue;
      const unsigned m = default_probe_ways(w, n);
      CHECK(m >= interval->first);
      CHECK(m <= interval->second);
    }
  }
}

TEST_CASE("the estimation ladder descends through strictly shrinking depths") {
  const std::vector<std::pair<unsigned, unsigned>> expected = {
      {1, 12}, {2, 8}, {3, 5}, {4, 4}, {5, 3}, {8, 2}, {16, 1}};
  CHECK(estimation_ladder(16) == expected);

  const std::vector<std::pair<unsigned, unsigned>> expected4 = {
      {1, 3}, {2, 2}, {4, 1}};
  CHECK(estimation_ladder(4) == expected4);

  for (unsigned w : {2u, 4u, 8u, 16u, 32u}) {
    const auto ladder = estimation_ladder(w);
    REQUIRE_FALSE(ladder.empty());
    CHECK(ladder.front().first == 1);
    CHECK(ladder.back().second == 1);
    for (std::size_t i = 1; i < ladder.size(); ++i) {
      CHECK(ladder[i].first > ladder[i - 1].first);
      CHECK(ladder[i].second < ladder[i - 1].second);
    }
  }
}

TEST_CASE("detector configuration validation") {
  DetectorConfig config;
  CHECK_NOTHROW(config.validate(16));
  CHECK(config.resolved_ways(16) == 12);

  DetectorConfig explicit_depth = config;
  explicit_depth.ways_primed = 10;
  CHECK(explicit_depth.resolved_ways(16) == 10);
  CHECK_NOTHROW(explicit_depth.validate(16));

  DetectorConfig zero_instances = config;
  zero_instances.instances = 0;
  CHECK_THROWS_AS(zero_instances.validate(16), std::invalid_argument);

  DetectorConfig impossible = config;
  impossible.instances = 6;  // no depth separates 6 from 7 copies at W=16
  CHECK_THROWS_AS(impossible.validate(16), std::invalid_argument);

  DetectorConfig shallow = config;
  shallow.ways_primed = 8;  // 8*2 = 16: a second copy would fit silently
  CHECK_THROWS_AS(shallow.validate(16), std::invalid_argument);

  DetectorConfig two_up = config;
  two_up.instances = 2;
  two_up.ways_primed = 8;  // same depth is fine when sized for two copies
  CHECK_NOTHROW(two_up.validate(16));

  DetectorConfig no_window = config;
  no_window.window = 0;
  CHECK_THROWS_AS(no_window.validate(16), std::invalid_argument);

  DetectorConfig bad_threshold = config;
  bad_threshold.threshold = 0;
  CHECK_THROWS_AS(bad_threshold.validate(16), std::invalid_argument);
  bad_threshold.threshold = config.window + 1;
  CHECK_THROWS_AS(bad_threshold.validate(16), std::invalid_argument);

  DetectorConfig one_sample = config;
  one_sample.calibration_samples = 1;
  CHECK_THROWS_AS(one_sample.validate(16), std::invalid_argument);
}

TEST_CASE("window features count misses and the longest run") {
  const std::vector<Observation> window = {
      miss_obs(), miss_obs(), hit_obs(),  miss_obs(),
      miss_obs(), miss_obs(), hit_obs(),  miss_obs()};
  const WindowFeatures f = window_features(window);
  CHECK(f.miss_count == doctest::Approx(6.0));
  CHECK(f.max_run == doctest::Approx(3.0));

  const std::vector<Observation> clean(16, hit_obs());
  const WindowFeatures g = window_features(clean);
  CHECK(g.miss_count == doctest::Approx(0.0));
  CHECK(g.max_run == doctest::Approx(0.0));
}

TEST_CASE("anomaly screening flags stalls and impossible readings") {
  const LatencyModel model;  // hit band [60, 140], miss band [300, 600]
  CHECK(model.in_hit_support(60.0));
  CHECK(model.in_hit_support(140.0));
  CHECK(model.in_miss_support(300.0));
  CHECK(model.in_miss_support(600.0));
  CHECK(model.out_of_band(59.9));
  CHECK(model.out_of_band(250.0));  // the gap between the two populations
  CHECK(model.out_of_band(600.1));
  CHECK_FALSE(model.out_of_band(100.0));
  CHECK_FALSE(model.out_of_band(450.0));

  std::vector<Observation> window(8, hit_obs());
  CHECK_FALSE(detect_anomaly(window, model, 1.0).has_value());

  window[3] = miss_obs();
  CHECK_FALSE(detect_anomaly(window, model, 1.0).has_value());

  auto stalled = window;
  stalled[5].reading = 0.0;
  CHECK(detect_anomaly(stalled, model, 1.0) == AnomalyReason::ClockStall);

  auto skewed = window;
  skewed[2].reading = 225.0;  // a miss seen through a half-speed counter
  CHECK(detect_anomaly(skewed, model, 1.0) == AnomalyReason::OutOfBandLatency);

  // Readings are counter ticks: the band test must unscale by the tick rate.
  auto doubled = window;
  for (auto& o : doubled) o.reading *= 2.0;
  CHECK_FALSE(detect_anomaly(doubled, model, 2.0).has_value());
  CHECK(detect_anomaly(doubled, model, 1.0).has_value());
}

TEST_CASE("threshold classification over a window") {
  const LatencyModel model;
  std::vector<Observation> window(16, hit_obs());

  WindowVerdict clean = classify_threshold(window, 1, model, 1.0);
  CHECK(clean.verdict == Verdict::NoClone);
  CHECK_FALSE(clean.anomaly.has_value());

  window[4] = miss_obs();
  WindowVerdict tripped = classify_threshold(window, 1, model, 1.0);
  CHECK(tripped.verdict == Verdict::CloneDetected);
  CHECK(tripped.posterior_clone == doctest::Approx(1.0));

  // A higher threshold tolerates the same single miss.
  CHECK(classify_threshold(window, 2, model, 1.0).verdict == Verdict::NoClone);

  // Anomalies take precedence over the miss count.
  window[7].reading = 0.0;
  WindowVerdict anomalous = classify_threshold(window, 1, model, 1.0);
  CHECK(anomalous.verdict == Verdict::Anomaly);
  CHECK(anomalous.anomaly == AnomalyReason::ClockStall);
}

TEST_CASE("naive bayes separates the training populations") {
  std::vector<WindowFeatures> clone_rows;
  std::vector<WindowFeatures> clear_rows;
  for (int i = 0; i < 12; ++i) {
    clone_rows.push_back({10.0 + (i % 3), 4.0 + (i % 2)});
    clear_rows.push_back({0.0 + (i % 2), 0.0 + (i % 2)});
  }

  NaiveBayesClassifier bayes;
  CHECK_FALSE(bayes.trained());
  CHECK_THROWS_AS(bayes.posterior_clone(WindowFeatures{}), SimError);
  CHECK_THROWS_AS(bayes.train({}, clear_rows), std::invalid_argument);

  bayes.train(clone_rows, clear_rows);
  CHECK(bayes.trained());
  CHECK(bayes.posterior_clone({11.0, 4.0}) > 0.99);
  CHECK(bayes.posterior_clone({0.0, 0.0}) < 0.01);
  CHECK(bayes.classify({11.0, 4.0}) == Verdict::CloneDetected);
  CHECK(bayes.classify({0.0, 0.0}) == Verdict::NoClone);
}

TEST_CASE("verdict and reason names are stable") {
  CHECK(std::strcmp(to_string(Verdict::NoClone), "no-clone") == 0);
  CHECK(std::strcmp(to_string(Verdict::CloneDetected), "clone-detected") == 0);
  CHECK(std::strcmp(to_string(Verdict::Anomaly), "anomaly") == 0);
  CHECK(std::strcmp(to_string(AnomalyReason::ClockStall), "clock-stall") == 0);
  CHECK(std::strcmp(to_string(AnomalyReason::OutOfBandLatency),
                    "out-of-band-latency") == 0);
  CHECK(std::strcmp(to_string(AnomalyReason::CoverageFailure),
                    "coverage-failure") == 0);
  CHECK(std::strcmp(to_string(AnomalyReason::ResidencyFailure),
                    "residency-failure") == 0);
  CHECK(std::strcmp(to_string(AnomalyReason::IndistinguishableLatency),
                    "indistinguishable-latency") == 0);
}

TEST_CASE("monitor construction rejects empty or invalid shapes") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo);
  MonitoringSet mset = build_for(world, 1, 0);

  CHECK_THROWS_AS(Monitor(1, MonitoringSet{}, DetectorConfig{}),
                  std::invalid_argument);

  DetectorConfig bad;
  bad.window = 0;
  CHECK_THROWS_AS(Monitor(1, mset, bad), std::invalid_argument);

  Monitor monitor(1, mset, DetectorConfig{});
  CHECK(monitor.actor() == 1);
  CHECK(monitor.probe_ways() == 12);
  CHECK(monitor.monitoring().sets.size() == geo.channel_sets() * geo.slices);
}

TEST_CASE("coverage check demands one full-depth set per channel cell") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo);
  MonitoringSet mset = build_for(world, 1, 0);

  Monitor full(1, mset, DetectorConfig{});
  CHECK_FALSE(full.check_coverage(geo).has_value());

  MonitoringSet missing_set = mset;
  missing_set.sets.pop_back();
  Monitor short_monitor(1, missing_set, DetectorConfig{});
  CHECK(short_monitor.check_coverage(geo) == AnomalyReason::CoverageFailure);

  MonitoringSet thin = mset;
  thin.sets.back().members.pop_back();
  Monitor thin_monitor(1, thin, DetectorConfig{});
  CHECK(thin_monitor.check_coverage(geo) == AnomalyReason::CoverageFailure);

  DetectorConfig relaxed;
  relaxed.require_full_coverage = false;
  Monitor relaxed_monitor(1, missing_set, relaxed);
  CHECK_FALSE(relaxed_monitor.check_coverage(geo).has_value());
}

TEST_CASE("calibration brackets the hit and miss populations") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo, 11);
  MonitoringSet mset = build_for(world, 1, 0);
  Monitor monitor(1, mset, DetectorConfig{});

  const CalibrationResult cal = monitor.calibrate(world);
  REQUIRE(cal.ok);
  CHECK_FALSE(cal.anomaly.has_value());
  const LatencyModel& model = world.latency();
  CHECK(model.in_miss_support(cal.miss_reading));
  CHECK(model.in_hit_support(cal.hit_reading));
  CHECK(cal.hit_reading < cal.threshold);
  CHECK(cal.threshold < cal.miss_reading);

  // Recalibration advances to untouched lines, so it stays clean.
  const CalibrationResult again = monitor.calibrate(world);
  CHECK(again.ok);
  CHECK(model.in_miss_support(again.miss_reading));
  CHECK(model.in_hit_support(again.hit_reading));

  // Identical platform, identical seed: bit-identical calibration.
  World world2 = make_world(geo, 11);
  MonitoringSet mset2 = build_for(world2, 1, 0);
  Monitor monitor2(1, mset2, DetectorConfig{});
  const CalibrationResult cal2 = monitor2.calibrate(world2);
  CHECK(cal2.hit_reading == cal.hit_reading);
  CHECK(cal2.miss_reading == cal.miss_reading);
  CHECK(cal2.threshold == cal.threshold);
}

TEST_CASE("calibration drift compares thresholds against a tolerance") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo);
  MonitoringSet mset = build_for(world, 1, 0);
  Monitor monitor(1, mset, DetectorConfig{});
  const CalibrationResult cal = monitor.calibrate(world);
  REQUIRE(cal.ok);

  CHECK_FALSE(monitor.calibration_drifted(cal, 0.05));

  CalibrationResult shifted = cal;
  shifted.threshold = cal.threshold * 1.5;
  CHECK(monitor.calibration_drifted(shifted, 0.25));

  CalibrationResult broken = cal;
  broken.ok = false;
  CHECK(monitor.calibration_drifted(broken, 0.25));
}

TEST_CASE("priming claims the configured depth in every monitored set") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo);
  MonitoringSet mset = build_for(world, 1, 0);
  Monitor monitor(1, mset, DetectorConfig{});
  REQUIRE(monitor.calibrate(world).ok);
  CHECK_FALSE(monitor.prime(world).has_value());

  const PageMapping& mapping = world.mapping(1);
  for (const EvictionSet& s : mset.sets) {
    const DecomposedAddress where =
        decompose(mapping.translate(s.members.front()), geo);
    CHECK(world.cache().ways_owned_by(where.slice, where.set_index, 1) ==
          monitor.probe_ways());
    // Each primed member is individually resident.
    for (unsigned j = 0; j < monitor.probe_ways(); ++j) {
      CHECK(world.cache().resident(mapping.translate(s.members[j])));
    }
  }

  // A probe pass straight after priming reads pure hits.
  const std::vector<Observation> obs = monitor.probe_pass(world);
  CHECK(obs.size() == mset.sets.size() * monitor.probe_ways());
  for (const Observation& o : obs) {
    CHECK_FALSE(o.miss);
    CHECK_FALSE(o.inferred_miss);
  }
}

TEST_CASE("probe order controls how fast a disturbance is reached") {
  // Evict the guard's lines in the *last* monitored set only. The
  // set-interleaved walk reaches that set within the first way sweep; the
  // column-major walk first drains every earlier set.
  const CacheGeometry geo = small_geometry();
  World base = make_world(geo);
  MonitoringSet mset = build_for(base, 1, 0);
  MonitoringSet intruder = build_for(base, 9, kRegion);

  {
    Monitor monitor(1, mset, DetectorConfig{});
    REQUIRE_FALSE(monitor.prime(base).has_value());
  }

  // The intruder floods the cache set behind the guard's last eviction set
  // with its own sixteen lines, forcing the guard's lines out of that set.
  const DecomposedAddress target = decompose(
      base.mapping(1).translate(mset.sets.back().members.front()), geo);
  bool flooded = false;
  for (const EvictionSet& s : intruder.sets) {
    const DecomposedAddress where =
        decompose(base.mapping(9).translate(s.members.front()), geo);
    if (where.set_index != target.set_index || where.slice != target.slice) {
      continue;
    }
    for (const VirtualAddress va : s.members) base.raw_access(9, va);
    flooded = true;
  }
  REQUIRE(flooded);

  const std::size_t n_sets = mset.sets.size();
  REQUIRE(n_sets == 4);

  World interleaved_world = base;
  DetectorConfig interleaved_cfg;
  interleaved_cfg.probe_order = ProbeOrder::SetInterleaved;
  Monitor interleaved(1, mset, interleaved_cfg);
  const auto obs_i = interleaved.probe_pass(interleaved_world);

  World column_world = base;
  DetectorConfig column_cfg;
  column_cfg.probe_order = ProbeOrder::ColumnMajor;
  Monitor column(1, mset, column_cfg);
  const auto obs_c = column.probe_pass(column_world);

  const std::size_t first_i = first_inferred_miss(obs_i);
  const std::size_t first_c = first_inferred_miss(obs_c);
  REQUIRE(first_i < obs_i.size());
  REQUIRE(first_c < obs_c.size());
  CHECK(first_i == n_sets - 1);
  CHECK(first_c == (n_sets - 1) * column.probe_ways());
  CHECK(first_i < first_c);

  // Inferred misses agree with the cache model's ground truth.
  for (const auto& o : obs_i) CHECK(o.inferred_miss == o.miss);
  for (const auto& o : obs_c) CHECK(o.inferred_miss == o.miss);
}

TEST_CASE("an undisturbed guard reports no clone across many passes") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo, 23);
  MonitoringSet mset = build_for(world, 1, 0);
  Monitor monitor(1, mset, DetectorConfig{});

  const DetectionResult result = monitor.run(world, 8);
  CHECK(result.verdict == Verdict::NoClone);
  CHECK(result.passes == 8);
  CHECK(result.calibration.ok);
  CHECK(result.observations.size() ==
        8 * mset.sets.size() * monitor.probe_ways());
  REQUIRE_FALSE(result.windows.empty());
  for (const WindowVerdict& wv : result.windows) {
    CHECK(wv.verdict == Verdict::NoClone);
    CHECK(wv.features.miss_count == doctest::Approx(0.0));
  }
}

TEST_CASE("a sibling priming between prime and probe is detected") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo, 31);
  MonitoringSet mine = build_for(world, 1, 0);
  MonitoringSet theirs = build_for(world, 2, kRegion);

  Monitor guard(1, mine, DetectorConfig{});
  Monitor sibling(2, theirs, DetectorConfig{});

  REQUIRE(guard.calibrate(world).ok);
  REQUIRE_FALSE(guard.prime(world).has_value());
  // The clone claims its own 12 ways of the same channel sets: 24 > 16.
  REQUIRE(sibling.calibrate(world).ok);
  REQUIRE_FALSE(sibling.prime(world).has_value());

  const std::vector<Observation> obs = guard.probe_pass(world);
  const DetectionResult result = guard.evaluate(world, obs);
  CHECK(result.verdict == Verdict::CloneDetected);
  CHECK(window_features(obs).miss_count >= 1.0);
}

TEST_CASE("monitor actor walks calibrate, prime and probe phases") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo);
  MonitoringSet mset = build_for(world, 1, 0);
  MonitorActor actor(Monitor(1, mset, DetectorConfig{}), 2);

  CHECK_FALSE(actor.finished());
  CHECK(actor.turn(world));   // calibrate
  CHECK(actor.turn(world));   // prime
  CHECK(actor.turn(world));   // first probe pass
  CHECK_FALSE(actor.turn(world));  // second pass exhausts the budget
  CHECK(actor.finished());
  CHECK_FALSE(actor.turn(world));  // done stays done

  const DetectionResult result = actor.result(world);
  CHECK(result.verdict == Verdict::NoClone);
  CHECK(result.observations.size() == 2 * mset.sets.size() * 12);
}

TEST_CASE("a fleet of two clones detects itself; a fleet of one stays quiet") {
  const CacheGeometry geo = wide_geometry();

  FleetOptions options;
  options.build.channel = kChannel;
  options.build.region_pages = kRegion;
  options.passes = 4;

  {
    World world = make_world(geo, 5);
    options.clones = 1;
    const FleetResult result = run_clone_fleet(world, options);
    REQUIRE(result.per_clone.size() == 1);
    CHECK(result.verdict == Verdict::NoClone);
    CHECK(result.per_clone[0].verdict == Verdict::NoClone);
  }
  {
    World world = make_world(geo, 5);
    options.clones = 2;
    const FleetResult result = run_clone_fleet(world, options);
    REQUIRE(result.per_clone.size() == 2);
    CHECK(result.verdict == Verdict::CloneDetected);
    // Both copies run the same binary, so both see the overflow.
    CHECK(result.per_clone[0].verdict == Verdict::CloneDetected);
    CHECK(result.per_clone[1].verdict == Verdict::CloneDetected);
  }
  {
    World world = make_world(geo, 5);
    options.clones = 0;
    CHECK_THROWS_AS(run_clone_fleet(world, options), std::invalid_argument);
  }
}

TEST_CASE("first sign of a second clone arrives within one way sweep") {
  // With set-interleaved probing the first inferred miss appears within the
  // first sweep over the monitored sets: channel_sets * slices observations.
  const CacheGeometry geo = wide_geometry();
  World world = make_world(geo, 17);
  MonitoringSet mine = build_for(world, 1, 0);
  MonitoringSet theirs = build_for(world, 2, kRegion);

  Monitor guard(1, mine, DetectorConfig{});
  Monitor sibling(2, theirs, DetectorConfig{});
  REQUIRE(guard.calibrate(world).ok);
  REQUIRE_FALSE(guard.prime(world).has_value());
  REQUIRE(sibling.calibrate(world).ok);
  REQUIRE_FALSE(sibling.prime(world).has_value());

  const std::vector<Observation> obs = guard.probe_pass(world);
  const std::size_t budget =
      static_cast<std::size_t>(geo.channel_sets()) * geo.slices;
  CHECK(first_inferred_miss(obs) < budget);
}

TEST_CASE("a stalled counting thread is an anomaly, not a clone") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo, 41);
  MonitoringSet mset = build_for(world, 1, 0);
  Monitor monitor(1, mset, DetectorConfig{});

  REQUIRE(monitor.calibrate(world).ok);
  REQUIRE_FALSE(monitor.prime(world).has_value());

  world.clock().add_perturbation({world.now(), 0, 0.0});  // open-ended stall
  const std::vector<Observation> obs = monitor.probe_pass(world);
  for (const Observation& o : obs) CHECK(o.reading == 0.0);
  const DetectionResult result = monitor.evaluate(world, obs);
  CHECK(result.verdict == Verdict::Anomaly);
  CHECK(result.anomaly == AnomalyReason::ClockStall);
}

TEST_CASE("a slowed counting thread lands readings outside both bands") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo, 43);
  MonitoringSet mset = build_for(world, 1, 0);
  Monitor monitor(1, mset, DetectorConfig{});

  REQUIRE(monitor.calibrate(world).ok);
  REQUIRE_FALSE(monitor.prime(world).has_value());

  // Counting thread at half speed: hits read near 50, misses near 225.
  world.clock().add_perturbation({world.now(), 0, 0.5});
  const std::vector<Observation> obs = monitor.probe_pass(world);
  const DetectionResult result = monitor.evaluate(world, obs);
  CHECK(result.verdict == Verdict::Anomaly);
  CHECK(result.anomaly == AnomalyReason::OutOfBandLatency);
}

TEST_CASE("calibration under a stalled clock fails before any probing") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo, 47);
  MonitoringSet mset = build_for(world, 1, 0);
  Monitor monitor(1, mset, DetectorConfig{});

  world.clock().add_perturbation({0, 0, 0.0});
  const DetectionResult result = monitor.run(world, 2);
  CHECK(result.verdict == Verdict::Anomaly);
  CHECK(result.anomaly == AnomalyReason::ClockStall);
  CHECK_FALSE(result.calibration.ok);
  CHECK(result.observations.empty());
}

TEST_CASE("an unmapped monitored page degrades into a residency failure") {
  const CacheGeometry geo = small_geometry();
  World world = make_world(geo, 53);
  MonitoringSet mset = build_for(world, 1, 0);
  Monitor monitor(1, mset, DetectorConfig{});
  REQUIRE(monitor.calibrate(world).ok);

  const std::uint64_t vpn =
      mset.sets.front().members.front().value >> kPageOffsetBits;
  world.mapping(1).unmap(vpn);
  CHECK(monitor.prime(world) == AnomalyReason::ResidencyFailure);
}

TEST_CASE("clone-count estimation walks the ladder to the exact census") {
  const CacheGeometry geo = small_geometry();
  EstimateOptions options;
  options.build.channel = kChannel;
  options.build.region_pages = kRegion;

  {
    World world = make_world(geo, 61);
    const std::vector<ActorId> nobody;
    CHECK(estimate_clone_count(world, 1, nobody, options) == 0);
  }
  {
    World world = make_world(geo, 61);
    const std::vector<ActorId> one = {2};
    CHECK(estimate_clone_count(world, 1, one, options) == 1);
  }
  {
    World world = make_world(geo, 61);
    const std::vector<ActorId> two = {2, 3};
    CHECK(estimate_clone_count(world, 1, two, options) == 2);
  }
  {
    // Same seed, same script: the census is reproducible.
    World a = make_world(geo, 67);
    World b = make_world(geo, 67);
    const std::vector<ActorId> others = {2, 3};
    CHECK(estimate_clone_count(a, 1, others, options) ==
          estimate_clone_count(b, 1, others, options));
  }
}
