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

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clonesim/config.hpp"
#include "clonesim/detector.hpp"
#include "clonesim/experiment.hpp"
#include "clonesim/eviction.hpp"
#include "clonesim/linearity.hpp"
#include "clonesim/scenarios.hpp"
#include "clonesim/world.hpp"

namespace {

using namespace clonesim;

struct GlobalArgs {
  std::string config_path;
  std::string out_prefix = "clonesim-out";
  std::optional<std::uint64_t> seed;
};

SimConfig effective_config(const GlobalArgs& args) {
  SimConfig config =
      args.config_path.empty() ? SimConfig{} : SimConfig::load(args.config_path);
  if (args.seed) config.seed = *args.seed;
  return config;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

void emit_manifest(const SimConfig& config, const GlobalArgs& args,
                   const std::string& command,
                   std::vector<std::pair<std::string, std::string>> outputs) {
  const std::string path = args.out_prefix + ".manifest.json";
  write_text(path, run_manifest(config, command, outputs));
  std::cout << "manifest: " << path << "\n";
}

int cmd_build_eviction(const GlobalArgs& args) {
  SimConfig config = effective_config(args);
  World world = config.make_world();
  world.set_mapping(1, allocate(LinearPolicy{0}, config.build.region_pages));

  const Channel channel =
      select_channel(config.build.channel, config.build.identity);
  const SpoilerScan scan =
      build_spoiler_groups(world, 1, channel, config.build.region_pages);
  const CoverageReport coverage = verify_coverage(scan);
  std::cout << "channel " << channel.value() << ": " << coverage.summary()
            << "\n";
  if (coverage.manipulation_evidence) {
    std::cout << "coverage shows manipulation evidence; aborting\n";
    return 2;
  }

  const MonitoringSet mset = build_monitoring_set(world, 1, config.build);
  const std::string path = args.out_prefix + "-monitoring.json";
  write_text(path, mset.to_json());
  std::cout << "monitoring set: " << mset.sets.size() << " sets x "
            << mset.ways << " ways -> " << path << "\n";
  emit_manifest(config, args, "build-eviction", {{"monitoring", path}});
  return 0;
}

int cmd_verify_linearity(const GlobalArgs& args, const std::string& policy,
                         const std::string& script_path,
                         std::uint64_t permuted_seed) {
  SimConfig config = effective_config(args);
  AllocationPolicy alloc = LinearPolicy{0};
  if (policy == "permuted") {
    alloc = PermutedPolicy{permuted_seed, 0};
  } else if (policy == "script") {
    std::ifstream in(script_path);
    if (!in) throw std::runtime_error("cannot open " + script_path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    alloc = AdversarialPolicy{0, AdversaryScript::from_json(buffer.str())};
  } else if (policy != "linear") {
    throw CLI::ValidationError("policy must be linear, permuted or script");
  }
  const PageMapping mapping = allocate(alloc, config.build.region_pages);
  const ConditionReport report =
      check_conditions(mapping, config.build.region_pages);
  std::cout << report.summary() << "\n";
  std::cout << (report.all_passed() ? "mapping is consistent with a linear layout"
                                    : "mapping violates the expected layout")
            << "\n";
  return report.all_passed() ? 0 : 2;
}

int cmd_search_nonlinear(const GlobalArgs& args, std::size_t max_solutions,
                         bool affine_constraint, bool allow_affine) {
  SearchOptions options;
  options.max_solutions = max_solutions;
  options.add_affinity_constraint = affine_constraint;
  options.require_nonaffine = !allow_affine && !affine_constraint;
  const SearchResult result = search_nonlinear(options);
  std::cout << "solutions: " << result.solutions.size() << " (nodes "
            << result.nodes_explored << ", "
            << (result.exhausted ? "exhausted" : "budget-capped") << ")\n";
  std::vector<std::pair<std::string, std::string>> outputs;
  for (std::size_t i = 0; i < result.solutions.size(); ++i) {
    const FoundMapping& f = result.solutions[i];
    std::cout << "  mapping " << i << (f.affine ? " (affine):" : ":");
    for (std::uint64_t ppn : f.ppn_of_vpn) std::cout << " " << ppn;
    std::cout << "\n";
    const AdversaryScript script =
        export_mapping_script(f, 1, 2 * f.ppn_of_vpn.size());
    const std::string path =
        args.out_prefix + "-mapping-" + std::to_string(i) + ".json";
    write_text(path, script.to_json());
    outputs.emplace_back("mapping-" + std::to_string(i), path);
  }
  emit_manifest(effective_config(args), args, "search-nonlinear", outputs);
  return 0;
}

int cmd_detect(const GlobalArgs& args) {
  SimConfig config = effective_config(args);
  World world = config.make_world();
  FleetOptions options;
  options.clones = config.clones;
  options.config = config.detector;
  options.build = config.build;
  options.passes = config.passes;
  const FleetResult fleet = run_clone_fleet(world, options);

  std::vector<ResultRow> rows;
  for (std::size_t i = 0; i < fleet.per_clone.size(); ++i) {
    const DetectionResult& r = fleet.per_clone[i];
    ResultRow row;
    row.seed = config.seed;
    row.m = config.detector.resolved_ways(config.geometry.ways);
    row.w = config.detector.window;
    row.t = config.detector.threshold;
    row.n = config.detector.instances;
    row.workload = config.workload;
    std::uint64_t misses = 0;
    for (const Observation& o : r.observations) misses += o.inferred_miss;
    row.misses = misses;
    row.verdict = to_string(r.verdict);
    row.truth = config.clones > 1 ? "clone" : "none";
    rows.push_back(std::move(row));
    std::cout << "clone " << (i + 1) << ": " << to_string(r.verdict);
    if (r.anomaly) std::cout << " (" << to_string(*r.anomaly) << ")";
    std::cout << "\n";
  }
  std::cout << "fleet verdict: " << to_string(fleet.verdict) << "\n";

  const std::string csv_path = args.out_prefix + ".csv";
  std::ofstream csv(csv_path);
  write_csv(csv, rows);
  emit_manifest(config, args, "detect", {{"results", csv_path}});
  return 0;
}

int cmd_attack(const GlobalArgs& args, const std::string& name,
               bool with_detector) {
  SimConfig config = effective_config(args);
  const ScenarioKind kind = scenario_from_string(name);
  ScenarioOptions options;
  options.with_detector = with_detector;
  options.detector = config.detector;
  options.build = config.build;
  const auto factory = [&config]() {
    CacheGeometry geo = config.geometry;
    geo.slice_hash = SliceHash::default_for(geo.slices);
    return Platform(geo, config.latency, config.tick_rate, config.seed);
  };
  const AttackOutcome outcome = run_scenario(kind, factory, options);
  std::cout << "scenario " << name
            << (with_detector ? " (guarded)" : " (unguarded)") << "\n"
            << "  forked:   " << (outcome.forked ? "yes" : "no") << "\n"
            << "  detected: " << (outcome.detected ? "yes" : "no") << "\n"
            << "  aborted:  " << (outcome.aborted ? "yes" : "no") << "\n"
            << "  " << outcome.description << "\n";
  return 0;
}

int cmd_sweep(const GlobalArgs& args, const std::string& spec_path) {
  ExperimentSpec spec = ExperimentSpec::load(spec_path);
  if (args.seed) spec.base.seed = *args.seed;

  std::vector<ResultRow> rows;
  std::ostringstream metrics_csv;
  if (!spec.pollution.empty()) {
    const auto points = run_pollution_sweep(spec, spec.pollution,
                                            spec.evaluation_seeds, &rows);
    metrics_csv << "fraction,runs,trips,fpr\n";
    for (const PollutionPoint& p : points) {
      metrics_csv << p.fraction << "," << p.runs << "," << p.trips << ","
                  << p.fpr() << "\n";
      std::cout << "fraction " << p.fraction << ": fpr " << p.fpr() << "\n";
    }
  } else {
    const SweepResult result = run_window_sweep(spec);
    rows = result.rows;
    metrics_csv << "w,t,workload,tp,fp,tn,fn,f1,fpr,fnr\n";
    for (const MetricsRow& m : result.metrics) {
      metrics_csv << m.w << "," << m.t << "," << m.workload << "," << m.tp
                  << "," << m.fp << "," << m.tn << "," << m.fn << "," << m.f1()
                  << "," << m.fpr() << "," << m.fnr() << "\n";
      std::cout << "w=" << m.w << " t=" << m.t << " " << m.workload
                << ": f1=" << m.f1() << " fpr=" << m.fpr() << " fnr=" << m.fnr()
                << "\n";
    }
  }

  const std::string csv_path = args.out_prefix + ".csv";
  std::ofstream csv(csv_path);
  write_csv(csv, rows);
  const std::string metrics_path = args.out_prefix + "-metrics.csv";
  write_text(metrics_path, metrics_csv.str());
  emit_manifest(spec.base, args, "sweep",
                {{"results", csv_path}, {"metrics", metrics_path}});
  return 0;
}

int cmd_estimate(const GlobalArgs& args, unsigned others) {
  SimConfig config = effective_config(args);
  World world = config.make_world();
  std::vector<ActorId> other_ids;
  for (unsigned i = 0; i < others; ++i) {
    other_ids.push_back(static_cast<ActorId>(i + 2));
  }
  EstimateOptions options;
  options.build = config.build;
  options.window = config.detector.window;
  options.threshold = std::max(1u, config.detector.threshold);
  const unsigned estimate =
      estimate_clone_count(world, 1, other_ids, options);
  std::cout << "estimated other instances: " << estimate << " (actual "
            << others << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Deterministic shared-cache simulator for enclave clone detection"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs args;
  app.add_option("--config", args.config_path, "JSON configuration file");
  app.add_option("--out", args.out_prefix, "output path prefix");
  std::uint64_t seed_value = 0;
  CLI::Option* seed_opt =
      app.add_option("--seed", seed_value, "override the configured seed");

  CLI::App* build = app.add_subcommand(
      "build-eviction", "survey the channel and emit the monitoring set");

  std::string policy = "linear";
  std::string script_path;
  std::uint64_t permuted_seed = 1;
  CLI::App* verify = app.add_subcommand(
      "verify-linearity", "check a mapping against the linear-layout rules");
  verify->add_option("--policy", policy, "linear | permuted | script");
  verify->add_option("--script", script_path, "adversary script (policy=script)");
  verify->add_option("--permuted-seed", permuted_seed,
                     "frame shuffle seed (policy=permuted)");

  std::size_t max_solutions = 4;
  bool affine_constraint = false;
  bool allow_affine = false;
  CLI::App* search = app.add_subcommand(
      "search-nonlinear",
      "exhaustively search the miniature space for non-linear mappings");
  search->add_option("--max-solutions", max_solutions, "stop after this many");
  search->add_flag("--affine-constraint", affine_constraint,
                   "add the affinity constraint (expect identity only)");
  search->add_flag("--allow-affine", allow_affine, "report affine solutions too");

  CLI::App* detect =
      app.add_subcommand("detect", "run the clone fleet and classify");

  std::string scenario;
  bool with_detector = false;
  CLI::App* attack =
      app.add_subcommand("attack", "replay a cloning attack scenario");
  attack->add_option("scenario", scenario, "bisgx | fim | forkvs | bug")
      ->required();
  attack->add_flag("--with-detector", with_detector,
                   "arm the clone guard inside each enclave");

  std::string spec_path;
  CLI::App* sweep =
      app.add_subcommand("sweep", "parameter sweep driven by a spec file");
  sweep->add_option("--spec", spec_path, "experiment spec (JSON)")->required();

  unsigned others = 1;
  CLI::App* estimate = app.add_subcommand(
      "estimate-clones", "bound the number of co-resident copies");
  estimate->add_option("--others", others,
                       "actual other instances to simulate");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) args.seed = seed_value;

  try {
    if (build->parsed()) return cmd_build_eviction(args);
    if (verify->parsed()) {
      return cmd_verify_linearity(args, policy, script_path, permuted_seed);
    }
    if (search->parsed()) {
      return cmd_search_nonlinear(args, max_solutions, affine_constraint,
                                  allow_affine);
    }
    if (detect->parsed()) return cmd_detect(args);
    if (attack->parsed()) return cmd_attack(args, scenario, with_detector);
    if (sweep->parsed()) return cmd_sweep(args, spec_path);
    if (estimate->parsed()) return cmd_estimate(args, others);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
