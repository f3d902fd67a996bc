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

#include "clonesim/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace clonesim {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

ReplacementPolicy replacement_from_string(const std::string& name) {
  if (name == "quad-age") return ReplacementPolicy::QuadAge;
  if (name == "lru") return ReplacementPolicy::Lru;
  throw std::invalid_argument("unknown replacement policy: " + name);
}

const char* to_string(ReplacementPolicy policy) {
  return policy == ReplacementPolicy::QuadAge ? "quad-age" : "lru";
}

ProbeOrder probe_order_from_string(const std::string& name) {
  if (name == "interleaved") return ProbeOrder::SetInterleaved;
  if (name == "column") return ProbeOrder::ColumnMajor;
  throw std::invalid_argument("unknown probe order: " + name);
}

const char* to_string(ProbeOrder order) {
  return order == ProbeOrder::SetInterleaved ? "interleaved" : "column";
}

ClassifierKind classifier_from_string(const std::string& name) {
  if (name == "threshold") return ClassifierKind::Threshold;
  if (name == "bayes") return ClassifierKind::NaiveBayes;
  throw std::invalid_argument("unknown classifier: " + name);
}

const char* to_string(ClassifierKind kind) {
  return kind == ClassifierKind::Threshold ? "threshold" : "bayes";
}

}  // namespace

SimConfig SimConfig::from_json(const std::string& text) {
  const json doc = json::parse(text);
  SimConfig config;

  if (doc.contains("geometry")) {
    const json& g = doc.at("geometry");
    config.geometry.slices = g.value("slices", config.geometry.slices);
    config.geometry.sets_per_slice =
        g.value("sets_per_slice", config.geometry.sets_per_slice);
    config.geometry.ways = g.value("ways", config.geometry.ways);
    if (g.contains("replacement")) {
      config.geometry.replacement =
          replacement_from_string(g.at("replacement").get<std::string>());
    }
    config.geometry.slice_hash = SliceHash::default_for(config.geometry.slices);
  }
  if (doc.contains("latency")) {
    const json& l = doc.at("latency");
    config.latency.hit_mean = l.value("hit_mean", config.latency.hit_mean);
    config.latency.miss_mean = l.value("miss_mean", config.latency.miss_mean);
    config.latency.hit_sigma = l.value("hit_sigma", config.latency.hit_sigma);
    config.latency.miss_sigma =
        l.value("miss_sigma", config.latency.miss_sigma);
    config.latency.truncate_k =
        l.value("truncate_k", config.latency.truncate_k);
    config.latency.support_k = l.value("support_k", config.latency.support_k);
  }
  if (doc.contains("clock")) {
    config.tick_rate = doc.at("clock").value("tick_rate", config.tick_rate);
  }
  if (doc.contains("detector")) {
    const json& d = doc.at("detector");
    config.detector.instances = d.value("instances", config.detector.instances);
    config.detector.ways_primed = d.value("ways", config.detector.ways_primed);
    config.detector.window = d.value("window", config.detector.window);
    config.detector.threshold = d.value("threshold", config.detector.threshold);
    if (d.contains("probe_order")) {
      config.detector.probe_order =
          probe_order_from_string(d.at("probe_order").get<std::string>());
    }
    if (d.contains("classifier")) {
      config.detector.classifier =
          classifier_from_string(d.at("classifier").get<std::string>());
    }
  }
  if (doc.contains("build")) {
    const json& b = doc.at("build");
    if (b.contains("channel") && !b.at("channel").is_null()) {
      config.build.channel = b.at("channel").get<unsigned>();
    }
    config.build.identity = b.value("identity", config.build.identity);
    config.build.region_pages =
        b.value("region_pages", config.build.region_pages);
  }
  if (doc.contains("workload")) {
    const json& w = doc.at("workload");
    if (w.is_string()) {
      config.workload = w.get<std::string>();
    } else {
      config.workload = w.value("kind", config.workload);
      config.noise_intensity = w.value("intensity", config.noise_intensity);
    }
  }
  config.seed = doc.value("seed", config.seed);
  config.passes = doc.value("passes", config.passes);
  config.clones = doc.value("clones", config.clones);
  return config;
}

SimConfig SimConfig::load(const std::string& path) {
  return from_json(read_file(path));
}

std::string SimConfig::to_json() const {
  json doc;
  doc["geometry"] = {
      {"slices", geometry.slices},
      {"sets_per_slice", geometry.sets_per_slice},
      {"ways", geometry.ways},
      {"replacement", to_string(geometry.replacement)},
  };
  doc["latency"] = {
      {"hit_mean", latency.hit_mean},   {"miss_mean", latency.miss_mean},
      {"hit_sigma", latency.hit_sigma}, {"miss_sigma", latency.miss_sigma},
      {"truncate_k", latency.truncate_k},
      {"support_k", latency.support_k},
  };
  doc["clock"] = {{"tick_rate", tick_rate}};
  doc["detector"] = {
      {"instances", detector.instances},
      {"ways", detector.ways_primed},
      {"window", detector.window},
      {"threshold", detector.threshold},
      {"probe_order", to_string(detector.probe_order)},
      {"classifier", to_string(detector.classifier)},
  };
  doc["build"] = {
      {"identity", build.identity},
      {"region_pages", build.region_pages},
  };
  if (build.channel) {
    doc["build"]["channel"] = *build.channel;
  } else {
    doc["build"]["channel"] = nullptr;
  }
  doc["workload"] = {{"kind", workload}, {"intensity", noise_intensity}};
  doc["seed"] = seed;
  doc["passes"] = passes;
  doc["clones"] = clones;
  return doc.dump(2);
}

World SimConfig::make_world() const {
  CacheGeometry geo = geometry;
  geo.slice_hash = SliceHash::default_for(geo.slices);
  return World(geo, latency, tick_rate, seed);
}

std::string run_manifest(
    const SimConfig& config, const std::string& command,
    const std::vector<std::pair<std::string, std::string>>& outputs) {
  json doc;
  doc["artifact"] = "clone-channel-sim";
  doc["command"] = command;
  doc["config"] = json::parse(config.to_json());
  json out = json::object();
  for (const auto& [name, path] : outputs) out[name] = path;
  doc["outputs"] = out;
  return doc.dump(2);
}

}  // namespace clonesim
