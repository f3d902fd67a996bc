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

#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "clonesim/linearity.hpp"
#include "clonesim/os.hpp"
#include "clonesim/world.hpp"
#include "support/oracles.hpp"

using namespace clonesim;

namespace {

PageMapping mapping_from(const FoundMapping& found) {
  PageMapping m;
  for (std::uint64_t p = 0; p < found.ppn_of_vpn.size(); ++p) {
    m.map(p, found.ppn_of_vpn[p]);
  }
  return m;
}

bool is_affine(const FoundMapping& found) {
  for (std::uint64_t p = 0; p < found.ppn_of_vpn.size(); ++p) {
    if (found.ppn_of_vpn[p] != found.ppn_of_vpn[0] + p) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("layout helpers expose the period arithmetic") {
  const BitLayout full = BitLayout::full();
  CHECK(full.pages() == 1ull << 22);
  CHECK(full.page_size() == 4096);
  CHECK(full.alias_period_pages() == 256);
  CHECK(full.set_period_pages() == 16);

  const BitLayout scaled = BitLayout::scaled();
  CHECK(scaled.pages() == 32);
  CHECK(scaled.page_size() == 8);
  CHECK(scaled.alias_period_pages() == 8);
  CHECK(scaled.set_period_pages() == 4);

  // Full-width bank outputs coincide with the memory-controller model.
  CHECK(full.bank_masks.size() == 6);
  CHECK(full.bank_of(1ull << 18) == 0b110001u);  // channel, ba1, rank
  CHECK(full.row_of(1ull << 18) == 1);
  CHECK(full.conflict(0x3FFFC0, 0x400000));
  CHECK_FALSE(full.conflict(0x3FFC0, 0x40000));
}

TEST_CASE("a linear mapping passes all five conditions at both widths") {
  const PageMapping full_map = allocate(LinearPolicy{0x200}, 512);
  const ConditionReport full = check_conditions(full_map, 512);
  CHECK(full.all_passed());
  for (const ConditionResult& c : full.conditions) {
    CHECK(c.passed);
    CHECK(c.examples.empty());
  }
  CHECK(full.summary().find("FAIL") == std::string::npos);

  const PageMapping scaled_map = allocate(LinearPolicy{0}, 32);
  CHECK(check_conditions(scaled_map, 32, BitLayout::scaled()).all_passed());
}

TEST_CASE("condition checks need at least two pages") {
  const PageMapping m = allocate(LinearPolicy{0}, 4);
  CHECK_THROWS_AS(check_conditions(m, 1), std::invalid_argument);
}

TEST_CASE("a single frame swap breaks the periodicity conditions") {
  PageMapping m = allocate(LinearPolicy{0x200}, 512);
  m.swap_pair(3, 200);

  const ConditionReport report = check_conditions(m, 512);
  CHECK_FALSE(report.all_passed());
  CHECK(report.conditions[0].passed);        // still injective
  CHECK_FALSE(report.conditions[1].passed);  // alias residue moved
  CHECK_FALSE(report.conditions[2].passed);  // set residue moved
  CHECK_FALSE(report.conditions[1].examples.empty());
  CHECK(report.summary().find("FAIL") != std::string::npos);
}

TEST_CASE("a duplicated frame trips the injectivity condition") {
  PageMapping m;
  for (std::uint64_t p = 0; p < 32; ++p) m.map(p, p);
  m.map(5, 4);  // pages 4 and 5 now share frame 4

  const ConditionReport report =
      check_conditions(m, 32, BitLayout::scaled());
  CHECK_FALSE(report.conditions[0].passed);
  CHECK(report.summary().find("injectivity: FAIL") != std::string::npos);
}

TEST_CASE("counterexample lists stay bounded even for chaotic mappings") {
  const PageMapping m = allocate(PermutedPolicy{.seed = 4, .base_ppn = 0}, 512);
  const ConditionReport report = check_conditions(m, 512);
  CHECK_FALSE(report.all_passed());
  for (const ConditionResult& c : report.conditions) {
    CHECK(c.examples.size() <= 8);
  }
}

TEST_CASE("page-xor arrangement passes every miniature condition") {
  // Flipping the lowest frame bit above the alias window preserves all
  // observable periods: constructive proof the probes cannot pin the
  // layout down to the linear one.
  PageMapping m;
  for (std::uint64_t p = 0; p < 32; ++p) m.map(p, p ^ 8);
  CHECK(m.injective());
  const ConditionReport report = check_conditions(m, 32, BitLayout::scaled());
  CHECK(report.all_passed());
}

TEST_CASE("exhaustive miniature search finds non-affine look-alikes") {
  SearchOptions options;  // scaled layout, non-affine only
  const SearchResult result = search_nonlinear(options);

  REQUIRE_FALSE(result.solutions.empty());
  CHECK(result.solutions.size() <= options.max_solutions);
  CHECK(result.nodes_explored > 0);

  for (const FoundMapping& found : result.solutions) {
    CHECK_FALSE(found.affine);
    CHECK_FALSE(is_affine(found));
    REQUIRE(found.ppn_of_vpn.size() == 32);

    // A permutation of the miniature frame space.
    std::set<std::uint64_t> frames(found.ppn_of_vpn.begin(),
                                   found.ppn_of_vpn.end());
    CHECK(frames.size() == 32);
    CHECK(*frames.rbegin() < 32);

    // Every solution survives the full condition report it claims to pass.
    const PageMapping m = mapping_from(found);
    CHECK(check_conditions(m, 32, BitLayout::scaled()).all_passed());
  }
}

TEST_CASE("the affinity constraint pins the search to the identity") {
  SearchOptions options;
  options.add_affinity_constraint = true;
  options.require_nonaffine = false;
  const SearchResult result = search_nonlinear(options);

  REQUIRE(result.solutions.size() == 1);
  CHECK(result.exhausted);
  CHECK(result.solutions[0].affine);
  for (std::uint64_t p = 0; p < 32; ++p) {
    CHECK(result.solutions[0].ppn_of_vpn[p] == p);
  }

  // Demanding non-affine solutions under the same constraint proves none
  // exist anywhere in the space.
  SearchOptions strict;
  strict.add_affinity_constraint = true;
  const SearchResult none = search_nonlinear(strict);
  CHECK(none.solutions.empty());
  CHECK(none.exhausted);
}

TEST_CASE("search refuses layouts too wide to enumerate") {
  SearchOptions options;
  options.layout = BitLayout::full();
  CHECK_THROWS_AS(search_nonlinear(options), std::invalid_argument);
}

TEST_CASE("randomized full-width probe returns verified arrangements") {
  CHECK_THROWS_AS(search_nonlinear_full_width(256, 10, 1),
                  std::invalid_argument);

  const SearchResult result = search_nonlinear_full_width(2048, 200, 1);
  REQUIRE_FALSE(result.solutions.empty());
  for (const FoundMapping& found : result.solutions) {
    CHECK_FALSE(found.affine);
    CHECK_FALSE(is_affine(found));
    REQUIRE(found.ppn_of_vpn.size() == 2048);
    std::set<std::uint64_t> frames(found.ppn_of_vpn.begin(),
                                   found.ppn_of_vpn.end());
    CHECK(frames.size() == 2048);  // permutation of the region
    const PageMapping m = mapping_from(found);
    CHECK(check_conditions(m, 2048).all_passed());
  }

  // Same seed, same findings.
  const SearchResult again = search_nonlinear_full_width(2048, 200, 1);
  REQUIRE(again.solutions.size() == result.solutions.size());
  CHECK(again.solutions[0].ppn_of_vpn == result.solutions[0].ppn_of_vpn);
}

TEST_CASE("exported scripts reach the arrangement injectively at every step") {
  SearchOptions options;
  const SearchResult result = search_nonlinear(options);
  REQUIRE_FALSE(result.solutions.empty());
  const FoundMapping& found = result.solutions.front();

  const AdversaryScript script = export_mapping_script(found, 1, 64);
  CHECK(script.actions.size() == 2 * found.ppn_of_vpn.size());

  PageMapping m = allocate(LinearPolicy{0}, found.ppn_of_vpn.size());
  for (const AdversaryAction& action : script.actions) {
    const auto& rm = std::get<RemapAction>(action);
    CHECK(rm.actor == 1);
    m.remap(rm.vpn, rm.ppn);  // remap itself rejects injectivity violations
    CHECK(m.injective());
  }
  for (std::uint64_t p = 0; p < found.ppn_of_vpn.size(); ++p) {
    CHECK(m.ppn_of(p) == found.ppn_of_vpn[p]);
  }

  // A scratch window overlapping the targets is rejected up front.
  CHECK_THROWS_AS(export_mapping_script(found, 1, 0), std::invalid_argument);
}

TEST_CASE("partial monitors can be evaded, full monitors cannot") {
  for (unsigned k = 1; k <= 8; ++k) {
    const EvasionDemo demo = evasion_demo(k);
    CHECK(demo.monitored_sets == k);
    CHECK(demo.evasion_possible);
    REQUIRE(demo.witness.has_value());
    const auto& [first, second] = *demo.witness;
    CHECK(std::get<LinearPolicy>(first).base_ppn == 0);
    CHECK(std::get<LinearPolicy>(second).base_ppn == k);
    CHECK_FALSE(demo.explanation.empty());
  }

  for (unsigned k = 9; k <= 16; ++k) {
    const EvasionDemo demo = evasion_demo(k);
    CHECK_FALSE(demo.evasion_possible);
    CHECK_FALSE(demo.witness.has_value());
    CHECK(demo.assignments_checked > 0);
    CHECK_FALSE(demo.explanation.empty());
  }

  CHECK(evasion_demo(1).scaled_monitored == 1);
  CHECK(evasion_demo(16).scaled_monitored == 4);

  CHECK_THROWS_AS(evasion_demo(0), std::invalid_argument);
  CHECK_THROWS_AS(evasion_demo(17), std::invalid_argument);
}

TEST_CASE("evasion witness separates the clones' channel footprints") {
  // At the modeled scale the witness policies shift the second clone's
  // frames by k pages: its monitored frame colours become {k..2k-1} while
  // the first clone watches {0..k-1} -- disjoint whenever 2k <= 16.
  const unsigned k = 4;
  const EvasionDemo demo = evasion_demo(k);
  REQUIRE(demo.witness.has_value());

  const PageMapping a = allocate(demo.witness->first, 64);
  const PageMapping b = allocate(demo.witness->second, 64);
  std::set<std::uint64_t> colours_a, colours_b;
  for (std::uint64_t p = 0; p < k; ++p) {
    colours_a.insert(a.ppn_of(p) % 16);
    colours_b.insert(b.ppn_of(p) % 16);
  }
  for (std::uint64_t c : colours_a) CHECK_FALSE(colours_b.count(c));
}
