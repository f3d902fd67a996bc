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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clonesim/os.hpp"
#include "clonesim/types.hpp"

namespace clonesim {

// Parameterized address-space description so the memory-consistency checks
// run both at the modeled 34-bit width and on a miniature space small
// enough for exhaustive search.
struct BitLayout {
  unsigned address_bits = 34;
  unsigned line_bits = 6;
  unsigned page_bits = 12;
  unsigned set_top_bits = 16;  // set index = bits [line_bits, set_top_bits)
  unsigned alias_bits = 20;    // aliasing frames agree on bits [0, alias_bits)
  std::vector<std::uint64_t> bank_masks;  // one XOR parity output per mask
  unsigned row_shift = 18;

  static BitLayout full();
  static BitLayout scaled();

  std::uint64_t pages() const { return 1ull << (address_bits - page_bits); }
  std::uint64_t page_size() const { return 1ull << page_bits; }
  std::uint64_t alias_period_pages() const {
    return 1ull << (alias_bits - page_bits);
  }
  std::uint64_t set_period_pages() const {
    return 1ull << (set_top_bits - page_bits);
  }

  unsigned bank_of(std::uint64_t pa) const {
    unsigned b = 0;
    for (std::size_t i = 0; i < bank_masks.size(); ++i) {
      b |= bitops::parity(pa & bank_masks[i]) << i;
    }
    return b;
  }
  std::uint64_t row_of(std::uint64_t pa) const { return pa >> row_shift; }
  std::uint64_t set_of(std::uint64_t pa) const {
    return bitops::field(pa, line_bits, set_top_bits - 1);
  }
  bool conflict(std::uint64_t pa1, std::uint64_t pa2) const {
    return bank_of(pa1) == bank_of(pa2) && row_of(pa1) != row_of(pa2);
  }
};

struct ConditionCounterexample {
  std::uint64_t va1 = 0;
  std::uint64_t va2 = 0;
  std::string what;
};

struct ConditionResult {
  bool passed = true;
  std::vector<ConditionCounterexample> examples;  // bounded sample
};

// Results of the five memory-shape conditions an enclave can verify from
// inside: (1) page-table injectivity, (2) aliasing at the 1 MiB period,
// (3) shared cache set at the 64 KiB period, (4) row-conflict pattern
// within each predicted bank, (5) row conflicts exactly at span
// boundaries, including the wrap-around pair.
struct ConditionReport {
  std::array<ConditionResult, 5> conditions;
  bool all_passed() const {
    for (const auto& c : conditions) {
      if (!c.passed) return false;
    }
    return true;
  }
  std::string summary() const;
};

ConditionReport check_conditions(const PageMapping& mapping,
                                 std::uint64_t region_pages,
                                 const BitLayout& layout = BitLayout::full());

struct FoundMapping {
  std::vector<std::uint64_t> ppn_of_vpn;
  bool affine = false;  // equals some translation base + vpn
};

struct SearchOptions {
  BitLayout layout = BitLayout::scaled();
  std::size_t max_solutions = 8;
  std::uint64_t max_nodes = 50'000'000;
  bool require_nonaffine = true;
  // Adds ppn[v] = ppn[0] + v to the constraint set; with it only the
  // strictly linear arrangement can survive.
  bool add_affinity_constraint = false;
};

struct SearchResult {
  std::vector<FoundMapping> solutions;
  std::uint64_t nodes_explored = 0;
  bool exhausted = false;  // entire space covered before hitting limits
};

// Backtracking search for frame arrangements that reproduce every probe
// observation a linear layout would produce. Non-affine solutions are
// constructive proof that passing all five conditions does not pin down a
// linear mapping.
SearchResult search_nonlinear(const SearchOptions& options);

// Best-effort randomized probe of the full-width space. Makes no
// completeness claim; returns whatever it stumbles on within the budget.
SearchResult search_nonlinear_full_width(std::uint64_t region_pages,
                                         std::uint64_t budget_nodes,
                                         std::uint64_t seed);

// Turn a found arrangement into a replayable script: stage every page onto
// a scratch frame, then onto its final frame, so injectivity holds after
// each step.
AdversaryScript export_mapping_script(const FoundMapping& found, ActorId actor,
                                      std::uint64_t scratch_base_ppn);

// Closure analysis for partial monitoring. A clone that watches only k of
// the 16 channel sets can be steered into sets its sibling never touches;
// watching all 16 makes that impossible for any accepted mapping.
struct EvasionDemo {
  unsigned monitored_sets = 16;     // k, at modeled scale
  unsigned scaled_monitored = 4;    // k mapped onto the miniature space
  bool evasion_possible = false;
  // Mapping policies for the two clones when evasion is possible.
  std::optional<std::pair<AllocationPolicy, AllocationPolicy>> witness;
  std::uint64_t assignments_checked = 0;
  std::string explanation;
};

EvasionDemo evasion_demo(unsigned k_monitored_sets);

}  // namespace clonesim
