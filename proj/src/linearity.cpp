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

#include "clonesim/linearity.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "clonesim/rng.hpp"

namespace clonesim {

namespace {

constexpr std::size_t kMaxExamplesPerCondition = 8;

void add_example(ConditionResult& result, std::uint64_t va1, std::uint64_t va2,
                 std::string what) {
  result.passed = false;
  if (result.examples.size() < kMaxExamplesPerCondition) {
    result.examples.push_back(
        ConditionCounterexample{va1, va2, std::move(what)});
  }
}

std::vector<std::uint64_t> collect_frames(const PageMapping& mapping,
                                          std::uint64_t region_pages) {
  std::vector<std::uint64_t> frames(region_pages);
  for (std::uint64_t p = 0; p < region_pages; ++p) {
    frames[p] = mapping.ppn_of(p);
  }
  return frames;
}

}  // namespace

BitLayout BitLayout::full() {
  BitLayout layout;
  layout.address_bits = kPhysicalAddressBits;
  layout.line_bits = kLineOffsetBits;
  layout.page_bits = kPageOffsetBits;
  layout.set_top_bits = 16;
  layout.alias_bits = 20;
  // Same parity functions the memory-controller model uses: channel, two
  // bank-group bits, two bank-address bits, rank.
  layout.bank_masks = {
      (1ull << 18) | (1ull << 15) | (1ull << 13) | (1ull << 12) |
          (1ull << 9) | (1ull << 8),
      (1ull << 19) | (1ull << 15),
      (1ull << 20) | (1ull << 16),
      (1ull << 21) | (1ull << 17),
      (1ull << 22) | (1ull << 18),
      (1ull << 22) | (1ull << 18),
  };
  layout.row_shift = 18;
  return layout;
}

BitLayout BitLayout::scaled() {
  // Miniature 8-bit space preserving the structural relations: the page
  // offset splits the set index, frames alias on a low-bit window, two
  // XOR outputs select the bank, and rows sit above the bank inputs.
  BitLayout layout;
  layout.address_bits = 8;
  layout.line_bits = 2;
  layout.page_bits = 3;
  layout.set_top_bits = 5;
  layout.alias_bits = 6;
  layout.bank_masks = {
      (1ull << 5) | (1ull << 3),
      (1ull << 6) | (1ull << 4),
  };
  layout.row_shift = 5;
  return layout;
}

std::string ConditionReport::summary() const {
  static const char* kNames[5] = {
      "injectivity", "alias periodicity", "set periodicity",
      "bank row pattern", "span boundaries"};
  std::ostringstream out;
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    if (i) out << "; ";
    out << kNames[i] << ": ";
    if (conditions[i].passed) {
      out << "ok";
    } else {
      out << "FAIL (" << conditions[i].examples.size() << " example(s))";
    }
  }
  return out.str();
}

ConditionReport check_conditions(const PageMapping& mapping,
                                 std::uint64_t region_pages,
                                 const BitLayout& layout) {
  if (region_pages < 2) {
    throw std::invalid_argument("check_conditions: need at least two pages");
  }
  const std::vector<std::uint64_t> frames =
      collect_frames(mapping, region_pages);
  const std::uint64_t page_bits = layout.page_bits;
  const std::uint64_t last_line = layout.page_size() - (1ull << layout.line_bits);
  const std::uint64_t alias_mod = layout.alias_period_pages();
  const std::uint64_t set_mod = layout.set_period_pages();
  const std::uint64_t base = frames[0];

  auto actual_pa = [&](std::uint64_t p, std::uint64_t off) {
    return (frames[p] << page_bits) | off;
  };
  auto hyp_pa = [&](std::uint64_t p, std::uint64_t off) {
    return ((base + p) << page_bits) | off;
  };

  ConditionReport report;

  // 1: no two pages may share a frame.
  {
    ConditionResult& c = report.conditions[0];
    std::vector<std::pair<std::uint64_t, std::uint64_t>> seen(frames.size());
    for (std::uint64_t p = 0; p < region_pages; ++p) {
      seen[p] = {frames[p], p};
    }
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 1; i < seen.size(); ++i) {
      if (seen[i].first == seen[i - 1].first) {
        std::ostringstream what;
        what << "pages share frame 0x" << std::hex << seen[i].first;
        add_example(c, seen[i - 1].second << page_bits,
                    seen[i].second << page_bits, what.str());
      }
    }
  }

  // 2: pages one alias period apart must land on aliasing frames.
  {
    ConditionResult& c = report.conditions[1];
    for (std::uint64_t p = 0; p < region_pages; ++p) {
      for (std::uint64_t q = p + alias_mod; q < region_pages; q += alias_mod) {
        if ((frames[p] % alias_mod) != (frames[q] % alias_mod)) {
          std::ostringstream what;
          what << "expected aliasing frames, got 0x" << std::hex << frames[p]
               << " vs 0x" << frames[q];
          add_example(c, p << page_bits, q << page_bits, what.str());
        }
      }
    }
  }

  // 3: pages one set period apart must share cache sets.
  {
    ConditionResult& c = report.conditions[2];
    for (std::uint64_t p = 0; p < region_pages; ++p) {
      for (std::uint64_t q = p + set_mod; q < region_pages; q += set_mod) {
        if ((frames[p] % set_mod) != (frames[q] % set_mod)) {
          std::ostringstream what;
          what << "expected shared set, got set " << layout.set_of(actual_pa(p, 0))
               << " vs " << layout.set_of(actual_pa(q, 0));
          add_example(c, p << page_bits, q << page_bits, what.str());
        }
      }
    }
  }

  // 4: within each predicted bank, pages on different predicted rows must
  // show a row conflict.
  {
    ConditionResult& c = report.conditions[3];
    std::vector<std::vector<std::uint64_t>> by_bank(
        1ull << layout.bank_masks.size());
    for (std::uint64_t p = 0; p < region_pages; ++p) {
      by_bank[layout.bank_of(hyp_pa(p, 0))].push_back(p);
    }
    for (const auto& group : by_bank) {
      for (std::size_t i = 0; i < group.size(); ++i) {
        for (std::size_t j = i + 1; j < group.size(); ++j) {
          const std::uint64_t p = group[i];
          const std::uint64_t q = group[j];
          if (layout.row_of(hyp_pa(p, 0)) == layout.row_of(hyp_pa(q, 0))) {
            continue;
          }
          if (!layout.conflict(actual_pa(p, 0), actual_pa(q, 0))) {
            add_example(c, p << page_bits, q << page_bits,
                        "expected a row conflict, saw none");
          }
        }
      }
    }
  }

  // 5: walking the region linearly, row conflicts between neighbouring
  // lines appear exactly where the predicted layout has them, and the two
  // region ends behave like neighbours of the wrap-around pair.
  {
    ConditionResult& c = report.conditions[4];
    for (std::uint64_t p = 0; p + 1 < region_pages; ++p) {
      const bool expected =
          layout.conflict(hyp_pa(p, last_line), hyp_pa(p + 1, 0));
      const bool observed =
          layout.conflict(actual_pa(p, last_line), actual_pa(p + 1, 0));
      if (expected != observed) {
        std::ostringstream what;
        what << (expected ? "expected boundary conflict missing"
                          : "unexpected conflict between neighbours");
        add_example(c, (p << page_bits) | last_line, (p + 1) << page_bits,
                    what.str());
      }
    }
    const std::uint64_t tail = region_pages - 1;
    const bool expected = layout.conflict(hyp_pa(0, 0), hyp_pa(tail, last_line));
    const bool observed =
        layout.conflict(actual_pa(0, 0), actual_pa(tail, last_line));
    if (expected != observed) {
      add_example(c, 0, (tail << page_bits) | last_line,
                  expected ? "expected wrap-around conflict missing"
                           : "unexpected wrap-around conflict");
    }
  }

  return report;
}

namespace {

// Depth-first assignment of frames to pages in ascending page order. Every
// constraint is the exact predicate check_conditions would evaluate, applied
// incrementally, so accepted leaves pass the full report by construction.
class MappingSearch {
 public:
  MappingSearch(const SearchOptions& options) : opt_(options), L_(options.layout) {
    n_ = L_.pages();
    if (n_ > 64) {
      throw std::invalid_argument(
          "search_nonlinear: layout too large for exhaustive search");
    }
    alias_mod_ = L_.alias_period_pages();
    set_mod_ = L_.set_period_pages();
    page_bits_ = L_.page_bits;
    last_line_ = L_.page_size() - (1ull << L_.line_bits);
    assign_.assign(n_, 0);
    used_.assign(n_, false);
    hyp_bank_.assign(n_, 0);
    hyp_row_.assign(n_, 0);
    act_bank_.assign(n_, 0);
    act_row_.assign(n_, 0);
  }

  SearchResult run() {
    recurse(0);
    result_.exhausted = !stopped_;
    return std::move(result_);
  }

 private:
  std::uint64_t pa(std::uint64_t frame, std::uint64_t off) const {
    return (frame << page_bits_) | off;
  }

  bool consistent(std::uint64_t p, std::uint64_t v) const {
    const std::uint64_t base = (p == 0) ? v : assign_[0];
    if (opt_.add_affinity_constraint && v != base + p) return false;
    if (p >= alias_mod_ &&
        (v % alias_mod_) != (assign_[p % alias_mod_] % alias_mod_)) {
      return false;
    }
    if (p >= set_mod_ && (v % set_mod_) != (assign_[p % set_mod_] % set_mod_)) {
      return false;
    }
    const unsigned hb = L_.bank_of(pa(base + p, 0));
    const std::uint64_t hr = L_.row_of(pa(base + p, 0));
    const unsigned ab = L_.bank_of(pa(v, 0));
    const std::uint64_t ar = L_.row_of(pa(v, 0));
    for (std::uint64_t q = 0; q < p; ++q) {
      if (hyp_bank_[q] == hb && hyp_row_[q] != hr) {
        if (!(act_bank_[q] == ab && act_row_[q] != ar)) return false;
      }
    }
    if (p > 0) {
      const bool expected =
          L_.conflict(pa(base + p - 1, last_line_), pa(base + p, 0));
      const bool observed =
          L_.conflict(pa(assign_[p - 1], last_line_), pa(v, 0));
      if (expected != observed) return false;
    }
    if (p + 1 == n_) {
      const bool expected =
          L_.conflict(pa(base, 0), pa(base + p, last_line_));
      const bool observed = L_.conflict(pa(assign_[0], 0), pa(v, last_line_));
      if (expected != observed) return false;
    }
    return true;
  }

  void recurse(std::uint64_t p) {
    if (stopped_) return;
    if (p == n_) {
      bool affine = true;
      for (std::uint64_t q = 0; q < n_; ++q) {
        if (assign_[q] != assign_[0] + q) {
          affine = false;
          break;
        }
      }
      if (affine && opt_.require_nonaffine) return;
      result_.solutions.push_back(FoundMapping{assign_, affine});
      if (result_.solutions.size() >= opt_.max_solutions) stopped_ = true;
      return;
    }
    for (std::uint64_t v = 0; v < n_; ++v) {
      if (used_[v]) continue;
      if (++result_.nodes_explored > opt_.max_nodes) {
        stopped_ = true;
        return;
      }
      if (!consistent(p, v)) continue;
      const std::uint64_t base = (p == 0) ? v : assign_[0];
      assign_[p] = v;
      used_[v] = true;
      hyp_bank_[p] = L_.bank_of(pa(base + p, 0));
      hyp_row_[p] = L_.row_of(pa(base + p, 0));
      act_bank_[p] = L_.bank_of(pa(v, 0));
      act_row_[p] = L_.row_of(pa(v, 0));
      recurse(p + 1);
      used_[v] = false;
      if (stopped_) return;
    }
  }

  SearchOptions opt_;
  BitLayout L_;
  std::uint64_t n_ = 0;
  std::uint64_t alias_mod_ = 0;
  std::uint64_t set_mod_ = 0;
  std::uint64_t page_bits_ = 0;
  std::uint64_t last_line_ = 0;
  std::vector<std::uint64_t> assign_;
  std::vector<bool> used_;
  std::vector<unsigned> hyp_bank_;
  std::vector<std::uint64_t> hyp_row_;
  std::vector<unsigned> act_bank_;
  std::vector<std::uint64_t> act_row_;
  SearchResult result_;
  bool stopped_ = false;
};

}  // namespace

SearchResult search_nonlinear(const SearchOptions& options) {
  MappingSearch search(options);
  return search.run();
}

SearchResult search_nonlinear_full_width(std::uint64_t region_pages,
                                         std::uint64_t budget_nodes,
                                         std::uint64_t seed) {
  SearchResult result;
  const BitLayout layout = BitLayout::full();
  const std::uint64_t alias_mod = layout.alias_period_pages();
  if (region_pages <= alias_mod) {
    throw std::invalid_argument(
        "search_nonlinear_full_width: region must exceed one alias period");
  }
  Rng rng(seed);
  // Randomized probe over frame-permutations that flip bits above the alias
  // window; each candidate faces the full condition report. No completeness
  // claim at this width.
  const std::uint64_t hi_span = region_pages / alias_mod;
  for (std::uint64_t i = 0; i < budget_nodes; ++i) {
    ++result.nodes_explored;
    const std::uint64_t mask = (1 + rng.uniform(hi_span - 1)) * alias_mod;
    PageMapping mapping;
    for (std::uint64_t p = 0; p < region_pages; ++p) {
      const std::uint64_t frame = p ^ mask;
      if (frame >= region_pages) break;
      mapping.map(p, frame);
    }
    if (mapping.size() != region_pages) continue;  // XOR left the region
    if (!check_conditions(mapping, region_pages, layout).all_passed()) continue;
    FoundMapping found;
    found.ppn_of_vpn.resize(region_pages);
    for (std::uint64_t p = 0; p < region_pages; ++p) {
      found.ppn_of_vpn[p] = mapping.ppn_of(p);
    }
    found.affine = false;
    result.solutions.push_back(std::move(found));
    if (result.solutions.size() >= 4) break;
  }
  return result;
}

AdversaryScript export_mapping_script(const FoundMapping& found, ActorId actor,
                                      std::uint64_t scratch_base_ppn) {
  const std::uint64_t n = found.ppn_of_vpn.size();
  for (std::uint64_t p = 0; p < n; ++p) {
    const std::uint64_t target = found.ppn_of_vpn[p];
    if (target >= scratch_base_ppn && target < scratch_base_ppn + n) {
      throw std::invalid_argument(
          "export_mapping_script: scratch range overlaps target frames");
    }
  }
  // Two phases keep the mapping injective after every single action: first
  // park every page on its scratch frame, then drop each onto its target.
  AdversaryScript script;
  for (std::uint64_t p = 0; p < n; ++p) {
    script.actions.push_back(RemapAction{actor, p, scratch_base_ppn + p});
  }
  for (std::uint64_t p = 0; p < n; ++p) {
    script.actions.push_back(RemapAction{actor, p, found.ppn_of_vpn[p]});
  }
  return script;
}

EvasionDemo evasion_demo(unsigned k_monitored_sets) {
  constexpr unsigned kFullValues = 16;   // frame-colour values at full scale
  constexpr unsigned kScaledValues = 4;  // frame-colour values in miniature
  constexpr unsigned kScaledPages = 16;  // pages a miniature region offers
  constexpr unsigned kScaledDepth = 2;   // pages needed per colour downstream

  if (k_monitored_sets < 1 || k_monitored_sets > kFullValues) {
    throw std::invalid_argument("evasion_demo: k must be in [1, 16]");
  }

  EvasionDemo demo;
  demo.monitored_sets = k_monitored_sets;
  demo.scaled_monitored =
      (k_monitored_sets * kScaledValues + kFullValues - 1) / kFullValues;

  // Exhaustive check on the miniature space: does any pair of monitored
  // colour selections avoid each other entirely?
  bool scaled_evadable = false;
  const unsigned kp = demo.scaled_monitored;
  std::vector<unsigned> subsets;
  for (unsigned s = 0; s < (1u << kScaledValues); ++s) {
    if (static_cast<unsigned>(__builtin_popcount(s)) == kp) subsets.push_back(s);
  }
  for (unsigned a : subsets) {
    for (unsigned b : subsets) {
      ++demo.assignments_checked;
      if ((a & b) == 0) scaled_evadable = true;
    }
  }

  // Exhaustive check of every way the miniature region's pages can be
  // spread over the colours: any assignment deep enough to build eviction
  // sets necessarily covers all colours, so full monitors always overlap.
  std::uint64_t accepted = 0;
  std::uint64_t accepted_covering_all = 0;
  for (unsigned a = 0; a <= kScaledPages; ++a) {
    for (unsigned b = 0; a + b <= kScaledPages; ++b) {
      for (unsigned c = 0; a + b + c <= kScaledPages; ++c) {
        const unsigned d = kScaledPages - a - b - c;
        ++demo.assignments_checked;
        if (a >= kScaledDepth && b >= kScaledDepth && c >= kScaledDepth &&
            d >= kScaledDepth) {
          ++accepted;
          ++accepted_covering_all;  // all four counts are positive here
        }
      }
    }
  }
  assert(accepted == accepted_covering_all);
  (void)accepted_covering_all;

  const bool full_evadable = 2 * k_monitored_sets <= kFullValues;
  assert(scaled_evadable == full_evadable);
  (void)scaled_evadable;
  demo.evasion_possible = full_evadable;

  std::ostringstream why;
  if (full_evadable) {
    demo.witness = std::make_pair(
        AllocationPolicy{LinearPolicy{0}},
        AllocationPolicy{LinearPolicy{k_monitored_sets}});
    why << "monitoring " << k_monitored_sets << " of " << kFullValues
        << " channel sets leaves " << (kFullValues - k_monitored_sets)
        << " unwatched; shifting the sibling's frames by " << k_monitored_sets
        << " pages steers its monitored sets entirely into them";
  } else {
    why << "two selections of " << k_monitored_sets << " out of " << kFullValues
        << " channel sets always intersect, and every accepted layout covers "
           "all frame colours (verified over "
        << accepted << " accepted assignments), so no mapping separates the "
        << "clones";
  }
  demo.explanation = why.str();
  return demo;
}

}  // namespace clonesim
