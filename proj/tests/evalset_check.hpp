#ifndef PEGAN_TEST_EVALSET_CHECK_HPP
#define PEGAN_TEST_EVALSET_CHECK_HPP

#include <map>
#include <string>
#include <vector>

#include "pegan/dataset.hpp"

namespace testutil {

// Checks band predicates, sizes and frequency optimality by exhaustive
// comparison of every selected character against every candidate.
inline std::vector<std::string> eval_set_violations(const pegan::EvalSet& set,
                                                    const std::vector<pegan::CharacterMeta>& meta,
                                                    int per_band) {
  std::vector<std::string> bad;
  std::map<char32_t, pegan::CharacterMeta> by_cp;
  for (const auto& m : meta) by_cp[m.codepoint] = m;
  auto in_band = [](int strokes, int b) {
    return b == 0 ? strokes <= 5 : b == 1 ? (strokes >= 6 && strokes <= 9) : strokes >= 10;
  };
  std::map<char32_t, int> seen;
  for (int b = 0; b < 3; ++b) {
    const auto& chosen = set.bands[b].codepoints;
    std::size_t candidates = 0;
    for (const auto& m : meta) candidates += in_band(m.stroke_count, b);
    const std::size_t want = std::min<std::size_t>(candidates, per_band);
    if (chosen.size() != want) bad.push_back(std::string(pegan::kBandNames[b]) + ": wrong size");
    if (set.bands[b].shortfall != (candidates < static_cast<std::size_t>(per_band)))
      bad.push_back(std::string(pegan::kBandNames[b]) + ": shortfall flag");
    for (char32_t cp : chosen) {
      if (seen[cp]++) bad.push_back(pegan::codepoint_label(cp) + ": in two bands or twice");
      auto it = by_cp.find(cp);
      if (it == by_cp.end()) {
        bad.push_back(pegan::codepoint_label(cp) + ": not in metadata");
        continue;
      }
      if (!in_band(it->second.stroke_count, b)) bad.push_back(pegan::codepoint_label(cp) + ": band predicate");
      for (const auto& m : meta) {
        if (!in_band(m.stroke_count, b)) continue;
        bool picked = false;
        for (char32_t c : chosen) picked |= c == m.codepoint;
        const bool better = m.frequency_rank < it->second.frequency_rank ||
                            (m.frequency_rank == it->second.frequency_rank && m.codepoint < cp);
        if (!picked && better)
          bad.push_back(pegan::codepoint_label(m.codepoint) + " excluded but beats " + pegan::codepoint_label(cp));
      }
    }
  }
  return bad;
}

}  // namespace testutil

#endif
