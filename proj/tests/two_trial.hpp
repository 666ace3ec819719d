#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "persuasion/mcts.hpp"

namespace persuasion::testing {

// DM that is more forgiving of review 0 and turns sour after a rejection-worthy trial.
inline double history_dm(std::size_t accepted_before, std::size_t n_before, std::size_t review) {
  const double base = review == 0 ? 0.7 : 0.4;
  if (n_before == 0) return base;
  return accepted_before ? base * 0.5 : std::min(1.0, base + 0.3);
}

// Two trials, two reviews per hotel (so two lottery outcomes), tabular DM and value model.
struct TwoTrial {
  std::vector<Hotel> hotels{make_hotel("a", {9.0, 4.0}), make_hotel("b", {8.5, 6.0})};
  FunctionDmm dmm{[](const GameState& s, const Hotel&, std::size_t r) {
                    return history_dm(static_cast<std::size_t>(s.accepted_count()),
                                      s.completed().size(), r);
                  },
                  "history"};
  // Expected future accepts indexed by [trials played][review].
  FunctionVm vm{[](const GameState& s, const Hotel&, std::size_t r) {
                  static constexpr std::array<std::array<double, 2>, 2> table{{{1.2, 0.8}, {0.7, 0.4}}};
                  return table[std::min<std::size_t>(s.completed().size(), 1)][r];
                },
                "table"};
  std::vector<const Hotel*> pool{&hotels[1]};
  GameState root{std::vector<std::string>{}, 2};

  // Exact normalised action values from exhaustive expectimax.
  std::vector<double> exact() const {
    std::vector<TrialRecord> hist;
    auto p = [](const std::vector<TrialRecord>& h, const Hotel&, std::size_t r) {
      std::size_t acc = 0;
      for (const auto& t : h) acc += t.decision == Decision::Accept;
      return history_dm(acc, h.size(), r);
    };
    auto values = oracle::expectimax(hist, hotels, 0, p).second;
    for (auto& v : values) v /= 2.0;
    return values;
  }

  SearchResult run(std::size_t iterations, std::uint64_t seed, double c = 0.5) const {
    Rng rng(seed);
    return search(root, hotels[0], dmm, vm, pool, {c, SearchBudget::of_iterations(iterations)}, rng);
  }
};

}  // namespace persuasion::testing
