#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persuasion/game.hpp"
#include "persuasion/models.hpp"

namespace persuasion {

// Q + c * sqrt(ln(n_total) / n_action); +infinity for an unvisited action.
double uct_score(double q, std::size_t n_action, std::size_t n_total, double c);

struct ActionStats {
  std::size_t n = 0;
  double q = 0.0;
  // Incremental mean: n += 1, q += (payoff - q) / n.
  void backup(double payoff) {
    ++n;
    q += (payoff - q) / static_cast<double>(n);
  }
};

struct SearchBudget {
  std::optional<std::size_t> iterations;
  std::optional<std::chrono::milliseconds> time_limit;

  static SearchBudget of_iterations(std::size_t n) { return {n, std::nullopt}; }
  static SearchBudget of_time(std::chrono::milliseconds t) { return {std::nullopt, t}; }
  // Throws ConfigError when neither bound is set or the iteration bound is zero.
  void validate() const;
};

struct SearchConfig {
  double c = 0.5;
  SearchBudget budget = SearchBudget::of_iterations(20000);
};

struct RootAction {
  std::size_t review_index = 0;
  std::string review_id;
  std::size_t n = 0;     // includes the one virtual visit from the VM seed
  double q = 0.0;
  double vm_seed = 0.0;  // normalized VM value the action started from
};

struct SearchDiagnostics {
  std::size_t iterations = 0;
  std::size_t nodes = 0;
  double elapsed_ms = 0.0;
  std::vector<RootAction> actions;

  nlohmann::json to_json() const;
};

struct SearchResult {
  std::size_t best_review = 0;
  double root_value = 0.0;  // Q of the chosen action
  SearchDiagnostics diagnostics;
};

// UCT search for the review to reveal at the current trial.
//  - Each iteration draws the hotels of future trials from `hotel_pool` without replacement,
//    skipping hotels already played and the current one (the pool is recycled if it runs dry).
//  - Decisions are sampled from `dmm`, lotteries uniformly over the hotel's reviews. Children
//    are keyed by (review, decision, lottery score, next hotel).
//  - A new node seeds every action with Q = VM / remaining trials and one virtual visit.
//  - After expansion a rollout plays random reviews to the end of the game.
//  - The value backed up into (node, action) is the expert payoff from that node's trial on,
//    divided by the node's remaining trials, so the root sees payoff / remaining-at-root.
//  - The returned review has the most visits; ties go to higher Q, then lower index.
SearchResult search(const GameState& root, const Hotel& current, const DmmInterface& dmm,
                    const VmInterface& vm, std::span<const Hotel* const> hotel_pool,
                    const SearchConfig& config, Rng& rng);

}  // namespace persuasion
