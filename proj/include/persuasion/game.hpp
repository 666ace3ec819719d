#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "persuasion/random.hpp"

namespace persuasion {

inline constexpr std::size_t kReviewsPerHotel = 7;
inline constexpr int kTrialsPerGame = 10;
// Subtracted from the lottery result; an all-accepting DM breaks even on an 8-average hotel.
inline constexpr double kPayoffOffset = 8.0;
inline constexpr double kMinScore = 0.0;
inline constexpr double kMaxScore = 10.0;

enum class Decision : std::uint8_t { Reject = 0, Accept = 1 };

std::string_view to_string(Decision d);
Decision parse_decision(std::string_view s);

struct Review {
  std::string id;
  double score = 0.0;
  std::string positive_text;
  std::string negative_text;

  std::size_t text_length() const { return positive_text.size() + negative_text.size(); }
  bool operator==(const Review&) const = default;
};

// A hotel and its scored reviews. Regular hotels have exactly seven reviews; search and
// oracle fixtures may build reduced hotels with 1..7 reviews through Hotel::reduced.
class Hotel {
 public:
  Hotel(std::string id, std::vector<Review> reviews);
  static Hotel reduced(std::string id, std::vector<Review> reviews);

  const std::string& id() const { return id_; }
  std::span<const Review> reviews() const { return reviews_; }
  const Review& review(std::size_t i) const { return reviews_.at(i); }
  std::size_t size() const { return reviews_.size(); }
  double avg_score() const { return avg_score_; }
  double recompute_avg_score() const;
  std::optional<std::size_t> index_of(std::string_view review_id) const;

  bool operator==(const Hotel& other) const {
    return id_ == other.id_ && reviews_ == other.reviews_;
  }

 private:
  struct Unchecked {};
  Hotel(Unchecked, std::string id, std::vector<Review> reviews);

  std::string id_;
  std::vector<Review> reviews_;
  double avg_score_ = 0.0;
};

double mean_score(std::span<const Review> reviews);

struct TrialRecord {
  int trial_index = 1;
  std::string hotel_id;
  // Mean review score of the trial's hotel, kept so history features need no hotel lookup.
  double hotel_avg_score = 0.0;
  std::string revealed_review_id;
  Decision decision = Decision::Reject;
  // Drawn on every trial, including rejections.
  double lottery_result = 0.0;
  double dm_payoff = 0.0;
  int expert_payoff = 0;

  bool accepted() const { return decision == Decision::Accept; }
  // What the DM would have earned by accepting; equals dm_payoff on accepted trials.
  double counterfactual_dm_payoff() const { return lottery_result - kPayoffOffset; }
  bool operator==(const TrialRecord&) const = default;
};

// Plays one trial: draws the lottery uniformly among the hotel's review scores and applies
// the payoff rules. Throws ContractViolation when the revealed review is not in the hotel.
TrialRecord resolve_trial(const Hotel& hotel, const Review& revealed, Decision decision,
                          Rng& rng, int trial_index = 1);
TrialRecord resolve_trial(const Hotel& hotel, std::size_t revealed_index, Decision decision,
                          Rng& rng, int trial_index = 1);

// Builds a record for a known lottery outcome (replay, fixtures, search chance branches).
TrialRecord make_record(const Hotel& hotel, std::size_t revealed_index, Decision decision,
                        double lottery_result, int trial_index);

// Closed form of the DM's expected payoff when accepting: avg_score - 8.
double expected_dm_payoff(const Hotel& hotel);

// Validates the payoff invariants of a record against its hotel. Returns an error message.
std::optional<std::string> check_record(const TrialRecord& record, const Hotel& hotel);

// Full interaction history of one game. Copies are cheap enough for per-trial snapshots;
// the search mutates a private working copy through append/pop_back.
class GameState {
 public:
  explicit GameState(std::vector<std::string> hotel_sequence = {},
                     int horizon = kTrialsPerGame);

  const std::vector<std::string>& hotel_sequence() const { return hotel_sequence_; }
  std::span<const TrialRecord> completed() const { return completed_; }
  int horizon() const { return horizon_; }
  int current_trial() const { return static_cast<int>(completed_.size()) + 1; }
  int remaining_trials() const { return horizon_ - static_cast<int>(completed_.size()); }
  bool terminal() const { return remaining_trials() <= 0; }
  int accepted_count() const { return accepted_; }
  int rejected_count() const { return static_cast<int>(completed_.size()) - accepted_; }
  // Hotel scheduled for the current trial, when the sequence is known.
  std::optional<std::string> current_hotel_id() const;

  void append(TrialRecord record);
  void pop_back();

  bool operator==(const GameState&) const = default;

 private:
  std::vector<std::string> hotel_sequence_;
  std::vector<TrialRecord> completed_;
  int horizon_;
  int accepted_ = 0;
};

// Returns a new state with the record appended; the input is left untouched.
GameState advance(const GameState& state, TrialRecord record);

// Replays records through advance; throws ContractViolation on the first inconsistency.
GameState replay(std::span<const TrialRecord> records, std::vector<std::string> hotel_sequence,
                 int horizon = kTrialsPerGame);

}  // namespace persuasion
