#include "persuasion/game.hpp"

#include <cmath>
#include <numeric>

#include "persuasion/errors.hpp"

namespace persuasion {

std::string_view to_string(Decision d) { return d == Decision::Accept ? "accept" : "reject"; }

Decision parse_decision(std::string_view s) {
  if (s == "accept" || s == "Accept" || s == "1") return Decision::Accept;
  if (s == "reject" || s == "Reject" || s == "0") return Decision::Reject;
  throw DataError("unknown decision '" + std::string(s) + "'");
}

double mean_score(std::span<const Review> reviews) {
  if (reviews.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : reviews) sum += r.score;
  return sum / static_cast<double>(reviews.size());
}

namespace {

void validate_reviews(const std::string& hotel_id, const std::vector<Review>& reviews) {
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    const auto& r = reviews[i];
    if (!(r.score >= kMinScore && r.score <= kMaxScore)) {
      throw ContractViolation("hotel " + hotel_id + ": review " + r.id + " score " +
                              std::to_string(r.score) + " outside [0,10]");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (reviews[j].id == r.id) {
        throw ContractViolation("hotel " + hotel_id + ": duplicate review id " + r.id);
      }
    }
  }
}

}  // namespace

Hotel::Hotel(Unchecked, std::string id, std::vector<Review> reviews)
    : id_(std::move(id)), reviews_(std::move(reviews)) {
  validate_reviews(id_, reviews_);
  avg_score_ = mean_score(reviews_);
}

Hotel::Hotel(std::string id, std::vector<Review> reviews)
    : Hotel(Unchecked{}, std::move(id), std::move(reviews)) {
  if (reviews_.size() != kReviewsPerHotel) {
    throw ContractViolation("hotel " + id_ + " has " + std::to_string(reviews_.size()) +
                            " reviews, expected 7");
  }
}

Hotel Hotel::reduced(std::string id, std::vector<Review> reviews) {
  if (reviews.empty() || reviews.size() > kReviewsPerHotel) {
    throw ContractViolation("reduced hotel needs 1..7 reviews");
  }
  return Hotel(Unchecked{}, std::move(id), std::move(reviews));
}

double Hotel::recompute_avg_score() const { return mean_score(reviews_); }

std::optional<std::size_t> Hotel::index_of(std::string_view review_id) const {
  for (std::size_t i = 0; i < reviews_.size(); ++i) {
    if (reviews_[i].id == review_id) return i;
  }
  return std::nullopt;
}

TrialRecord make_record(const Hotel& hotel, std::size_t revealed_index, Decision decision,
                        double lottery_result, int trial_index) {
  TrialRecord rec;
  rec.trial_index = trial_index;
  rec.hotel_id = hotel.id();
  rec.hotel_avg_score = hotel.avg_score();
  rec.revealed_review_id = hotel.review(revealed_index).id;
  rec.decision = decision;
  rec.lottery_result = lottery_result;
  rec.dm_payoff = decision == Decision::Accept ? lottery_result - kPayoffOffset : 0.0;
  rec.expert_payoff = decision == Decision::Accept ? 1 : 0;
  return rec;
}

TrialRecord resolve_trial(const Hotel& hotel, std::size_t revealed_index, Decision decision,
                          Rng& rng, int trial_index) {
  if (revealed_index >= hotel.size()) {
    throw ContractViolation("revealed review index out of range for hotel " + hotel.id());
  }
  const double lottery = hotel.review(uniform_index(rng, hotel.size())).score;
  return make_record(hotel, revealed_index, decision, lottery, trial_index);
}

TrialRecord resolve_trial(const Hotel& hotel, const Review& revealed, Decision decision, Rng& rng,
                          int trial_index) {
  const auto idx = hotel.index_of(revealed.id);
  if (!idx || hotel.review(*idx).score != revealed.score) {
    throw ContractViolation("review " + revealed.id + " does not belong to hotel " + hotel.id());
  }
  return resolve_trial(hotel, *idx, decision, rng, trial_index);
}

double expected_dm_payoff(const Hotel& hotel) { return hotel.avg_score() - kPayoffOffset; }

std::optional<std::string> check_record(const TrialRecord& rec, const Hotel& hotel) {
  if (rec.hotel_id != hotel.id()) return "record hotel " + rec.hotel_id + " != " + hotel.id();
  if (!hotel.index_of(rec.revealed_review_id)) {
    return "revealed review " + rec.revealed_review_id + " not in hotel " + hotel.id();
  }
  bool lottery_ok = false;
  for (const auto& r : hotel.reviews()) lottery_ok = lottery_ok || r.score == rec.lottery_result;
  if (!lottery_ok) return "lottery result is not one of the hotel's review scores";
  if (rec.expert_payoff != (rec.accepted() ? 1 : 0)) return "expert payoff inconsistent";
  const double want = rec.accepted() ? rec.lottery_result - kPayoffOffset : 0.0;
  if (rec.dm_payoff != want) return "dm payoff inconsistent with decision and lottery";
  if (std::abs(rec.hotel_avg_score - hotel.avg_score()) > 1e-9) {
    return "hotel average score mismatch";
  }
  return std::nullopt;
}

GameState::GameState(std::vector<std::string> hotel_sequence, int horizon)
    : hotel_sequence_(std::move(hotel_sequence)), horizon_(horizon) {
  if (horizon_ < 1) throw ContractViolation("horizon must be positive");
  if (!hotel_sequence_.empty() && static_cast<int>(hotel_sequence_.size()) < horizon_) {
    throw ContractViolation("hotel sequence shorter than horizon");
  }
}

std::optional<std::string> GameState::current_hotel_id() const {
  const auto i = completed_.size();
  if (terminal() || i >= hotel_sequence_.size()) return std::nullopt;
  return hotel_sequence_[i];
}

void GameState::append(TrialRecord record) {
  if (terminal()) throw ContractViolation("game already finished");
  if (record.trial_index != current_trial()) {
    throw ContractViolation("trial " + std::to_string(record.trial_index) +
                            " out of order, expected " + std::to_string(current_trial()));
  }
  if (!hotel_sequence_.empty() && hotel_sequence_[completed_.size()] != record.hotel_id) {
    throw ContractViolation("trial " + std::to_string(record.trial_index) + " played hotel " +
                            record.hotel_id + " but sequence has " +
                            hotel_sequence_[completed_.size()]);
  }
  accepted_ += record.accepted() ? 1 : 0;
  completed_.push_back(std::move(record));
}

void GameState::pop_back() {
  if (completed_.empty()) throw ContractViolation("pop_back on empty history");
  accepted_ -= completed_.back().accepted() ? 1 : 0;
  completed_.pop_back();
}

GameState advance(const GameState& state, TrialRecord record) {
  GameState next = state;
  next.append(std::move(record));
  return next;
}

GameState replay(std::span<const TrialRecord> records, std::vector<std::string> hotel_sequence,
                 int horizon) {
  GameState state(std::move(hotel_sequence), horizon);
  for (const auto& r : records) state = advance(state, r);
  return state;
}

}  // namespace persuasion
