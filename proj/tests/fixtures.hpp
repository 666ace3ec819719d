#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "persuasion/game.hpp"
#include "persuasion/random.hpp"

namespace persuasion::testing {

inline Hotel make_hotel(const std::string& id, const std::vector<double>& scores,
                        const std::vector<std::string>& positives = {},
                        const std::vector<std::string>& negatives = {}) {
  std::vector<Review> reviews;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    Review r;
    r.id = id + "-r" + std::to_string(i + 1);
    r.score = scores[i];
    r.positive_text = i < positives.size() ? positives[i] : "clean room and friendly staff";
    r.negative_text = i < negatives.size() ? negatives[i] : "breakfast was a bit expensive";
    reviews.push_back(std::move(r));
  }
  if (scores.size() == kReviewsPerHotel) return Hotel(id, std::move(reviews));
  return Hotel::reduced(id, std::move(reviews));
}

// Score drawn on a 0.1 grid so lottery thresholds are hit exactly now and then.
inline double random_score(Rng& rng) {
  return static_cast<double>(uniform_index(rng, 101)) / 10.0;
}

inline Hotel random_hotel(const std::string& id, Rng& rng) {
  std::vector<double> s;
  // Mix of hotels centred low, medium and high so every tier shows up.
  const double centre = 5.5 + 1.5 * static_cast<double>(uniform_index(rng, 3));
  for (std::size_t i = 0; i < kReviewsPerHotel; ++i) {
    double v = centre + (uniform01(rng) - 0.5) * 6.0;
    v = std::round(std::clamp(v, 0.0, 10.0) * 10.0) / 10.0;
    if (uniform_index(rng, 6) == 0) v = random_score(rng);
    s.push_back(v);
  }
  return make_hotel(id, s);
}

struct RandomGame {
  std::vector<Hotel> hotels;
  GameState state;
};

// Plays `trials` random trials (random reviews, random decisions) on random hotels.
inline RandomGame random_game(Rng& rng, int trials, int horizon = kTrialsPerGame) {
  RandomGame g;
  std::vector<std::string> ids;
  for (int i = 0; i < horizon; ++i) {
    g.hotels.push_back(random_hotel("h" + std::to_string(i), rng));
    ids.push_back(g.hotels.back().id());
  }
  g.state = GameState(ids, horizon);
  for (int t = 0; t < trials; ++t) {
    const auto& h = g.hotels[static_cast<std::size_t>(t)];
    const auto d = bernoulli(rng, 0.6) ? Decision::Accept : Decision::Reject;
    g.state.append(resolve_trial(h, uniform_index(rng, h.size()), d, rng, t + 1));
  }
  return g;
}

}  // namespace persuasion::testing
