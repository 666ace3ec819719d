#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "persuasion/game.hpp"

namespace persuasion {

// ---------------------------------------------------------------------------------------------
// Statistical game (SG) features

// Behavioural features average over trials 1..t-1; general features describe the current
// hotel and the candidate review. Index order is the on-disk/vector order.
enum class Sg : std::size_t {
  HotelAcceptance,
  HotelAcceptanceEarn,
  HotelAcceptanceLose,
  NotHotelAcceptanceEarn,
  NotHotelAcceptanceLose,
  BadHotelAcceptance,
  NotExcellentHotelAcceptance,
  DMPayoff,
  LotteryLow,
  LotteryMed,
  LotteryHigh,
  CompletedTrials,
  GoodHotel,
  MedHotel,
  BadHotel,
  HighScore,
  MedScore,
  LowScore,
  TopReview,
  BottomReview,
  // Mean of l_i - 8 over all past trials, accepted or not.
  CounterfactualDMPayoff,
};

inline constexpr std::size_t kSgDim = 21;

struct SgFeatures {
  std::array<double, kSgDim> values{};

  double operator[](Sg f) const { return values[static_cast<std::size_t>(f)]; }
  double& operator[](Sg f) { return values[static_cast<std::size_t>(f)]; }
  static const std::array<std::string_view, kSgDim>& names();
  bool operator==(const SgFeatures&) const = default;
};

// Thresholds used by the SG features.
namespace sg_threshold {
inline constexpr double kBadHotel = 7.5;
inline constexpr double kGoodHotel = 8.5;
inline constexpr double kExcellentHotel = 9.5;
inline constexpr double kLotteryLow = 3.0;
inline constexpr double kLotteryMedHigh = 5.0;
inline constexpr double kLotteryHigh = 8.0;
inline constexpr std::size_t kTopReviews = 3;
}  // namespace sg_threshold

// Position of review `index` when the hotel's reviews are ordered by (score desc, index asc).
std::size_t score_rank(const Hotel& hotel, std::size_t index);

SgFeatures sg_features(std::span<const TrialRecord> history, int horizon, const Hotel& hotel,
                       std::size_t candidate_index);
SgFeatures sg_features(const GameState& state, const Hotel& hotel, const Review& candidate);

// ---------------------------------------------------------------------------------------------
// Hand-crafted (HC) textual features

inline constexpr std::size_t kHcDim = 42;
using HcFeatures = std::bitset<kHcDim>;

enum class ReviewPart { Positive, Negative, Whole };

// One bit of the HC vector. `arg` names a topic, a length class (short/medium/long), an
// intensity level (high/medium/low) or a structural property, depending on `kind`.
struct HcFeatureSpec {
  std::string name;
  std::string kind;  // topic | length | intensity | structure
  ReviewPart part = ReviewPart::Whole;
  std::string arg;
  bool operator==(const HcFeatureSpec&) const = default;
};

struct Topic {
  std::string name;
  std::vector<std::string> words;
  bool operator==(const Topic&) const = default;
};

struct FeatureManifest {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  std::string name;
  std::vector<HcFeatureSpec> features;
  std::vector<Topic> topics;
  std::vector<std::string> intensity_high;
  std::vector<std::string> intensity_medium;
  std::vector<std::string> intensity_low;
  // A negative part made only of these tokens says "nothing bad".
  std::vector<std::string> nothing_words;
  // Character counts: short < short_below <= medium < long_from <= long.
  std::size_t short_below = 50;
  std::size_t long_from = 150;
  std::size_t long_review_from = 300;
  double dominance_ratio = 2.0;

  static const FeatureManifest& default_manifest();
  static FeatureManifest from_json(const nlohmann::json& j);
  static FeatureManifest load(const std::filesystem::path& path);

  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;
  // Throws ConfigError unless the manifest describes exactly 42 resolvable bits.
  void validate() const;
  // FNV-1a 64 over the compact JSON serialization (keys sorted).
  std::uint64_t hash() const;
  std::string hash_hex() const;
  std::vector<std::string> feature_names() const;

  bool operator==(const FeatureManifest&) const = default;
};

// Lowercased ASCII alphanumeric runs; every other byte separates tokens.
std::vector<std::string> tokenize(std::string_view text);
// Code points in a UTF-8 string.
std::size_t char_count(std::string_view text);

// Prepared form of a manifest: lexicons as hash sets and token sequences.
class HcExtractor {
 public:
  explicit HcExtractor(FeatureManifest manifest);

  HcFeatures extract(const Review& review) const;
  const FeatureManifest& manifest() const { return manifest_; }

 private:
  struct Lexicon {
    std::unordered_set<std::string> words;
    std::vector<std::vector<std::string>> phrases;
    bool matches(const std::vector<std::string>& tokens) const;
  };
  Lexicon build(const std::vector<std::string>& entries) const;

  FeatureManifest manifest_;
  std::unordered_map<std::string, Lexicon> topic_lexicons_;
  std::array<Lexicon, 3> intensity_;  // high, medium, low
  std::unordered_set<std::string> nothing_;
};

HcFeatures hc_features(const Review& review, const FeatureManifest& manifest);

// ---------------------------------------------------------------------------------------------
// Per-trial model input

enum class FeatureMode { Textual, NumericalOnly };

std::string_view to_string(FeatureMode m);
FeatureMode parse_feature_mode(std::string_view s);
inline constexpr std::size_t feature_dim(FeatureMode m) {
  return m == FeatureMode::Textual ? kSgDim + kHcDim : kSgDim;
}

using FeatureVector = std::vector<double>;

FeatureVector trial_vector(const SgFeatures& sg, const HcFeatures& hc, FeatureMode mode);
FeatureVector trial_vector(const GameState& state, const Hotel& hotel, const Review& review,
                           FeatureMode mode,
                           const FeatureManifest& manifest = FeatureManifest::default_manifest());

// ---------------------------------------------------------------------------------------------
// Hotel catalog: id lookup plus precomputed HC bits for every review.

class HotelCatalog {
 public:
  explicit HotelCatalog(const FeatureManifest& manifest = FeatureManifest::default_manifest());
  HotelCatalog(std::span<const Hotel> hotels,
               const FeatureManifest& manifest = FeatureManifest::default_manifest());

  // Re-adding an identical hotel is a no-op; a different hotel under the same id throws.
  void add(const Hotel& hotel);
  const Hotel* find(std::string_view hotel_id) const;
  const Hotel& at(std::string_view hotel_id) const;
  const HcFeatures& hc(std::string_view hotel_id, std::size_t review_index) const;
  const HcFeatures* hc_of_review(std::string_view hotel_id, std::string_view review_id) const;
  // Cached bits when the hotel is known, otherwise extracted on the fly.
  HcFeatures hc_for(const Hotel& hotel, std::size_t review_index) const;
  HcFeatures extract(const Review& review) const { return extractor_.extract(review); }
  const FeatureManifest& manifest() const { return extractor_.manifest(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Hotel hotel;
    std::vector<HcFeatures> hc;
  };
  HcExtractor extractor_;
  std::unordered_map<std::string, Entry> entries_;
};

// Turns game histories into model input sequences. Past trials are resolved through the
// catalog; the current (hotel, review) pair is given explicitly.
class FeatureEncoder {
 public:
  FeatureEncoder(std::shared_ptr<const HotelCatalog> catalog, FeatureMode mode);

  FeatureMode mode() const { return mode_; }
  std::size_t dim() const { return feature_dim(mode_); }
  const HotelCatalog& catalog() const { return *catalog_; }
  const std::shared_ptr<const HotelCatalog>& catalog_ptr() const { return catalog_; }

  // Vector for completed trial `i` (0-based) of `state`.
  FeatureVector history_step(const GameState& state, std::size_t i) const;
  FeatureVector current_step(const GameState& state, const Hotel& hotel,
                             std::size_t review_index) const;
  // Steps 1..t: completed trials followed by the current candidate.
  std::vector<FeatureVector> sequence(const GameState& state, const Hotel& hotel,
                                      std::size_t review_index) const;

 private:
  std::shared_ptr<const HotelCatalog> catalog_;
  FeatureMode mode_;
};

}  // namespace persuasion
