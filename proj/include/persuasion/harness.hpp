#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persuasion/dataset.hpp"
#include "persuasion/experts.hpp"
#include "persuasion/models.hpp"

namespace persuasion {

// ---------------------------------------------------------------------------------------------
// Statistics

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
  bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
};

// Percentile bootstrap interval for the mean. Throws ContractViolation on empty input.
Interval percentile_bootstrap(std::span<const double> xs, std::size_t resamples, double confidence,
                              Rng& rng);

// Pearson correlation; nullopt when either side has zero variance or fewer than 2 points.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);

// ---------------------------------------------------------------------------------------------
// Tournaments

struct TournamentConfig {
  std::string expert = "ae";
  std::string dm = "dmm.hc-lstm";
  double alpha = 0.0;
  std::size_t games = 1000;
  std::uint64_t seed = 1;
  std::size_t bootstrap_resamples = 1000;
  double confidence = 0.95;
  unsigned threads = 0;  // 0: one per hardware thread

  nlohmann::json to_json() const;
  static TournamentConfig from_json(const nlohmann::json& j);
};

struct GameOutcome {
  std::size_t index = 0;
  std::vector<TrialRecord> trials;
  int expert_payoff = 0;
  double dm_payoff = 0.0;
};

struct TournamentResult {
  std::string expert;
  std::string dm;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::vector<GameOutcome> games;
  double mean_expert = 0.0;
  double mean_dm = 0.0;
  Interval ci_expert;
  Interval ci_dm;

  std::vector<GameLog> logs() const;
  nlohmann::json summary() const;
  // One row per game: expert, dm, alpha, game, expert_payoff, dm_payoff, revealed review ids.
  static void write_csv_header(std::ostream& out);
  void write_csv_rows(std::ostream& out) const;
};

// Plays `config.games` games. Game g draws its hotel order and DM/lottery noise from
// derive_seed(seed, g) and the expert's own randomness from a separate stream, so every expert
// faces the same hotels and DM coin flips under the same seed.
TournamentResult run_tournament(const Expert& expert, const SimulatedDm& dm,
                                std::span<const Hotel> hotels, const TournamentConfig& config);
// Resolves the expert and DM names through the registries.
TournamentResult run_tournament(const TournamentConfig& config, const ModelRegistry& models,
                                std::shared_ptr<const std::vector<Hotel>> hotels,
                                const ExpertOptions& options = {});

// Results of one expert at increasing alpha.
struct MonotonicityCheck {
  std::vector<double> alphas;
  std::vector<double> means;
  bool non_decreasing = false;
  bool extremes_separated = false;  // CIs at the lowest and highest alpha do not overlap
};
MonotonicityCheck check_monotone(std::vector<TournamentResult> results);

// ---------------------------------------------------------------------------------------------
// Model evaluation on held-out logs

struct DmmEvaluation {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::size_t trials = 0;
};
struct VmEvaluation {
  double exact_accuracy = 0.0;  // rounded prediction equals the target
  double rmse = 0.0;
  std::size_t trials = 0;
};

DmmEvaluation evaluate_dmm(const DmmInterface& model, std::span<const GameLog> logs,
                           const HotelCatalog& catalog);
VmEvaluation evaluate_vm(const VmInterface& model, std::span<const GameLog> logs,
                         const HotelCatalog& catalog);

// ---------------------------------------------------------------------------------------------
// Analyses over played games

std::optional<double> payoff_correlation(std::span<const TournamentResult> results);

// Review score min-max normalised within its hotel; 0.5 when all scores are equal.
double normalized_score(const Hotel& hotel, std::size_t review_index);
double mean_normalized_revealed_score(std::span<const GameLog> logs, const HotelCatalog& catalog);

enum class HotelTier { Low, Medium, High };
std::string_view to_string(HotelTier t);
// < 7.5 low, [7.5, 8.5] medium, > 8.5 high.
HotelTier hotel_tier(double avg_score);

struct TopicFrequency {
  std::string topic;
  double frequency = 0.0;  // share of revealed reviews mentioning the topic in either part
  bool operator==(const TopicFrequency&) const = default;
};
struct TierTopics {
  HotelTier tier = HotelTier::Low;
  std::size_t revealed = 0;
  std::vector<TopicFrequency> top;  // most frequent first, ties by name
};
std::vector<TierTopics> analyze_topics(std::span<const GameLog> logs, const HotelCatalog& catalog,
                                       std::size_t k = 5);

// Revealed reviews binned by rank within their hotel: the two lowest, the middle three, the two
// highest.
struct ScoreBins {
  std::array<std::size_t, 3> count{};  // low, medium, high
  std::array<double, 3> frequency{};
  std::array<double, 3> mean_score{};  // 0 for an empty bin
  std::size_t total = 0;
};
int score_bin(const Hotel& hotel, std::size_t review_index);  // 0 low, 1 medium, 2 high
ScoreBins analyze_score_bins(std::span<const GameLog> logs, const HotelCatalog& catalog);

// ---------------------------------------------------------------------------------------------
// Training

// Role names: "<dmm|vm>.<hc-lstm|sg-lstm|linear>".
struct RoleSpec {
  std::string task;   // dmm | vm
  std::string arch;   // lstm | linear
  FeatureMode mode = FeatureMode::Textual;

  static RoleSpec parse(const std::string& role);
};

ModelFile train_model(const RoleSpec& role, std::span<const GameLog> logs,
                      std::shared_ptr<const HotelCatalog> catalog, const TrainingConfig& config);

}  // namespace persuasion
