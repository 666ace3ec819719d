#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "persuasion/features.hpp"
#include "persuasion/game.hpp"
#include "persuasion/neural.hpp"

namespace persuasion {

enum class Split { Train, Test };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

enum class CorpusFormat { Csv, Jsonl };
CorpusFormat parse_corpus_format(std::string_view s);
// Guesses from the extension (.csv / .jsonl / .json).
CorpusFormat corpus_format_for(const std::filesystem::path& path);

struct Corpus {
  std::vector<Hotel> hotels;
  Split split = Split::Train;
  std::string provenance;
  // Generated reviews may be shorter than the 100-character minimum of collected ones.
  bool synthetic_text = false;

  const Hotel* find(std::string_view id) const;
  bool operator==(const Corpus&) const = default;
};

inline constexpr std::size_t kMinReviewChars = 100;

// CSV: one review per row, columns hotel_id, review_id, score, positive_text, negative_text,
// RFC 4180 quoting. An optional first line "#persuasion-corpus v1 key=value ..." carries
// split, provenance and synthetic_text. Column names from the released dataset are accepted
// through an alias table. JSONL: a header object, then one hotel object per line.
// Errors: DataError carrying the 1-based line of the offending record.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format);

// Throws DataError if the two corpora share a hotel id.
void check_disjoint(const Corpus& train, const Corpus& test);

// Low-level RFC 4180 reader, exposed for tests. Each record carries its first line number.
struct CsvRecord {
  long line = 0;
  std::vector<std::string> fields;
};
std::vector<CsvRecord> parse_csv(std::string_view text);
std::string csv_escape(std::string_view field);

struct GameLog {
  std::string game_id;
  std::string expert_id;
  std::string dm_id;
  std::vector<TrialRecord> trials;

  std::vector<std::string> hotel_sequence() const;
  int expert_total() const;
  double dm_total() const;
  bool operator==(const GameLog&) const = default;
};

struct LoadedLogs {
  std::vector<GameLog> logs;
  std::size_t skipped = 0;
  std::vector<std::string> problems;  // one message per skipped game
};

// JSONL: a header object, then one object per trial. Every game is replay-validated against
// the catalog (complete 10 trials, hotel and review known, lottery among the hotel's scores,
// payoffs consistent); invalid games are skipped and reported, malformed lines throw.
LoadedLogs load_game_logs(const std::filesystem::path& path, const HotelCatalog& catalog);
LoadedLogs parse_game_logs(std::string_view text, const HotelCatalog& catalog);
// Byte-stable: saving the same logs twice yields identical files.
void save_game_logs(std::span<const GameLog> logs, const std::filesystem::path& path);
std::string format_game_logs(std::span<const GameLog> logs);

// Replays one log; returns an error message for the first inconsistency.
std::optional<std::string> validate_log(const GameLog& log, const HotelCatalog& catalog);

// Scripted decision makers used to populate synthetic logs.
struct Archetype {
  enum class Kind { Threshold, Trusting, Spiteful, HumanLike };
  Kind kind = Kind::HumanLike;
  double threshold = 8.0;  // Threshold: accept iff the revealed score >= threshold

  std::string name() const;
  // "threshold", "threshold:7.5", "trusting", "spiteful", "human".
  static Archetype parse(std::string_view s);
};

// Probability that the archetype accepts the review at the current trial.
double archetype_accept_probability(const Archetype& a, const GameState& state,
                                    const Hotel& hotel, std::size_t review_index);

struct SyntheticData {
  Corpus corpus;
  std::vector<GameLog> logs;
};

// Hotels spread over low/medium/high tiers with lexicon-templated review texts, and games in
// which the revealed review is chosen by a mix of simple expert policies. Hotel ids are
// "<id_prefix>-0001", ...; distinct prefixes give disjoint train and test corpora.
SyntheticData generate_synthetic(std::uint64_t seed, std::size_t n_hotels, std::size_t n_games,
                                 const Archetype& archetype,
                                 const FeatureManifest& manifest = FeatureManifest::default_manifest(),
                                 std::string_view id_prefix = "hotel");
// Templated text for a review with the given score.
Review synthetic_review(const std::string& id, double score, Rng& rng,
                        const FeatureManifest& manifest = FeatureManifest::default_manifest());

struct TrainingSequence {
  std::vector<FeatureVector> inputs;
  std::vector<double> dmm_targets;  // 1 = accept
  std::vector<double> vm_targets;   // accepts from this trial to the end of the game
};

std::vector<TrainingSequence> build_training_sequences(std::span<const GameLog> logs,
                                                       const FeatureEncoder& encoder);
std::vector<Sample> dmm_samples(std::span<const TrainingSequence> seqs);
std::vector<Sample> vm_samples(std::span<const TrainingSequence> seqs);

}  // namespace persuasion
