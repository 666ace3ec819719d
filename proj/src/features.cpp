#include "persuasion/features.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "persuasion/errors.hpp"

namespace persuasion {

// ---------------------------------------------------------------------------------------------
// SG

const std::array<std::string_view, kSgDim>& SgFeatures::names() {
  static const std::array<std::string_view, kSgDim> kNames = {
      "HotelAcceptance",        "HotelAcceptanceEarn",
      "HotelAcceptanceLose",    "NotHotelAcceptanceEarn",
      "NotHotelAcceptanceLose", "BadHotelAcceptance",
      "NotExcellentHotelAcceptance", "DMPayoff",
      "LotteryLow",             "LotteryMed",
      "LotteryHigh",            "CompletedTrials",
      "GoodHotel",              "MedHotel",
      "BadHotel",               "HighScore",
      "MedScore",               "LowScore",
      "TopReview",              "BottomReview",
      "CounterfactualDMPayoff",
  };
  return kNames;
}

std::size_t score_rank(const Hotel& hotel, std::size_t index) {
  const auto reviews = hotel.reviews();
  const double s = reviews[index].score;
  std::size_t rank = 0;
  for (std::size_t j = 0; j < reviews.size(); ++j) {
    if (reviews[j].score > s || (reviews[j].score == s && j < index)) ++rank;
  }
  return rank;
}

SgFeatures sg_features(std::span<const TrialRecord> history, int horizon, const Hotel& hotel,
                       std::size_t candidate_index) {
  using namespace sg_threshold;
  SgFeatures f;
  if (!history.empty()) {
    double accepted = 0, earn = 0, lose = 0, not_earn = 0, not_lose = 0, bad_acc = 0,
           not_excellent = 0, payoff = 0, low = 0, med = 0, high = 0, counterfactual = 0;
    for (const auto& r : history) {
      // Counterfactual payoff equals the realized one on accepted trials.
      const double dmp = r.counterfactual_dm_payoff();
      if (r.accepted()) {
        accepted += 1;
        earn += dmp > 0 ? 1 : 0;
        lose += dmp < 0 ? 1 : 0;
        bad_acc += r.hotel_avg_score < kBadHotel ? 1 : 0;
      } else {
        not_earn += dmp > 0 ? 1 : 0;
        not_lose += dmp < 0 ? 1 : 0;
        not_excellent += r.hotel_avg_score > kExcellentHotel ? 1 : 0;
      }
      payoff += r.dm_payoff;
      low += r.lottery_result < kLotteryLow ? 1 : 0;
      med += (r.lottery_result >= kLotteryLow && r.lottery_result < kLotteryMedHigh) ? 1 : 0;
      high += r.lottery_result >= kLotteryHigh ? 1 : 0;
      counterfactual += dmp;
    }
    const double n = static_cast<double>(history.size());
    f[Sg::HotelAcceptance] = accepted / n;
    f[Sg::HotelAcceptanceEarn] = earn / n;
    f[Sg::HotelAcceptanceLose] = lose / n;
    f[Sg::NotHotelAcceptanceEarn] = not_earn / n;
    f[Sg::NotHotelAcceptanceLose] = not_lose / n;
    f[Sg::BadHotelAcceptance] = bad_acc / n;
    f[Sg::NotExcellentHotelAcceptance] = not_excellent / n;
    f[Sg::DMPayoff] = payoff / n;
    f[Sg::LotteryLow] = low / n;
    f[Sg::LotteryMed] = med / n;
    f[Sg::LotteryHigh] = high / n;
    f[Sg::CounterfactualDMPayoff] = counterfactual / n;
  }
  f[Sg::CompletedTrials] = static_cast<double>(history.size()) / static_cast<double>(horizon);

  const double h = hotel.avg_score();
  f[Sg::GoodHotel] = h >= kGoodHotel ? 1 : 0;
  f[Sg::MedHotel] = (h >= kBadHotel && h < kGoodHotel) ? 1 : 0;
  f[Sg::BadHotel] = h < kBadHotel ? 1 : 0;

  const double s = hotel.review(candidate_index).score;
  f[Sg::HighScore] = s >= kGoodHotel ? 1 : 0;
  f[Sg::MedScore] = (s >= kBadHotel && s < kGoodHotel) ? 1 : 0;
  f[Sg::LowScore] = s < kBadHotel ? 1 : 0;

  const bool top = score_rank(hotel, candidate_index) < kTopReviews;
  f[Sg::TopReview] = top ? 1 : 0;
  f[Sg::BottomReview] = top ? 0 : 1;
  return f;
}

SgFeatures sg_features(const GameState& state, const Hotel& hotel, const Review& candidate) {
  const auto idx = hotel.index_of(candidate.id);
  if (!idx) throw ContractViolation("candidate review not in hotel " + hotel.id());
  return sg_features(state.completed(), state.horizon(), hotel, *idx);
}

// ---------------------------------------------------------------------------------------------
// Manifest

namespace {

std::string part_suffix(ReviewPart p) {
  switch (p) {
    case ReviewPart::Positive:
      return "pos";
    case ReviewPart::Negative:
      return "neg";
    case ReviewPart::Whole:
      break;
  }
  return "all";
}

ReviewPart parse_part(const std::string& s) {
  if (s == "pos") return ReviewPart::Positive;
  if (s == "neg") return ReviewPart::Negative;
  if (s == "all") return ReviewPart::Whole;
  throw ConfigError("manifest: unknown review part '" + s + "'");
}

const std::vector<std::string>& structure_properties() {
  static const std::vector<std::string> kProps = {
      "pos_empty",    "neg_empty",    "pos_longer",         "pos_dominant",
      "neg_dominant", "balanced",     "pos_exclaim",        "neg_exclaim",
      "pos_multi_sentence", "neg_multi_sentence", "neg_nothing", "long_review"};
  return kProps;
}

FeatureManifest build_default_manifest() {
  FeatureManifest m;
  m.name = "hc-default-v1";
  m.topics = {
      {"location",
       {"location", "located", "central", "centre", "center", "walking distance", "close to",
        "near", "area", "neighbourhood", "neighborhood", "situated"}},
      {"metro",
       {"metro", "subway", "underground", "tube", "station", "train", "bus", "tram", "airport",
        "transport", "transportation", "taxi", "parking"}},
      {"staff",
       {"staff", "reception", "receptionist", "front desk", "employees", "service", "manager",
        "concierge", "welcoming", "host"}},
      {"room",
       {"room", "rooms", "bed", "beds", "bathroom", "shower", "pillow", "pillows", "suite",
        "towels", "toilet", "mattress"}},
      {"facilities",
       {"facilities", "pool", "gym", "spa", "wifi", "wi fi", "elevator", "lift", "sauna",
        "air conditioning", "heating", "lobby"}},
      {"food",
       {"breakfast", "food", "restaurant", "dinner", "coffee", "bar", "buffet", "meal", "lunch",
        "drinks", "tea"}},
      {"price",
       {"price", "value", "money", "expensive", "cheap", "cost", "overpriced", "affordable",
        "paid", "charge", "charged"}},
      {"design",
       {"design", "decor", "decoration", "modern", "style", "stylish", "furniture", "old",
        "renovated", "interior", "building"}},
      {"view",
       {"view", "views", "window", "balcony", "terrace", "rooftop", "sea", "overlooking",
        "skyline", "river"}},
  };
  m.intensity_high = {"amazing", "excellent", "perfect", "fantastic", "wonderful",
                      "outstanding", "superb", "exceptional", "awful", "terrible",
                      "horrible", "disgusting", "worst", "best", "filthy", "unacceptable"};
  m.intensity_medium = {"good", "great", "nice", "lovely", "comfortable", "friendly",
                        "helpful", "clean", "bad", "dirty", "noisy", "poor",
                        "rude", "disappointing", "unfriendly", "uncomfortable"};
  m.intensity_low = {"ok", "okay", "fine", "decent", "average", "adequate", "basic",
                     "small", "little", "bit", "slightly", "could be better"};
  m.nothing_words = {"nothing", "none", "na", "n", "a", "no", "complaints", "complaint",
                     "really", "at", "all", "everything", "was", "fine"};

  for (const auto part : {ReviewPart::Positive, ReviewPart::Negative}) {
    for (const auto& t : m.topics) {
      m.features.push_back({"topic_" + t.name + "_" + part_suffix(part), "topic", part, t.name});
    }
  }
  for (const auto part : {ReviewPart::Positive, ReviewPart::Negative}) {
    for (const char* c : {"short", "medium", "long"}) {
      m.features.push_back(
          {std::string("length_") + c + "_" + part_suffix(part), "length", part, c});
    }
  }
  for (const auto part : {ReviewPart::Positive, ReviewPart::Negative}) {
    for (const char* c : {"high", "medium", "low"}) {
      m.features.push_back(
          {std::string("intensity_") + c + "_" + part_suffix(part), "intensity", part, c});
    }
  }
  for (const auto& p : structure_properties()) {
    m.features.push_back({"structure_" + p, "structure", ReviewPart::Whole, p});
  }
  m.validate();
  return m;
}

}  // namespace

const FeatureManifest& FeatureManifest::default_manifest() {
  static const FeatureManifest kDefault = build_default_manifest();
  return kDefault;
}

void FeatureManifest::validate() const {
  if (schema_version != kSchemaVersion) {
    throw ConfigError("manifest schema version " + std::to_string(schema_version) +
                      " unsupported");
  }
  if (features.size() != kHcDim) {
    throw ConfigError("manifest declares " + std::to_string(features.size()) +
                      " features, expected 42");
  }
  if (!(short_below <= long_from)) throw ConfigError("manifest: short_below > long_from");
  if (!(dominance_ratio >= 1.0)) throw ConfigError("manifest: dominance_ratio < 1");
  std::unordered_set<std::string> seen;
  for (const auto& f : features) {
    if (!seen.insert(f.name).second) throw ConfigError("manifest: duplicate feature " + f.name);
    if (f.kind == "topic") {
      const bool known = std::any_of(topics.begin(), topics.end(),
                                     [&](const Topic& t) { return t.name == f.arg; });
      if (!known || f.part == ReviewPart::Whole) {
        throw ConfigError("manifest: bad topic feature " + f.name);
      }
    } else if (f.kind == "length") {
      if ((f.arg != "short" && f.arg != "medium" && f.arg != "long") ||
          f.part == ReviewPart::Whole) {
        throw ConfigError("manifest: bad length feature " + f.name);
      }
    } else if (f.kind == "intensity") {
      if ((f.arg != "high" && f.arg != "medium" && f.arg != "low") ||
          f.part == ReviewPart::Whole) {
        throw ConfigError("manifest: bad intensity feature " + f.name);
      }
    } else if (f.kind == "structure") {
      const auto& props = structure_properties();
      if (std::find(props.begin(), props.end(), f.arg) == props.end()) {
        throw ConfigError("manifest: unknown structural property " + f.arg);
      }
    } else {
      throw ConfigError("manifest: unknown feature kind '" + f.kind + "'");
    }
  }
}

nlohmann::json FeatureManifest::to_json() const {
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["name"] = name;
  auto& feats = j["features"] = nlohmann::json::array();
  for (const auto& f : features) {
    feats.push_back({{"name", f.name}, {"kind", f.kind}, {"part", part_suffix(f.part)},
                     {"arg", f.arg}});
  }
  auto& tops = j["topics"] = nlohmann::json::array();
  for (const auto& t : topics) tops.push_back({{"name", t.name}, {"words", t.words}});
  j["intensity"] = {{"high", intensity_high}, {"medium", intensity_medium},
                    {"low", intensity_low}};
  j["nothing_words"] = nothing_words;
  j["length_thresholds"] = {{"short_below", short_below},
                            {"long_from", long_from},
                            {"long_review_from", long_review_from}};
  j["dominance_ratio"] = dominance_ratio;
  return j;
}

FeatureManifest FeatureManifest::from_json(const nlohmann::json& j) {
  FeatureManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    m.name = j.at("name").get<std::string>();
    for (const auto& f : j.at("features")) {
      m.features.push_back({f.at("name").get<std::string>(), f.at("kind").get<std::string>(),
                            parse_part(f.at("part").get<std::string>()),
                            f.at("arg").get<std::string>()});
    }
    for (const auto& t : j.at("topics")) {
      m.topics.push_back(
          {t.at("name").get<std::string>(), t.at("words").get<std::vector<std::string>>()});
    }
    const auto& in = j.at("intensity");
    m.intensity_high = in.at("high").get<std::vector<std::string>>();
    m.intensity_medium = in.at("medium").get<std::vector<std::string>>();
    m.intensity_low = in.at("low").get<std::vector<std::string>>();
    m.nothing_words = j.at("nothing_words").get<std::vector<std::string>>();
    const auto& lt = j.at("length_thresholds");
    m.short_below = lt.at("short_below").get<std::size_t>();
    m.long_from = lt.at("long_from").get<std::size_t>();
    m.long_review_from = lt.at("long_review_from").get<std::size_t>();
    m.dominance_ratio = j.at("dominance_ratio").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

FeatureManifest FeatureManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void FeatureManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest " + path.string());
  out << to_json().dump(2) << '\n';
}

std::uint64_t FeatureManifest::hash() const {
  const std::string canonical = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string FeatureManifest::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

std::vector<std::string> FeatureManifest::feature_names() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

// ---------------------------------------------------------------------------------------------
// HC extraction

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      cur.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::size_t char_count(std::string_view text) {
  std::size_t n = 0;
  for (const char ch : text) n += (static_cast<unsigned char>(ch) & 0xC0) != 0x80 ? 1 : 0;
  return n;
}

namespace {

std::size_t sentence_count(std::string_view text) {
  std::size_t count = 0;
  bool in_sentence = false;
  for (const char ch : text) {
    if (ch == '.' || ch == '!' || ch == '?') {
      if (in_sentence) ++count;
      in_sentence = false;
    } else if (std::isalnum(static_cast<unsigned char>(ch))) {
      in_sentence = true;
    }
  }
  return count + (in_sentence ? 1 : 0);
}

}  // namespace

bool HcExtractor::Lexicon::matches(const std::vector<std::string>& tokens) const {
  for (const auto& t : tokens) {
    if (words.count(t)) return true;
  }
  for (const auto& phrase : phrases) {
    if (phrase.size() > tokens.size()) continue;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
      if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<long>(i))) {
        return true;
      }
    }
  }
  return false;
}

HcExtractor::Lexicon HcExtractor::build(const std::vector<std::string>& entries) const {
  Lexicon lex;
  for (const auto& e : entries) {
    auto toks = tokenize(e);
    if (toks.size() == 1) {
      lex.words.insert(std::move(toks.front()));
    } else if (toks.size() > 1) {
      lex.phrases.push_back(std::move(toks));
    }
  }
  return lex;
}

HcExtractor::HcExtractor(FeatureManifest manifest) : manifest_(std::move(manifest)) {
  manifest_.validate();
  for (const auto& t : manifest_.topics) topic_lexicons_[t.name] = build(t.words);
  intensity_[0] = build(manifest_.intensity_high);
  intensity_[1] = build(manifest_.intensity_medium);
  intensity_[2] = build(manifest_.intensity_low);
  for (const auto& w : manifest_.nothing_words) {
    for (auto& t : tokenize(w)) nothing_.insert(std::move(t));
  }
}

HcFeatures HcExtractor::extract(const Review& review) const {
  const auto pos_tokens = tokenize(review.positive_text);
  const auto neg_tokens = tokenize(review.negative_text);
  const std::size_t pos_len = char_count(review.positive_text);
  const std::size_t neg_len = char_count(review.negative_text);
  const double ratio = manifest_.dominance_ratio;

  auto length_class = [&](std::size_t n) -> std::string_view {
    if (n < manifest_.short_below) return "short";
    if (n < manifest_.long_from) return "medium";
    return "long";
  };

  HcFeatures bits;
  for (std::size_t i = 0; i < manifest_.features.size(); ++i) {
    const auto& f = manifest_.features[i];
    const bool pos = f.part == ReviewPart::Positive;
    const auto& tokens = pos ? pos_tokens : neg_tokens;
    bool on = false;
    if (f.kind == "topic") {
      on = topic_lexicons_.at(f.arg).matches(tokens);
    } else if (f.kind == "length") {
      on = length_class(pos ? pos_len : neg_len) == f.arg;
    } else if (f.kind == "intensity") {
      const std::size_t level = f.arg == "high" ? 0 : f.arg == "medium" ? 1 : 2;
      on = intensity_[level].matches(tokens);
    } else {
      const auto& p = f.arg;
      if (p == "pos_empty") {
        on = pos_tokens.empty();
      } else if (p == "neg_empty") {
        on = neg_tokens.empty();
      } else if (p == "pos_longer") {
        on = pos_len > neg_len;
      } else if (p == "pos_dominant") {
        on = pos_len > 0 && static_cast<double>(pos_len) >= ratio * static_cast<double>(neg_len);
      } else if (p == "neg_dominant") {
        on = neg_len > 0 && static_cast<double>(neg_len) >= ratio * static_cast<double>(pos_len);
      } else if (p == "balanced") {
        on = pos_len > 0 && neg_len > 0 &&
             static_cast<double>(pos_len) < ratio * static_cast<double>(neg_len) &&
             static_cast<double>(neg_len) < ratio * static_cast<double>(pos_len);
      } else if (p == "pos_exclaim") {
        on = review.positive_text.find('!') != std::string::npos;
      } else if (p == "neg_exclaim") {
        on = review.negative_text.find('!') != std::string::npos;
      } else if (p == "pos_multi_sentence") {
        on = sentence_count(review.positive_text) >= 2;
      } else if (p == "neg_multi_sentence") {
        on = sentence_count(review.negative_text) >= 2;
      } else if (p == "neg_nothing") {
        on = !neg_tokens.empty() && std::all_of(neg_tokens.begin(), neg_tokens.end(),
                                                [&](const std::string& t) {
                                                  return nothing_.count(t) > 0;
                                                });
      } else if (p == "long_review") {
        on = pos_len + neg_len >= manifest_.long_review_from;
      }
    }
    bits.set(i, on);
  }
  return bits;
}

HcFeatures hc_features(const Review& review, const FeatureManifest& manifest) {
  return HcExtractor(manifest).extract(review);
}

// ---------------------------------------------------------------------------------------------
// Vectors

std::string_view to_string(FeatureMode m) {
  return m == FeatureMode::Textual ? "textual" : "numerical";
}

FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "textual" || s == "Textual") return FeatureMode::Textual;
  if (s == "numerical" || s == "NumericalOnly" || s == "numerical_only") {
    return FeatureMode::NumericalOnly;
  }
  throw ConfigError("unknown feature mode '" + std::string(s) + "'");
}

FeatureVector trial_vector(const SgFeatures& sg, const HcFeatures& hc, FeatureMode mode) {
  FeatureVector v(sg.values.begin(), sg.values.end());
  if (mode == FeatureMode::Textual) {
    v.reserve(kSgDim + kHcDim);
    for (std::size_t i = 0; i < kHcDim; ++i) v.push_back(hc.test(i) ? 1.0 : 0.0);
  }
  return v;
}

FeatureVector trial_vector(const GameState& state, const Hotel& hotel, const Review& review,
                           FeatureMode mode, const FeatureManifest& manifest) {
  const auto sg = sg_features(state, hotel, review);
  if (mode == FeatureMode::NumericalOnly) return trial_vector(sg, HcFeatures{}, mode);
  return trial_vector(sg, hc_features(review, manifest), mode);
}

// ---------------------------------------------------------------------------------------------
// Catalog / encoder

HotelCatalog::HotelCatalog(const FeatureManifest& manifest) : extractor_(manifest) {}

HotelCatalog::HotelCatalog(std::span<const Hotel> hotels, const FeatureManifest& manifest)
    : extractor_(manifest) {
  for (const auto& h : hotels) add(h);
}

void HotelCatalog::add(const Hotel& hotel) {
  const auto it = entries_.find(hotel.id());
  if (it != entries_.end()) {
    if (it->second.hotel == hotel) return;
    throw DataError("catalog: conflicting definitions for hotel " + hotel.id());
  }
  std::vector<HcFeatures> hc;
  hc.reserve(hotel.size());
  for (const auto& r : hotel.reviews()) hc.push_back(extractor_.extract(r));
  entries_.emplace(hotel.id(), Entry{hotel, std::move(hc)});
}

const Hotel* HotelCatalog::find(std::string_view hotel_id) const {
  const auto it = entries_.find(std::string(hotel_id));
  return it == entries_.end() ? nullptr : &it->second.hotel;
}

const Hotel& HotelCatalog::at(std::string_view hotel_id) const {
  const auto* h = find(hotel_id);
  if (!h) throw DataError("unknown hotel " + std::string(hotel_id));
  return *h;
}

const HcFeatures& HotelCatalog::hc(std::string_view hotel_id, std::size_t review_index) const {
  const auto it = entries_.find(std::string(hotel_id));
  if (it == entries_.end()) throw DataError("unknown hotel " + std::string(hotel_id));
  return it->second.hc.at(review_index);
}

const HcFeatures* HotelCatalog::hc_of_review(std::string_view hotel_id,
                                             std::string_view review_id) const {
  const auto it = entries_.find(std::string(hotel_id));
  if (it == entries_.end()) return nullptr;
  const auto idx = it->second.hotel.index_of(review_id);
  return idx ? &it->second.hc[*idx] : nullptr;
}

HcFeatures HotelCatalog::hc_for(const Hotel& hotel, std::size_t review_index) const {
  const auto it = entries_.find(hotel.id());
  if (it != entries_.end() && it->second.hotel == hotel) return it->second.hc.at(review_index);
  return extractor_.extract(hotel.review(review_index));
}

FeatureEncoder::FeatureEncoder(std::shared_ptr<const HotelCatalog> catalog, FeatureMode mode)
    : catalog_(std::move(catalog)), mode_(mode) {
  if (!catalog_) throw ContractViolation("feature encoder needs a catalog");
}

FeatureVector FeatureEncoder::history_step(const GameState& state, std::size_t i) const {
  const auto history = state.completed();
  const auto& rec = history[i];
  const Hotel& hotel = catalog_->at(rec.hotel_id);
  const auto idx = hotel.index_of(rec.revealed_review_id);
  if (!idx) throw DataError("review " + rec.revealed_review_id + " not in " + rec.hotel_id);
  const auto sg = sg_features(history.first(i), state.horizon(), hotel, *idx);
  if (mode_ == FeatureMode::NumericalOnly) return trial_vector(sg, HcFeatures{}, mode_);
  return trial_vector(sg, catalog_->hc(rec.hotel_id, *idx), mode_);
}

FeatureVector FeatureEncoder::current_step(const GameState& state, const Hotel& hotel,
                                           std::size_t review_index) const {
  const auto sg = sg_features(state.completed(), state.horizon(), hotel, review_index);
  if (mode_ == FeatureMode::NumericalOnly) return trial_vector(sg, HcFeatures{}, mode_);
  return trial_vector(sg, catalog_->hc_for(hotel, review_index), mode_);
}

std::vector<FeatureVector> FeatureEncoder::sequence(const GameState& state, const Hotel& hotel,
                                                    std::size_t review_index) const {
  std::vector<FeatureVector> seq;
  const auto n = state.completed().size();
  seq.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) seq.push_back(history_step(state, i));
  seq.push_back(current_step(state, hotel, review_index));
  return seq;
}

}  // namespace persuasion
