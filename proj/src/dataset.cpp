#include "persuasion/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "persuasion/errors.hpp"

namespace persuasion {

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

CorpusFormat parse_corpus_format(std::string_view s) {
  if (s == "csv") return CorpusFormat::Csv;
  if (s == "jsonl" || s == "json") return CorpusFormat::Jsonl;
  throw ConfigError("unknown corpus format '" + std::string(s) + "'");
}

CorpusFormat corpus_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return CorpusFormat::Csv;
  if (ext == ".jsonl" || ext == ".json") return CorpusFormat::Jsonl;
  throw ConfigError("cannot infer corpus format from " + path.string());
}

const Hotel* Corpus::find(std::string_view id) const {
  for (const auto& h : hotels) {
    if (h.id() == id) return &h;
  }
  return nullptr;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::pair<long, std::string>> split_lines(std::string_view text) {
  std::vector<std::pair<long, std::string>> lines;
  long no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++no;
    if (!line.empty()) lines.emplace_back(no, std::move(line));
    pos = end + 1;
  }
  return lines;
}

// Lowercase and drop everything but letters and digits: "Hotel ID" == "hotel_id" == "hotelId".
std::string normalize_key(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c >= 'A' && c <= 'Z') out.push_back(static_cast<char>(c - 'A' + 'a'));
    else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) out.push_back(c);
  }
  return out;
}

// Canonical column -> accepted spellings (normalized), including the released dataset's.
const std::map<std::string, std::vector<std::string>>& corpus_aliases() {
  static const std::map<std::string, std::vector<std::string>> a = {
      {"hotel_id", {"hotelid", "hotel", "hotelname"}},
      {"review_id", {"reviewid", "review", "reviewnum"}},
      {"score", {"score", "reviewscore", "rating"}},
      {"positive_text", {"positivetext", "positive", "positivereview", "pos"}},
      {"negative_text", {"negativetext", "negative", "negativereview", "neg"}},
  };
  return a;
}

const std::map<std::string, std::vector<std::string>>& log_aliases() {
  static const std::map<std::string, std::vector<std::string>> a = {
      {"game_id", {"gameid", "game", "pairid"}},
      {"expert_id", {"expertid", "expert", "expertname"}},
      {"dm_id", {"dmid", "dm", "userid", "decisionmakerid"}},
      {"trial", {"trial", "trialindex", "roundnum", "round"}},
      {"hotel_id", {"hotelid", "hotel"}},
      {"revealed_review_id", {"revealedreviewid", "reviewid", "review"}},
      {"decision", {"decision", "didgo", "accepted"}},
      {"lottery_result", {"lotteryresult", "lottery", "score"}},
      {"dm_payoff", {"dmpayoff", "dmpoints"}},
      {"expert_payoff", {"expertpayoff", "botpoints"}},
  };
  return a;
}

double parse_score(const std::string& s, long line) {
  double v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && e[-1] == ' ') --e;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw DataError("score '" + s + "' is not a number", line);
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void check_review(const Review& r, bool synthetic, long line) {
  if (r.id.empty()) throw DataError("empty review id", line);
  if (!std::isfinite(r.score) || r.score < kMinScore || r.score > kMaxScore) {
    throw DataError("review " + r.id + ": score " + format_double(r.score) + " outside [0,10]", line);
  }
  if (!synthetic && char_count(r.positive_text) + char_count(r.negative_text) < kMinReviewChars) {
    throw DataError("review " + r.id + ": text shorter than 100 characters", line);
  }
}

Hotel make_hotel_checked(std::string id, std::vector<Review> reviews, long line) {
  std::unordered_set<std::string> seen;
  for (const auto& r : reviews) {
    if (!seen.insert(r.id).second) throw DataError("hotel " + id + ": duplicate review id " + r.id, line);
  }
  if (reviews.size() != kReviewsPerHotel) {
    throw DataError("hotel " + id + " has " + std::to_string(reviews.size()) + " reviews, expected 7",
                    line);
  }
  return Hotel(std::move(id), std::move(reviews));
}

void parse_header_fields(std::string_view rest, Corpus& c, long line) {
  std::istringstream ss{std::string(rest)};
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const auto key = tok.substr(0, eq);
    auto val = tok.substr(eq + 1);
    if (key == "provenance") {
      // Provenance runs to the end of the line.
      std::string tail;
      std::getline(ss, tail);
      c.provenance = val + tail;
      break;
    }
    if (key == "split") c.split = parse_split(val);
    else if (key == "synthetic_text") c.synthetic_text = val == "1" || val == "true";
    else throw DataError("unknown corpus header field '" + key + "'", line);
  }
}

Corpus load_csv(std::string_view text) {
  Corpus c;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  long line_offset = 0;
  if (text.substr(0, 1) == "#") {
    const auto end = text.find('\n');
    std::string first(text.substr(0, end));
    if (!first.empty() && first.back() == '\r') first.pop_back();
    const std::string magic = "#persuasion-corpus v";
    if (first.rfind(magic, 0) != 0) throw DataError("unrecognized corpus header", 1);
    const auto rest = first.substr(magic.size());
    const auto sp = rest.find(' ');
    if (rest.substr(0, sp) != "1") throw DataError("unsupported corpus version " + rest.substr(0, sp), 1);
    if (sp != std::string::npos) parse_header_fields(std::string_view(rest).substr(sp + 1), c, 1);
    text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
    line_offset = 1;
  }
  auto records = parse_csv(text);
  if (records.empty()) throw DataError("corpus has no column header");
  for (auto& r : records) r.line += line_offset;

  std::map<std::string, std::size_t> col;
  const auto& header = records.front();
  for (const auto& [canonical, names] : corpus_aliases()) {
    for (std::size_t i = 0; i < header.fields.size(); ++i) {
      const auto k = normalize_key(header.fields[i]);
      if (std::find(names.begin(), names.end(), k) != names.end() || k == normalize_key(canonical)) {
        col.emplace(canonical, i);
        break;
      }
    }
    if (!col.count(canonical)) throw DataError("missing column " + canonical, header.line);
  }

  std::unordered_set<std::string> done;
  std::string current;
  std::vector<Review> reviews;
  long hotel_line = 0;
  auto flush = [&](long line) {
    if (current.empty()) return;
    c.hotels.push_back(make_hotel_checked(current, std::move(reviews), line));
    done.insert(current);
    reviews.clear();
  };
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.fields.size() == 1 && rec.fields[0].empty()) continue;
    if (rec.fields.size() != header.fields.size()) {
      throw DataError("expected " + std::to_string(header.fields.size()) + " fields, got " +
                          std::to_string(rec.fields.size()),
                      rec.line);
    }
    const auto& hid = rec.fields[col["hotel_id"]];
    if (hid.empty()) throw DataError("empty hotel id", rec.line);
    if (hid != current) {
      flush(hotel_line);
      if (done.count(hid)) throw DataError("duplicate hotel id " + hid, rec.line);
      current = hid;
      hotel_line = rec.line;
    }
    Review r{rec.fields[col["review_id"]], parse_score(rec.fields[col["score"]], rec.line),
             rec.fields[col["positive_text"]], rec.fields[col["negative_text"]]};
    check_review(r, c.synthetic_text, rec.line);
    reviews.push_back(std::move(r));
  }
  flush(hotel_line);
  return c;
}

Corpus load_jsonl(std::string_view text) {
  Corpus c;
  std::unordered_set<std::string> seen;
  bool header = false;
  for (const auto& [no, line] : split_lines(text)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed JSON: ") + e.what(), no);
    }
    try {
      if (!header) {
        header = true;
        if (j.contains("format")) {
          if (j.at("format") != "persuasion-corpus") throw DataError("not a corpus file", no);
          if (j.at("version").get<int>() != 1) throw DataError("unsupported corpus version", no);
          c.split = parse_split(j.value("split", "train"));
          c.provenance = j.value("provenance", "");
          c.synthetic_text = j.value("synthetic_text", false);
          continue;
        }
      }
      const auto id = j.at("hotel_id").get<std::string>();
      if (!seen.insert(id).second) throw DataError("duplicate hotel id " + id, no);
      std::vector<Review> reviews;
      for (const auto& r : j.at("reviews")) {
        Review rv{r.at("review_id").get<std::string>(), r.at("score").get<double>(),
                  r.value("positive_text", ""), r.value("negative_text", "")};
        check_review(rv, c.synthetic_text, no);
        reviews.push_back(std::move(rv));
      }
      c.hotels.push_back(make_hotel_checked(id, std::move(reviews), no));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("bad corpus record: ") + e.what(), no);
    }
  }
  return c;
}

}  // namespace

std::vector<CsvRecord> parse_csv(std::string_view text) {
  std::vector<CsvRecord> out;
  CsvRecord rec;
  std::string field;
  long line = 1;
  rec.line = 1;
  bool in_quotes = false, quoted = false, any = false;
  auto end_field = [&] {
    rec.fields.push_back(std::move(field));
    field.clear();
    quoted = false;
  };
  auto end_record = [&] {
    end_field();
    out.push_back(std::move(rec));
    rec = CsvRecord{};
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (!any) {
      rec.line = line;
      any = true;
    }
    if (ch == '"') {
      if (!field.empty() || quoted) throw DataError("stray quote inside unquoted field", line);
      in_quotes = quoted = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\r' || ch == '\n') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
      ++line;
    } else {
      if (quoted) throw DataError("text after closing quote", line);
      field.push_back(ch);
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field", rec.line);
  if (any) end_record();
  return out;
}

std::string csv_escape(std::string_view f) {
  const bool needs = f.find_first_of(",\"\r\n") != std::string_view::npos ||
                     (!f.empty() && (f.front() == ' ' || f.back() == ' '));
  if (!needs) return std::string(f);
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  const auto text = read_file(path);
  try {
    return format == CorpusFormat::Csv ? load_csv(text) : load_jsonl(text);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Corpus load_corpus(const std::filesystem::path& path) {
  return load_corpus(path, corpus_format_for(path));
}

void save_corpus(const Corpus& c, const std::filesystem::path& path, CorpusFormat format) {
  std::string out;
  if (format == CorpusFormat::Csv) {
    out += "#persuasion-corpus v1 split=" + std::string(to_string(c.split)) +
           " synthetic_text=" + (c.synthetic_text ? "1" : "0");
    if (!c.provenance.empty()) out += " provenance=" + c.provenance;
    out += "\nhotel_id,review_id,score,positive_text,negative_text\n";
    for (const auto& h : c.hotels) {
      for (const auto& r : h.reviews()) {
        out += csv_escape(h.id()) + ',' + csv_escape(r.id) + ',' + format_double(r.score) + ',' +
               csv_escape(r.positive_text) + ',' + csv_escape(r.negative_text) + '\n';
      }
    }
  } else {
    nlohmann::json header = {{"format", "persuasion-corpus"},
                             {"version", 1},
                             {"split", std::string(to_string(c.split))},
                             {"provenance", c.provenance},
                             {"synthetic_text", c.synthetic_text}};
    out += header.dump() + '\n';
    for (const auto& h : c.hotels) {
      nlohmann::json reviews = nlohmann::json::array();
      for (const auto& r : h.reviews()) {
        reviews.push_back({{"review_id", r.id},
                           {"score", r.score},
                           {"positive_text", r.positive_text},
                           {"negative_text", r.negative_text}});
      }
      out += nlohmann::json{{"hotel_id", h.id()}, {"reviews", reviews}}.dump() + '\n';
    }
  }
  write_file(path, out);
}

void check_disjoint(const Corpus& train, const Corpus& test) {
  std::unordered_set<std::string> ids;
  for (const auto& h : train.hotels) ids.insert(h.id());
  for (const auto& h : test.hotels) {
    if (ids.count(h.id())) throw DataError("hotel " + h.id() + " appears in both train and test");
  }
}

// ---------------------------------------------------------------------------------------------
// Game logs

std::vector<std::string> GameLog::hotel_sequence() const {
  std::vector<std::string> seq;
  for (const auto& t : trials) seq.push_back(t.hotel_id);
  return seq;
}

int GameLog::expert_total() const {
  int s = 0;
  for (const auto& t : trials) s += t.expert_payoff;
  return s;
}

double GameLog::dm_total() const {
  double s = 0;
  for (const auto& t : trials) s += t.dm_payoff;
  return s;
}

std::optional<std::string> validate_log(const GameLog& log, const HotelCatalog& catalog) {
  if (log.trials.size() != static_cast<std::size_t>(kTrialsPerGame)) {
    return "game " + log.game_id + " has " + std::to_string(log.trials.size()) + " trials";
  }
  for (std::size_t i = 0; i < log.trials.size(); ++i) {
    const auto& t = log.trials[i];
    const Hotel* h = catalog.find(t.hotel_id);
    if (!h) return "game " + log.game_id + ": unknown hotel " + t.hotel_id;
    if (auto err = check_record(t, *h)) return "game " + log.game_id + " trial " + std::to_string(i + 1) + ": " + *err;
  }
  try {
    replay(log.trials, log.hotel_sequence());
  } catch (const ContractViolation& e) {
    return "game " + log.game_id + ": " + e.what();
  }
  return std::nullopt;
}

namespace {

const nlohmann::json* field(const nlohmann::json& j, const std::string& canonical) {
  const auto& names = log_aliases().at(canonical);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto k = normalize_key(it.key());
    if (k == normalize_key(canonical) || std::find(names.begin(), names.end(), k) != names.end()) {
      return &*it;
    }
  }
  return nullptr;
}

std::string as_id(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

Decision as_decision(const nlohmann::json& v) {
  if (v.is_boolean()) return v.get<bool>() ? Decision::Accept : Decision::Reject;
  if (v.is_number()) return v.get<double>() != 0 ? Decision::Accept : Decision::Reject;
  const auto s = normalize_key(v.get<std::string>());
  if (s == "true" || s == "1") return Decision::Accept;
  if (s == "false" || s == "0") return Decision::Reject;
  return parse_decision(s);
}

}  // namespace

LoadedLogs parse_game_logs(std::string_view text, const HotelCatalog& catalog) {
  LoadedLogs out;
  std::vector<GameLog> games;
  std::unordered_map<std::string, std::size_t> index;
  std::unordered_set<std::string> broken;
  bool first = true;
  for (const auto& [no, line] : split_lines(text)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed JSON: ") + e.what(), no);
    }
    if (first) {
      first = false;
      if (j.contains("format")) {
        if (j.at("format") != "persuasion-gamelog") throw DataError("not a game log file", no);
        if (j.value("version", 0) != 1) throw DataError("unsupported game log version", no);
        continue;
      }
    }
    const auto* gid = field(j, "game_id");
    if (!gid) throw DataError("trial line without game id", no);
    const auto game_id = as_id(*gid);
    auto [it, fresh] = index.emplace(game_id, games.size());
    if (fresh) {
      GameLog g;
      g.game_id = game_id;
      if (const auto* e = field(j, "expert_id")) g.expert_id = as_id(*e);
      if (const auto* d = field(j, "dm_id")) g.dm_id = as_id(*d);
      games.push_back(std::move(g));
    }
    auto& g = games[it->second];
    try {
      TrialRecord t;
      const auto* trial = field(j, "trial");
      t.trial_index = trial ? trial->get<int>() : static_cast<int>(g.trials.size()) + 1;
      t.hotel_id = as_id(*field(j, "hotel_id"));
      t.revealed_review_id = as_id(*field(j, "revealed_review_id"));
      t.decision = as_decision(*field(j, "decision"));
      t.lottery_result = field(j, "lottery_result")->get<double>();
      const auto* dp = field(j, "dm_payoff");
      t.dm_payoff = dp ? dp->get<double>() : (t.accepted() ? t.lottery_result - kPayoffOffset : 0.0);
      const auto* ep = field(j, "expert_payoff");
      t.expert_payoff = ep ? ep->get<int>() : (t.accepted() ? 1 : 0);
      if (const Hotel* h = catalog.find(t.hotel_id)) t.hotel_avg_score = h->avg_score();
      g.trials.push_back(std::move(t));
    } catch (const std::exception& e) {
      // A structurally incomplete trial invalidates its game but not the file.
      broken.insert(game_id);
      out.problems.push_back("line " + std::to_string(no) + ": " + e.what());
    }
  }
  for (auto& g : games) {
    if (broken.count(g.game_id)) {
      ++out.skipped;
      continue;
    }
    if (auto err = validate_log(g, catalog)) {
      ++out.skipped;
      out.problems.push_back(*err);
      continue;
    }
    out.logs.push_back(std::move(g));
  }
  return out;
}

LoadedLogs load_game_logs(const std::filesystem::path& path, const HotelCatalog& catalog) {
  try {
    return parse_game_logs(read_file(path), catalog);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_game_logs(std::span<const GameLog> logs) {
  std::string out = nlohmann::json{{"format", "persuasion-gamelog"}, {"version", 1}}.dump() + '\n';
  for (const auto& g : logs) {
    for (const auto& t : g.trials) {
      nlohmann::json j = {{"game_id", g.game_id},
                          {"expert_id", g.expert_id},
                          {"dm_id", g.dm_id},
                          {"trial", t.trial_index},
                          {"hotel_id", t.hotel_id},
                          {"revealed_review_id", t.revealed_review_id},
                          {"decision", std::string(to_string(t.decision))},
                          {"lottery_result", t.lottery_result},
                          {"dm_payoff", t.dm_payoff},
                          {"expert_payoff", t.expert_payoff}};
      out += j.dump() + '\n';
    }
  }
  return out;
}

void save_game_logs(std::span<const GameLog> logs, const std::filesystem::path& path) {
  write_file(path, format_game_logs(logs));
}

// ---------------------------------------------------------------------------------------------
// Synthetic data

std::string Archetype::name() const {
  switch (kind) {
    case Kind::Threshold: return "threshold:" + format_double(threshold);
    case Kind::Trusting: return "trusting";
    case Kind::Spiteful: return "spiteful";
    case Kind::HumanLike: return "human";
  }
  return "human";
}

Archetype Archetype::parse(std::string_view s) {
  Archetype a;
  if (s == "trusting") a.kind = Kind::Trusting;
  else if (s == "spiteful") a.kind = Kind::Spiteful;
  else if (s == "human") a.kind = Kind::HumanLike;
  else if (s.rfind("threshold", 0) == 0) {
    a.kind = Kind::Threshold;
    if (s.size() > 9) {
      if (s[9] != ':') throw ConfigError("bad archetype '" + std::string(s) + "'");
      a.threshold = parse_score(std::string(s.substr(10)), 0);
    }
  } else {
    throw ConfigError("unknown archetype '" + std::string(s) + "'");
  }
  return a;
}

double archetype_accept_probability(const Archetype& a, const GameState& state,
                                    const Hotel& hotel, std::size_t review_index) {
  const double s = hotel.review(review_index).score;
  const auto hist = state.completed();
  const TrialRecord* last = hist.empty() ? nullptr : &hist.back();
  const bool lost_last = last && last->accepted() && last->dm_payoff < 0;
  switch (a.kind) {
    case Archetype::Kind::Threshold:
      return s >= a.threshold ? 1.0 : 0.0;
    case Archetype::Kind::Trusting:
      return s >= 8.0 ? 0.95 : 0.75;
    case Archetype::Kind::Spiteful:
      if (lost_last) return 0.05;
      return s >= 7.5 ? 0.9 : 0.2;
    case Archetype::Kind::HumanLike: {
      double p = sigmoid(1.6 * (s - 7.6));
      // Long complaints put people off regardless of the score.
      if (char_count(hotel.review(review_index).negative_text) >= 150) p -= 0.15;
      if (lost_last) p *= 0.3;
      // Regret after passing on a lottery that would have paid.
      if (last && !last->accepted() && last->counterfactual_dm_payoff() > 0) p += 0.5 * (1 - p);
      if (!hist.empty()) {
        double mean = 0;
        for (const auto& r : hist) mean += r.dm_payoff;
        mean /= static_cast<double>(hist.size());
        if (mean < -1.0) p *= 0.7;
      }
      return std::clamp(p, 0.02, 0.98);
    }
  }
  return 0.0;
}

namespace {

double normal(Rng& rng) {
  // Box-Muller on our own uniforms keeps output identical across standard libraries.
  const double u1 = 1.0 - uniform01(rng), u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[uniform_index(rng, v.size())];
}

const std::vector<std::string> kHighPos{"amazing", "excellent", "perfect", "fantastic", "wonderful", "superb"};
const std::vector<std::string> kHighNeg{"awful", "terrible", "horrible", "disgusting", "filthy"};
const std::vector<std::string> kMedPos{"good", "great", "nice", "lovely", "comfortable", "clean"};
const std::vector<std::string> kMedNeg{"bad", "dirty", "noisy", "poor", "disappointing"};
const std::vector<std::string> kLow{"ok", "fine", "decent", "average", "basic"};
const std::vector<std::string> kFiller{
    "We stayed for two nights with family.", "It was our second visit to the city.",
    "We arrived late in the evening after a long day.", "Our trip was for a weekend."};

std::string sentence(const std::vector<Topic>& topics, const std::vector<std::string>& adjectives,
                     Rng& rng, bool exclaim) {
  const auto& topic = pick(topics, rng);
  std::string word = pick(topic.words, rng);
  std::string s = "The " + word + " was " + pick(adjectives, rng);
  s += exclaim ? "!" : ".";
  return s;
}

std::string paragraph(const std::vector<Topic>& topics, const std::vector<std::string>& adjectives,
                      int n, Rng& rng, bool exclaim) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += sentence(topics, adjectives, rng, exclaim && i == 0);
  }
  return out;
}

}  // namespace

Review synthetic_review(const std::string& id, double score, Rng& rng,
                        const FeatureManifest& manifest) {
  const auto& topics = manifest.topics;
  if (topics.empty()) throw ConfigError("manifest has no topics to template reviews from");
  // Occasionally write the text of a neighbouring band so text and score are not collinear.
  int band = score >= 9.0 ? 3 : score >= 7.5 ? 2 : score >= 5.0 ? 1 : 0;
  if (uniform01(rng) < 0.15) band = std::clamp(band + (bernoulli(rng, 0.5) ? 1 : -1), 0, 3);
  Review r;
  r.id = id;
  r.score = score;
  switch (band) {
    case 3:
      r.positive_text = paragraph(topics, kHighPos, 2 + static_cast<int>(uniform_index(rng, 2)), rng, bernoulli(rng, 0.5));
      r.negative_text = bernoulli(rng, 0.5) ? "Nothing at all." : "";
      break;
    case 2:
      r.positive_text = paragraph(topics, kMedPos, 2, rng, false);
      r.negative_text = paragraph(topics, kLow, 1, rng, false);
      break;
    case 1:
      r.positive_text = paragraph(topics, kLow, 1, rng, false);
      r.negative_text = paragraph(topics, kMedNeg, 2 + static_cast<int>(uniform_index(rng, 2)), rng, false);
      break;
    default:
      r.positive_text = bernoulli(rng, 0.5) ? "" : paragraph(topics, kLow, 1, rng, false);
      r.negative_text = paragraph(topics, kHighNeg, 3 + static_cast<int>(uniform_index(rng, 2)), rng, true);
      break;
  }
  while (char_count(r.positive_text) + char_count(r.negative_text) < kMinReviewChars) {
    r.positive_text += (r.positive_text.empty() ? "" : " ") + pick(kFiller, rng);
  }
  return r;
}

SyntheticData generate_synthetic(std::uint64_t seed, std::size_t n_hotels, std::size_t n_games,
                                 const Archetype& archetype, const FeatureManifest& manifest,
                                 std::string_view id_prefix) {
  if (n_hotels == 0) throw ConfigError("need at least one hotel");
  SyntheticData out;
  out.corpus.synthetic_text = true;
  out.corpus.provenance = "synthetic seed=" + std::to_string(seed) + " dm=" + archetype.name();
  Rng rng(derive_seed(seed, 1));
  for (std::size_t i = 0; i < n_hotels; ++i) {
    char num[32];
    std::snprintf(num, sizeof num, "-%04zu", i + 1);
    const std::string id = std::string(id_prefix) + num;
    double centre = 0;
    switch (i % 3) {
      case 0: centre = 5.0 + 2.2 * uniform01(rng); break;
      case 1: centre = 7.5 + 0.9 * uniform01(rng); break;
      default: centre = 8.6 + 1.0 * uniform01(rng); break;
    }
    std::vector<Review> reviews;
    for (std::size_t k = 0; k < kReviewsPerHotel; ++k) {
      double s = centre + 1.2 * normal(rng);
      s = std::round(std::clamp(s, kMinScore, kMaxScore) * 10.0) / 10.0;
      reviews.push_back(synthetic_review(id + "-r" + std::to_string(k + 1), s, rng, manifest));
    }
    out.corpus.hotels.emplace_back(id, std::move(reviews));
  }

  static const char* kPolicies[] = {"random", "highest", "median", "mixed"};
  for (std::size_t g = 0; g < n_games; ++g) {
    Rng r(derive_seed(seed, 1000 + g));
    std::vector<std::size_t> pool(n_hotels);
    for (std::size_t i = 0; i < n_hotels; ++i) pool[i] = i;
    std::vector<std::size_t> chosen;
    for (int t = 0; t < kTrialsPerGame; ++t) {
      if (pool.size() >= static_cast<std::size_t>(kTrialsPerGame)) {
        const auto k = t + uniform_index(r, pool.size() - static_cast<std::size_t>(t));
        std::swap(pool[static_cast<std::size_t>(t)], pool[k]);
        chosen.push_back(pool[static_cast<std::size_t>(t)]);
      } else {
        chosen.push_back(uniform_index(r, n_hotels));
      }
    }
    std::vector<std::string> seq;
    for (auto c : chosen) seq.push_back(out.corpus.hotels[c].id());
    const std::string policy = kPolicies[uniform_index(r, 4)];
    GameLog log;
    char gid[48];
    std::snprintf(gid, sizeof gid, "g%llu-%05zu", static_cast<unsigned long long>(seed), g + 1);
    log.game_id = gid;
    log.expert_id = "script-" + policy;
    log.dm_id = archetype.name() + "-" + std::to_string(g + 1);
    GameState state(seq);
    for (int t = 0; t < kTrialsPerGame; ++t) {
      const Hotel& h = out.corpus.hotels[chosen[static_cast<std::size_t>(t)]];
      std::vector<std::size_t> order(h.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return h.review(a).score > h.review(b).score; });
      std::size_t idx = 0;
      if (policy == "random" || (policy == "mixed" && bernoulli(r, 0.5))) idx = uniform_index(r, h.size());
      else if (policy == "median") idx = order[h.size() / 2];
      else idx = order.front();
      const double p = archetype_accept_probability(archetype, state, h, idx);
      const auto d = bernoulli(r, p) ? Decision::Accept : Decision::Reject;
      auto rec = resolve_trial(h, idx, d, r, t + 1);
      state.append(rec);
      log.trials.push_back(std::move(rec));
    }
    out.logs.push_back(std::move(log));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

std::vector<TrainingSequence> build_training_sequences(std::span<const GameLog> logs,
                                                       const FeatureEncoder& encoder) {
  std::vector<TrainingSequence> out;
  out.reserve(logs.size());
  for (const auto& log : logs) {
    const auto state = replay(log.trials, log.hotel_sequence(), static_cast<int>(log.trials.size()));
    TrainingSequence s;
    const auto n = log.trials.size();
    s.vm_targets.assign(n, 0.0);
    double suffix = 0;
    for (std::size_t i = n; i-- > 0;) {
      suffix += log.trials[i].accepted() ? 1.0 : 0.0;
      s.vm_targets[i] = suffix;
    }
    for (std::size_t i = 0; i < n; ++i) {
      s.inputs.push_back(encoder.history_step(state, i));
      s.dmm_targets.push_back(log.trials[i].accepted() ? 1.0 : 0.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> dmm_samples(std::span<const TrainingSequence> seqs) {
  std::vector<Sample> out;
  for (const auto& s : seqs) out.push_back({s.inputs, s.dmm_targets});
  return out;
}

std::vector<Sample> vm_samples(std::span<const TrainingSequence> seqs) {
  std::vector<Sample> out;
  for (const auto& s : seqs) out.push_back({s.inputs, s.vm_targets});
  return out;
}

}  // namespace persuasion
