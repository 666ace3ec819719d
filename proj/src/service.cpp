#include "persuasion/service.hpp"

#include <httplib.h>

#include <numeric>
#include <random>
#include <sstream>

#include "persuasion/errors.hpp"

namespace persuasion {

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::AwaitingDecision: return "awaiting_decision";
    case SessionStatus::RevealingOutcome: return "revealing_outcome";
    case SessionStatus::Finished: return "finished";
  }
  return "?";
}

namespace {

std::string random_token() {
  std::random_device rd;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (int i = 0; i < 4; ++i) {
    std::uint32_t x = rd();
    for (int k = 0; k < 8; ++k) {
      out += kHex[x & 0xf];
      x >>= 4;
    }
  }
  return out;
}

std::int64_t epoch_ms(std::chrono::system_clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

std::chrono::system_clock::time_point from_epoch_ms(std::int64_t ms) {
  return std::chrono::system_clock::time_point(std::chrono::milliseconds(ms));
}

// Seed streams of one session.
constexpr std::uint64_t kOrderStream = 0;
constexpr std::uint64_t kPartStream = 1;
constexpr std::uint64_t kExpertStream = 100;
constexpr std::uint64_t kLotteryStream = 200;

}  // namespace

SessionManager::SessionManager(ServiceConfig config, std::shared_ptr<const ModelRegistry> models,
                               std::shared_ptr<const std::vector<Hotel>> hotels, Clock clock)
    : config_(std::move(config)), models_(std::move(models)), hotels_(std::move(hotels)),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::system_clock::now(); })),
      workers_(std::max<std::ptrdiff_t>(1, config_.search_workers)) {
  if (!models_) throw ConfigError("service needs a model registry");
  if (!hotels_ || hotels_->size() < static_cast<std::size_t>(kTrialsPerGame)) {
    throw ConfigError("service needs a corpus with at least 10 hotels");
  }
  for (const auto& h : *hotels_) by_id_[h.id()] = &h;
  if (!config_.store.empty()) {
    replay_store();
    store_.open(config_.store, std::ios::app);
    if (!store_) throw ConfigError("cannot open session store " + config_.store.string());
  }
}

std::shared_ptr<const Expert> SessionManager::expert(const std::string& name) const {
  std::lock_guard lock(mu_);
  if (auto it = experts_.find(name); it != experts_.end()) return it->second;
  std::shared_ptr<const Expert> e;
  try {
    e = make_expert(name, *models_, hotels_, config_.experts);
  } catch (const ConfigError& err) {
    throw ServiceError(404, "unknown_expert", err.what());
  }
  experts_[name] = e;
  return e;
}

nlohmann::json SessionManager::experts() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& n : expert_names(config_.experts)) {
    try {
      expert(n);
      out.push_back(n);
    } catch (const ServiceError&) {
      // Not available with the loaded models.
    }
  }
  return out;
}

const Hotel& SessionManager::hotel(const Session& s, int trial) const {
  return *by_id_.at(s.hotel_ids[static_cast<std::size_t>(trial - 1)]);
}

void SessionManager::append_event(const nlohmann::json& event) {
  if (!store_.is_open()) return;
  std::lock_guard lock(store_mu_);
  store_ << event.dump() << '\n';
  store_.flush();
}

void SessionManager::choose_next(Session& s) {
  const int t = s.state.current_trial();
  const Hotel& h = hotel(s, t);
  Rng rng(derive_seed(s.seed, kExpertStream + static_cast<std::uint64_t>(t)));
  std::size_t idx;
  {
    const auto e = expert(s.expert);
    workers_.acquire();
    try {
      idx = e->choose_review(s.state, h, rng);
    } catch (...) {
      workers_.release();
      throw;
    }
    workers_.release();
  }
  if (idx >= h.size()) throw ContractViolation("expert chose a review outside the hotel");
  s.revealed.push_back(idx);
  s.status = SessionStatus::AwaitingDecision;
  append_event({{"event", "review"}, {"session", s.id}, {"trial", t}, {"review_index", idx}});
}

void SessionManager::resolve(Session& s, Decision d, std::optional<double> lottery) {
  const int t = s.state.current_trial();
  const Hotel& h = hotel(s, t);
  const std::size_t idx = s.revealed[static_cast<std::size_t>(t - 1)];
  TrialRecord rec;
  if (lottery) {
    rec = make_record(h, idx, d, *lottery, t);
  } else {
    Rng rng(derive_seed(s.seed, kLotteryStream + static_cast<std::uint64_t>(t)));
    rec = resolve_trial(h, idx, d, rng, t);
  }
  s.state.append(rec);
  s.status = s.state.terminal() ? SessionStatus::Finished : SessionStatus::RevealingOutcome;
}

nlohmann::json SessionManager::review_view(const Session& s, int trial) const {
  const auto i = static_cast<std::size_t>(trial - 1);
  const Review& r = hotel(s, trial).review(s.revealed[i]);
  return {{"trial", trial},
          {"positive_text", r.positive_text},
          {"negative_text", r.negative_text},
          {"positive_first", static_cast<bool>(s.positive_first[i])}};
}

nlohmann::json SessionManager::outcome_view(const Session& s, int trial) const {
  const auto recs = s.state.completed();
  const TrialRecord& rec = recs[static_cast<std::size_t>(trial - 1)];
  int expert_total = 0;
  double dm_total = 0;
  for (int i = 0; i < trial; ++i) {
    expert_total += recs[static_cast<std::size_t>(i)].expert_payoff;
    dm_total += recs[static_cast<std::size_t>(i)].dm_payoff;
  }
  nlohmann::json out = {{"trial", trial},
                        {"decision", std::string(to_string(rec.decision))},
                        {"dm_payoff", rec.dm_payoff},
                        {"expert_payoff", rec.expert_payoff},
                        {"cumulative", {{"expert_payoff", expert_total}, {"dm_payoff", dm_total}}}};
  if (rec.decision == Decision::Accept || config_.show_lottery_on_reject) {
    out["lottery_result"] = rec.lottery_result;
  }
  const bool last = trial == kTrialsPerGame;
  out["status"] = std::string(to_string(last ? SessionStatus::Finished : SessionStatus::AwaitingDecision));
  const bool chosen = s.revealed.size() > static_cast<std::size_t>(trial);
  out["next"] = last || !chosen ? nlohmann::json(nullptr) : review_view(s, trial + 1);
  return out;
}

nlohmann::json SessionManager::visible(const Session& s) const {
  nlohmann::json history = nlohmann::json::array();
  const int done = static_cast<int>(s.state.completed().size());
  for (int t = 1; t <= done; ++t) {
    nlohmann::json row = outcome_view(s, t);
    row.erase("next");
    row.erase("status");
    row["review"] = review_view(s, t);
    history.push_back(std::move(row));
  }
  nlohmann::json out = {{"session_id", s.id},
                        {"expert", s.expert},
                        {"status", std::string(to_string(s.status))},
                        {"trials", kTrialsPerGame},
                        {"trial", std::min(s.state.current_trial(), kTrialsPerGame)},
                        {"history", history},
                        {"expert_payoff", s.state.accepted_count()},
                        {"dm_payoff", done ? outcome_view(s, done)["cumulative"]["dm_payoff"] : nlohmann::json(0.0)},
                        {"lottery_shown_on_reject", config_.show_lottery_on_reject},
                        {"ttl_seconds", config_.ttl.count()}};
  if (s.status == SessionStatus::AwaitingDecision) out["review"] = review_view(s, s.state.current_trial());
  return out;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "not_found", "no session " + id);
  return it->second;
}

void SessionManager::touch(Session& s) {
  const auto now = clock_();
  if (now - s.last_active > config_.ttl) {
    throw ServiceError(410, "session_expired", "session " + s.id + " expired after inactivity");
  }
  s.last_active = now;
}

nlohmann::json SessionManager::create(const std::optional<std::string>& expert_name,
                                      std::optional<std::uint64_t> seed) {
  auto s = std::make_shared<Session>();
  s->expert = expert_name.value_or(config_.default_expert);
  expert(s->expert);
  s->seed = seed ? *seed : (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
  s->id = random_token();
  s->created = s->last_active = clock_();

  Rng order(derive_seed(s->seed, kOrderStream));
  std::vector<std::size_t> idx(hotels_->size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(kTrialsPerGame); ++i) {
    std::swap(idx[i], idx[i + uniform_index(order, idx.size() - i)]);
    s->hotel_ids.push_back((*hotels_)[idx[i]].id());
  }
  Rng parts(derive_seed(s->seed, kPartStream));
  for (int t = 0; t < kTrialsPerGame; ++t) s->positive_first.push_back(bernoulli(parts, 0.5));
  s->state = GameState(s->hotel_ids);

  std::lock_guard lock(s->mu);
  append_event({{"event", "create"},
                {"session", s->id},
                {"expert", s->expert},
                {"seed", s->seed},
                {"hotels", s->hotel_ids},
                {"created_ms", epoch_ms(s->created)}});
  choose_next(*s);
  {
    std::lock_guard g(mu_);
    sessions_[s->id] = s;
  }
  return visible(*s);
}

nlohmann::json SessionManager::get(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  touch(*s);
  return visible(*s);
}

nlohmann::json SessionManager::decide(const std::string& id, int trial, Decision decision) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  touch(*s);
  if (trial < 1 || trial > kTrialsPerGame) {
    throw ServiceError(400, "bad_request", "trial must be between 1 and 10");
  }
  if (static_cast<std::size_t>(trial) <= s->outcomes.size()) {
    const auto& stored = s->outcomes[static_cast<std::size_t>(trial - 1)];
    if (stored.at("decision") != std::string(to_string(decision))) {
      throw ServiceError(409, "conflict", "trial " + std::to_string(trial) + " was already decided");
    }
    return stored;
  }
  if (s->status != SessionStatus::AwaitingDecision || trial != s->state.current_trial()) {
    throw ServiceError(409, "conflict", "session is not waiting for a decision on trial " + std::to_string(trial));
  }
  resolve(*s, decision, std::nullopt);
  const TrialRecord& rec = s->state.completed().back();
  append_event({{"event", "decision"},
                {"session", s->id},
                {"trial", trial},
                {"decision", std::string(to_string(decision))},
                {"lottery_result", rec.lottery_result},
                {"at_ms", epoch_ms(s->last_active)}});
  if (s->status != SessionStatus::Finished) choose_next(*s);
  s->outcomes.push_back(outcome_view(*s, trial));
  return s->outcomes.back();
}

nlohmann::json SessionManager::debrief(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  touch(*s);
  if (s->status != SessionStatus::Finished) {
    throw ServiceError(409, "not_finished", "the debrief opens after the last trial");
  }
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& rec : s->state.completed()) {
    const Hotel& h = hotel(*s, rec.trial_index);
    nlohmann::json reviews = nlohmann::json::array();
    for (const auto& r : h.reviews()) {
      reviews.push_back({{"review_id", r.id},
                         {"score", r.score},
                         {"positive_text", r.positive_text},
                         {"negative_text", r.negative_text}});
    }
    const auto idx = s->revealed[static_cast<std::size_t>(rec.trial_index - 1)];
    trials.push_back({{"trial", rec.trial_index},
                      {"hotel_id", rec.hotel_id},
                      {"hotel_avg_score", h.avg_score()},
                      {"reviews", reviews},
                      {"revealed_review_id", rec.revealed_review_id},
                      {"revealed_score", h.review(idx).score},
                      {"decision", std::string(to_string(rec.decision))},
                      {"lottery_result", rec.lottery_result},
                      {"dm_payoff", rec.dm_payoff},
                      {"expert_payoff", rec.expert_payoff}});
  }
  GameLog log{s->id, s->expert, "human", {s->state.completed().begin(), s->state.completed().end()}};
  return {{"session_id", s->id},
          {"expert", s->expert},
          {"seed", s->seed},
          {"trials", trials},
          {"expert_payoff", log.expert_total()},
          {"dm_payoff", log.dm_total()}};
}

std::vector<GameLog> SessionManager::logs(bool include_unfinished) const {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  std::vector<GameLog> out;
  for (const auto& s : all) {
    std::lock_guard lock(s->mu);
    if (s->status != SessionStatus::Finished && !include_unfinished) continue;
    out.push_back({s->id, s->expert, "human", {s->state.completed().begin(), s->state.completed().end()}});
  }
  return out;
}

std::string SessionManager::export_logs(bool include_unfinished) const {
  const auto l = logs(include_unfinished);
  std::string text = format_game_logs(l);
  const auto eol = text.find('\n');
  const nlohmann::json header = {{"format", "persuasion-gamelog"},
                                 {"version", 1},
                                 {"source", "service"},
                                 {"lottery_shown_on_reject", config_.show_lottery_on_reject}};
  return header.dump() + text.substr(eol);
}

void SessionManager::replay_store() {
  std::ifstream in(config_.store);
  if (!in) return;
  std::string line;
  long no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    nlohmann::json e;
    try {
      e = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      // A torn final line from a crash mid-write; everything before it is intact.
      continue;
    }
    const std::string kind = e.value("event", "");
    const std::string id = e.value("session", "");
    if (kind == "create") {
      auto s = std::make_shared<Session>();
      s->id = id;
      s->expert = e.at("expert").get<std::string>();
      s->seed = e.at("seed").get<std::uint64_t>();
      s->hotel_ids = e.at("hotels").get<std::vector<std::string>>();
      for (const auto& h : s->hotel_ids) {
        if (!by_id_.count(h)) throw DataError("session store refers to unknown hotel " + h, no);
      }
      Rng parts(derive_seed(s->seed, kPartStream));
      for (int t = 0; t < kTrialsPerGame; ++t) s->positive_first.push_back(bernoulli(parts, 0.5));
      s->state = GameState(s->hotel_ids);
      s->created = s->last_active = from_epoch_ms(e.at("created_ms").get<std::int64_t>());
      sessions_[id] = s;
      continue;
    }
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw DataError("session store event for unknown session", no);
    Session& s = *it->second;
    if (kind == "review") {
      s.revealed.push_back(e.at("review_index").get<std::size_t>());
      s.status = SessionStatus::AwaitingDecision;
    } else if (kind == "decision") {
      const Decision d = parse_decision(e.at("decision").get<std::string>());
      resolve(s, d, e.at("lottery_result").get<double>());
      s.last_active = from_epoch_ms(e.value("at_ms", epoch_ms(s.last_active)));
    } else {
      throw DataError("unknown session store event '" + kind + "'", no);
    }
  }
  // Outcome bodies are recomputed from the replayed state; sessions cut off between a decision
  // and the next review get their review now.
  for (auto& [id, s] : sessions_) {
    const int done = static_cast<int>(s->state.completed().size());
    if (s->status == SessionStatus::RevealingOutcome) choose_next(*s);
    for (int t = 1; t <= done; ++t) s->outcomes.push_back(outcome_view(*s, t));
  }
}

// ---------------------------------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ServiceError& e) {
      send_json(res, e.status(), e.body());
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, {{"code", "bad_request"}, {"message", e.what()}});
    } catch (const DataError& e) {
      send_json(res, 400, {{"code", "bad_request"}, {"message", e.what()}});
    } catch (const std::invalid_argument& e) {
      send_json(res, 400, {{"code", "bad_request"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
    }
  };
}

nlohmann::json body_of(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body);
  if (!j.is_object()) throw ServiceError(400, "bad_request", "request body must be a JSON object");
  return j;
}

}  // namespace

void install_routes(httplib::Server& server, SessionManager& manager) {
  server.set_default_headers({{"Access-Control-Allow-Origin", manager.config().cors_origin},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });
  server.Get("/experts", guarded([&](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"experts", manager.experts()}});
  }));
  server.Post("/sessions", guarded([&](const httplib::Request& req, httplib::Response& res) {
    const auto body = body_of(req);
    std::optional<std::string> expert;
    std::optional<std::uint64_t> seed;
    if (body.contains("expert")) expert = body.at("expert").get<std::string>();
    if (body.contains("seed")) seed = body.at("seed").get<std::uint64_t>();
    send_json(res, 201, manager.create(expert, seed));
  }));
  server.Get(R"(/sessions/([0-9a-f]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, manager.get(req.matches[1]));
  }));
  server.Post(R"(/sessions/([0-9a-f]+)/decision)",
              guarded([&](const httplib::Request& req, httplib::Response& res) {
                const auto body = body_of(req);
                if (!body.contains("trial") || !body.contains("decision")) {
                  throw ServiceError(400, "bad_request", "body needs 'trial' and 'decision'");
                }
                const Decision d = parse_decision(body.at("decision").get<std::string>());
                send_json(res, 200, manager.decide(req.matches[1], body.at("trial").get<int>(), d));
              }));
  server.Get(R"(/sessions/([0-9a-f]+)/debrief)", guarded([&](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, manager.debrief(req.matches[1]));
  }));
  server.Get("/export", guarded([&](const httplib::Request& req, httplib::Response& res) {
    const bool all = req.has_param("include_unfinished") && req.get_param_value("include_unfinished") != "false" &&
                     req.get_param_value("include_unfinished") != "0";
    res.status = 200;
    res.set_content(manager.export_logs(all), "application/x-ndjson");
  }));
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      send_json(res, res.status, {{"code", res.status == 404 ? "not_found" : "error"},
                                  {"message", "no such endpoint"}});
    }
  });
}

}  // namespace persuasion
