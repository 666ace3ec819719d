#include "persuasion/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <thread>

#include "persuasion/errors.hpp"

namespace persuasion {

Interval percentile_bootstrap(std::span<const double> xs, std::size_t resamples, double confidence,
                              Rng& rng) {
  if (xs.empty()) throw ContractViolation("bootstrap of an empty sample");
  if (resamples == 0) throw ConfigError("bootstrap needs at least one resample");
  if (!(confidence > 0 && confidence < 1)) throw ConfigError("confidence must lie in (0, 1)");
  std::vector<double> means(resamples);
  const std::size_t n = xs.size();
  for (auto& m : means) {
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += xs[uniform_index(rng, n)];
    m = sum / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  // Linear interpolation between order statistics.
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, resamples - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  const double tail = (1 - confidence) / 2;
  return {quantile(tail), quantile(1 - tail)};
}

std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ContractViolation("pearson: size mismatch");
  const std::size_t n = xs.size();
  if (n < 2) return std::nullopt;
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------------------------

nlohmann::json TournamentConfig::to_json() const {
  return {{"expert", expert},
          {"dm", dm},
          {"alpha", alpha},
          {"games", games},
          {"seed", seed},
          {"bootstrap_resamples", bootstrap_resamples},
          {"confidence", confidence},
          {"threads", threads}};
}

TournamentConfig TournamentConfig::from_json(const nlohmann::json& j) {
  TournamentConfig c;
  try {
    c.expert = j.value("expert", c.expert);
    c.dm = j.value("dm", c.dm);
    c.alpha = j.value("alpha", c.alpha);
    c.games = j.value("games", c.games);
    c.seed = j.value("seed", c.seed);
    c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
    c.confidence = j.value("confidence", c.confidence);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("tournament config: ") + e.what());
  }
  return c;
}

std::vector<GameLog> TournamentResult::logs() const {
  std::vector<GameLog> out;
  out.reserve(games.size());
  for (const auto& g : games) {
    GameLog log;
    log.game_id = "t" + std::to_string(seed) + "-" + std::to_string(g.index + 1);
    log.expert_id = expert;
    log.dm_id = dm;
    log.trials = g.trials;
    out.push_back(std::move(log));
  }
  return out;
}

nlohmann::json TournamentResult::summary() const {
  return {{"expert", expert},
          {"dm", dm},
          {"alpha", alpha},
          {"seed", seed},
          {"games", games.size()},
          {"mean_expert_payoff", mean_expert},
          {"ci_expert_payoff", {ci_expert.lo, ci_expert.hi}},
          {"mean_dm_payoff", mean_dm},
          {"ci_dm_payoff", {ci_dm.lo, ci_dm.hi}}};
}

void TournamentResult::write_csv_header(std::ostream& out) {
  out << "expert,dm,alpha,game,expert_payoff,dm_payoff,revealed_reviews\n";
}

void TournamentResult::write_csv_rows(std::ostream& out) const {
  for (const auto& g : games) {
    std::string revealed;
    for (const auto& t : g.trials) {
      if (!revealed.empty()) revealed += ';';
      revealed += t.revealed_review_id;
    }
    out << csv_escape(expert) << ',' << csv_escape(dm) << ',' << alpha << ',' << g.index + 1 << ','
        << g.expert_payoff << ',' << g.dm_payoff << ',' << csv_escape(revealed) << '\n';
  }
}

namespace {

GameOutcome play_game(const Expert& expert, const SimulatedDm& dm, std::span<const Hotel> hotels,
                      std::uint64_t seed, std::size_t index) {
  const std::uint64_t game_seed = derive_seed(seed, index);
  Rng env(derive_seed(game_seed, 1));
  Rng expert_rng(derive_seed(game_seed, 2));
  std::vector<std::size_t> order(hotels.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(kTrialsPerGame); ++i) {
    std::swap(order[i], order[i + uniform_index(env, order.size() - i)]);
  }
  std::vector<std::string> ids;
  for (int t = 0; t < kTrialsPerGame; ++t) ids.push_back(hotels[order[static_cast<std::size_t>(t)]].id());
  GameState state(ids);
  GameOutcome out;
  out.index = index;
  for (int t = 0; t < kTrialsPerGame; ++t) {
    const Hotel& h = hotels[order[static_cast<std::size_t>(t)]];
    const std::size_t r = expert.choose_review(state, h, expert_rng);
    if (r >= h.size()) throw ContractViolation(expert.name() + " returned a review outside the hotel");
    const Decision d = dm.decide(state, h, r, env);
    TrialRecord rec = resolve_trial(h, r, d, env, t + 1);
    out.expert_payoff += rec.expert_payoff;
    out.dm_payoff += rec.dm_payoff;
    state.append(rec);
    out.trials.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

TournamentResult run_tournament(const Expert& expert, const SimulatedDm& dm,
                                std::span<const Hotel> hotels, const TournamentConfig& config) {
  if (hotels.size() < static_cast<std::size_t>(kTrialsPerGame)) {
    throw ConfigError("a tournament needs at least 10 hotels");
  }
  if (config.games == 0) throw ConfigError("a tournament needs at least one game");
  TournamentResult res;
  res.expert = expert.name();
  res.dm = dm.name();
  res.alpha = dm.alpha();
  res.seed = config.seed;
  res.games.resize(config.games);

  unsigned workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, config.games));
  auto work = [&](unsigned w) {
    for (std::size_t g = w; g < config.games; g += workers) {
      res.games[g] = play_game(expert, dm, hotels, config.seed, g);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::future<void>> jobs;
    for (unsigned w = 0; w < workers; ++w) jobs.push_back(std::async(std::launch::async, work, w));
    for (auto& j : jobs) j.get();
  }

  std::vector<double> ep, dp;
  for (const auto& g : res.games) {
    ep.push_back(g.expert_payoff);
    dp.push_back(g.dm_payoff);
  }
  res.mean_expert = std::accumulate(ep.begin(), ep.end(), 0.0) / static_cast<double>(ep.size());
  res.mean_dm = std::accumulate(dp.begin(), dp.end(), 0.0) / static_cast<double>(dp.size());
  Rng boot(derive_seed(config.seed, 0xb007));
  res.ci_expert = percentile_bootstrap(ep, config.bootstrap_resamples, config.confidence, boot);
  res.ci_dm = percentile_bootstrap(dp, config.bootstrap_resamples, config.confidence, boot);
  return res;
}

TournamentResult run_tournament(const TournamentConfig& config, const ModelRegistry& models,
                                std::shared_ptr<const std::vector<Hotel>> hotels,
                                const ExpertOptions& options) {
  if (!hotels) throw ConfigError("tournament without hotels");
  const auto expert = make_expert(config.expert, models, hotels, options);
  const SimulatedDm dm(models.dmm(config.dm), config.alpha);
  return run_tournament(*expert, dm, *hotels, config);
}

MonotonicityCheck check_monotone(std::vector<TournamentResult> results) {
  MonotonicityCheck c;
  if (results.empty()) return c;
  std::sort(results.begin(), results.end(),
            [](const auto& a, const auto& b) { return a.alpha < b.alpha; });
  c.non_decreasing = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    c.alphas.push_back(results[i].alpha);
    c.means.push_back(results[i].mean_expert);
    if (i > 0 && results[i].mean_expert < results[i - 1].mean_expert) c.non_decreasing = false;
  }
  c.extremes_separated = results.size() > 1 &&
                         !results.front().ci_expert.overlaps(results.back().ci_expert) &&
                         results.front().mean_expert < results.back().mean_expert;
  return c;
}

// ---------------------------------------------------------------------------------------------

namespace {

// Calls fn(state_before_trial, hotel, revealed_index, trial_position, log) for every trial.
template <typename Fn>
void for_each_trial(std::span<const GameLog> logs, const HotelCatalog& catalog, Fn&& fn) {
  for (const auto& log : logs) {
    GameState state(log.hotel_sequence(), static_cast<int>(log.trials.size()));
    for (std::size_t t = 0; t < log.trials.size(); ++t) {
      const auto& rec = log.trials[t];
      const Hotel* h = catalog.find(rec.hotel_id);
      if (!h) throw DataError(log.game_id + ": unknown hotel " + rec.hotel_id);
      const auto idx = h->index_of(rec.revealed_review_id);
      if (!idx) throw DataError(log.game_id + ": review " + rec.revealed_review_id + " not in hotel");
      fn(state, *h, *idx, t, log);
      state.append(rec);
    }
  }
}

}  // namespace

DmmEvaluation evaluate_dmm(const DmmInterface& model, std::span<const GameLog> logs,
                           const HotelCatalog& catalog) {
  std::vector<int> truth, pred;
  for_each_trial(logs, catalog, [&](const GameState& s, const Hotel& h, std::size_t r, std::size_t t,
                                    const GameLog& log) {
    truth.push_back(log.trials[t].decision == Decision::Accept ? 1 : 0);
    pred.push_back(model.accept_probability(s, h, r) >= 0.5 ? 1 : 0);
  });
  if (truth.empty()) throw DataError("no trials to evaluate");
  const auto m = binary_metrics(truth, pred);
  return {m.accuracy, m.macro_f1, truth.size()};
}

VmEvaluation evaluate_vm(const VmInterface& model, std::span<const GameLog> logs,
                         const HotelCatalog& catalog) {
  std::size_t n = 0, exact = 0;
  double sq = 0;
  for_each_trial(logs, catalog, [&](const GameState& s, const Hotel& h, std::size_t r, std::size_t t,
                                    const GameLog& log) {
    int target = 0;
    for (std::size_t i = t; i < log.trials.size(); ++i) target += log.trials[i].expert_payoff;
    const double p = model.predict_future_payoff(s, h, r);
    exact += std::lround(p) == target;
    sq += (p - target) * (p - target);
    ++n;
  });
  if (n == 0) throw DataError("no trials to evaluate");
  return {static_cast<double>(exact) / static_cast<double>(n), std::sqrt(sq / static_cast<double>(n)), n};
}

// ---------------------------------------------------------------------------------------------

std::optional<double> payoff_correlation(std::span<const TournamentResult> results) {
  std::vector<double> e, d;
  for (const auto& r : results) {
    e.push_back(r.mean_expert);
    d.push_back(r.mean_dm);
  }
  return pearson(e, d);
}

double normalized_score(const Hotel& hotel, std::size_t review_index) {
  double lo = hotel.review(0).score, hi = lo;
  for (const auto& r : hotel.reviews()) {
    lo = std::min(lo, r.score);
    hi = std::max(hi, r.score);
  }
  if (hi == lo) return 0.5;
  return (hotel.review(review_index).score - lo) / (hi - lo);
}

double mean_normalized_revealed_score(std::span<const GameLog> logs, const HotelCatalog& catalog) {
  double sum = 0;
  std::size_t n = 0;
  for_each_trial(logs, catalog, [&](const GameState&, const Hotel& h, std::size_t r, std::size_t,
                                    const GameLog&) {
    sum += normalized_score(h, r);
    ++n;
  });
  if (n == 0) throw DataError("no revealed reviews");
  return sum / static_cast<double>(n);
}

std::string_view to_string(HotelTier t) {
  switch (t) {
    case HotelTier::Low: return "low";
    case HotelTier::Medium: return "medium";
    case HotelTier::High: return "high";
  }
  return "?";
}

HotelTier hotel_tier(double avg) {
  if (avg < 7.5) return HotelTier::Low;
  if (avg > 8.5) return HotelTier::High;
  return HotelTier::Medium;
}

std::vector<TierTopics> analyze_topics(std::span<const GameLog> logs, const HotelCatalog& catalog,
                                       std::size_t k) {
  const auto& features = catalog.manifest().features;
  std::map<std::string, std::vector<std::size_t>> topic_bits;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].kind == "topic") topic_bits[features[i].arg].push_back(i);
  }
  std::array<std::map<std::string, std::size_t>, 3> counts;
  std::array<std::size_t, 3> revealed{};
  for_each_trial(logs, catalog, [&](const GameState&, const Hotel& h, std::size_t r, std::size_t,
                                    const GameLog&) {
    const auto tier = static_cast<std::size_t>(hotel_tier(h.avg_score()));
    ++revealed[tier];
    const HcFeatures bits = catalog.hc_for(h, r);
    for (const auto& [topic, idx] : topic_bits) {
      if (std::any_of(idx.begin(), idx.end(), [&](std::size_t b) { return bits[b]; })) ++counts[tier][topic];
    }
  });
  std::vector<TierTopics> out;
  for (std::size_t t = 0; t < 3; ++t) {
    TierTopics tt;
    tt.tier = static_cast<HotelTier>(t);
    tt.revealed = revealed[t];
    for (const auto& [topic, c] : counts[t]) {
      tt.top.push_back({topic, static_cast<double>(c) / static_cast<double>(revealed[t])});
    }
    std::stable_sort(tt.top.begin(), tt.top.end(),
                     [](const auto& a, const auto& b) { return a.frequency > b.frequency; });
    if (tt.top.size() > k) tt.top.resize(k);
    out.push_back(std::move(tt));
  }
  return out;
}

int score_bin(const Hotel& hotel, std::size_t review_index) {
  if (hotel.size() != kReviewsPerHotel) throw DataError("score bins need 7-review hotels");
  const std::size_t rank = score_rank(hotel, review_index);  // 0 = highest
  if (rank < 2) return 2;
  if (rank < 5) return 1;
  return 0;
}

ScoreBins analyze_score_bins(std::span<const GameLog> logs, const HotelCatalog& catalog) {
  ScoreBins b;
  std::array<double, 3> sum{};
  for_each_trial(logs, catalog, [&](const GameState&, const Hotel& h, std::size_t r, std::size_t,
                                    const GameLog&) {
    const auto bin = static_cast<std::size_t>(score_bin(h, r));
    ++b.count[bin];
    sum[bin] += h.review(r).score;
    ++b.total;
  });
  for (std::size_t i = 0; i < 3; ++i) {
    b.frequency[i] = b.total ? static_cast<double>(b.count[i]) / static_cast<double>(b.total) : 0.0;
    b.mean_score[i] = b.count[i] ? sum[i] / static_cast<double>(b.count[i]) : 0.0;
  }
  return b;
}

// ---------------------------------------------------------------------------------------------

RoleSpec RoleSpec::parse(const std::string& role) {
  const auto dot = role.find('.');
  if (dot == std::string::npos) throw ConfigError("bad role name '" + role + "'");
  RoleSpec r;
  r.task = role.substr(0, dot);
  const std::string kind = role.substr(dot + 1);
  if (r.task != "dmm" && r.task != "vm") throw ConfigError("bad role task in '" + role + "'");
  if (kind == "hc-lstm") {
    r.arch = "lstm";
  } else if (kind == "sg-lstm") {
    r.arch = "lstm";
    r.mode = FeatureMode::NumericalOnly;
  } else if (kind == "linear") {
    r.arch = "linear";
  } else if (kind == "sg-linear") {
    r.arch = "linear";
    r.mode = FeatureMode::NumericalOnly;
  } else {
    throw ConfigError("no trainable model for role '" + role + "'");
  }
  return r;
}

ModelFile train_model(const RoleSpec& role, std::span<const GameLog> logs,
                      std::shared_ptr<const HotelCatalog> catalog, const TrainingConfig& config) {
  if (logs.empty()) throw DataError("no training logs");
  const FeatureEncoder enc(catalog, role.mode);
  const auto seqs = build_training_sequences(logs, enc);
  ModelFile f;
  f.task = role.task;
  f.mode = role.mode;
  f.manifest_hash = catalog->manifest().hash_hex();
  f.config = config.to_json();
  f.config["arch"] = role.arch;
  const bool dmm = role.task == "dmm";
  if (role.arch == "lstm") {
    TrainingConfig cfg = config;
    cfg.loss = dmm ? LossKind::BinaryCrossEntropy : LossKind::MeanSquaredError;
    const auto samples = dmm ? dmm_samples(seqs) : vm_samples(seqs);
    const std::size_t hc = role.mode == FeatureMode::Textual ? kHcDim : 0;
    auto trained = train_recurrent(samples, cfg, kSgDim, hc);
    f.recurrent = std::move(trained.net);
    f.report = trained.report.to_json();
  } else {
    std::vector<FeatureVector> rows;
    std::vector<int> labels;
    std::vector<double> targets;
    for (const auto& s : seqs) {
      for (std::size_t t = 0; t < s.inputs.size(); ++t) {
        rows.push_back(s.inputs[t]);
        labels.push_back(s.dmm_targets[t] > 0.5 ? 1 : 0);
        targets.push_back(s.vm_targets[t]);
      }
    }
    f.linear = dmm ? LinearModel::fit_classifier(rows, labels) : LinearModel::fit_regressor(rows, targets);
    f.report = {{"rows", rows.size()}};
  }
  return f;
}

}  // namespace persuasion
