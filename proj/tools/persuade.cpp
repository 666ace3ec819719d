#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "persuasion/dataset.hpp"
#include "persuasion/errors.hpp"
#include "persuasion/harness.hpp"
#include "persuasion/service.hpp"

// After the Eigen users: httplib pulls in <resolv.h>, whose _res macro breaks Eigen headers.
#include <CLI11.hpp>
#include <httplib.h>

using namespace persuasion;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;

// A config file plus "--set a.b.c=value" overrides. Values parse as JSON when they can and fall
// back to plain strings. Relative paths resolve against the config file's directory.
struct Config {
  json root = json::object();
  fs::path base = fs::current_path();

  static Config load(const std::string& file, const std::vector<std::string>& overrides) {
    Config c;
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw ConfigError("cannot open config " + file);
      try {
        c.root = json::parse(in, nullptr, true, true);
      } catch (const json::exception& e) {
        throw ConfigError(file + ": " + e.what());
      }
      if (!c.root.is_object()) throw ConfigError(file + ": top level must be an object");
      c.base = fs::absolute(file).parent_path();
    }
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + o);
      std::string pointer = "/" + o.substr(0, eq);
      std::replace(pointer.begin(), pointer.end(), '.', '/');
      const std::string raw = o.substr(eq + 1);
      json value = json::parse(raw, nullptr, false);
      if (value.is_discarded()) value = raw;
      c.root[json::json_pointer(pointer)] = value;
    }
    return c;
  }

  json section(const std::string& name) const {
    auto it = root.find(name);
    if (it == root.end()) return json::object();
    if (!it->is_object()) throw ConfigError("config section " + name + " must be an object");
    return *it;
  }

  fs::path path(const json& j, const std::string& key) const {
    if (!j.contains(key)) throw ConfigError("missing config key " + key);
    fs::path p = j.at(key).get<std::string>();
    return p.is_relative() ? base / p : p;
  }
  std::optional<fs::path> optional_path(const json& j, const std::string& key) const {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return path(j, key);
  }
};

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
  try {
    return j.value(key, fallback);
  } catch (const json::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

// "corpus" is one file or a list of files (e.g. train and test hotels for evaluation).
std::shared_ptr<std::vector<Hotel>> load_hotels(const Config& cfg, const json& section) {
  if (!section.contains("corpus")) throw ConfigError("missing config key corpus");
  const json& c = section.at("corpus");
  const json files = c.is_array() ? c : json::array({c});
  auto hotels = std::make_shared<std::vector<Hotel>>();
  for (const auto& f : files) {
    const auto corpus = load_corpus(cfg.path({{"corpus", f}}, "corpus"));
    hotels->insert(hotels->end(), corpus.hotels.begin(), corpus.hotels.end());
  }
  return hotels;
}

struct World {
  FeatureManifest manifest = FeatureManifest::default_manifest();
  std::shared_ptr<std::vector<Hotel>> hotels;
  std::shared_ptr<HotelCatalog> catalog;
  std::shared_ptr<ModelRegistry> models;
  std::optional<fs::path> registry_path;
};

World load_world(const Config& cfg, bool need_models = true) {
  const json data = cfg.section("data");
  World w;
  if (auto m = cfg.optional_path(data, "features")) w.manifest = FeatureManifest::load(*m);
  w.hotels = load_hotels(cfg, data);
  w.catalog = std::make_shared<HotelCatalog>(*w.hotels, w.manifest);
  w.registry_path = cfg.optional_path(cfg.root, "models");
  if (need_models && w.registry_path && fs::exists(*w.registry_path)) {
    w.models = std::make_shared<ModelRegistry>(ModelRegistry::load(*w.registry_path, w.catalog));
  } else {
    w.models = std::make_shared<ModelRegistry>(w.catalog);
  }
  return w;
}

std::vector<GameLog> load_logs(const fs::path& path, const HotelCatalog& catalog) {
  auto loaded = load_game_logs(path, catalog);
  for (const auto& p : loaded.problems) std::cerr << "skipped game: " << p << '\n';
  if (loaded.logs.empty()) throw DataError(path.string() + ": no valid games");
  return std::move(loaded.logs);
}

SearchConfig search_config(const json& j) {
  SearchConfig s;
  s.c = get_or(j, "exploration", s.c);
  std::optional<std::size_t> iterations;
  std::optional<std::chrono::milliseconds> time_limit;
  if (j.contains("iterations")) iterations = j.at("iterations").get<std::size_t>();
  if (j.contains("time_ms")) time_limit = std::chrono::milliseconds(j.at("time_ms").get<long>());
  if (iterations || time_limit) s.budget = {iterations, time_limit};
  s.budget.validate();
  return s;
}

ExpertOptions expert_options(const json& j) {
  ExpertOptions o;
  o.search = search_config(j.value("search", json::object()));
  o.vm_sm_role = get_or(j, "vm_sm_role", o.vm_sm_role);
  o.vm_sm_softmax = get_or(j, "vm_sm_softmax", o.vm_sm_softmax);
  if (j.contains("ae_bindings")) {
    for (const auto& [name, b] : j.at("ae_bindings").items()) {
      o.ae_bindings[name] = {b.at("dmm").get<std::string>(), b.at("vm").get<std::string>()};
    }
  }
  return o;
}

void emit(const json& report, const std::optional<fs::path>& out) {
  std::cout << report.dump(2) << '\n';
  if (out) {
    if (out->has_parent_path()) fs::create_directories(out->parent_path());
    std::ofstream f(*out);
    if (!f) throw ConfigError("cannot write " + out->string());
    f << report.dump(2) << '\n';
  }
}

std::string role_file(const std::string& role) {
  std::string s = role;
  std::replace(s.begin(), s.end(), '.', '_');
  std::replace(s.begin(), s.end(), '-', '_');
  return s + ".json";
}

// ---------------------------------------------------------------------------------------------

int cmd_generate(const Config& cfg) {
  const json g = cfg.section("generate");
  const auto data = generate_synthetic(get_or<std::uint64_t>(g, "seed", 1), get_or<std::size_t>(g, "hotels", 60),
                                       get_or<std::size_t>(g, "games", 1000),
                                       Archetype::parse(get_or<std::string>(g, "archetype", "human")),
                                       FeatureManifest::default_manifest(),
                                       get_or<std::string>(g, "prefix", "hotel"));
  Corpus corpus = data.corpus;
  corpus.split = parse_split(get_or<std::string>(g, "split", "train"));
  const fs::path corpus_out = cfg.path(g, "corpus_out"), logs_out = cfg.path(g, "logs_out");
  for (const auto& p : {corpus_out, logs_out}) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
  }
  save_corpus(corpus, corpus_out, corpus_format_for(corpus_out));
  save_game_logs(data.logs, logs_out);
  emit({{"hotels", corpus.hotels.size()},
        {"games", data.logs.size()},
        {"corpus", corpus_out.string()},
        {"logs", logs_out.string()}},
       std::nullopt);
  return 0;
}

int cmd_train(const Config& cfg) {
  const json t = cfg.section("train");
  World w = load_world(cfg);
  if (!w.registry_path) throw ConfigError("train needs a \"models\" registry path");
  const auto logs = load_logs(cfg.path(cfg.section("data"), "logs"), *w.catalog);
  const auto training = TrainingConfig::from_json(t.value("training", json::object()));
  const auto roles = get_or<std::vector<std::string>>(t, "roles", {"dmm.hc-lstm", "vm.hc-lstm"});
  const fs::path dir = w.registry_path->parent_path();
  fs::create_directories(dir);
  json report = json::object();
  for (const auto& role : roles) {
    std::cerr << "training " << role << " on " << logs.size() << " games\n";
    const auto file = train_model(RoleSpec::parse(role), logs, w.catalog, training);
    const fs::path out = dir / role_file(role);
    file.save(out);
    w.models->bind(role, out);
    report[role] = {{"file", out.string()}, {"report", file.report}};
  }
  w.models->save_manifest(*w.registry_path);
  emit(report, cfg.optional_path(t, "report"));
  return 0;
}

int cmd_evaluate(const Config& cfg) {
  const json e = cfg.section("evaluate");
  World w = load_world(cfg);
  const auto logs = load_logs(cfg.path(cfg.section("data"), "test_logs"), *w.catalog);
  const auto roles = get_or<std::vector<std::string>>(e, "roles", {"dmm.hc-lstm", "vm.hc-lstm"});
  json report = json::object();
  for (const auto& role : roles) {
    if (role.rfind("dmm.", 0) == 0) {
      const auto r = evaluate_dmm(*w.models->dmm(role), logs, *w.catalog);
      report[role] = {{"accuracy", r.accuracy}, {"macro_f1", r.macro_f1}, {"trials", r.trials}};
    } else if (role.rfind("vm.", 0) == 0) {
      const auto r = evaluate_vm(*w.models->vm(role), logs, *w.catalog);
      report[role] = {{"exact_accuracy", r.exact_accuracy}, {"rmse", r.rmse}, {"trials", r.trials}};
    } else {
      throw ConfigError("role must start with dmm. or vm.: " + role);
    }
  }
  emit(report, cfg.optional_path(e, "report"));
  return 0;
}

int cmd_tournament(const Config& cfg) {
  const json t = cfg.section("tournament");
  World w = load_world(cfg);
  const TournamentConfig base = TournamentConfig::from_json(t);
  const auto options = expert_options(t);
  const auto experts = get_or<std::vector<std::string>>(t, "experts", {base.expert});
  const auto dms = get_or<std::vector<std::string>>(t, "dms", {base.dm});
  const auto alphas = get_or<std::vector<double>>(t, "alphas", {base.alpha});
  // Optional hotel pool for the games; the catalog still covers every corpus in "data".
  const auto pool = t.contains("corpus") ? load_hotels(cfg, t) : w.hotels;

  std::unique_ptr<std::ofstream> csv;
  if (auto p = cfg.optional_path(t, "csv")) {
    if (p->has_parent_path()) fs::create_directories(p->parent_path());
    csv = std::make_unique<std::ofstream>(*p);
    if (!*csv) throw ConfigError("cannot write " + p->string());
    TournamentResult::write_csv_header(*csv);
  }
  std::vector<TournamentResult> all;
  json rows = json::array(), monotone = json::array();
  for (const auto& dm : dms) {
    for (const auto& expert : experts) {
      std::vector<TournamentResult> by_alpha;
      for (double alpha : alphas) {
        TournamentConfig c = base;
        c.expert = expert;
        c.dm = dm;
        c.alpha = alpha;
        std::cerr << "tournament " << expert << " vs " << dm << " alpha " << alpha << '\n';
        auto r = run_tournament(c, *w.models, pool, options);
        if (csv) r.write_csv_rows(*csv);
        rows.push_back(r.summary());
        by_alpha.push_back(r);
        all.push_back(std::move(r));
      }
      if (by_alpha.size() > 1) {
        const auto m = check_monotone(by_alpha);
        monotone.push_back({{"expert", expert},
                            {"dm", dm},
                            {"alphas", m.alphas},
                            {"means", m.means},
                            {"non_decreasing", m.non_decreasing},
                            {"extremes_separated", m.extremes_separated}});
      }
    }
  }
  json report = {{"config", base.to_json()}, {"results", rows}, {"monotonicity", monotone}};
  const auto corr = payoff_correlation(all);
  report["payoff_correlation"] = corr ? json(*corr) : json(nullptr);
  emit(report, cfg.optional_path(t, "report"));
  return 0;
}

json bins_json(const ScoreBins& b) {
  return {{"count", b.count}, {"frequency", b.frequency}, {"mean_score", b.mean_score}, {"total", b.total}};
}

int cmd_analyze(const Config& cfg) {
  const json a = cfg.section("analyze");
  World w = load_world(cfg, false);
  const auto logs = load_logs(cfg.path(a, "logs"), *w.catalog);
  const auto k = get_or<std::size_t>(a, "top_k", 5);

  json topics = json::array();
  for (const auto& tier : analyze_topics(logs, *w.catalog, k)) {
    json top = json::array();
    for (const auto& t : tier.top) top.push_back({{"topic", t.topic}, {"frequency", t.frequency}});
    topics.push_back({{"tier", to_string(tier.tier)}, {"revealed", tier.revealed}, {"top", top}});
  }
  std::map<std::string, std::vector<GameLog>> by_expert;
  for (const auto& g : logs) by_expert[g.expert_id].push_back(g);
  json experts = json::object();
  for (const auto& [name, games] : by_expert) {
    double expert_total = 0, dm_total = 0;
    for (const auto& g : games) {
      expert_total += g.expert_total();
      dm_total += g.dm_total();
    }
    const double n = static_cast<double>(games.size());
    experts[name] = {{"games", games.size()},
                     {"mean_expert_payoff", expert_total / n},
                     {"mean_dm_payoff", dm_total / n},
                     {"mean_normalized_revealed_score", mean_normalized_revealed_score(games, *w.catalog)},
                     {"score_bins", bins_json(analyze_score_bins(games, *w.catalog))}};
  }
  const json report = {{"games", logs.size()},
                       {"topics", topics},
                       {"score_bins", bins_json(analyze_score_bins(logs, *w.catalog))},
                       {"by_expert", experts}};
  emit(report, cfg.optional_path(a, "report"));
  return 0;
}

ServiceConfig service_config(const Config& cfg, const json& s) {
  ServiceConfig c;
  c.default_expert = get_or(s, "default_expert", c.default_expert);
  c.ttl = std::chrono::seconds(get_or<long>(s, "ttl_seconds", c.ttl.count()));
  c.show_lottery_on_reject = get_or(s, "show_lottery_on_reject", c.show_lottery_on_reject);
  if (auto p = cfg.optional_path(s, "store")) c.store = *p;
  c.experts = expert_options(s);
  if (!s.contains("search")) c.experts.search.budget = ServiceConfig{}.experts.search.budget;
  c.search_workers = get_or<std::ptrdiff_t>(s, "search_workers", c.search_workers);
  c.cors_origin = get_or(s, "cors_origin", c.cors_origin);
  if (c.ttl.count() <= 0 || c.search_workers <= 0) throw ConfigError("ttl_seconds and search_workers must be positive");
  return c;
}

int cmd_serve(const Config& cfg) {
  const json s = cfg.section("serve");
  World w = load_world(cfg);
  SessionManager manager(service_config(cfg, s), w.models, w.hotels);
  httplib::Server server;
  install_routes(server, manager);
  const auto host = get_or<std::string>(s, "host", "127.0.0.1");
  const int port = get_or(s, "port", 8080);
  std::cerr << "listening on " << host << ':' << port << '\n';
  if (!server.listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

// One game at the terminal against an expert, through the same session logic the service uses.
int cmd_play(const Config& cfg) {
  const json p = cfg.section("play");
  World w = load_world(cfg);
  ServiceConfig sc = service_config(cfg, p);
  std::optional<std::uint64_t> seed;
  if (p.contains("seed")) seed = p.at("seed").get<std::uint64_t>();
  SessionManager manager(sc, w.models, w.hotels);
  json state = manager.create(get_or<std::string>(p, "expert", sc.default_expert), seed);
  const std::string id = state["session_id"];
  json review = state["review"];
  std::cout << std::fixed << std::setprecision(2);
  std::cout << "You decide whether to book each hotel. Accepting pays (lottery - 8); rejecting pays 0.\n";
  for (int t = 1; t <= kTrialsPerGame; ++t) {
    std::cout << "\nTrial " << t << "/" << kTrialsPerGame << '\n';
    const bool pos_first = review["positive_first"];
    std::cout << "  + " << review[pos_first ? "positive_text" : "negative_text"].get<std::string>() << '\n';
    std::cout << "  - " << review[pos_first ? "negative_text" : "positive_text"].get<std::string>() << '\n';
    std::optional<Decision> d;
    while (!d) {
      std::cout << "accept or reject [a/r]? " << std::flush;
      std::string line;
      if (!std::getline(std::cin, line)) throw DataError("input ended before the game finished");
      if (line == "a" || line == "accept") d = Decision::Accept;
      if (line == "r" || line == "reject") d = Decision::Reject;
    }
    const json out = manager.decide(id, t, *d);
    if (out.contains("lottery_result")) std::cout << "  lottery: " << out["lottery_result"].get<double>() << '\n';
    std::cout << "  your payoff " << out["dm_payoff"].get<double>() << ", total "
              << out["cumulative"]["dm_payoff"].get<double>() << '\n';
    review = out["next"];
  }
  const json deb = manager.debrief(id);
  std::cout << "\nExpert " << deb["expert"].get<std::string>() << " earned " << deb["expert_payoff"].get<int>()
            << "; you earned " << deb["dm_payoff"].get<double>() << ".\n";
  for (const auto& t : deb["trials"]) {
    std::cout << "  trial " << t["trial"] << ": hotel average " << t["hotel_avg_score"].get<double>()
              << ", shown review score " << t["revealed_score"].get<double>() << ", " << t["decision"].get<std::string>() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Persuasion game toolkit: data, models, tournaments and the game service."};
  app.require_subcommand(1);
  std::string config_file;
  std::vector<std::string> overrides;
  const std::vector<std::pair<std::string, std::function<int(const Config&)>>> commands{
      {"generate", cmd_generate}, {"train", cmd_train},     {"evaluate", cmd_evaluate},
      {"tournament", cmd_tournament}, {"analyze", cmd_analyze}, {"serve", cmd_serve},
      {"play", cmd_play}};
  const std::map<std::string, std::string> help{
      {"generate", "write a synthetic corpus and game logs"},
      {"train", "fit DM and value models and record them in the model registry"},
      {"evaluate", "score registered models on held-out game logs"},
      {"tournament", "play experts against simulated decision makers"},
      {"analyze", "topic and revealed-score analyses of game logs"},
      {"serve", "run the HTTP game service"},
      {"play", "play one game at the terminal"}};
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("-c,--config", config_file, "JSON config file");
    sub->add_option("-s,--set", overrides, "override a config value, e.g. tournament.games=200");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }
  try {
    const Config cfg = Config::load(config_file, overrides);
    for (const auto& [name, fn] : commands) {
      if (app.got_subcommand(name)) return fn(cfg);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  } catch (const ServiceError& e) {
    std::cerr << e.code() << ": " << e.what() << '\n';
    return e.status() == 404 ? kConfigExit : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
