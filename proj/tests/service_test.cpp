#include "persuasion/service.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "service_contract.hpp"
#include "persuasion/errors.hpp"

using namespace persuasion;
using nlohmann::json;

namespace {

struct World {
  std::shared_ptr<std::vector<Hotel>> hotels;
  std::shared_ptr<ModelRegistry> models;

  World() {
    auto data = generate_synthetic(11, 24, 0, Archetype::parse("human"));
    hotels = std::make_shared<std::vector<Hotel>>(data.corpus.hotels);
    models = std::make_shared<ModelRegistry>(std::make_shared<HotelCatalog>(*hotels));
    models->add("dmm.hc-lstm", std::make_shared<ConstantDmm>(0.6, "dmm.hc-lstm"));
    models->add("vm.hc-lstm", std::make_shared<HpVm>());
  }

  ServiceConfig config() const {
    ServiceConfig c;
    c.experts.search.budget = SearchBudget::of_iterations(30);
    return c;
  }
};

}  // namespace

TEST(Sessions, CreatePlayAndFinish) {
  World w;
  SessionManager m(w.config(), w.models, w.hotels);
  const json s = m.create(std::string("ae"), 5);
  EXPECT_EQ(s["status"], "awaiting_decision");
  EXPECT_EQ(s["trial"], 1);
  EXPECT_EQ(s["trials"], 10);
  const std::string id = s["session_id"];
  EXPECT_EQ(id.size(), 32u);
  int accepts = 0;
  json last;
  for (int t = 1; t <= 10; ++t) {
    const Decision d = t % 3 ? Decision::Accept : Decision::Reject;
    accepts += d == Decision::Accept;
    last = m.decide(id, t, d);
    EXPECT_EQ(last["trial"], t);
    if (d == Decision::Reject) EXPECT_EQ(last["dm_payoff"], 0.0);
    else EXPECT_DOUBLE_EQ(last["dm_payoff"].get<double>(), last["lottery_result"].get<double>() - 8);
  }
  EXPECT_EQ(last["status"], "finished");
  EXPECT_TRUE(last["next"].is_null());
  EXPECT_EQ(last["cumulative"]["expert_payoff"], accepts);
  const json deb = m.debrief(id);
  EXPECT_EQ(deb["expert_payoff"], accepts);
  EXPECT_EQ(deb["trials"].size(), 10u);
  EXPECT_EQ(deb["trials"][0]["reviews"].size(), 7u);
}

TEST(Sessions, SeedFixesHotelOrderAndUnknownExpertFails) {
  World w;
  SessionManager m(w.config(), w.models, w.hotels);
  const json a = m.create(std::string("highest"), 42);
  const json b = m.create(std::string("highest"), 42);
  EXPECT_NE(a["session_id"], b["session_id"]);
  for (int t = 1; t <= 10; ++t) {
    const auto ra = m.decide(a["session_id"], t, Decision::Accept);
    const auto rb = m.decide(b["session_id"], t, Decision::Accept);
    EXPECT_EQ(ra, rb);
  }
  EXPECT_EQ(m.debrief(a["session_id"])["trials"], m.debrief(b["session_id"])["trials"]);
  try {
    m.create(std::string("nobody"), 1);
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 404);
    EXPECT_EQ(e.code(), "unknown_expert");
  }
}

TEST(Sessions, ConflictsAndIdempotency) {
  World w;
  SessionManager m(w.config(), w.models, w.hotels);
  const std::string id = m.create(std::string("median"), 3)["session_id"];
  auto code_of = [](auto fn) {
    try {
      fn();
    } catch (const ServiceError& e) {
      return e.code();
    }
    return std::string("none");
  };
  EXPECT_EQ(code_of([&] { m.decide(id, 2, Decision::Accept); }), "conflict");
  EXPECT_EQ(code_of([&] { m.debrief(id); }), "not_finished");
  EXPECT_EQ(code_of([&] { m.get("ffff"); }), "not_found");
  const auto first = m.decide(id, 1, Decision::Accept);
  EXPECT_EQ(m.decide(id, 1, Decision::Accept), first);
  EXPECT_EQ(code_of([&] { m.decide(id, 1, Decision::Reject); }), "conflict");
  EXPECT_EQ(code_of([&] { m.decide(id, 11, Decision::Reject); }), "bad_request");
}

TEST(Sessions, ExpireAfterIdleTtl) {
  World w;
  auto now = std::make_shared<std::chrono::system_clock::time_point>(std::chrono::system_clock::now());
  auto cfg = w.config();
  cfg.ttl = std::chrono::minutes(60);
  SessionManager m(cfg, w.models, w.hotels, [now] { return *now; });
  const std::string id = m.create(std::string("rand"), 1)["session_id"];
  *now += std::chrono::minutes(59);
  EXPECT_NO_THROW(m.get(id));
  *now += std::chrono::minutes(61);
  try {
    m.decide(id, 1, Decision::Accept);
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 410);
    EXPECT_EQ(e.code(), "session_expired");
  }
}

TEST(Sessions, LotteryHiddenOnRejectWhenConfigured) {
  World w;
  auto cfg = w.config();
  cfg.show_lottery_on_reject = false;
  SessionManager m(cfg, w.models, w.hotels);
  const std::string id = m.create(std::string("rand"), 9)["session_id"];
  const auto r = m.decide(id, 1, Decision::Reject);
  EXPECT_FALSE(r.contains("lottery_result"));
  EXPECT_TRUE(m.decide(id, 2, Decision::Accept).contains("lottery_result"));
  EXPECT_NE(m.export_logs(true).find("\"lottery_shown_on_reject\":false"), std::string::npos);
}

TEST(Sessions, StoreSurvivesRestartAndExportReplays) {
  World w;
  const auto dir = std::filesystem::temp_directory_path() / ("persuasion-store-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  auto cfg = w.config();
  cfg.store = dir / "sessions.jsonl";
  std::filesystem::remove(cfg.store);
  std::string id, unfinished;
  json mid, first_outcome;
  {
    SessionManager m(cfg, w.models, w.hotels);
    id = m.create(std::string("a-liar"), 77)["session_id"];
    unfinished = m.create(std::string("highest"), 78)["session_id"];
    first_outcome = m.decide(id, 1, Decision::Reject);
    for (int t = 2; t <= 4; ++t) m.decide(id, t, t % 2 ? Decision::Accept : Decision::Reject);
    mid = m.get(id);
  }
  SessionManager again(cfg, w.models, w.hotels);
  EXPECT_EQ(again.get(id), mid);
  EXPECT_EQ(again.decide(id, 1, Decision::Reject), first_outcome);
  for (int t = 5; t <= 10; ++t) again.decide(id, t, Decision::Accept);

  auto catalog = std::make_shared<HotelCatalog>(*w.hotels);
  const auto finished = parse_game_logs(again.export_logs(false), *catalog);
  ASSERT_EQ(finished.logs.size(), 1u);
  EXPECT_EQ(finished.skipped, 0u);
  EXPECT_EQ(finished.logs[0].game_id, id);
  EXPECT_EQ(finished.logs[0].expert_total(), again.debrief(id)["expert_payoff"].get<int>());
  EXPECT_EQ(finished.logs, again.logs(false));
  EXPECT_EQ(again.logs(true).size(), 2u);
  std::filesystem::remove_all(dir);
}

TEST(Http, ScriptedClientHygieneAndIdempotency) {
  World w;
  SessionManager m(w.config(), w.models, w.hotels);
  const auto rep = persuasion::testing::run_service_contract(m, "highest", 12);
  for (const auto& f : rep.failures) ADD_FAILURE() << f;
  EXPECT_EQ(rep.trials_completed, 10);
  EXPECT_EQ(rep.double_submits_identical, 10);
  EXPECT_EQ(rep.bodies_checked, 22u);

  auto catalog = std::make_shared<HotelCatalog>(*w.hotels);
  const auto logs = parse_game_logs(m.export_logs(false), *catalog);
  ASSERT_EQ(logs.logs.size(), 1u);
  EXPECT_EQ(logs.logs[0].expert_total(), rep.debrief["expert_payoff"].get<int>());
}

TEST(Http, HygieneCheckCatchesLeaks) {
  std::vector<std::string> problems;
  persuasion::testing::hygiene_violations({{"review", {{"positive_text", "x"}, {"score", 9.5}}}}, "leak", problems);
  ASSERT_EQ(problems.size(), 1u);
  EXPECT_NE(problems[0].find("score"), std::string::npos);
}
