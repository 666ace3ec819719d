#include "persuasion/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "persuasion/errors.hpp"

using namespace persuasion;
using persuasion::testing::make_hotel;

namespace {

// State with the given decision pattern on copies of one mid-range hotel.
GameState state_with(const std::string& pattern) {
  static const Hotel h = make_hotel("h", {5, 6, 7, 8, 9, 10, 7});
  std::vector<std::string> seq(10, "h");
  GameState s(seq);
  Rng rng(1);
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    s.append(resolve_trial(h, 0, pattern[i] == 'A' ? Decision::Accept : Decision::Reject, rng,
                           static_cast<int>(i) + 1));
  }
  return s;
}

const Hotel& any_hotel() {
  static const Hotel h = make_hotel("x", {1, 2, 3, 4, 5, 6, 7});
  return h;
}

}  // namespace

TEST(Baselines, EwgIsConstantAndSamplesAtItsRate) {
  ConstantDmm ewg(kTrainAcceptRate);
  EXPECT_EQ(ewg.accept_probability(state_with(""), any_hotel(), 0), 0.72);
  EXPECT_EQ(ewg.accept_probability(state_with("ARRA"), any_hotel(), 3), 0.72);
  SimulatedDm dm(std::make_shared<ConstantDmm>(kTrainAcceptRate), 0.0);
  Rng rng(7);
  int acc = 0;
  const int n = 100000;
  const auto s = state_with("");
  for (int i = 0; i < n; ++i) acc += dm.decide(s, any_hotel(), 0, rng) == Decision::Accept;
  EXPECT_NEAR(static_cast<double>(acc) / n, 0.72, 0.005);
  Rng a(3), b(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(dm.decide(s, any_hotel(), 0, a), dm.decide(s, any_hotel(), 0, b));
}

TEST(Baselines, PdFollowsHalfRule) {
  EXPECT_EQ(dmm_pd(state_with("AARAR")), Decision::Accept);
  EXPECT_EQ(dmm_pd(state_with("ARRR")), Decision::Reject);
  EXPECT_EQ(dmm_pd(state_with("")), Decision::Accept);
  // Truth table over every history up to nine trials.
  for (int len = 0; len <= 9; ++len) {
    for (int mask = 0; mask < (1 << len); ++mask) {
      std::string p;
      int acc = 0;
      for (int i = 0; i < len; ++i) {
        const bool a = (mask >> i) & 1;
        p.push_back(a ? 'A' : 'R');
        acc += a;
      }
      const bool want = acc >= len - acc;
      EXPECT_EQ(dmm_pd(state_with(p)) == Decision::Accept, want) << p;
    }
  }
  EXPECT_EQ(PdDmm().accept_probability(state_with("RR"), any_hotel(), 0), 0.0);
}

TEST(Baselines, MfoCountsRemainingTrials) {
  EXPECT_EQ(vm_mfo(state_with("")), 10);
  EXPECT_EQ(vm_mfo(state_with("AAAAAAAAA")), 1);
  EXPECT_EQ(vm_mfo(state_with("ARARR")), 5);
}

TEST(Baselines, HpUsesPastRateAndPrior) {
  EXPECT_DOUBLE_EQ(vm_hp(state_with("AAAA")), 6.0);
  EXPECT_NEAR(vm_hp(state_with("AARRRR")), 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(vm_hp(state_with("")), 7.2, 1e-12);
}

TEST(Baselines, AvTableFromLogs) {
  EXPECT_THROW(AvTable::build({}), DataError);
  const auto all = generate_synthetic(1, 12, 30, Archetype::parse("threshold:0")).logs;
  const auto t = AvTable::build(all);
  for (int trial = 1; trial <= 10; ++trial) EXPECT_DOUBLE_EQ(t.at(trial), 11 - trial);

  // Trial-independent accept rate q.
  const double q = 0.6;
  auto logs = generate_synthetic(2, 12, 3000, Archetype::parse("threshold:0")).logs;
  Rng rng(5);
  for (auto& g : logs) {
    for (auto& r : g.trials) r.decision = bernoulli(rng, q) ? Decision::Accept : Decision::Reject;
  }
  const auto tq = AvTable::build(logs);
  for (int trial = 1; trial <= 10; ++trial) {
    const double n = 11 - trial;
    const double sd = std::sqrt(n * q * (1 - q) / static_cast<double>(logs.size()));
    EXPECT_NEAR(tq.at(trial), q * n, 4 * sd + 1e-12);
  }
  const auto path = std::filesystem::temp_directory_path() / "persuasion_av.json";
  tq.save(path);
  EXPECT_EQ(AvTable::load(path).by_trial, tq.by_trial);
  std::filesystem::remove(path);
}

TEST(Baselines, VmOutputsAreClamped) {
  FunctionVm high([](const GameState&, const Hotel&, std::size_t) { return 50.0; }, "vm.high");
  FunctionVm low([](const GameState&, const Hotel&, std::size_t) { return -3.0; }, "vm.low");
  EXPECT_EQ(high.predict_future_payoff(state_with("AAR"), any_hotel(), 0), 7.0);
  EXPECT_EQ(low.predict_future_payoff(state_with("AAR"), any_hotel(), 0), 0.0);
}

TEST(SimulatedDm, ClampsShiftedProbability) {
  auto base95 = std::make_shared<ConstantDmm>(0.95, "p95");
  auto base05 = std::make_shared<ConstantDmm>(0.05, "p05");
  SimulatedDm up(base95, 0.2), down(base05, -0.2);
  const auto s = state_with("A");
  Rng rng(11);
  EXPECT_EQ(up.effective_probability(s, any_hotel(), 0), 1.0);
  EXPECT_EQ(down.effective_probability(s, any_hotel(), 0), 0.0);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(up.decide(s, any_hotel(), 0, rng), Decision::Accept);
    EXPECT_EQ(down.decide(s, any_hotel(), 0, rng), Decision::Reject);
  }
  EXPECT_THROW(SimulatedDm(base95, 0.3), ConfigError);
}

TEST(SimulatedDm, UnshiftedRateMatchesBaseWithinThreeSigma) {
  const double p = 0.37;
  SimulatedDm dm(std::make_shared<ConstantDmm>(p, "p"), 0.0);
  Rng rng(12);
  const int n = 10000;
  int acc = 0;
  for (int i = 0; i < n; ++i) acc += dm.decide(state_with(""), any_hotel(), 0, rng) == Decision::Accept;
  EXPECT_NEAR(static_cast<double>(acc) / n, p, 3 * std::sqrt(p * (1 - p) / n));
}

TEST(SimulatedDm, EffectiveProbabilityIsMonotoneInAlpha) {
  auto base = std::make_shared<FunctionDmm>(
      [](const GameState& s, const Hotel& h, std::size_t r) {
        return std::clamp(h.review(r).score / 10.0 - 0.05 * s.rejected_count(), 0.0, 1.0);
      },
      "scripted");
  Rng rng(13);
  for (int k = 0; k < 200; ++k) {
    const auto g = persuasion::testing::random_game(rng, static_cast<int>(uniform_index(rng, 10)));
    const auto& h = g.hotels[9];
    const auto r = uniform_index(rng, 7);
    double prev = -1;
    for (double a : {-0.2, -0.1, 0.0, 0.1, 0.2}) {
      const double p = SimulatedDm(base, a).effective_probability(g.state, h, r);
      EXPECT_GE(p, prev);
      prev = p;
    }
  }
}

namespace {

struct LearnedFixture {
  SyntheticData data = generate_synthetic(21, 20, 30, Archetype::parse("human"));
  std::shared_ptr<HotelCatalog> catalog = std::make_shared<HotelCatalog>(data.corpus.hotels);
};

}  // namespace

TEST(Learned, IncrementalEvaluationMatchesFullForward) {
  LearnedFixture f;
  Rng rng(14);
  FeatureEncoder enc(f.catalog, FeatureMode::Textual);
  auto net = RecurrentNet::random(NetShape{kSgDim, kHcDim, 4, 6}, rng);
  RecurrentDmm dmm(net, enc, "dmm.test");
  for (int rep = 0; rep < 2; ++rep) {
    for (const auto& log : f.data.logs) {
      auto state = GameState(log.hotel_sequence());
      for (std::size_t t = 0; t < log.trials.size(); ++t) {
        const Hotel& h = f.catalog->at(log.trials[t].hotel_id);
        const auto r = uniform_index(rng, 7);
        const double want = sigmoid(net.forward(enc.sequence(state, h, r)).back());
        EXPECT_EQ(dmm.accept_probability(state, h, r), want);
        state.append(log.trials[t]);
      }
    }
  }
}

TEST(Learned, LinearDmmGivesProbabilities) {
  LearnedFixture f;
  FeatureEncoder enc(f.catalog, FeatureMode::NumericalOnly);
  const auto seqs = build_training_sequences(f.data.logs, enc);
  std::vector<FeatureVector> rows;
  std::vector<int> labels;
  for (const auto& s : seqs) {
    for (std::size_t t = 0; t < s.inputs.size(); ++t) {
      rows.push_back(s.inputs[t]);
      labels.push_back(s.dmm_targets[t] > 0.5);
    }
  }
  LinearDmm dmm(LinearModel::fit_classifier(rows, labels), enc, "dmm.linear");
  GameState s(f.data.logs[0].hotel_sequence());
  for (std::size_t r = 0; r < 7; ++r) {
    const double p = dmm.accept_probability(s, f.catalog->at(s.hotel_sequence()[0]), r);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_THROW(LinearDmm(LinearModel::fit_classifier(rows, labels), FeatureEncoder(f.catalog, FeatureMode::Textual), "x"),
               ConfigError);
}

TEST(Registry, BuiltinsFilesAndErrors) {
  LearnedFixture f;
  const auto dir = std::filesystem::temp_directory_path() / "persuasion_registry_test";
  std::filesystem::create_directories(dir);
  Rng rng(15);
  ModelFile vmf;
  vmf.task = "vm";
  vmf.mode = FeatureMode::NumericalOnly;
  vmf.manifest_hash = f.catalog->manifest().hash_hex();
  vmf.linear = LinearModel::fit_regressor(std::vector<FeatureVector>(3, FeatureVector(kSgDim, 0.0)),
                                          std::vector<double>{2, 2, 2});
  vmf.save(dir / "vm_linear.json");
  ModelFile dmf;
  dmf.task = "dmm";
  dmf.mode = FeatureMode::Textual;
  dmf.manifest_hash = f.catalog->manifest().hash_hex();
  dmf.recurrent = RecurrentNet::random(NetShape{kSgDim, kHcDim, 3, 3}, rng);
  dmf.save(dir / "dmm.json");

  ModelRegistry reg(f.catalog);
  EXPECT_EQ(reg.dmm("dmm.ewg")->accept_probability(GameState{}, any_hotel(), 0), 0.72);
  EXPECT_TRUE(reg.vm("vm.mfo"));
  EXPECT_THROW(reg.dmm("dmm.nothing"), ConfigError);
  EXPECT_THROW(reg.vm("dmm.ewg"), ConfigError);

  reg.bind("vm.linear", dir / "vm_linear.json");
  reg.bind("dmm.hc-lstm", dir / "dmm.json");
  reg.bind("vm.wrong", dir / "dmm.json");
  EXPECT_THROW(reg.vm("vm.wrong"), ConfigError);
  GameState s(f.data.logs[0].hotel_sequence());
  const Hotel& h = f.catalog->at(s.hotel_sequence()[0]);
  EXPECT_NEAR(reg.vm("vm.linear")->predict_future_payoff(s, h, 0), 2.0, 1e-9);
  const double p = reg.dmm("dmm.hc-lstm")->accept_probability(s, h, 0);
  EXPECT_GT(p, 0.0);
  EXPECT_LT(p, 1.0);

  reg.save_manifest(dir / "models.json");
  const auto back = ModelRegistry::load(dir / "models.json", f.catalog);
  EXPECT_NEAR(back.vm("vm.linear")->predict_future_payoff(s, h, 0), 2.0, 1e-9);
  EXPECT_EQ(back.dmm("dmm.hc-lstm")->accept_probability(s, h, 0), p);
  std::filesystem::remove_all(dir);
}
