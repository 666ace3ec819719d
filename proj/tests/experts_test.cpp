#include "persuasion/experts.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "persuasion/dataset.hpp"
#include "persuasion/errors.hpp"

using namespace persuasion;
using persuasion::testing::make_hotel;
using persuasion::testing::random_hotel;

namespace {

const std::vector<double> kOneToSeven{3, 1, 7, 4, 2, 6, 5};

// Sort-based oracle: the k-th score from the top, earliest review with that score.
std::size_t kth_by_sort(const Hotel& h, std::size_t k) {
  std::vector<double> s;
  for (const auto& r : h.reviews()) s.push_back(r.score);
  std::sort(s.begin(), s.end(), std::greater<>());
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h.review(i).score == s[k]) return i;
  }
  return h.size();
}

GameState with_decisions(const Hotel& h, const std::vector<Decision>& ds) {
  GameState s;
  int t = 1;
  for (auto d : ds) s.append(make_record(h, 0, d, h.review(0).score, t++));
  return s;
}

void expect_within_3_sigma(std::size_t count, std::size_t n, double p) {
  const double sd = std::sqrt(static_cast<double>(n) * p * (1 - p));
  EXPECT_NEAR(static_cast<double>(count), static_cast<double>(n) * p, 3 * sd + 1e-9);
}

}  // namespace

TEST(RuleExperts, RandIsUniform) {
  const Hotel h = make_hotel("h", kOneToSeven);
  RandomExpert e;
  Rng rng(4);
  std::vector<std::size_t> counts(7);
  for (int i = 0; i < 10000; ++i) ++counts[e.choose_review(GameState{}, h, rng)];
  for (auto c : counts) expect_within_3_sigma(c, 10000, 1.0 / 7);

  const Hotel single = make_hotel("s", {5.0});
  EXPECT_EQ(e.choose_review(GameState{}, single, rng), 0u);
  Rng a(9), b(9);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(e.choose_review(GameState{}, h, a), e.choose_review(GameState{}, h, b));
}

TEST(RuleExperts, MedianHighestExtremist) {
  const Hotel h = make_hotel("h", kOneToSeven);
  Rng rng(1);
  EXPECT_EQ(h.review(MedianExpert().choose_review(GameState{}, h, rng)).score, 4.0);
  EXPECT_EQ(MedianExpert().choose_review(GameState{}, make_hotel("e", std::vector<double>(7, 6.0)), rng), 0u);

  const Hotel top = make_hotel("t", {3, 9.8, 7, 2, 2, 5, 9.8});
  EXPECT_EQ(HighestExpert().choose_review(GameState{}, top, rng), 1u);

  const Hotel avg8 = make_hotel("a", {8, 8, 8, 8, 8, 9, 7});
  EXPECT_DOUBLE_EQ(avg8.avg_score(), 8.0);
  EXPECT_EQ(ExtremistExpert().choose_review(GameState{}, avg8, rng), 5u);
  const Hotel below = make_hotel("b", {8, 8, 8, 8, 8, 9, 6.93});
  EXPECT_LT(below.avg_score(), 8.0);
  EXPECT_EQ(ExtremistExpert().choose_review(GameState{}, below, rng), 6u);
}

TEST(RuleExperts, MatchSortOracleOnRandomHotels) {
  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const Hotel h = random_hotel("h", rng);
    EXPECT_EQ(median_review(h), kth_by_sort(h, 3));
    EXPECT_EQ(highest_review(h), kth_by_sort(h, 0));
    EXPECT_EQ(lowest_review(h), kth_by_sort(h, 6));
    const std::size_t ext = h.avg_score() >= 8 ? kth_by_sort(h, 0) : kth_by_sort(h, 6);
    EXPECT_EQ(ExtremistExpert().choose_review(GameState{}, h, rng), ext);
  }
}

TEST(RuleExperts, StaticExpertsIgnoreHistory) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    auto g = persuasion::testing::random_game(rng, static_cast<int>(uniform_index(rng, 10)));
    const Hotel h = random_hotel("x", rng);
    for (const Expert* e : std::initializer_list<const Expert*>{
             new MedianExpert, new HighestExpert, new ExtremistExpert}) {
      std::unique_ptr<const Expert> own(e);
      EXPECT_EQ(e->choose_review(g.state, h, rng), e->choose_review(GameState{}, h, rng));
    }
  }
}

TEST(ALiar, Phases) {
  const Hotel h = make_hotel("h", kOneToSeven);
  ALiarExpert e;
  Rng rng(3);
  EXPECT_EQ(h.review(e.choose_review(GameState{}, h, rng)).score, 7.0);

  const GameState one = with_decisions(h, {Decision::Accept, Decision::Reject, Decision::Accept});
  std::set<double> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(h.review(e.choose_review(one, h, rng)).score);
  EXPECT_EQ(seen, (std::set<double>{6.0, 5.0}));

  const GameState two = with_decisions(h, {Decision::Reject, Decision::Reject});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(h.review(e.choose_review(two, h, rng)).score, 4.0);
}

TEST(ALiar, PhaseNeverDecreases) {
  Rng rng(8);
  for (int g = 0; g < 200; ++g) {
    const Hotel h = random_hotel("h", rng);
    GameState s;
    int prev = 0;
    for (int t = 1; t <= 10; ++t) {
      s.append(make_record(h, 0, bernoulli(rng, 0.6) ? Decision::Accept : Decision::Reject,
                           h.review(0).score, t));
      EXPECT_GE(a_liar_phase(s), prev);
      prev = a_liar_phase(s);
    }
  }
}

TEST(PtdHc, PicksCandidateIdenticalToAcceptedReview) {
  const Hotel first = make_hotel("p", {9, 9, 9, 9, 9, 9, 9},
                                 {"the breakfast was excellent and the staff were very friendly"},
                                 {"nothing"});
  const Hotel next = make_hotel("q", {5, 5, 5, 5, 5, 5, 5},
                                {"noisy street", "dirty carpet", "small room", "the breakfast was excellent and the staff were very friendly",
                                 "far from the centre", "old furniture", "slow lift"},
                                {"bad wifi", "bad wifi", "bad wifi", "nothing", "bad wifi", "bad wifi", "bad wifi"});
  auto catalog = std::make_shared<HotelCatalog>(std::vector<Hotel>{first, next});
  PtdHcExpert e(catalog);
  GameState s;
  s.append(make_record(first, 0, Decision::Accept, 9, 1));
  Rng rng(1);
  EXPECT_EQ(e.choose_review(s, next, rng), 3u);
}

TEST(PtdHc, UniformWithoutAccepts) {
  Rng rng(2);
  const Hotel h = random_hotel("h", rng);
  auto catalog = std::make_shared<HotelCatalog>(std::vector<Hotel>{h});
  PtdHcExpert e(catalog);
  const GameState rejected = with_decisions(h, {Decision::Reject});
  std::vector<std::size_t> counts(7);
  for (int i = 0; i < 7000; ++i) ++counts[e.choose_review(i % 2 ? rejected : GameState{}, h, rng)];
  for (auto c : counts) expect_within_3_sigma(c, 7000, 1.0 / 7);
}

TEST(PtdHc, MatchesDoubleLoopCosine) {
  Rng rng(21);
  std::vector<Hotel> hotels;
  for (int i = 0; i < 12; ++i) {
    std::vector<Review> reviews;
    for (int j = 0; j < 7; ++j) {
      reviews.push_back(synthetic_review("h" + std::to_string(i) + "-" + std::to_string(j),
                                         persuasion::testing::random_score(rng), rng,
                                         FeatureManifest::default_manifest()));
    }
    hotels.emplace_back("h" + std::to_string(i), std::move(reviews));
  }
  auto catalog = std::make_shared<HotelCatalog>(hotels);
  PtdHcExpert e(catalog);
  for (int rep = 0; rep < 50; ++rep) {
    GameState s;
    std::vector<HcFeatures> accepted;
    const int played = 1 + static_cast<int>(uniform_index(rng, 9));
    for (int t = 0; t < played; ++t) {
      const Hotel& h = hotels[static_cast<std::size_t>(t)];
      const std::size_t r = uniform_index(rng, 7);
      const bool acc = t == 0 || bernoulli(rng, 0.5);
      s.append(make_record(h, r, acc ? Decision::Accept : Decision::Reject, h.review(0).score, t + 1));
      if (acc) accepted.push_back(hc_features(h.review(r), FeatureManifest::default_manifest()));
    }
    const Hotel& cur = hotels[static_cast<std::size_t>(played)];
    std::size_t want = 0;
    double best = -2;
    for (std::size_t i = 0; i < 7; ++i) {
      const auto bits = hc_features(cur.review(i), FeatureManifest::default_manifest());
      double dot = 0, nc = 0, nm = 0;
      for (std::size_t k = 0; k < kHcDim; ++k) {
        double m = 0;
        for (const auto& a : accepted) m += a[k];
        m /= static_cast<double>(accepted.size());
        dot += m * bits[k];
        nc += bits[k];
        nm += m * m;
      }
      const double sim = nc == 0 || nm == 0 ? 0 : dot / std::sqrt(nc * nm);
      if (sim > best + 1e-12) {
        best = sim;
        want = i;
      }
    }
    EXPECT_EQ(e.choose_review(s, cur, rng), want) << rep;
  }
}

TEST(VmSm, ProportionalToValue) {
  const Hotel h = make_hotel("h", {1, 2, 3});
  auto vm = std::make_shared<FunctionVm>(
      [](const GameState&, const Hotel&, std::size_t r) { return r == 0 ? 2.0 : 1.0; }, "v");
  VmSamplingExpert e(vm);
  Rng rng(6);
  std::vector<std::size_t> counts(3);
  for (int i = 0; i < 10000; ++i) ++counts[e.choose_review(GameState{}, h, rng)];
  expect_within_3_sigma(counts[0], 10000, 0.5);
  expect_within_3_sigma(counts[1], 10000, 0.25);
  expect_within_3_sigma(counts[2], 10000, 0.25);

  auto one = std::make_shared<FunctionVm>(
      [](const GameState&, const Hotel&, std::size_t r) { return r == 2 ? 3.0 : 0.0; }, "v");
  for (int i = 0; i < 200; ++i) EXPECT_EQ(VmSamplingExpert(one).choose_review(GameState{}, h, rng), 2u);

  auto zero = std::make_shared<FunctionVm>([](const GameState&, const Hotel&, std::size_t) { return 0.0; }, "v");
  const auto p = VmSamplingExpert(zero).probabilities(GameState{}, h);
  for (double x : p) EXPECT_DOUBLE_EQ(x, 1.0 / 3);

  const auto soft = VmSamplingExpert(vm, true).probabilities(GameState{}, h);
  EXPECT_NEAR(soft[0], std::exp(2.0) / (std::exp(2.0) + 2 * std::exp(1.0)), 1e-12);
}

TEST(Ae, OracleDmmOnSingleTrial) {
  auto pool = std::make_shared<std::vector<Hotel>>(std::vector<Hotel>{make_hotel("h", {9, 7, 3})});
  auto dmm = std::make_shared<FunctionDmm>(
      [](const GameState&, const Hotel&, std::size_t r) { return std::vector<double>{0.2, 0.9, 0.1}[r]; }, "o");
  AeExpert ae("ae", dmm, std::make_shared<MfoVm>(), pool, {2.0, SearchBudget::of_iterations(5000)});
  Rng rng(3);
  EXPECT_EQ(ae.choose_review(GameState({}, 1), (*pool)[0], rng), 1u);
  EXPECT_THROW(AeExpert("ae", dmm, std::make_shared<MfoVm>(), pool, {0.5, SearchBudget::of_iterations(0)}),
               ConfigError);
}

TEST(Registry, NamesAndBindings) {
  Rng rng(30);
  auto hotels = std::make_shared<std::vector<Hotel>>();
  for (int i = 0; i < 12; ++i) hotels->push_back(random_hotel("h" + std::to_string(i), rng));
  ModelRegistry models(std::make_shared<HotelCatalog>(*hotels));
  EXPECT_THROW(make_expert("ae", models, hotels), ConfigError);
  EXPECT_THROW(make_expert("nobody", models, hotels), ConfigError);

  models.add("dmm.hc-lstm", std::make_shared<ConstantDmm>(0.5, "base"));
  models.add("vm.hc-lstm", std::make_shared<FunctionVm>(
                               [](const GameState&, const Hotel&, std::size_t) { return 1.0; }, "hc"));
  models.add("vm.linear", std::make_shared<FunctionVm>(
                              [](const GameState&, const Hotel&, std::size_t) { return 2.0; }, "lin"));
  ExpertOptions opts;
  opts.search.budget = SearchBudget::of_iterations(50);
  auto ae = std::dynamic_pointer_cast<const AeExpert>(make_expert("ae", models, hotels, opts));
  auto vm2 = std::dynamic_pointer_cast<const AeExpert>(make_expert("ae-vm2", models, hotels, opts));
  ASSERT_TRUE(ae && vm2);
  EXPECT_EQ(ae->vm().name(), "hc");
  EXPECT_EQ(vm2->vm().name(), "lin");
  opts.ae_bindings["ae"].vm = "vm.linear";
  auto rebound = std::dynamic_pointer_cast<const AeExpert>(make_expert("ae", models, hotels, opts));
  EXPECT_EQ(rebound->vm().name(), "lin");
}

TEST(Registry, EveryExpertReturnsAReviewOfTheHotel) {
  Rng rng(40);
  auto hotels = std::make_shared<std::vector<Hotel>>();
  for (int i = 0; i < 15; ++i) hotels->push_back(random_hotel("h" + std::to_string(i), rng));
  ModelRegistry models(std::make_shared<HotelCatalog>(*hotels));
  models.add("dmm.hc-lstm", std::make_shared<ConstantDmm>(0.6, "c"));
  models.add("vm.hc-lstm", std::make_shared<HpVm>());
  ExpertOptions opts;
  opts.search.budget = SearchBudget::of_iterations(20);
  std::vector<std::shared_ptr<const Expert>> experts;
  for (const auto& n : {"rand", "median", "highest", "extremist", "a-liar", "ptd-hc", "vm-sm", "ae"}) {
    experts.push_back(make_expert(n, models, hotels, opts));
  }
  for (int i = 0; i < 10000; ++i) {
    const auto& e = experts[static_cast<std::size_t>(i) % experts.size()];
    if (e->name() == "ae" && i % 40 != 7) continue;
    const int done = static_cast<int>(uniform_index(rng, 10));
    GameState s;
    for (int t = 0; t < done; ++t) {
      const Hotel& h = (*hotels)[static_cast<std::size_t>(t)];
      s.append(make_record(h, uniform_index(rng, 7), bernoulli(rng, 0.5) ? Decision::Accept : Decision::Reject,
                           h.review(uniform_index(rng, 7)).score, t + 1));
    }
    const Hotel& cur = (*hotels)[static_cast<std::size_t>(done)];
    const auto& id = e->choose_review_id(s, cur, rng);
    EXPECT_TRUE(cur.index_of(id).has_value()) << e->name();
  }
}
