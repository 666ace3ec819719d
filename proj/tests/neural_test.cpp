#include "persuasion/neural.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "persuasion/errors.hpp"

using namespace persuasion;

namespace {

FeatureVector random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  FeatureVector v(n);
  for (auto& x : v) x = (2 * uniform01(rng) - 1) * scale;
  return v;
}

std::vector<FeatureVector> random_seq(Rng& rng, const NetShape& s, std::size_t T) {
  std::vector<FeatureVector> seq;
  for (std::size_t t = 0; t < T; ++t) {
    auto x = random_vec(rng, s.sg_dim);
    for (std::size_t k = 0; k < s.hc_dim; ++k) x.push_back(bernoulli(rng, 0.5) ? 1.0 : 0.0);
    seq.push_back(std::move(x));
  }
  return seq;
}

void randomize(RecurrentNet& net, Rng& rng, double scale) {
  for (auto& p : net.params()) p = (2 * uniform01(rng) - 1) * scale;
}

}  // namespace

TEST(Forward, ZeroWeightsGiveReadoutBias) {
  NetShape s{5, 4, 3, 6};
  RecurrentNet net(s);
  net.params()[net.offsets().out_b] = 0.37;
  Rng rng(1);
  for (double y : net.forward(random_seq(rng, s, 6))) EXPECT_EQ(y, 0.37);
}

TEST(Forward, DimensionMismatchIsContractViolation) {
  RecurrentNet net(NetShape{3, 0, 0, 2});
  std::vector<FeatureVector> seq{{1.0, 2.0}};
  EXPECT_THROW(net.forward(seq), ContractViolation);
}

TEST(Forward, ClosedPrefixMatchesHandComputedGates) {
  // No recurrent weights and a shut forget gate: the prefix cannot reach the last step.
  const NetShape s{3, 0, 0, 4};
  Rng rng(2);
  RecurrentNet net(s);
  randomize(net, rng, 0.8);
  const auto& o = net.offsets();
  const std::size_t H = s.hidden, in = s.lstm_input_dim(), rows = 4 * H;
  auto W = [&](std::size_t r, std::size_t c) -> double& { return net.params()[o.gate_w + c * rows + r]; };
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = in; c < in + H; ++c) W(r, c) = 0.0;
  }
  for (std::size_t j = 0; j < H; ++j) {
    for (std::size_t c = 0; c < in; ++c) W(H + j, c) = 0.0;
    net.params()[o.gate_b + H + j] = -100.0;
  }
  const auto x = random_vec(rng, 3);
  const std::vector<FeatureVector> single{x};
  const std::vector<FeatureVector> prefixed{random_vec(rng, 3), random_vec(rng, 3), x};
  const double a = net.forward(single).back();
  const double b = net.forward(prefixed).back();

  double oracle = net.params()[o.out_b];
  for (std::size_t j = 0; j < H; ++j) {
    double zi = net.params()[o.gate_b + j], zo = net.params()[o.gate_b + 2 * H + j],
           zg = net.params()[o.gate_b + 3 * H + j];
    for (std::size_t c = 0; c < in; ++c) {
      zi += W(j, c) * x[c];
      zo += W(2 * H + j, c) * x[c];
      zg += W(3 * H + j, c) * x[c];
    }
    const double i = 1 / (1 + std::exp(-zi)), og = 1 / (1 + std::exp(-zo)), g = std::tanh(zg);
    oracle += net.params()[o.out_w + j] * og * std::tanh(i * g);
  }
  EXPECT_NEAR(a, oracle, 1e-12);
  EXPECT_NEAR(b, oracle, 1e-12);
}

TEST(Forward, InferenceIsBitwiseDeterministic) {
  NetShape s{4, 3, 2, 5};
  Rng rng(3);
  auto net = RecurrentNet::random(s, rng);
  const auto seq = random_seq(rng, s, 7);
  EXPECT_EQ(net.forward(seq), net.forward(seq));
}

TEST(Forward, StepMatchesForward) {
  NetShape s{4, 3, 2, 5};
  Rng rng(4);
  auto net = RecurrentNet::random(s, rng);
  const auto seq = random_seq(rng, s, 5);
  const auto full = net.forward(seq);
  auto carry = net.initial_carry();
  for (std::size_t t = 0; t < seq.size(); ++t) EXPECT_EQ(net.step(carry, seq[t]), full[t]);
}

TEST(Backward, MatchesCentralDifferencesOnRandomConfigs) {
  Rng rng(20240501);
  const double h = 1e-5;
  std::size_t checked = 0;
  for (int cfg = 0; cfg < 100; ++cfg) {
    NetShape s{1 + uniform_index(rng, 4), uniform_index(rng, 4), 1 + uniform_index(rng, 3),
               1 + uniform_index(rng, 4)};
    RecurrentNet net(s);
    randomize(net, rng, 0.9);
    const auto seq = random_seq(rng, s, 3);
    const LossKind loss = cfg % 2 ? LossKind::MeanSquaredError : LossKind::BinaryCrossEntropy;
    std::vector<double> targets;
    for (int t = 0; t < 3; ++t) {
      targets.push_back(loss == LossKind::BinaryCrossEntropy ? (bernoulli(rng, 0.5) ? 1.0 : 0.0)
                                                             : 3 * uniform01(rng));
    }
    const double dropout = cfg % 3 == 0 ? 0.3 : 0.0;
    const std::uint64_t mask = rng();
    std::vector<double> grad(net.params().size(), 0.0);
    net.loss_and_gradient(seq, targets, loss, 1.0, grad, dropout, mask);
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const double p = net.params()[k];
      net.params()[k] = p + h;
      const double up = net.loss(seq, targets, loss, 1.0, dropout, mask);
      net.params()[k] = p - h;
      const double down = net.loss(seq, targets, loss, 1.0, dropout, mask);
      net.params()[k] = p;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max(std::abs(grad[k]), std::abs(numeric));
      // Below 1e-5 the central difference is dominated by cancellation (about eps * loss / h),
      // so tiny components are compared absolutely.
      if (scale < 1e-5) {
        EXPECT_LT(std::abs(grad[k] - numeric), 1e-9) << "config " << cfg << " param " << k;
      } else {
        EXPECT_LT(std::abs(grad[k] - numeric) / scale, 1e-4)
            << "config " << cfg << " param " << k << " analytic " << grad[k] << " numeric " << numeric;
      }
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000u);
}

TEST(Backward, UnusedProjectionGetsExactlyZeroGradient) {
  NetShape s{3, 4, 2, 3};
  Rng rng(5);
  auto net = RecurrentNet::random(s, rng);
  auto seq = random_seq(rng, s, 4);
  for (auto& x : seq) std::fill(x.begin() + 3, x.end(), 0.0);
  std::vector<double> grad(net.params().size(), 0.0);
  net.loss_and_gradient(seq, std::vector<double>{1, 0, 1, 1}, LossKind::BinaryCrossEntropy, 1.0, grad);
  for (std::size_t k = net.offsets().proj_w; k < net.offsets().proj_b; ++k) EXPECT_EQ(grad[k], 0.0);
}

TEST(Backward, DoublingLossWeightDoublesGradient) {
  NetShape s{3, 2, 2, 4};
  Rng rng(6);
  auto net = RecurrentNet::random(s, rng);
  const auto seq = random_seq(rng, s, 5);
  const std::vector<double> targets{2, 1, 0, 1, 3};
  std::vector<double> g1(net.params().size(), 0.0), g2(net.params().size(), 0.0);
  net.loss_and_gradient(seq, targets, LossKind::MeanSquaredError, 0.7, g1);
  net.loss_and_gradient(seq, targets, LossKind::MeanSquaredError, 1.4, g2);
  for (std::size_t k = 0; k < g1.size(); ++k) EXPECT_DOUBLE_EQ(g2[k], 2 * g1[k]);
}

TEST(Backward, NonFiniteLossIsTrainingError) {
  NetShape s{2, 0, 0, 2};
  RecurrentNet net(s);
  std::vector<FeatureVector> seq{{1.0, 0.0}};
  std::vector<double> grad(net.params().size());
  const std::vector<double> bad{std::numeric_limits<double>::infinity()};
  EXPECT_THROW(net.loss_and_gradient(seq, bad, LossKind::MeanSquaredError, 1.0, grad), TrainingError);
}

TEST(Backward, DropoutIsReproducibleForAFixedSeed) {
  NetShape s{4, 2, 2, 3};
  Rng rng(7);
  auto net = RecurrentNet::random(s, rng);
  const auto seq = random_seq(rng, s, 4);
  const std::vector<double> targets{1, 0, 0, 1};
  const auto a = net.loss(seq, targets, LossKind::BinaryCrossEntropy, 1.0, 0.5, 99);
  const auto b = net.loss(seq, targets, LossKind::BinaryCrossEntropy, 1.0, 0.5, 99);
  EXPECT_EQ(a, b);
}

TEST(Sigmoid, StaysStrictlyInsideUnitInterval) {
  for (double x : {-1e6, -40.0, -1.0, 0.0, 1.0, 40.0, 1e6}) {
    EXPECT_GT(sigmoid(x), 0.0);
    EXPECT_LT(sigmoid(x), 1.0);
  }
}

TEST(Adagrad, AccumulatorsNeverDecreaseAndZeroGradientIsSafe) {
  Adagrad opt(3);
  std::vector<double> p{1, 2, 3};
  std::vector<double> prev(3, 0.0);
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const auto g = i % 5 == 0 ? std::vector<double>(3, 0.0) : random_vec(rng, 3);
    opt.step(p, g);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_GE(opt.accumulators()[k], prev[k]);
      EXPECT_TRUE(std::isfinite(p[k]));
      prev[k] = opt.accumulators()[k];
    }
  }
}

namespace {

TrainingConfig small_config(LossKind loss) {
  TrainingConfig c;
  c.loss = loss;
  c.hidden_sizes = {6};
  c.batch_sizes = {5};
  c.dropouts = {0.0};
  c.max_epochs = 40;
  c.patience = 5;
  c.folds = 2;
  c.seed = 11;
  return c;
}

// Target at each step is the sign of the first game feature.
std::vector<Sample> separable(Rng& rng, std::size_t n) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    for (int t = 0; t < 4; ++t) {
      auto x = random_vec(rng, 3);
      if (std::abs(x[0]) < 0.2) x[0] = x[0] < 0 ? -0.2 : 0.2;
      s.targets.push_back(x[0] > 0 ? 1.0 : 0.0);
      s.inputs.push_back(std::move(x));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(Train, SeparableSequencesReachHighAccuracy) {
  Rng rng(9);
  const auto data = separable(rng, 80);
  const auto trained = train_recurrent(data, small_config(LossKind::BinaryCrossEntropy), 3, 0);
  std::vector<int> truth, pred;
  for (const auto& s : data) {
    const auto out = trained.net.forward(s.inputs);
    for (std::size_t t = 0; t < out.size(); ++t) {
      truth.push_back(s.targets[t] > 0.5);
      pred.push_back(sigmoid(out[t]) >= 0.5);
    }
  }
  EXPECT_GE(binary_metrics(truth, pred).accuracy, 0.99);
  EXPECT_EQ(trained.report.grid.size(), 1u);
  EXPECT_EQ(trained.report.epoch_loss.size(), static_cast<std::size_t>(trained.report.final_epochs));
}

TEST(Train, ConstantTargetRegressionConverges) {
  Rng rng(10);
  std::vector<Sample> data;
  for (int i = 0; i < 40; ++i) {
    Sample s;
    for (int t = 0; t < 3; ++t) {
      s.inputs.push_back(random_vec(rng, 2));
      s.targets.push_back(4.0);
    }
    data.push_back(std::move(s));
  }
  const auto trained = train_recurrent(data, small_config(LossKind::MeanSquaredError), 2, 0);
  double se = 0;
  int n = 0;
  for (const auto& s : data) {
    for (double y : trained.net.forward(s.inputs)) {
      se += (y - 4.0) * (y - 4.0);
      ++n;
    }
  }
  EXPECT_LT(se / n, 1e-3);
}

TEST(Train, SameSeedGivesIdenticalParameters) {
  Rng rng(12);
  const auto data = separable(rng, 30);
  auto cfg = small_config(LossKind::BinaryCrossEntropy);
  cfg.max_epochs = 8;
  cfg.dropouts = {0.3};
  const auto a = train_recurrent(data, cfg, 3, 0);
  const auto b = train_recurrent(data, cfg, 3, 0);
  EXPECT_TRUE(a.net == b.net);
}

TEST(Train, SingleClassDataIsRejected) {
  std::vector<Sample> data(6, Sample{{{0.1, 0.2}}, {1.0}});
  EXPECT_THROW(train_recurrent(data, small_config(LossKind::BinaryCrossEntropy), 2, 0), TrainingError);
}

TEST(Metrics, ConstantMajorityPredictor) {
  std::vector<int> truth(100, 1), pred(100, 1);
  std::fill(truth.begin(), truth.begin() + 28, 0);
  const auto m = binary_metrics(truth, pred);
  EXPECT_NEAR(m.accuracy, 0.72, 1e-12);
  EXPECT_NEAR(m.macro_f1, 0.4186, 1e-4);
  EXPECT_EQ(m.f1_negative, 0.0);
  const auto perfect = binary_metrics(truth, truth);
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.macro_f1, 1.0);
}

TEST(Linear, SeparableToyHasZeroTrainingError) {
  std::vector<FeatureVector> rows{{0, 0}, {1, 0}, {0, 1}, {3, 3}, {4, 3}, {3, 4}};
  std::vector<int> labels{0, 0, 0, 1, 1, 1};
  const auto m = LinearModel::fit_classifier(rows, labels);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(m.predict(rows[i]) > 0, labels[i] == 1);
}

TEST(Linear, DuplicatedRowsDoNotChangePredictions) {
  Rng rng(13);
  std::vector<FeatureVector> rows;
  std::vector<int> labels;
  std::vector<double> targets;
  for (int i = 0; i < 40; ++i) {
    rows.push_back(random_vec(rng, 4));
    labels.push_back(rows.back()[0] + 0.3 * rows.back()[1] + 0.2 * (uniform01(rng) - 0.5) > 0);
    targets.push_back(2 * rows.back()[2] + uniform01(rng));
  }
  auto rows2 = rows;
  rows2.insert(rows2.end(), rows.begin(), rows.end());
  auto labels2 = labels;
  labels2.insert(labels2.end(), labels.begin(), labels.end());
  auto targets2 = targets;
  targets2.insert(targets2.end(), targets.begin(), targets.end());
  const auto c1 = LinearModel::fit_classifier(rows, labels), c2 = LinearModel::fit_classifier(rows2, labels2);
  const auto r1 = LinearModel::fit_regressor(rows, targets), r2 = LinearModel::fit_regressor(rows2, targets2);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_vec(rng, 4);
    EXPECT_NEAR(c1.predict(x), c2.predict(x), 1e-8);
    EXPECT_NEAR(r1.predict(x), r2.predict(x), 1e-8);
  }
}

TEST(Linear, SingleClassIsRejected) {
  std::vector<FeatureVector> rows{{0.0}, {1.0}};
  EXPECT_THROW(LinearModel::fit_classifier(rows, std::vector<int>{1, 1}), TrainingError);
}

TEST(ModelFile, RoundTripAndManifestGuard) {
  const auto dir = std::filesystem::temp_directory_path() / "persuasion_model_test";
  std::filesystem::create_directories(dir);
  const auto manifest = FeatureManifest::default_manifest();
  Rng rng(14);
  ModelFile f;
  f.task = "dmm";
  f.mode = FeatureMode::Textual;
  f.manifest_hash = manifest.hash_hex();
  f.config = small_config(LossKind::BinaryCrossEntropy).to_json();
  f.recurrent = RecurrentNet::random(NetShape{kSgDim, kHcDim, 4, 3}, rng);
  f.save(dir / "m.json");
  const auto back = ModelFile::load(dir / "m.json", manifest);
  ASSERT_TRUE(back.recurrent);
  EXPECT_TRUE(*back.recurrent == *f.recurrent);
  EXPECT_EQ(TrainingConfig::from_json(back.config).to_json(), f.config);

  auto other = manifest;
  other.short_below += 1;
  EXPECT_THROW(ModelFile::load(dir / "m.json", other), ConfigError);

  ModelFile lin;
  lin.task = "vm";
  lin.mode = FeatureMode::NumericalOnly;
  lin.manifest_hash = manifest.hash_hex();
  lin.linear = LinearModel::fit_regressor(std::vector<FeatureVector>{{0.0}, {1.0}, {2.0}},
                                          std::vector<double>{1, 3, 5});
  lin.save(dir / "l.json");
  EXPECT_TRUE(*ModelFile::load(dir / "l.json", manifest).linear == *lin.linear);
  std::filesystem::remove_all(dir);
}
