#include "persuasion/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>

#include "persuasion/errors.hpp"

namespace persuasion {

using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using CMap = Map<const MatrixXd>;
using CVec = Map<const VectorXd>;

std::string_view to_string(LossKind k) {
  return k == LossKind::BinaryCrossEntropy ? "bce" : "mse";
}

LossKind parse_loss(std::string_view s) {
  if (s == "bce" || s == "BinaryCrossEntropy") return LossKind::BinaryCrossEntropy;
  if (s == "mse" || s == "MeanSquaredError") return LossKind::MeanSquaredError;
  throw ConfigError("unknown loss '" + std::string(s) + "'");
}

std::size_t NetShape::param_count() const {
  const std::size_t proj = hc_dim > 0 ? hc_proj * hc_dim + hc_proj : 0;
  const std::size_t in = lstm_input_dim();
  return proj + 4 * hidden * (in + hidden) + 4 * hidden + hidden + 1;
}

RecurrentNet::RecurrentNet(NetShape shape) : shape_(shape) {
  if (shape_.hidden == 0 || shape_.sg_dim + shape_.hc_dim == 0) {
    throw ContractViolation("network needs a hidden layer and at least one input");
  }
  if (shape_.hc_dim > 0 && shape_.hc_proj == 0) {
    throw ContractViolation("text features need a non-empty projection");
  }
  const std::size_t H = shape_.hidden;
  const std::size_t in = shape_.lstm_input_dim();
  const std::size_t proj_w = shape_.hc_dim > 0 ? shape_.hc_proj * shape_.hc_dim : 0;
  const std::size_t proj_b = shape_.hc_dim > 0 ? shape_.hc_proj : 0;
  off_.proj_w = 0;
  off_.proj_b = off_.proj_w + proj_w;
  off_.gate_w = off_.proj_b + proj_b;
  off_.gate_b = off_.gate_w + 4 * H * (in + H);
  off_.out_w = off_.gate_b + 4 * H;
  off_.out_b = off_.out_w + H;
  off_.end = off_.out_b + 1;
  params_.assign(off_.end, 0.0);
}

RecurrentNet RecurrentNet::random(NetShape shape, Rng& rng) {
  RecurrentNet net(shape);
  const double a = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  for (auto& p : net.params_) p = (2.0 * uniform01(rng) - 1.0) * a;
  // Forget gate starts open.
  const std::size_t H = shape.hidden;
  for (std::size_t j = 0; j < H; ++j) net.params_[net.off_.gate_b + H + j] = 1.0;
  net.params_[net.off_.out_b] = 0.0;
  return net;
}

void RecurrentNet::check_input(std::span<const double> x) const {
  if (x.size() != shape_.input_dim()) {
    throw ContractViolation("input has dimension " + std::to_string(x.size()) + ", network expects " +
                            std::to_string(shape_.input_dim()));
  }
}

bool RecurrentNet::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double p) { return std::isfinite(p); });
}

RecurrentNet::Carry RecurrentNet::initial_carry() const {
  return {VectorXd::Zero(static_cast<Eigen::Index>(shape_.hidden)),
          VectorXd::Zero(static_cast<Eigen::Index>(shape_.hidden))};
}

namespace {

// Views of the parameter blocks of a network (read-only) or of a gradient buffer.
template <typename Scalar>
struct Blocks {
  using M = Map<Eigen::Matrix<std::remove_const_t<Scalar>, Eigen::Dynamic, Eigen::Dynamic>>;
  using V = Map<Eigen::Matrix<std::remove_const_t<Scalar>, Eigen::Dynamic, 1>>;
  using MC = std::conditional_t<std::is_const_v<Scalar>, CMap, M>;
  using VC = std::conditional_t<std::is_const_v<Scalar>, CVec, V>;

  MC proj_w;
  VC proj_b;
  MC gate_w;
  VC gate_b;
  VC out_w;
  Scalar* out_b;

  Blocks(Scalar* base, const NetShape& s, const RecurrentNet::Offsets& o)
      : proj_w(base + o.proj_w, static_cast<Eigen::Index>(s.hc_dim > 0 ? s.hc_proj : 0),
               static_cast<Eigen::Index>(s.hc_dim)),
        proj_b(base + o.proj_b, static_cast<Eigen::Index>(s.hc_dim > 0 ? s.hc_proj : 0)),
        gate_w(base + o.gate_w, static_cast<Eigen::Index>(4 * s.hidden),
               static_cast<Eigen::Index>(s.lstm_input_dim() + s.hidden)),
        gate_b(base + o.gate_b, static_cast<Eigen::Index>(4 * s.hidden)),
        out_w(base + o.out_w, static_cast<Eigen::Index>(s.hidden)),
        out_b(base + o.out_b) {}
};

VectorXd sigmoid_vec(const VectorXd& v) {
  return v.unaryExpr([](double x) { return sigmoid(x); });
}

struct StepCache {
  VectorXd hc_in, proj, zh, mask, i, f, o, g, c_prev, c, tanh_c, h;
};

}  // namespace

double RecurrentNet::step(Carry& carry, std::span<const double> x) const {
  check_input(x);
  const Blocks<const double> p(params_.data(), shape_, off_);
  const auto H = static_cast<Eigen::Index>(shape_.hidden);
  const auto sg = static_cast<Eigen::Index>(shape_.sg_dim);
  const auto in = static_cast<Eigen::Index>(shape_.lstm_input_dim());

  VectorXd zh(in + H);
  zh.head(sg) = CVec(x.data(), sg);
  if (shape_.hc_dim > 0) {
    const CVec hc(x.data() + sg, static_cast<Eigen::Index>(shape_.hc_dim));
    zh.segment(sg, in - sg) = sigmoid_vec(p.proj_w * hc + p.proj_b);
  }
  zh.tail(H) = carry.h;
  const VectorXd a = p.gate_w * zh + p.gate_b;
  const VectorXd i = sigmoid_vec(a.segment(0, H));
  const VectorXd f = sigmoid_vec(a.segment(H, H));
  const VectorXd o = sigmoid_vec(a.segment(2 * H, H));
  const VectorXd g = a.segment(3 * H, H).array().tanh();
  carry.c = f.cwiseProduct(carry.c) + i.cwiseProduct(g);
  carry.h = o.cwiseProduct(VectorXd(carry.c.array().tanh()));
  return p.out_w.dot(carry.h) + *p.out_b;
}

std::vector<double> RecurrentNet::forward(std::span<const FeatureVector> sequence) const {
  std::vector<double> out;
  out.reserve(sequence.size());
  Carry carry = initial_carry();
  for (const auto& x : sequence) out.push_back(step(carry, x));
  return out;
}

double RecurrentNet::loss_and_gradient(std::span<const FeatureVector> sequence,
                                       std::span<const double> targets, LossKind loss,
                                       double loss_weight, std::span<double> grad,
                                       double dropout, std::uint64_t mask_seed) const {
  if (targets.size() != sequence.size()) {
    throw ContractViolation("targets and sequence differ in length");
  }
  if (grad.size() != params_.size()) throw ContractViolation("gradient buffer has wrong size");
  if (dropout < 0.0 || dropout >= 1.0) throw ContractViolation("dropout must be in [0,1)");

  const Blocks<const double> p(params_.data(), shape_, off_);
  Blocks<double> dp(grad.data(), shape_, off_);
  const auto H = static_cast<Eigen::Index>(shape_.hidden);
  const auto sg = static_cast<Eigen::Index>(shape_.sg_dim);
  const auto in = static_cast<Eigen::Index>(shape_.lstm_input_dim());
  const std::size_t T = sequence.size();

  Rng mask_rng(mask_seed);
  const double keep_scale = dropout > 0.0 ? 1.0 / (1.0 - dropout) : 1.0;

  std::vector<StepCache> cache(T);
  std::vector<double> dy(T);
  double total = 0.0;
  VectorXd h = VectorXd::Zero(H), c = VectorXd::Zero(H);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& x = sequence[t];
    check_input(x);
    auto& s = cache[t];
    s.zh.resize(in + H);
    s.zh.head(sg) = CVec(x.data(), sg);
    if (shape_.hc_dim > 0) {
      s.hc_in = CVec(x.data() + sg, static_cast<Eigen::Index>(shape_.hc_dim));
      s.proj = sigmoid_vec(p.proj_w * s.hc_in + p.proj_b);
      s.zh.segment(sg, in - sg) = s.proj;
    }
    s.mask = VectorXd::Ones(in);
    if (dropout > 0.0) {
      for (Eigen::Index k = 0; k < in; ++k) s.mask[k] = bernoulli(mask_rng, dropout) ? 0.0 : keep_scale;
      s.zh.head(in) = s.zh.head(in).cwiseProduct(s.mask);
    }
    s.zh.tail(H) = h;
    const VectorXd a = p.gate_w * s.zh + p.gate_b;
    s.i = sigmoid_vec(a.segment(0, H));
    s.f = sigmoid_vec(a.segment(H, H));
    s.o = sigmoid_vec(a.segment(2 * H, H));
    s.g = a.segment(3 * H, H).array().tanh();
    s.c_prev = c;
    s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
    s.tanh_c = s.c.array().tanh();
    s.h = s.o.cwiseProduct(s.tanh_c);
    h = s.h;
    c = s.c;
    const double y = p.out_w.dot(h) + *p.out_b;
    const double target = targets[t];
    if (loss == LossKind::BinaryCrossEntropy) {
      // softplus(y) - target * y, computed stably.
      const double softplus = y > 0 ? y + std::log1p(std::exp(-y)) : std::log1p(std::exp(y));
      total += loss_weight * (softplus - target * y);
      dy[t] = loss_weight * (sigmoid(y) - target);
    } else {
      const double diff = y - target;
      total += loss_weight * diff * diff;
      dy[t] = loss_weight * 2.0 * diff;
    }
  }
  if (!std::isfinite(total)) {
    throw TrainingError("non-finite loss (" + std::to_string(total) + ") on a sequence of " +
                        std::to_string(T) + " steps; parameters finite: " +
                        (all_finite() ? "yes" : "no"));
  }

  VectorXd dh_next = VectorXd::Zero(H), dc_next = VectorXd::Zero(H);
  VectorXd da(4 * H);
  for (std::size_t t = T; t-- > 0;) {
    const auto& s = cache[t];
    dp.out_w += dy[t] * s.h;
    *dp.out_b += dy[t];
    const VectorXd dh = p.out_w * dy[t] + dh_next;
    const VectorXd dout = dh.cwiseProduct(s.tanh_c);
    const VectorXd dc =
        dh.cwiseProduct(s.o).cwiseProduct(VectorXd(1.0 - s.tanh_c.array().square())) + dc_next;
    da.segment(0, H) = dc.cwiseProduct(s.g).cwiseProduct(VectorXd(s.i.array() * (1.0 - s.i.array())));
    da.segment(H, H) =
        dc.cwiseProduct(s.c_prev).cwiseProduct(VectorXd(s.f.array() * (1.0 - s.f.array())));
    da.segment(2 * H, H) = dout.cwiseProduct(VectorXd(s.o.array() * (1.0 - s.o.array())));
    da.segment(3 * H, H) = dc.cwiseProduct(s.i).cwiseProduct(VectorXd(1.0 - s.g.array().square()));
    dc_next = dc.cwiseProduct(s.f);
    dp.gate_w.noalias() += da * s.zh.transpose();
    dp.gate_b += da;
    const VectorXd dzh = p.gate_w.transpose() * da;
    dh_next = dzh.tail(H);
    if (shape_.hc_dim > 0) {
      const VectorXd dproj = dzh.segment(sg, in - sg).cwiseProduct(s.mask.segment(sg, in - sg));
      const VectorXd dpre = dproj.cwiseProduct(VectorXd(s.proj.array() * (1.0 - s.proj.array())));
      dp.proj_w.noalias() += dpre * s.hc_in.transpose();
      dp.proj_b += dpre;
    }
  }
  return total;
}

double RecurrentNet::loss(std::span<const FeatureVector> sequence, std::span<const double> targets,
                          LossKind loss, double loss_weight, double dropout,
                          std::uint64_t mask_seed) const {
  std::vector<double> scratch(params_.size(), 0.0);
  return loss_and_gradient(sequence, targets, loss, loss_weight, scratch, dropout, mask_seed);
}

// ---------------------------------------------------------------------------------------------

Adagrad::Adagrad(std::size_t n, double learning_rate, double epsilon)
    : accum_(n, 0.0), lr_(learning_rate), eps_(epsilon) {
  if (!(learning_rate > 0.0) || !(epsilon > 0.0)) {
    throw ConfigError("adagrad needs positive learning rate and epsilon");
  }
}

void Adagrad::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != accum_.size() || grad.size() != accum_.size()) {
    throw ContractViolation("adagrad size mismatch");
  }
  for (std::size_t k = 0; k < accum_.size(); ++k) {
    accum_[k] += grad[k] * grad[k];
    params[k] -= lr_ * grad[k] / (std::sqrt(accum_[k]) + eps_);
  }
}

// ---------------------------------------------------------------------------------------------

nlohmann::json TrainingConfig::to_json() const {
  return {{"loss", std::string(persuasion::to_string(loss))},
          {"hidden_sizes", hidden_sizes},
          {"batch_sizes", batch_sizes},
          {"dropouts", dropouts},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"folds", folds},
          {"hc_projection", hc_projection},
          {"learning_rate", learning_rate},
          {"epsilon", epsilon},
          {"seed", seed}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig c;
  try {
    if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
    if (j.contains("hidden_sizes")) c.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
    if (j.contains("batch_sizes")) c.batch_sizes = j.at("batch_sizes").get<std::vector<std::size_t>>();
    if (j.contains("dropouts")) c.dropouts = j.at("dropouts").get<std::vector<double>>();
    if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("patience")) c.patience = j.at("patience").get<int>();
    if (j.contains("folds")) c.folds = j.at("folds").get<int>();
    if (j.contains("hc_projection")) c.hc_projection = j.at("hc_projection").get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return c;
}

nlohmann::json TrainingReport::to_json() const {
  nlohmann::json g = nlohmann::json::array();
  for (const auto& p : grid) {
    g.push_back({{"hidden", p.hyper.hidden},
                 {"batch", p.hyper.batch},
                 {"dropout", p.hyper.dropout},
                 {"cv_score", p.cv_score},
                 {"mean_best_epoch", p.mean_best_epoch}});
  }
  return {{"selected",
           {{"hidden", selected.hidden}, {"batch", selected.batch}, {"dropout", selected.dropout}}},
          {"grid", g},
          {"final_epochs", final_epochs},
          {"epoch_loss", epoch_loss}};
}

BinaryMetrics binary_metrics(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw ContractViolation("metric inputs differ in length");
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const bool t = truth[k] != 0, p = predicted[k] != 0;
    tp += t && p;
    tn += !t && !p;
    fp += !t && p;
    fn += t && !p;
  }
  // F1 of a class absent from both truth and predictions counts as perfect agreement.
  auto f1 = [](std::size_t tp_, std::size_t fp_, std::size_t fn_) {
    const std::size_t denom = 2 * tp_ + fp_ + fn_;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp_) / static_cast<double>(denom);
  };
  BinaryMetrics m;
  const auto n = static_cast<double>(truth.size());
  m.accuracy = truth.empty() ? 0.0 : static_cast<double>(tp + tn) / n;
  m.f1_positive = f1(tp, fp, fn);
  m.f1_negative = f1(tn, fn, fp);
  m.macro_f1 = 0.5 * (m.f1_positive + m.f1_negative);
  return m;
}

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t k = idx.size(); k > 1; --k) std::swap(idx[k - 1], idx[uniform_index(rng, k)]);
}

double mean_target(std::span<const Sample> data, std::span<const std::size_t> idx) {
  double s = 0;
  std::size_t n = 0;
  for (auto i : idx) {
    for (double t : data[i].targets) {
      s += t;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

RecurrentNet init_net(std::span<const Sample> data, std::span<const std::size_t> idx,
                      NetShape shape, LossKind loss, Rng& rng) {
  RecurrentNet net = RecurrentNet::random(shape, rng);
  // Readout bias starts at the target mean (logit of the rate for classification).
  double m = mean_target(data, idx);
  if (loss == LossKind::BinaryCrossEntropy) {
    m = std::clamp(m, 1e-3, 1 - 1e-3);
    m = std::log(m / (1 - m));
  }
  net.params()[net.offsets().out_b] = m;
  return net;
}

double run_epoch(RecurrentNet& net, Adagrad& opt, std::span<const Sample> data,
                 std::vector<std::size_t>& order, const HyperParams& hp, LossKind loss, Rng& rng) {
  shuffle_indices(order, rng);
  std::vector<double> grad(net.params().size());
  double total = 0;
  const std::size_t batch = std::max<std::size_t>(1, hp.batch);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t k = start; k < end; ++k) {
      const auto& s = data[order[k]];
      total += net.loss_and_gradient(s.inputs, s.targets, loss, 1.0, grad, hp.dropout, rng());
    }
    const double scale = 1.0 / static_cast<double>(end - start);
    for (auto& g : grad) g *= scale;
    opt.step(net.params(), grad);
    if (!net.all_finite()) throw TrainingError("parameters became non-finite during training");
  }
  return order.empty() ? 0.0 : total / static_cast<double>(order.size());
}

double mean_loss(const RecurrentNet& net, std::span<const Sample> data,
                 std::span<const std::size_t> idx, LossKind loss) {
  double total = 0;
  for (auto i : idx) total += net.loss(data[i].inputs, data[i].targets, loss);
  return idx.empty() ? 0.0 : total / static_cast<double>(idx.size());
}

// Reject-class F1 for classification, per-step MSE for regression.
double fold_score(const RecurrentNet& net, std::span<const Sample> data,
                  std::span<const std::size_t> idx, LossKind loss) {
  if (loss == LossKind::BinaryCrossEntropy) {
    std::vector<int> truth, pred;
    for (auto i : idx) {
      const auto out = net.forward(data[i].inputs);
      for (std::size_t t = 0; t < out.size(); ++t) {
        truth.push_back(data[i].targets[t] >= 0.5);
        pred.push_back(sigmoid(out[t]) >= 0.5);
      }
    }
    return binary_metrics(truth, pred).f1_negative;
  }
  double se = 0;
  std::size_t n = 0;
  for (auto i : idx) {
    const auto out = net.forward(data[i].inputs);
    for (std::size_t t = 0; t < out.size(); ++t) {
      se += (out[t] - data[i].targets[t]) * (out[t] - data[i].targets[t]);
      ++n;
    }
  }
  return n ? se / static_cast<double>(n) : 0.0;
}

struct FoldResult {
  double score = 0;
  int best_epoch = 1;
};

FoldResult run_fold(std::span<const Sample> data, std::vector<std::size_t> train_idx,
                    const std::vector<std::size_t>& val_idx, NetShape shape, const HyperParams& hp,
                    const TrainingConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  RecurrentNet net = init_net(data, train_idx, shape, cfg.loss, rng);
  Adagrad opt(net.params().size(), cfg.learning_rate, cfg.epsilon);
  RecurrentNet best = net;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 1, since = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    run_epoch(net, opt, data, train_idx, hp, cfg.loss, rng);
    const double v = mean_loss(net, data, val_idx, cfg.loss);
    if (v < best_loss) {
      best_loss = v;
      best = net;
      best_epoch = epoch;
      since = 0;
    } else if (++since >= cfg.patience) {
      break;
    }
  }
  return {fold_score(best, data, val_idx, cfg.loss), best_epoch};
}

void validate_data(std::span<const Sample> data, const TrainingConfig& cfg, std::size_t dim) {
  if (data.empty()) throw TrainingError("empty training set");
  bool pos = false, neg = false;
  for (const auto& s : data) {
    if (s.inputs.size() != s.targets.size()) throw TrainingError("sample with mismatched targets");
    for (const auto& x : s.inputs) {
      if (x.size() != dim) throw TrainingError("sample vector has wrong dimension");
    }
    for (double t : s.targets) {
      if (!std::isfinite(t)) throw TrainingError("non-finite target");
      if (cfg.loss == LossKind::BinaryCrossEntropy) {
        if (t != 0.0 && t != 1.0) throw TrainingError("classification targets must be 0/1");
        pos = pos || t == 1.0;
        neg = neg || t == 0.0;
      }
    }
  }
  if (cfg.loss == LossKind::BinaryCrossEntropy && !(pos && neg)) {
    throw TrainingError("degenerate classification data: only one class present");
  }
}

}  // namespace

RecurrentNet fit_recurrent(std::span<const Sample> data, NetShape shape, const HyperParams& hp,
                           const TrainingConfig& cfg, int epochs, std::uint64_t seed,
                           std::vector<double>* epoch_loss) {
  shape.hidden = hp.hidden;
  validate_data(data, cfg, shape.input_dim());
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  RecurrentNet net = init_net(data, order, shape, cfg.loss, rng);
  Adagrad opt(net.params().size(), cfg.learning_rate, cfg.epsilon);
  for (int e = 0; e < epochs; ++e) {
    const double l = run_epoch(net, opt, data, order, hp, cfg.loss, rng);
    if (epoch_loss) epoch_loss->push_back(l);
  }
  return net;
}

TrainedNet train_recurrent(std::span<const Sample> data, const TrainingConfig& cfg,
                           std::size_t sg_dim, std::size_t hc_dim) {
  NetShape shape{sg_dim, hc_dim, cfg.hc_projection, 0};
  validate_data(data, cfg, shape.input_dim());
  if (cfg.hidden_sizes.empty() || cfg.batch_sizes.empty() || cfg.dropouts.empty()) {
    throw ConfigError("empty hyperparameter grid");
  }
  if (cfg.folds < 2 || static_cast<std::size_t>(cfg.folds) > data.size()) {
    throw ConfigError("need 2 <= folds <= number of sequences");
  }
  Rng split_rng(derive_seed(cfg.seed, 0xF01D));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle_indices(order, split_rng);
  const auto k = static_cast<std::size_t>(cfg.folds);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < order.size(); ++i) folds[i % k].push_back(order[i]);

  TrainedNet result;
  const bool maximize = cfg.loss == LossKind::BinaryCrossEntropy;
  std::size_t grid_index = 0;
  std::optional<std::size_t> best;
  for (const auto hidden : cfg.hidden_sizes) {
    for (const auto batch : cfg.batch_sizes) {
      for (const auto dropout : cfg.dropouts) {
        const HyperParams hp{hidden, batch, dropout};
        NetShape s = shape;
        s.hidden = hidden;
        std::vector<std::future<FoldResult>> jobs;
        for (std::size_t f = 0; f < k; ++f) {
          std::vector<std::size_t> train_idx;
          for (std::size_t g = 0; g < k; ++g) {
            if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
          }
          const auto seed = derive_seed(cfg.seed, grid_index * 1000 + f + 1);
          jobs.push_back(std::async(std::launch::async, run_fold, data, std::move(train_idx),
                                    std::cref(folds[f]), s, hp, std::cref(cfg), seed));
        }
        GridPoint point{hp, 0.0, 0.0};
        for (auto& j : jobs) {
          const auto r = j.get();
          point.cv_score += r.score / static_cast<double>(k);
          point.mean_best_epoch += static_cast<double>(r.best_epoch) / static_cast<double>(k);
        }
        result.report.grid.push_back(point);
        const double cur = point.cv_score;
        if (!best || (maximize ? cur > result.report.grid[*best].cv_score
                               : cur < result.report.grid[*best].cv_score)) {
          best = result.report.grid.size() - 1;
        }
        ++grid_index;
      }
    }
  }
  const auto& chosen = result.report.grid[*best];
  result.report.selected = chosen.hyper;
  result.report.final_epochs = std::max(1, static_cast<int>(std::lround(chosen.mean_best_epoch)));
  result.net = fit_recurrent(data, shape, chosen.hyper, cfg, result.report.final_epochs,
                             derive_seed(cfg.seed, 0xF17A1), &result.report.epoch_loss);
  return result;
}

// ---------------------------------------------------------------------------------------------
// Linear model

namespace {

struct Standardized {
  MatrixXd X;  // n x (d + 1), last column is the bias input
  VectorXd mean, scale;
};

Standardized standardize(std::span<const FeatureVector> rows) {
  if (rows.empty()) throw TrainingError("linear model needs at least one row");
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  const auto n = static_cast<Eigen::Index>(rows.size());
  Standardized s;
  s.X.resize(n, d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != d) {
      throw TrainingError("rows have inconsistent dimension");
    }
    s.X.row(i).head(d) = CVec(rows[static_cast<std::size_t>(i)].data(), d).transpose();
  }
  s.mean = s.X.leftCols(d).colwise().mean().transpose();
  s.scale.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = (s.X.col(j).array() - s.mean[j]).square().mean();
    s.scale[j] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    s.X.col(j) = (s.X.col(j).array() - s.mean[j]) * s.scale[j];
  }
  s.X.col(d).setOnes();
  return s;
}

VectorXd regularizer(Eigen::Index d, double lambda) {
  VectorXd r = VectorXd::Constant(d + 1, lambda);
  r[d] = 1e-10;  // bias is (almost) unregularized
  return r;
}

}  // namespace

LinearModel LinearModel::fit_regressor(std::span<const FeatureVector> rows,
                                       std::span<const double> targets, double lambda) {
  if (rows.size() != targets.size()) throw TrainingError("rows and targets differ in length");
  auto s = standardize(rows);
  const auto d = s.X.cols() - 1;
  const double n = static_cast<double>(rows.size());
  const VectorXd y = CVec(targets.data(), static_cast<Eigen::Index>(targets.size()));
  MatrixXd A = s.X.transpose() * s.X / n;
  A.diagonal() += regularizer(d, lambda);
  const VectorXd theta = A.ldlt().solve(s.X.transpose() * y / n);
  LinearModel m;
  m.kind_ = Kind::Regressor;
  m.mean_ = s.mean;
  m.scale_ = s.scale;
  m.weights_ = theta.head(d);
  m.bias_ = theta[d];
  return m;
}

LinearModel LinearModel::fit_classifier(std::span<const FeatureVector> rows,
                                        std::span<const int> labels, double lambda) {
  if (rows.size() != labels.size()) throw TrainingError("rows and labels differ in length");
  bool pos = false, neg = false;
  for (int l : labels) {
    pos = pos || l != 0;
    neg = neg || l == 0;
  }
  if (!(pos && neg)) throw TrainingError("degenerate classification data: only one class present");
  auto s = standardize(rows);
  const auto d = s.X.cols() - 1;
  const auto n = s.X.rows();
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = labels[static_cast<std::size_t>(i)] != 0 ? 1.0 : -1.0;
  const VectorXd reg = regularizer(d, lambda);

  // Primal Newton on the L2-regularized squared hinge loss with backtracking.
  auto objective = [&](const VectorXd& th) {
    const VectorXd slack = (1.0 - (y.array() * (s.X * th).array())).max(0.0);
    return slack.squaredNorm() / static_cast<double>(n) + 0.5 * (reg.array() * th.array().square()).sum();
  };
  VectorXd theta = VectorXd::Zero(d + 1);
  for (int iter = 0; iter < 200; ++iter) {
    const VectorXd margin = y.array() * (s.X * theta).array();
    VectorXd grad = reg.cwiseProduct(theta);
    MatrixXd hess = reg.asDiagonal();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double slack = 1.0 - margin[i];
      if (slack <= 0) continue;
      grad -= (2.0 / static_cast<double>(n)) * y[i] * slack * s.X.row(i).transpose();
      hess.noalias() += (2.0 / static_cast<double>(n)) * s.X.row(i).transpose() * s.X.row(i);
    }
    if (grad.norm() < 1e-10) break;
    const VectorXd dir = hess.ldlt().solve(grad);
    const double f0 = objective(theta);
    double t = 1.0;
    VectorXd next = theta - dir;
    while (objective(next) > f0 - 1e-4 * t * grad.dot(dir) && t > 1e-10) {
      t *= 0.5;
      next = theta - t * dir;
    }
    if ((next - theta).norm() < 1e-14) break;
    theta = next;
  }
  LinearModel m;
  m.kind_ = Kind::Classifier;
  m.mean_ = s.mean;
  m.scale_ = s.scale;
  m.weights_ = theta.head(d);
  m.bias_ = theta[d];
  return m;
}

double LinearModel::predict(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) != weights_.size()) {
    throw ContractViolation("linear model input has wrong dimension");
  }
  const CVec v(x.data(), weights_.size());
  return ((v - mean_).cwiseProduct(scale_)).dot(weights_) + bias_;
}

namespace {
std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }
VectorXd from_std(const std::vector<double>& v) {
  return CVec(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

nlohmann::json LinearModel::to_json() const {
  return {{"kind", kind_ == Kind::Classifier ? "classifier" : "regressor"},
          {"mean", to_std(mean_)},
          {"scale", to_std(scale_)},
          {"weights", to_std(weights_)},
          {"bias", bias_}};
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
  LinearModel m;
  m.kind_ = j.at("kind").get<std::string>() == "classifier" ? Kind::Classifier : Kind::Regressor;
  m.mean_ = from_std(j.at("mean").get<std::vector<double>>());
  m.scale_ = from_std(j.at("scale").get<std::vector<double>>());
  m.weights_ = from_std(j.at("weights").get<std::vector<double>>());
  m.bias_ = j.at("bias").get<double>();
  if (m.mean_.size() != m.weights_.size() || m.scale_.size() != m.weights_.size()) {
    throw DataError("linear model blocks have inconsistent sizes");
  }
  return m;
}

bool LinearModel::operator==(const LinearModel& o) const {
  return kind_ == o.kind_ && mean_ == o.mean_ && scale_ == o.scale_ && weights_ == o.weights_ &&
         bias_ == o.bias_;
}

// ---------------------------------------------------------------------------------------------
// Model files

void ModelFile::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "persuasion-model";
  j["version"] = kVersion;
  j["task"] = task;
  j["mode"] = std::string(to_string(mode));
  j["manifest_hash"] = manifest_hash;
  j["config"] = config;
  j["report"] = report;
  if (recurrent) {
    const auto& s = recurrent->shape();
    j["architecture"] = "recurrent";
    j["shape"] = {{"sg_dim", s.sg_dim}, {"hc_dim", s.hc_dim}, {"hc_proj", s.hc_proj},
                  {"hidden", s.hidden}};
    j["params"] = std::vector<double>(recurrent->params().begin(), recurrent->params().end());
  } else if (linear) {
    j["architecture"] = "linear";
    j["linear"] = linear->to_json();
  } else {
    throw ContractViolation("model file without parameters");
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write model file " + path.string());
  out << j.dump() << '\n';
}

ModelFile ModelFile::load(const std::filesystem::path& path, const FeatureManifest& manifest) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file " + path.string());
  ModelFile m;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "persuasion-model") throw DataError(path.string() + ": not a model file");
    if (j.at("version").get<int>() != kVersion) {
      throw DataError(path.string() + ": unsupported model version");
    }
    m.task = j.at("task").get<std::string>();
    m.mode = parse_feature_mode(j.at("mode").get<std::string>());
    m.manifest_hash = j.at("manifest_hash").get<std::string>();
    m.config = j.value("config", nlohmann::json::object());
    m.report = j.value("report", nlohmann::json::object());
    const auto arch = j.at("architecture").get<std::string>();
    if (arch == "recurrent") {
      const auto& s = j.at("shape");
      NetShape shape{s.at("sg_dim").get<std::size_t>(), s.at("hc_dim").get<std::size_t>(),
                     s.at("hc_proj").get<std::size_t>(), s.at("hidden").get<std::size_t>()};
      RecurrentNet net(shape);
      const auto params = j.at("params").get<std::vector<double>>();
      if (params.size() != net.params().size()) throw DataError(path.string() + ": bad param count");
      std::copy(params.begin(), params.end(), net.params().begin());
      m.recurrent = std::move(net);
    } else if (arch == "linear") {
      m.linear = LinearModel::from_json(j.at("linear"));
    } else {
      throw DataError(path.string() + ": unknown architecture " + arch);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (m.mode == FeatureMode::Textual && m.manifest_hash != manifest.hash_hex()) {
    throw ConfigError(path.string() + ": trained with feature manifest " + m.manifest_hash +
                      ", current manifest is " + manifest.hash_hex());
  }
  return m;
}

}  // namespace persuasion
