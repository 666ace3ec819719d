#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "persuasion/features.hpp"
#include "persuasion/random.hpp"

namespace persuasion {

enum class LossKind { BinaryCrossEntropy, MeanSquaredError };

std::string_view to_string(LossKind k);
LossKind parse_loss(std::string_view s);

inline double sigmoid(double x) {
  // Clamped so the result stays strictly inside (0, 1) in double precision.
  if (x > 36.0) x = 36.0;
  if (x < -36.0) x = -36.0;
  return 1.0 / (1.0 + std::exp(-x));
}

// Input layout: the first `sg_dim` entries are continuous game features, the next `hc_dim`
// are binary text features. The binary block goes through a sigmoid-squashed projection of
// width `hc_proj` before being concatenated with the game features.
struct NetShape {
  std::size_t sg_dim = kSgDim;
  std::size_t hc_dim = kHcDim;
  std::size_t hc_proj = 16;
  std::size_t hidden = 64;

  std::size_t input_dim() const { return sg_dim + hc_dim; }
  std::size_t lstm_input_dim() const { return sg_dim + (hc_dim > 0 ? hc_proj : 0); }
  std::size_t param_count() const;
  bool operator==(const NetShape&) const = default;
};

// Single-layer unidirectional LSTM with a scalar linear readout per timestep. All parameters
// live in one flat vector so optimizers and finite-difference checks can treat them uniformly.
// Blocks in order: hc projection weights and bias, gate weights (4H x (in + H), gates stacked
// input/forget/output/candidate) and gate bias, readout weights and bias.
class RecurrentNet {
 public:
  struct Offsets {
    std::size_t proj_w, proj_b, gate_w, gate_b, out_w, out_b, end;
  };

  // Per-sequence recurrent state for incremental evaluation.
  struct Carry {
    Eigen::VectorXd h;
    Eigen::VectorXd c;
  };

  RecurrentNet() = default;
  explicit RecurrentNet(NetShape shape);  // all parameters zero
  static RecurrentNet random(NetShape shape, Rng& rng);

  const NetShape& shape() const { return shape_; }
  const Offsets& offsets() const { return off_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // One pre-activation output per timestep, dropout off. Throws ContractViolation on a
  // dimension mismatch.
  std::vector<double> forward(std::span<const FeatureVector> sequence) const;

  Carry initial_carry() const;
  // Advances `carry` by one input and returns that step's output.
  double step(Carry& carry, std::span<const double> x) const;

  // Summed loss over the sequence; gradient w.r.t. every parameter is *added* to `grad`.
  // With dropout > 0 the mask on the LSTM input is drawn from `mask_seed`, so repeated calls
  // with the same seed see the same mask. Throws TrainingError on a non-finite loss.
  double loss_and_gradient(std::span<const FeatureVector> sequence,
                           std::span<const double> targets, LossKind loss, double loss_weight,
                           std::span<double> grad, double dropout = 0.0,
                           std::uint64_t mask_seed = 0) const;
  double loss(std::span<const FeatureVector> sequence, std::span<const double> targets,
              LossKind loss, double loss_weight = 1.0, double dropout = 0.0,
              std::uint64_t mask_seed = 0) const;

  bool all_finite() const;
  bool operator==(const RecurrentNet& o) const {
    return shape_ == o.shape_ && params_ == o.params_;
  }

 private:
  void check_input(std::span<const double> x) const;

  NetShape shape_{};
  Offsets off_{};
  std::vector<double> params_;
};

// Adagrad: per-parameter learning rates from accumulated squared gradients.
class Adagrad {
 public:
  Adagrad(std::size_t n, double learning_rate = 0.05, double epsilon = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  std::span<const double> accumulators() const { return accum_; }
  double learning_rate() const { return lr_; }
  double epsilon() const { return eps_; }

 private:
  std::vector<double> accum_;
  double lr_;
  double eps_;
};

struct Sample {
  std::vector<FeatureVector> inputs;
  std::vector<double> targets;
};

struct HyperParams {
  std::size_t hidden = 64;
  std::size_t batch = 10;
  double dropout = 0.3;
  bool operator==(const HyperParams&) const = default;
};

struct TrainingConfig {
  LossKind loss = LossKind::BinaryCrossEntropy;
  std::vector<std::size_t> hidden_sizes{64, 128, 256};
  std::vector<std::size_t> batch_sizes{5, 10, 15, 20, 25};
  std::vector<double> dropouts{0.3, 0.4, 0.5, 0.6};
  int max_epochs = 100;
  int patience = 10;
  int folds = 5;
  std::size_t hc_projection = 16;
  double learning_rate = 0.05;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

struct GridPoint {
  HyperParams hyper;
  // Mean over folds: reject-class F1 for classification, MSE for regression.
  double cv_score = 0.0;
  double mean_best_epoch = 0.0;
};

struct TrainingReport {
  HyperParams selected;
  std::vector<GridPoint> grid;
  int final_epochs = 0;
  std::vector<double> epoch_loss;  // final fit, mean loss per sequence

  nlohmann::json to_json() const;
};

struct TrainedNet {
  RecurrentNet net;
  TrainingReport report;
};

// Fits a fixed hyperparameter setting for `epochs` epochs (no validation).
RecurrentNet fit_recurrent(std::span<const Sample> data, NetShape shape, const HyperParams& hp,
                           const TrainingConfig& cfg, int epochs, std::uint64_t seed,
                           std::vector<double>* epoch_loss = nullptr);

// Grid search with k-fold cross validation and patience-based early stopping, then a final
// fit on all data for the mean best epoch count of the selected setting.
TrainedNet train_recurrent(std::span<const Sample> data, const TrainingConfig& cfg,
                           std::size_t sg_dim, std::size_t hc_dim);

// Binary metrics over flattened per-step predictions (positive class = 1 = accept).
struct BinaryMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double f1_positive = 0.0;
  double f1_negative = 0.0;
};
BinaryMetrics binary_metrics(std::span<const int> truth, std::span<const int> predicted);

// Regularized linear model on per-trial vectors: squared-hinge classifier or ridge regressor.
// Inputs are standardized with statistics from the training rows.
class LinearModel {
 public:
  enum class Kind { Classifier, Regressor };

  static LinearModel fit_classifier(std::span<const FeatureVector> rows,
                                    std::span<const int> labels, double lambda = 1e-3);
  static LinearModel fit_regressor(std::span<const FeatureVector> rows,
                                   std::span<const double> targets, double lambda = 1e-3);

  // Signed margin for classifiers, prediction for regressors.
  double predict(std::span<const double> x) const;
  Kind kind() const { return kind_; }
  std::size_t dim() const { return static_cast<std::size_t>(weights_.size()); }

  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);
  bool operator==(const LinearModel& o) const;

 private:
  Kind kind_ = Kind::Classifier;
  Eigen::VectorXd mean_, scale_, weights_;
  double bias_ = 0.0;
};

// On-disk model: parameters plus everything needed to refuse an incompatible feature setup.
struct ModelFile {
  static constexpr int kVersion = 1;

  std::string task;  // dmm | vm
  FeatureMode mode = FeatureMode::Textual;
  std::string manifest_hash;
  nlohmann::json config;
  nlohmann::json report;
  std::optional<RecurrentNet> recurrent;
  std::optional<LinearModel> linear;

  void save(const std::filesystem::path& path) const;
  // Throws ConfigError if the file was trained against a different feature manifest.
  static ModelFile load(const std::filesystem::path& path, const FeatureManifest& manifest);
};

}  // namespace persuasion
