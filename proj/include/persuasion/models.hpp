#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "persuasion/dataset.hpp"
#include "persuasion/features.hpp"
#include "persuasion/game.hpp"
#include "persuasion/neural.hpp"

namespace persuasion {

// Accept rate of the human training games; used by EWG and as the HP prior at trial 1.
inline constexpr double kTrainAcceptRate = 0.72;

class DmmInterface {
 public:
  virtual ~DmmInterface() = default;
  // Probability that the DM accepts `hotel` after seeing review `review_index`.
  virtual double accept_probability(const GameState& state, const Hotel& hotel,
                                    std::size_t review_index) const = 0;
  virtual std::string name() const = 0;
};

class VmInterface {
 public:
  virtual ~VmInterface() = default;
  // Expected number of accepts from the current trial to the end, clamped to
  // [0, remaining_trials].
  double predict_future_payoff(const GameState& state, const Hotel& hotel,
                               std::size_t review_index) const;
  virtual double raw_future_payoff(const GameState& state, const Hotel& hotel,
                                   std::size_t review_index) const = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------------------------
// Baselines

class ConstantDmm final : public DmmInterface {
 public:
  explicit ConstantDmm(double p, std::string name = "dmm.ewg");
  double accept_probability(const GameState&, const Hotel&, std::size_t) const override { return p_; }
  std::string name() const override { return name_; }

 private:
  double p_;
  std::string name_;
};

// Accepts iff at least half of the previous hotels were accepted (vacuously true at trial 1).
Decision dmm_pd(const GameState& state);

class PdDmm final : public DmmInterface {
 public:
  double accept_probability(const GameState& state, const Hotel&, std::size_t) const override {
    return dmm_pd(state) == Decision::Accept ? 1.0 : 0.0;
  }
  std::string name() const override { return "dmm.pd"; }
};

// Wraps an arbitrary function; used for scripted and tabular decision makers.
class FunctionDmm final : public DmmInterface {
 public:
  using Fn = std::function<double(const GameState&, const Hotel&, std::size_t)>;
  FunctionDmm(Fn fn, std::string name) : fn_(std::move(fn)), name_(std::move(name)) {}
  double accept_probability(const GameState& s, const Hotel& h, std::size_t r) const override {
    return fn_(s, h, r);
  }
  std::string name() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

// 11 - t: every remaining trial accepted.
double vm_mfo(const GameState& state);
// Past accept rate times remaining trials; the training prior at trial 1.
double vm_hp(const GameState& state, double prior = kTrainAcceptRate);

class MfoVm final : public VmInterface {
 public:
  double raw_future_payoff(const GameState& s, const Hotel&, std::size_t) const override {
    return vm_mfo(s);
  }
  std::string name() const override { return "vm.mfo"; }
};

class HpVm final : public VmInterface {
 public:
  explicit HpVm(double prior = kTrainAcceptRate) : prior_(prior) {}
  double raw_future_payoff(const GameState& s, const Hotel&, std::size_t) const override {
    return vm_hp(s, prior_);
  }
  std::string name() const override { return "vm.hp"; }

 private:
  double prior_;
};

// Mean future payoff per trial index over training logs. Index 0 is trial 1.
struct AvTable {
  std::vector<double> by_trial;

  static AvTable build(std::span<const GameLog> logs);  // throws DataError when empty
  double at(int trial) const;
  void save(const std::filesystem::path& path) const;
  static AvTable load(const std::filesystem::path& path);
};

class AvVm final : public VmInterface {
 public:
  explicit AvVm(AvTable table) : table_(std::move(table)) {}
  double raw_future_payoff(const GameState& s, const Hotel&, std::size_t) const override {
    return table_.at(s.current_trial());
  }
  std::string name() const override { return "vm.av"; }

 private:
  AvTable table_;
};

class FunctionVm final : public VmInterface {
 public:
  using Fn = std::function<double(const GameState&, const Hotel&, std::size_t)>;
  FunctionVm(Fn fn, std::string name) : fn_(std::move(fn)), name_(std::move(name)) {}
  double raw_future_payoff(const GameState& s, const Hotel& h, std::size_t r) const override {
    return fn_(s, h, r);
  }
  std::string name() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

// ---------------------------------------------------------------------------------------------
// Learned models

// Last-step output of a recurrent net over (history, candidate). Carries for history prefixes
// are cached per thread, so the many evaluations sharing a prefix during search only pay for
// the new steps.
class RecurrentEvaluator {
 public:
  RecurrentEvaluator(RecurrentNet net, FeatureEncoder encoder);
  double output(const GameState& state, const Hotel& hotel, std::size_t review_index) const;
  const RecurrentNet& net() const { return net_; }
  const FeatureEncoder& encoder() const { return encoder_; }

 private:
  RecurrentNet net_;
  FeatureEncoder encoder_;
  std::uint64_t id_;
};

class RecurrentDmm final : public DmmInterface {
 public:
  RecurrentDmm(RecurrentNet net, FeatureEncoder encoder, std::string name);
  double accept_probability(const GameState& s, const Hotel& h, std::size_t r) const override {
    return sigmoid(eval_.output(s, h, r));
  }
  std::string name() const override { return name_; }

 private:
  RecurrentEvaluator eval_;
  std::string name_;
};

class RecurrentVm final : public VmInterface {
 public:
  RecurrentVm(RecurrentNet net, FeatureEncoder encoder, std::string name);
  double raw_future_payoff(const GameState& s, const Hotel& h, std::size_t r) const override {
    return eval_.output(s, h, r);
  }
  std::string name() const override { return name_; }

 private:
  RecurrentEvaluator eval_;
  std::string name_;
};

// The squared-hinge margin estimates 2p - 1, so p = (margin + 1) / 2 clamped to [0, 1].
class LinearDmm final : public DmmInterface {
 public:
  LinearDmm(LinearModel model, FeatureEncoder encoder, std::string name);
  double accept_probability(const GameState& s, const Hotel& h, std::size_t r) const override;
  std::string name() const override { return name_; }

 private:
  LinearModel model_;
  FeatureEncoder encoder_;
  std::string name_;
};

class LinearVm final : public VmInterface {
 public:
  LinearVm(LinearModel model, FeatureEncoder encoder, std::string name);
  double raw_future_payoff(const GameState& s, const Hotel& h, std::size_t r) const override;
  std::string name() const override { return name_; }

 private:
  LinearModel model_;
  FeatureEncoder encoder_;
  std::string name_;
};

// ---------------------------------------------------------------------------------------------
// Simulated decision makers

inline constexpr double kMaxAlpha = 0.2;

class SimulatedDm {
 public:
  // Throws ConfigError for |alpha| > 0.2.
  SimulatedDm(std::shared_ptr<const DmmInterface> base, double alpha);

  double effective_probability(const GameState& s, const Hotel& h, std::size_t r) const;
  Decision decide(const GameState& s, const Hotel& h, std::size_t r, Rng& rng) const;
  double alpha() const { return alpha_; }
  const DmmInterface& base() const { return *base_; }
  std::string name() const;

 private:
  std::shared_ptr<const DmmInterface> base_;
  double alpha_;
};

// ---------------------------------------------------------------------------------------------
// Registry

// Resolves role names ("dmm.hc-lstm", "vm.linear", ...) to models. Built-in baselines are
// always present; trained models come from a manifest file
//   {"version": 1, "models": {"dmm.hc-lstm": "dmm_hc_lstm.json", "vm.av": "av.json", ...}}
// with paths relative to the manifest. Files are loaded on first use.
class ModelRegistry {
 public:
  explicit ModelRegistry(std::shared_ptr<const HotelCatalog> catalog);
  static ModelRegistry load(const std::filesystem::path& manifest,
                            std::shared_ptr<const HotelCatalog> catalog);

  void bind(const std::string& role, const std::filesystem::path& file);
  void add(const std::string& role, std::shared_ptr<const DmmInterface> dmm);
  void add(const std::string& role, std::shared_ptr<const VmInterface> vm);

  // Throw ConfigError for unknown roles or files of the wrong task.
  std::shared_ptr<const DmmInterface> dmm(const std::string& role) const;
  std::shared_ptr<const VmInterface> vm(const std::string& role) const;
  bool has(const std::string& role) const;
  std::vector<std::string> roles() const;
  const std::shared_ptr<const HotelCatalog>& catalog() const { return catalog_; }

  void save_manifest(const std::filesystem::path& path) const;

 private:
  std::shared_ptr<const HotelCatalog> catalog_;
  std::map<std::string, std::filesystem::path> files_;
  mutable std::map<std::string, std::shared_ptr<const DmmInterface>> dmms_;
  mutable std::map<std::string, std::shared_ptr<const VmInterface>> vms_;
  mutable std::shared_ptr<std::mutex> mu_ = std::make_shared<std::mutex>();
};

// Wraps a loaded model file as a DMM or VM over `catalog`.
std::shared_ptr<const DmmInterface> make_dmm(const ModelFile& file,
                                             std::shared_ptr<const HotelCatalog> catalog,
                                             const std::string& name);
std::shared_ptr<const VmInterface> make_vm(const ModelFile& file,
                                           std::shared_ptr<const HotelCatalog> catalog,
                                           const std::string& name);

}  // namespace persuasion
