#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "persuasion/features.hpp"
#include "persuasion/game.hpp"
#include "persuasion/mcts.hpp"
#include "persuasion/models.hpp"

namespace persuasion {

class Expert {
 public:
  virtual ~Expert() = default;
  // Index of the review to reveal; always < hotel.size().
  virtual std::size_t choose_review(const GameState& state, const Hotel& hotel, Rng& rng) const = 0;
  virtual std::string name() const = 0;

  const std::string& choose_review_id(const GameState& state, const Hotel& hotel, Rng& rng) const {
    return hotel.review(choose_review(state, hotel, rng)).id;
  }
};

// Review selection by score. Ties in score go to the lower index.
std::size_t highest_review(const Hotel& hotel);
std::size_t lowest_review(const Hotel& hotel);
// Lowest-index review carrying the median score (the 4th highest of 7).
std::size_t median_review(const Hotel& hotel);
// Indices ordered by (score desc, index asc).
std::vector<std::size_t> ranked_reviews(const Hotel& hotel);

// 0 before the first rejection, 1 after one, 2 after two or more.
int a_liar_phase(const GameState& state);

class RandomExpert final : public Expert {
 public:
  std::size_t choose_review(const GameState&, const Hotel& hotel, Rng& rng) const override;
  std::string name() const override { return "rand"; }
};

class MedianExpert final : public Expert {
 public:
  std::size_t choose_review(const GameState&, const Hotel& hotel, Rng&) const override {
    return median_review(hotel);
  }
  std::string name() const override { return "median"; }
};

class HighestExpert final : public Expert {
 public:
  std::size_t choose_review(const GameState&, const Hotel& hotel, Rng&) const override {
    return highest_review(hotel);
  }
  std::string name() const override { return "highest"; }
};

// Highest review for hotels averaging at least 8, otherwise the lowest.
class ExtremistExpert final : public Expert {
 public:
  std::size_t choose_review(const GameState&, const Hotel& hotel, Rng&) const override;
  std::string name() const override { return "extremist"; }
};

// Highest review until the first rejection, then uniformly the 2nd or 3rd ranked, and the
// median from the second rejection on.
class ALiarExpert final : public Expert {
 public:
  std::size_t choose_review(const GameState& state, const Hotel& hotel, Rng& rng) const override;
  std::string name() const override { return "a-liar"; }
};

// Cosine similarity of each candidate's HC bits to the mean HC vector of the reviews revealed
// in accepted trials. Uniform while nothing has been accepted.
class PtdHcExpert final : public Expert {
 public:
  explicit PtdHcExpert(std::shared_ptr<const HotelCatalog> catalog);
  std::size_t choose_review(const GameState& state, const Hotel& hotel, Rng& rng) const override;
  std::string name() const override { return "ptd-hc"; }

 private:
  std::shared_ptr<const HotelCatalog> catalog_;
};

// Samples a review with probability proportional to its VM value (or softmax of it).
class VmSamplingExpert final : public Expert {
 public:
  VmSamplingExpert(std::shared_ptr<const VmInterface> vm, bool softmax = false);
  std::vector<double> probabilities(const GameState& state, const Hotel& hotel) const;
  std::size_t choose_review(const GameState& state, const Hotel& hotel, Rng& rng) const override;
  std::string name() const override { return softmax_ ? "vm-softmax" : "vm-sm"; }

 private:
  std::shared_ptr<const VmInterface> vm_;
  bool softmax_;
};

// MCTS expert. Future hotels are drawn from `pool`.
class AeExpert final : public Expert {
 public:
  AeExpert(std::string name, std::shared_ptr<const DmmInterface> dmm,
           std::shared_ptr<const VmInterface> vm, std::shared_ptr<const std::vector<Hotel>> pool,
           SearchConfig config);
  std::size_t choose_review(const GameState& state, const Hotel& hotel, Rng& rng) const override;
  SearchResult search_review(const GameState& state, const Hotel& hotel, Rng& rng) const;
  std::string name() const override { return name_; }
  const DmmInterface& dmm() const { return *dmm_; }
  const VmInterface& vm() const { return *vm_; }

 private:
  std::string name_;
  std::shared_ptr<const DmmInterface> dmm_;
  std::shared_ptr<const VmInterface> vm_;
  std::shared_ptr<const std::vector<Hotel>> pool_;
  std::vector<const Hotel*> pool_ptrs_;
  SearchConfig config_;
};

struct AeBinding {
  std::string dmm;
  std::string vm;
};

struct ExpertOptions {
  SearchConfig search;
  std::string vm_sm_role = "vm.hc-lstm";
  bool vm_sm_softmax = false;
  std::map<std::string, AeBinding> ae_bindings = default_ae_bindings();

  static std::map<std::string, AeBinding> default_ae_bindings();
};

// Names: rand, median, highest, extremist, a-liar, ptd-hc, vm-sm and the AE variants in
// options.ae_bindings (ae, ae-dm2, ae-vm2, ae-sg). Unknown names throw ConfigError.
std::shared_ptr<const Expert> make_expert(const std::string& name, const ModelRegistry& models,
                                          std::shared_ptr<const std::vector<Hotel>> pool,
                                          const ExpertOptions& options = {});
std::vector<std::string> expert_names(const ExpertOptions& options = {});

}  // namespace persuasion
