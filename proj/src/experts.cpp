#include "persuasion/experts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "persuasion/errors.hpp"

namespace persuasion {

std::vector<std::size_t> ranked_reviews(const Hotel& hotel) {
  std::vector<std::size_t> idx(hotel.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return hotel.review(a).score > hotel.review(b).score;
  });
  return idx;
}

std::size_t highest_review(const Hotel& hotel) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < hotel.size(); ++i) {
    if (hotel.review(i).score > hotel.review(best).score) best = i;
  }
  return best;
}

std::size_t lowest_review(const Hotel& hotel) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < hotel.size(); ++i) {
    if (hotel.review(i).score < hotel.review(best).score) best = i;
  }
  return best;
}

std::size_t median_review(const Hotel& hotel) {
  const auto ranked = ranked_reviews(hotel);
  const double median = hotel.review(ranked[hotel.size() / 2]).score;
  for (std::size_t i = 0; i < hotel.size(); ++i) {
    if (hotel.review(i).score == median) return i;
  }
  return ranked[hotel.size() / 2];
}

int a_liar_phase(const GameState& state) { return std::min(state.rejected_count(), 2); }

std::size_t RandomExpert::choose_review(const GameState&, const Hotel& hotel, Rng& rng) const {
  return uniform_index(rng, hotel.size());
}

std::size_t ExtremistExpert::choose_review(const GameState&, const Hotel& hotel, Rng&) const {
  return hotel.avg_score() >= 8.0 ? highest_review(hotel) : lowest_review(hotel);
}

std::size_t ALiarExpert::choose_review(const GameState& state, const Hotel& hotel, Rng& rng) const {
  switch (a_liar_phase(state)) {
    case 0:
      return highest_review(hotel);
    case 1: {
      const auto ranked = ranked_reviews(hotel);
      if (ranked.size() < 3) return ranked.back();
      return ranked[1 + uniform_index(rng, 2)];
    }
    default:
      return median_review(hotel);
  }
}

PtdHcExpert::PtdHcExpert(std::shared_ptr<const HotelCatalog> catalog) : catalog_(std::move(catalog)) {
  if (!catalog_) throw ConfigError("ptd-hc needs a hotel catalog");
}

std::size_t PtdHcExpert::choose_review(const GameState& state, const Hotel& hotel, Rng& rng) const {
  std::vector<double> mean(kHcDim, 0.0);
  std::size_t accepted = 0;
  for (const auto& r : state.completed()) {
    if (r.decision != Decision::Accept) continue;
    const HcFeatures* bits = catalog_->hc_of_review(r.hotel_id, r.revealed_review_id);
    if (!bits) throw ConfigError("ptd-hc: review " + r.revealed_review_id + " is not in the catalog");
    for (std::size_t k = 0; k < kHcDim; ++k) mean[k] += (*bits)[k];
    ++accepted;
  }
  if (accepted == 0) return uniform_index(rng, hotel.size());
  double mean_norm = 0;
  for (auto& m : mean) {
    m /= static_cast<double>(accepted);
    mean_norm += m * m;
  }
  mean_norm = std::sqrt(mean_norm);
  std::size_t best = 0;
  double best_sim = -1.0;
  for (std::size_t i = 0; i < hotel.size(); ++i) {
    const HcFeatures bits = catalog_->hc_for(hotel, i);
    double dot = 0;
    for (std::size_t k = 0; k < kHcDim; ++k) dot += bits[k] ? mean[k] : 0.0;
    const double norm = std::sqrt(static_cast<double>(bits.count()));
    const double sim = norm == 0 || mean_norm == 0 ? 0.0 : dot / (norm * mean_norm);
    if (sim > best_sim) {
      best_sim = sim;
      best = i;
    }
  }
  return best;
}

VmSamplingExpert::VmSamplingExpert(std::shared_ptr<const VmInterface> vm, bool softmax)
    : vm_(std::move(vm)), softmax_(softmax) {
  if (!vm_) throw ConfigError("vm-sm needs a value model");
}

std::vector<double> VmSamplingExpert::probabilities(const GameState& state, const Hotel& hotel) const {
  std::vector<double> w(hotel.size());
  for (std::size_t i = 0; i < hotel.size(); ++i) w[i] = vm_->predict_future_payoff(state, hotel, i);
  if (softmax_) {
    const double m = *std::max_element(w.begin(), w.end());
    for (auto& x : w) x = std::exp(x - m);
  }
  double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total <= 0) {
    std::fill(w.begin(), w.end(), 1.0);
    total = static_cast<double>(w.size());
  }
  for (auto& x : w) x /= total;
  return w;
}

std::size_t VmSamplingExpert::choose_review(const GameState& state, const Hotel& hotel, Rng& rng) const {
  const auto p = probabilities(state, hotel);
  const double u = uniform01(rng);
  double acc = 0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    acc += p[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

AeExpert::AeExpert(std::string name, std::shared_ptr<const DmmInterface> dmm,
                   std::shared_ptr<const VmInterface> vm,
                   std::shared_ptr<const std::vector<Hotel>> pool, SearchConfig config)
    : name_(std::move(name)), dmm_(std::move(dmm)), vm_(std::move(vm)), pool_(std::move(pool)),
      config_(config) {
  if (!dmm_ || !vm_) throw ConfigError(name_ + " needs a DMM and a VM");
  if (!pool_) throw ConfigError(name_ + " needs a hotel pool");
  config_.budget.validate();
  for (const auto& h : *pool_) pool_ptrs_.push_back(&h);
}

SearchResult AeExpert::search_review(const GameState& state, const Hotel& hotel, Rng& rng) const {
  return search(state, hotel, *dmm_, *vm_, pool_ptrs_, config_, rng);
}

std::size_t AeExpert::choose_review(const GameState& state, const Hotel& hotel, Rng& rng) const {
  return search_review(state, hotel, rng).best_review;
}

std::map<std::string, AeBinding> ExpertOptions::default_ae_bindings() {
  return {{"ae", {"dmm.hc-lstm", "vm.hc-lstm"}},
          {"ae-dm2", {"dmm.linear", "vm.hc-lstm"}},
          {"ae-vm2", {"dmm.hc-lstm", "vm.linear"}},
          {"ae-sg", {"dmm.sg-lstm", "vm.sg-lstm"}}};
}

std::shared_ptr<const Expert> make_expert(const std::string& name, const ModelRegistry& models,
                                          std::shared_ptr<const std::vector<Hotel>> pool,
                                          const ExpertOptions& options) {
  if (name == "rand") return std::make_shared<RandomExpert>();
  if (name == "median") return std::make_shared<MedianExpert>();
  if (name == "highest") return std::make_shared<HighestExpert>();
  if (name == "extremist") return std::make_shared<ExtremistExpert>();
  if (name == "a-liar") return std::make_shared<ALiarExpert>();
  if (name == "ptd-hc") return std::make_shared<PtdHcExpert>(models.catalog());
  if (name == "vm-sm") {
    return std::make_shared<VmSamplingExpert>(models.vm(options.vm_sm_role), options.vm_sm_softmax);
  }
  if (auto it = options.ae_bindings.find(name); it != options.ae_bindings.end()) {
    return std::make_shared<AeExpert>(name, models.dmm(it->second.dmm), models.vm(it->second.vm),
                                      std::move(pool), options.search);
  }
  throw ConfigError("unknown expert '" + name + "'");
}

std::vector<std::string> expert_names(const ExpertOptions& options) {
  std::vector<std::string> names{"rand", "median", "highest", "extremist", "a-liar", "ptd-hc", "vm-sm"};
  for (const auto& [n, b] : options.ae_bindings) names.push_back(n);
  return names;
}

}  // namespace persuasion
