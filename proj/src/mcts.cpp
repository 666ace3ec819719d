#include "persuasion/mcts.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <tuple>
#include <unordered_set>

#include "persuasion/errors.hpp"

namespace persuasion {

double uct_score(double q, std::size_t n_action, std::size_t n_total, double c) {
  if (n_action == 0) return std::numeric_limits<double>::infinity();
  if (n_total < 1) throw ContractViolation("uct_score needs n_total >= 1");
  return q + c * std::sqrt(std::log(static_cast<double>(n_total)) / static_cast<double>(n_action));
}

void SearchBudget::validate() const {
  if (!iterations && !time_limit) throw ConfigError("search budget needs an iteration or time bound");
  if (iterations && *iterations == 0) throw ConfigError("search iteration budget must be positive");
  if (time_limit && time_limit->count() <= 0) throw ConfigError("search time limit must be positive");
}

nlohmann::json SearchDiagnostics::to_json() const {
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : actions) {
    acts.push_back({{"review_index", a.review_index},
                    {"review_id", a.review_id},
                    {"n", a.n},
                    {"q", a.q},
                    {"vm_seed", a.vm_seed}});
  }
  return {{"iterations", iterations}, {"nodes", nodes}, {"elapsed_ms", elapsed_ms}, {"actions", acts}};
}

namespace {

struct Node {
  std::vector<ActionStats> actions;
  std::vector<double> seed;
  std::size_t total = 0;
  // (review, decision, lottery score, next hotel)
  std::map<std::tuple<std::size_t, int, double, const Hotel*>, std::unique_ptr<Node>> children;
};

class Searcher {
 public:
  Searcher(const GameState& root, const Hotel& current, const DmmInterface& dmm,
           const VmInterface& vm, std::span<const Hotel* const> pool, const SearchConfig& cfg,
           Rng& rng)
      : current_(current), dmm_(dmm), vm_(vm), cfg_(cfg), rng_(rng),
        state_(std::vector<std::string>{}, root.horizon()), root_remaining_(root.remaining_trials()) {
    for (const auto& r : root.completed()) state_.append(r);
    std::unordered_set<std::string> played{current.id()};
    for (const auto& r : root.completed()) played.insert(r.hotel_id);
    for (const Hotel* h : pool) {
      if (h && !played.count(h->id())) available_.push_back(h);
    }
    if (root_remaining_ > 1 && available_.empty()) {
      throw ConfigError("hotel pool has no unplayed hotels for the remaining trials");
    }
    expand(root_, current_);
  }

  void iterate() {
    determinize();
    Node* node = &root_;
    const Hotel* hotel = &current_;
    std::size_t depth = 0;
    path_.clear();
    accepts_.clear();
    bool expanded = false;
    while (true) {
      const std::size_t a = select(*node);
      const Decision d = bernoulli(rng_, dmm_.accept_probability(state_, *hotel, a))
                             ? Decision::Accept : Decision::Reject;
      const double lottery = hotel->review(uniform_index(rng_, hotel->size())).score;
      state_.append(make_record(*hotel, a, d, lottery, state_.current_trial()));
      path_.emplace_back(node, a);
      accepts_.push_back(d == Decision::Accept ? 1 : 0);
      if (state_.terminal()) break;
      const Hotel* next = future_[depth++];
      auto& child = node->children[{a, static_cast<int>(d), lottery, next}];
      if (!child) {
        child = std::make_unique<Node>();
        expand(*child, *next);
        ++nodes_;
        expanded = true;
        node = child.get();
        hotel = next;
        break;
      }
      node = child.get();
      hotel = next;
    }
    // Rollout from the freshly expanded node: uniformly random reviews to the end.
    int rollout = 0, rollout_steps = 0;
    if (expanded) {
      std::size_t idx = depth - 1;
      while (!state_.terminal()) {
        const Hotel& h = *future_[idx++];
        const std::size_t r = uniform_index(rng_, h.size());
        const bool acc = bernoulli(rng_, dmm_.accept_probability(state_, h, r));
        const double lottery = h.review(uniform_index(rng_, h.size())).score;
        state_.append(make_record(h, r, acc ? Decision::Accept : Decision::Reject, lottery,
                                  state_.current_trial()));
        rollout += acc;
        ++rollout_steps;
      }
    }
    int suffix = rollout;
    for (std::size_t k = path_.size(); k-- > 0;) {
      suffix += accepts_[k];
      const double remaining = static_cast<double>(root_remaining_ - static_cast<int>(k));
      auto [n, a] = path_[k];
      n->actions[a].backup(static_cast<double>(suffix) / remaining);
      ++n->total;
    }
    for (int i = 0; i < rollout_steps + static_cast<int>(path_.size()); ++i) state_.pop_back();
  }

  SearchResult result(std::size_t iterations, double elapsed_ms) const {
    SearchResult res;
    std::size_t best = 0;
    for (std::size_t a = 1; a < root_.actions.size(); ++a) {
      const auto& x = root_.actions[a];
      const auto& b = root_.actions[best];
      if (x.n > b.n || (x.n == b.n && x.q > b.q)) best = a;
    }
    res.best_review = best;
    res.root_value = root_.actions[best].q;
    res.diagnostics.iterations = iterations;
    res.diagnostics.nodes = nodes_;
    res.diagnostics.elapsed_ms = elapsed_ms;
    for (std::size_t a = 0; a < root_.actions.size(); ++a) {
      res.diagnostics.actions.push_back(
          {a, current_.review(a).id, root_.actions[a].n, root_.actions[a].q, root_.seed[a]});
    }
    return res;
  }

 private:
  void expand(Node& node, const Hotel& hotel) {
    const double remaining = state_.remaining_trials();
    node.actions.resize(hotel.size());
    node.seed.resize(hotel.size());
    for (std::size_t a = 0; a < hotel.size(); ++a) {
      const double v = vm_.predict_future_payoff(state_, hotel, a) / remaining;
      node.seed[a] = v;
      node.actions[a] = {1, v};
    }
    node.total = hotel.size();
  }

  std::size_t select(const Node& node) const {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < node.actions.size(); ++a) {
      const double s = uct_score(node.actions[a].q, node.actions[a].n, node.total, cfg_.c);
      if (s > best_score) {
        best_score = s;
        best = a;
      }
    }
    return best;
  }

  void determinize() {
    const std::size_t need = root_remaining_ > 1 ? static_cast<std::size_t>(root_remaining_ - 1) : 0;
    future_.clear();
    while (future_.size() < need) {
      // Partial Fisher-Yates; a pool smaller than the horizon is reshuffled and reused.
      const std::size_t take = std::min(need - future_.size(), available_.size());
      for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + uniform_index(rng_, available_.size() - i);
        std::swap(available_[i], available_[j]);
        future_.push_back(available_[i]);
      }
    }
  }

  const Hotel& current_;
  const DmmInterface& dmm_;
  const VmInterface& vm_;
  const SearchConfig& cfg_;
  Rng& rng_;
  GameState state_;
  int root_remaining_;
  std::vector<const Hotel*> available_;
  std::vector<const Hotel*> future_;
  Node root_;
  std::size_t nodes_ = 1;
  std::vector<std::pair<Node*, std::size_t>> path_;
  std::vector<int> accepts_;
};

}  // namespace

SearchResult search(const GameState& root, const Hotel& current, const DmmInterface& dmm,
                    const VmInterface& vm, std::span<const Hotel* const> hotel_pool,
                    const SearchConfig& config, Rng& rng) {
  config.budget.validate();
  if (!(config.c >= 0.0)) throw ConfigError("exploration constant must be non-negative");
  if (root.terminal()) throw ContractViolation("search from a finished game");
  if (current.size() == 0) throw ContractViolation("hotel without reviews");
  const auto t0 = std::chrono::steady_clock::now();
  Searcher s(root, current, dmm, vm, hotel_pool, config, rng);
  std::size_t it = 0;
  const auto deadline = config.budget.time_limit ? std::optional(t0 + *config.budget.time_limit) : std::nullopt;
  while (true) {
    if (config.budget.iterations && it >= *config.budget.iterations) break;
    if (deadline && (it % 16 == 0) && it > 0 && std::chrono::steady_clock::now() >= *deadline) break;
    s.iterate();
    ++it;
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return s.result(it, ms);
}

}  // namespace persuasion
