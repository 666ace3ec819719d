#include "persuasion/models.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "persuasion/errors.hpp"

namespace persuasion {

double VmInterface::predict_future_payoff(const GameState& state, const Hotel& hotel,
                                          std::size_t review_index) const {
  const double v = raw_future_payoff(state, hotel, review_index);
  const double hi = std::max(0, state.remaining_trials());
  if (std::isnan(v)) return 0.0;
  return std::clamp(v, 0.0, hi);
}

ConstantDmm::ConstantDmm(double p, std::string name) : p_(p), name_(std::move(name)) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("constant acceptance probability outside [0,1]");
}

Decision dmm_pd(const GameState& state) {
  return 2 * state.accepted_count() >= static_cast<int>(state.completed().size()) ? Decision::Accept
                                                                                  : Decision::Reject;
}

double vm_mfo(const GameState& state) { return std::max(0, state.remaining_trials()); }

double vm_hp(const GameState& state, double prior) {
  const auto n = state.completed().size();
  const double rate = n == 0 ? prior : static_cast<double>(state.accepted_count()) / static_cast<double>(n);
  return rate * std::max(0, state.remaining_trials());
}

AvTable AvTable::build(std::span<const GameLog> logs) {
  if (logs.empty()) throw DataError("cannot build a per-trial average table from no logs");
  std::size_t len = 0;
  for (const auto& g : logs) len = std::max(len, g.trials.size());
  std::vector<double> sum(len, 0.0);
  std::vector<std::size_t> count(len, 0);
  for (const auto& g : logs) {
    double suffix = 0;
    for (std::size_t i = g.trials.size(); i-- > 0;) {
      suffix += g.trials[i].accepted() ? 1.0 : 0.0;
      sum[i] += suffix;
      ++count[i];
    }
  }
  AvTable t;
  for (std::size_t i = 0; i < len; ++i) t.by_trial.push_back(count[i] ? sum[i] / static_cast<double>(count[i]) : 0.0);
  return t;
}

double AvTable::at(int trial) const {
  if (trial < 1) throw ContractViolation("trial index must be >= 1");
  const auto i = static_cast<std::size_t>(trial - 1);
  return i < by_trial.size() ? by_trial[i] : 0.0;
}

void AvTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << nlohmann::json{{"format", "persuasion-av-table"}, {"version", 1}, {"by_trial", by_trial}}.dump()
      << '\n';
}

AvTable AvTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "persuasion-av-table") throw DataError(path.string() + ": not an AV table");
    return AvTable{j.at("by_trial").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------------------------

namespace {

std::atomic<std::uint64_t> g_next_evaluator{1};
constexpr std::size_t kMaxCachedCarries = 1u << 15;

thread_local std::unordered_map<std::uint64_t, RecurrentNet::Carry> t_carries;

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t record_hash(const TrialRecord& r) {
  std::uint64_t h = fnv1a(r.hotel_id);
  h = fnv1a(r.revealed_review_id, h ^ 0x1f);
  h ^= mix64(std::bit_cast<std::uint64_t>(r.lottery_result));
  h ^= r.accepted() ? 0x9e3779b97f4a7c15ULL : 0;
  return mix64(h);
}

}  // namespace

RecurrentEvaluator::RecurrentEvaluator(RecurrentNet net, FeatureEncoder encoder)
    : net_(std::move(net)), encoder_(std::move(encoder)), id_(g_next_evaluator++) {
  if (net_.shape().input_dim() != encoder_.dim()) {
    throw ConfigError("network expects " + std::to_string(net_.shape().input_dim()) +
                      " inputs but the encoder produces " + std::to_string(encoder_.dim()));
  }
}

double RecurrentEvaluator::output(const GameState& state, const Hotel& hotel,
                                  std::size_t review_index) const {
  const auto hist = state.completed();
  const std::size_t n = hist.size();
  std::vector<std::uint64_t> keys(n + 1);
  keys[0] = mix64(id_ * 0x2545F4914F6CDD1DULL ^ static_cast<std::uint64_t>(state.horizon()));
  for (std::size_t i = 0; i < n; ++i) keys[i + 1] = mix64(keys[i] ^ record_hash(hist[i]));

  std::size_t k = n;
  RecurrentNet::Carry carry;
  for (;; --k) {
    if (k == 0) {
      carry = net_.initial_carry();
      break;
    }
    auto it = t_carries.find(keys[k]);
    if (it != t_carries.end()) {
      carry = it->second;
      break;
    }
  }
  for (std::size_t i = k; i < n; ++i) {
    net_.step(carry, encoder_.history_step(state, i));
    if (t_carries.size() >= kMaxCachedCarries) t_carries.clear();
    t_carries.emplace(keys[i + 1], carry);
  }
  return net_.step(carry, encoder_.current_step(state, hotel, review_index));
}

RecurrentDmm::RecurrentDmm(RecurrentNet net, FeatureEncoder encoder, std::string name)
    : eval_(std::move(net), std::move(encoder)), name_(std::move(name)) {}

RecurrentVm::RecurrentVm(RecurrentNet net, FeatureEncoder encoder, std::string name)
    : eval_(std::move(net), std::move(encoder)), name_(std::move(name)) {}

LinearDmm::LinearDmm(LinearModel model, FeatureEncoder encoder, std::string name)
    : model_(std::move(model)), encoder_(std::move(encoder)), name_(std::move(name)) {
  if (model_.dim() != encoder_.dim()) throw ConfigError("linear model dimension mismatch");
}

double LinearDmm::accept_probability(const GameState& s, const Hotel& h, std::size_t r) const {
  const double margin = model_.predict(encoder_.current_step(s, h, r));
  return std::clamp((margin + 1.0) / 2.0, 0.0, 1.0);
}

LinearVm::LinearVm(LinearModel model, FeatureEncoder encoder, std::string name)
    : model_(std::move(model)), encoder_(std::move(encoder)), name_(std::move(name)) {
  if (model_.dim() != encoder_.dim()) throw ConfigError("linear model dimension mismatch");
}

double LinearVm::raw_future_payoff(const GameState& s, const Hotel& h, std::size_t r) const {
  return model_.predict(encoder_.current_step(s, h, r));
}

// ---------------------------------------------------------------------------------------------

SimulatedDm::SimulatedDm(std::shared_ptr<const DmmInterface> base, double alpha)
    : base_(std::move(base)), alpha_(alpha) {
  if (!base_) throw ConfigError("simulated DM needs a base model");
  if (!(std::abs(alpha) <= kMaxAlpha + 1e-12)) {
    throw ConfigError("alpha must lie in [-0.2, 0.2]");
  }
}

double SimulatedDm::effective_probability(const GameState& s, const Hotel& h, std::size_t r) const {
  return std::clamp(base_->accept_probability(s, h, r) + alpha_, 0.0, 1.0);
}

Decision SimulatedDm::decide(const GameState& s, const Hotel& h, std::size_t r, Rng& rng) const {
  return bernoulli(rng, effective_probability(s, h, r)) ? Decision::Accept : Decision::Reject;
}

std::string SimulatedDm::name() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", alpha_);
  return base_->name() + "@" + buf;
}

// ---------------------------------------------------------------------------------------------

std::shared_ptr<const DmmInterface> make_dmm(const ModelFile& file,
                                             std::shared_ptr<const HotelCatalog> catalog,
                                             const std::string& name) {
  if (file.task != "dmm") throw ConfigError(name + ": model file holds a " + file.task + " model");
  FeatureEncoder enc(std::move(catalog), file.mode);
  if (file.recurrent) return std::make_shared<RecurrentDmm>(*file.recurrent, enc, name);
  if (file.linear) return std::make_shared<LinearDmm>(*file.linear, enc, name);
  throw ConfigError(name + ": model file has no parameters");
}

std::shared_ptr<const VmInterface> make_vm(const ModelFile& file,
                                           std::shared_ptr<const HotelCatalog> catalog,
                                           const std::string& name) {
  if (file.task != "vm") throw ConfigError(name + ": model file holds a " + file.task + " model");
  FeatureEncoder enc(std::move(catalog), file.mode);
  if (file.recurrent) return std::make_shared<RecurrentVm>(*file.recurrent, enc, name);
  if (file.linear) return std::make_shared<LinearVm>(*file.linear, enc, name);
  throw ConfigError(name + ": model file has no parameters");
}

ModelRegistry::ModelRegistry(std::shared_ptr<const HotelCatalog> catalog)
    : catalog_(std::move(catalog)) {
  if (!catalog_) throw ConfigError("model registry needs a hotel catalog");
  dmms_["dmm.ewg"] = std::make_shared<ConstantDmm>(kTrainAcceptRate, "dmm.ewg");
  dmms_["dmm.always-accept"] = std::make_shared<ConstantDmm>(1.0, "dmm.always-accept");
  dmms_["dmm.always-reject"] = std::make_shared<ConstantDmm>(0.0, "dmm.always-reject");
  dmms_["dmm.pd"] = std::make_shared<PdDmm>();
  vms_["vm.mfo"] = std::make_shared<MfoVm>();
  vms_["vm.hp"] = std::make_shared<HpVm>();
}

ModelRegistry ModelRegistry::load(const std::filesystem::path& manifest,
                                  std::shared_ptr<const HotelCatalog> catalog) {
  std::ifstream in(manifest);
  if (!in) throw ConfigError("cannot open model registry " + manifest.string());
  ModelRegistry reg(std::move(catalog));
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("version", 0) != 1) throw ConfigError(manifest.string() + ": unsupported registry version");
    for (const auto& [role, file] : j.at("models").items()) {
      std::filesystem::path p = file.get<std::string>();
      if (p.is_relative()) p = manifest.parent_path() / p;
      reg.bind(role, p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(manifest.string() + ": " + e.what());
  }
  return reg;
}

void ModelRegistry::bind(const std::string& role, const std::filesystem::path& file) {
  if (role.rfind("dmm.", 0) != 0 && role.rfind("vm.", 0) != 0) {
    throw ConfigError("role '" + role + "' must start with dmm. or vm.");
  }
  std::lock_guard lock(*mu_);
  files_[role] = file;
  dmms_.erase(role);
  vms_.erase(role);
}

void ModelRegistry::add(const std::string& role, std::shared_ptr<const DmmInterface> dmm) {
  std::lock_guard lock(*mu_);
  dmms_[role] = std::move(dmm);
}

void ModelRegistry::add(const std::string& role, std::shared_ptr<const VmInterface> vm) {
  std::lock_guard lock(*mu_);
  vms_[role] = std::move(vm);
}

bool ModelRegistry::has(const std::string& role) const {
  std::lock_guard lock(*mu_);
  return dmms_.count(role) || vms_.count(role) || files_.count(role);
}

std::vector<std::string> ModelRegistry::roles() const {
  std::lock_guard lock(*mu_);
  std::vector<std::string> out;
  for (const auto& [k, v] : dmms_) out.push_back(k);
  for (const auto& [k, v] : vms_) out.push_back(k);
  for (const auto& [k, v] : files_) {
    if (!dmms_.count(k) && !vms_.count(k)) out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::shared_ptr<const DmmInterface> ModelRegistry::dmm(const std::string& role) const {
  std::lock_guard lock(*mu_);
  if (auto it = dmms_.find(role); it != dmms_.end()) return it->second;
  auto f = files_.find(role);
  if (f == files_.end() || role.rfind("dmm.", 0) != 0) {
    throw ConfigError("no decision-maker model bound to role '" + role + "'");
  }
  auto m = make_dmm(ModelFile::load(f->second, catalog_->manifest()), catalog_, role);
  dmms_[role] = m;
  return m;
}

std::shared_ptr<const VmInterface> ModelRegistry::vm(const std::string& role) const {
  std::lock_guard lock(*mu_);
  if (auto it = vms_.find(role); it != vms_.end()) return it->second;
  auto f = files_.find(role);
  if (f == files_.end() || role.rfind("vm.", 0) != 0) {
    throw ConfigError("no value model bound to role '" + role + "'");
  }
  std::shared_ptr<const VmInterface> m;
  std::ifstream in(f->second);
  nlohmann::json head;
  try {
    head = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(f->second.string() + ": " + e.what());
  }
  if (head.value("format", "") == "persuasion-av-table") {
    m = std::make_shared<AvVm>(AvTable::load(f->second));
  } else {
    m = make_vm(ModelFile::load(f->second, catalog_->manifest()), catalog_, role);
  }
  vms_[role] = m;
  return m;
}

void ModelRegistry::save_manifest(const std::filesystem::path& path) const {
  std::lock_guard lock(*mu_);
  nlohmann::json models = nlohmann::json::object();
  for (const auto& [role, file] : files_) {
    auto rel = file.lexically_relative(path.parent_path());
    models[role] = (rel.empty() ? file : rel).generic_string();
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << nlohmann::json{{"version", 1}, {"models", models}}.dump(2) << '\n';
}

}  // namespace persuasion
