#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persuasion/dataset.hpp"
#include "persuasion/experts.hpp"

namespace httplib {
class Server;
}

namespace persuasion {

struct ServiceConfig {
  std::string default_expert = "highest";
  std::chrono::seconds ttl{60 * 60};
  // Whether the DM is told the lottery outcome of a rejected trial.
  bool show_lottery_on_reject = true;
  // Append-only session log; empty keeps sessions in memory only.
  std::filesystem::path store;
  ExpertOptions experts;
  // Concurrent expert computations across all sessions.
  std::ptrdiff_t search_workers = 2;
  std::string cors_origin = "*";

  ServiceConfig() {
    experts.search.budget = {20000, std::chrono::milliseconds(5000)};
  }
};

// Failure reported to clients as {"code": ..., "message": ...} with an HTTP status.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  nlohmann::json body() const { return {{"code", code_}, {"message", what()}}; }

 private:
  int status_;
  std::string code_;
};

enum class SessionStatus { AwaitingDecision, RevealingOutcome, Finished };
std::string_view to_string(SessionStatus s);

// Game sessions for human decision makers. Every visible payload leaves out review scores,
// hotel identities and future hotels; those appear only in the debrief of a finished game.
class SessionManager {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  SessionManager(ServiceConfig config, std::shared_ptr<const ModelRegistry> models,
                 std::shared_ptr<const std::vector<Hotel>> hotels, Clock clock = {});

  nlohmann::json create(const std::optional<std::string>& expert, std::optional<std::uint64_t> seed);
  nlohmann::json get(const std::string& id);
  // Submitting again for an already resolved trial returns the stored outcome unchanged.
  nlohmann::json decide(const std::string& id, int trial, Decision decision);
  nlohmann::json debrief(const std::string& id);
  // Finished games in the game log format (plus unfinished ones when asked).
  std::string export_logs(bool include_unfinished) const;
  std::vector<GameLog> logs(bool include_unfinished) const;
  nlohmann::json experts() const;

  const ServiceConfig& config() const { return config_; }

 private:
  struct Session {
    std::string id;
    std::string expert;
    std::uint64_t seed = 0;
    std::vector<std::string> hotel_ids;
    GameState state;
    std::vector<std::size_t> revealed;  // review index per started trial
    std::vector<bool> positive_first;
    std::vector<nlohmann::json> outcomes;  // response body per resolved trial
    SessionStatus status = SessionStatus::AwaitingDecision;
    std::chrono::system_clock::time_point created, last_active;
    std::mutex mu;
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  void touch(Session& s);
  const Hotel& hotel(const Session& s, int trial) const;
  std::shared_ptr<const Expert> expert(const std::string& name) const;
  void choose_next(Session& s);
  void resolve(Session& s, Decision d, std::optional<double> lottery);
  nlohmann::json review_view(const Session& s, int trial) const;
  nlohmann::json visible(const Session& s) const;
  nlohmann::json outcome_view(const Session& s, int trial) const;
  void append_event(const nlohmann::json& event);
  void replay_store();

  ServiceConfig config_;
  std::shared_ptr<const ModelRegistry> models_;
  std::shared_ptr<const std::vector<Hotel>> hotels_;
  std::map<std::string, const Hotel*> by_id_;
  Clock clock_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  mutable std::map<std::string, std::shared_ptr<const Expert>> experts_;
  std::mutex store_mu_;
  std::ofstream store_;
  std::counting_semaphore<> workers_;
};

// Routes: POST /sessions, GET /sessions/{id}, POST /sessions/{id}/decision,
// GET /sessions/{id}/debrief, GET /export, GET /experts, GET /health.
void install_routes(httplib::Server& server, SessionManager& manager);

}  // namespace persuasion
