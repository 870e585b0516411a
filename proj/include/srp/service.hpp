#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "srp/chain.hpp"
#include "srp/error.hpp"

namespace srp {

enum class TrialKind { kMemorizeReproduce, kDescribe, kReconstruct };
std::string_view to_string(TrialKind k);

struct Assignment {
  std::string lease_id;
  std::string session_id;
  std::string chain_id;
  int step_index = 0;
  TrialKind kind = TrialKind::kMemorizeReproduce;
  Payload stimulus;
  double display_s = 0.0;  // > 0 only for memorize trials
  double leased_at = 0.0;
  double expires_at = 0.0;
};

struct Session {
  std::string session_id;
  std::string participant_id;
  int trials_completed = 0;
  std::set<std::string> visited;
  std::optional<std::string> active_lease;
};

struct Receipt {
  std::string chain_id;
  int step_index = 0;
  int trials_completed = 0;
  bool chain_complete = false;
};

struct ServiceConfig {
  int max_trials = 10;
  double lease_s = 300.0;
  double display_s = 5.0;
  std::uint64_t seed = 0;  // drives chain selection
  // Seconds since the epoch; replaceable for tests.
  std::function<double()> clock;
};

// Chain hosting state for live participants. Every mutation goes through one
// mutex and is appended to the event log before it becomes visible, so
// replaying the log rebuilds the same state.
class ExperimentService {
 public:
  // Replays `log_path` if it exists, then appends to it. An empty path keeps
  // the log in memory only.
  ExperimentService(ServiceConfig config, std::filesystem::path log_path = {});

  // Admin: creates n live chains whose seeds follow the batch convention.
  std::vector<std::string> create_chains(ChainMode mode, int n, std::uint64_t master_seed, int steps = 10,
                                         int grid_size = kDefaultGridSize);

  Session open_session(const std::string& participant_id);
  Assignment request_trial(const std::string& session_id);

  struct Submission {
    Payload payload;
    double elapsed_s = 0.0;  // client-reported time since the stimulus appeared
  };
  Receipt submit_trial(const std::string& session_id, const std::string& lease_id, const Submission& submission);

  void set_paused(bool paused);
  bool paused() const;

  std::vector<ChainRecord> chains() const;
  ChainRecord chain(const std::string& chain_id) const;
  Session session(const std::string& session_id) const;
  std::vector<Session> sessions() const;
  std::vector<Assignment> active_leases() const;
  std::vector<nlohmann::json> events() const;

  // State comparison used by replay tests.
  nlohmann::json snapshot() const;

  static std::unique_ptr<ExperimentService> replay(ServiceConfig config, const std::vector<nlohmann::json>& events);

 private:
  void apply(const nlohmann::json& event);
  void commit(nlohmann::json event);
  double now() const;
  bool lease_live(const Assignment& a, double t) const;

  ServiceConfig cfg_;
  std::optional<EventLog> log_;
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> events_;
  std::vector<ChainRecord> chains_;
  std::map<std::string, std::size_t> chain_pos_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, Assignment> leases_;  // by lease id
  std::map<std::string, std::string> chain_lease_;  // chain id -> lease id
  std::uint64_t lease_counter_ = 0;
  bool paused_ = false;
};

nlohmann::json to_json(const Session& s);
nlohmann::json to_json(const Assignment& a);
nlohmann::json to_json(const Receipt& r);
nlohmann::json chain_status_json(const ChainRecord& r);

// HTTP front end: JSON over
//   POST /api/sessions                         {"participant_id"}
//   POST /api/sessions/<sid>/trials
//   POST /api/sessions/<sid>/trials/<lease>    {"payload": {"type", "grid"|"text"}, "elapsed_s"}
//   GET  /api/chains, GET /api/chains/<id>
//   POST /api/admin/batch                      {"mode", "n", "seed", "steps", "grid_size"}
//   POST /api/admin/pause                      {"paused"}
//   GET  /api/health
// Errors come back as {"error": <kind>, "message"} with a 4xx status.
class ServiceHttpServer {
 public:
  explicit ServiceHttpServer(ExperimentService& service, std::filesystem::path static_dir = {});
  ~ServiceHttpServer();
  ServiceHttpServer(const ServiceHttpServer&) = delete;
  ServiceHttpServer& operator=(const ServiceHttpServer&) = delete;

  int start(const std::string& host = "127.0.0.1", int port = 0);
  void listen_blocking(const std::string& host, int port);
  void stop();
  int port() const noexcept { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

int http_status_for(ErrorKind kind);

}  // namespace srp
