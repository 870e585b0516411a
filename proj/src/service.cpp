#include "srp/service.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <regex>

#include "httplib.h"
#include "srp/random.hpp"

namespace srp {

std::string_view to_string(TrialKind k) {
  switch (k) {
    case TrialKind::kMemorizeReproduce: return "memorize-reproduce";
    case TrialKind::kDescribe: return "describe";
    case TrialKind::kReconstruct: return "reconstruct";
  }
  return "?";
}

namespace {

std::string iso_time(double epoch_s) {
  const auto whole = static_cast<std::time_t>(std::floor(epoch_s));
  const int ms = static_cast<int>(std::floor((epoch_s - static_cast<double>(whole)) * 1000.0));
  std::tm tm{};
  gmtime_r(&whole, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, ms);
  return buf;
}

nlohmann::json payload_json(const Payload& p) {
  if (const auto* g = std::get_if<Grid>(&p)) return {{"type", "grid"}, {"grid", serialize_grid(*g)}};
  return {{"type", "description"}, {"text", std::get<Description>(p).text}};
}

Payload payload_from_json(const nlohmann::json& j) {
  const auto type = j.value("type", "");
  if (type == "grid") return parse_grid(j.at("grid").get<std::string>());
  if (type == "description") return make_description(j.at("text").get<std::string>());
  throw Error(ErrorKind::kParseError, "payload type must be 'grid' or 'description'");
}

bool valid_participant_id(const std::string& id) {
  static const std::regex kId("[A-Za-z0-9_.-]{1,64}");
  return std::regex_match(id, kId);
}

}  // namespace

ExperimentService::ExperimentService(ServiceConfig config, std::filesystem::path log_path) : cfg_(std::move(config)) {
  if (cfg_.max_trials < 1) throw Error(ErrorKind::kInvalidArgument, "max_trials must be >= 1");
  if (!(cfg_.lease_s > 0.0)) throw Error(ErrorKind::kInvalidArgument, "lease duration must be > 0");
  if (!log_path.empty()) {
    if (std::filesystem::exists(log_path)) {
      for (auto& e : EventLog::read(log_path)) {
        apply(e);
        events_.push_back(std::move(e));
      }
    }
    log_.emplace(log_path);
  }
}

std::unique_ptr<ExperimentService> ExperimentService::replay(ServiceConfig config,
                                                             const std::vector<nlohmann::json>& events) {
  auto s = std::make_unique<ExperimentService>(std::move(config));
  for (const auto& e : events) {
    s->apply(e);
    s->events_.push_back(e);
  }
  return s;
}

double ExperimentService::now() const {
  if (cfg_.clock) return cfg_.clock();
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

bool ExperimentService::lease_live(const Assignment& a, double t) const { return t <= a.expires_at; }

void ExperimentService::commit(nlohmann::json event) {
  if (log_) log_->append(event);
  apply(event);
  events_.push_back(std::move(event));
}

void ExperimentService::apply(const nlohmann::json& e) {
  const auto type = e.value("event", "");
  if (type == "chain_created") {
    ChainRecord r;
    r.chain_id = e.at("chain_id").get<std::string>();
    r.mode = parse_chain_mode(e.at("mode").get<std::string>());
    r.seed_grid = parse_grid(e.at("seed_grid").get<std::string>());
    r.config = config_from_json(e.at("config"));
    if (chain_pos_.contains(r.chain_id)) throw Error(ErrorKind::kParseError, "duplicate chain " + r.chain_id);
    chain_pos_[r.chain_id] = chains_.size();
    chains_.push_back(std::move(r));
  } else if (type == "session_opened") {
    Session s;
    s.session_id = e.at("session_id").get<std::string>();
    s.participant_id = e.at("participant_id").get<std::string>();
    sessions_.emplace(s.session_id, std::move(s));
  } else if (type == "trial_leased") {
    Assignment a;
    a.lease_id = e.at("lease_id").get<std::string>();
    a.session_id = e.at("session_id").get<std::string>();
    a.chain_id = e.at("chain_id").get<std::string>();
    a.step_index = e.at("step_index").get<int>();
    a.leased_at = e.at("leased_at").get<double>();
    a.expires_at = e.at("expires_at").get<double>();
    a.display_s = e.value("display_s", 0.0);
    const auto& rec = chains_.at(chain_pos_.at(a.chain_id));
    if (rec.frontier_index() != a.step_index) throw Error(ErrorKind::kParseError, "lease for a stale step in " + a.chain_id);
    if (rec.mode == ChainMode::kUnimodal) {
      a.kind = TrialKind::kMemorizeReproduce;
      a.stimulus = rec.boards().back();
    } else if (rec.expects_board()) {
      a.kind = TrialKind::kReconstruct;
      a.stimulus = rec.descriptions().back();
    } else {
      a.kind = TrialKind::kDescribe;
      a.stimulus = rec.boards().back();
    }
    // A new lease supersedes whatever the chain or the session held before.
    if (auto it = chain_lease_.find(a.chain_id); it != chain_lease_.end()) {
      if (auto old = leases_.find(it->second); old != leases_.end()) {
        auto& holder = sessions_.at(old->second.session_id);
        if (holder.active_lease == old->first) holder.active_lease.reset();
        leases_.erase(old);
      }
    }
    auto& session = sessions_.at(a.session_id);
    if (session.active_lease) {
      if (auto old = leases_.find(*session.active_lease); old != leases_.end()) {
        chain_lease_.erase(old->second.chain_id);
        leases_.erase(old);
      }
    }
    session.active_lease = a.lease_id;
    chain_lease_[a.chain_id] = a.lease_id;
    leases_[a.lease_id] = std::move(a);
    ++lease_counter_;
  } else if (type == "step_committed") {
    const auto chain_id = e.at("chain_id").get<std::string>();
    auto& rec = chains_.at(chain_pos_.at(chain_id));
    rec.steps.push_back(step_from_json(e.at("step")));
    check_alternation(rec);
    if (e.contains("session_id")) {
      auto& s = sessions_.at(e.at("session_id").get<std::string>());
      ++s.trials_completed;
      s.visited.insert(chain_id);
      s.active_lease.reset();
      const auto lease = e.at("lease_id").get<std::string>();
      leases_.erase(lease);
      chain_lease_.erase(chain_id);
    }
  } else if (type == "chain_finished") {
    auto& rec = chains_.at(chain_pos_.at(e.at("chain_id").get<std::string>()));
    const auto status = e.at("status").get<std::string>();
    rec.status = status == "complete" ? ChainStatus::kComplete : ChainStatus::kTruncated;
    rec.failure = e.value("failure", "");
  } else if (type == "paused") {
    paused_ = e.at("paused").get<bool>();
  }
}

std::vector<std::string> ExperimentService::create_chains(ChainMode mode, int n, std::uint64_t master_seed, int steps,
                                                          int grid_size) {
  if (n < 1 || steps < 1) throw Error(ErrorKind::kInvalidArgument, "need n >= 1 chains of >= 1 steps");
  std::lock_guard lock(mutex_);
  int offset = 0;
  for (const auto& c : chains_) offset += c.mode == mode ? 1 : 0;
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) {
    ChainRecord r;
    r.chain_id = batch_chain_id(mode, offset + i);
    r.mode = mode;
    r.seed_grid = batch_seed_grid(master_seed, i, grid_size);
    r.config.grid_size = grid_size;
    r.config.steps = steps;
    r.config.backend = "participants";
    r.config.master_seed = master_seed;
    r.config.chain_seed = derive_seed(master_seed, static_cast<std::uint64_t>(i));
    commit(chain_created_event(r));
    ids.push_back(r.chain_id);
  }
  return ids;
}

Session ExperimentService::open_session(const std::string& participant_id) {
  if (!valid_participant_id(participant_id)) {
    throw Error(ErrorKind::kInvalidArgument, "participant id must be 1-64 characters of [A-Za-z0-9_.-]");
  }
  std::lock_guard lock(mutex_);
  const std::string sid = "s-" + participant_id;
  if (auto it = sessions_.find(sid); it != sessions_.end()) return it->second;
  commit({{"event", "session_opened"}, {"session_id", sid}, {"participant_id", participant_id}});
  return sessions_.at(sid);
}

Assignment ExperimentService::request_trial(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  const double t = now();
  const auto sit = sessions_.find(session_id);
  if (sit == sessions_.end()) throw Error(ErrorKind::kNotFound, "no session " + session_id);
  const Session& s = sit->second;
  if (s.trials_completed >= cfg_.max_trials) {
    throw Error(ErrorKind::kSessionExhausted, session_id + " completed " + std::to_string(s.trials_completed) + " trials");
  }
  if (s.active_lease) {
    if (auto it = leases_.find(*s.active_lease); it != leases_.end() && lease_live(it->second, t)) return it->second;
  }
  if (paused_) throw Error(ErrorKind::kNoEligibleChain, "the experiment is paused");

  std::vector<const ChainRecord*> eligible;
  for (const auto& c : chains_) {
    if (c.status != ChainStatus::kLive || c.finished() || s.visited.contains(c.chain_id)) continue;
    if (auto it = chain_lease_.find(c.chain_id); it != chain_lease_.end()) {
      const auto& holder = leases_.at(it->second);
      if (lease_live(holder, t) && holder.session_id != session_id) continue;
    }
    eligible.push_back(&c);
  }
  if (eligible.empty()) throw Error(ErrorKind::kNoEligibleChain, "no chain is open to " + session_id);

  Rng rng(derive_seed(cfg_.seed, lease_counter_));
  std::vector<double> weights(eligible.size(), 1.0 / static_cast<double>(eligible.size()));
  const ChainRecord& pick = *eligible[sample_index(weights, rng)];
  const bool memorize = pick.mode == ChainMode::kUnimodal;
  const std::string lease_id = "lease-" + std::to_string(lease_counter_ + 1);
  commit({{"event", "trial_leased"},
          {"lease_id", lease_id},
          {"session_id", session_id},
          {"chain_id", pick.chain_id},
          {"step_index", pick.frontier_index()},
          {"leased_at", t},
          {"expires_at", t + cfg_.lease_s},
          {"display_s", memorize ? cfg_.display_s : 0.0}});
  return leases_.at(lease_id);
}

Receipt ExperimentService::submit_trial(const std::string& session_id, const std::string& lease_id,
                                        const Submission& submission) {
  std::lock_guard lock(mutex_);
  const double t = now();
  if (!sessions_.contains(session_id)) throw Error(ErrorKind::kNotFound, "no session " + session_id);
  const auto lit = leases_.find(lease_id);
  if (lit == leases_.end() || lit->second.session_id != session_id) {
    throw Error(ErrorKind::kLeaseExpired, lease_id + " is not held by " + session_id);
  }
  const Assignment& a = lit->second;
  if (!lease_live(a, t)) throw Error(ErrorKind::kLeaseExpired, lease_id + " expired");

  const auto& rec = chains_.at(chain_pos_.at(a.chain_id));
  const bool want_board = a.kind != TrialKind::kDescribe;
  if (std::holds_alternative<Grid>(submission.payload) != want_board) {
    throw Error(ErrorKind::kWrongPayloadType,
                std::string(to_string(a.kind)) + " trial expects a " + (want_board ? "grid" : "description"));
  }
  if (want_board && std::get<Grid>(submission.payload).size() != rec.config.grid_size) {
    throw Error(ErrorKind::kSizeMismatch, "expected a " + std::to_string(rec.config.grid_size) + "x" +
                                              std::to_string(rec.config.grid_size) + " grid");
  }
  if (!want_board) validate_description(std::get<Description>(submission.payload));
  if (a.display_s > 0.0 && (submission.elapsed_s < a.display_s || t - a.leased_at < a.display_s)) {
    throw Error(ErrorKind::kTooFast, "submitted before the " + std::to_string(a.display_s) + " s display ended");
  }

  ChainStep step;
  step.index = a.step_index;
  step.payload = submission.payload;
  step.producer = {"participant", session_id};
  step.timestamp = iso_time(t);
  step.elapsed_s = submission.elapsed_s;
  auto event = step_committed_event(a.chain_id, step);
  event["session_id"] = session_id;
  event["lease_id"] = lease_id;
  const std::string chain_id = a.chain_id;
  commit(std::move(event));

  auto& updated = chains_.at(chain_pos_.at(chain_id));
  Receipt r{chain_id, step.index, sessions_.at(session_id).trials_completed, false};
  if (updated.finished()) {
    ChainRecord done = updated;
    done.status = ChainStatus::kComplete;
    commit(chain_finished_event(done));
    r.chain_complete = true;
  }
  return r;
}

void ExperimentService::set_paused(bool paused) {
  std::lock_guard lock(mutex_);
  if (paused != paused_) commit({{"event", "paused"}, {"paused", paused}});
}

bool ExperimentService::paused() const {
  std::lock_guard lock(mutex_);
  return paused_;
}

std::vector<ChainRecord> ExperimentService::chains() const {
  std::lock_guard lock(mutex_);
  return chains_;
}

ChainRecord ExperimentService::chain(const std::string& chain_id) const {
  std::lock_guard lock(mutex_);
  const auto it = chain_pos_.find(chain_id);
  if (it == chain_pos_.end()) throw Error(ErrorKind::kNotFound, "no chain " + chain_id);
  return chains_[it->second];
}

Session ExperimentService::session(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorKind::kNotFound, "no session " + session_id);
  return it->second;
}

std::vector<Session> ExperimentService::sessions() const {
  std::lock_guard lock(mutex_);
  std::vector<Session> out;
  for (const auto& [id, s] : sessions_) out.push_back(s);
  return out;
}

std::vector<Assignment> ExperimentService::active_leases() const {
  std::lock_guard lock(mutex_);
  std::vector<Assignment> out;
  for (const auto& [id, a] : leases_) out.push_back(a);
  return out;
}

std::vector<nlohmann::json> ExperimentService::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

nlohmann::json ExperimentService::snapshot() const {
  std::lock_guard lock(mutex_);
  nlohmann::json j;
  j["chains"] = nlohmann::json::array();
  for (const auto& c : chains_) j["chains"].push_back(to_json(c));
  j["sessions"] = nlohmann::json::array();
  for (const auto& [id, s] : sessions_) j["sessions"].push_back(to_json(s));
  j["leases"] = nlohmann::json::array();
  for (const auto& [id, a] : leases_) j["leases"].push_back(to_json(a));
  j["paused"] = paused_;
  j["lease_counter"] = lease_counter_;
  return j;
}

nlohmann::json to_json(const Session& s) {
  return {{"session_id", s.session_id},
          {"participant_id", s.participant_id},
          {"trials_completed", s.trials_completed},
          {"visited", s.visited},
          {"active_lease", s.active_lease ? nlohmann::json(*s.active_lease) : nlohmann::json(nullptr)}};
}

nlohmann::json to_json(const Assignment& a) {
  return {{"lease_id", a.lease_id},     {"session_id", a.session_id}, {"chain_id", a.chain_id},
          {"step_index", a.step_index}, {"kind", to_string(a.kind)},  {"stimulus", payload_json(a.stimulus)},
          {"display_s", a.display_s},   {"leased_at", a.leased_at},   {"expires_at", a.expires_at}};
}

nlohmann::json to_json(const Receipt& r) {
  return {{"chain_id", r.chain_id},
          {"step_index", r.step_index},
          {"trials_completed", r.trials_completed},
          {"chain_complete", r.chain_complete}};
}

nlohmann::json chain_status_json(const ChainRecord& r) {
  return {{"chain_id", r.chain_id},
          {"mode", to_string(r.mode)},
          {"status", to_string(r.status)},
          {"steps_committed", r.steps.size()},
          {"frontier_index", r.frontier_index()},
          {"boards", r.boards().size()},
          {"target_boards", r.config.steps + 1}};
}

int http_status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kLeaseExpired:
    case ErrorKind::kSessionExhausted:
    case ErrorKind::kNoEligibleChain: return 409;
    case ErrorKind::kWrongPayloadType:
    case ErrorKind::kValidationFailure:
    case ErrorKind::kTooFast:
    case ErrorKind::kSizeMismatch: return 422;
    default: return 400;
  }
}

// --- HTTP ------------------------------------------------------------------

struct ServiceHttpServer::Impl {
  ExperimentService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(ExperimentService& s) : service(s) {}
};

namespace {

using Handler = std::function<nlohmann::json(const httplib::Request&)>;

httplib::Server::Handler wrap(Handler h) {
  return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(h(req).dump(), "application/json");
    } catch (const Error& e) {
      res.status = http_status_for(e.kind());
      res.set_content(nlohmann::json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump(), "application/json");
    } catch (const nlohmann::json::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", "parse-error"}, {"message", e.what()}}.dump(), "application/json");
    }
  };
}

nlohmann::json body_json(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  return nlohmann::json::parse(req.body);
}

}  // namespace

ServiceHttpServer::ServiceHttpServer(ExperimentService& service, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;

  srv.Get("/api/health", wrap([](const httplib::Request&) { return nlohmann::json{{"ok", true}}; }));

  srv.Post("/api/sessions", wrap([&svc](const httplib::Request& req) {
             const auto body = body_json(req);
             return to_json(svc.open_session(body.at("participant_id").get<std::string>()));
           }));

  srv.Post(R"(/api/sessions/([^/]+)/trials)", wrap([&svc](const httplib::Request& req) {
             return to_json(svc.request_trial(req.matches[1]));
           }));

  srv.Post(R"(/api/sessions/([^/]+)/trials/([^/]+))", wrap([&svc](const httplib::Request& req) {
             const auto body = body_json(req);
             ExperimentService::Submission sub{payload_from_json(body.at("payload")), body.value("elapsed_s", 0.0)};
             return to_json(svc.submit_trial(req.matches[1], req.matches[2], sub));
           }));

  srv.Get("/api/chains", wrap([&svc](const httplib::Request&) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& c : svc.chains()) out.push_back(chain_status_json(c));
            return out;
          }));

  srv.Get(R"(/api/chains/([^/]+))", wrap([&svc](const httplib::Request& req) {
            return to_json(svc.chain(req.matches[1]));
          }));

  srv.Post("/api/admin/batch", wrap([&svc](const httplib::Request& req) {
             const auto body = body_json(req);
             const auto ids = svc.create_chains(parse_chain_mode(body.at("mode").get<std::string>()),
                                                body.at("n").get<int>(), body.value("seed", std::uint64_t{0}),
                                                body.value("steps", 10), body.value("grid_size", kDefaultGridSize));
             return nlohmann::json{{"created", ids}};
           }));

  srv.Post("/api/admin/pause", wrap([&svc](const httplib::Request& req) {
             svc.set_paused(body_json(req).at("paused").get<bool>());
             return nlohmann::json{{"paused", svc.paused()}};
           }));

  if (!static_dir.empty()) srv.set_mount_point("/", static_dir.string());
}

ServiceHttpServer::~ServiceHttpServer() { stop(); }

int ServiceHttpServer::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else {
    port_ = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw Error(ErrorKind::kTransportError, "service could not bind " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void ServiceHttpServer::listen_blocking(const std::string& host, int port) {
  port_ = port;
  if (!impl_->server.listen(host, port)) throw Error(ErrorKind::kTransportError, "service could not listen");
}

void ServiceHttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace srp
