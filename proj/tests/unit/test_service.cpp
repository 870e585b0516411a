#include <atomic>
#include <map>
#include <thread>

// Eigen (via srp headers) before httplib, see test_analysis.cpp.
#include "srp/service.hpp"

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "support.hpp"

using namespace srp;
using namespace srp::test;
using nlohmann::json;

namespace {

struct ManualClock {
  std::shared_ptr<std::atomic<double>> t = std::make_shared<std::atomic<double>>(1000.0);
  std::function<double()> fn() const {
    auto p = t;
    return [p] { return p->load(); };
  }
  void advance(double s) { t->store(t->load() + s); }
};

ServiceConfig manual_config(const ManualClock& clock, double display = 5.0) {
  ServiceConfig c;
  c.clock = clock.fn();
  c.display_s = display;
  c.seed = 17;
  return c;
}

Payload answer_for(const Assignment& a, const std::string& salt) {
  if (a.kind == TrialKind::kDescribe) return make_description("board seen by participant " + salt + " today");
  if (a.kind == TrialKind::kReconstruct) return random_grid(std::hash<std::string>{}(salt + a.lease_id), 7);
  return std::get<Grid>(a.stimulus).flipped(0, 0);
}

void check_protocol(const std::vector<ChainRecord>& chains, int max_trials) {
  std::map<std::string, int> per_session;
  for (const auto& c : chains) {
    check_alternation(c);
    std::set<std::string> producers;
    for (const auto& s : c.steps) {
      CHECK_MESSAGE(producers.insert(s.producer.id).second, c.chain_id << " visited twice by " << s.producer.id);
      ++per_session[s.producer.id];
    }
  }
  for (const auto& [sid, n] : per_session) CHECK(n <= max_trials);
}

}  // namespace

TEST_CASE("sessions") {
  ManualClock clock;
  ExperimentService svc(manual_config(clock));
  auto s = svc.open_session("p-001");
  CHECK(s.session_id == "s-p-001");
  CHECK(s.trials_completed == 0);
  CHECK_THROWS_KIND(svc.open_session("bad id!"), ErrorKind::kInvalidArgument);
  CHECK_THROWS_KIND(svc.request_trial("s-nobody"), ErrorKind::kNotFound);
  CHECK_THROWS_KIND(svc.request_trial(s.session_id), ErrorKind::kNoEligibleChain);

  svc.create_chains(ChainMode::kUnimodal, 3, 1);
  auto a = svc.request_trial(s.session_id);
  clock.advance(6);
  svc.submit_trial(s.session_id, a.lease_id, {answer_for(a, "x"), 6.0});
  auto resumed = svc.open_session("p-001");
  CHECK(resumed.trials_completed == 1);
  CHECK(resumed.visited.contains(a.chain_id));
  CHECK(svc.sessions().size() == 1);
}

TEST_CASE("concurrent opens for one participant make one session") {
  ExperimentService svc(ServiceConfig{});
  std::vector<std::thread> threads;
  for (int i = 0; i < 32; ++i) threads.emplace_back([&] { svc.open_session("same-person"); });
  for (auto& t : threads) t.join();
  CHECK(svc.sessions().size() == 1);
  int opened = 0;
  for (const auto& e : svc.events()) opened += e["event"] == "session_opened";
  CHECK(opened == 1);
}

TEST_CASE("trial kinds follow the chain alternation") {
  ManualClock clock;
  ExperimentService svc(manual_config(clock));
  svc.create_chains(ChainMode::kMultimodal, 1, 3, 2);
  auto s1 = svc.open_session("a").session_id;
  auto s2 = svc.open_session("b").session_id;
  auto a = svc.request_trial(s1);
  CHECK(a.kind == TrialKind::kDescribe);
  CHECK(a.step_index == 1);
  CHECK(a.display_s == 0.0);
  CHECK(std::get<Grid>(a.stimulus) == batch_seed_grid(3, 0));
  CHECK_THROWS_KIND(svc.submit_trial(s1, a.lease_id, {Grid(7), 1.0}), ErrorKind::kWrongPayloadType);
  CHECK_THROWS_KIND(svc.submit_trial(s1, a.lease_id, {make_description("red red red red red"), 1.0}),
                    ErrorKind::kValidationFailure);
  // lease survives a rejected submission
  CHECK(svc.request_trial(s1).lease_id == a.lease_id);
  svc.submit_trial(s1, a.lease_id, {make_description("a red cross on a white board"), 1.0});

  auto b = svc.request_trial(s2);
  CHECK(b.kind == TrialKind::kReconstruct);
  CHECK(std::get<Description>(b.stimulus).text == "a red cross on a white board");
  CHECK_THROWS_KIND(svc.submit_trial(s2, b.lease_id, {make_description("one two three four five"), 1.0}),
                    ErrorKind::kWrongPayloadType);
  CHECK_THROWS_KIND(svc.submit_trial(s2, b.lease_id, {Grid(5), 1.0}), ErrorKind::kSizeMismatch);
  auto r = svc.submit_trial(s2, b.lease_id, {Grid(7), 1.0});
  CHECK(r.step_index == 2);
  CHECK(svc.chain(r.chain_id).steps.size() == 2);
  CHECK_THROWS_KIND(svc.chain("nope"), ErrorKind::kNotFound);
}

TEST_CASE("memorize trials cannot be submitted early") {
  ManualClock clock;
  ExperimentService svc(manual_config(clock));
  svc.create_chains(ChainMode::kUnimodal, 1, 4);
  auto s = svc.open_session("fast").session_id;
  auto a = svc.request_trial(s);
  CHECK(a.kind == TrialKind::kMemorizeReproduce);
  CHECK(a.display_s == 5.0);
  CHECK_THROWS_KIND(svc.submit_trial(s, a.lease_id, {answer_for(a, "f"), 2.0}), ErrorKind::kTooFast);
  clock.advance(6);
  CHECK_THROWS_KIND(svc.submit_trial(s, a.lease_id, {answer_for(a, "f"), 2.0}), ErrorKind::kTooFast);
  CHECK_NOTHROW(svc.submit_trial(s, a.lease_id, {answer_for(a, "f"), 5.5}));
}

TEST_CASE("pigeonhole: the last unvisited chain is assigned") {
  ManualClock clock;
  auto cfg = manual_config(clock, 0.0);
  cfg.max_trials = 200;
  ExperimentService svc(cfg);
  svc.create_chains(ChainMode::kUnimodal, 100, 5);
  auto s = svc.open_session("p").session_id;
  std::set<std::string> seen;
  for (int i = 0; i < 99; ++i) {
    auto a = svc.request_trial(s);
    CHECK(seen.insert(a.chain_id).second);
    svc.submit_trial(s, a.lease_id, {answer_for(a, "p"), 0.0});
  }
  std::string last;
  for (const auto& c : svc.chains())
    if (!seen.contains(c.chain_id)) last = c.chain_id;
  CHECK(svc.request_trial(s).chain_id == last);
}

TEST_CASE("sessions are exhausted after ten trials") {
  ManualClock clock;
  ExperimentService svc(manual_config(clock, 0.0));
  svc.create_chains(ChainMode::kUnimodal, 20, 6);
  auto s = svc.open_session("p").session_id;
  for (int i = 0; i < 10; ++i) {
    auto a = svc.request_trial(s);
    auto r = svc.submit_trial(s, a.lease_id, {answer_for(a, "p"), 0.0});
    CHECK(r.trials_completed == i + 1);
  }
  CHECK_THROWS_KIND(svc.request_trial(s), ErrorKind::kSessionExhausted);
}

TEST_CASE("expired lease loses the race") {
  ManualClock clock;
  auto cfg = manual_config(clock, 0.0);
  cfg.lease_s = 60;
  ExperimentService svc(cfg);
  svc.create_chains(ChainMode::kUnimodal, 1, 7);
  auto slow = svc.open_session("slow").session_id;
  auto quick = svc.open_session("quick").session_id;
  auto a = svc.request_trial(slow);
  CHECK_THROWS_KIND(svc.request_trial(quick), ErrorKind::kNoEligibleChain);
  clock.advance(61);
  auto b = svc.request_trial(quick);
  CHECK(b.chain_id == a.chain_id);
  CHECK(b.step_index == a.step_index);
  CHECK_THROWS_KIND(svc.submit_trial(slow, a.lease_id, {answer_for(a, "s"), 1.0}), ErrorKind::kLeaseExpired);
  svc.submit_trial(quick, b.lease_id, {answer_for(b, "q"), 1.0});
  CHECK_THROWS_KIND(svc.submit_trial(slow, a.lease_id, {answer_for(a, "s"), 1.0}), ErrorKind::kLeaseExpired);
  CHECK_THROWS_KIND(svc.submit_trial(quick, a.lease_id, {answer_for(a, "s"), 1.0}), ErrorKind::kLeaseExpired);
  CHECK(svc.chain(a.chain_id).steps.size() == 1);
  CHECK(svc.chain(a.chain_id).steps[0].producer.id == quick);
}

TEST_CASE("pause stops new leases") {
  ManualClock clock;
  ExperimentService svc(manual_config(clock, 0.0));
  svc.create_chains(ChainMode::kUnimodal, 2, 8);
  auto s = svc.open_session("p").session_id;
  svc.set_paused(true);
  CHECK(svc.paused());
  CHECK_THROWS_KIND(svc.request_trial(s), ErrorKind::kNoEligibleChain);
  svc.set_paused(false);
  CHECK_NOTHROW(svc.request_trial(s));
}

TEST_CASE("120 concurrent sessions keep the protocol") {
  ServiceConfig cfg;
  cfg.display_s = 0.0;
  cfg.seed = 99;
  auto dir = scratch_dir("service-concurrency");
  ExperimentService svc(cfg, dir / "events.jsonl");
  svc.create_chains(ChainMode::kUnimodal, 30, 10);
  svc.create_chains(ChainMode::kMultimodal, 30, 10);

  std::atomic<int> submitted{0};
  std::vector<std::thread> threads;
  for (int p = 0; p < 120; ++p) {
    threads.emplace_back([&, p] {
      const auto sid = svc.open_session("worker-" + std::to_string(p)).session_id;
      for (;;) {
        Assignment a;
        try {
          a = svc.request_trial(sid);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kNoEligibleChain) return;
          // Open chains may only be leased to others right now; wait while
          // some unfinished chain could still take this worker.
          bool could_help = false;
          for (const auto& c : svc.chains()) {
            if (c.status == ChainStatus::kComplete) continue;
            could_help = could_help || std::none_of(c.steps.begin(), c.steps.end(),
                                                    [&](const ChainStep& st) { return st.producer.id == sid; });
          }
          if (!could_help) return;
          std::this_thread::sleep_for(std::chrono::microseconds(200));
          continue;
        }
        svc.submit_trial(sid, a.lease_id, {answer_for(a, sid), 0.0});
        ++submitted;
      }
    });
  }
  for (auto& t : threads) t.join();

  auto chains = svc.chains();
  std::size_t steps = 0;
  int complete = 0;
  for (const auto& c : chains) {
    steps += c.steps.size();
    complete += c.status == ChainStatus::kComplete;
  }
  CHECK(steps == static_cast<std::size_t>(submitted.load()));
  // 900 trials needed, 1200 available; with only 1000 random assignment can
  // strand a chain whose remaining eligible sessions are all exhausted
  CHECK(complete == 60);
  check_protocol(chains, 10);
  for (const auto& s : svc.sessions()) CHECK(s.trials_completed <= 10);

  // crash recovery: a fresh service over the same log has the same state
  ExperimentService again(cfg, dir / "events.jsonl");
  CHECK(again.snapshot() == svc.snapshot());
  CHECK(ExperimentService::replay(cfg, svc.events())->snapshot() == svc.snapshot());
  auto store = replay_chain_events(EventLog::read(dir / "events.jsonl"));
  CHECK(store.chains.size() == 60);
}

TEST_CASE("randomized interleavings keep the protocol") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ManualClock clock;
    auto cfg = manual_config(clock, 0.0);
    cfg.lease_s = 30;
    cfg.seed = seed;
    ExperimentService svc(cfg);
    svc.create_chains(ChainMode::kMultimodal, 4, seed, 3);
    svc.create_chains(ChainMode::kUnimodal, 4, seed, 3);
    Rng rng(seed);
    std::vector<std::string> sids;
    for (int p = 0; p < 8; ++p) sids.push_back(svc.open_session("p" + std::to_string(p)).session_id);
    std::map<std::string, Assignment> held;
    for (int op = 0; op < 400; ++op) {
      const auto& sid = sids[rng() % sids.size()];
      switch (rng() % 4) {
        case 0:
        case 1:
          try {
            held[sid] = svc.request_trial(sid);
          } catch (const Error&) {
          }
          break;
        case 2:
          if (held.contains(sid)) {
            try {
              svc.submit_trial(sid, held[sid].lease_id, {answer_for(held[sid], sid), 0.0});
            } catch (const Error& e) {
              CHECK((e.kind() == ErrorKind::kLeaseExpired));
            }
            held.erase(sid);
          }
          break;
        default:
          clock.advance(uniform01(rng) * 20);
      }
    }
    check_protocol(svc.chains(), 10);
    CHECK(ExperimentService::replay(cfg, svc.events())->snapshot() == svc.snapshot());
  }
}

TEST_CASE("http status mapping") {
  CHECK(http_status_for(ErrorKind::kNotFound) == 404);
  CHECK(http_status_for(ErrorKind::kLeaseExpired) == 409);
  CHECK(http_status_for(ErrorKind::kSessionExhausted) == 409);
  CHECK(http_status_for(ErrorKind::kNoEligibleChain) == 409);
  CHECK(http_status_for(ErrorKind::kWrongPayloadType) == 422);
  CHECK(http_status_for(ErrorKind::kValidationFailure) == 422);
  CHECK(http_status_for(ErrorKind::kTooFast) == 422);
  CHECK(http_status_for(ErrorKind::kParseError) == 400);
}

TEST_CASE("http endpoints") {
  ServiceConfig cfg;
  cfg.display_s = 0.0;
  ExperimentService svc(cfg);
  ServiceHttpServer server(svc);
  const int port = server.start();
  httplib::Client cli("127.0.0.1", port);
  auto post = [&](const std::string& path, const json& body) {
    auto res = cli.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    return std::make_pair(res->status, json::parse(res->body));
  };

  auto health = cli.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);

  auto [bs, created] = post("/api/admin/batch", {{"mode", "multimodal"}, {"n", 2}, {"seed", 5}, {"steps", 2}});
  CHECK(bs == 200);
  CHECK(created["created"].size() == 2);

  auto [ss, session] = post("/api/sessions", {{"participant_id", "web-1"}});
  CHECK(ss == 200);
  const std::string sid = session["session_id"];
  auto [bad_status, bad] = post("/api/sessions", {{"participant_id", "no spaces"}});
  CHECK(bad_status == 400);
  CHECK(bad["error"] == "invalid-argument");

  auto [ts, trial] = post("/api/sessions/" + sid + "/trials", json::object());
  CHECK(ts == 200);
  CHECK(trial["kind"] == "describe");
  CHECK(trial["stimulus"]["type"] == "grid");
  const std::string lease = trial["lease_id"];

  auto [ws, wrong] = post("/api/sessions/" + sid + "/trials/" + lease,
                          {{"payload", {{"type", "grid"}, {"grid", serialize_grid(Grid(7))}}}});
  CHECK(ws == 422);
  CHECK(wrong["error"] == "wrong-payload-type");

  auto [ok_status, receipt] =
      post("/api/sessions/" + sid + "/trials/" + lease,
           {{"payload", {{"type", "description"}, {"text", "a plain white board without marks"}}}, {"elapsed_s", 12.5}});
  CHECK(ok_status == 200);
  CHECK(receipt["trials_completed"] == 1);

  auto [es, expired] = post("/api/sessions/" + sid + "/trials/" + lease,
                            {{"payload", {{"type", "description"}, {"text", "a plain white board without marks"}}}});
  CHECK(es == 409);
  CHECK(expired["error"] == "lease-expired");

  auto [ns, missing] = post("/api/sessions/s-ghost/trials", json::object());
  CHECK(ns == 404);

  auto chains = cli.Get("/api/chains");
  REQUIRE(chains);
  auto list = json::parse(chains->body);
  CHECK(list.size() == 2);
  auto one = cli.Get("/api/chains/" + receipt["chain_id"].get<std::string>());
  REQUIRE(one);
  CHECK(json::parse(one->body)["steps"].size() == 1);
  CHECK(cli.Get("/api/chains/none")->status == 404);

  auto [ps, paused] = post("/api/admin/pause", {{"paused", true}});
  CHECK(paused["paused"] == true);
  auto [pr, refused] = post("/api/sessions/" + sid + "/trials", json::object());
  CHECK(pr == 409);
  CHECK(refused["error"] == "no-eligible-chain");

  auto [mal, malformed] = post("/api/sessions", json::object());
  CHECK(mal == 400);
  server.stop();
}
