// One PASS/FAIL line per primary acceptance criterion. Exit status is the
// number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <iostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "srp/analysis.hpp"
#include "srp/bayes.hpp"
#include "srp/chain.hpp"
#include "srp/complexity.hpp"
#include "srp/llm.hpp"
#include "srp/service.hpp"

using namespace srp;
namespace fs = std::filesystem;

namespace {

const fs::path kTestData = SRP_TEST_DATA;
const fs::path kRepoData = SRP_REPO_DATA;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("srp-acceptance-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// --- criteria ----------------------------------------------------------------

void aligned_stationarity(Outcome& o) {
  Rng rng(20240601);
  const double eps_values[] = {0.05, 0.1, 0.2};
  int models = 0;
  double worst_modes = 0.0, worst_prior = 0.0;
  for (int n : {2, 3}) {
    for (int i = 0; i < 12; ++i) {
      const int k = 1 + static_cast<int>(rng() % 8);
      const int v = 1 + static_cast<int>(rng() % 8);
      const double eps = eps_values[rng() % 3];
      auto m = random_model(rng, n, k, v, eps, true);
      auto uni = stationary_distribution(unimodal_transition(m));
      auto multi = stationary_distribution(multimodal_transition(m));
      worst_modes = std::max(worst_modes, tv_distance(uni, multi));
      worst_prior = std::max(worst_prior, tv_distance(prior_predictive(m), uni));
      ++models;
    }
  }
  o.detail << models << " aligned models, max TV(uni, multi) = " << worst_modes
           << ", max TV(prior predictive, uni) = " << worst_prior;
  o.require(models >= 20, ">= 20 models");
  o.require(worst_modes < 1e-9, "TV(uni, multi) < 1e-9");
  o.require(worst_prior < 1e-9, "TV(prior predictive, uni) < 1e-9");
}

void misalignment(Outcome& o) {
  // Two templates, noisy two-word language channel; the language prior
  // favours the first template.
  std::vector<AbstractionModel> witnesses;
  witnesses.emplace_back(std::vector<Grid>{Grid(2), Grid(2).complement()}, std::vector<double>{0.5, 0.5},
                         std::vector<double>{0.9, 0.1}, 0.1, std::vector<std::string>{"white", "red"},
                         std::vector<std::vector<double>>{{0.7, 0.3}, {0.3, 0.7}});
  Rng rng(77);
  for (int i = 0; i < 2; ++i) witnesses.push_back(random_model(rng, 3, 6, 3, 0.1, false));
  double min_tv = 1.0;
  std::ostringstream each;
  for (const auto& m : witnesses) {
    const double tv = tv_distance(stationary_distribution(unimodal_transition(m)),
                                  stationary_distribution(multimodal_transition(m)));
    each << (each.str().empty() ? "" : ", ") << tv;
    min_tv = std::min(min_tv, tv);
  }
  o.detail << witnesses.size() << " misaligned witnesses, TV = " << each.str();
  o.require(min_tv > 0.05, "every witness TV > 0.05");
}

void sampling_agreement(Outcome& o) {
  Rng rng(31337);
  double worst = 0.0;
  int cases = 0;
  for (int i = 0; i < 3; ++i) {
    auto m = random_model(rng, 2, 2 + i, 3, 0.1 + 0.05 * i, i == 0);
    BayesianAgent agent(m);
    for (bool multimodal : {false, true}) {
      auto exact = stationary_distribution(multimodal ? multimodal_transition(m) : unimodal_transition(m));
      auto hist = simulate_chain_histogram(agent, multimodal, Grid(2), 100000, 1000, 1000 + i);
      worst = std::max(worst, tv_distance(hist, exact));
      ++cases;
    }
  }
  o.detail << cases << " chains of 1e5 steps (N=2), max TV to exact = " << worst;
  o.require(worst < 0.03, "TV < 0.03");
}

std::vector<std::pair<Grid, double>> bdm_reference() {
  std::ifstream in(kTestData / "bdm_reference_7x7.txt");
  std::vector<std::pair<Grid, double>> out;
  std::string line, rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line == "board") {
      rows.clear();
    } else if (line.rfind("bdm ", 0) == 0) {
      out.emplace_back(parse_grid(rows), std::stod(line.substr(4)));
    } else {
      rows += line + "\n";
    }
  }
  return out;
}

void complexity_correctness(Outcome& o) {
  bool zeros = true;
  for (int n : {2, 3, 4, 7, 8}) {
    for (const Grid& c : {Grid(n), Grid(n).complement()}) {
      zeros = zeros && shannon_entropy(c) == 0.0 && local_spatial_complexity(c) == 0.0;
    }
    zeros = zeros && local_spatial_complexity(checkerboard(n, true)) == 0.0 &&
            local_spatial_complexity(checkerboard(n, false)) == 0.0;
  }
  o.require(zeros, "exact zeros on constant grids and checkerboards");

  Rng rng(4242);
  double worst_sym = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Grid g = random_grid(rng, 7, uniform01(rng));
    const double h = shannon_entropy(g), l = local_spatial_complexity(g);
    Grid r = g;
    for (int rot = 0; rot < 4; ++rot) {
      for (const Grid& s : {r, r.mirrored()}) {
        for (const Grid& t : {s, s.complement()}) {
          worst_sym = std::max({worst_sym, std::abs(shannon_entropy(t) - h), std::abs(local_spatial_complexity(t) - l)});
        }
      }
      r = r.rotated90();
    }
  }
  o.require(worst_sym <= 1e-12, "dihedral/complement invariance to 1e-12");

  const CtmTable published = load_ctm_table(kRepoData / "ctm_published_b2_d4x4.txt", square_block_shapes());
  const auto refs = bdm_reference();
  double worst_bdm = 0.0;
  for (const auto& [g, v] : refs) {
    worst_bdm = std::max(worst_bdm, std::abs(bdm_kc(g, published, BoundaryConvention::kRecursiveSquare) - v));
  }
  o.require(refs.size() == 20, "20 reference boards");
  o.require(worst_bdm < 1e-6, "BDM within 1e-6 of the reference implementation");
  o.detail << "zeros exact, max symmetry deviation = " << worst_sym << " over 1000 grids, BDM max |diff| = "
           << worst_bdm << " on " << refs.size() << " boards (" << published.provenance_tag() << ", recursive)";
}

void direction_of_effect(Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  SimulatedBackend sim{BayesianAgent(coarse_language_model())};
  BatchOptions opts;
  opts.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const std::uint64_t seed = 2024;
  auto uni = batch_run(sim, 100, ChainMode::kUnimodal, seed, opts);
  auto multi = batch_run(sim, 100, ChainMode::kMultimodal, seed, opts);
  bool same_seeds = true;
  for (int i = 0; i < 100; ++i) same_seeds = same_seeds && uni[i].seed_grid == multi[i].seed_grid;
  o.require(same_seeds, "shared seed boards");

  for (Metric m : {Metric::kLsc, Metric::kEntropy}) {
    std::vector<double> a, b;
    for (const auto& c : mean_board_complexity(uni, m)) a.push_back(c.mean);
    for (const auto& c : mean_board_complexity(multi, m)) b.push_back(c.mean);
    const auto t = pooled_t_test(a, b);
    o.detail << to_string(m) << ": uni " << t.mean_a << " vs multi " << t.mean_b << ", t(" << t.df << ") = " << t.t
             << ", p = " << t.p << "; ";
    o.require(t.mean_b < t.mean_a, std::string(to_string(m)) + " lower in multimodal chains");
    o.require(t.p < 0.01, std::string(to_string(m)) + " p < 0.01");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.detail << "100+100 chains, master seed " << seed << ", " << secs << " s";
  o.require(secs < 60.0, "runtime < 1 minute");
}

std::vector<double> column(const nlohmann::json& j) { return j.get<std::vector<double>>(); }
std::vector<std::string> labels(const nlohmann::json& j) { return j.get<std::vector<std::string>>(); }

void statistics(Outcome& o) {
  const auto ref = nlohmann::json::parse(read_file(kTestData / "stats_reference.json"));
  const auto& h = ref["anova_hand"];
  const auto r = two_way_anova(column(h["values"]), labels(h["a"]), labels(h["b"]));
  double worst = 0.0;
  for (const auto& [got, key] : std::vector<std::pair<double, const char*>>{{r.a.ss, "ss_a"},
                                                                            {r.b.ss, "ss_b"},
                                                                            {r.interaction.ss, "ss_ab"},
                                                                            {r.ss_error, "ss_error"},
                                                                            {r.a.f, "f_a"},
                                                                            {r.b.f, "f_b"},
                                                                            {r.interaction.f, "f_ab"}}) {
    worst = std::max(worst, std::abs(got - h[key].get<double>()));
  }
  o.require(worst < 1e-9, "hand-computed ANOVA fixture to 1e-9");

  Rng rng(5150);
  double worst_identity = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int per = 2 + static_cast<int>(rng() % 40);
    std::vector<double> v;
    std::vector<std::string> fa, fb;
    for (int i = 0; i < 4 * per; ++i) {
      v.push_back((uniform01(rng) - 0.5) * 100);
      fa.push_back(i % 2 ? "human" : "machine");
      fb.push_back((i / 2) % 2 ? "uni" : "multi");
    }
    const auto a = two_way_anova(v, fa, fb);
    worst_identity = std::max(worst_identity, std::abs(a.a.ss + a.b.ss + a.interaction.ss + a.ss_error - a.ss_total));
  }
  o.require(worst_identity < 1e-9, "SS identity to 1e-9");

  const auto t = pooled_t_test({1, 2, 3, 4, 5}, {2, 3, 4, 5, 6});
  o.require(std::abs(t.t + 1.0) < 1e-12 && t.df == 8, "t = -1, df = 8");
  std::vector<double> x(100), y(100);
  for (auto& v : x) v = uniform01(rng);
  for (auto& v : y) v = uniform01(rng);
  const auto big = pooled_t_test(x, y);
  o.require(big.df == 198, "df = 198 for 100 vs 100");
  o.detail << "ANOVA fixture max |diff| = " << worst << ", SS identity max |diff| = " << worst_identity
           << " over 200 datasets, fixture t = " << t.t << " df = " << t.df << ", 100 vs 100 df = " << big.df;
}

void ridge_sanity(Outcome& o) {
  Rng rng(8080);
  const int n = 150, d = 20;
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = uniform01(rng) * 2 - 1;
  Eigen::VectorXd beta(d);
  for (int j = 0; j < d; ++j) beta(j) = uniform01(rng) * 4 - 2;
  const Eigen::VectorXd y = x * beta;

  DecodingOptions opts;
  opts.grouped = false;
  const auto linear = ridge_decode(x, y, opts);
  o.require(linear.mean_r2 > 0.999, "noiseless R2 > 0.999");
  std::size_t leaks = check_leakage(linear.plan, x).size();

  // label-shuffled targets, grouped folds as in the real analysis
  std::vector<std::string> groups;
  for (int i = 0; i < n; ++i) groups.push_back("chain-" + std::to_string(i / 5));
  DecodingOptions grouped;
  double mean = 0.0;
  for (int s = 0; s < 20; ++s) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuf(derive_seed(99, static_cast<std::uint64_t>(s)));
    std::shuffle(perm.begin(), perm.end(), shuf);
    Eigen::VectorXd shuffled(n);
    for (int i = 0; i < n; ++i) shuffled(i) = y(perm[static_cast<std::size_t>(i)]);
    grouped.seed = static_cast<std::uint64_t>(s);
    const auto r = ridge_decode(x, shuffled, grouped, &groups);
    leaks += check_leakage(r.plan, x).size();
    mean += r.mean_r2 / 20.0;
  }
  o.require(mean <= 0.05, "shuffled mean R2 <= 0.05");
  o.require(leaks == 0, "no leakage");

  // the checker itself must see a planted duplicate
  Eigen::MatrixXd planted = x;
  int test_row = -1, train_row = -1;
  for (int i = 0; i < n && (test_row < 0 || train_row < 0); ++i) {
    if (linear.plan.outer[static_cast<std::size_t>(i)] == 0) {
      if (test_row < 0) test_row = i;
    } else if (train_row < 0) {
      train_row = i;
    }
  }
  planted.row(train_row) = x.row(test_row);
  o.require(!check_leakage(linear.plan, planted).empty(), "planted duplicate detected");
  o.detail << "noiseless R2 = " << linear.mean_r2 << ", shuffled mean R2 = " << mean
           << " over 20 seeds, leakage issues = " << leaks << ", planted duplicate flagged";
}

std::string run_stub_batch(const fs::path& log_path) {
  StubLlmServer stub;
  stub.start();
  LlmClientConfig cfg;
  cfg.endpoint = stub.endpoint();
  cfg.timeout_s = 30;
  auto client = std::make_shared<LlmClient>(cfg, std::make_shared<ExchangeLog>());
  LlmBackend backend(client);
  BatchOptions opts;
  opts.workers = 8;
  auto records = batch_run(backend, 100, ChainMode::kMultimodal, 2024, opts);
  stub.stop();
  {
    EventLog log(log_path);
    for (const auto& r : records) append_record_events(log, r);
  }
  return read_file(log_path);
}

void protocol_reproducibility(Outcome& o) {
  const auto dir = scratch("protocol");
  const std::string a = run_stub_batch(dir / "run-a.jsonl");
  const std::string b = run_stub_batch(dir / "run-b.jsonl");
  const auto store = replay_chain_events(EventLog::read(dir / "run-a.jsonl"));
  int complete = 0;
  for (const auto& c : store.chains) {
    complete += c.status == ChainStatus::kComplete && c.produced_boards().size() == 10 && c.descriptions().size() == 10;
  }
  o.require(complete == 100, "100 complete 10-board multimodal chains");
  o.require(!a.empty() && a == b, "byte-identical records across runs");

  const bool prompts = reproduce_prompt() == read_file(kTestData / "prompts" / "reproduce_7x7.txt") &&
                       describe_prompt() == read_file(kTestData / "prompts" / "describe_7x7.txt") &&
                       render_prompt("DESCRIPTION") ==
                           read_file(kTestData / "prompts" / "render_prefix_7x7.txt") + "DESCRIPTION";
  o.require(prompts, "prompts byte-match");

  std::ifstream in(kTestData / "llm_replies.jsonl");
  int cases = 0, passed = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto c = nlohmann::json::parse(line);
    ++cases;
    const std::string expect = c["expect"];
    try {
      const Grid g = parse_matrix(c["reply"].get<std::string>(), c["grid_size"].get<int>());
      passed += expect == "ok" && serialize_grid(g) == c["grid"].get<std::string>();
    } catch (const Error& e) {
      passed += (expect == "parse-failure" && e.kind() == ErrorKind::kParseFailure) ||
                (expect == "size-mismatch" && e.kind() == ErrorKind::kSizeMismatch);
    }
  }
  o.require(cases == 50 && passed == 50, "reply corpus 50/50");
  o.detail << complete << "/100 chains complete, " << a.size() << "-byte logs " << (a == b ? "identical" : "differ")
           << ", prompts " << (prompts ? "match" : "differ") << ", reply corpus " << passed << "/" << cases;
}

void service_safety(Outcome& o) {
  const auto dir = scratch("service");
  ServiceConfig cfg;
  cfg.display_s = 0.0;
  cfg.seed = 7;
  ExperimentService svc(cfg, dir / "events.jsonl");
  svc.create_chains(ChainMode::kUnimodal, 40, 11);
  svc.create_chains(ChainMode::kMultimodal, 40, 11);

  std::atomic<int> submitted{0};
  std::vector<std::thread> threads;
  for (int p = 0; p < 120; ++p) {
    threads.emplace_back([&, p] {
      const auto sid = svc.open_session("participant-" + std::to_string(p)).session_id;
      Rng rng(static_cast<std::uint64_t>(p));
      for (;;) {
        Assignment a;
        try {
          a = svc.request_trial(sid);
        } catch (const Error&) {
          return;
        }
        if (rng() % 7 == 0) std::this_thread::yield();
        Payload answer;
        if (a.kind == TrialKind::kDescribe) {
          answer = make_description("participant " + std::to_string(p) + " saw some red tiles");
        } else if (a.kind == TrialKind::kReconstruct) {
          answer = random_grid(rng, 7);
        } else {
          answer = std::get<Grid>(a.stimulus).flipped(static_cast<int>(rng() % 7), static_cast<int>(rng() % 7));
        }
        svc.submit_trial(sid, a.lease_id, {answer, 0.0});
        ++submitted;
      }
    });
  }
  for (auto& t : threads) t.join();

  int violations = 0;
  std::map<std::string, int> per_session;
  std::size_t steps = 0;
  for (const auto& c : svc.chains()) {
    try {
      check_alternation(c);
    } catch (const Error&) {
      ++violations;
    }
    std::set<std::string> producers;
    int expected = 1;
    for (const auto& s : c.steps) {
      const int want = c.mode == ChainMode::kUnimodal ? 2 * expected : expected;
      violations += s.index != want;
      violations += !producers.insert(s.producer.id).second;
      ++per_session[s.producer.id];
      ++expected;
    }
    steps += c.steps.size();
  }
  for (const auto& [sid, count] : per_session) violations += count > 10;
  violations += steps != static_cast<std::size_t>(submitted.load());

  ExperimentService replayed(cfg, dir / "events.jsonl");
  const bool same = replayed.snapshot() == svc.snapshot();
  o.require(violations == 0, "no protocol violations");
  o.require(same, "replay reconstructs state");
  o.detail << "120 concurrent participants, " << submitted.load() << " trials over 80 chains, " << violations
           << " violations, replay " << (same ? "identical" : "differs");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"aligned-prior stationarity", aligned_stationarity},
      {"misalignment sensitivity", misalignment},
      {"sampling/exact agreement", sampling_agreement},
      {"complexity-measure correctness", complexity_correctness},
      {"direction of effect", direction_of_effect},
      {"statistics validation", statistics},
      {"ridge decoding sanity", ridge_sanity},
      {"protocol/machine-path reproducibility", protocol_reproducibility},
      {"service safety", service_safety},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      check(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail.str() << std::endl;
  }
  return failures;
}
