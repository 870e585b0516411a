#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "srp/analysis.hpp"
#include "srp/bayes.hpp"
#include "srp/chain.hpp"
#include "srp/complexity.hpp"
#include "srp/ctm.hpp"
#include "srp/error.hpp"
#include "srp/llm.hpp"
#include "srp/service.hpp"

namespace {

using namespace srp;

struct BackendOptions {
  std::string kind = "simulated";
  std::string model_file;
  bool map_rule = false;
  std::string llm_endpoint = LlmClientConfig{}.endpoint;
  std::string llm_model = LlmClientConfig{}.model;
  std::string llm_token_env = LlmClientConfig{}.token_env;
  std::optional<double> llm_temperature;
  std::string llm_stimulus = "image";
  double llm_rps = 0.0;
  double llm_timeout = 60.0;
  int llm_retries = 3;
  std::string exchange_log;
};

void add_backend_options(CLI::App* cmd, BackendOptions& o) {
  cmd->add_option("--backend", o.kind, "simulated | identity | llm")
      ->check(CLI::IsMember({"simulated", "identity", "llm"}))
      ->capture_default_str();
  cmd->add_option("--model-file", o.model_file, "AbstractionModel JSON for the simulated backend");
  cmd->add_flag("--map", o.map_rule, "simulated agents take the posterior mode instead of sampling");
  cmd->add_option("--llm-endpoint", o.llm_endpoint)->capture_default_str();
  cmd->add_option("--llm-model", o.llm_model)->capture_default_str();
  cmd->add_option("--llm-token-env", o.llm_token_env, "environment variable holding the API token")->capture_default_str();
  cmd->add_option("--llm-temperature", o.llm_temperature);
  cmd->add_option("--llm-stimulus", o.llm_stimulus)->check(CLI::IsMember({"image", "matrix-text"}))->capture_default_str();
  cmd->add_option("--llm-rps", o.llm_rps, "global request rate limit, 0 = none")->capture_default_str();
  cmd->add_option("--llm-timeout", o.llm_timeout)->capture_default_str();
  cmd->add_option("--llm-retries", o.llm_retries)->capture_default_str();
  cmd->add_option("--exchange-log", o.exchange_log, "JSONL file receiving every LLM exchange");
}

std::unique_ptr<AgentBackend> make_backend(const BackendOptions& o, int grid_size) {
  if (o.kind == "identity") return std::make_unique<IdentityBackend>();
  if (o.kind == "simulated") {
    auto model = o.model_file.empty() ? coarse_language_model() : load_model(o.model_file);
    return std::make_unique<SimulatedBackend>(
        BayesianAgent(std::move(model), o.map_rule ? DecisionRule::kMap : DecisionRule::kSample));
  }
  LlmClientConfig cfg;
  cfg.endpoint = o.llm_endpoint;
  cfg.model = o.llm_model;
  cfg.token_env = o.llm_token_env;
  cfg.temperature = o.llm_temperature;
  cfg.stimulus = o.llm_stimulus == "image" ? StimulusEncoding::kImage : StimulusEncoding::kMatrixText;
  cfg.requests_per_second = o.llm_rps;
  cfg.timeout_s = o.llm_timeout;
  cfg.max_retries = o.llm_retries;
  auto log = o.exchange_log.empty() ? std::make_shared<ExchangeLog>() : std::make_shared<ExchangeLog>(o.exchange_log);
  return std::make_unique<LlmBackend>(std::make_shared<LlmClient>(cfg, log), grid_size);
}

struct CtmOptions {
  std::string path;
  std::string convention = "auto";
};

void add_ctm_options(CLI::App* cmd, CtmOptions& o) {
  cmd->add_option("--ctm", o.path, "CTM table file (default: built-in surrogate covering every block shape)");
  cmd->add_option("--convention", o.convention, "auto | maximal | recursive | ignore")->capture_default_str();
}

std::pair<CtmTable, BoundaryConvention> load_ctm(const CtmOptions& o) {
  CtmTable table = o.path.empty() ? surrogate_ctm_table() : load_ctm_table(o.path, square_block_shapes());
  if (o.convention != "auto") return {std::move(table), parse_boundary_convention(o.convention)};
  bool all = true;
  for (const auto& s : all_block_shapes()) all = all && table.covers(s);
  return {std::move(table), all ? BoundaryConvention::kMaximalBlocks : BoundaryConvention::kRecursiveSquare};
}

int run(int argc, char** argv) {
  CLI::App app{"Serial reproduction chains: simulation, machine and human runs, analysis"};
  app.set_config("--config", "", "TOML/INI file with option values");
  app.require_subcommand(1);

  // launch-batch
  auto* launch = app.add_subcommand("launch-batch", "run a batch of chains with a machine backend");
  std::string mode = "unimodal";
  int n = 100, steps = 10, workers = 1, grid_size = kDefaultGridSize, max_retries = 3;
  std::uint64_t seed = 0;
  std::string log_path, out_dir, clock = "logical";
  BackendOptions backend;
  launch->add_option("--mode", mode)->check(CLI::IsMember({"unimodal", "multimodal"}))->capture_default_str();
  launch->add_option("-n,--chains", n)->capture_default_str();
  launch->add_option("--steps", steps, "visual boards after the seed")->capture_default_str();
  launch->add_option("--seed", seed, "master seed")->capture_default_str();
  launch->add_option("--workers", workers)->capture_default_str();
  launch->add_option("--grid-size", grid_size)->capture_default_str();
  launch->add_option("--max-retries", max_retries)->capture_default_str();
  launch->add_option("--log", log_path, "append chain events to this JSONL log");
  launch->add_option("--out", out_dir, "export the finished chains to this directory");
  launch->add_option("--clock", clock, "logical | wall")->check(CLI::IsMember({"logical", "wall"}))->capture_default_str();
  add_backend_options(launch, backend);

  // export
  auto* exp = app.add_subcommand("export", "export a chain log to a directory of records");
  std::string exp_log, exp_dir;
  exp->add_option("--log", exp_log)->required();
  exp->add_option("--out", exp_dir)->required();

  // annotate
  auto* annotate = app.add_subcommand("annotate", "post-hoc descriptions for complete unimodal chains");
  std::string ann_data, ann_log;
  BackendOptions ann_backend;
  annotate->add_option("--data", ann_data, "chain log or export directory")->required();
  annotate->add_option("--log", ann_log, "append annotation events here (default: the --data log)");
  add_backend_options(annotate, ann_backend);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "write the analysis report");
  std::vector<std::string> datasets;
  std::string report_path, csv_path, velocity_path;
  CtmOptions ctm_opts;
  bool no_decode = false, exclude_seed_velocity = false;
  std::uint64_t analyze_seed = 0;
  analyze->add_option("--data", datasets, "label=path (log or export directory); repeatable")->required();
  analyze->add_option("--report", report_path, "report file (default: stdout)");
  analyze->add_option("--csv", csv_path, "per-chain metrics CSV");
  analyze->add_option("--velocity-csv", velocity_path, "per-step velocity CSV");
  analyze->add_flag("--no-decode", no_decode, "skip the decoding section");
  analyze->add_flag("--velocity-without-seed", exclude_seed_velocity, "drop the seed -> first board transition");
  analyze->add_option("--seed", analyze_seed, "fold assignment seed")->capture_default_str();
  add_ctm_options(analyze, ctm_opts);

  // complexity
  auto* cx = app.add_subcommand("complexity", "KC, entropy and LSC of a board file");
  std::string grid_path;
  CtmOptions cx_ctm;
  cx->add_option("grid", grid_path, "board text file, '-' for stdin")->required();
  add_ctm_options(cx, cx_ctm);

  // ctm tools
  auto* ctm_check = app.add_subcommand("ctm-check", "validate a CTM table and list its coverage");
  std::string ctm_check_path;
  ctm_check->add_option("table", ctm_check_path)->required();
  auto* ctm_surrogate = app.add_subcommand("ctm-surrogate", "write the surrogate CTM table");
  std::string surrogate_out;
  ctm_surrogate->add_option("--out", surrogate_out)->required();

  // serve
  auto* serve = app.add_subcommand("serve", "host live chains for participants over HTTP");
  std::string serve_host = "127.0.0.1", serve_log = "events.jsonl", static_dir;
  int serve_port = 8080;
  ServiceConfig svc_cfg;
  serve->add_option("--host", serve_host)->capture_default_str();
  serve->add_option("--port", serve_port)->capture_default_str();
  serve->add_option("--log", serve_log, "event log (replayed on start)")->capture_default_str();
  serve->add_option("--static", static_dir, "directory of web assets served at /");
  serve->add_option("--seed", svc_cfg.seed, "chain selection seed")->capture_default_str();
  serve->add_option("--max-trials", svc_cfg.max_trials)->capture_default_str();
  serve->add_option("--lease-s", svc_cfg.lease_s)->capture_default_str();
  serve->add_option("--display-s", svc_cfg.display_s)->capture_default_str();

  // stub-llm
  auto* stub = app.add_subcommand("stub-llm", "serve the deterministic chat-completions stub");
  std::string stub_host = "127.0.0.1";
  int stub_port = 8090;
  StubLlmServer::Options stub_opts;
  stub->add_option("--host", stub_host)->capture_default_str();
  stub->add_option("--port", stub_port)->capture_default_str();
  stub->add_option("--flip-probability", stub_opts.flip_probability)->capture_default_str();
  stub->add_option("--decorate-every", stub_opts.decorate_every)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (*launch) {
    BatchOptions opts;
    opts.workers = workers;
    opts.run.clock = clock == "wall" ? ClockMode::kWall : ClockMode::kLogical;
    opts.config.steps = steps;
    opts.config.grid_size = grid_size;
    opts.config.max_retries = max_retries;
    auto be = make_backend(backend, grid_size);
    opts.config.backend = be->tag();
    std::optional<EventLog> log;
    if (!log_path.empty()) log.emplace(log_path);
    const auto records = batch_run(*be, n, parse_chain_mode(mode), seed, opts);
    int complete = 0;
    for (const auto& r : records) {
      complete += r.status == ChainStatus::kComplete ? 1 : 0;
      if (log) append_record_events(*log, r);
    }
    if (!out_dir.empty()) export_chains(ChainStore{records, {}}, out_dir);
    std::cout << complete << "/" << records.size() << " chains complete\n";
    for (const auto& r : records) {
      if (r.status != ChainStatus::kComplete) std::cout << r.chain_id << ": " << r.failure << '\n';
    }
    return complete == static_cast<int>(records.size()) ? 0 : 2;
  }

  if (*exp) {
    const auto store = load_chain_store(exp_log);
    export_chains(store, exp_dir);
    std::cout << "exported " << store.chains.size() << " chains to " << exp_dir << '\n';
    return 0;
  }

  if (*annotate) {
    auto store = load_chain_store(ann_data);
    const bool dir = std::filesystem::is_directory(ann_data);
    const std::string target_log = ann_log.empty() && !dir ? ann_data : ann_log;
    std::optional<EventLog> log;
    if (!target_log.empty()) log.emplace(target_log);
    int done = 0;
    for (const auto& r : store.chains) {
      if (r.mode != ChainMode::kUnimodal || r.status != ChainStatus::kComplete) continue;
      auto be = make_backend(ann_backend, r.config.grid_size);
      const auto a = annotate_posthoc(r, *be);
      if (log) {
        for (const auto& item : a.items) log->append(annotation_added_event(a.chain_id, item));
      }
      store.annotations.erase(std::remove_if(store.annotations.begin(), store.annotations.end(),
                                             [&](const Annotations& x) { return x.chain_id == a.chain_id; }),
                              store.annotations.end());
      store.annotations.push_back(a);
      ++done;
    }
    if (dir) export_chains(store, ann_data);
    std::cout << "annotated " << done << " chains\n";
    return 0;
  }

  if (*analyze) {
    std::vector<LabeledStore> groups;
    std::vector<ChainRecord> all;
    for (const auto& spec : datasets) {
      const auto eq = spec.find('=');
      LabeledStore g;
      g.label = eq == std::string::npos ? std::filesystem::path(spec).stem().string() : spec.substr(0, eq);
      g.store = load_chain_store(eq == std::string::npos ? spec : spec.substr(eq + 1));
      all.insert(all.end(), g.store.chains.begin(), g.store.chains.end());
      groups.push_back(std::move(g));
    }
    const auto [table, convention] = load_ctm(ctm_opts);
    ReportOptions ro;
    ro.ctm = &table;
    ro.convention = convention;
    ro.decode = !no_decode;
    ro.velocity_includes_seed = !exclude_seed_velocity;
    ro.seed = analyze_seed;
    if (report_path.empty()) {
      write_analysis_report(std::cout, groups, ro);
    } else {
      std::ofstream out(report_path);
      write_analysis_report(out, groups, ro);
    }
    if (!csv_path.empty()) {
      std::ofstream out(csv_path);
      write_chain_metrics_csv(out, all, &table, convention);
    }
    if (!velocity_path.empty()) {
      std::vector<VelocitySeries> series;
      for (const auto& r : all) {
        if (r.boards().size() >= 2) series.push_back(chain_velocity(r, !exclude_seed_velocity));
      }
      std::ofstream out(velocity_path);
      write_velocity_csv(out, series);
    }
    return 0;
  }

  if (*cx) {
    std::stringstream text;
    if (grid_path == "-") {
      text << std::cin.rdbuf();
    } else {
      std::ifstream in(grid_path);
      if (!in) throw Error(ErrorKind::kIoError, "cannot read " + grid_path);
      text << in.rdbuf();
    }
    const Grid g = parse_grid(text.str());
    const auto [table, convention] = load_ctm(cx_ctm);
    const auto c = complexity(g, table, convention);
    std::cout << std::setprecision(12) << "kc " << c.kc << "\nentropy " << c.entropy << "\nlsc " << c.lsc << "\nctm "
              << table.provenance_tag() << " " << to_string(convention) << '\n';
    return 0;
  }

  if (*ctm_check) {
    const auto table = load_ctm_table(ctm_check_path, {});
    std::cout << table.provenance_tag() << '\n';
    for (const auto& s : table.shapes()) std::cout << s.rows << "x" << s.cols << " " << table.entry_count(s) << '\n';
    return 0;
  }

  if (*ctm_surrogate) {
    std::ofstream out(surrogate_out);
    surrogate_ctm_table().write(out);
    return out ? 0 : 1;
  }

  if (*serve) {
    ExperimentService service(svc_cfg, serve_log);
    ServiceHttpServer http(service, static_dir);
    std::cout << "serving on http://" << serve_host << ":" << serve_port << " (log " << serve_log << ")\n" << std::flush;
    http.listen_blocking(serve_host, serve_port);
    return 0;
  }

  if (*stub) {
    StubLlmServer server(stub_opts);
    std::cout << "stub chat-completions on http://" << stub_host << ":" << stub_port << "/v1/chat/completions\n"
              << std::flush;
    server.listen_blocking(stub_host, stub_port);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const srp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
