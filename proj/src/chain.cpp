#include "srp/chain.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "srp/error.hpp"

namespace srp {

std::string_view to_string(ChainMode mode) { return mode == ChainMode::kUnimodal ? "unimodal" : "multimodal"; }

ChainMode parse_chain_mode(std::string_view text) {
  if (text == "unimodal") return ChainMode::kUnimodal;
  if (text == "multimodal") return ChainMode::kMultimodal;
  throw Error(ErrorKind::kInvalidArgument, "mode must be unimodal or multimodal, got '" + std::string(text) + "'");
}

std::string_view to_string(ChainStatus s) {
  switch (s) {
    case ChainStatus::kLive: return "live";
    case ChainStatus::kComplete: return "complete";
    case ChainStatus::kTruncated: return "truncated";
  }
  return "live";
}

namespace {

ChainStatus parse_status(std::string_view s) {
  if (s == "live") return ChainStatus::kLive;
  if (s == "complete") return ChainStatus::kComplete;
  if (s == "truncated") return ChainStatus::kTruncated;
  throw Error(ErrorKind::kParseError, "unknown chain status '" + std::string(s) + "'");
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace

Description make_description(std::string text) {
  Description d;
  const auto words = split_words(text);
  std::set<std::string> unique;
  for (const auto& w : words) {
    std::string folded = w;
    std::transform(folded.begin(), folded.end(), folded.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    unique.insert(std::move(folded));
  }
  d.text = std::move(text);
  d.word_count = static_cast<int>(words.size());
  d.unique_word_count = static_cast<int>(unique.size());
  return d;
}

void validate_description(const Description& d) {
  if (d.word_count < kMinDescriptionWords) {
    throw Error(ErrorKind::kValidationFailure, "description has " + std::to_string(d.word_count) +
                                                   " words; at least " + std::to_string(kMinDescriptionWords) +
                                                   " required");
  }
  if (d.unique_word_count < kMinUniqueDescriptionWords) {
    throw Error(ErrorKind::kValidationFailure, "description has " + std::to_string(d.unique_word_count) +
                                                   " unique words; at least " +
                                                   std::to_string(kMinUniqueDescriptionWords) + " required");
  }
}

std::vector<Grid> ChainRecord::boards() const {
  std::vector<Grid> out{seed_grid};
  for (const auto& s : steps) {
    if (s.is_board()) out.push_back(std::get<Grid>(s.payload));
  }
  return out;
}

std::vector<Grid> ChainRecord::produced_boards() const {
  std::vector<Grid> out;
  for (const auto& s : steps) {
    if (s.is_board()) out.push_back(std::get<Grid>(s.payload));
  }
  return out;
}

std::vector<Description> ChainRecord::descriptions() const {
  std::vector<Description> out;
  for (const auto& s : steps) {
    if (!s.is_board()) out.push_back(std::get<Description>(s.payload));
  }
  return out;
}

int ChainRecord::frontier_index() const {
  const int last = steps.empty() ? 0 : steps.back().index;
  return mode == ChainMode::kUnimodal ? last + 2 : last + 1;
}

bool ChainRecord::expects_board() const { return mode == ChainMode::kUnimodal || frontier_index() % 2 == 0; }

bool ChainRecord::finished() const { return frontier_index() > 2 * config.steps; }

void check_alternation(const ChainRecord& record) {
  int expected = record.mode == ChainMode::kUnimodal ? 2 : 1;
  for (const auto& s : record.steps) {
    if (s.index != expected) {
      throw Error(ErrorKind::kWrongPayloadType, record.chain_id + ": expected step index " + std::to_string(expected) +
                                                    ", found " + std::to_string(s.index));
    }
    const bool want_board = record.mode == ChainMode::kUnimodal || s.index % 2 == 0;
    if (s.is_board() != want_board) {
      throw Error(ErrorKind::kWrongPayloadType, record.chain_id + ": step " + std::to_string(s.index) + " should be a " +
                                                    (want_board ? "board" : "description"));
    }
    if (s.is_board() && std::get<Grid>(s.payload).size() != record.seed_grid.size()) {
      throw Error(ErrorKind::kSizeMismatch, record.chain_id + ": board size changed at step " + std::to_string(s.index));
    }
    expected += record.mode == ChainMode::kUnimodal ? 2 : 1;
  }
  if (expected - (record.mode == ChainMode::kUnimodal ? 2 : 1) > 2 * record.config.steps) {
    throw Error(ErrorKind::kWrongPayloadType, record.chain_id + ": more steps than configured");
  }
}

// --- backends ---------------------------------------------------------------

namespace {

constexpr const char* kOrdinals[] = {"one",  "two",  "three",    "four",     "five",    "six",     "seven",
                                     "eight", "nine", "ten",      "eleven",   "twelve",  "thirteen", "fourteen",
                                     "fifteen", "sixteen"};

std::string hex_seed(std::uint64_t seed) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace

BoardResult IdentityBackend::reproduce(const Grid& stimulus, const StepContext&) {
  return {stimulus, {"identity", "identity"}};
}

DescriptionResult IdentityBackend::describe(const Grid& stimulus, const StepContext&) {
  std::string text;
  const auto rows = serialize_grid(stimulus);
  std::istringstream in(rows);
  std::string row;
  int r = 0;
  while (std::getline(in, row)) {
    if (!text.empty()) text += ' ';
    text += "row ";
    text += r < 16 ? kOrdinals[r] : std::to_string(r + 1);
    text += ' ' + row;
    ++r;
  }
  return {make_description(std::move(text)), {"identity", "identity"}};
}

BoardResult IdentityBackend::render(const Description& description, const StepContext&) {
  std::string rows;
  for (const auto& w : split_words(description.text)) {
    if (w.find_first_not_of("01") == std::string::npos) {
      if (!rows.empty()) rows += '\n';
      rows += w;
    }
  }
  return {parse_grid(rows), {"identity", "identity"}};
}

std::string SimulatedBackend::tag() const {
  return agent_.rule() == DecisionRule::kMap ? "simulated-map" : "simulated";
}

BoardResult SimulatedBackend::reproduce(const Grid& stimulus, const StepContext& ctx) {
  Rng rng(ctx.seed);
  auto step = agent_.reproduce(stimulus, rng);
  return {std::get<Grid>(step.output), {"simulated", "seed:" + hex_seed(ctx.seed)}};
}

DescriptionResult SimulatedBackend::describe(const Grid& stimulus, const StepContext& ctx) {
  Rng rng(ctx.seed);
  auto step = agent_.describe(stimulus, rng);
  const auto& text = agent_.model().vocabulary()[static_cast<std::size_t>(std::get<int>(step.output))];
  return {make_description(text), {"simulated", "seed:" + hex_seed(ctx.seed)}};
}

BoardResult SimulatedBackend::render(const Description& description, const StepContext& ctx) {
  const int l = agent_.model().find_description(description.text);
  if (l < 0) {
    throw Error(ErrorKind::kBackendFailure, "simulated agent cannot interpret description '" + description.text + "'");
  }
  Rng rng(ctx.seed);
  auto step = agent_.render(l, rng);
  return {std::get<Grid>(step.output), {"simulated", "seed:" + hex_seed(ctx.seed)}};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

namespace {

std::string stamp(ClockMode clock, int index) {
  return clock == ClockMode::kWall ? utc_timestamp() : "logical:" + std::to_string(index);
}

}  // namespace

ChainRecord run_chain(AgentBackend& backend, const std::string& chain_id, const Grid& seed, ChainMode mode,
                      const ChainConfig& config, const RunOptions& opts) {
  ChainRecord rec;
  rec.chain_id = chain_id;
  rec.mode = mode;
  rec.seed_grid = seed;
  rec.config = config;
  rec.config.grid_size = seed.size();
  if (rec.config.backend.empty()) rec.config.backend = backend.tag();

  Grid current = seed;
  Description pending;
  while (!rec.finished()) {
    const int index = rec.frontier_index();
    const bool board = rec.expects_board();
    std::string last_error;
    std::optional<ChainStep> committed;
    for (int attempt = 0; attempt <= config.max_retries && !committed; ++attempt) {
      StepContext ctx{chain_id, index, attempt,
                      derive_seed(config.chain_seed, static_cast<std::uint64_t>(index) * 1000003ULL + attempt)};
      const auto started = std::chrono::steady_clock::now();
      try {
        ChainStep step;
        step.index = index;
        step.attempts = attempt + 1;
        if (board) {
          BoardResult r = mode == ChainMode::kUnimodal ? backend.reproduce(current, ctx) : backend.render(pending, ctx);
          if (r.grid.size() != seed.size()) {
            throw Error(ErrorKind::kSizeMismatch, "backend returned a " + std::to_string(r.grid.size()) + "x" +
                                                      std::to_string(r.grid.size()) + " board");
          }
          step.payload = r.grid;
          step.producer = r.producer;
        } else {
          DescriptionResult r = backend.describe(current, ctx);
          if (config.validate_descriptions) validate_description(r.description);
          step.payload = r.description;
          step.producer = r.producer;
        }
        step.timestamp = stamp(opts.clock, index);
        if (opts.clock == ClockMode::kWall) {
          step.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        }
        committed = std::move(step);
      } catch (const std::exception& e) {
        last_error = e.what();
      }
    }
    if (!committed) {
      rec.status = ChainStatus::kTruncated;
      rec.failure = "step " + std::to_string(index) + " failed after " + std::to_string(config.max_retries + 1) +
                    " attempts: " + last_error;
      return rec;
    }
    if (committed->is_board()) {
      current = std::get<Grid>(committed->payload);
    } else {
      pending = std::get<Description>(committed->payload);
    }
    rec.steps.push_back(std::move(*committed));
    if (opts.on_step) opts.on_step(rec, rec.steps.back());
  }
  rec.status = ChainStatus::kComplete;
  return rec;
}

Annotations annotate_posthoc(const ChainRecord& record, AgentBackend& describer, const RunOptions& opts) {
  if (record.mode != ChainMode::kUnimodal || record.status != ChainStatus::kComplete) {
    throw Error(ErrorKind::kInvalidArgument, record.chain_id + ": post-hoc annotation needs a complete unimodal chain");
  }
  Annotations out{record.chain_id, {}};
  for (const auto& step : record.steps) {
    const auto& board = std::get<Grid>(step.payload);
    std::string last_error;
    bool done = false;
    for (int attempt = 0; attempt <= record.config.max_retries && !done; ++attempt) {
      // Odd stream offset keeps annotation draws disjoint from chain draws.
      StepContext ctx{record.chain_id, step.index, attempt,
                      derive_seed(record.config.chain_seed ^ 0xa5a5a5a5a5a5a5a5ULL,
                                  static_cast<std::uint64_t>(step.index) * 1000003ULL + attempt)};
      try {
        auto r = describer.describe(board, ctx);
        if (record.config.validate_descriptions) validate_description(r.description);
        out.items.push_back({step.index, std::move(r.description), std::move(r.producer), stamp(opts.clock, step.index)});
        done = true;
      } catch (const std::exception& e) {
        last_error = e.what();
      }
    }
    if (!done) {
      throw Error(ErrorKind::kBackendFailure,
                  record.chain_id + ": describing board " + std::to_string(step.index) + " failed: " + last_error);
    }
  }
  return out;
}

Grid batch_seed_grid(std::uint64_t master_seed, int chain, int grid_size) {
  return random_grid(derive_seed(master_seed, static_cast<std::uint64_t>(chain)), grid_size, 0.5);
}

std::string batch_chain_id(ChainMode mode, int chain) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%03d", mode == ChainMode::kUnimodal ? "uni" : "multi", chain);
  return buf;
}

std::vector<ChainRecord> batch_run(AgentBackend& backend, int n_chains, ChainMode mode, std::uint64_t master_seed,
                                   const BatchOptions& opts) {
  std::vector<ChainRecord> out(static_cast<std::size_t>(std::max(0, n_chains)));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < n_chains; i = next++) {
      ChainConfig cfg = opts.config;
      cfg.master_seed = master_seed;
      cfg.chain_seed = derive_seed(master_seed ^ (mode == ChainMode::kUnimodal ? 0x11ULL : 0x22ULL),
                                   static_cast<std::uint64_t>(i));
      const Grid seed = batch_seed_grid(master_seed, i, cfg.grid_size);
      auto& slot = out[static_cast<std::size_t>(i)];
      try {
        slot = run_chain(backend, batch_chain_id(mode, i), seed, mode, cfg, opts.run);
      } catch (const std::exception& e) {
        // Failures outside step execution (e.g. a log sink) truncate only this chain.
        slot.chain_id = batch_chain_id(mode, i);
        slot.mode = mode;
        slot.seed_grid = seed;
        slot.config = cfg;
        slot.status = ChainStatus::kTruncated;
        slot.failure = e.what();
      }
    }
  };
  const int workers = std::max(1, std::min(opts.workers, n_chains));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return out;
}

// --- JSON ---------------------------------------------------------------------

namespace {

nlohmann::json producer_json(const Producer& p) { return {{"kind", p.kind}, {"id", p.id}}; }
Producer producer_from(const nlohmann::json& j) { return {j.at("kind").get<std::string>(), j.at("id").get<std::string>()}; }

}  // namespace

nlohmann::json to_json(const ChainStep& step) {
  nlohmann::json j;
  j["index"] = step.index;
  if (step.is_board()) {
    j["kind"] = "board";
    j["payload"] = serialize_grid(std::get<Grid>(step.payload));
  } else {
    j["kind"] = "description";
    j["payload"] = std::get<Description>(step.payload).text;
  }
  j["producer"] = producer_json(step.producer);
  j["timestamp"] = step.timestamp;
  j["elapsed_s"] = step.elapsed_s;
  j["attempts"] = step.attempts;
  return j;
}

ChainStep step_from_json(const nlohmann::json& j) {
  ChainStep s;
  s.index = j.at("index").get<int>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "board") {
    s.payload = parse_grid(j.at("payload").get<std::string>());
  } else if (kind == "description") {
    s.payload = make_description(j.at("payload").get<std::string>());
  } else {
    throw Error(ErrorKind::kParseError, "unknown step kind '" + kind + "'");
  }
  s.producer = producer_from(j.at("producer"));
  s.timestamp = j.value("timestamp", "");
  s.elapsed_s = j.value("elapsed_s", 0.0);
  s.attempts = j.value("attempts", 1);
  return s;
}

nlohmann::json to_json(const ChainConfig& c) {
  return {{"seed_distribution", c.seed_distribution},
          {"grid_size", c.grid_size},
          {"steps", c.steps},
          {"backend", c.backend},
          {"master_seed", c.master_seed},
          {"chain_seed", c.chain_seed},
          {"validate_descriptions", c.validate_descriptions},
          {"max_retries", c.max_retries}};
}

ChainConfig config_from_json(const nlohmann::json& j) {
  ChainConfig c;
  c.seed_distribution = j.value("seed_distribution", c.seed_distribution);
  c.grid_size = j.value("grid_size", c.grid_size);
  c.steps = j.value("steps", c.steps);
  c.backend = j.value("backend", c.backend);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.chain_seed = j.value("chain_seed", c.chain_seed);
  c.validate_descriptions = j.value("validate_descriptions", c.validate_descriptions);
  c.max_retries = j.value("max_retries", c.max_retries);
  return c;
}

nlohmann::json to_json(const ChainRecord& r) {
  nlohmann::json j;
  j["chain_id"] = r.chain_id;
  j["mode"] = to_string(r.mode);
  j["seed_grid"] = serialize_grid(r.seed_grid);
  j["config"] = to_json(r.config);
  j["status"] = to_string(r.status);
  j["failure"] = r.failure;
  j["steps"] = nlohmann::json::array();
  for (const auto& s : r.steps) j["steps"].push_back(to_json(s));
  return j;
}

ChainRecord record_from_json(const nlohmann::json& j) {
  try {
    ChainRecord r;
    r.chain_id = j.at("chain_id").get<std::string>();
    r.mode = parse_chain_mode(j.at("mode").get<std::string>());
    r.seed_grid = parse_grid(j.at("seed_grid").get<std::string>());
    r.config = config_from_json(j.at("config"));
    r.status = parse_status(j.value("status", "live"));
    r.failure = j.value("failure", "");
    for (const auto& s : j.at("steps")) r.steps.push_back(step_from_json(s));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("chain record: ") + e.what());
  }
}

nlohmann::json to_json(const Annotations& a) {
  nlohmann::json j;
  j["chain_id"] = a.chain_id;
  j["items"] = nlohmann::json::array();
  for (const auto& it : a.items) {
    j["items"].push_back({{"board_index", it.board_index},
                          {"description", it.description.text},
                          {"producer", producer_json(it.producer)},
                          {"timestamp", it.timestamp}});
  }
  return j;
}

Annotations annotations_from_json(const nlohmann::json& j) {
  Annotations a;
  a.chain_id = j.at("chain_id").get<std::string>();
  for (const auto& it : j.at("items")) {
    a.items.push_back({it.at("board_index").get<int>(), make_description(it.at("description").get<std::string>()),
                       producer_from(it.at("producer")), it.value("timestamp", "")});
  }
  return a;
}

// --- event log ----------------------------------------------------------------

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream touch(path_, std::ios::app);
  if (!touch) throw Error(ErrorKind::kIoError, "cannot open event log " + path_.string());
}

void EventLog::append(const nlohmann::json& event) {
  const std::string line = event.dump() + '\n';
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << line;
  out.flush();
  if (!out) throw Error(ErrorKind::kIoError, "append to " + path_.string() + " failed");
}

std::vector<nlohmann::json> EventLog::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open event log " + path.string());
  std::vector<nlohmann::json> events;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      events.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return events;
}

nlohmann::json chain_created_event(const ChainRecord& r) {
  return {{"event", "chain_created"},
          {"chain_id", r.chain_id},
          {"mode", to_string(r.mode)},
          {"seed_grid", serialize_grid(r.seed_grid)},
          {"config", to_json(r.config)}};
}

nlohmann::json step_committed_event(const std::string& chain_id, const ChainStep& step) {
  return {{"event", "step_committed"}, {"chain_id", chain_id}, {"step", to_json(step)}};
}

nlohmann::json chain_finished_event(const ChainRecord& r) {
  return {{"event", "chain_finished"}, {"chain_id", r.chain_id}, {"status", to_string(r.status)}, {"failure", r.failure}};
}

nlohmann::json annotation_added_event(const std::string& chain_id, const AnnotatedDescription& a) {
  return {{"event", "annotation_added"},
          {"chain_id", chain_id},
          {"board_index", a.board_index},
          {"description", a.description.text},
          {"producer", producer_json(a.producer)},
          {"timestamp", a.timestamp}};
}

void append_record_events(EventLog& log, const ChainRecord& r) {
  log.append(chain_created_event(r));
  for (const auto& s : r.steps) log.append(step_committed_event(r.chain_id, s));
  if (r.status != ChainStatus::kLive) log.append(chain_finished_event(r));
}

ChainStore replay_chain_events(const std::vector<nlohmann::json>& events) {
  ChainStore store;
  std::map<std::string, std::size_t> chain_pos;
  std::map<std::string, std::size_t> annot_pos;
  auto chain = [&](const std::string& id) -> ChainRecord& {
    auto it = chain_pos.find(id);
    if (it == chain_pos.end()) throw Error(ErrorKind::kParseError, "event for unknown chain " + id);
    return store.chains[it->second];
  };
  for (const auto& e : events) {
    const auto type = e.value("event", "");
    if (type == "chain_created") {
      ChainRecord r;
      r.chain_id = e.at("chain_id").get<std::string>();
      r.mode = parse_chain_mode(e.at("mode").get<std::string>());
      r.seed_grid = parse_grid(e.at("seed_grid").get<std::string>());
      r.config = config_from_json(e.at("config"));
      if (chain_pos.contains(r.chain_id)) throw Error(ErrorKind::kParseError, "duplicate chain " + r.chain_id);
      chain_pos[r.chain_id] = store.chains.size();
      store.chains.push_back(std::move(r));
    } else if (type == "step_committed") {
      auto& r = chain(e.at("chain_id").get<std::string>());
      r.steps.push_back(step_from_json(e.at("step")));
      check_alternation(r);
    } else if (type == "chain_finished") {
      auto& r = chain(e.at("chain_id").get<std::string>());
      r.status = parse_status(e.at("status").get<std::string>());
      r.failure = e.value("failure", "");
    } else if (type == "annotation_added") {
      const auto id = e.at("chain_id").get<std::string>();
      auto [it, inserted] = annot_pos.try_emplace(id, store.annotations.size());
      if (inserted) store.annotations.push_back({id, {}});
      store.annotations[it->second].items.push_back(
          {e.at("board_index").get<int>(), make_description(e.at("description").get<std::string>()),
           producer_from(e.at("producer")), e.value("timestamp", "")});
    }
  }
  return store;
}

// --- export / import ---------------------------------------------------------

namespace {

std::string step_file_name(int index, bool board) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d.%s", index, board ? "grid" : "desc");
  return buf;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text << '\n';
  if (!out) throw Error(ErrorKind::kIoError, "cannot write " + p.string());
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

void export_chains(const ChainStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (const auto& r : store.chains) {
    const auto cdir = dir / r.chain_id;
    std::filesystem::create_directories(cdir);
    auto meta = to_json(r);
    for (auto& s : meta["steps"]) s.erase("payload");
    write_text(cdir / "chain.json", meta.dump(2));
    write_text(cdir / step_file_name(0, true), serialize_grid(r.seed_grid));
    for (const auto& s : r.steps) {
      write_text(cdir / step_file_name(s.index, s.is_board()),
                 s.is_board() ? serialize_grid(std::get<Grid>(s.payload)) : std::get<Description>(s.payload).text);
    }
    index.push_back(r.chain_id);
  }
  for (const auto& a : store.annotations) {
    const auto cdir = dir / a.chain_id;
    std::filesystem::create_directories(cdir);
    write_text(cdir / "annotations.json", to_json(a).dump(2));
  }
  write_text(dir / "chains.json", index.dump(2));
}

ChainStore import_chains(const std::filesystem::path& dir) {
  ChainStore store;
  const auto index = nlohmann::json::parse(read_text(dir / "chains.json"));
  for (const auto& id_json : index) {
    const auto id = id_json.get<std::string>();
    const auto cdir = dir / id;
    auto meta = nlohmann::json::parse(read_text(cdir / "chain.json"));
    for (auto& s : meta["steps"]) {
      const bool board = s.at("kind").get<std::string>() == "board";
      s["payload"] = read_text(cdir / step_file_name(s.at("index").get<int>(), board));
    }
    meta["seed_grid"] = read_text(cdir / step_file_name(0, true));
    auto record = record_from_json(meta);
    check_alternation(record);
    store.chains.push_back(std::move(record));
    if (std::filesystem::exists(cdir / "annotations.json")) {
      store.annotations.push_back(annotations_from_json(nlohmann::json::parse(read_text(cdir / "annotations.json"))));
    }
  }
  return store;
}

}  // namespace srp
