#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "srp/bayes.hpp"
#include "srp/grid.hpp"

namespace srp {

enum class ChainMode { kUnimodal, kMultimodal };

std::string_view to_string(ChainMode mode);
ChainMode parse_chain_mode(std::string_view text);

// Free-text description. Word rule shared with the participant UI: split on
// whitespace; uniqueness is case-folded.
struct Description {
  std::string text;
  int word_count = 0;
  int unique_word_count = 0;

  friend bool operator==(const Description&, const Description&) = default;
};

inline constexpr int kMinDescriptionWords = 5;
inline constexpr int kMinUniqueDescriptionWords = 4;

Description make_description(std::string text);
// Throws kValidationFailure below 5 words or 4 unique words.
void validate_description(const Description& d);

struct Producer {
  std::string kind;  // "seed", "simulated", "llm", "participant", "identity"
  std::string id;    // participant/session id, agent seed, or LLM request id

  friend bool operator==(const Producer&, const Producer&) = default;
};

using Payload = std::variant<Grid, Description>;

// Steps are indexed in half-steps: board t sits at 2t, the description
// between boards t and t+1 at 2t+1. The seed board is index 0 and is kept
// in ChainRecord::seed_grid rather than in `steps`.
struct ChainStep {
  int index = 0;
  Payload payload;
  Producer producer;
  std::string timestamp;
  double elapsed_s = 0.0;
  int attempts = 1;

  bool is_board() const { return std::holds_alternative<Grid>(payload); }
};

struct ChainConfig {
  std::string seed_distribution = "bernoulli(0.5)";
  int grid_size = kDefaultGridSize;
  int steps = 10;  // visual boards after the seed
  std::string backend;
  std::uint64_t master_seed = 0;
  std::uint64_t chain_seed = 0;
  bool validate_descriptions = true;
  int max_retries = 3;
};

enum class ChainStatus { kLive, kComplete, kTruncated };
std::string_view to_string(ChainStatus s);

struct ChainRecord {
  std::string chain_id;
  ChainMode mode = ChainMode::kUnimodal;
  Grid seed_grid;
  std::vector<ChainStep> steps;
  ChainConfig config;
  ChainStatus status = ChainStatus::kLive;
  std::string failure;

  // Seed followed by every produced board, in order.
  std::vector<Grid> boards() const;
  // Produced boards only (seed excluded).
  std::vector<Grid> produced_boards() const;
  std::vector<Description> descriptions() const;

  // Half-step index of the next payload and whether it is a board.
  int frontier_index() const;
  bool expects_board() const;
  bool finished() const;
};

// Throws kWrongPayloadType when the step sequence violates the mode's
// alternation or indices are not gapless.
void check_alternation(const ChainRecord& record);

struct AnnotatedDescription {
  int board_index = 0;  // half-step index of the described board
  Description description;
  Producer producer;
  std::string timestamp;
};

struct Annotations {
  std::string chain_id;
  std::vector<AnnotatedDescription> items;
};

struct StepContext {
  std::string chain_id;
  int index = 0;
  int attempt = 0;
  std::uint64_t seed = 0;  // per-step stream, derived from the chain seed
};

struct BoardResult {
  Grid grid;
  Producer producer;
};

struct DescriptionResult {
  Description description;
  Producer producer;
};

// The three chain roles. Implementations must be safe to call from several
// chains concurrently; a single chain calls sequentially.
class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual std::string tag() const = 0;
  virtual BoardResult reproduce(const Grid& stimulus, const StepContext& ctx) = 0;
  virtual DescriptionResult describe(const Grid& stimulus, const StepContext& ctx) = 0;
  virtual BoardResult render(const Description& description, const StepContext& ctx) = 0;
};

// Copies boards unchanged; descriptions spell out the rows.
class IdentityBackend : public AgentBackend {
 public:
  std::string tag() const override { return "identity"; }
  BoardResult reproduce(const Grid& stimulus, const StepContext& ctx) override;
  DescriptionResult describe(const Grid& stimulus, const StepContext& ctx) override;
  BoardResult render(const Description& description, const StepContext& ctx) override;
};

// Exact Bayesian agents from an AbstractionModel; each step draws from its
// own stream derived from StepContext::seed.
class SimulatedBackend : public AgentBackend {
 public:
  explicit SimulatedBackend(BayesianAgent agent) : agent_(std::move(agent)) {}
  std::string tag() const override;
  BoardResult reproduce(const Grid& stimulus, const StepContext& ctx) override;
  DescriptionResult describe(const Grid& stimulus, const StepContext& ctx) override;
  BoardResult render(const Description& description, const StepContext& ctx) override;
  const BayesianAgent& agent() const noexcept { return agent_; }

 private:
  BayesianAgent agent_;
};

// Timestamps: kLogical derives them from the step index so simulated and
// stubbed runs are byte-reproducible; kWall records UTC wall time.
enum class ClockMode { kLogical, kWall };

std::string utc_timestamp();

struct RunOptions {
  ClockMode clock = ClockMode::kLogical;
  // Called after every committed step (used to stream events to a log).
  std::function<void(const ChainRecord&, const ChainStep&)> on_step;
};

// Runs one chain to completion. Backend or validation failures are retried
// up to config.max_retries; after that the record is returned truncated with
// the failure message and every step committed so far.
ChainRecord run_chain(AgentBackend& backend, const std::string& chain_id, const Grid& seed, ChainMode mode,
                      const ChainConfig& config, const RunOptions& opts = {});

// One description per produced board of a complete unimodal record.
Annotations annotate_posthoc(const ChainRecord& record, AgentBackend& describer,
                             const RunOptions& opts = {});

struct BatchOptions {
  int workers = 1;
  RunOptions run;
  ChainConfig config;  // steps, grid size, retries, validation; seeds are filled per chain
};

// Chain i starts from random_grid(derive_seed(master_seed, i)), so batches
// of both modes with one master seed share seed boards chain-for-chain.
std::vector<ChainRecord> batch_run(AgentBackend& backend, int n_chains, ChainMode mode,
                                   std::uint64_t master_seed, const BatchOptions& opts = {});

Grid batch_seed_grid(std::uint64_t master_seed, int chain, int grid_size = kDefaultGridSize);
std::string batch_chain_id(ChainMode mode, int chain);

// --- structured records and the append-only chain log ---------------------

nlohmann::json to_json(const ChainStep& step);
ChainStep step_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ChainConfig& c);
ChainConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ChainRecord& r);
ChainRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Annotations& a);
Annotations annotations_from_json(const nlohmann::json& j);

// Append-only JSON-lines log, one self-describing event per line. Appends
// are serialized and flushed before returning.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path);
  void append(const nlohmann::json& event);
  const std::filesystem::path& path() const noexcept { return path_; }
  static std::vector<nlohmann::json> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

nlohmann::json chain_created_event(const ChainRecord& r);
nlohmann::json step_committed_event(const std::string& chain_id, const ChainStep& step);
nlohmann::json chain_finished_event(const ChainRecord& r);
nlohmann::json annotation_added_event(const std::string& chain_id, const AnnotatedDescription& a);

struct ChainStore {
  std::vector<ChainRecord> chains;  // in creation order
  std::vector<Annotations> annotations;
};

// Rebuilds chains and annotations from chain events; other event types are
// ignored so that service logs replay too.
ChainStore replay_chain_events(const std::vector<nlohmann::json>& events);
void append_record_events(EventLog& log, const ChainRecord& r);

// Directory export: <dir>/<chain_id>/chain.json plus one NN.grid / NN.desc
// file per step (NN = half-step index) and annotations in annotations.json.
void export_chains(const ChainStore& store, const std::filesystem::path& dir);
ChainStore import_chains(const std::filesystem::path& dir);

}  // namespace srp
