#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "srp/chain.hpp"
#include "srp/grid.hpp"
#include "srp/http.hpp"

namespace srp {

// Prompt texts for the three machine roles. For 7x7 boards these are the
// exact strings sent over the wire; other sizes substitute "NxN".
std::string reproduce_prompt(int grid_size = kDefaultGridSize);
std::string describe_prompt(int grid_size = kDefaultGridSize);
// The description is appended at the insertion point at the end of the prompt.
std::string render_prompt(const std::string& description, int grid_size = kDefaultGridSize);

// Extracts an N x N binary matrix from a model reply. Code fences, prose,
// brackets and commas are tolerated; rows may be space/comma separated or
// packed. Throws kParseFailure when no matrix is present and kSizeMismatch
// when a matrix of the wrong shape is found.
Grid parse_matrix(std::string_view text, int grid_size = kDefaultGridSize);

enum class StimulusEncoding { kImage, kMatrixText };

struct LlmClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4-vision-preview";
  std::string token_env = "OPENAI_API_KEY";  // name of the variable, never its value
  std::optional<double> temperature;         // unset: API default
  int max_retries = 3;
  double timeout_s = 60.0;
  int cell_px = 20;
  double requests_per_second = 0.0;  // global limit, 0 = unlimited
  StimulusEncoding stimulus = StimulusEncoding::kImage;
  int max_tokens = 512;

  void validate() const;
  nlohmann::json to_json() const;  // token_env name only
  static LlmClientConfig from_json(const nlohmann::json& j);
};

// One HTTP round trip, persisted for every call including failures.
struct LlmExchange {
  std::string request_id;
  std::string chain_id;
  int step_index = 0;
  std::string role;  // reproduce | describe | render
  int attempt = 0;   // 0 = first try, n = n-th retry
  std::string prompt;
  bool image_attached = false;
  std::string model;
  std::optional<double> temperature;
  int http_status = 0;
  std::string raw_response;
  std::string parse_outcome;  // "ok" or the diagnostic
  double latency_s = 0.0;

  nlohmann::json to_json() const;
};

class ExchangeLog {
 public:
  ExchangeLog() = default;
  explicit ExchangeLog(std::filesystem::path path);
  void record(const LlmExchange& e);
  std::vector<LlmExchange> snapshot() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::vector<LlmExchange> entries_;
};

struct LlmResult {
  std::string request_id;  // of the successful call
  int retries = 0;
};

// Chat-completions client for the three chain roles. Shareable across
// threads; calls within one chain are issued sequentially by the caller.
class LlmClient {
 public:
  LlmClient(LlmClientConfig cfg, std::shared_ptr<ExchangeLog> log);

  const LlmClientConfig& config() const noexcept { return cfg_; }
  ExchangeLog& log() noexcept { return *log_; }

  std::pair<Grid, LlmResult> reproduce(const Grid& g, const StepContext& ctx = {});
  std::pair<Description, LlmResult> describe(const Grid& g, const StepContext& ctx = {});
  std::pair<Grid, LlmResult> render(const Description& d, int grid_size = kDefaultGridSize,
                                    const StepContext& ctx = {});

 private:
  // Sends the conversation, validates the reply with `accept`, and on
  // failure appends the reply plus a corrective message and retries.
  template <typename T>
  std::pair<T, LlmResult> converse(const std::string& role, const std::string& prompt,
                                   const std::optional<Grid>& image, const StepContext& ctx,
                                   const std::function<T(const std::string&)>& accept);

  std::string token() const;

  LlmClientConfig cfg_;
  Url url_;
  std::shared_ptr<ExchangeLog> log_;
  RateLimiter limiter_;
};

std::pair<Grid, LlmResult> llm_reproduce(LlmClient& client, const Grid& g);
std::pair<Description, LlmResult> llm_describe(LlmClient& client, const Grid& g);
std::pair<Grid, LlmResult> llm_render(LlmClient& client, const Description& d, int grid_size = kDefaultGridSize);

class LlmBackend : public AgentBackend {
 public:
  explicit LlmBackend(std::shared_ptr<LlmClient> client, int grid_size = kDefaultGridSize)
      : client_(std::move(client)), grid_size_(grid_size) {}
  std::string tag() const override { return "llm:" + client_->config().model; }
  BoardResult reproduce(const Grid& stimulus, const StepContext& ctx) override;
  DescriptionResult describe(const Grid& stimulus, const StepContext& ctx) override;
  BoardResult render(const Description& description, const StepContext& ctx) override;

 private:
  std::shared_ptr<LlmClient> client_;
  int grid_size_;
};

// Decodes a PNG produced by render_image back to tiles by sampling cell
// centres. Only the encoder's own layout (8-bit RGB, filter 0) is accepted.
Grid decode_grid_image(const std::vector<std::uint8_t>& png, int grid_size);

// Deterministic chat-completions stand-in. By default it answers each role
// from the request itself: reproduce/describe decode the attached image (or
// matrix text), render reads the rows back out of the description. Replies
// are a pure function of the request bytes, so chains are reproducible.
// Scripted replies, when queued, take precedence in FIFO order.
class StubLlmServer {
 public:
  struct Options {
    // Flip one tile, chosen by a hash of the request, with this probability
    // (also hash-derived) so chains move.
    double flip_probability = 0.3;
    // Wrap roughly one in k matrix replies in prose or code fences (0 = never).
    int decorate_every = 3;
  };

  StubLlmServer();
  explicit StubLlmServer(Options opts);
  ~StubLlmServer();
  StubLlmServer(const StubLlmServer&) = delete;
  StubLlmServer& operator=(const StubLlmServer&) = delete;

  // Binds to 127.0.0.1 on the given port (0 = any free port) and serves on
  // a background thread.
  int start(int port = 0);
  void stop();
  // Blocks the calling thread serving requests (CLI use).
  void listen_blocking(const std::string& host, int port);
  int port() const noexcept { return port_; }
  std::string endpoint() const;

  // A scripted reply of the form "!status <code>" answers with that HTTP
  // status and an error body instead of a completion.
  void push_reply(std::string reply);
  std::vector<nlohmann::json> requests() const;
  // Requests that carried an Authorization header (the value is not kept).
  std::uint64_t authorized_requests() const;

  // Pure answer function; exposed for tests.
  std::string answer(const nlohmann::json& request) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace srp
