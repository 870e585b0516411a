#include "srp/llm.hpp"

#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstring>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "srp/error.hpp"

namespace srp {

namespace {

std::string size_token(int n) { return std::to_string(n) + "x" + std::to_string(n); }

std::string with_size(std::string text, int n) {
  if (n == kDefaultGridSize) return text;
  const std::string from = "7x7";
  const std::string to = size_token(n);
  for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
  return text;
}

}  // namespace

std::string reproduce_prompt(int grid_size) {
  return with_size(
      "This image is a 7x7 grid represented as an image of red and white tiles. Red corresponds to 1 and white "
      "corresponds to 0. Please print the grid represented as a 2-d matrix of 1s (red) and 0s (white). Be as "
      "accurate as possible. Only respond with the matrix such that the output can be accepted by np.loadtxt. No "
      "quotation marks.",
      grid_size);
}

std::string describe_prompt(int grid_size) {
  return with_size(
      "The image presented here is a 7x7 grid of red and white tiles. Please write a description of the grid such "
      "that a person reading the description should be able to reconstruct the board. In doing so, please\n"
      "keep in mind the following instructions:\n"
      "\n"
      "Describe all important details relevant for reconstruction.\n"
      "Try to use simple instructions.\n"
      "\n"
      "Descriptions should contain at least 5 words.\n"
      "\n"
      "Descriptions should contain at least 4 unique words.",
      grid_size);
}

std::string render_prompt(const std::string& description, int grid_size) {
  return with_size(
             "You are going to be given a description of a 7x7 grid of red and white tiles. \n"
             "Please print the grid being described represented as a 2-d matrix of 1s (red) and 0s (white). Red "
             "corresponds to 1 and white corresponds to 0. Be as accurate as possible. Only respond with the matrix "
             "such that the output can be accepted by np.loadtxt. No quotation marks. Here is the description: ",
             grid_size) +
         description;
}

// --- reply parsing ---------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

using Row = std::vector<std::uint8_t>;

std::optional<Row> tokens_to_row(std::string line) {
  static const std::regex kArrayCall(R"(\b(?:np\.)?array\s*\()");
  line = std::regex_replace(line, kArrayCall, " ");
  for (char& c : line) {
    if (c != '\0' && std::strchr("[](),|`\"'", c) != nullptr) c = ' ';
  }
  std::istringstream in(line);
  std::vector<std::string> tokens;
  for (std::string t; in >> t;) tokens.push_back(t);
  if (tokens.empty()) return std::nullopt;

  static const std::regex kCell(R"([01](?:\.0*)?)");
  static const std::regex kPacked(R"([01]{2,})");
  Row row;
  if (tokens.size() == 1 && std::regex_match(tokens[0], kPacked)) {
    for (char c : tokens[0]) row.push_back(static_cast<std::uint8_t>(c - '0'));
    return row;
  }
  for (const auto& t : tokens) {
    if (!std::regex_match(t, kCell)) return std::nullopt;
    row.push_back(static_cast<std::uint8_t>(t[0] - '0'));
  }
  return row;
}

// A line read as a matrix row, both as-is and with a leading "Row 3:" or
// "3." label removed. "1. 0. 1." is ambiguous, so the choice is made per run.
struct RowReading {
  std::optional<Row> raw;
  std::optional<Row> unlabeled;
};

std::optional<RowReading> read_row(const std::string& line) {
  static const std::regex kLabel(R"(^\s*(?:row\s*\d+|\d+)\s*[:.)]\s*)", std::regex::icase);
  RowReading r{tokens_to_row(line), std::nullopt};
  std::smatch m;
  if (std::regex_search(line, m, kLabel)) r.unlabeled = tokens_to_row(m.suffix().str());
  if (!r.raw && !r.unlabeled) return std::nullopt;
  return r;
}

std::optional<std::vector<Row>> square_reading(const std::vector<RowReading>& run, std::size_t n, bool unlabeled) {
  if (run.size() != n) return std::nullopt;
  std::vector<Row> rows;
  for (const auto& r : run) {
    const auto& pick = unlabeled && r.unlabeled ? r.unlabeled : r.raw;
    if (!pick || pick->size() != n) return std::nullopt;
    rows.push_back(*pick);
  }
  return rows;
}

}  // namespace

Grid parse_matrix(std::string_view text, int grid_size) {
  if (grid_size < 1) throw Error(ErrorKind::kInvalidArgument, "grid size must be positive");
  static const std::regex kRowBreak(R"(\]\s*,?\s*\[)");
  std::string split = std::regex_replace(std::string(text), kRowBreak, "]\n[");
  std::replace(split.begin(), split.end(), ';', '\n');

  // Runs of consecutive matrix rows; prose lines and fences end a run, blank
  // lines do not.
  std::vector<std::vector<RowReading>> runs;
  bool open = false;
  std::istringstream in(split);
  for (std::string line; std::getline(in, line);) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.rfind("```", 0) == 0) {
      open = false;
      continue;
    }
    if (auto row = read_row(t)) {
      if (!open) runs.emplace_back();
      runs.back().push_back(std::move(*row));
      open = true;
    } else {
      open = false;
    }
  }
  if (runs.empty()) throw Error(ErrorKind::kParseFailure, "no matrix rows of 0/1 tokens found in reply");

  const auto n = static_cast<std::size_t>(grid_size);
  for (const auto& run : runs) {
    auto rows = square_reading(run, n, false);
    if (!rows) rows = square_reading(run, n, true);
    if (!rows) continue;
    Row tiles;
    for (const auto& r : *rows) tiles.insert(tiles.end(), r.begin(), r.end());
    return Grid(grid_size, std::move(tiles));
  }

  const auto& biggest = *std::max_element(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
    return a.size() < b.size();
  });
  std::ostringstream msg;
  msg << "expected " << grid_size << " rows of " << grid_size << " tiles, found " << biggest.size() << " rows";
  for (std::size_t i = 0; i < biggest.size(); ++i) {
    const auto& r = biggest[i].raw ? biggest[i].raw : biggest[i].unlabeled;
    if (r->size() != n) {
      msg << "; row " << i + 1 << " has " << r->size() << " tiles";
      break;
    }
  }
  throw Error(ErrorKind::kSizeMismatch, msg.str());
}

// --- config and exchange log -----------------------------------------------

void LlmClientConfig::validate() const {
  if (max_retries < 0) throw Error(ErrorKind::kInvalidArgument, "max_retries must be >= 0");
  if (!(timeout_s > 0.0)) throw Error(ErrorKind::kInvalidArgument, "timeout must be > 0");
  if (cell_px < 1) throw Error(ErrorKind::kInvalidArgument, "cell_px must be >= 1");
  if (model.empty()) throw Error(ErrorKind::kInvalidArgument, "model must be set");
  parse_url(endpoint);
}

nlohmann::json LlmClientConfig::to_json() const {
  nlohmann::json j{{"endpoint", endpoint},       {"model", model},
                   {"token_env", token_env},     {"max_retries", max_retries},
                   {"timeout_s", timeout_s},     {"cell_px", cell_px},
                   {"requests_per_second", requests_per_second},
                   {"stimulus", stimulus == StimulusEncoding::kImage ? "image" : "matrix-text"},
                   {"max_tokens", max_tokens}};
  j["temperature"] = temperature ? nlohmann::json(*temperature) : nlohmann::json(nullptr);
  return j;
}

LlmClientConfig LlmClientConfig::from_json(const nlohmann::json& j) {
  LlmClientConfig c;
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model = j.value("model", c.model);
  c.token_env = j.value("token_env", c.token_env);
  if (j.contains("temperature") && !j["temperature"].is_null()) c.temperature = j["temperature"].get<double>();
  c.max_retries = j.value("max_retries", c.max_retries);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.cell_px = j.value("cell_px", c.cell_px);
  c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
  const std::string mode = j.value("stimulus", std::string("image"));
  if (mode == "image") {
    c.stimulus = StimulusEncoding::kImage;
  } else if (mode == "matrix-text") {
    c.stimulus = StimulusEncoding::kMatrixText;
  } else {
    throw Error(ErrorKind::kInvalidArgument, "unknown stimulus encoding '" + mode + "'");
  }
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.validate();
  return c;
}

nlohmann::json LlmExchange::to_json() const {
  nlohmann::json j{{"request_id", request_id},
                   {"chain_id", chain_id},
                   {"step_index", step_index},
                   {"role", role},
                   {"attempt", attempt},
                   {"prompt", prompt},
                   {"image_attached", image_attached},
                   {"model", model},
                   {"http_status", http_status},
                   {"raw_response", raw_response},
                   {"parse_outcome", parse_outcome},
                   {"latency_s", latency_s}};
  j["temperature"] = temperature ? nlohmann::json(*temperature) : nlohmann::json(nullptr);
  return j;
}

ExchangeLog::ExchangeLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
}

void ExchangeLog::record(const LlmExchange& e) {
  std::lock_guard lock(mutex_);
  entries_.push_back(e);
  if (path_) {
    std::ofstream out(*path_, std::ios::app);
    if (!out) throw Error(ErrorKind::kIoError, "cannot append to " + path_->string());
    out << e.to_json().dump() << '\n';
    out.flush();
  }
}

std::vector<LlmExchange> ExchangeLog::snapshot() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

// --- client ----------------------------------------------------------------

LlmClient::LlmClient(LlmClientConfig cfg, std::shared_ptr<ExchangeLog> log)
    : cfg_(std::move(cfg)), log_(log ? std::move(log) : std::make_shared<ExchangeLog>()), limiter_(cfg_.requests_per_second) {
  cfg_.validate();
  url_ = parse_url(cfg_.endpoint);
}

std::string LlmClient::token() const {
  if (cfg_.token_env.empty()) return {};
  const char* v = std::getenv(cfg_.token_env.c_str());
  return v ? std::string(v) : std::string();
}

namespace {

std::atomic<std::uint64_t> g_anonymous_requests{0};

std::string reply_content(const std::string& body) {
  const auto j = nlohmann::json::parse(body);
  const auto& content = j.at("choices").at(0).at("message").at("content");
  if (content.is_string()) return content.get<std::string>();
  std::string out;
  for (const auto& part : content) {
    if (part.value("type", "") == "text") out += part.value("text", "");
  }
  return out;
}

}  // namespace

template <typename T>
std::pair<T, LlmResult> LlmClient::converse(const std::string& role, const std::string& prompt,
                                            const std::optional<Grid>& image, const StepContext& ctx,
                                            const std::function<T(const std::string&)>& accept) {
  nlohmann::json first_content;
  std::string sent_prompt = prompt;
  bool attach = false;
  if (image && cfg_.stimulus == StimulusEncoding::kMatrixText) {
    sent_prompt += "\n\n" + serialize_grid(*image);
  }
  if (image && cfg_.stimulus == StimulusEncoding::kImage) {
    attach = true;
    const auto png = render_image(*image, cfg_.cell_px).png;
    first_content = nlohmann::json::array(
        {{{"type", "text"}, {"text", sent_prompt}},
         {{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}}});
  } else {
    first_content = sent_prompt;
  }
  nlohmann::json messages = nlohmann::json::array({{{"role", "user"}, {"content", first_content}}});

  std::string base_id;
  if (ctx.chain_id.empty()) {
    base_id = "req-" + std::to_string(g_anonymous_requests.fetch_add(1)) + "-" + role;
  } else {
    base_id = "req-" + ctx.chain_id + "-" + std::to_string(ctx.index) + "-" + role + "-a" + std::to_string(ctx.attempt);
  }

  std::vector<std::pair<std::string, std::string>> headers;
  if (const auto tok = token(); !tok.empty()) headers.emplace_back("Authorization", "Bearer " + tok);

  Error last(ErrorKind::kParseFailure, "no attempt made");
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    LlmExchange ex;
    ex.request_id = base_id + "-t" + std::to_string(attempt);
    ex.chain_id = ctx.chain_id;
    ex.step_index = ctx.index;
    ex.role = role;
    ex.attempt = attempt;
    // After a transport failure the conversation is resent unchanged.
    ex.prompt = messages.size() == 1 ? sent_prompt : messages.back()["content"].get<std::string>();
    ex.image_attached = attach;
    ex.model = cfg_.model;
    ex.temperature = cfg_.temperature;

    nlohmann::json body{{"model", cfg_.model}, {"messages", messages}, {"max_tokens", cfg_.max_tokens}};
    if (cfg_.temperature) body["temperature"] = *cfg_.temperature;

    limiter_.acquire();
    const auto t0 = std::chrono::steady_clock::now();
    std::string diagnostic;
    std::optional<std::string> content;
    try {
      const auto res = http_post_json(url_, body.dump(), headers, cfg_.timeout_s);
      ex.http_status = res.status;
      ex.raw_response = res.body;
      if (res.status != 200) {
        last = Error(ErrorKind::kTransportError, "HTTP " + std::to_string(res.status));
      } else {
        try {
          content = reply_content(res.body);
        } catch (const std::exception& e) {
          last = Error(ErrorKind::kTransportError, std::string("malformed completion body: ") + e.what());
        }
      }
    } catch (const Error& e) {
      last = e;
    }
    ex.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (content) {
      try {
        T value = accept(*content);
        ex.parse_outcome = "ok";
        log_->record(ex);
        return {std::move(value), LlmResult{ex.request_id, attempt}};
      } catch (const Error& e) {
        last = e;
      }
    }
    ex.parse_outcome = last.what();
    log_->record(ex);

    if (content) {
      messages.push_back({{"role", "assistant"}, {"content", *content}});
      messages.push_back({{"role", "user"},
                          {"content", std::string("Your previous reply could not be used (") + last.what() +
                                          "). Please answer again following the instructions exactly."}});
    }
  }
  const std::string suffix = " after " + std::to_string(cfg_.max_retries + 1) + " attempts";
  throw Error(last.kind(), std::string(last.what()) + suffix);
}

std::pair<Grid, LlmResult> LlmClient::reproduce(const Grid& g, const StepContext& ctx) {
  const int n = g.size();
  return converse<Grid>("reproduce", reproduce_prompt(n), g, ctx,
                        [n](const std::string& reply) { return parse_matrix(reply, n); });
}

std::pair<Description, LlmResult> LlmClient::describe(const Grid& g, const StepContext& ctx) {
  return converse<Description>("describe", describe_prompt(g.size()), g, ctx, [](const std::string& reply) {
    auto d = make_description(trim(reply));
    validate_description(d);
    return d;
  });
}

std::pair<Grid, LlmResult> LlmClient::render(const Description& d, int grid_size, const StepContext& ctx) {
  return converse<Grid>("render", render_prompt(d.text, grid_size), std::nullopt, ctx,
                        [grid_size](const std::string& reply) { return parse_matrix(reply, grid_size); });
}

std::pair<Grid, LlmResult> llm_reproduce(LlmClient& client, const Grid& g) { return client.reproduce(g); }
std::pair<Description, LlmResult> llm_describe(LlmClient& client, const Grid& g) { return client.describe(g); }
std::pair<Grid, LlmResult> llm_render(LlmClient& client, const Description& d, int grid_size) {
  return client.render(d, grid_size);
}

BoardResult LlmBackend::reproduce(const Grid& stimulus, const StepContext& ctx) {
  auto [g, r] = client_->reproduce(stimulus, ctx);
  return {std::move(g), Producer{"llm", r.request_id}};
}

DescriptionResult LlmBackend::describe(const Grid& stimulus, const StepContext& ctx) {
  auto [d, r] = client_->describe(stimulus, ctx);
  return {std::move(d), Producer{"llm", r.request_id}};
}

BoardResult LlmBackend::render(const Description& description, const StepContext& ctx) {
  auto [g, r] = client_->render(description, grid_size_, ctx);
  return {std::move(g), Producer{"llm", r.request_id}};
}

// --- image decoding --------------------------------------------------------

Grid decode_grid_image(const std::vector<std::uint8_t>& png, int grid_size) {
  auto fail = [](const std::string& m) { return Error(ErrorKind::kParseError, "png: " + m); };
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (png.size() < 8 || !std::equal(kSig, kSig + 8, png.begin())) throw fail("bad signature");
  auto u32 = [&](std::size_t at) {
    return (std::uint32_t{png[at]} << 24) | (std::uint32_t{png[at + 1]} << 16) | (std::uint32_t{png[at + 2]} << 8) |
           std::uint32_t{png[at + 3]};
  };
  std::uint32_t width = 0, height = 0;
  std::vector<std::uint8_t> idat;
  for (std::size_t pos = 8; pos + 12 <= png.size();) {
    const std::uint32_t len = u32(pos);
    const std::string type(png.begin() + static_cast<std::ptrdiff_t>(pos + 4), png.begin() + static_cast<std::ptrdiff_t>(pos + 8));
    const std::size_t data = pos + 8;
    if (data + len + 4 > png.size()) throw fail("truncated chunk");
    if (type == "IHDR") {
      width = u32(data);
      height = u32(data + 4);
      if (png[data + 8] != 8 || png[data + 9] != 2 || png[data + 12] != 0) throw fail("unsupported pixel format");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), png.begin() + static_cast<std::ptrdiff_t>(data),
                  png.begin() + static_cast<std::ptrdiff_t>(data + len));
    } else if (type == "IEND") {
      break;
    }
    pos = data + len + 4;
  }
  if (width == 0 || height == 0 || width != height) throw fail("missing or non-square header");
  if (width % static_cast<std::uint32_t>(grid_size) != 0) throw fail("image size is not a multiple of the grid size");

  const std::size_t stride = std::size_t{width} * 3 + 1;
  std::vector<std::uint8_t> raw(stride * height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK || raw_len != raw.size()) {
    throw fail("corrupt image data");
  }
  const int cell = static_cast<int>(width) / grid_size;
  Grid g(grid_size);
  for (int r = 0; r < grid_size; ++r) {
    const std::uint8_t* row = raw.data() + static_cast<std::size_t>(r * cell + cell / 2) * stride;
    if (row[0] != 0) throw fail("unsupported row filter");
    for (int c = 0; c < grid_size; ++c) {
      const std::uint8_t green = row[1 + 3 * (c * cell + cell / 2) + 1];
      g.set(r, c, green < 128 ? 1 : 0);
    }
  }
  return g;
}

// --- stub server -----------------------------------------------------------

struct StubLlmServer::Impl {
  Options opts;
  httplib::Server server;
  std::thread thread;
  mutable std::mutex mutex;
  std::deque<std::string> scripted;
  std::vector<nlohmann::json> requests;
  std::uint64_t served = 0;
  std::uint64_t authorized = 0;
};

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string first_user_text(const nlohmann::json& request, std::string* image_url) {
  for (const auto& m : request.at("messages")) {
    if (m.value("role", "") != "user") continue;
    const auto& content = m.at("content");
    if (content.is_string()) return content.get<std::string>();
    std::string text;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") text += part.value("text", "");
      if (part.value("type", "") == "image_url" && image_url) *image_url = part.at("image_url").value("url", "");
    }
    return text;
  }
  return {};
}

int prompt_grid_size(const std::string& prompt) {
  static const std::regex kSize(R"((\d+)x\1)");
  std::smatch m;
  if (std::regex_search(prompt, m, kSize)) return std::stoi(m[1]);
  return kDefaultGridSize;
}

std::string matrix_text(const Grid& g) {
  std::string out;
  for (int r = 0; r < g.size(); ++r) {
    for (int c = 0; c < g.size(); ++c) {
      if (c) out += ' ';
      out += g.at(r, c) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

}  // namespace

StubLlmServer::StubLlmServer() : StubLlmServer(Options{}) {}

StubLlmServer::StubLlmServer(Options opts) : impl_(std::make_unique<Impl>()) {
  impl_->opts = opts;
  impl_->server.Post(R"(.*/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json request;
    try {
      request = nlohmann::json::parse(req.body);
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    std::optional<std::string> scripted;
    std::uint64_t n = 0;
    {
      std::lock_guard lock(impl_->mutex);
      impl_->requests.push_back(request);
      n = impl_->served++;
      impl_->authorized += req.has_header("Authorization");
      if (!impl_->scripted.empty()) {
        scripted = std::move(impl_->scripted.front());
        impl_->scripted.pop_front();
      }
    }
    if (scripted && scripted->rfind("!status ", 0) == 0) {
      res.status = std::stoi(scripted->substr(8));
      res.set_content(nlohmann::json{{"error", {{"message", "scripted failure"}}}}.dump(), "application/json");
      return;
    }
    std::string reply;
    try {
      reply = scripted ? *scripted : answer(request);
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", {{"message", e.what()}}}}.dump(), "application/json");
      return;
    }
    const nlohmann::json body{
        {"id", "stub-" + std::to_string(n)},
        {"object", "chat.completion"},
        {"model", request.value("model", "stub")},
        {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", reply}}}, {"finish_reason", "stop"}}}}};
    res.set_content(body.dump(), "application/json");
  });
}

StubLlmServer::~StubLlmServer() { stop(); }

int StubLlmServer::start(int port) {
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
  } else if (impl_->server.bind_to_port("127.0.0.1", port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ < 0) throw Error(ErrorKind::kTransportError, "stub server could not bind");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void StubLlmServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void StubLlmServer::listen_blocking(const std::string& host, int port) {
  port_ = port;
  if (!impl_->server.listen(host, port)) throw Error(ErrorKind::kTransportError, "stub server could not listen");
}

std::string StubLlmServer::endpoint() const {
  return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
}

void StubLlmServer::push_reply(std::string reply) {
  std::lock_guard lock(impl_->mutex);
  impl_->scripted.push_back(std::move(reply));
}

std::vector<nlohmann::json> StubLlmServer::requests() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->requests;
}

std::uint64_t StubLlmServer::authorized_requests() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->authorized;
}

std::string StubLlmServer::answer(const nlohmann::json& request) const {
  std::string image_url;
  const std::string prompt = first_user_text(request, &image_url);
  const int n = prompt_grid_size(prompt);
  const std::uint64_t h = fnv1a(prompt + image_url);

  auto stimulus = [&]() -> Grid {
    static const std::string kPrefix = "data:image/png;base64,";
    if (image_url.rfind(kPrefix, 0) == 0) return decode_grid_image(base64_decode(image_url.substr(kPrefix.size())), n);
    const auto pos = prompt.find("\n\n", prompt.find("No quotation marks."));
    return parse_matrix(pos == std::string::npos ? prompt : prompt.substr(pos), n);
  };
  auto perturb = [&](Grid g) {
    if (static_cast<double>(h % 1000) / 1000.0 < impl_->opts.flip_probability) {
      const auto tile = static_cast<int>((h >> 10) % static_cast<std::uint64_t>(n * n));
      g.set(tile / n, tile % n, g.at(tile / n, tile % n) ? 0 : 1);
    }
    return g;
  };
  auto decorate = [&](const std::string& m) -> std::string {
    const int k = impl_->opts.decorate_every;
    if (k <= 0) return m;
    switch ((h >> 20) % static_cast<std::uint64_t>(k * 2)) {
      case 0: return "```\n" + m + "```";
      case 1: return "Here is the matrix:\n\n" + m;
      default: return m;
    }
  };

  if (prompt.rfind("This image is", 0) == 0) return decorate(matrix_text(perturb(stimulus())));
  if (prompt.rfind("The image presented here", 0) == 0) {
    const Grid g = stimulus();
    std::string out = "The board, row by row from the top:";
    for (int r = 0; r < n; ++r) {
      out += " row " + std::to_string(r + 1) + " is ";
      for (int c = 0; c < n; ++c) out += g.at(r, c) ? '1' : '0';
      out += r + 1 < n ? "," : ".";
    }
    return out;
  }
  if (prompt.rfind("You are going to be given", 0) == 0) {
    static const std::string kMarker = "Here is the description: ";
    const auto at = prompt.find(kMarker);
    const std::string description = at == std::string::npos ? std::string() : prompt.substr(at + kMarker.size());
    static const std::regex kRow("\\b[01]+\\b");
    std::vector<std::uint8_t> tiles;
    for (auto it = std::sregex_iterator(description.begin(), description.end(), kRow); it != std::sregex_iterator();
         ++it) {
      const std::string bits = it->str();
      if (static_cast<int>(bits.size()) != n) continue;
      for (char c : bits) tiles.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    Grid g(n);
    if (tiles.size() == static_cast<std::size_t>(n * n)) g = Grid(n, std::move(tiles));
    return decorate(matrix_text(perturb(g)));
  }
  return "I'm not sure what you would like me to do with this.";
}

}  // namespace srp
