#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "srp/llm.hpp"
#include "support.hpp"

using namespace srp;
using namespace srp::test;
using nlohmann::json;

namespace {

constexpr const char* kSecret = "sk-unit-test-secret-4f1c";

LlmClientConfig stub_config(const StubLlmServer& stub, int max_retries = 3) {
  LlmClientConfig cfg;
  cfg.endpoint = stub.endpoint();
  cfg.max_retries = max_retries;
  cfg.timeout_s = 10;
  cfg.token_env = "SRP_UNIT_TEST_TOKEN";
  return cfg;
}

std::string matrix_reply(const Grid& g) {
  std::string s;
  for (int r = 0; r < g.size(); ++r) {
    for (int c = 0; c < g.size(); ++c) s += c ? (g.at(r, c) ? " 1" : " 0") : (g.at(r, c) ? "1" : "0");
    s += "\n";
  }
  return s;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

}  // namespace

TEST_CASE("prompts match the golden files byte for byte") {
  CHECK(reproduce_prompt() == read_file(data_dir() / "prompts" / "reproduce_7x7.txt"));
  CHECK(describe_prompt() == read_file(data_dir() / "prompts" / "describe_7x7.txt"));
  const std::string prefix = read_file(data_dir() / "prompts" / "render_prefix_7x7.txt");
  CHECK(render_prompt("a red cross") == prefix + "a red cross");
}

TEST_CASE("description appears exactly once in the render prompt") {
  const std::string d = "zebra-marker tiles along the left edge";
  const std::string p = render_prompt(d);
  CHECK(count_occurrences(p, d) == 1);
  CHECK(p.size() >= d.size());
  CHECK(p.substr(p.size() - d.size()) == d);
}

TEST_CASE("other grid sizes substitute the size") {
  CHECK(reproduce_prompt(5).find("5x5") != std::string::npos);
  CHECK(reproduce_prompt(5).find("7x7") == std::string::npos);
  CHECK(describe_prompt(3).find("7x7") == std::string::npos);
  CHECK(render_prompt("x y z w v", 4).find("4x4") != std::string::npos);
}

TEST_CASE("reply corpus") {
  std::ifstream in(data_dir() / "llm_replies.jsonl");
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json c = json::parse(line);
    ++cases;
    const std::string expect = c["expect"];
    const int n = c["grid_size"];
    CAPTURE(c["name"].get<std::string>());
    if (expect == "ok") {
      Grid g = parse_matrix(c["reply"].get<std::string>(), n);
      CHECK(serialize_grid(g) == c["grid"].get<std::string>());
    } else if (expect == "parse-failure") {
      CHECK_THROWS_KIND(parse_matrix(c["reply"].get<std::string>(), n), ErrorKind::kParseFailure);
    } else {
      CHECK(expect == "size-mismatch");
      CHECK_THROWS_KIND(parse_matrix(c["reply"].get<std::string>(), n), ErrorKind::kSizeMismatch);
    }
  }
  CHECK(cases == 50);
}

TEST_CASE("size mismatch diagnostic names the row") {
  try {
    parse_matrix("1 0 1\n0 1\n1 1 1", 3);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSizeMismatch);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("config") {
  LlmClientConfig cfg;
  CHECK(cfg.model == "gpt-4-vision-preview");
  CHECK_NOTHROW(cfg.validate());
  cfg.max_retries = -1;
  CHECK_THROWS_KIND(cfg.validate(), ErrorKind::kInvalidArgument);
  LlmClientConfig t;
  t.temperature = 0.7;
  t.stimulus = StimulusEncoding::kMatrixText;
  auto back = LlmClientConfig::from_json(t.to_json());
  CHECK(back.temperature == 0.7);
  CHECK(back.stimulus == StimulusEncoding::kMatrixText);
  CHECK_THROWS_KIND(LlmClientConfig::from_json({{"stimulus", "audio"}}), ErrorKind::kInvalidArgument);
}

TEST_CASE("png decoder reads our renderer") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    int n = 2 + static_cast<int>(rng() % 8);
    Grid g = random_grid(rng, n);
    CHECK(decode_grid_image(render_image(g, 1 + static_cast<int>(rng() % 25)).png, n) == g);
  }
  CHECK_THROWS_KIND(decode_grid_image({1, 2, 3}, 7), ErrorKind::kParseError);
}

TEST_CASE("stub answers are pure functions of the request") {
  StubLlmServer stub;
  json req{{"model", "m"},
           {"messages", json::array({{{"role", "user"}, {"content", render_prompt("row 1 is 1010101, fine")}}})}};
  CHECK(stub.answer(req) == stub.answer(req));
  StubLlmServer plain(StubLlmServer::Options{0.0, 0});
  Grid g = random_grid(4);
  std::string desc = "The board: ";
  for (int r = 0; r < 7; ++r) desc += serialize_grid(g).substr(static_cast<std::size_t>(r * 8), 7) + " ";
  json render{{"model", "m"}, {"messages", json::array({{{"role", "user"}, {"content", render_prompt(desc)}}})}};
  CHECK(parse_matrix(plain.answer(render)) == g);
}

TEST_CASE("client sends images and parses replies") {
  StubLlmServer stub(StubLlmServer::Options{0.0, 0});
  stub.start();
  LlmClient client(stub_config(stub), nullptr);
  Grid g = random_grid(5);
  auto [out, res] = client.reproduce(g);
  CHECK(out == g);
  CHECK(res.retries == 0);
  auto reqs = stub.requests();
  REQUIRE(reqs.size() == 1);
  const auto& content = reqs[0]["messages"][0]["content"];
  REQUIRE(content.is_array());
  CHECK(content[0]["text"] == reproduce_prompt());
  const std::string url = content[1]["image_url"]["url"];
  CHECK(url.rfind("data:image/png;base64,", 0) == 0);
  CHECK(decode_grid_image(base64_decode(url.substr(22)), 7) == g);
  CHECK(reqs[0]["model"] == "gpt-4-vision-preview");
  CHECK(!reqs[0].contains("temperature"));

  auto [d, dres] = client.describe(g);
  CHECK(d.word_count >= 5);
  auto [back, rres] = client.render(d);
  CHECK(back == g);
  stub.stop();
}

TEST_CASE("matrix-text stimulus") {
  StubLlmServer stub(StubLlmServer::Options{0.0, 0});
  stub.start();
  auto cfg = stub_config(stub);
  cfg.stimulus = StimulusEncoding::kMatrixText;
  cfg.temperature = 0.0;
  LlmClient client(cfg, nullptr);
  Grid g = random_grid(6);
  CHECK(client.reproduce(g).first == g);
  auto req = stub.requests().at(0);
  const auto& content = req["messages"][0]["content"];
  REQUIRE(content.is_string());
  CHECK(content.get<std::string>() == reproduce_prompt() + "\n\n" + serialize_grid(g));
  CHECK(req["temperature"] == 0.0);
  stub.stop();
}

TEST_CASE("malformed twice then valid gives two retries") {
  StubLlmServer stub;
  stub.start();
  auto log = std::make_shared<ExchangeLog>();
  LlmClient client(stub_config(stub), log);
  Grid g = random_grid(7);
  stub.push_reply("I cannot see the image clearly.");
  stub.push_reply("1 0 1\n0 1 0");
  stub.push_reply(matrix_reply(g));
  auto [out, res] = client.reproduce(g, StepContext{"chain-x", 4, 0, 0});
  CHECK(out == g);
  CHECK(res.retries == 2);
  CHECK(res.request_id == "req-chain-x-4-reproduce-a0-t2");
  auto entries = log->snapshot();
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].parse_outcome.find("parse-failure") != std::string::npos);
  CHECK(entries[1].parse_outcome.find("size-mismatch") != std::string::npos);
  CHECK(entries[2].parse_outcome == "ok");
  CHECK(entries[1].attempt == 1);

  // the retry carries the earlier reply and a corrective message
  auto reqs = stub.requests();
  REQUIRE(reqs.size() == 3);
  const auto& msgs = reqs[2]["messages"];
  REQUIRE(msgs.size() == 5);
  CHECK(msgs[1]["role"] == "assistant");
  CHECK(msgs[1]["content"] == "I cannot see the image clearly.");
  CHECK(msgs[4]["content"].get<std::string>().find("size-mismatch") != std::string::npos);
  stub.stop();
}

TEST_CASE("repeated invalid descriptions fail validation") {
  StubLlmServer stub;
  stub.start();
  auto log = std::make_shared<ExchangeLog>();
  LlmClient client(stub_config(stub, 3), log);
  for (int i = 0; i < 4; ++i) stub.push_reply("red red red red red");
  try {
    client.describe(random_grid(8));
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidationFailure);
    CHECK(std::string(e.what()).find("after 4 attempts") != std::string::npos);
  }
  CHECK(log->snapshot().size() == 4);
  stub.stop();
}

TEST_CASE("HTTP errors are transport errors and are retried") {
  StubLlmServer stub;
  stub.start();
  auto log = std::make_shared<ExchangeLog>();
  LlmClient client(stub_config(stub, 2), log);
  Grid g = random_grid(9);
  stub.push_reply("!status 500");
  stub.push_reply(matrix_reply(g));
  auto [out, res] = client.reproduce(g);
  CHECK(out == g);
  CHECK(res.retries == 1);
  CHECK(log->snapshot()[0].http_status == 500);
  // no assistant turn was received, so the conversation is resent unchanged
  CHECK(stub.requests()[1]["messages"].size() == 1);

  for (int i = 0; i < 3; ++i) stub.push_reply("!status 429");
  CHECK_THROWS_KIND(client.reproduce(g), ErrorKind::kTransportError);
  stub.stop();

  LlmClientConfig dead;
  dead.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  dead.max_retries = 0;
  dead.timeout_s = 2;
  LlmClient offline(dead, nullptr);
  CHECK_THROWS_KIND(offline.reproduce(g), ErrorKind::kTransportError);
}

TEST_CASE("token is sent but never logged or persisted") {
  ::setenv("SRP_UNIT_TEST_TOKEN", kSecret, 1);
  StubLlmServer stub;
  stub.start();
  auto dir = scratch_dir("llm-token");
  auto log = std::make_shared<ExchangeLog>(dir / "exchanges.jsonl");
  auto cfg = stub_config(stub);
  LlmClient client(cfg, log);
  Grid g = random_grid(10);
  stub.push_reply("garbage");
  client.reproduce(g, StepContext{"c", 2, 0, 0});
  client.describe(g);
  CHECK(stub.authorized_requests() == stub.requests().size());

  const std::string persisted = read_file(dir / "exchanges.jsonl");
  CHECK(!persisted.empty());
  CHECK(persisted.find(kSecret) == std::string::npos);
  for (const auto& e : log->snapshot()) CHECK(e.to_json().dump().find(kSecret) == std::string::npos);
  for (const auto& r : stub.requests()) CHECK(r.dump().find(kSecret) == std::string::npos);
  CHECK(cfg.to_json().dump().find(kSecret) == std::string::npos);
  CHECK(cfg.to_json()["token_env"] == "SRP_UNIT_TEST_TOKEN");
  stub.stop();
  ::unsetenv("SRP_UNIT_TEST_TOKEN");
}

TEST_CASE("llm chains through the stub are reproducible") {
  auto run = [](const std::string& tag) {
    StubLlmServer stub;
    stub.start();
    auto client = std::make_shared<LlmClient>(stub_config(stub), std::make_shared<ExchangeLog>());
    LlmBackend backend(client);
    BatchOptions opts;
    opts.config.steps = 4;
    opts.workers = 3;
    auto recs = batch_run(backend, 6, ChainMode::kMultimodal, 42, opts);
    std::string out;
    for (const auto& r : recs) out += to_json(r).dump() + "\n";
    stub.stop();
    (void)tag;
    return out;
  };
  const std::string a = run("a"), b = run("b");
  CHECK(a == b);
  CHECK(a.find("\"llm\"") != std::string::npos);
  CHECK(a.find("req-") != std::string::npos);
}
