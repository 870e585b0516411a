#pragma once

#include <chrono>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace srp {

struct Url {
  std::string scheme;  // http or https
  std::string host;
  int port = 0;
  std::string path;  // always starts with '/'

  std::string origin() const { return scheme + "://" + host + ":" + std::to_string(port); }
};

Url parse_url(const std::string& url);

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Blocking JSON POST. Throws kTransportError when no response arrives.
HttpResponse http_post_json(const Url& url, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers, double timeout_s);

// Spaces calls at least 1/rate seconds apart across all callers sharing the
// limiter. rate <= 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second = 0.0) : rate_(requests_per_second) {}
  void acquire();

 private:
  double rate_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_{};
};

std::string base64_encode(const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace srp
