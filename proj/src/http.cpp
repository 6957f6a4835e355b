// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "http.hpp"

#include <httplib.h>

#include <thread>

namespace statute::detail {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw HttpFailure{"malformed URL " + url};
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         const std::map<std::string, std::string>& headers,
                         std::chrono::milliseconds timeout, int retries) {
  const SplitUrl target = split_url(url);
  httplib::Client client(target.origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  httplib::Headers hdrs;
  for (const auto& [k, v] : headers) hdrs.emplace(k, v);
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
    auto res = client.Post(target.path, hdrs, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw HttpFailure{"HTTP " + std::to_string(res->status) + ": " + res->body};
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
      throw HttpFailure{"reply is not JSON"};
    }
  }
  throw HttpFailure{last_error};
}

}  // namespace statute::detail
