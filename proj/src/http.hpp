// SPDX-License-Identifier: Apache-2.0
//
// JSON-over-HTTP(S) POST shared by the model and embedding clients.
#pragma once

#include <chrono>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace statute::detail {

struct HttpFailure {
  std::string message;
};

/// POSTs `body` to `url` ("http://host:port/path" or "https://..."), retrying
/// transport failures and 5xx responses `retries` times. Throws HttpFailure
/// when every attempt fails or the reply is not JSON.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         const std::map<std::string, std::string>& headers,
                         std::chrono::milliseconds timeout, int retries);

}  // namespace statute::detail
