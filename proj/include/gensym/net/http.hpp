#pragma once

#include <string>
#include <utility>
#include <vector>

namespace gensym::net {

struct HttpResponse {
  int status = 0;      // 0 when the request never got a response
  std::string body;
  std::string error;   // transport error text when status is 0
};

/// POST a JSON body to an absolute http(s) URL.
HttpResponse post_json(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                       const std::string& body, int timeoutSeconds);

/// Whether this build can talk https.
bool https_supported();

}  // namespace gensym::net
