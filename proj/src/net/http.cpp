#include "gensym/net/http.hpp"

#include <stdexcept>

#include <httplib.h>

namespace gensym::net {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("URL needs a scheme: " + url);
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

HttpResponse post_json(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                       const std::string& body, int timeoutSeconds) {
  auto parts = split_url(url);
  if (parts.origin.rfind("https://", 0) == 0 && !https_supported())
    return {0, {}, "https is not available in this build"};
  httplib::Client cli(parts.origin);
  cli.set_connection_timeout(timeoutSeconds, 0);
  cli.set_read_timeout(timeoutSeconds, 0);
  cli.set_write_timeout(timeoutSeconds, 0);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = cli.Post(parts.path, h, body, "application/json");
  if (!res) return {0, {}, httplib::to_string(res.error())};
  return {res->status, res->body, {}};
}

bool https_supported() {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
  return true;
#else
  return false;
#endif
}

}  // namespace gensym::net
