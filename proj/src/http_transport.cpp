// cpp-httplib backed transport. Kept in its own translation unit because
// httplib.h is heavy and needs CPPHTTPLIB_OPENSSL_SUPPORT for https.

#include <httplib.h>

#include "dmad/provider.hpp"

namespace dmad {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // includes query
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse post(const HttpRequest& request) override {
    const SplitUrl u = split_url(request.url);
    httplib::Client client(u.origin);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(request.timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(request.timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(request.timeout));

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
      if (iequals(k, "Content-Type")) {
        content_type = v;
      } else {
        headers.emplace(k, v);
      }
    }
    auto result = client.Post(u.path, headers, request.body, content_type);
    if (!result) throw TransportError("HTTP transport: " + httplib::to_string(result.error()));

    HttpResponse out;
    out.status = result->status;
    out.body = result->body;
    for (const auto& [k, v] : result->headers) out.headers[to_lower_ascii(k)] = v;
    return out;
  }
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

}  // namespace dmad
