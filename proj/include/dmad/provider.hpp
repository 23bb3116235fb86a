#pragma once

// Vision chat-completion providers. Two HTTP wire formats are supported:
//   openai  - POST {endpoint} with a chat.completions body, Bearer auth
//   gemini  - POST {endpoint} with a generateContent body, x-goog-api-key auth
// plus the offline mock (see mock.hpp). Body templates: docs/wire-format.md.

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmad/prompt.hpp"

namespace dmad {

enum class ProviderKind : std::uint8_t { OpenAI, Gemini, Mock };

std::string_view to_string(ProviderKind k);  // "openai", "gemini", "mock"
ProviderKind parse_provider_kind(std::string_view s);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::Mock;
  std::string endpoint_url;  // "{model}" is replaced by model_name
  std::string model_name;
  std::string api_key_env;
  std::optional<double> temperature;  // omitted from requests when unset
  int max_output_tokens = 2048;
  int requests_per_minute = 60;
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{2000};
  std::chrono::milliseconds request_timeout{120000};
  std::size_t max_request_bytes = 20u * 1024u * 1024u;

  static ProviderConfig defaults_for(ProviderKind kind);
  // Throws std::invalid_argument on rpm < 1, retries < 0, temperature < 0.
  void validate() const;
  std::string provider_id() const { return std::string(to_string(kind)); }
  // Snapshot form. Records the key's env-var name, never its value.
  nlohmann::json to_json() const;
};

struct RawTranscript {
  std::string pair_id;
  int round_index = 0;
  std::string provider_id;
  std::string model;
  std::string request_timestamp;
  std::chrono::milliseconds latency{0};
  std::string text;
  int http_status = 0;
  bool truncated = false;
  int attempts = 1;
};

enum class ErrorKind : std::uint8_t {
  ExhaustedRetries,
  AuthFailure,
  PayloadTooLarge,
  ProviderRejected,
  MalformedResponse,
  ImageUnavailable,
};

std::string_view to_string(ErrorKind k);
ErrorKind parse_error_kind(std::string_view s);

class GatewayError : public std::runtime_error {
 public:
  GatewayError(ErrorKind kind, const std::string& what, int http_status = 0, int attempts = 0)
      : std::runtime_error(what), kind_(kind), http_status_(http_status), attempts_(attempts) {}
  ErrorKind kind() const noexcept { return kind_; }
  int http_status() const noexcept { return http_status_; }
  int attempts() const noexcept { return attempts_; }

 private:
  ErrorKind kind_;
  int http_status_;
  int attempts_;
};

// --- time ---------------------------------------------------------------

class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_until(time_point t) = 0;
};

class SystemClock final : public Clock {
 public:
  time_point now() override;
  void sleep_until(time_point t) override;
};

// Time only moves when someone sleeps. Thread-safe.
class SimulatedClock final : public Clock {
 public:
  time_point now() override;
  void sleep_until(time_point t) override;

 private:
  std::mutex mu_;
  time_point now_{};
};

// Sliding-window limiter: at most `per_window` acquisitions inside any
// half-open window (t - window, t]. Threads reserve slots under the lock and
// sleep outside it.
class RateLimiter {
 public:
  RateLimiter(int per_window, Clock& clock, std::chrono::milliseconds window = std::chrono::minutes(1));
  Clock::time_point acquire();

 private:
  int per_window_;
  Clock& clock_;
  std::chrono::milliseconds window_;
  std::mutex mu_;
  std::deque<Clock::time_point> slots_;
};

// --- transport ----------------------------------------------------------

struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::chrono::milliseconds timeout{120000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers;  // lowercased names
};

// Connection failures and timeouts; retried like 5xx.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

std::shared_ptr<HttpTransport> make_http_transport();

// --- wire formats -------------------------------------------------------

nlohmann::json openai_request_body(const RenderedQuery& q, const ProviderConfig& c);
nlohmann::json gemini_request_body(const RenderedQuery& q, const ProviderConfig& c);
std::string request_url(const ProviderConfig& c);

struct ProviderReply {
  std::string text;
  bool truncated = false;
};

// Throw GatewayError(MalformedResponse) when the body does not carry text.
ProviderReply parse_openai_reply(const std::string& body);
ProviderReply parse_gemini_reply(const std::string& body);

// --- providers ----------------------------------------------------------

class Provider {
 public:
  virtual ~Provider() = default;
  virtual RawTranscript submit(const RenderedQuery& query) = 0;
  virtual std::string id() const = 0;
  virtual std::string model() const = 0;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

bool is_transient_status(int status);

class HttpProvider final : public Provider {
 public:
  // Throws GatewayError(AuthFailure) if the key variable is unset or empty;
  // nothing touches the network before that check.
  HttpProvider(ProviderConfig config, std::shared_ptr<HttpTransport> transport, Clock& clock,
               const EnvLookup& env = process_env());

  RawTranscript submit(const RenderedQuery& query) override;
  std::string id() const override { return config_.provider_id(); }
  std::string model() const override { return config_.model_name; }

  const ProviderConfig& config() const { return config_; }

 private:
  ProviderConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  Clock& clock_;
  RateLimiter limiter_;
  std::string api_key_;
};

}  // namespace dmad
