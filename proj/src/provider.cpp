#include "dmad/provider.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace dmad {

using nlohmann::json;

std::string_view to_string(ProviderKind k) {
  switch (k) {
    case ProviderKind::OpenAI: return "openai";
    case ProviderKind::Gemini: return "gemini";
    case ProviderKind::Mock: return "mock";
  }
  return "?";
}

ProviderKind parse_provider_kind(std::string_view s) {
  for (auto k : {ProviderKind::OpenAI, ProviderKind::Gemini, ProviderKind::Mock}) {
    if (iequals(s, to_string(k))) return k;
  }
  if (iequals(s, "chatgpt") || iequals(s, "gpt-4o")) return ProviderKind::OpenAI;
  throw ParseError("unknown provider '" + std::string(s) + "' (expected openai, gemini or mock)");
}

std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::ExhaustedRetries: return "ExhaustedRetries";
    case ErrorKind::AuthFailure: return "AuthFailure";
    case ErrorKind::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorKind::ProviderRejected: return "ProviderRejected";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::ImageUnavailable: return "ImageUnavailable";
  }
  return "?";
}

ErrorKind parse_error_kind(std::string_view s) {
  for (auto k : {ErrorKind::ExhaustedRetries, ErrorKind::AuthFailure, ErrorKind::PayloadTooLarge,
                 ErrorKind::ProviderRejected, ErrorKind::MalformedResponse, ErrorKind::ImageUnavailable}) {
    if (s == to_string(k)) return k;
  }
  throw ParseError("unknown error kind '" + std::string(s) + "'");
}

ProviderConfig ProviderConfig::defaults_for(ProviderKind kind) {
  ProviderConfig c;
  c.kind = kind;
  switch (kind) {
    case ProviderKind::OpenAI:
      c.endpoint_url = "https://api.openai.com/v1/chat/completions";
      c.model_name = "gpt-4o";
      c.api_key_env = "OPENAI_API_KEY";
      break;
    case ProviderKind::Gemini:
      c.endpoint_url = "https://generativelanguage.googleapis.com/v1beta/models/{model}:generateContent";
      c.model_name = "gemini-1.5-pro";
      c.api_key_env = "GEMINI_API_KEY";
      break;
    case ProviderKind::Mock:
      c.model_name = "mock";
      break;
  }
  return c;
}

void ProviderConfig::validate() const {
  if (requests_per_minute < 1) throw std::invalid_argument("requests_per_minute must be >= 1");
  if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  if (temperature && *temperature < 0) throw std::invalid_argument("temperature must be >= 0");
  if (max_output_tokens < 1) throw std::invalid_argument("max_output_tokens must be >= 1");
  if (kind != ProviderKind::Mock && endpoint_url.empty()) throw std::invalid_argument("endpoint_url is empty");
}

json ProviderConfig::to_json() const {
  json j{
      {"provider", provider_id()},
      {"endpoint_url", endpoint_url},
      {"model", model_name},
      {"api_key_env", api_key_env},
      {"max_output_tokens", max_output_tokens},
      {"requests_per_minute", requests_per_minute},
      {"max_retries", max_retries},
      {"backoff_base_ms", backoff_base.count()},
      {"request_timeout_ms", request_timeout.count()},
  };
  if (temperature) {
    j["temperature"] = *temperature;
  } else {
    j["temperature"] = "provider-default";
  }
  return j;
}

// --- clocks -----------------------------------------------------------------

Clock::time_point SystemClock::now() { return std::chrono::steady_clock::now(); }

void SystemClock::sleep_until(time_point t) { std::this_thread::sleep_until(t); }

Clock::time_point SimulatedClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void SimulatedClock::sleep_until(time_point t) {
  std::lock_guard lock(mu_);
  now_ = std::max(now_, t);
}

RateLimiter::RateLimiter(int per_window, Clock& clock, std::chrono::milliseconds window)
    : per_window_(per_window), clock_(clock), window_(window) {
  if (per_window < 1) throw std::invalid_argument("rate limit must be >= 1 per window");
}

Clock::time_point RateLimiter::acquire() {
  Clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    slot = clock_.now();
    if (!slots_.empty()) slot = std::max(slot, slots_.back());
    if (static_cast<int>(slots_.size()) >= per_window_) {
      slot = std::max(slot, slots_[slots_.size() - per_window_] + window_);
    }
    slots_.push_back(slot);
    while (!slots_.empty() && slots_.front() <= slot - window_) slots_.pop_front();
  }
  clock_.sleep_until(slot);
  return slot;
}

// --- wire formats -------------------------------------------------------------

namespace {

std::string data_url(const ImagePayload& img) { return "data:" + img.media_type + ";base64," + img.base64; }

}  // namespace

json openai_request_body(const RenderedQuery& q, const ProviderConfig& c) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", q.prompt_text}});
  for (const ImagePayload* img : {&q.image_a, &q.image_b}) {
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_url(*img)}}}});
  }
  json body{
      {"model", c.model_name},
      {"messages", json::array({{{"role", "user"}, {"content", content}}})},
      {"max_tokens", c.max_output_tokens},
  };
  if (c.temperature) body["temperature"] = *c.temperature;
  return body;
}

json gemini_request_body(const RenderedQuery& q, const ProviderConfig& c) {
  json parts = json::array();
  parts.push_back({{"text", q.prompt_text}});
  for (const ImagePayload* img : {&q.image_a, &q.image_b}) {
    parts.push_back({{"inline_data", {{"mime_type", img->media_type}, {"data", img->base64}}}});
  }
  json gen{{"maxOutputTokens", c.max_output_tokens}};
  if (c.temperature) gen["temperature"] = *c.temperature;
  return json{
      {"contents", json::array({{{"role", "user"}, {"parts", parts}}})},
      {"generationConfig", gen},
  };
}

std::string request_url(const ProviderConfig& c) {
  std::string url = c.endpoint_url;
  const std::string token = "{model}";
  for (auto pos = url.find(token); pos != std::string::npos; pos = url.find(token)) {
    url.replace(pos, token.size(), c.model_name);
  }
  return url;
}

namespace {

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw GatewayError(ErrorKind::MalformedResponse, std::string("reply is not JSON: ") + e.what());
  }
}

}  // namespace

ProviderReply parse_openai_reply(const std::string& body) {
  const json j = parse_body(body);
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw GatewayError(ErrorKind::MalformedResponse, "reply has no choices");
  }
  const json& choice = j["choices"][0];
  const json& msg = choice.value("message", json::object());
  ProviderReply r;
  if (msg.contains("content") && msg["content"].is_string()) {
    r.text = msg["content"].get<std::string>();
  } else if (msg.contains("refusal") && msg["refusal"].is_string()) {
    r.text = msg["refusal"].get<std::string>();
  } else {
    throw GatewayError(ErrorKind::MalformedResponse, "reply message carries no text");
  }
  r.truncated = choice.value("finish_reason", json()).is_string() && choice["finish_reason"] == "length";
  return r;
}

ProviderReply parse_gemini_reply(const std::string& body) {
  const json j = parse_body(body);
  if (!j.contains("candidates") || !j["candidates"].is_array() || j["candidates"].empty()) {
    if (j.contains("promptFeedback") && j["promptFeedback"].contains("blockReason")) {
      throw GatewayError(ErrorKind::ProviderRejected,
                         "prompt blocked: " + j["promptFeedback"]["blockReason"].dump());
    }
    throw GatewayError(ErrorKind::MalformedResponse, "reply has no candidates");
  }
  const json& cand = j["candidates"][0];
  const std::string finish = cand.value("finishReason", std::string());
  ProviderReply r;
  bool any_text = false;
  if (cand.contains("content") && cand["content"].contains("parts")) {
    for (const auto& part : cand["content"]["parts"]) {
      if (part.contains("text") && part["text"].is_string()) {
        r.text += part["text"].get<std::string>();
        any_text = true;
      }
    }
  }
  if (!any_text) {
    if (finish == "SAFETY" || finish == "PROHIBITED_CONTENT" || finish == "BLOCKLIST") {
      throw GatewayError(ErrorKind::ProviderRejected, "candidate blocked: " + finish);
    }
    throw GatewayError(ErrorKind::MalformedResponse, "candidate carries no text");
  }
  r.truncated = finish == "MAX_TOKENS";
  return r;
}

// --- HTTP provider ------------------------------------------------------------

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (v == nullptr) return std::nullopt;
    return std::string(v);
  };
}

bool is_transient_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

namespace {

std::optional<std::chrono::milliseconds> retry_after(const HttpResponse& r) {
  auto it = r.headers.find("retry-after");
  if (it == r.headers.end()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double secs = std::stod(it->second, &used);
    if (used == 0 || secs < 0) return std::nullopt;
    return std::chrono::milliseconds(static_cast<long long>(secs * 1000));
  } catch (const std::exception&) {
    return std::nullopt;  // HTTP-date form; fall back to backoff
  }
}

std::string excerpt(const std::string& body) { return utf8_truncate(body, 300); }

}  // namespace

HttpProvider::HttpProvider(ProviderConfig config, std::shared_ptr<HttpTransport> transport, Clock& clock,
                           const EnvLookup& env)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      clock_(clock),
      limiter_(config_.requests_per_minute, clock) {
  config_.validate();
  if (config_.kind == ProviderKind::Mock) throw std::invalid_argument("HttpProvider cannot serve the mock");
  if (config_.api_key_env.empty()) {
    throw GatewayError(ErrorKind::AuthFailure, "no API key variable configured for " + config_.provider_id());
  }
  auto key = env(config_.api_key_env);
  if (!key || key->empty()) {
    throw GatewayError(ErrorKind::AuthFailure, "environment variable " + config_.api_key_env + " is not set");
  }
  api_key_ = *key;
  if (!transport_) throw std::invalid_argument("HttpProvider needs a transport");
}

RawTranscript HttpProvider::submit(const RenderedQuery& query) {
  HttpRequest req;
  req.url = request_url(config_);
  req.timeout = config_.request_timeout;
  req.headers.emplace_back("Content-Type", "application/json");
  if (config_.kind == ProviderKind::OpenAI) {
    req.headers.emplace_back("Authorization", "Bearer " + api_key_);
    req.body = openai_request_body(query, config_).dump();
  } else {
    req.headers.emplace_back("x-goog-api-key", api_key_);
    req.body = gemini_request_body(query, config_).dump();
  }
  if (req.body.size() > config_.max_request_bytes) {
    throw GatewayError(ErrorKind::PayloadTooLarge, "request body of " + std::to_string(req.body.size()) +
                                                       " bytes exceeds the " +
                                                       std::to_string(config_.max_request_bytes) + " byte limit");
  }

  RawTranscript t;
  t.pair_id = query.pair_id;
  t.round_index = query.round_index;
  t.provider_id = config_.provider_id();
  t.model = config_.model_name;

  std::string last_failure;
  int last_status = 0;
  for (int attempt = 0;; ++attempt) {
    limiter_.acquire();
    t.request_timestamp = utc_timestamp_now();
    const auto started = std::chrono::steady_clock::now();
    std::optional<std::chrono::milliseconds> wait_hint;
    try {
      const HttpResponse resp = transport_->post(req);
      last_status = resp.status;
      if (resp.status >= 200 && resp.status < 300) {
        const ProviderReply reply = config_.kind == ProviderKind::OpenAI ? parse_openai_reply(resp.body)
                                                                         : parse_gemini_reply(resp.body);
        t.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
        t.text = reply.text;
        t.truncated = reply.truncated;
        t.http_status = resp.status;
        t.attempts = attempt + 1;
        return t;
      }
      if (resp.status == 401 || resp.status == 403) {
        throw GatewayError(ErrorKind::AuthFailure, "HTTP " + std::to_string(resp.status) + ": " + excerpt(resp.body),
                           resp.status, attempt + 1);
      }
      if (resp.status == 413) {
        throw GatewayError(ErrorKind::PayloadTooLarge, "HTTP 413: " + excerpt(resp.body), 413, attempt + 1);
      }
      if (!is_transient_status(resp.status)) {
        throw GatewayError(ErrorKind::ProviderRejected,
                           "HTTP " + std::to_string(resp.status) + ": " + excerpt(resp.body), resp.status, attempt + 1);
      }
      last_failure = "HTTP " + std::to_string(resp.status);
      wait_hint = retry_after(resp);
    } catch (const TransportError& e) {
      last_failure = e.what();
      last_status = 0;
    }
    if (attempt >= config_.max_retries) {
      throw GatewayError(ErrorKind::ExhaustedRetries,
                         "gave up after " + std::to_string(attempt + 1) + " attempts; last: " + last_failure,
                         last_status, attempt + 1);
    }
    std::chrono::milliseconds delay = config_.backoff_base * (1LL << std::min(attempt, 20));
    if (wait_hint) delay = std::max(delay, *wait_hint);
    clock_.sleep_until(clock_.now() + delay);
  }
}

}  // namespace dmad
