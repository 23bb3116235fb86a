#pragma once

// Per-round dispatch. Every round is a fresh, self-contained request: the
// prompt and the two images, with no earlier replies attached.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmad/prompt.hpp"
#include "dmad/provider.hpp"

namespace dmad {

struct ImageInfo {
  std::string image_id;
  std::string media_type;
  std::size_t byte_count = 0;
};

// What was sent, minus the payload and credentials.
struct RequestInfo {
  std::string provider;
  std::string model;
  std::string prompt_version;
  std::string prompt_sha256;
  ImageInfo image_a;
  ImageInfo image_b;
};

struct RoundError {
  ErrorKind kind = ErrorKind::ProviderRejected;
  std::string message;
  int http_status = 0;
  int attempts = 0;
};

struct RoundAttempt {
  std::string pair_id;
  int round_index = 0;
  std::optional<RequestInfo> request;  // unset when the images could not be loaded
  std::optional<RawTranscript> transcript;
  std::optional<RoundError> error;

  bool ok() const { return transcript.has_value(); }
};

// Never throws for per-round failures; they come back in `error`.
RoundAttempt attempt_round(const PairSpec& pair, int round_index, const PromptTemplate& tmpl,
                           const ImageLoader& load, Provider& provider);

// Rounds 1..rounds, sequentially. Throws std::invalid_argument if rounds < 1.
std::vector<RoundAttempt> run_rounds(const PairSpec& pair, Provider& provider, const PromptTemplate& tmpl,
                                     const ImageLoader& load, int rounds = 3);

// Runs body(i) for every i in [0, n) on at most `workers` threads, in index
// order of dispatch. Once any body returns false no further index is
// started. Returns how many bodies ran. An exception from a body stops
// dispatch and is rethrown after the workers join.
std::size_t run_bounded(std::size_t n, int workers, const std::function<bool(std::size_t)>& body);

}  // namespace dmad
