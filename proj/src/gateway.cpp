#include "dmad/gateway.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace dmad {

namespace {

ImageInfo info_of(const ImagePayload& p) { return {p.image_id, p.media_type, p.byte_count}; }

}  // namespace

RoundAttempt attempt_round(const PairSpec& pair, int round_index, const PromptTemplate& tmpl,
                           const ImageLoader& load, Provider& provider) {
  RoundAttempt a;
  a.pair_id = pair.pair_id;
  a.round_index = round_index;
  RenderedQuery q;
  try {
    q = render(tmpl, pair, round_index, load);
  } catch (const RenderError& e) {
    a.error = RoundError{ErrorKind::ImageUnavailable, e.what(), 0, 0};
    return a;
  }
  a.request = RequestInfo{provider.id(),         provider.model(),   tmpl.version_tag, sha256_hex(q.prompt_text),
                          info_of(q.image_a), info_of(q.image_b)};
  try {
    a.transcript = provider.submit(q);
  } catch (const GatewayError& e) {
    a.error = RoundError{e.kind(), e.what(), e.http_status(), e.attempts()};
  }
  return a;
}

std::vector<RoundAttempt> run_rounds(const PairSpec& pair, Provider& provider, const PromptTemplate& tmpl,
                                     const ImageLoader& load, int rounds) {
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  std::vector<RoundAttempt> out;
  out.reserve(static_cast<std::size_t>(rounds));
  for (int r = 1; r <= rounds; ++r) out.push_back(attempt_round(pair, r, tmpl, load, provider));
  return out;
}

std::size_t run_bounded(std::size_t n, int workers, const std::function<bool(std::size_t)>& body) {
  if (workers < 1) throw std::invalid_argument("worker count must be >= 1");
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> ran{0};
  std::atomic<bool> stop{false};
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      ran.fetch_add(1);
      try {
        if (!body(i)) stop.store(true);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        stop.store(true);
      }
    }
  };

  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(workers), std::max<std::size_t>(n, 1));
  {
    std::vector<std::jthread> pool;
    pool.reserve(count);
    for (std::size_t i = 0; i < count; ++i) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  return ran.load();
}

}  // namespace dmad
