#include "dmad/mock.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace dmad {

using nlohmann::json;

std::string_view to_string(FailureStyle s) {
  switch (s) {
    case FailureStyle::Refusal: return "Refusal";
    case FailureStyle::GuidanceProxy: return "GuidanceProxy";
    case FailureStyle::Base64Echo: return "Base64Echo";
  }
  return "?";
}

FailureStyle parse_failure_style(std::string_view s) {
  for (auto f : {FailureStyle::Refusal, FailureStyle::GuidanceProxy, FailureStyle::Base64Echo}) {
    if (iequals(s, to_string(f))) return f;
  }
  throw ParseError("unknown failure style '" + std::string(s) + "'");
}

namespace {

void check_rate(double v, const std::string& what) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(what + " must lie in [0, 1]");
}

}  // namespace

void MockBehavior::validate() const {
  for (const auto& [g, v] : q1_yes_rate) check_rate(v, "q1_yes_rate." + std::string(to_string(g)));
  for (const auto& [g, v] : q2_yes_rate) check_rate(v, "q2_yes_rate." + std::string(to_string(g)));
  for (const auto& [t, v] : q2_yes_rate_by_morph_type) {
    check_rate(v, "q2_yes_rate_by_morph_type." + std::string(to_string(t)));
  }
  for (const auto& [q, by_label] : scores) {
    for (const auto& [g, sp] : by_label) {
      if (!(sp.stddev >= 0)) throw std::invalid_argument("score stddev must be >= 0");
      if (!std::isfinite(sp.mean)) throw std::invalid_argument("score mean must be finite");
    }
  }
  check_rate(failure_rate, "failure_rate");
  check_rate(round_agreement, "round_agreement");
  check_rate(disclaimer_rate, "disclaimer_rate");
  check_rate(score_omit_rate, "score_omit_rate");
}

double MockBehavior::q2_rate(GroundTruth truth, std::optional<MorphType> type) const {
  if (truth == GroundTruth::MorphPair && type) {
    auto it = q2_yes_rate_by_morph_type.find(*type);
    if (it != q2_yes_rate_by_morph_type.end()) return it->second;
  }
  auto it = q2_yes_rate.find(truth);
  return it == q2_yes_rate.end() ? 0.0 : it->second;
}

namespace {

std::map<GroundTruth, double> label_map(const json& j, std::map<GroundTruth, double> into) {
  for (const auto& [k, v] : j.items()) into[parse_ground_truth(k)] = v.get<double>();
  return into;
}

json label_map_json(const std::map<GroundTruth, double>& m) {
  json j = json::object();
  for (const auto& [g, v] : m) j[std::string(to_string(g))] = v;
  return j;
}

}  // namespace

MockBehavior MockBehavior::from_json(const json& j) {
  MockBehavior b;
  try {
    if (j.contains("seed")) b.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("q1_yes_rate")) b.q1_yes_rate = label_map(j["q1_yes_rate"], b.q1_yes_rate);
    if (j.contains("q2_yes_rate")) b.q2_yes_rate = label_map(j["q2_yes_rate"], b.q2_yes_rate);
    if (j.contains("q2_yes_rate_by_morph_type")) {
      for (const auto& [k, v] : j["q2_yes_rate_by_morph_type"].items()) {
        b.q2_yes_rate_by_morph_type[parse_morph_type(k)] = v.get<double>();
      }
    }
    if (j.contains("scores")) {
      for (const auto& [qk, by_label] : j["scores"].items()) {
        const Question q = parse_question(qk);
        for (const auto& [gk, sp] : by_label.items()) {
          ScoreParams& dst = b.scores[q][parse_ground_truth(gk)];
          dst.mean = sp.value("mean", dst.mean);
          dst.stddev = sp.value("stddev", dst.stddev);
        }
      }
    }
    b.failure_rate = j.value("failure_rate", b.failure_rate);
    if (j.contains("failure_style")) b.failure_style = parse_failure_style(j["failure_style"].get<std::string>());
    b.round_agreement = j.value("round_agreement", b.round_agreement);
    b.disclaimer_rate = j.value("disclaimer_rate", b.disclaimer_rate);
    b.score_omit_rate = j.value("score_omit_rate", b.score_omit_rate);
  } catch (const json::exception& e) {
    throw ParseError(std::string("mock behavior: ") + e.what());
  }
  b.validate();
  return b;
}

json MockBehavior::to_json() const {
  json j{
      {"seed", seed},
      {"q1_yes_rate", label_map_json(q1_yes_rate)},
      {"q2_yes_rate", label_map_json(q2_yes_rate)},
      {"failure_rate", failure_rate},
      {"failure_style", to_string(failure_style)},
      {"round_agreement", round_agreement},
      {"disclaimer_rate", disclaimer_rate},
      {"score_omit_rate", score_omit_rate},
  };
  json by_type = json::object();
  for (const auto& [t, v] : q2_yes_rate_by_morph_type) by_type[std::string(to_string(t))] = v;
  j["q2_yes_rate_by_morph_type"] = by_type;
  json sc = json::object();
  for (const auto& [q, by_label] : scores) {
    for (const auto& [g, sp] : by_label) {
      sc[std::string(to_string(q))][std::string(to_string(g))] = {{"mean", sp.mean}, {"stddev", sp.stddev}};
    }
  }
  j["scores"] = sc;
  return j;
}

MockBehavior load_mock_behavior(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mock behavior file '" + path.string() + "'");
  try {
    return MockBehavior::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError("mock behavior file '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// --- generator ------------------------------------------------------------

namespace {

// FNV-1a over (seed, pair_id, round). Stable across platforms, unlike std::hash.
std::uint64_t stream_key(std::uint64_t seed, std::string_view pair_id, int round) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
  for (char c : pair_id) mix(static_cast<unsigned char>(c));
  mix(0xff);
  for (int i = 0; i < 4; ++i) mix(static_cast<unsigned char>(static_cast<std::uint32_t>(round) >> (8 * i)));
  return h;
}

// std::uniform_real_distribution and std::normal_distribution are not
// specified bit-for-bit, so both draws are done by hand.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : g_(key) {}
  double uniform() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 g_;
};

double rate_of(const std::map<GroundTruth, double>& m, GroundTruth g) {
  auto it = m.find(g);
  return it == m.end() ? 0.0 : it->second;
}

int draw_score(double z, const MockBehavior& b, Question q, GroundTruth g) {
  ScoreParams sp;
  auto qit = b.scores.find(q);
  if (qit != b.scores.end()) {
    auto git = qit->second.find(g);
    if (git != qit->second.end()) sp = git->second;
  }
  const double v = std::round(sp.mean + sp.stddev * z);
  return static_cast<int>(std::clamp(v, 0.0, 100.0));
}

}  // namespace

MockDraw mock_draw(const std::string& pair_id, int round_index, const MockBehavior& b, GroundTruth truth,
                   std::optional<MorphType> morph_type) {
  const double r1 = rate_of(b.q1_yes_rate, truth);
  const double r2 = b.q2_rate(truth, morph_type);

  Stream pair_stream(stream_key(b.seed, pair_id, 0));
  const bool latent_q1 = pair_stream.uniform() < r1;
  const bool latent_q2 = pair_stream.uniform() < r2;

  // Every draw is taken unconditionally so one field's setting never shifts
  // another field's stream.
  Stream s(stream_key(b.seed, pair_id, round_index));
  const double u_fail = s.uniform();
  const double u_agree1 = s.uniform();
  const double u_fresh1 = s.uniform();
  const double u_agree2 = s.uniform();
  const double u_fresh2 = s.uniform();
  const double z1 = s.normal();
  const double z2 = s.normal();
  const double u_omit1 = s.uniform();
  const double u_omit2 = s.uniform();
  const double u_disc = s.uniform();
  const double u_layout = s.uniform();

  MockDraw d;
  d.layout = std::min(2, static_cast<int>(u_layout * 3));
  d.failed = u_fail < b.failure_rate;
  if (d.failed) return d;
  const bool yes1 = u_agree1 < b.round_agreement ? latent_q1 : u_fresh1 < r1;
  const bool yes2 = u_agree2 < b.round_agreement ? latent_q2 : u_fresh2 < r2;
  d.q1 = yes1 ? Answer::Yes : Answer::No;
  d.q2 = yes2 ? Answer::Yes : Answer::No;
  if (u_omit1 >= b.score_omit_rate) d.q1_score = draw_score(z1, b, Question::Q1, truth);
  if (u_omit2 >= b.score_omit_rate) d.q2_score = draw_score(z2, b, Question::Q2, truth);
  d.disclaimer = u_disc < b.disclaimer_rate;
  return d;
}

namespace {

constexpr std::string_view kRefusal =
    "I'm unable to determine whether these two photos show the same person or whether the second photo has been "
    "altered.";

constexpr std::string_view kGuidance =
    "I'm unable to directly analyze or compare the people in these photos. However, I can guide you on how to "
    "approach this analysis:\n\n"
    "1. Compare landmark positions such as the eye corners, nose tip and mouth width.\n"
    "2. Look for ghosting or doubled edges around the eyes, nostrils and hairline.\n"
    "3. Check whether the skin texture is uniform across the face.\n"
    "4. Inspect the background and hair boundary for blending seams.\n\n"
    "A dedicated forensic tool will give a more reliable verdict.";

constexpr std::string_view kEchoPrefix =
    "Okay, I will analyze the two facial images provided to decide whether they show one person and whether the "
    "second one was manipulated.\n\nAnalysis:\n\nImage 1: (Base64: ";

constexpr std::string_view kDisclaimer =
    "Disclaimer: This assessment relies only on the two images supplied. A definitive conclusion would require "
    "forensic tools and a higher-resolution capture.";

constexpr std::string_view kAnalysis =
    "I compared the two images following the requested steps.\n\n"
    "1. Facial structure: eye spacing, nose bridge and jawline were compared.\n"
    "2. Texture: skin smoothness and pore detail were inspected in both images.\n"
    "3. Boundaries: the hairline, ears and eye contours were checked for blending seams.\n"
    "4. Lighting: shading on both cheeks was compared for consistency.\n";

std::string_view q1_reason(Answer a) {
  return a == Answer::Yes ? "The facial proportions, nose shape and eye spacing match closely."
                          : "The jawline and nose shape differ noticeably between the two images.";
}

std::string_view q2_reason(Answer a) {
  return a == Answer::Yes ? "Blending traces are visible around the eyes and the skin looks unnaturally smooth."
                          : "Skin texture and the eye region look natural and consistent with an unaltered capture.";
}

std::string score_line(std::optional<int> score, int layout) {
  if (!score) return "No probability score provided.";
  switch (layout) {
    case 0: return "**Probability Score:** " + std::to_string(*score) + "%";
    case 1: return "Confidence: " + std::to_string(*score) + "%";
    default: return "Probability score: " + std::to_string(*score);
  }
}

std::string render_draw(const MockDraw& d, const std::string& seed_tag, FailureStyle style) {
  std::ostringstream out;
  if (d.failed) {
    switch (style) {
      case FailureStyle::Refusal: out << kRefusal; break;
      case FailureStyle::GuidanceProxy: out << kGuidance; break;
      case FailureStyle::Base64Echo: {
        // echo a JPEG-looking payload fragment, as some replies do
        out << kEchoPrefix << "/9j/4AAQSkZJRgABAQAAAQABAAD/" << seed_tag << "...)";
        break;
      }
    }
    return out.str();
  }
  const auto answer = [](Answer a) { return std::string(to_string(a)); };
  switch (d.layout) {
    case 0:
      out << kAnalysis << "\n"
          << "**Q1 Answer:** " << answer(d.q1) << "\n"
          << score_line(d.q1_score, 0) << "\n"
          << "**Explanation:** " << q1_reason(d.q1) << "\n\n"
          << "**Q2 Answer:** " << answer(d.q2) << "\n"
          << score_line(d.q2_score, 0) << "\n"
          << "**Explanation:** " << q2_reason(d.q2) << "\n";
      break;
    case 1:
      out << "Okay, here is my analysis of the two facial images.\n\n**Analysis:**\n\n" << kAnalysis << "\n"
          << "**Q1) Same identity?**\n"
          << "Answer: " << answer(d.q1) << "\n"
          << score_line(d.q1_score, 1) << "\n"
          << q1_reason(d.q1) << "\n\n"
          << "**Q2) Is the second image morphed?**\n"
          << "Answer: " << answer(d.q2) << "\n"
          << score_line(d.q2_score, 1) << "\n"
          << q2_reason(d.q2) << "\n";
      break;
    default:
      out << "Q1 Answer: " << answer(d.q1) << "\n"
          << score_line(d.q1_score, 2) << "\n"
          << "Explanation: " << q1_reason(d.q1) << "\n"
          << "Q2 Answer: " << answer(d.q2) << "\n"
          << score_line(d.q2_score, 2) << "\n"
          << "Explanation: " << q2_reason(d.q2) << "\n";
      break;
  }
  if (d.disclaimer) out << "\n" << kDisclaimer << "\n";
  return out.str();
}

}  // namespace

RawTranscript mock_generate(const RenderedQuery& query, const MockBehavior& behavior, GroundTruth truth,
                            std::optional<MorphType> morph_type) {
  const MockDraw d = mock_draw(query.pair_id, query.round_index, behavior, truth, morph_type);
  // Base64 tail varies with the key so echoes are not all identical.
  const std::string tag = sha256_hex(query.pair_id + "#" + std::to_string(query.round_index)).substr(0, 48);
  std::string tail;
  for (char c : tag) tail.push_back(c >= 'a' ? static_cast<char>(c - 'a' + 'A') : c);

  RawTranscript t;
  t.pair_id = query.pair_id;
  t.round_index = query.round_index;
  t.provider_id = "mock";
  t.model = "mock";
  t.request_timestamp = utc_timestamp_now();
  t.text = render_draw(d, tail, behavior.failure_style);
  t.http_status = 200;
  return t;
}

MockProvider::MockProvider(MockBehavior behavior, std::map<std::string, Truth> truth_by_pair)
    : behavior_(std::move(behavior)), truth_(std::move(truth_by_pair)) {
  behavior_.validate();
}

MockProvider MockProvider::for_manifest(MockBehavior behavior, const ProtocolManifest& manifest) {
  std::map<std::string, Truth> truth;
  for (const auto& p : manifest.pairs) truth[p.pair_id] = {p.ground_truth, p.morph_type};
  return MockProvider(std::move(behavior), std::move(truth));
}

RawTranscript MockProvider::submit(const RenderedQuery& query) {
  auto it = truth_.find(query.pair_id);
  if (it == truth_.end()) {
    throw GatewayError(ErrorKind::ProviderRejected, "mock has no ground truth for pair '" + query.pair_id + "'");
  }
  return mock_generate(query, behavior_, it->second.ground_truth, it->second.morph_type);
}

// --- calibration -------------------------------------------------------------

namespace {

struct FusedOdds {
  double yes = 0;
  double all_failed = 0;
};

// Enumerates 3^rounds round outcomes (Yes, No, failed) for each latent value.
FusedOdds enumerate(double p, double agreement, double failure, int rounds, const FusionPolicy& policy) {
  if (rounds < 1 || rounds > 12) throw std::invalid_argument("rounds must lie in [1, 12] for enumeration");
  FusedOdds out;
  std::vector<Answer> answers(static_cast<std::size_t>(rounds));
  int total = 1;
  for (int i = 0; i < rounds; ++i) total *= 3;
  for (int latent = 0; latent < 2; ++latent) {
    const double p_latent = latent == 1 ? p : 1.0 - p;
    if (p_latent == 0.0) continue;
    const double p_yes_round = agreement * (latent == 1 ? 1.0 : 0.0) + (1.0 - agreement) * p;
    const double yes = (1.0 - failure) * p_yes_round;
    const double no = (1.0 - failure) * (1.0 - p_yes_round);
    for (int code = 0; code < total; ++code) {
      double prob = p_latent;
      int c = code;
      for (int r = 0; r < rounds; ++r, c /= 3) {
        switch (c % 3) {
          case 0: answers[r] = Answer::Yes; prob *= yes; break;
          case 1: answers[r] = Answer::No; prob *= no; break;
          default: answers[r] = Answer::Absent; prob *= failure; break;
        }
      }
      if (prob == 0.0) continue;
      const FusedDecision f = fuse_answers(answers, policy);
      if (f == FusedDecision::Yes) out.yes += prob;
      if (f == FusedDecision::AllFailed) out.all_failed += prob;
    }
  }
  return out;
}

}  // namespace

double fused_yes_probability(double p, double round_agreement, double failure_rate, int rounds,
                             const FusionPolicy& policy) {
  return enumerate(p, round_agreement, failure_rate, rounds, policy).yes;
}

double all_failed_probability(double failure_rate, int rounds, const FusionPolicy& policy) {
  return enumerate(0.5, 1.0, failure_rate, rounds, policy).all_failed;
}

double expected_error_rate(double p, GroundTruth truth, double round_agreement, double failure_rate, int rounds,
                           const FusionPolicy& policy, Convention convention) {
  const FusedOdds o = enumerate(p, round_agreement, failure_rate, rounds, policy);
  const double no = 1.0 - o.yes - o.all_failed;
  const double wrong = truth == GroundTruth::MorphPair ? no : o.yes;
  if (convention == Convention::FailuresAsErrors) return 100.0 * (wrong + o.all_failed);
  const double counted = 1.0 - o.all_failed;
  if (counted <= 0.0) throw std::invalid_argument("every pair fails; no error rate under exclusion");
  return 100.0 * wrong / counted;
}

double calibrate_yes_rate(double target, GroundTruth truth, double round_agreement, double failure_rate, int rounds,
                          const FusionPolicy& policy, Convention convention) {
  auto f = [&](double p) {
    return expected_error_rate(p, truth, round_agreement, failure_rate, rounds, policy, convention);
  };
  // Error falls with p for morph pairs and rises with p for bona fide pairs.
  const double at0 = f(0.0);
  const double at1 = f(1.0);
  const double lo_err = std::min(at0, at1);
  const double hi_err = std::max(at0, at1);
  if (target < lo_err - 1e-9 || target > hi_err + 1e-9) {
    std::ostringstream msg;
    msg << "target " << target << "% is outside the reachable range [" << lo_err << ", " << hi_err << "]";
    throw std::invalid_argument(msg.str());
  }
  const bool increasing = at1 > at0;
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    const bool below = f(mid) < target;
    if (below == increasing) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace dmad
