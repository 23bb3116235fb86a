#pragma once

// Turns free-form multimodal-LLM replies into per-round answers.
//
// Replies seen in practice range from tidy "**Q1 Answer:** Yes" blocks to
// refusals, "here is how you could do it" guidance, and echoes of the
// base64 image payload. The parser never throws: anything it cannot read
// comes back as Absent answers with a failure-class scenario.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dmad/common.hpp"

namespace dmad {

enum class Answer : std::uint8_t { Yes, No, Absent };

enum class Scenario : std::uint8_t { Structured, CompleteFailure, GuidanceProxy, Base64Echo, Disclaimered };

inline constexpr Scenario kAllScenarios[] = {Scenario::Structured, Scenario::CompleteFailure,
                                             Scenario::GuidanceProxy, Scenario::Base64Echo,
                                             Scenario::Disclaimered};

std::string_view to_string(Answer a);
std::string_view to_string(Scenario s);
Answer parse_answer(std::string_view s);
Scenario parse_scenario(std::string_view s);

struct ParsedAnswer {
  Answer answer = Answer::Absent;
  std::optional<int> probability;  // always within [0, 100]
  std::string explanation_excerpt;

  bool answered() const noexcept { return answer != Answer::Absent; }
};

struct RoundResult {
  std::string pair_id;
  int round_index = 0;
  ParsedAnswer q1;
  ParsedAnswer q2;
  Scenario scenario = Scenario::CompleteFailure;
  std::string raw_ref;

  const ParsedAnswer& answer(Question q) const { return q == Question::Q1 ? q1 : q2; }
};

// Marker phrases, matched case-insensitively. Curly apostrophes in replies
// are folded to ASCII before matching.
struct ScenarioRules {
  std::vector<std::string> refusal_markers;
  std::vector<std::string> guidance_markers;
  std::vector<std::string> base64_markers;
  std::vector<std::string> disclaimer_markers;

  static ScenarioRules defaults();
  static ScenarioRules from_json(const nlohmann::json& j);  // missing lists keep defaults
  nlohmann::json to_json() const;
};

ScenarioRules load_scenario_rules(const std::string& path);

// First integer following a probability keyword ("probability",
// "confidence", "score"). A value above 100 yields nullopt rather than a
// later number.
std::optional<int> extract_probability(std::string_view segment);

// Precedence: Base64Echo > CompleteFailure > GuidanceProxy > Disclaimered > Structured.
Scenario classify_scenario(std::string_view text, const ScenarioRules& rules = ScenarioRules::defaults());

RoundResult parse_transcript(std::string_view text, const ScenarioRules& rules = ScenarioRules::defaults());

RoundResult parse_transcript(std::string_view text, std::string pair_id, int round_index, std::string raw_ref,
                             const ScenarioRules& rules = ScenarioRules::defaults());

// True when the reply carries a payload echo: a base64 run of at least 64
// characters starting with a JPEG/PNG signature, or a base64 marker
// immediately followed by such a signature.
bool has_base64_echo(std::string_view text, const ScenarioRules& rules = ScenarioRules::defaults());

}  // namespace dmad
