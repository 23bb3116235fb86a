#include "dmad/fusion.hpp"

#include <algorithm>
#include <numeric>

namespace dmad {

std::string_view to_string(FusedDecision d) {
  switch (d) {
    case FusedDecision::Yes: return "Yes";
    case FusedDecision::No: return "No";
    case FusedDecision::AllFailed: return "AllFailed";
  }
  return "?";
}

std::string_view to_string(Consistency c) {
  switch (c) {
    case Consistency::Stable: return "Stable";
    case Consistency::ImprovedAcrossRounds: return "ImprovedAcrossRounds";
    case Consistency::Conflicting: return "Conflicting";
    case Consistency::PartialFailureStable: return "PartialFailureStable";
    case Consistency::AllFailed: return "AllFailed";
  }
  return "?";
}

FusedDecision parse_fused_decision(std::string_view s) {
  for (auto d : {FusedDecision::Yes, FusedDecision::No, FusedDecision::AllFailed}) {
    if (iequals(s, to_string(d))) return d;
  }
  throw ParseError("unknown fused decision '" + std::string(s) + "'");
}

Consistency parse_consistency(std::string_view s) {
  for (auto c : kAllConsistency) {
    if (iequals(s, to_string(c))) return c;
  }
  throw ParseError("unknown consistency class '" + std::string(s) + "'");
}

std::string_view to_string(FusionPolicy::DecisionRule r) {
  switch (r) {
    case FusionPolicy::DecisionRule::LogicalOr: return "LogicalOr";
    case FusionPolicy::DecisionRule::Majority: return "Majority";
    case FusionPolicy::DecisionRule::All: return "All";
  }
  return "?";
}

std::string_view to_string(FusionPolicy::FailureHandling f) {
  return f == FusionPolicy::FailureHandling::ExcludeFromMean ? "ExcludeFromMean" : "TreatAsError";
}

FusionPolicy::DecisionRule parse_decision_rule(std::string_view s) {
  if (iequals(s, "or") || iequals(s, "LogicalOr")) return FusionPolicy::DecisionRule::LogicalOr;
  if (iequals(s, "majority")) return FusionPolicy::DecisionRule::Majority;
  if (iequals(s, "all")) return FusionPolicy::DecisionRule::All;
  throw ParseError("unknown fusion rule '" + std::string(s) + "'");
}

FusionPolicy::FailureHandling parse_failure_handling(std::string_view s) {
  if (iequals(s, "ExcludeFromMean") || iequals(s, "exclude")) return FusionPolicy::FailureHandling::ExcludeFromMean;
  if (iequals(s, "TreatAsError") || iequals(s, "error")) return FusionPolicy::FailureHandling::TreatAsError;
  throw ParseError("unknown failure handling '" + std::string(s) + "'");
}

Answer expected_answer(Question q, GroundTruth truth) {
  if (q == Question::Q1) return Answer::Yes;
  return truth == GroundTruth::MorphPair ? Answer::Yes : Answer::No;
}

FusedDecision fuse_answers(std::span<const Answer> answers, const FusionPolicy& policy) {
  int yes = 0;
  int no = 0;
  for (Answer a : answers) {
    if (a == Answer::Yes) ++yes;
    if (a == Answer::No) ++no;
  }
  const int answered = yes + no;
  if (answered == 0) return FusedDecision::AllFailed;
  if (policy.failure_handling == FusionPolicy::FailureHandling::TreatAsError &&
      answered < static_cast<int>(answers.size())) {
    return FusedDecision::AllFailed;
  }
  bool positive = false;
  switch (policy.decision_rule) {
    case FusionPolicy::DecisionRule::LogicalOr: positive = yes > 0; break;
    case FusionPolicy::DecisionRule::Majority: positive = 2 * yes >= answered; break;
    case FusionPolicy::DecisionRule::All: positive = no == 0; break;
  }
  return positive ? FusedDecision::Yes : FusedDecision::No;
}

namespace {

std::vector<Answer> answers_of(std::span<const RoundResult> rounds, Question q) {
  std::vector<Answer> out;
  out.reserve(rounds.size());
  for (const auto& r : rounds) out.push_back(r.answer(q).answer);
  return out;
}

// Wrong in some earlier answered round, right in the last round, and the
// last round actually answered.
bool improved(std::span<const RoundResult> rounds, Question q, GroundTruth truth) {
  if (rounds.size() < 2) return false;
  const Answer want = expected_answer(q, truth);
  const Answer last = rounds.back().answer(q).answer;
  if (last != want) return false;
  for (std::size_t i = 0; i + 1 < rounds.size(); ++i) {
    const Answer a = rounds[i].answer(q).answer;
    if (a != Answer::Absent && a != want) return true;
  }
  return false;
}

bool disagree(std::span<const RoundResult> rounds, Question q) {
  std::optional<Answer> seen;
  for (const auto& r : rounds) {
    const Answer a = r.answer(q).answer;
    if (a == Answer::Absent) continue;
    if (seen && *seen != a) return true;
    seen = a;
  }
  return false;
}

std::optional<double> mean_of(const std::vector<int>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Consistency classify_consistency(std::span<const RoundResult> rounds, GroundTruth ground_truth) {
  const bool any_answer = std::any_of(rounds.begin(), rounds.end(),
                                      [](const RoundResult& r) { return r.q1.answered() || r.q2.answered(); });
  if (!any_answer) return Consistency::AllFailed;
  if (improved(rounds, Question::Q2, ground_truth) || improved(rounds, Question::Q1, ground_truth)) {
    return Consistency::ImprovedAcrossRounds;
  }
  const FusionPolicy or_rule{};
  const auto q1 = answers_of(rounds, Question::Q1);
  const auto q2 = answers_of(rounds, Question::Q2);
  const bool contradiction =
      fuse_answers(q1, or_rule) == FusedDecision::Yes && fuse_answers(q2, or_rule) == FusedDecision::Yes;
  if (contradiction || disagree(rounds, Question::Q1) || disagree(rounds, Question::Q2)) {
    return Consistency::Conflicting;
  }
  const bool any_failed = std::any_of(rounds.begin(), rounds.end(),
                                      [](const RoundResult& r) { return !r.q1.answered() || !r.q2.answered(); });
  return any_failed ? Consistency::PartialFailureStable : Consistency::Stable;
}

PairOutcome fuse(std::span<const RoundResult> rounds, const FusionPolicy& policy, GroundTruth ground_truth) {
  if (rounds.empty()) throw FusionError("fuse: no rounds supplied");
  const std::string& pair_id = rounds.front().pair_id;
  for (const auto& r : rounds) {
    if (r.pair_id != pair_id) throw FusionError("fuse: rounds from different pairs ('" + pair_id + "', '" + r.pair_id + "')");
  }

  PairOutcome o;
  o.pair_id = pair_id;
  o.ground_truth = ground_truth;
  o.rounds_total = static_cast<int>(rounds.size());
  const auto q1 = answers_of(rounds, Question::Q1);
  const auto q2 = answers_of(rounds, Question::Q2);
  o.rounds_answered_q1 = static_cast<int>(std::count_if(q1.begin(), q1.end(), [](Answer a) { return a != Answer::Absent; }));
  o.rounds_answered_q2 = static_cast<int>(std::count_if(q2.begin(), q2.end(), [](Answer a) { return a != Answer::Absent; }));
  o.fused_q1 = fuse_answers(q1, policy);
  o.fused_q2 = fuse_answers(q2, policy);
  for (const auto& r : rounds) {
    // failed rounds never contribute a score
    if (r.q1.answered() && r.q1.probability) o.round_scores_q1.push_back(*r.q1.probability);
    if (r.q2.answered() && r.q2.probability) {
      o.round_scores_q2.push_back(*r.q2.probability);
      o.morph_evidence_scores.push_back(r.q2.answer == Answer::Yes ? *r.q2.probability : 100 - *r.q2.probability);
    }
  }
  o.mean_q1_score = mean_of(o.round_scores_q1);
  o.mean_q2_score = mean_of(o.round_scores_q2);
  o.consistency = classify_consistency(rounds, ground_truth);
  return o;
}

}  // namespace dmad
