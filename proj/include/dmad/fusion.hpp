#pragma once

// Combines the independent rounds asked about one image pair into a single
// verdict. The default rule ORs the rounds: one "morphed" answer is enough.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmad/parser.hpp"

namespace dmad {

enum class FusedDecision : std::uint8_t { Yes, No, AllFailed };

enum class Consistency : std::uint8_t { Stable, ImprovedAcrossRounds, Conflicting, PartialFailureStable, AllFailed };

inline constexpr Consistency kAllConsistency[] = {Consistency::Stable, Consistency::ImprovedAcrossRounds,
                                                  Consistency::Conflicting, Consistency::PartialFailureStable,
                                                  Consistency::AllFailed};

std::string_view to_string(FusedDecision d);
std::string_view to_string(Consistency c);
FusedDecision parse_fused_decision(std::string_view s);
Consistency parse_consistency(std::string_view s);

struct FusionPolicy {
  enum class DecisionRule : std::uint8_t { LogicalOr, Majority, All };
  enum class ScoreRule : std::uint8_t { MeanOfPresent };
  enum class FailureHandling : std::uint8_t { ExcludeFromMean, TreatAsError };

  DecisionRule decision_rule = DecisionRule::LogicalOr;
  ScoreRule score_rule = ScoreRule::MeanOfPresent;
  FailureHandling failure_handling = FailureHandling::ExcludeFromMean;

  friend bool operator==(const FusionPolicy&, const FusionPolicy&) = default;
};

std::string_view to_string(FusionPolicy::DecisionRule r);
std::string_view to_string(FusionPolicy::FailureHandling f);
// Accepts "or", "majority", "all" (and the enum names).
FusionPolicy::DecisionRule parse_decision_rule(std::string_view s);
FusionPolicy::FailureHandling parse_failure_handling(std::string_view s);

struct PairOutcome {
  std::string pair_id;
  GroundTruth ground_truth = GroundTruth::BonaFidePair;
  std::optional<MorphType> morph_type;
  std::string provider;
  int rounds_total = 0;
  int rounds_answered_q1 = 0;
  int rounds_answered_q2 = 0;
  FusedDecision fused_q1 = FusedDecision::AllFailed;
  FusedDecision fused_q2 = FusedDecision::AllFailed;
  std::optional<double> mean_q1_score;
  std::optional<double> mean_q2_score;
  // Per-round scores in round order, for per-round distribution plots.
  std::vector<int> round_scores_q1;
  std::vector<int> round_scores_q2;
  // Q2 scores re-expressed as confidence that the probe is morphed:
  // p for a "Yes" round, 100 - p for a "No" round.
  std::vector<int> morph_evidence_scores;
  Consistency consistency = Consistency::AllFailed;

  FusedDecision fused(Question q) const { return q == Question::Q1 ? fused_q1 : fused_q2; }
  std::optional<double> mean_score(Question q) const { return q == Question::Q1 ? mean_q1_score : mean_q2_score; }
};

class FusionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Decision over the answers given to one question; Absent entries are failed rounds.
// Majority ties resolve to Yes.
FusedDecision fuse_answers(std::span<const Answer> answers, const FusionPolicy& policy);

// Rounds are classified in the order given (round_index order is expected).
Consistency classify_consistency(std::span<const RoundResult> rounds, GroundTruth ground_truth);

// Pre: 1..3 rounds (any count >= 1 is accepted), all with the same pair_id.
PairOutcome fuse(std::span<const RoundResult> rounds, const FusionPolicy& policy, GroundTruth ground_truth);

// Answer a correct round gives for the question under the given truth.
// Q2 asks "is the probe morphed"; Q1 asks "same identity", which a morph of
// the reference subject also satisfies by construction.
Answer expected_answer(Question q, GroundTruth truth);

}  // namespace dmad
