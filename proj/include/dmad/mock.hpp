#pragma once

// Offline provider. Replies are synthesized from seeded streams keyed by
// (seed, pair_id, round_index), so a run is reproducible without network
// access and without image files.
//
// Each pair draws one latent answer per question. A round repeats the
// latent answer with probability round_agreement and otherwise draws a
// fresh one; with round_agreement = 1 the per-round yes rate equals the
// fused rate under any decision rule.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "dmad/fusion.hpp"
#include "dmad/metrics.hpp"
#include "dmad/provider.hpp"

namespace dmad {

enum class FailureStyle : std::uint8_t { Refusal, GuidanceProxy, Base64Echo };
std::string_view to_string(FailureStyle s);
FailureStyle parse_failure_style(std::string_view s);

struct ScoreParams {
  double mean = 50;
  double stddev = 10;
};

struct MockBehavior {
  std::uint64_t seed = 0;
  std::map<GroundTruth, double> q1_yes_rate{{GroundTruth::BonaFidePair, 0.9}, {GroundTruth::MorphPair, 0.8}};
  std::map<GroundTruth, double> q2_yes_rate{{GroundTruth::BonaFidePair, 0.05}, {GroundTruth::MorphPair, 0.6}};
  // Replaces q2_yes_rate[MorphPair] for morphs of the given type.
  std::map<MorphType, double> q2_yes_rate_by_morph_type;
  std::map<Question, std::map<GroundTruth, ScoreParams>> scores{
      {Question::Q1, {{GroundTruth::BonaFidePair, {85, 8}}, {GroundTruth::MorphPair, {75, 12}}}},
      {Question::Q2, {{GroundTruth::BonaFidePair, {25, 12}}, {GroundTruth::MorphPair, {65, 15}}}},
  };
  double failure_rate = 0;
  FailureStyle failure_style = FailureStyle::Refusal;
  double round_agreement = 1.0;
  double disclaimer_rate = 0;
  double score_omit_rate = 0;

  // Throws std::invalid_argument when a rate leaves [0, 1] or a stddev is negative.
  void validate() const;
  double q2_rate(GroundTruth truth, std::optional<MorphType> type) const;

  static MockBehavior from_json(const nlohmann::json& j);  // missing keys keep defaults
  nlohmann::json to_json() const;
};

MockBehavior load_mock_behavior(const std::filesystem::path& path);

// What the generator decided for one round, before rendering it as text.
struct MockDraw {
  bool failed = false;
  Answer q1 = Answer::Absent;
  Answer q2 = Answer::Absent;
  std::optional<int> q1_score;
  std::optional<int> q2_score;
  bool disclaimer = false;
  int layout = 0;
};

MockDraw mock_draw(const std::string& pair_id, int round_index, const MockBehavior& behavior, GroundTruth truth,
                   std::optional<MorphType> morph_type = std::nullopt);

RawTranscript mock_generate(const RenderedQuery& query, const MockBehavior& behavior, GroundTruth truth,
                            std::optional<MorphType> morph_type = std::nullopt);

class MockProvider final : public Provider {
 public:
  struct Truth {
    GroundTruth ground_truth = GroundTruth::BonaFidePair;
    std::optional<MorphType> morph_type;
  };

  MockProvider(MockBehavior behavior, std::map<std::string, Truth> truth_by_pair);
  static MockProvider for_manifest(MockBehavior behavior, const ProtocolManifest& manifest);

  // Throws GatewayError(ProviderRejected) for a pair it was not told about.
  RawTranscript submit(const RenderedQuery& query) override;
  std::string id() const override { return "mock"; }
  std::string model() const override { return "mock"; }

 private:
  MockBehavior behavior_;
  std::map<std::string, Truth> truth_;
};

// --- calibration ---------------------------------------------------------

// Exact probability that a pair's fused Q2 decision is Yes, when each
// round answers with per-round yes rate p under the latent/agreement model
// above and fails with failure_rate. Computed by enumerating every round
// outcome through fuse_answers.
double fused_yes_probability(double p, double round_agreement, double failure_rate, int rounds,
                             const FusionPolicy& policy);
double all_failed_probability(double failure_rate, int rounds, const FusionPolicy& policy);

// Expected error rate (percent) for pairs of the given truth: MACER for
// morph pairs, BPCER for bona fide pairs.
double expected_error_rate(double p, GroundTruth truth, double round_agreement, double failure_rate, int rounds,
                           const FusionPolicy& policy, Convention convention);

// Per-round q2 yes rate that makes expected_error_rate hit `target` (percent).
// Bisection; throws std::invalid_argument if the target is out of reach.
double calibrate_yes_rate(double target, GroundTruth truth, double round_agreement, double failure_rate, int rounds,
                          const FusionPolicy& policy, Convention convention);

}  // namespace dmad
