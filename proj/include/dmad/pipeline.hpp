#pragma once

// End-to-end run: manifest -> rendered queries -> provider -> log -> parse ->
// fuse. Also the log-only operations built on the same pieces (replay,
// re-fusion, loading stored outcomes).

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dmad/fusion.hpp"
#include "dmad/gateway.hpp"
#include "dmad/mock.hpp"
#include "dmad/parser.hpp"
#include "dmad/prompt.hpp"
#include "dmad/protocol.hpp"
#include "dmad/provider.hpp"
#include "dmad/run_store.hpp"

namespace dmad {

// Recorded in every snapshot and repeated in reports.
std::vector<std::string> default_assumptions();

struct RunOptions {
  std::filesystem::path runs_dir = "runs";
  std::string run_id;
  ProtocolManifest manifest;
  ProviderConfig provider = ProviderConfig::defaults_for(ProviderKind::Mock);
  int rounds = 3;
  int concurrency = 4;
  FusionPolicy fusion;
  PromptTemplate prompt = canonical_prompt();
  ImageLoader loader = placeholder_loader();
  ScenarioRules rules = ScenarioRules::defaults();
  MockBehavior mock;  // used when provider.kind is Mock
  nlohmann::json command = nlohmann::json::object();

  // Injection points. Null means: real provider from `provider`, real HTTP,
  // wall clock.
  std::shared_ptr<Provider> provider_instance;
  std::shared_ptr<HttpTransport> transport;
  Clock* clock = nullptr;

  // Stop claiming new rounds after this many have been dispatched in this
  // invocation. Used to simulate an interrupted run.
  std::optional<std::size_t> stop_after;
  std::function<void(const std::string&)> progress;
};

struct RunSummary {
  std::string run_id;
  int rounds_planned = 0;
  int rounds_already_done = 0;
  int rounds_dispatched = 0;
  int new_transcripts = 0;
  int new_errors = 0;
  bool interrupted = false;
  std::optional<std::string> systemic_error;  // dispatch stopped for every pair
  std::vector<PairOutcome> outcomes;           // empty unless the run is complete
  std::map<Scenario, int> scenario_counts;
  int rounds_without_q2_answer = 0;
  std::vector<std::string> missing_pairs;
  std::vector<std::string> warnings;
};

// Throws ManifestError(Invariant) for an invalid manifest, GatewayError
// (AuthFailure) when credentials are missing, RunStoreError on IO failure or
// a run id reused with a different configuration. Everything else, including
// per-round provider failures, is recorded and the run continues.
RunSummary execute_run(const RunOptions& options);

struct RoundCollection {
  std::map<std::string, std::vector<RoundResult>> by_pair;  // complete pairs only, rounds in order
  std::vector<std::string> missing_pairs;                   // "pair_id: detail"
  std::vector<std::string> warnings;
};

// Rebuilds per-round results from a log. Transcript rounds are parsed with
// `rules`, unless use_stored_parsed is set and a Parsed record exists. Error
// rounds become failed rounds.
RoundCollection collect_rounds(const LogScan& scan, const RunSnapshot& snap, const ScenarioRules& rules,
                               bool use_stored_parsed);

std::vector<PairOutcome> fuse_collection(const RoundCollection& rounds, const RunSnapshot& snap,
                                         const FusionPolicy& policy);

struct ReplayResult {
  std::vector<RoundResult> rounds;
  std::vector<PairOutcome> outcomes;
  std::vector<std::string> missing_pairs;
  std::vector<std::string> warnings;
};

// Re-parses and re-fuses from raw transcripts alone. Rules and policy default
// to the ones recorded in the snapshot.
ReplayResult replay(const std::filesystem::path& runs_dir, const std::string& run_id,
                    const std::optional<ScenarioRules>& rules = std::nullopt,
                    const std::optional<FusionPolicy>& policy = std::nullopt);

// Re-fuses the stored Parsed records under another policy.
ReplayResult refuse(const std::filesystem::path& runs_dir, const std::string& run_id, const FusionPolicy& policy);

// Outcome records as written by the run. Empty if the run never finished.
std::vector<PairOutcome> load_outcomes(const std::filesystem::path& runs_dir, const std::string& run_id,
                                       std::vector<std::string>* warnings = nullptr);

// Parsed records as written by the run.
std::vector<RoundResult> load_parsed(const std::filesystem::path& runs_dir, const std::string& run_id);

}  // namespace dmad
