#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "dmad/pipeline.hpp"
#include "support.hpp"

using namespace dmad;
using dmad::testing::TempDir;

namespace {

RunOptions mock_options(const std::filesystem::path& runs_dir, const std::string& id, std::uint64_t seed) {
  RunOptions o;
  o.runs_dir = runs_dir;
  o.run_id = id;
  o.manifest = testing::paper_scale_manifest(seed);
  o.mock.seed = seed;
  o.mock.failure_rate = 0.05;
  o.mock.round_agreement = 0.7;
  return o;
}

int count_kind(const LogScan& scan, RecordKind k) {
  return static_cast<int>(
      std::count_if(scan.records.begin(), scan.records.end(), [k](const RunRecord& r) { return r.kind == k; }));
}

class AlwaysStatus final : public HttpTransport {
 public:
  explicit AlwaysStatus(int status) : status_(status) {}
  HttpResponse post(const HttpRequest&) override {
    ++calls;
    return {status_, "{\"error\":\"denied\"}", {}};
  }
  std::atomic<int> calls{0};

 private:
  int status_;
};

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("a full mock run logs every round and fuses every pair") {
    TempDir tmp;
    const RunSummary s = execute_run(mock_options(tmp.path(), "full", 1));
    CHECK(s.rounds_planned == 600);
    CHECK(s.rounds_dispatched == 600);
    CHECK(s.new_transcripts + s.new_errors == 600);
    CHECK_FALSE(s.interrupted);
    CHECK(s.outcomes.size() == 200);
    const LogScan scan = read_log(run_paths(tmp.path(), "full").log);
    CHECK(count_kind(scan, RecordKind::Request) == 600);
    CHECK(count_kind(scan, RecordKind::Transcript) == 600);
    CHECK(count_kind(scan, RecordKind::Parsed) == 600);
    CHECK(count_kind(scan, RecordKind::Outcome) == 200);
  }

  TEST_CASE("an interrupted run resumes without repeating rounds") {
    TempDir tmp;
    RunOptions o = mock_options(tmp.path(), "resume", 2);
    o.stop_after = 137;
    const RunSummary first = execute_run(o);
    CHECK(first.interrupted);
    CHECK(first.outcomes.empty());
    const int logged = count_kind(read_log(run_paths(tmp.path(), "resume").log), RecordKind::Transcript);
    CHECK(logged >= 137);
    CHECK(logged <= 137 + o.concurrency);

    o.stop_after.reset();
    const RunSummary second = execute_run(o);
    CHECK(second.rounds_already_done == logged);
    CHECK(second.rounds_dispatched == 600 - logged);
    CHECK(second.outcomes.size() == 200);
    CHECK(count_kind(read_log(run_paths(tmp.path(), "resume").log), RecordKind::Transcript) == 600);

    // The resumed run's outcomes match a run that was never interrupted.
    const RunSummary straight = execute_run(mock_options(tmp.path(), "straight", 2));
    REQUIRE(straight.outcomes.size() == second.outcomes.size());
    for (std::size_t i = 0; i < straight.outcomes.size(); ++i) {
      CHECK(outcome_to_json(straight.outcomes[i]) == outcome_to_json(second.outcomes[i]));
    }
  }

  TEST_CASE("replay from raw transcripts reproduces the stored outcomes") {
    TempDir tmp;
    const RunSummary s = execute_run(mock_options(tmp.path(), "rep", 3));
    const ReplayResult r = replay(tmp.path(), "rep");
    REQUIRE(r.outcomes.size() == s.outcomes.size());
    for (std::size_t i = 0; i < r.outcomes.size(); ++i) {
      CHECK(outcome_to_json(r.outcomes[i]) == outcome_to_json(s.outcomes[i]));
    }
    CHECK(load_outcomes(tmp.path(), "rep").size() == 200);
  }

  TEST_CASE("re-fusion under another rule changes only the fused decisions") {
    TempDir tmp;
    execute_run(mock_options(tmp.path(), "refuse", 4));
    const ReplayResult all = refuse(tmp.path(), "refuse", FusionPolicy{FusionPolicy::DecisionRule::All});
    const ReplayResult orr = refuse(tmp.path(), "refuse", FusionPolicy{});
    REQUIRE(all.outcomes.size() == orr.outcomes.size());
    for (std::size_t i = 0; i < all.outcomes.size(); ++i) {
      if (orr.outcomes[i].fused_q2 == FusedDecision::No) CHECK(all.outcomes[i].fused_q2 == FusedDecision::No);
      CHECK(all.outcomes[i].mean_q2_score == orr.outcomes[i].mean_q2_score);
    }
  }

  TEST_CASE("a reused run id with a different manifest is refused") {
    TempDir tmp;
    RunOptions o = mock_options(tmp.path(), "same", 5);
    o.stop_after = 3;
    execute_run(o);
    RunOptions other = mock_options(tmp.path(), "same", 6);
    CHECK_THROWS_AS(execute_run(other), RunStoreError);
  }

  TEST_CASE("missing credentials stop the run before anything is sent") {
    TempDir tmp;
    RunOptions o = mock_options(tmp.path(), "noauth", 1);
    o.provider = ProviderConfig::defaults_for(ProviderKind::OpenAI);
    o.provider.api_key_env = "DMAD_TEST_UNSET_KEY_VARIABLE";
    auto transport = std::make_shared<AlwaysStatus>(200);
    o.transport = transport;
    try {
      execute_run(o);
      FAIL("expected AuthFailure");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == ErrorKind::AuthFailure);
    }
    CHECK(transport->calls == 0);
    CHECK_FALSE(std::filesystem::exists(run_paths(tmp.path(), "noauth").log));
  }

  TEST_CASE("a rejected key is systemic: dispatch stops and nothing is fused") {
    TempDir tmp;
    ::setenv("DMAD_TEST_KEY", "wrong", 1);
    RunOptions o = mock_options(tmp.path(), "badkey", 1);
    o.provider = ProviderConfig::defaults_for(ProviderKind::OpenAI);
    o.provider.api_key_env = "DMAD_TEST_KEY";
    o.concurrency = 2;
    auto transport = std::make_shared<AlwaysStatus>(401);
    o.transport = transport;
    SimulatedClock clock;
    o.clock = &clock;
    const RunSummary s = execute_run(o);
    CHECK(s.systemic_error.has_value());
    CHECK(s.outcomes.empty());
    CHECK(transport->calls <= 2);
    const LogScan scan = read_log(run_paths(tmp.path(), "badkey").log);
    CHECK(count_kind(scan, RecordKind::Error) >= 1);
    CHECK(count_kind(scan, RecordKind::Outcome) == 0);
    std::ifstream log(run_paths(tmp.path(), "badkey").log);
    const std::string text((std::istreambuf_iterator<char>(log)), std::istreambuf_iterator<char>());
    CHECK(text.find("wrong") == std::string::npos);
    ::unsetenv("DMAD_TEST_KEY");
  }

  TEST_CASE("invalid manifests are rejected up front") {
    TempDir tmp;
    RunOptions o = mock_options(tmp.path(), "bad", 1);
    o.manifest.pairs.push_back(o.manifest.pairs.front());
    o.manifest.refresh_counts();
    CHECK_THROWS_AS(execute_run(o), ManifestError);
  }

  TEST_CASE("unloadable images become per-round errors, not a crash") {
    TempDir tmp;
    RunOptions o = mock_options(tmp.path(), "noimg", 1);
    o.loader = disk_loader(tmp.path() / "nowhere");
    const RunSummary s = execute_run(o);
    CHECK(s.new_errors == 600);
    CHECK(s.outcomes.size() == 200);
    for (const auto& out : s.outcomes) CHECK(out.consistency == Consistency::AllFailed);
  }

  TEST_CASE("rounds missing from a log are reported per pair") {
    TempDir tmp;
    RunOptions o = mock_options(tmp.path(), "partial", 1);
    o.concurrency = 1;
    o.stop_after = 4;
    execute_run(o);
    const ReplayResult r = replay(tmp.path(), "partial");
    CHECK(r.outcomes.size() == 1);
    CHECK(r.missing_pairs.size() == 199);
    CHECK(r.missing_pairs.front().find("1/3 rounds logged") != std::string::npos);
  }
}
