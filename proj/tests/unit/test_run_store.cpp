#include <doctest.h>

#include <fstream>

#include "dmad/run_store.hpp"
#include "support.hpp"

using namespace dmad;
using dmad::testing::TempDir;
using nlohmann::json;

namespace {

RunRecord transcript_record(const std::string& pair, int round, const std::string& text = "reply") {
  RawTranscript t;
  t.pair_id = pair;
  t.round_index = round;
  t.provider_id = "mock";
  t.model = "mock";
  t.text = text;
  t.http_status = 200;
  RunRecord r;
  r.kind = RecordKind::Transcript;
  r.pair_id = pair;
  r.round_index = round;
  r.payload = transcript_payload(t);
  return r;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_SUITE("run_store") {
  TEST_CASE("records round-trip through JSON") {
    RunRecord r = transcript_record("p1", 2, "**Q1 Answer:** Yes\n\"quoted\" \xc3\xa9");
    r.run_id = "run-1";
    r.timestamp = "2024-01-01T00:00:00.000Z";
    const RunRecord back = RunRecord::from_json(r.to_json());
    CHECK(back.to_json() == r.to_json());
    CHECK(transcript_from_record(back).text == "**Q1 Answer:** Yes\n\"quoted\" \xc3\xa9");
    CHECK_THROWS_AS(RunRecord::from_json(json{{"record_kind", "Transcript"}}), ParseError);
  }

  TEST_CASE("appends are durable and duplicates are rejected") {
    TempDir tmp;
    {
      RunLog log(tmp.path(), "r1");
      log.append(transcript_record("p1", 1));
      log.append(transcript_record("p1", 2));
      CHECK_THROWS_AS(log.append(transcript_record("p1", 1)), DuplicateRecord);
      RunRecord other = transcript_record("p1", 3);
      other.run_id = "someone-else";
      CHECK_THROWS_AS(log.append(other), std::invalid_argument);
    }
    CHECK(line_count(run_paths(tmp.path(), "r1").log) == 2);
    RunLog reopened(tmp.path(), "r1");
    CHECK(reopened.existing().records.size() == 2);
    CHECK_THROWS_AS(reopened.append(transcript_record("p1", 2)), DuplicateRecord);
  }

  TEST_CASE("concurrent producers through the async writer") {
    TempDir tmp;
    RunLog log(tmp.path(), "r2");
    AsyncWriter writer(log);
    run_bounded(400, 8, [&](std::size_t i) {
      writer.submit(transcript_record("p" + std::to_string(i / 3), int(i % 3) + 1, std::string(500, 'x')));
      return true;
    });
    writer.close();
    const LogScan scan = read_log(log.paths().log);
    CHECK(scan.records.size() == 400);
    CHECK(scan.corrupt_lines == 0);
  }

  TEST_CASE("writer surfaces the first append error") {
    TempDir tmp;
    RunLog log(tmp.path(), "r3");
    AsyncWriter writer(log);
    writer.submit(transcript_record("p", 1));
    writer.submit(transcript_record("p", 1));
    CHECK_THROWS_AS(writer.close(), DuplicateRecord);
  }

  TEST_CASE("corrupt and partial lines are skipped with a warning") {
    TempDir tmp;
    {
      RunLog log(tmp.path(), "r4");
      log.append(transcript_record("a", 1));
    }
    const auto path = run_paths(tmp.path(), "r4").log;
    {
      std::ofstream out(path, std::ios::app);
      out << "this is not json\n";
      out << R"({"schema_version":1,"record_kind":"Transcript","run_id":"r4","pair_id":"b","round_in)";
    }
    const LogScan scan = read_log(path);
    CHECK(scan.records.size() == 1);
    CHECK(scan.corrupt_lines == 2);
    CHECK(scan.warnings.size() == 2);

    // Reopening starts a fresh line after the torn one, so new records parse.
    {
      RunLog log(tmp.path(), "r4");
      log.append(transcript_record("b", 1));
    }
    const LogScan after = read_log(path);
    CHECK(after.records.size() == 2);
    CHECK(after.corrupt_lines == 2);
  }

  TEST_CASE("resume counts transcript and error rounds as done") {
    TempDir tmp;
    {
      RunLog log(tmp.path(), "r5");
      log.append(transcript_record("a", 1));
      RunRecord err;
      err.kind = RecordKind::Error;
      err.pair_id = "a";
      err.round_index = 2;
      err.payload = error_payload(RoundError{ErrorKind::ExhaustedRetries, "gave up", 429, 4});
      log.append(err);
      RunRecord req;
      req.kind = RecordKind::Request;
      req.pair_id = "a";
      req.round_index = 3;
      log.append(req);
    }
    const auto done = resume(tmp.path(), "r5");
    CHECK(done == std::set<std::pair<std::string, int>>{{"a", 1}, {"a", 2}});
    const auto e = error_from_record(read_log(run_paths(tmp.path(), "r5").log).records[1]);
    CHECK(e.kind == ErrorKind::ExhaustedRetries);
    CHECK(e.attempts == 4);
  }

  TEST_CASE("snapshot is written once and guards against a changed configuration") {
    TempDir tmp;
    RunSnapshot s;
    s.run_id = "r6";
    s.provider = {{"provider", "mock"}, {"model", "mock"}};
    s.prompt_version = "paper-v1";
    s.prompt_sha256 = "abc";
    s.manifest_digest = "d1";
    s.manifest = manifest_to_json(testing::paper_scale_manifest(1));
    write_snapshot_once(tmp.path(), s);
    CHECK_NOTHROW(write_snapshot_once(tmp.path(), s));
    RunSnapshot changed = s;
    changed.manifest_digest = "d2";
    CHECK_THROWS_AS(write_snapshot_once(tmp.path(), changed), RunStoreError);
    changed = s;
    changed.rounds = 5;
    CHECK_THROWS_AS(write_snapshot_once(tmp.path(), changed), RunStoreError);
    CHECK(load_snapshot(tmp.path(), "r6").to_json() == s.to_json());
  }

  TEST_CASE("run ids are restricted to safe names") {
    CHECK_NOTHROW(check_run_id("run-2024.06_01"));
    CHECK_THROWS_AS(check_run_id(""), std::invalid_argument);
    CHECK_THROWS_AS(check_run_id(".."), std::invalid_argument);
    CHECK_THROWS_AS(check_run_id("a/b"), std::invalid_argument);
    CHECK_THROWS_AS(check_run_id(std::string(129, 'a')), std::invalid_argument);
  }

  TEST_CASE("outcome and parsed payload codecs") {
    PairOutcome o;
    o.pair_id = "p";
    o.ground_truth = GroundTruth::MorphPair;
    o.morph_type = MorphType::MIPGAN2;
    o.provider = "gemini";
    o.rounds_total = 3;
    o.fused_q2 = FusedDecision::Yes;
    o.mean_q2_score = 72.5;
    o.round_scores_q2 = {70, 75};
    o.consistency = Consistency::ImprovedAcrossRounds;
    CHECK(outcome_to_json(outcome_from_json(outcome_to_json(o))) == outcome_to_json(o));

    RoundResult r = parse_transcript(testing::structured_reply(true, 85, false, 80), "p", 1, raw_ref_for("p", 1));
    CHECK(round_result_to_json(round_result_from_json(round_result_to_json(r))) == round_result_to_json(r));
    CHECK(raw_ref_for("p", 1) == "log.jsonl#Transcript/p/1");

    FusionPolicy f{FusionPolicy::DecisionRule::Majority};
    CHECK(fusion_policy_from_json(fusion_policy_to_json(f)) == f);
  }
}
