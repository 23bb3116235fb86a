#pragma once

// Append-only JSONL run log. One record per line:
//   {"schema_version":1,"record_kind":"Transcript","run_id":..,"pair_id":..,
//    "round_index":2,"timestamp":..,"payload":{...}}
// Layout on disk: <runs_dir>/<run_id>/log.jsonl and manifest.json (the run
// snapshot). Payload schemas: docs/run-log.md.

#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "dmad/fusion.hpp"
#include "dmad/gateway.hpp"

namespace dmad {

inline constexpr int kSchemaVersion = 1;

enum class RecordKind : std::uint8_t { Request, Transcript, Parsed, Outcome, Error };
std::string_view to_string(RecordKind k);
RecordKind parse_record_kind(std::string_view s);

struct RunRecord {
  RecordKind kind = RecordKind::Transcript;
  std::string run_id;
  std::string pair_id;
  std::optional<int> round_index;  // unset for pair-level records (Outcome)
  nlohmann::json payload = nlohmann::json::object();
  int schema_version = kSchemaVersion;
  std::string timestamp;

  nlohmann::json to_json() const;
  // Throws ParseError when a required field is missing or mistyped.
  static RunRecord from_json(const nlohmann::json& j);
};

using RecordKey = std::tuple<std::string, std::string, int, RecordKind>;  // round -1 for pair-level
RecordKey key_of(const RunRecord& r);

class RunStoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DuplicateRecord : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path log;
  std::filesystem::path snapshot;
};

RunPaths run_paths(const std::filesystem::path& runs_dir, const std::string& run_id);

// Throws std::invalid_argument unless the id is 1..128 chars of [A-Za-z0-9._-]
// and not "." or "..".
void check_run_id(const std::string& run_id);

struct LogScan {
  std::vector<RunRecord> records;
  std::vector<std::string> warnings;  // one per skipped line
  int corrupt_lines = 0;
};

// Missing file gives an empty scan. Unparseable lines are skipped and noted.
LogScan read_log(const std::filesystem::path& log_path);

// Writer for one run's log. append() is thread-safe, but the pipeline funnels
// all writes through AsyncWriter so there is a single writing thread.
class RunLog {
 public:
  RunLog(const std::filesystem::path& runs_dir, std::string run_id);
  ~RunLog();
  RunLog(const RunLog&) = delete;
  RunLog& operator=(const RunLog&) = delete;

  // Writes one line and flushes. Throws DuplicateRecord for a key already in
  // the log, RunStoreError on IO failure, std::invalid_argument when the
  // record belongs to another run.
  void append(RunRecord record);
  bool contains(const RecordKey& key) const;

  const std::string& run_id() const { return run_id_; }
  const RunPaths& paths() const { return paths_; }
  // Records that were already on disk when the log was opened.
  const LogScan& existing() const { return existing_; }

 private:
  std::string run_id_;
  RunPaths paths_;
  LogScan existing_;
  std::FILE* file_ = nullptr;
  mutable std::mutex mu_;
  std::set<RecordKey> keys_;
};

// Queue in front of a RunLog, drained by one writer thread. The first append
// failure is kept; failed() turns true and close() rethrows it.
class AsyncWriter {
 public:
  explicit AsyncWriter(RunLog& log);
  ~AsyncWriter();
  AsyncWriter(const AsyncWriter&) = delete;
  AsyncWriter& operator=(const AsyncWriter&) = delete;

  void submit(RunRecord record);
  bool failed() const;
  void close();

 private:
  void drain();

  RunLog& log_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<RunRecord> queue_;
  bool closing_ = false;
  std::exception_ptr error_;
  std::thread thread_;
};

// (pair_id, round_index) with a Transcript or Error record. Error rounds
// count as done: a resumed run does not retry them.
std::set<std::pair<std::string, int>> completed_rounds(const LogScan& scan);
std::set<std::pair<std::string, int>> resume(const std::filesystem::path& runs_dir, const std::string& run_id,
                                             std::vector<std::string>* warnings = nullptr);

// --- snapshot -------------------------------------------------------------

struct RunSnapshot {
  std::string run_id;
  std::string started_at;
  nlohmann::json command = nlohmann::json::object();
  nlohmann::json provider = nlohmann::json::object();  // ProviderConfig::to_json, no secrets
  std::string prompt_version;
  std::string prompt_sha256;
  std::string manifest_digest;
  nlohmann::json manifest = nlohmann::json::object();
  FusionPolicy fusion;
  int rounds = 3;
  nlohmann::json mock_behavior;  // null for real providers
  nlohmann::json scenario_rules = nlohmann::json::object();
  std::vector<std::string> assumptions;

  nlohmann::json to_json() const;
  static RunSnapshot from_json(const nlohmann::json& j);
};

RunSnapshot load_snapshot(const std::filesystem::path& runs_dir, const std::string& run_id);
// Writes once. If a snapshot already exists it must describe the same run
// (provider, model, prompt, manifest, rounds, fusion); otherwise throws
// RunStoreError. Returns the snapshot now on disk.
RunSnapshot write_snapshot_once(const std::filesystem::path& runs_dir, const RunSnapshot& snap);

// --- payload codecs ---------------------------------------------------------

nlohmann::json request_payload(const RequestInfo& info, const PairSpec& pair);
nlohmann::json transcript_payload(const RawTranscript& t);
RawTranscript transcript_from_record(const RunRecord& r);
nlohmann::json error_payload(const RoundError& e);
RoundError error_from_record(const RunRecord& r);

nlohmann::json round_result_to_json(const RoundResult& r);
RoundResult round_result_from_json(const nlohmann::json& j);
nlohmann::json outcome_to_json(const PairOutcome& o);
PairOutcome outcome_from_json(const nlohmann::json& j);
nlohmann::json fusion_policy_to_json(const FusionPolicy& p);
FusionPolicy fusion_policy_from_json(const nlohmann::json& j);

// Pointer stored in Parsed records back to the transcript line.
std::string raw_ref_for(const std::string& pair_id, int round_index);

}  // namespace dmad
