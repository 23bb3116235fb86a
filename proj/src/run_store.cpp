#include "dmad/run_store.hpp"

#include <fstream>

namespace dmad {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(RecordKind k) {
  switch (k) {
    case RecordKind::Request: return "Request";
    case RecordKind::Transcript: return "Transcript";
    case RecordKind::Parsed: return "Parsed";
    case RecordKind::Outcome: return "Outcome";
    case RecordKind::Error: return "Error";
  }
  return "?";
}

RecordKind parse_record_kind(std::string_view s) {
  for (auto k : {RecordKind::Request, RecordKind::Transcript, RecordKind::Parsed, RecordKind::Outcome,
                 RecordKind::Error}) {
    if (s == to_string(k)) return k;
  }
  throw ParseError("unknown record kind '" + std::string(s) + "'");
}

json RunRecord::to_json() const {
  json j{{"schema_version", schema_version},
         {"record_kind", to_string(kind)},
         {"run_id", run_id},
         {"pair_id", pair_id}};
  j["round_index"] = round_index ? json(*round_index) : json(nullptr);
  j["timestamp"] = timestamp;
  j["payload"] = payload;
  return j;
}

RunRecord RunRecord::from_json(const json& j) {
  try {
    RunRecord r;
    r.schema_version = j.at("schema_version").get<int>();
    r.kind = parse_record_kind(j.at("record_kind").get<std::string>());
    r.run_id = j.at("run_id").get<std::string>();
    r.pair_id = j.at("pair_id").get<std::string>();
    const json& ri = j.at("round_index");
    if (!ri.is_null()) r.round_index = ri.get<int>();
    r.timestamp = j.value("timestamp", std::string());
    r.payload = j.at("payload");
    if (!r.payload.is_object()) throw ParseError("payload is not an object");
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("run record: ") + e.what());
  }
}

RecordKey key_of(const RunRecord& r) { return {r.run_id, r.pair_id, r.round_index.value_or(-1), r.kind}; }

RunPaths run_paths(const fs::path& runs_dir, const std::string& run_id) {
  const fs::path dir = runs_dir / run_id;
  return {dir, dir / "log.jsonl", dir / "manifest.json"};
}

void check_run_id(const std::string& run_id) {
  if (run_id.empty() || run_id.size() > 128 || run_id == "." || run_id == "..") {
    throw std::invalid_argument("invalid run id '" + run_id + "'");
  }
  for (char c : run_id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    if (!ok) throw std::invalid_argument("invalid run id '" + run_id + "': use letters, digits, '.', '_', '-'");
  }
}

LogScan read_log(const fs::path& log_path) {
  LogScan scan;
  std::ifstream in(log_path, std::ios::binary);
  if (!in) return scan;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      scan.records.push_back(RunRecord::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      ++scan.corrupt_lines;
      scan.warnings.push_back(log_path.string() + ":" + std::to_string(lineno) + ": skipped unreadable record (" +
                              utf8_truncate(e.what(), 160) + ")");
    }
  }
  return scan;
}

// --- writer -----------------------------------------------------------------

RunLog::RunLog(const fs::path& runs_dir, std::string run_id) : run_id_(std::move(run_id)) {
  check_run_id(run_id_);
  paths_ = run_paths(runs_dir, run_id_);
  std::error_code ec;
  fs::create_directories(paths_.dir, ec);
  if (ec) throw RunStoreError("cannot create run directory '" + paths_.dir.string() + "': " + ec.message());

  existing_ = read_log(paths_.log);
  for (const auto& r : existing_.records) keys_.insert(key_of(r));

  // A crash can leave a partial last line; start on a fresh one so the next
  // record is not glued onto it.
  bool needs_newline = false;
  if (fs::exists(paths_.log) && fs::file_size(paths_.log) > 0) {
    std::ifstream in(paths_.log, std::ios::binary);
    in.seekg(-1, std::ios::end);
    char last = '\n';
    in.get(last);
    needs_newline = last != '\n';
  }
  file_ = std::fopen(paths_.log.c_str(), "ab");
  if (file_ == nullptr) throw RunStoreError("cannot open run log '" + paths_.log.string() + "' for appending");
  if (needs_newline && (std::fputc('\n', file_) == EOF || std::fflush(file_) != 0)) {
    throw RunStoreError("cannot write to run log '" + paths_.log.string() + "'");
  }
}

RunLog::~RunLog() {
  if (file_ != nullptr) std::fclose(file_);
}

void RunLog::append(RunRecord record) {
  if (record.run_id.empty()) record.run_id = run_id_;
  if (record.run_id != run_id_) {
    throw std::invalid_argument("record for run '" + record.run_id + "' appended to log of '" + run_id_ + "'");
  }
  if (record.timestamp.empty()) record.timestamp = utc_timestamp_now();
  const RecordKey key = key_of(record);
  const std::string line = record.to_json().dump() + "\n";

  std::lock_guard lock(mu_);
  if (keys_.count(key) != 0) {
    throw DuplicateRecord("duplicate " + std::string(to_string(record.kind)) + " record for pair '" +
                          record.pair_id + "' round " + std::to_string(record.round_index.value_or(-1)));
  }
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
    throw RunStoreError("write to run log '" + paths_.log.string() + "' failed");
  }
  keys_.insert(key);
}

bool RunLog::contains(const RecordKey& key) const {
  std::lock_guard lock(mu_);
  return keys_.count(key) != 0;
}

AsyncWriter::AsyncWriter(RunLog& log) : log_(log), thread_([this] { drain(); }) {}

AsyncWriter::~AsyncWriter() {
  try {
    close();
  } catch (...) {
    // close() already surfaced the error to whoever called it first
  }
}

void AsyncWriter::submit(RunRecord record) {
  {
    std::lock_guard lock(mu_);
    if (closing_) throw std::logic_error("AsyncWriter: submit after close");
    queue_.push_back(std::move(record));
  }
  cv_.notify_one();
}

bool AsyncWriter::failed() const {
  std::lock_guard lock(mu_);
  return error_ != nullptr;
}

void AsyncWriter::drain() {
  for (;;) {
    RunRecord next;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return closing_ || !queue_.empty(); });
      if (queue_.empty()) return;
      next = std::move(queue_.front());
      queue_.pop_front();
      if (error_) continue;  // drop everything after the first failure
    }
    try {
      log_.append(std::move(next));
    } catch (...) {
      std::lock_guard lock(mu_);
      if (!error_) error_ = std::current_exception();
    }
  }
}

void AsyncWriter::close() {
  {
    std::lock_guard lock(mu_);
    closing_ = true;
  }
  cv_.notify_one();
  if (thread_.joinable()) thread_.join();
  std::exception_ptr err;
  {
    std::lock_guard lock(mu_);
    err = std::exchange(error_, nullptr);
  }
  if (err) std::rethrow_exception(err);
}

std::set<std::pair<std::string, int>> completed_rounds(const LogScan& scan) {
  std::set<std::pair<std::string, int>> done;
  for (const auto& r : scan.records) {
    if ((r.kind == RecordKind::Transcript || r.kind == RecordKind::Error) && r.round_index) {
      done.emplace(r.pair_id, *r.round_index);
    }
  }
  return done;
}

std::set<std::pair<std::string, int>> resume(const fs::path& runs_dir, const std::string& run_id,
                                             std::vector<std::string>* warnings) {
  check_run_id(run_id);
  LogScan scan = read_log(run_paths(runs_dir, run_id).log);
  if (warnings != nullptr) warnings->insert(warnings->end(), scan.warnings.begin(), scan.warnings.end());
  return completed_rounds(scan);
}

// --- snapshot ---------------------------------------------------------------

json fusion_policy_to_json(const FusionPolicy& p) {
  return {{"decision_rule", to_string(p.decision_rule)},
          {"score_rule", "MeanOfPresent"},
          {"failure_handling", to_string(p.failure_handling)}};
}

FusionPolicy fusion_policy_from_json(const json& j) {
  FusionPolicy p;
  p.decision_rule = parse_decision_rule(j.value("decision_rule", std::string("LogicalOr")));
  p.failure_handling = parse_failure_handling(j.value("failure_handling", std::string("ExcludeFromMean")));
  return p;
}

json RunSnapshot::to_json() const {
  return {{"schema_version", kSchemaVersion},
          {"run_id", run_id},
          {"started_at", started_at},
          {"command", command},
          {"provider", provider},
          {"prompt_version", prompt_version},
          {"prompt_sha256", prompt_sha256},
          {"manifest_digest", manifest_digest},
          {"manifest", manifest},
          {"fusion", fusion_policy_to_json(fusion)},
          {"rounds", rounds},
          {"mock_behavior", mock_behavior},
          {"scenario_rules", scenario_rules},
          {"assumptions", assumptions}};
}

RunSnapshot RunSnapshot::from_json(const json& j) {
  try {
    RunSnapshot s;
    s.run_id = j.at("run_id").get<std::string>();
    s.started_at = j.value("started_at", std::string());
    s.command = j.value("command", json::object());
    s.provider = j.at("provider");
    s.prompt_version = j.at("prompt_version").get<std::string>();
    s.prompt_sha256 = j.value("prompt_sha256", std::string());
    s.manifest_digest = j.at("manifest_digest").get<std::string>();
    s.manifest = j.at("manifest");
    s.fusion = fusion_policy_from_json(j.value("fusion", json::object()));
    s.rounds = j.value("rounds", 3);
    s.mock_behavior = j.value("mock_behavior", json());
    s.scenario_rules = j.value("scenario_rules", json::object());
    s.assumptions = j.value("assumptions", std::vector<std::string>{});
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("run snapshot: ") + e.what());
  }
}

RunSnapshot load_snapshot(const fs::path& runs_dir, const std::string& run_id) {
  check_run_id(run_id);
  const fs::path p = run_paths(runs_dir, run_id).snapshot;
  std::ifstream in(p);
  if (!in) throw RunStoreError("no run snapshot at '" + p.string() + "'");
  try {
    return RunSnapshot::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw RunStoreError("run snapshot '" + p.string() + "' is not valid JSON: " + e.what());
  }
}

RunSnapshot write_snapshot_once(const fs::path& runs_dir, const RunSnapshot& snap) {
  check_run_id(snap.run_id);
  const RunPaths paths = run_paths(runs_dir, snap.run_id);
  if (fs::exists(paths.snapshot)) {
    RunSnapshot old = load_snapshot(runs_dir, snap.run_id);
    std::vector<std::string> diffs;
    auto same = [&](const char* what, const json& a, const json& b) {
      if (a != b) diffs.emplace_back(what);
    };
    same("provider", old.provider.value("provider", ""), snap.provider.value("provider", ""));
    same("model", old.provider.value("model", ""), snap.provider.value("model", ""));
    same("prompt", old.prompt_sha256, snap.prompt_sha256);
    same("manifest", old.manifest_digest, snap.manifest_digest);
    same("rounds", old.rounds, snap.rounds);
    same("fusion", fusion_policy_to_json(old.fusion), fusion_policy_to_json(snap.fusion));
    same("mock behavior", old.mock_behavior, snap.mock_behavior);
    if (!diffs.empty()) {
      std::string list;
      for (const auto& d : diffs) list += (list.empty() ? "" : ", ") + d;
      throw RunStoreError("run '" + snap.run_id + "' already exists with a different " + list +
                          "; choose a new --run-id");
    }
    return old;
  }
  std::error_code ec;
  fs::create_directories(paths.dir, ec);
  if (ec) throw RunStoreError("cannot create run directory '" + paths.dir.string() + "': " + ec.message());
  const fs::path tmp = paths.snapshot.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << snap.to_json().dump(2) << "\n";
    if (!out) throw RunStoreError("cannot write run snapshot '" + tmp.string() + "'");
  }
  fs::rename(tmp, paths.snapshot, ec);
  if (ec) throw RunStoreError("cannot move run snapshot into place: " + ec.message());
  return snap;
}

// --- payload codecs -----------------------------------------------------------

namespace {

json image_json(const ImageInfo& i) { return {{"image_id", i.image_id}, {"media_type", i.media_type}, {"bytes", i.byte_count}}; }

json opt_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }
json opt_double(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<int> get_opt_int(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<int>();
}

std::optional<double> get_opt_double(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

json parsed_answer_json(const ParsedAnswer& a) {
  return {{"answer", to_string(a.answer)},
          {"probability", opt_int(a.probability)},
          {"explanation_excerpt", a.explanation_excerpt}};
}

ParsedAnswer parsed_answer_from(const json& j) {
  ParsedAnswer a;
  a.answer = parse_answer(j.at("answer").get<std::string>());
  a.probability = get_opt_int(j, "probability");
  a.explanation_excerpt = j.value("explanation_excerpt", std::string());
  return a;
}

}  // namespace

json request_payload(const RequestInfo& info, const PairSpec& pair) {
  json j{{"provider", info.provider},
         {"model", info.model},
         {"prompt_version", info.prompt_version},
         {"prompt_sha256", info.prompt_sha256},
         {"image_a", image_json(info.image_a)},
         {"image_b", image_json(info.image_b)},
         {"ground_truth", to_string(pair.ground_truth)},
         {"reference_id", pair.reference.id},
         {"probe_id", pair.probe.id}};
  j["morph_type"] = pair.morph_type ? json(to_string(*pair.morph_type)) : json(nullptr);
  return j;
}

json transcript_payload(const RawTranscript& t) {
  return {{"provider", t.provider_id},
          {"model", t.model},
          {"request_timestamp", t.request_timestamp},
          {"latency_ms", t.latency.count()},
          {"http_status", t.http_status},
          {"truncated", t.truncated},
          {"attempts", t.attempts},
          {"text", t.text}};
}

RawTranscript transcript_from_record(const RunRecord& r) {
  if (r.kind != RecordKind::Transcript) throw ParseError("not a Transcript record");
  try {
    RawTranscript t;
    t.pair_id = r.pair_id;
    t.round_index = r.round_index.value_or(0);
    const json& p = r.payload;
    t.provider_id = p.value("provider", std::string());
    t.model = p.value("model", std::string());
    t.request_timestamp = p.value("request_timestamp", std::string());
    t.latency = std::chrono::milliseconds(p.value("latency_ms", 0LL));
    t.http_status = p.value("http_status", 0);
    t.truncated = p.value("truncated", false);
    t.attempts = p.value("attempts", 1);
    t.text = p.at("text").get<std::string>();
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("transcript payload: ") + e.what());
  }
}

json error_payload(const RoundError& e) {
  return {{"kind", to_string(e.kind)},
          {"message", e.message},
          {"http_status", e.http_status},
          {"attempts", e.attempts}};
}

RoundError error_from_record(const RunRecord& r) {
  if (r.kind != RecordKind::Error) throw ParseError("not an Error record");
  try {
    RoundError e;
    e.kind = parse_error_kind(r.payload.at("kind").get<std::string>());
    e.message = r.payload.value("message", std::string());
    e.http_status = r.payload.value("http_status", 0);
    e.attempts = r.payload.value("attempts", 0);
    return e;
  } catch (const json::exception& ex) {
    throw ParseError(std::string("error payload: ") + ex.what());
  }
}

json round_result_to_json(const RoundResult& r) {
  return {{"pair_id", r.pair_id},
          {"round_index", r.round_index},
          {"scenario", to_string(r.scenario)},
          {"q1", parsed_answer_json(r.q1)},
          {"q2", parsed_answer_json(r.q2)},
          {"raw_ref", r.raw_ref}};
}

RoundResult round_result_from_json(const json& j) {
  try {
    RoundResult r;
    r.pair_id = j.at("pair_id").get<std::string>();
    r.round_index = j.at("round_index").get<int>();
    r.scenario = parse_scenario(j.at("scenario").get<std::string>());
    r.q1 = parsed_answer_from(j.at("q1"));
    r.q2 = parsed_answer_from(j.at("q2"));
    r.raw_ref = j.value("raw_ref", std::string());
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("round result: ") + e.what());
  }
}

json outcome_to_json(const PairOutcome& o) {
  json j{{"pair_id", o.pair_id},
         {"ground_truth", to_string(o.ground_truth)},
         {"provider", o.provider},
         {"rounds_total", o.rounds_total},
         {"rounds_answered_q1", o.rounds_answered_q1},
         {"rounds_answered_q2", o.rounds_answered_q2},
         {"fused_q1", to_string(o.fused_q1)},
         {"fused_q2", to_string(o.fused_q2)},
         {"mean_q1_score", opt_double(o.mean_q1_score)},
         {"mean_q2_score", opt_double(o.mean_q2_score)},
         {"round_scores_q1", o.round_scores_q1},
         {"round_scores_q2", o.round_scores_q2},
         {"morph_evidence_scores", o.morph_evidence_scores},
         {"consistency", to_string(o.consistency)}};
  j["morph_type"] = o.morph_type ? json(to_string(*o.morph_type)) : json(nullptr);
  return j;
}

PairOutcome outcome_from_json(const json& j) {
  try {
    PairOutcome o;
    o.pair_id = j.at("pair_id").get<std::string>();
    o.ground_truth = parse_ground_truth(j.at("ground_truth").get<std::string>());
    if (j.contains("morph_type") && !j["morph_type"].is_null()) {
      o.morph_type = parse_morph_type(j["morph_type"].get<std::string>());
    }
    o.provider = j.value("provider", std::string());
    o.rounds_total = j.at("rounds_total").get<int>();
    o.rounds_answered_q1 = j.value("rounds_answered_q1", 0);
    o.rounds_answered_q2 = j.value("rounds_answered_q2", 0);
    o.fused_q1 = parse_fused_decision(j.at("fused_q1").get<std::string>());
    o.fused_q2 = parse_fused_decision(j.at("fused_q2").get<std::string>());
    o.mean_q1_score = get_opt_double(j, "mean_q1_score");
    o.mean_q2_score = get_opt_double(j, "mean_q2_score");
    o.round_scores_q1 = j.value("round_scores_q1", std::vector<int>{});
    o.round_scores_q2 = j.value("round_scores_q2", std::vector<int>{});
    o.morph_evidence_scores = j.value("morph_evidence_scores", std::vector<int>{});
    o.consistency = parse_consistency(j.at("consistency").get<std::string>());
    return o;
  } catch (const json::exception& e) {
    throw ParseError(std::string("pair outcome: ") + e.what());
  }
}

std::string raw_ref_for(const std::string& pair_id, int round_index) {
  return "log.jsonl#Transcript/" + pair_id + "/" + std::to_string(round_index);
}

}  // namespace dmad
