#include "dmad/pipeline.hpp"

#include <algorithm>
#include <atomic>

namespace dmad {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::string> default_assumptions() {
  return {
      "Each round is a fresh request with no conversation history; the source does not say whether one chat or "
      "separate sessions were used.",
      "Q1 is fused across rounds with the same rule as Q2.",
      "Images are sent as stored on disk, without resizing or recompression; byte counts are logged.",
      "Sampling temperature is the provider default unless configured.",
      "Rounds without an answer are left out of fusion and score means.",
  };
}

namespace {

void note(const RunOptions& o, const std::string& msg) {
  if (o.progress) o.progress(msg);
}

RunSnapshot snapshot_for(const RunOptions& o, const Provider& provider) {
  RunSnapshot s;
  s.run_id = o.run_id;
  s.started_at = utc_timestamp_now();
  s.command = o.command;
  s.provider = o.provider.to_json();
  s.provider["provider"] = provider.id();
  s.provider["model"] = provider.model();
  s.prompt_version = o.prompt.version_tag;
  s.prompt_sha256 = sha256_hex(o.prompt.body);
  s.manifest_digest = manifest_digest(o.manifest);
  s.manifest = manifest_to_json(o.manifest);
  s.fusion = o.fusion;
  s.rounds = o.rounds;
  if (o.provider.kind == ProviderKind::Mock) s.mock_behavior = o.mock.to_json();
  s.scenario_rules = o.rules.to_json();
  s.assumptions = default_assumptions();
  return s;
}

std::shared_ptr<Provider> make_provider(const RunOptions& o, Clock& clock) {
  if (o.provider_instance) return o.provider_instance;
  if (o.provider.kind == ProviderKind::Mock) {
    return std::make_shared<MockProvider>(MockProvider::for_manifest(o.mock, o.manifest));
  }
  auto transport = o.transport ? o.transport : make_http_transport();
  return std::make_shared<HttpProvider>(o.provider, transport, clock);
}

RunRecord record(RecordKind kind, const std::string& run_id, const std::string& pair_id, std::optional<int> round,
                 json payload) {
  RunRecord r;
  r.kind = kind;
  r.run_id = run_id;
  r.pair_id = pair_id;
  r.round_index = round;
  r.payload = std::move(payload);
  return r;
}

RoundResult failed_round(const std::string& pair_id, int round_index) {
  RoundResult r;
  r.pair_id = pair_id;
  r.round_index = round_index;
  r.scenario = Scenario::CompleteFailure;
  r.raw_ref = "log.jsonl#Error/" + pair_id + "/" + std::to_string(round_index);
  return r;
}

}  // namespace

RoundCollection collect_rounds(const LogScan& scan, const RunSnapshot& snap, const ScenarioRules& rules,
                               bool use_stored_parsed) {
  RoundCollection out;
  out.warnings = scan.warnings;
  const ProtocolManifest manifest = manifest_from_json(snap.manifest);

  std::map<std::pair<std::string, int>, const RunRecord*> transcripts;
  std::map<std::pair<std::string, int>, const RunRecord*> parsed;
  std::set<std::pair<std::string, int>> errors;
  for (const auto& r : scan.records) {
    if (r.run_id != snap.run_id || !r.round_index) continue;
    const auto key = std::make_pair(r.pair_id, *r.round_index);
    switch (r.kind) {
      case RecordKind::Transcript: transcripts[key] = &r; break;
      case RecordKind::Parsed: parsed[key] = &r; break;
      case RecordKind::Error: errors.insert(key); break;
      default: break;
    }
  }

  for (const auto& pair : manifest.pairs) {
    std::vector<RoundResult> rounds;
    int logged = 0;
    for (int k = 1; k <= snap.rounds; ++k) {
      const auto key = std::make_pair(pair.pair_id, k);
      if (auto t = transcripts.find(key); t != transcripts.end()) {
        ++logged;
        auto p = parsed.find(key);
        if (use_stored_parsed && p != parsed.end()) {
          try {
            rounds.push_back(round_result_from_json(p->second->payload));
            continue;
          } catch (const ParseError& e) {
            out.warnings.push_back(pair.pair_id + " round " + std::to_string(k) +
                                   ": unreadable Parsed record, re-parsing (" + e.what() + ")");
          }
        }
        const RawTranscript raw = transcript_from_record(*t->second);
        rounds.push_back(parse_transcript(raw.text, pair.pair_id, k, raw_ref_for(pair.pair_id, k), rules));
      } else if (errors.count(key) != 0) {
        ++logged;
        rounds.push_back(failed_round(pair.pair_id, k));
      }
    }
    if (logged == snap.rounds) {
      out.by_pair.emplace(pair.pair_id, std::move(rounds));
    } else if (logged == 0) {
      out.missing_pairs.push_back(pair.pair_id + ": no transcripts");
    } else {
      out.missing_pairs.push_back(pair.pair_id + ": " + std::to_string(logged) + "/" + std::to_string(snap.rounds) +
                                  " rounds logged");
    }
  }
  return out;
}

std::vector<PairOutcome> fuse_collection(const RoundCollection& rounds, const RunSnapshot& snap,
                                         const FusionPolicy& policy) {
  const ProtocolManifest manifest = manifest_from_json(snap.manifest);
  const std::string provider = snap.provider.value("provider", std::string());
  std::vector<PairOutcome> out;
  for (const auto& pair : manifest.pairs) {
    auto it = rounds.by_pair.find(pair.pair_id);
    if (it == rounds.by_pair.end()) continue;
    PairOutcome o = fuse(it->second, policy, pair.ground_truth);
    o.morph_type = pair.morph_type;
    o.provider = provider;
    out.push_back(std::move(o));
  }
  return out;
}

RunSummary execute_run(const RunOptions& o) {
  check_run_id(o.run_id);
  if (o.rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (o.concurrency < 1) throw std::invalid_argument("concurrency must be >= 1");
  o.provider.validate();
  if (o.provider.kind == ProviderKind::Mock) o.mock.validate();
  check_template(o.prompt);
  if (auto v = validate_protocol(o.manifest); !v.empty()) {
    throw ManifestError(ManifestError::Kind::Invariant,
                        "manifest invalid: " + v.front().rule + " (" + v.front().subject + "): " + v.front().detail);
  }

  SystemClock system_clock;
  Clock& clock = o.clock != nullptr ? *o.clock : system_clock;
  // Credentials are checked here, before the snapshot or any request.
  std::shared_ptr<Provider> provider = make_provider(o, clock);

  RunSummary summary;
  summary.run_id = o.run_id;
  const RunSnapshot snap = write_snapshot_once(o.runs_dir, snapshot_for(o, *provider));

  RunLog log(o.runs_dir, o.run_id);
  summary.warnings = log.existing().warnings;
  const auto done = completed_rounds(log.existing());

  struct Task {
    const PairSpec* pair;
    int round;
  };
  std::vector<Task> tasks;
  for (const auto& pair : o.manifest.pairs) {
    for (int k = 1; k <= o.rounds; ++k) {
      ++summary.rounds_planned;
      if (done.count({pair.pair_id, k}) != 0) {
        ++summary.rounds_already_done;
        continue;
      }
      tasks.push_back({&pair, k});
    }
  }
  note(o, "run " + o.run_id + ": " + std::to_string(summary.rounds_planned) + " rounds planned, " +
              std::to_string(summary.rounds_already_done) + " already logged, " + std::to_string(tasks.size()) +
              " to dispatch");

  std::atomic<std::size_t> claimed{0};
  std::atomic<int> finished{0};
  std::atomic<int> transcripts{0};
  std::atomic<int> errors{0};
  std::atomic<bool> interrupted{false};
  std::mutex systemic_mu;
  std::optional<std::string> systemic;

  {
    AsyncWriter writer(log);
    run_bounded(tasks.size(), o.concurrency, [&](std::size_t i) {
      if (o.stop_after && claimed.fetch_add(1) >= *o.stop_after) {
        interrupted.store(true);
        return false;
      }
      if (writer.failed()) return false;
      const Task& t = tasks[i];
      RoundAttempt a = attempt_round(*t.pair, t.round, o.prompt, o.loader, *provider);
      if (a.request && !log.contains({o.run_id, t.pair->pair_id, t.round, RecordKind::Request})) {
        writer.submit(record(RecordKind::Request, o.run_id, t.pair->pair_id, t.round,
                             request_payload(*a.request, *t.pair)));
      }
      if (a.transcript) {
        writer.submit(record(RecordKind::Transcript, o.run_id, t.pair->pair_id, t.round,
                             transcript_payload(*a.transcript)));
        ++transcripts;
      } else {
        writer.submit(
            record(RecordKind::Error, o.run_id, t.pair->pair_id, t.round, error_payload(*a.error)));
        ++errors;
        if (a.error->kind == ErrorKind::AuthFailure) {
          std::lock_guard lock(systemic_mu);
          if (!systemic) systemic = "authentication rejected by provider: " + a.error->message;
          return false;
        }
      }
      const int n = ++finished;
      if (n % 50 == 0 || n == static_cast<int>(tasks.size())) {
        note(o, "  " + std::to_string(n) + "/" + std::to_string(tasks.size()) + " rounds, " +
                    std::to_string(errors.load()) + " errors");
      }
      return true;
    });
    writer.close();  // rethrows IO failures
  }

  summary.rounds_dispatched = finished.load() + (systemic ? 1 : 0);
  summary.new_transcripts = transcripts.load();
  summary.new_errors = errors.load();
  summary.interrupted = interrupted.load();
  summary.systemic_error = systemic;
  if (summary.interrupted || summary.systemic_error) return summary;

  // Finalize: Parsed records for every transcript, one Outcome per pair.
  const LogScan scan = read_log(log.paths().log);
  RoundCollection rounds = collect_rounds(scan, snap, o.rules, /*use_stored_parsed=*/true);
  summary.missing_pairs = rounds.missing_pairs;
  for (const auto& [pair_id, rs] : rounds.by_pair) {
    for (const auto& r : rs) {
      if (r.raw_ref.rfind("log.jsonl#Transcript/", 0) == 0 &&
          !log.contains({o.run_id, pair_id, r.round_index, RecordKind::Parsed})) {
        log.append(record(RecordKind::Parsed, o.run_id, pair_id, r.round_index, round_result_to_json(r)));
      }
      if (r.raw_ref.rfind("log.jsonl#Transcript/", 0) == 0) ++summary.scenario_counts[r.scenario];
      if (!r.q2.answered()) ++summary.rounds_without_q2_answer;
    }
  }
  summary.outcomes = fuse_collection(rounds, snap, snap.fusion);
  for (const auto& oc : summary.outcomes) {
    if (!log.contains({o.run_id, oc.pair_id, -1, RecordKind::Outcome})) {
      log.append(record(RecordKind::Outcome, o.run_id, oc.pair_id, std::nullopt, outcome_to_json(oc)));
    }
  }
  return summary;
}

namespace {

ReplayResult to_replay(RoundCollection&& c, const RunSnapshot& snap, const FusionPolicy& policy) {
  ReplayResult r;
  r.outcomes = fuse_collection(c, snap, policy);
  for (auto& [pair_id, rs] : c.by_pair) {
    for (auto& x : rs) r.rounds.push_back(std::move(x));
  }
  r.missing_pairs = std::move(c.missing_pairs);
  r.warnings = std::move(c.warnings);
  return r;
}

}  // namespace

ReplayResult replay(const fs::path& runs_dir, const std::string& run_id, const std::optional<ScenarioRules>& rules,
                    const std::optional<FusionPolicy>& policy) {
  const RunSnapshot snap = load_snapshot(runs_dir, run_id);
  const LogScan scan = read_log(run_paths(runs_dir, run_id).log);
  const ScenarioRules effective = rules ? *rules : ScenarioRules::from_json(snap.scenario_rules);
  return to_replay(collect_rounds(scan, snap, effective, false), snap, policy.value_or(snap.fusion));
}

ReplayResult refuse(const fs::path& runs_dir, const std::string& run_id, const FusionPolicy& policy) {
  const RunSnapshot snap = load_snapshot(runs_dir, run_id);
  const LogScan scan = read_log(run_paths(runs_dir, run_id).log);
  return to_replay(collect_rounds(scan, snap, ScenarioRules::from_json(snap.scenario_rules), true), snap, policy);
}

std::vector<PairOutcome> load_outcomes(const fs::path& runs_dir, const std::string& run_id,
                                       std::vector<std::string>* warnings) {
  check_run_id(run_id);
  const LogScan scan = read_log(run_paths(runs_dir, run_id).log);
  if (warnings != nullptr) warnings->insert(warnings->end(), scan.warnings.begin(), scan.warnings.end());
  std::vector<PairOutcome> out;
  for (const auto& r : scan.records) {
    if (r.kind != RecordKind::Outcome) continue;
    try {
      out.push_back(outcome_from_json(r.payload));
    } catch (const ParseError& e) {
      if (warnings != nullptr) warnings->push_back(r.pair_id + ": unreadable Outcome record (" + e.what() + ")");
    }
  }
  return out;
}

std::vector<RoundResult> load_parsed(const fs::path& runs_dir, const std::string& run_id) {
  check_run_id(run_id);
  const LogScan scan = read_log(run_paths(runs_dir, run_id).log);
  std::vector<RoundResult> out;
  for (const auto& r : scan.records) {
    if (r.kind != RecordKind::Parsed) continue;
    try {
      out.push_back(round_result_from_json(r.payload));
    } catch (const ParseError&) {
      // skipped, same as a corrupt line
    }
  }
  return out;
}

}  // namespace dmad
