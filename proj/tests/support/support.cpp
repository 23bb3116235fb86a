#include "support.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dmad/parser.hpp"
#include "dmad/prompt.hpp"
#include "dmad/run_store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dmad::testing {

TempDir::TempDir(const std::string& prefix) {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          (prefix + "-" + std::to_string(stamp) + "-" + std::to_string(counter.fetch_add(1)));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path fixture_dir() { return DMAD_FIXTURE_DIR; }

ProtocolManifest paper_scale_manifest(std::uint64_t seed) {
  return build_protocol(make_synthetic_images(54, 2, 50), PairingPolicy::random(seed), 50);
}

std::string structured_reply(bool q1_yes, int q1_score, bool q2_yes, int q2_score) {
  return "**Q1 Answer:** " + std::string(q1_yes ? "Yes" : "No") + "\n**Probability Score:** " +
         std::to_string(q1_score) +
         "%\n**Explanation:** Eye spacing and jawline are compared across both captures.\n"
         "**Q2 Answer:** " +
         std::string(q2_yes ? "Yes" : "No") + "\n**Probability Score:** " + std::to_string(q2_score) +
         "%\n**Explanation:** Skin texture and the hairline are checked for blending artifacts.\n";
}

namespace {

json line(const std::string& kind, const std::string& run_id, const std::string& pair_id, int round,
          json payload) {
  return {{"schema_version", 1},   {"record_kind", kind},
          {"run_id", run_id},      {"pair_id", pair_id},
          {"round_index", round},  {"timestamp", "2024-06-01T00:00:00.000Z"},
          {"payload", std::move(payload)}};
}

}  // namespace

void write_table_fixture(const fs::path& runs_dir, const std::string& run_id, const TableSpec& spec) {
  ProtocolManifest manifest =
      build_protocol(make_synthetic_images(54, 2, spec.morphs_per_type), PairingPolicy::random(1),
                     spec.bona_fide_pairs);
  if (manifest.bona_fide_pair_count != spec.bona_fide_pairs) throw std::logic_error("fixture: bona fide count");
  for (MorphType t : kAllMorphTypes) {
    if (manifest.counts[t] != spec.morphs_per_type) throw std::logic_error("fixture: morph count");
  }

  const fs::path dir = runs_dir / run_id;
  fs::create_directories(dir);

  const ProviderConfig config = ProviderConfig::defaults_for(spec.provider);
  RunSnapshot snap;
  snap.run_id = run_id;
  snap.started_at = "2024-06-01T00:00:00.000Z";
  snap.provider = config.to_json();
  snap.provider["provider"] = config.provider_id();
  snap.provider["model"] = config.model_name;
  snap.prompt_version = std::string(kCanonicalPromptTag);
  snap.prompt_sha256 = sha256_hex(canonical_prompt().body);
  snap.manifest = manifest_to_json(manifest);
  snap.manifest_digest = manifest_digest(manifest);
  snap.rounds = 3;
  snap.scenario_rules = ScenarioRules::defaults().to_json();
  std::ofstream(dir / "manifest.json") << snap.to_json().dump(2) << '\n';

  std::ofstream log(dir / "log.jsonl");
  std::map<MorphType, int> morph_seen;
  int bf_seen = 0;
  for (const auto& pair : manifest.pairs) {
    // Q2 answers for rounds 1..3.
    bool q2[3];
    if (pair.ground_truth == GroundTruth::MorphPair) {
      const int i = morph_seen[*pair.morph_type]++;
      const int misses = spec.missed_morphs.count(*pair.morph_type) ? spec.missed_morphs.at(*pair.morph_type) : 0;
      if (i < misses) {
        q2[0] = q2[1] = q2[2] = false;
      } else if (i % 2 == 0) {
        q2[0] = false, q2[1] = true, q2[2] = false;  // one dissenting round is enough under OR
      } else {
        q2[0] = q2[1] = q2[2] = true;
      }
    } else {
      const int j = bf_seen++;
      q2[0] = q2[1] = false;
      q2[2] = j < spec.flagged_bona_fide;
    }
    for (int r = 1; r <= 3; ++r) {
      json request{{"provider", config.provider_id()},
                   {"model", config.model_name},
                   {"prompt_version", snap.prompt_version},
                   {"prompt_sha256", snap.prompt_sha256},
                   {"image_a", {{"image_id", pair.reference.id}, {"media_type", "image/jpeg"}, {"bytes", 1000}}},
                   {"image_b", {{"image_id", pair.probe.id}, {"media_type", "image/jpeg"}, {"bytes", 1000}}},
                   {"ground_truth", to_string(pair.ground_truth)},
                   {"morph_type", pair.morph_type ? json(to_string(*pair.morph_type)) : json(nullptr)},
                   {"reference_id", pair.reference.id},
                   {"probe_id", pair.probe.id}};
      log << line("Request", run_id, pair.pair_id, r, std::move(request)).dump() << '\n';
      json transcript{{"provider", config.provider_id()},
                      {"model", config.model_name},
                      {"request_timestamp", "2024-06-01T00:00:00.000Z"},
                      {"latency_ms", 1500},
                      {"http_status", 200},
                      {"truncated", false},
                      {"attempts", 1},
                      {"text", structured_reply(true, 80, q2[r - 1], 70)}};
      log << line("Transcript", run_id, pair.pair_id, r, std::move(transcript)).dump() << '\n';
    }
  }
}

}  // namespace dmad::testing
