#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <filesystem>
#include <map>
#include <string>

#include "dmad/protocol.hpp"
#include "dmad/provider.hpp"

namespace dmad::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "dmad-test");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path fixture_dir();

// 54 subjects, two genuine captures each, 50 morphs per type, 50 bona fide pairs.
ProtocolManifest paper_scale_manifest(std::uint64_t seed);

// A well-formed three-field reply in the common markdown layout.
std::string structured_reply(bool q1_yes, int q1_score, bool q2_yes, int q2_score);

// Target error counts for one provider's hand-built log.
struct TableSpec {
  ProviderKind provider = ProviderKind::OpenAI;
  std::map<MorphType, int> missed_morphs;  // morph pairs fused to "not morphed"
  int flagged_bona_fide = 0;               // bona fide pairs fused to "morphed"
  int morphs_per_type = 100;
  int bona_fide_pairs = 50;
};

// Writes <runs_dir>/<run_id>/manifest.json and log.jsonl by hand: a snapshot
// plus Request and Transcript lines for three rounds per pair, with replies
// chosen so the fused Q2 decisions hit the requested counts.
void write_table_fixture(const std::filesystem::path& runs_dir, const std::string& run_id, const TableSpec& spec);

}  // namespace dmad::testing
