#pragma once

// Evaluation protocol: the images under test and the reference/probe pairs
// built from them. A bona fide pair is two distinct genuine captures of one
// subject; a morph pair puts a genuine capture of a contributing subject
// first and the morph second.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmad/common.hpp"

namespace dmad {

struct ImageRef {
  std::string id;
  std::string subject_id;
  std::string path;  // forward-slash, relative to the manifest directory unless absolute
  ImageKind kind = ImageKind::BonaFide;
  std::optional<MorphType> morph_type;
  std::vector<std::string> contributing_subjects;
  // Morphs only: which contributing subject supplies the reference when
  // pairs are generated. Defaults to the first-listed one.
  std::optional<std::string> reference_subject;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

struct PairSpec {
  std::string pair_id;
  ImageRef reference;
  ImageRef probe;
  GroundTruth ground_truth = GroundTruth::BonaFidePair;
  std::optional<MorphType> morph_type;

  friend bool operator==(const PairSpec&, const PairSpec&) = default;
};

struct ProtocolManifest {
  std::vector<std::string> subjects;
  std::vector<ImageRef> images;
  std::vector<PairSpec> pairs;
  std::map<MorphType, int> counts;
  int bona_fide_pair_count = 0;

  // Recomputes counts and bona_fide_pair_count from pairs.
  void refresh_counts();
  const ImageRef* find_image(std::string_view id) const;
  const PairSpec* find_pair(std::string_view pair_id) const;
};

struct Violation {
  std::string subject;  // pair_id, or image id for image-level rules
  std::string rule;
  std::string detail;
};

class ManifestError : public std::runtime_error {
 public:
  enum class Kind { Io, Schema, Invariant };
  ManifestError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ProtocolError : public std::runtime_error {
 public:
  enum class Kind { InsufficientBonaFide, UnreachableTarget, UnknownSubject };
  ProtocolError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct PairingPolicy {
  enum class Kind { FirstTwo, AllCombinations, Random };
  Kind kind = Kind::Random;
  std::uint64_t seed = 0;

  static PairingPolicy first_two() { return {Kind::FirstTwo, 0}; }
  static PairingPolicy all_combinations() { return {Kind::AllCombinations, 0}; }
  static PairingPolicy random(std::uint64_t seed) { return {Kind::Random, seed}; }
};

PairingPolicy parse_pairing_policy(std::string_view name, std::uint64_t seed);

std::vector<Violation> validate_protocol(const ProtocolManifest& manifest);

ProtocolManifest build_protocol(const std::vector<ImageRef>& images, PairingPolicy policy,
                                int target_bf_pairs);

// JSON schema: see docs/manifest.md.
ProtocolManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const ProtocolManifest& m);
ProtocolManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const ProtocolManifest& m, const std::filesystem::path& path);

// Stable digest over the canonical JSON form.
std::string manifest_digest(const ProtocolManifest& m);

// A synthetic image set shaped like the reference protocol: each subject contributes
// bf_per_subject genuine images, and each morph type gets morphs_per_type
// morphs of neighbouring subjects (i, i+1). Paths point under synthetic/.
std::vector<ImageRef> make_synthetic_images(int subjects, int bf_per_subject, int morphs_per_type);

}  // namespace dmad
