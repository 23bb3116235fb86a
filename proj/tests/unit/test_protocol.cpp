#include <doctest.h>

#include <set>

#include "dmad/protocol.hpp"
#include "support.hpp"

using namespace dmad;
using dmad::testing::TempDir;

namespace {

bool has_rule(const std::vector<Violation>& v, std::string_view rule) {
  for (const auto& x : v) {
    if (x.rule == rule) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("protocol") {
  TEST_CASE("paper-scale build gives 50 pairs per class and is seed-deterministic") {
    const auto a = testing::paper_scale_manifest(42);
    const auto b = testing::paper_scale_manifest(42);
    CHECK(a.bona_fide_pair_count == 50);
    for (MorphType t : kAllMorphTypes) CHECK(a.counts.at(t) == 50);
    CHECK(a.pairs.size() == 200);
    CHECK(a.pairs == b.pairs);
    CHECK(manifest_digest(a) == manifest_digest(b));
    CHECK(validate_protocol(a).empty());
  }

  TEST_CASE("different seeds pick different bona fide pairs") {
    CHECK(manifest_digest(testing::paper_scale_manifest(1)) != manifest_digest(testing::paper_scale_manifest(2)));
  }

  TEST_CASE("bona fide pairs are same-subject, distinct images; pair ids unique") {
    const auto m = testing::paper_scale_manifest(3);
    std::set<std::string> ids;
    for (const auto& p : m.pairs) {
      CHECK(ids.insert(p.pair_id).second);
      if (p.ground_truth == GroundTruth::BonaFidePair) {
        CHECK(p.reference.subject_id == p.probe.subject_id);
        CHECK(p.reference.id != p.probe.id);
        CHECK_FALSE(p.morph_type.has_value());
      } else {
        CHECK(p.reference.kind == ImageKind::BonaFide);
        CHECK(p.probe.kind == ImageKind::Morph);
        CHECK(p.morph_type == p.probe.morph_type);
      }
    }
  }

  TEST_CASE("first-two policy takes one pair per subject") {
    const auto images = make_synthetic_images(10, 3, 0);
    const auto m = build_protocol(images, PairingPolicy::first_two(), 10);
    CHECK(m.bona_fide_pair_count == 10);
    CHECK_THROWS_AS(build_protocol(images, PairingPolicy::first_two(), 11), ProtocolError);
  }

  TEST_CASE("all-combinations policy reaches n choose 2 per subject") {
    const auto images = make_synthetic_images(4, 3, 0);
    CHECK(build_protocol(images, PairingPolicy::all_combinations(), 12).bona_fide_pair_count == 12);
  }

  TEST_CASE("insufficient bona fide images") {
    const auto images = make_synthetic_images(5, 1, 0);
    try {
      build_protocol(images, PairingPolicy::random(0), 1);
      FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
      CHECK(e.kind() == ProtocolError::Kind::InsufficientBonaFide);
    }
  }

  TEST_CASE("reference_subject picks the second contributor") {
    auto images = make_synthetic_images(3, 2, 1);
    for (auto& img : images) {
      if (img.kind == ImageKind::Morph) img.reference_subject = img.contributing_subjects.at(1);
    }
    const auto m = build_protocol(images, PairingPolicy::first_two(), 1);
    for (const auto& p : m.pairs) {
      if (p.ground_truth == GroundTruth::MorphPair) CHECK(p.reference.subject_id == *p.probe.reference_subject);
    }
    CHECK(validate_protocol(m).empty());
  }

  TEST_CASE("validator flags each broken invariant") {
    auto m = testing::paper_scale_manifest(5);

    SUBCASE("cross-subject bona fide pair") {
      for (auto& p : m.pairs) {
        if (p.ground_truth != GroundTruth::BonaFidePair) continue;
        p.probe = *m.find_image(p.reference.subject_id == "S001" ? "S002_bf01" : "S001_bf01");
        break;
      }
      CHECK(has_rule(validate_protocol(m), "bf-same-subject"));
    }
    SUBCASE("same image twice") {
      for (auto& p : m.pairs) {
        if (p.ground_truth != GroundTruth::BonaFidePair) continue;
        p.probe = p.reference;
        break;
      }
      CHECK(has_rule(validate_protocol(m), "bf-distinct-images"));
    }
    SUBCASE("morph reference from a non-contributor") {
      for (auto& p : m.pairs) {
        if (p.ground_truth != GroundTruth::MorphPair) continue;
        const auto& cs = p.probe.contributing_subjects;
        for (const auto& img : m.images) {
          if (img.kind == ImageKind::BonaFide && std::find(cs.begin(), cs.end(), img.subject_id) == cs.end()) {
            p.reference = img;
            break;
          }
        }
        break;
      }
      CHECK(has_rule(validate_protocol(m), "morph-reference-contributor"));
    }
    SUBCASE("duplicate pair id") {
      m.pairs.push_back(m.pairs.front());
      m.refresh_counts();
      CHECK(has_rule(validate_protocol(m), "pair-id-unique"));
    }
    SUBCASE("stale counts") {
      m.counts[MorphType::LMA] = 49;
      CHECK(has_rule(validate_protocol(m), "counts-consistent"));
    }
    SUBCASE("morph type not mirrored") {
      for (auto& p : m.pairs) {
        if (p.ground_truth == GroundTruth::MorphPair) {
          p.morph_type = p.morph_type == MorphType::LMA ? MorphType::PIPE : MorphType::LMA;
          break;
        }
      }
      CHECK(has_rule(validate_protocol(m), "morph-type-mirror"));
    }
  }

  TEST_CASE("manifest JSON round-trip through disk") {
    TempDir tmp;
    const auto m = testing::paper_scale_manifest(9);
    save_manifest(m, tmp.path() / "m.json");
    const auto back = load_manifest(tmp.path() / "m.json");
    CHECK(back.pairs == m.pairs);
    CHECK(back.images == m.images);
    CHECK(manifest_digest(back) == manifest_digest(m));
  }

  TEST_CASE("schema errors carry the field path; ground truth defaults from the probe") {
    nlohmann::json j = manifest_to_json(testing::paper_scale_manifest(9));
    j["pairs"][3].erase("probe");
    try {
      manifest_from_json(j);
      FAIL("expected ManifestError");
    } catch (const ManifestError& e) {
      CHECK(e.kind() == ManifestError::Kind::Schema);
      CHECK(std::string(e.what()).find("pairs[3].probe") != std::string::npos);
    }
    j = manifest_to_json(testing::paper_scale_manifest(9));
    j["pairs"][0]["ground_truth"] = "Twins";
    CHECK_THROWS_AS(manifest_from_json(j), ManifestError);
    CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.json"), ManifestError);
  }
}
