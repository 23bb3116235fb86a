#include "dmad/protocol.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace dmad {
namespace {

using json = nlohmann::json;

template <typename T>
void fisher_yates(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

void image_violations(const ImageRef& img, std::vector<Violation>& out) {
  auto add = [&](std::string rule, std::string detail) {
    out.push_back({img.id, std::move(rule), std::move(detail)});
  };
  if (img.path.empty()) add("image-path-nonempty", "path is empty");
  const bool morph = img.kind == ImageKind::Morph;
  if (morph != img.morph_type.has_value()) {
    add("image-morph-type", morph ? "morph image without morph_type" : "bona fide image with morph_type");
  }
  std::set<std::string> distinct(img.contributing_subjects.begin(), img.contributing_subjects.end());
  if (morph && distinct.size() < 2) {
    add("image-contributors", "morph image needs at least two distinct contributing subjects");
  }
  if (!morph && !img.contributing_subjects.empty()) {
    add("image-contributors", "bona fide image lists contributing subjects");
  }
  if (img.reference_subject && !distinct.contains(*img.reference_subject)) {
    add("image-reference-subject", "reference_subject '" + *img.reference_subject +
                                       "' is not a contributing subject");
  }
}

void pair_violations(const ProtocolManifest& m, const PairSpec& p, std::vector<Violation>& out) {
  auto add = [&](std::string rule, std::string detail) {
    out.push_back({p.pair_id, std::move(rule), std::move(detail)});
  };
  for (const ImageRef* side : {&p.reference, &p.probe}) {
    const ImageRef* declared = m.find_image(side->id);
    if (declared == nullptr) {
      add("pair-declared-images", "image '" + side->id + "' is not declared");
    } else if (!(*declared == *side)) {
      add("pair-declared-images", "image '" + side->id + "' differs from its declaration");
    }
  }
  if (p.morph_type != p.probe.morph_type) {
    add("morph-type-mirror", "pair morph_type does not mirror the probe's");
  }
  if (p.ground_truth == GroundTruth::BonaFidePair) {
    if (p.reference.kind != ImageKind::BonaFide || p.probe.kind != ImageKind::BonaFide) {
      add("bf-both-bonafide", "bona fide pair contains a morph");
    } else if (p.reference.subject_id != p.probe.subject_id) {
      add("bf-same-subject", "bona fide pair spans subjects '" + p.reference.subject_id + "' and '" +
                                 p.probe.subject_id + "'");
    }
    if (p.reference.id == p.probe.id) add("bf-distinct-images", "reference and probe are the same image");
  } else {
    if (p.reference.kind != ImageKind::BonaFide) {
      add("morph-reference-bonafide", "reference of a morph pair must be bona fide");
    }
    if (p.probe.kind != ImageKind::Morph) {
      add("morph-probe-morph", "probe of a morph pair must be a morph");
    } else {
      const auto& cs = p.probe.contributing_subjects;
      if (std::find(cs.begin(), cs.end(), p.reference.subject_id) == cs.end()) {
        add("morph-reference-contributor", "reference subject '" + p.reference.subject_id +
                                               "' did not contribute to morph '" + p.probe.id + "'");
      }
    }
  }
}

// --- JSON helpers ---------------------------------------------------------

[[noreturn]] void schema_error(const std::string& field, const std::string& msg) {
  throw ManifestError(ManifestError::Kind::Schema, field + ": " + msg);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) schema_error(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(where + "." + key, "missing required field");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) schema_error(where + "." + key, "expected a string");
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) schema_error(where + "." + key, "expected a string");
  return it->get<std::string>();
}

template <typename F>
auto parse_enum(const std::string& value, const std::string& field, F parse) {
  try {
    return parse(value);
  } catch (const ParseError& e) {
    schema_error(field, e.what());
  }
}

ImageRef image_from_json(const json& j, const std::string& where) {
  ImageRef img;
  img.id = require_string(j, "id", where);
  img.path = require_string(j, "path", where);
  img.kind = parse_enum(require_string(j, "kind", where), where + ".kind", parse_image_kind);
  if (auto mt = optional_string(j, "morph_type", where)) {
    img.morph_type = parse_enum(*mt, where + ".morph_type", parse_morph_type);
  }
  if (auto it = j.find("contributing_subjects"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) schema_error(where + ".contributing_subjects", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string()) {
        schema_error(where + ".contributing_subjects[" + std::to_string(i) + "]", "expected a string");
      }
      img.contributing_subjects.push_back((*it)[i].get<std::string>());
    }
  }
  img.reference_subject = optional_string(j, "reference_subject", where);
  if (auto sid = optional_string(j, "subject_id", where)) {
    img.subject_id = *sid;
  } else if (img.kind == ImageKind::Morph && !img.contributing_subjects.empty()) {
    img.subject_id = img.contributing_subjects.front();
  } else {
    schema_error(where + ".subject_id", "missing required field");
  }
  return img;
}

json image_to_json(const ImageRef& img) {
  json j{{"id", img.id}, {"subject_id", img.subject_id}, {"path", img.path},
         {"kind", std::string(to_string(img.kind))}};
  if (img.morph_type) j["morph_type"] = std::string(to_string(*img.morph_type));
  if (!img.contributing_subjects.empty()) j["contributing_subjects"] = img.contributing_subjects;
  if (img.reference_subject) j["reference_subject"] = *img.reference_subject;
  return j;
}

}  // namespace

void ProtocolManifest::refresh_counts() {
  counts.clear();
  bona_fide_pair_count = 0;
  for (const auto& p : pairs) {
    if (p.ground_truth == GroundTruth::BonaFidePair) {
      ++bona_fide_pair_count;
    } else if (p.morph_type) {
      ++counts[*p.morph_type];
    }
  }
}

const ImageRef* ProtocolManifest::find_image(std::string_view id) const {
  auto it = std::find_if(images.begin(), images.end(), [&](const ImageRef& i) { return i.id == id; });
  return it == images.end() ? nullptr : &*it;
}

const PairSpec* ProtocolManifest::find_pair(std::string_view pair_id) const {
  auto it = std::find_if(pairs.begin(), pairs.end(), [&](const PairSpec& p) { return p.pair_id == pair_id; });
  return it == pairs.end() ? nullptr : &*it;
}

PairingPolicy parse_pairing_policy(std::string_view name, std::uint64_t seed) {
  if (iequals(name, "first-two") || iequals(name, "FirstTwo")) return PairingPolicy::first_two();
  if (iequals(name, "all") || iequals(name, "AllCombinations")) return PairingPolicy::all_combinations();
  if (iequals(name, "random") || iequals(name, "Random")) return PairingPolicy::random(seed);
  throw ParseError("unknown pairing policy '" + std::string(name) + "'");
}

std::vector<Violation> validate_protocol(const ProtocolManifest& m) {
  std::vector<Violation> out;
  std::set<std::string> image_ids;
  const std::set<std::string> subjects(m.subjects.begin(), m.subjects.end());
  for (const auto& img : m.images) {
    if (!image_ids.insert(img.id).second) out.push_back({img.id, "image-id-unique", "duplicate image id"});
    image_violations(img, out);
    if (!subjects.empty()) {
      std::vector<std::string> named = img.contributing_subjects;
      named.push_back(img.subject_id);
      for (const auto& s : named) {
        if (!subjects.contains(s)) {
          out.push_back({img.id, "subject-declared", "subject '" + s + "' is not declared"});
          break;
        }
      }
    }
  }

  std::set<std::string> pair_ids;
  for (const auto& p : m.pairs) {
    if (!pair_ids.insert(p.pair_id).second) out.push_back({p.pair_id, "pair-id-unique", "duplicate pair id"});
    pair_violations(m, p, out);
  }

  ProtocolManifest recount;
  recount.pairs = m.pairs;
  recount.refresh_counts();
  std::map<MorphType, int> stated = m.counts;
  std::erase_if(stated, [](const auto& kv) { return kv.second == 0; });
  if (stated != recount.counts || m.bona_fide_pair_count != recount.bona_fide_pair_count) {
    out.push_back({"manifest", "counts-consistent", "counts do not match the pairs list"});
  }
  return out;
}

ProtocolManifest build_protocol(const std::vector<ImageRef>& images, PairingPolicy policy,
                                int target_bf_pairs) {
  if (target_bf_pairs < 0) {
    throw ProtocolError(ProtocolError::Kind::UnreachableTarget, "target_bf_pairs must be non-negative");
  }
  std::mt19937_64 rng(policy.seed);

  std::vector<std::string> subject_order;
  std::map<std::string, std::vector<const ImageRef*>> bona_fide;
  auto note_subject = [&](const std::string& s) {
    if (std::find(subject_order.begin(), subject_order.end(), s) == subject_order.end()) {
      subject_order.push_back(s);
    }
  };
  for (const auto& img : images) {
    if (img.kind == ImageKind::BonaFide) {
      note_subject(img.subject_id);
      bona_fide[img.subject_id].push_back(&img);
    }
  }
  for (const auto& img : images) {
    for (const auto& s : img.contributing_subjects) note_subject(s);
  }

  // Candidate same-subject combinations, one queue per subject.
  std::vector<std::string> pairing_subjects;
  for (const auto& s : subject_order) {
    if (bona_fide[s].size() >= 2) pairing_subjects.push_back(s);
  }
  if (target_bf_pairs > 0 && pairing_subjects.empty()) {
    throw ProtocolError(ProtocolError::Kind::InsufficientBonaFide,
                        "no subject has two or more bona fide images");
  }
  if (policy.kind == PairingPolicy::Kind::Random) fisher_yates(pairing_subjects, rng);

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> queues;
  for (const auto& s : pairing_subjects) {
    const std::size_t n = bona_fide[s].size();
    std::vector<std::pair<std::size_t, std::size_t>> combos;
    if (policy.kind == PairingPolicy::Kind::FirstTwo) {
      combos.emplace_back(0, 1);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) combos.emplace_back(i, j);
      }
      if (policy.kind == PairingPolicy::Kind::Random) fisher_yates(combos, rng);
    }
    queues.push_back(std::move(combos));
  }

  ProtocolManifest m;
  m.subjects = subject_order;
  m.images = images;

  // Round-robin across subjects so pairs spread over as many identities as possible.
  std::size_t taken = 0;
  for (std::size_t depth = 0; taken < static_cast<std::size_t>(target_bf_pairs); ++depth) {
    bool any = false;
    for (std::size_t s = 0; s < queues.size() && taken < static_cast<std::size_t>(target_bf_pairs); ++s) {
      if (depth >= queues[s].size()) continue;
      any = true;
      const auto [i, j] = queues[s][depth];
      const auto& list = bona_fide[pairing_subjects[s]];
      PairSpec p;
      p.reference = *list[i];
      p.probe = *list[j];
      p.pair_id = "bf:" + p.reference.id + ":" + p.probe.id;
      p.ground_truth = GroundTruth::BonaFidePair;
      m.pairs.push_back(std::move(p));
      ++taken;
    }
    if (!any) {
      throw ProtocolError(ProtocolError::Kind::UnreachableTarget,
                          "only " + std::to_string(taken) + " bona fide pairs available, target " +
                              std::to_string(target_bf_pairs));
    }
  }

  for (const auto& img : images) {
    if (img.kind != ImageKind::Morph) continue;
    if (img.contributing_subjects.empty()) {
      throw ProtocolError(ProtocolError::Kind::UnknownSubject,
                          "morph '" + img.id + "' lists no contributing subjects");
    }
    const std::string& ref_subject = img.reference_subject.value_or(img.contributing_subjects.front());
    const auto it = bona_fide.find(ref_subject);
    if (it == bona_fide.end() || it->second.empty()) {
      throw ProtocolError(ProtocolError::Kind::UnknownSubject,
                          "morph '" + img.id + "': subject '" + ref_subject + "' has no bona fide image");
    }
    std::size_t pick = 0;
    if (policy.kind == PairingPolicy::Kind::Random) pick = static_cast<std::size_t>(rng() % it->second.size());
    PairSpec p;
    p.reference = *it->second[pick];
    p.probe = img;
    p.pair_id = "morph:" + p.reference.id + ":" + p.probe.id;
    p.ground_truth = GroundTruth::MorphPair;
    p.morph_type = img.morph_type;
    m.pairs.push_back(std::move(p));
  }
  m.refresh_counts();
  return m;
}

ProtocolManifest manifest_from_json(const json& j) {
  if (!j.is_object()) schema_error("$", "expected an object");
  ProtocolManifest m;

  if (auto it = j.find("subjects"); it != j.end()) {
    if (!it->is_array()) schema_error("subjects", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& s = (*it)[i];
      const std::string where = "subjects[" + std::to_string(i) + "]";
      if (s.is_string()) {
        m.subjects.push_back(s.get<std::string>());
      } else {
        m.subjects.push_back(require_string(s, "id", where));
      }
    }
  }

  const json& images = require(j, "images", "$");
  if (!images.is_array()) schema_error("images", "expected an array");
  for (std::size_t i = 0; i < images.size(); ++i) {
    m.images.push_back(image_from_json(images[i], "images[" + std::to_string(i) + "]"));
  }

  if (auto it = j.find("pairs"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) schema_error("pairs", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& pj = (*it)[i];
      const std::string where = "pairs[" + std::to_string(i) + "]";
      PairSpec p;
      p.pair_id = require_string(pj, "pair_id", where);
      const std::string ref = require_string(pj, "reference", where);
      const std::string probe = require_string(pj, "probe", where);
      const ImageRef* r = m.find_image(ref);
      const ImageRef* q = m.find_image(probe);
      if (r == nullptr) schema_error(where + ".reference", "undeclared image '" + ref + "'");
      if (q == nullptr) schema_error(where + ".probe", "undeclared image '" + probe + "'");
      p.reference = *r;
      p.probe = *q;
      if (auto gt = optional_string(pj, "ground_truth", where)) {
        p.ground_truth = parse_enum(*gt, where + ".ground_truth", parse_ground_truth);
      } else {
        p.ground_truth = q->kind == ImageKind::Morph ? GroundTruth::MorphPair : GroundTruth::BonaFidePair;
      }
      if (auto mt = optional_string(pj, "morph_type", where)) {
        p.morph_type = parse_enum(*mt, where + ".morph_type", parse_morph_type);
      } else {
        p.morph_type = q->morph_type;
      }
      m.pairs.push_back(std::move(p));
    }
  }

  m.refresh_counts();
  if (auto it = j.find("counts"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) schema_error("counts", "expected an object");
    std::map<MorphType, int> stated;
    for (const auto& [k, v] : it->items()) {
      if (!v.is_number_integer()) schema_error("counts." + k, "expected an integer");
      stated[parse_enum(k, "counts." + k, parse_morph_type)] = v.get<int>();
    }
    m.counts = std::move(stated);
  }
  if (auto it = j.find("bona_fide_pair_count"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) schema_error("bona_fide_pair_count", "expected an integer");
    m.bona_fide_pair_count = it->get<int>();
  }
  return m;
}

json manifest_to_json(const ProtocolManifest& m) {
  json images = json::array();
  for (const auto& img : m.images) images.push_back(image_to_json(img));
  json pairs = json::array();
  for (const auto& p : m.pairs) {
    json pj{{"pair_id", p.pair_id}, {"reference", p.reference.id}, {"probe", p.probe.id},
            {"ground_truth", std::string(to_string(p.ground_truth))}};
    if (p.morph_type) pj["morph_type"] = std::string(to_string(*p.morph_type));
    pairs.push_back(std::move(pj));
  }
  json counts = json::object();
  for (const auto& [t, n] : m.counts) counts[std::string(to_string(t))] = n;
  return json{{"subjects", m.subjects},
              {"images", std::move(images)},
              {"pairs", std::move(pairs)},
              {"counts", std::move(counts)},
              {"bona_fide_pair_count", m.bona_fide_pair_count}};
}

ProtocolManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError(ManifestError::Kind::Io, "cannot open manifest '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ManifestError(ManifestError::Kind::Schema, "manifest is not valid JSON: " + std::string(e.what()));
  }
  ProtocolManifest m = manifest_from_json(j);
  const auto violations = validate_protocol(m);
  if (!violations.empty()) {
    const auto& v = violations.front();
    std::string msg = v.subject + ": " + v.rule + " (" + v.detail + ")";
    if (violations.size() > 1) msg += " and " + std::to_string(violations.size() - 1) + " more";
    throw ManifestError(ManifestError::Kind::Invariant, msg);
  }
  return m;
}

void save_manifest(const ProtocolManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ManifestError(ManifestError::Kind::Io, "cannot write manifest '" + path.string() + "'");
  out << manifest_to_json(m).dump(2) << '\n';
  if (!out) throw ManifestError(ManifestError::Kind::Io, "write failed for '" + path.string() + "'");
}

std::string manifest_digest(const ProtocolManifest& m) { return sha256_hex(manifest_to_json(m).dump()); }

std::vector<ImageRef> make_synthetic_images(int subjects, int bf_per_subject, int morphs_per_type) {
  if (subjects < 2 || bf_per_subject < 1 || morphs_per_type < 0) {
    throw std::invalid_argument("synthetic image set needs >= 2 subjects and >= 1 image each");
  }
  auto subject_name = [](int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%03d", i + 1);
    return std::string(buf);
  };
  std::vector<ImageRef> out;
  for (int s = 0; s < subjects; ++s) {
    for (int k = 0; k < bf_per_subject; ++k) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "_bf%02d", k + 1);
      ImageRef img;
      img.subject_id = subject_name(s);
      img.id = img.subject_id + buf;
      img.path = "synthetic/" + img.id + ".jpg";
      out.push_back(std::move(img));
    }
  }
  for (MorphType t : kAllMorphTypes) {
    for (int k = 0; k < morphs_per_type; ++k) {
      const std::string a = subject_name(k % subjects);
      const std::string b = subject_name((k + 1) % subjects);
      ImageRef img;
      img.kind = ImageKind::Morph;
      img.morph_type = t;
      img.subject_id = a;
      img.contributing_subjects = {a, b};
      char idx[16];
      std::snprintf(idx, sizeof idx, "_m%03d_", k + 1);
      img.id = std::string(to_string(t)) + idx + a + "_" + b;
      img.path = "synthetic/" + std::string(to_string(t)) + "/" + img.id + ".jpg";
      out.push_back(std::move(img));
    }
  }
  return out;
}

}  // namespace dmad
