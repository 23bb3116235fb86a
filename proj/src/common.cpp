#include "dmad/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>

namespace dmad {

std::string_view to_string(MorphType t) {
  switch (t) {
    case MorphType::LMA: return "LMA";
    case MorphType::MIPGAN2: return "MIPGAN2";
    case MorphType::PIPE: return "PIPE";
  }
  return "?";
}

std::string_view to_string(ImageKind k) {
  return k == ImageKind::BonaFide ? "BonaFide" : "Morph";
}

std::string_view to_string(GroundTruth g) {
  return g == GroundTruth::BonaFidePair ? "BonaFidePair" : "MorphPair";
}

std::string_view to_string(Question q) { return q == Question::Q1 ? "Q1" : "Q2"; }

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && to_lower_ascii(a) == to_lower_ascii(b);
}

MorphType parse_morph_type(std::string_view s) {
  if (iequals(s, "LMA")) return MorphType::LMA;
  if (iequals(s, "MIPGAN2") || iequals(s, "MIPGAN-2")) return MorphType::MIPGAN2;
  if (iequals(s, "PIPE")) return MorphType::PIPE;
  throw ParseError("unknown morph_type '" + std::string(s) + "'");
}

ImageKind parse_image_kind(std::string_view s) {
  if (iequals(s, "BonaFide") || iequals(s, "bona_fide")) return ImageKind::BonaFide;
  if (iequals(s, "Morph")) return ImageKind::Morph;
  throw ParseError("unknown image kind '" + std::string(s) + "'");
}

GroundTruth parse_ground_truth(std::string_view s) {
  if (iequals(s, "BonaFidePair")) return GroundTruth::BonaFidePair;
  if (iequals(s, "MorphPair")) return GroundTruth::MorphPair;
  throw ParseError("unknown ground_truth '" + std::string(s) + "'");
}

Question parse_question(std::string_view s) {
  if (iequals(s, "Q1")) return Question::Q1;
  if (iequals(s, "Q2")) return Question::Q2;
  throw ParseError("unknown question '" + std::string(s) + "'");
}

std::string base64_encode(std::span<const std::byte> bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - secs).count();
  const std::time_t t = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string utf8_truncate(std::string_view s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return std::string(s);
  std::size_t cut = max_bytes;
  // back off continuation bytes so the cut lands on a lead byte
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return std::string(s.substr(0, cut));
}

}  // namespace dmad
