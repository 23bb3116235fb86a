#pragma once

// Shared vocabulary for the D-MAD evaluation harness: label enums, their
// canonical string forms, and a few small utilities used across modules.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dmad {

enum class MorphType : std::uint8_t { LMA, MIPGAN2, PIPE };
enum class ImageKind : std::uint8_t { BonaFide, Morph };
enum class GroundTruth : std::uint8_t { BonaFidePair, MorphPair };
enum class Question : std::uint8_t { Q1, Q2 };

inline constexpr MorphType kAllMorphTypes[] = {MorphType::LMA, MorphType::MIPGAN2, MorphType::PIPE};

// Thrown for malformed enum names and other input that cannot be interpreted.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string_view to_string(MorphType t);
std::string_view to_string(ImageKind k);
std::string_view to_string(GroundTruth g);
std::string_view to_string(Question q);

// Case-insensitive; accepts "MIPGAN-2" as an alias of MIPGAN2.
MorphType parse_morph_type(std::string_view s);
ImageKind parse_image_kind(std::string_view s);
GroundTruth parse_ground_truth(std::string_view s);
Question parse_question(std::string_view s);

std::string to_lower_ascii(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

std::string base64_encode(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view data);

// UTC, millisecond precision, e.g. 2025-01-31T12:00:00.123Z
std::string utc_timestamp_now();

// Cuts at most max_bytes without splitting a UTF-8 sequence.
std::string utf8_truncate(std::string_view s, std::size_t max_bytes);

}  // namespace dmad
