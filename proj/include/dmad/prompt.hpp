#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmad/protocol.hpp"

namespace dmad {

inline constexpr std::string_view kCanonicalPromptTag = "paper-v1";

struct PromptTemplate {
  std::string body;
  std::string version_tag;
  std::vector<Question> question_ids{Question::Q1, Question::Q2};
};

struct ImagePayload {
  std::string image_id;
  std::string media_type;  // "image/jpeg" or "image/png"
  std::string base64;
  std::size_t byte_count = 0;
};

struct RenderedQuery {
  std::string prompt_text;
  ImagePayload image_a;  // bona fide reference, always first
  ImagePayload image_b;  // probe
  std::string pair_id;
  int round_index = 1;
};

class RenderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ImageLoader = std::function<std::vector<std::byte>(const std::filesystem::path&)>;

// The forensic-expert chain-of-thought prompt, embedded at build time from
// prompts/paper-v1.txt.
PromptTemplate canonical_prompt();

// Loads an override template. The file must contain the "Q1)" and "Q2)"
// markers; its tag is "custom-" plus the first 12 hex digits of its SHA-256.
PromptTemplate load_prompt_file(const std::filesystem::path& path);

// Throws RenderError if the body lacks either question marker.
void check_template(const PromptTemplate& t);

// Sniffs JPEG (FF D8 FF) and PNG (89 50 4E 47 0D 0A 1A 0A) signatures.
std::string sniff_media_type(std::span<const std::byte> bytes);

RenderedQuery render(const PromptTemplate& tmpl, const PairSpec& pair, int round_index,
                     const ImageLoader& load);

// Reads the file from disk; throws RenderError if unreadable.
std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

// Loader that resolves relative paths against base_dir.
ImageLoader disk_loader(std::filesystem::path base_dir);

// Offline stand-in: a small JPEG-signed byte blob derived from the path, so
// mock runs need no image files on disk.
ImageLoader placeholder_loader();

}  // namespace dmad
