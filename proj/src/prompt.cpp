#include "dmad/prompt.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>

#include "dmad/canonical_prompt.hpp"

namespace dmad {

PromptTemplate canonical_prompt() {
  return PromptTemplate{std::string(kCanonicalPromptBody), std::string(kCanonicalPromptTag),
                        {Question::Q1, Question::Q2}};
}

void check_template(const PromptTemplate& t) {
  if (t.body.find("Q1)") == std::string::npos || t.body.find("Q2)") == std::string::npos) {
    throw RenderError("prompt template '" + t.version_tag + "' lacks the Q1)/Q2) markers");
  }
}

PromptTemplate load_prompt_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RenderError("cannot read prompt file '" + path.string() + "'");
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  PromptTemplate t{body, "custom-" + sha256_hex(body).substr(0, 12), {Question::Q1, Question::Q2}};
  if (body == kCanonicalPromptBody) t.version_tag = std::string(kCanonicalPromptTag);
  check_template(t);
  return t;
}

std::string sniff_media_type(std::span<const std::byte> bytes) {
  auto starts_with = [&](std::initializer_list<unsigned char> sig) {
    if (bytes.size() < sig.size()) return false;
    std::size_t i = 0;
    for (unsigned char c : sig) {
      if (static_cast<unsigned char>(bytes[i++]) != c) return false;
    }
    return true;
  };
  if (starts_with({0xFF, 0xD8, 0xFF})) return "image/jpeg";
  if (starts_with({0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A})) return "image/png";
  return {};
}

namespace {

ImagePayload encode(const ImageRef& img, const ImageLoader& load) {
  std::vector<std::byte> bytes;
  try {
    bytes = load(img.path);
  } catch (const RenderError&) {
    throw;
  } catch (const std::exception& e) {
    throw RenderError("cannot load image '" + img.id + "': " + e.what());
  }
  ImagePayload p;
  p.image_id = img.id;
  p.media_type = sniff_media_type(bytes);
  if (p.media_type.empty()) {
    throw RenderError("unsupported media type for image '" + img.id + "' (" + img.path + ")");
  }
  p.byte_count = bytes.size();
  p.base64 = base64_encode(bytes);
  return p;
}

}  // namespace

RenderedQuery render(const PromptTemplate& tmpl, const PairSpec& pair, int round_index,
                     const ImageLoader& load) {
  if (round_index < 1) throw RenderError("round_index must be >= 1");
  check_template(tmpl);
  RenderedQuery q;
  q.prompt_text = tmpl.body;
  q.image_a = encode(pair.reference, load);
  q.image_b = encode(pair.probe, load);
  q.pair_id = pair.pair_id;
  q.round_index = round_index;
  return q;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RenderError("cannot read image file '" + path.string() + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [](char c) { return static_cast<std::byte>(c); });
  return out;
}

ImageLoader disk_loader(std::filesystem::path base_dir) {
  return [base = std::move(base_dir)](const std::filesystem::path& p) {
    return read_file_bytes(p.is_absolute() ? p : base / p);
  };
}

ImageLoader placeholder_loader() {
  return [](const std::filesystem::path& p) {
    // SOI + APP0 "JFIF" header, a comment segment carrying a digest of the
    // path, then EOI. Enough for media sniffing; not a decodable picture.
    static constexpr std::array<unsigned char, 20> kHead = {0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x10, 'J',
                                                            'F',  'I',  'F',  0x00, 0x01, 0x01, 0x00,
                                                            0x00, 0x01, 0x00, 0x01, 0x00, 0x00};
    const std::string tag = sha256_hex(p.generic_string());
    std::vector<std::byte> out;
    for (unsigned char c : kHead) out.push_back(static_cast<std::byte>(c));
    out.push_back(std::byte{0xFF});
    out.push_back(std::byte{0xFE});
    const auto len = static_cast<unsigned>(tag.size() + 2);
    out.push_back(static_cast<std::byte>(len >> 8));
    out.push_back(static_cast<std::byte>(len & 0xFF));
    for (char c : tag) out.push_back(static_cast<std::byte>(c));
    out.push_back(std::byte{0xFF});
    out.push_back(std::byte{0xD9});
    return out;
  };
}

}  // namespace dmad
