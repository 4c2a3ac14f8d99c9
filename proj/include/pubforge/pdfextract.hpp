#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pubforge::pdf {

struct TextLine {
  double y = 0.0;
  std::string text;

  bool operator==(const TextLine&) const = default;
};

/// Text of one page, top to bottom (descending y).
struct PageText {
  int page_number = 1;
  std::vector<TextLine> lines;

  bool operator==(const PageText&) const = default;
};

/// Lines whose baselines round to the same multiple of this merge.
inline constexpr double kLineQuantum = 0.5;

/// Decoding table of one font, from a ToUnicode CMap.
struct FontMap {
  std::string font_resource_name;
  /// Byte lengths allowed by the codespace ranges; {1} when none declared.
  std::vector<int> code_lengths;
  std::map<std::string, std::string> code_to_unicode; ///< raw code bytes -> UTF-8
};

/// Parses a ToUnicode CMap program (bfchar, bfrange and codespacerange).
FontMap parse_to_unicode(std::string_view cmap, std::string font_resource_name = {});

/// Extracts positioned lines from the supported PDF subset: unencrypted
/// 1.4-1.7 files, uncompressed or Flate streams, Tj/TJ/'/" with Td/TD/Tm/T*
/// positioning, ToUnicode with a StandardEncoding then U+FFFD fallback.
/// Throws Error(unsupported) naming the offending feature.
std::vector<PageText> extract_text(std::span<const std::uint8_t> pdf_bytes);

/// Reads the pretokenized fixture format: pages split by a line holding a
/// form feed, lines optionally prefixed "y=<number>|".
std::vector<PageText> load_pretokenized(std::string_view text);

/// True when the bytes start with a PDF header.
bool looks_like_pdf(std::span<const std::uint8_t> bytes);

/// Groups fragments by rounded baseline and orders lines top to bottom.
/// Fragments on one line are joined with single spaces in the given order.
std::vector<TextLine> merge_lines(const std::vector<TextLine>& fragments);

/// Unicode for a StandardEncoding code, or U+FFFD.
char32_t standard_encoding(std::uint8_t code);

} // namespace pubforge::pdf
