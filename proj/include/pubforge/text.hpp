#pragma once

#include <string>
#include <string_view>

// Unicode helpers shared by the matcher, the author-list sorter and the PDF
// decoder. Backed by ICU; all strings crossing this interface are UTF-8.
namespace pubforge::text {

/// Decodes UTF-8 into scalar values. Ill-formed sequences become U+FFFD.
std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view cps);
void append_utf8(std::string& out, char32_t cp);

/// Compatibility decomposition (NFKD).
std::u32string decompose(std::u32string_view s);
/// Removes nonspacing combining marks; run after decompose() to fold accents.
std::u32string strip_marks(std::u32string_view s);
std::u32string case_fold(std::u32string_view s);
/// Collapses every run of Unicode whitespace to one U+0020 and trims the ends.
std::u32string collapse_spaces(std::u32string_view s);

bool is_space(char32_t c);
bool is_letter(char32_t c);
bool is_digit(char32_t c);

/// NFKD + mark removal, without case folding. Used as a collation key.
std::string accent_fold(std::string_view utf8);

/// Matching normal form: NFKD, optional accent folding, whitespace collapsed
/// and trimmed, case folded.
std::u32string normalize_u32(std::string_view utf8, bool fold_accents);

/// Escapes &, <, >, " and ' for XML/HTML text and attribute values.
std::string xml_escape(std::string_view s);

} // namespace pubforge::text
