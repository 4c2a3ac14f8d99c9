#include "pdf_builder.hpp"

#include <cstdio>
#include <stdexcept>

#include <zlib.h>

#include "pubforge/text.hpp"

namespace testsupport {

std::string hex(const std::string& bytes) {
  static const char* digits = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : bytes) {
    out += digits[c >> 4];
    out += digits[c & 15];
  }
  return out;
}

std::string deflate(const std::string& data) {
  uLongf size = compressBound(static_cast<uLong>(data.size()));
  std::string out(size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(out.data()), &size, reinterpret_cast<const Bytef*>(data.data()),
                static_cast<uLong>(data.size()), 9) != Z_OK)
    throw std::runtime_error("compress2 failed");
  out.resize(size);
  return out;
}

namespace {

std::string utf16be(const std::string& utf8) {
  std::string out;
  auto put = [&](unsigned v) {
    out += static_cast<char>(v >> 8);
    out += static_cast<char>(v & 0xFF);
  };
  for (char32_t c : pubforge::text::to_u32(utf8)) {
    if (c >= 0x10000) {
      unsigned v = c - 0x10000;
      put(0xD800 + (v >> 10));
      put(0xDC00 + (v & 0x3FF));
    } else {
      put(c);
    }
  }
  return out;
}

} // namespace

std::string to_unicode_cmap(const FontSpec& font) {
  std::string lo(font.code_bytes, '\0'), hi(font.code_bytes, '\xFF');
  std::string s = "/CIDInit /ProcSet findresource begin\n12 dict begin\nbegincmap\n"
                  "/CMapName /Test-UCS def\n/CMapType 2 def\n"
                  "1 begincodespacerange\n<" + hex(lo) + "> <" + hex(hi) + ">\nendcodespacerange\n";
  s += std::to_string(font.to_unicode.size()) + " beginbfchar\n";
  for (const auto& [code, text] : font.to_unicode) s += "<" + hex(code) + "> <" + hex(utf16be(text)) + ">\n";
  s += "endbfchar\nendcmap\nCMapName currentdict /CMap defineresource pop\nend\nend\n";
  return s;
}

std::string build_pdf(const std::vector<FontSpec>& fonts, const std::vector<PageSpec>& pages,
                      const PdfOptions& options) {
  std::vector<std::string> objects; // objects[i] is object number i + 1
  auto add = [&](std::string body) {
    objects.push_back(std::move(body));
    return static_cast<int>(objects.size());
  };
  auto stream = [&](const std::string& data, bool compressible) {
    std::string payload = data;
    std::string dict;
    if (!options.filter_override.empty() && compressible) {
      dict = " /Filter " + options.filter_override;
    } else if (options.compress && compressible) {
      payload = deflate(data);
      dict = " /Filter /FlateDecode";
    }
    return "<< /Length " + std::to_string(payload.size()) + dict + " >>\nstream\n" + payload + "\nendstream";
  };

  int catalog = add("");
  int pages_obj = add("");
  std::string font_dict = "<<";
  for (const auto& f : fonts) {
    std::string body = "<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica";
    if (f.with_to_unicode) body += " /ToUnicode " + std::to_string(add(stream(to_unicode_cmap(f), true))) + " 0 R";
    if (!f.differences.empty()) {
      body += " /Encoding << /Type /Encoding /Differences [";
      for (const auto& [code, glyph] : f.differences) body += " " + std::to_string(code) + " /" + glyph;
      body += " ] >>";
    }
    body += " >>";
    font_dict += " /" + f.name + " " + std::to_string(add(body)) + " 0 R";
  }
  font_dict += " >>";

  std::string kids;
  for (const auto& p : pages) {
    std::string content = p.raw_content;
    if (content.empty()) {
      for (const auto& r : p.runs) {
        char pos[64];
        std::snprintf(pos, sizeof pos, "%.2f %.2f", r.x, r.y);
        content += "BT /" + r.font + " 10 Tf " + pos + " Td <" + hex(r.codes) + "> Tj ET\n";
      }
    }
    int contents = add(stream(content, true));
    int page = add("<< /Type /Page /Parent " + std::to_string(pages_obj) + " 0 R /MediaBox [0 0 612 792]" +
                   " /Resources << /Font " + font_dict + " >> /Contents " + std::to_string(contents) + " 0 R >>");
    kids += " " + std::to_string(page) + " 0 R";
  }
  objects[catalog - 1] = "<< /Type /Catalog /Pages " + std::to_string(pages_obj) + " 0 R >>";
  objects[pages_obj - 1] = "<< /Type /Pages /Kids [" + kids + " ] /Count " + std::to_string(pages.size()) + " >>";

  std::string out = "%PDF-" + options.version + "\n%\xE2\xE3\xCF\xD3\n";
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    offsets.push_back(out.size());
    out += std::to_string(i + 1) + " 0 obj\n" + objects[i] + "\nendobj\n";
  }
  std::size_t xref = out.size();
  out += "xref\n0 " + std::to_string(objects.size() + 1) + "\n0000000000 65535 f \n";
  for (auto off : offsets) {
    char line[24];
    std::snprintf(line, sizeof line, "%010zu 00000 n \n", off);
    out += line;
  }
  out += "trailer\n<< /Size " + std::to_string(objects.size() + 1) + " /Root " + std::to_string(catalog) + " 0 R";
  if (options.encrypt_marker) out += " /Encrypt << /Filter /Standard /V 1 >>";
  out += " >>\nstartxref\n" + std::to_string(xref) + "\n%%EOF\n";
  return out;
}

} // namespace testsupport
