#include "pubforge/proofparse.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <regex>

#include <nlohmann/json.hpp>

#include "pubforge/common.hpp"

namespace pubforge::proof {

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

/// Leading "<int> <rest>" of a line; nullopt when the line does not start so.
std::optional<std::pair<long, std::string>> leading_integer(const std::string& line) {
  std::size_t i = 0;
  while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
  if (i == 0 || i > 6 || i >= line.size() || line[i] != ' ') return std::nullopt;
  return std::make_pair(std::stol(line.substr(0, i)), trim(line.substr(i)));
}

/// "<index> <name>" where the name starts with something other than a digit
/// or comma. The space after the index is optional because superscripts are
/// merged into the line without one by some producers.
std::optional<ProofInstitute> institute_line(const std::string& line) {
  static const std::regex re(R"(^(\d{1,4})\s*([^\d\s,].*)$)");
  std::smatch m;
  if (!std::regex_match(line, m, re)) return std::nullopt;
  return ProofInstitute{std::stoi(m[1].str()), trim(m[2].str())};
}

bool ends_with_any(std::string_view s, const std::vector<std::string>& suffixes, std::size_t& len) {
  for (const auto& suf : suffixes) {
    if (!suf.empty() && s.size() >= suf.size() && s.substr(s.size() - suf.size()) == suf) {
      len = suf.size();
      return true;
    }
  }
  return false;
}

struct FlatLine {
  int page;
  std::string text;
};

} // namespace

SegmentMarkers parse_profile(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string("profile: ") + e.what());
  }
  SegmentMarkers m;
  try {
    m.name = j.value("name", "");
    m.banner = j.at("banner").get<std::string>();
    m.ack_heading = j.value("ack_heading", "");
    m.watermarks = j.value("watermarks", std::vector<std::string>{});
    if (j.contains("deceased_markers")) m.deceased_markers = j["deceased_markers"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("profile: ") + e.what());
  }
  if (trim(m.banner).empty()) throw Error(ErrorKind::validation, "profile: banner must not be empty");
  for (const auto& w : m.watermarks) {
    try {
      std::regex test(w);
    } catch (const std::regex_error&) {
      throw Error(ErrorKind::validation, "profile: invalid watermark pattern '" + w + "'");
    }
  }
  return m;
}

StrippedPages strip_artifacts(const std::vector<pdf::PageText>& pages, const SegmentMarkers& markers) {
  StrippedPages out;
  out.pages = pages;
  auto& diag = out.diagnostics;
  auto where = [](const pdf::PageText& p) { return "page " + std::to_string(p.page_number) + ": "; };

  std::vector<std::regex> watermarks;
  for (const auto& w : markers.watermarks) watermarks.emplace_back(w);
  for (auto& page : out.pages) {
    std::erase_if(page.lines, [&](const pdf::TextLine& l) {
      for (const auto& re : watermarks) {
        if (std::regex_search(l.text, re)) {
          diag.push_back(where(page) + "removed watermark line '" + l.text + "'");
          return true;
        }
      }
      return false;
    });
  }

  if (out.pages.size() >= 2) {
    std::map<std::string, std::size_t> seen_on;
    for (const auto& page : out.pages) {
      std::vector<std::string> distinct;
      for (const auto& l : page.lines) distinct.push_back(l.text);
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      for (const auto& t : distinct) ++seen_on[t];
    }
    auto threshold = static_cast<double>(out.pages.size()) * 0.8;
    for (auto& page : out.pages) {
      std::erase_if(page.lines, [&](const pdf::TextLine& l) {
        if (static_cast<double>(seen_on[l.text]) < threshold || l.text == markers.banner) return false;
        diag.push_back(where(page) + "removed running header '" + l.text + "'");
        return true;
      });
    }
  }

  for (auto& page : out.pages) {
    std::erase_if(page.lines, [&](const pdf::TextLine& l) {
      if (!all_digits(trim(l.text))) return false;
      diag.push_back(where(page) + "removed standalone number '" + trim(l.text) + "'");
      return true;
    });
  }

  // Proof line numbers: runs of >= 2 consecutive lines whose leading integers
  // increase by one. An indexed list starting at 1 (the institute list) looks
  // the same, so such runs are kept unless they contain the banner, and so
  // are runs continuing a kept run across a page break.
  long kept_run_end = -1;
  for (auto& page : out.pages) {
    auto& lines = page.lines;
    std::size_t i = 0;
    std::vector<bool> drop(lines.size(), false);
    while (i < lines.size()) {
      auto first = leading_integer(lines[i].text);
      if (!first) {
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      long last = first->first;
      bool has_banner = !markers.banner.empty() && first->second.find(markers.banner) != std::string::npos;
      while (j < lines.size()) {
        auto next = leading_integer(lines[j].text);
        if (!next || next->first != last + 1) break;
        last = next->first;
        if (!markers.banner.empty() && next->second.find(markers.banner) != std::string::npos) has_banner = true;
        ++j;
      }
      if (j - i >= 2) {
        bool indexed_list = (first->first == 1 && !has_banner) || first->first == kept_run_end + 1;
        if (indexed_list) {
          kept_run_end = last;
        } else {
          for (std::size_t k = i; k < j; ++k) drop[k] = true;
        }
      }
      i = j;
    }
    std::vector<pdf::TextLine> kept;
    for (std::size_t k = 0; k < lines.size(); ++k) {
      if (!drop[k]) {
        kept.push_back(std::move(lines[k]));
        continue;
      }
      auto li = leading_integer(lines[k].text);
      diag.push_back(where(page) + "stripped line number " + std::to_string(li->first));
      kept.push_back({lines[k].y, li->second});
    }
    lines = std::move(kept);
  }
  return out;
}

std::vector<ProofAuthor> parse_author_block(std::string_view block, const SegmentMarkers& markers,
                                            std::vector<std::string>& diagnostics) {
  std::vector<std::string> tokens;
  {
    std::string current;
    for (char c : block) {
      if (c == ',' || c == '\n') {
        tokens.push_back(trim(current));
        current.clear();
      } else {
        current.push_back(c);
      }
    }
    tokens.push_back(trim(current));
  }

  // "B. Bb 2 and C. Cc 1": split at an "and" that follows an index or marker.
  std::vector<std::string> split_tokens;
  for (const auto& t : tokens) {
    std::string rest = t;
    while (true) {
      auto pos = rest.find(" and ");
      if (pos == std::string::npos || pos == 0) break;
      std::size_t mlen = 0;
      bool after_index = (rest[pos - 1] >= '0' && rest[pos - 1] <= '9') ||
                         ends_with_any(std::string_view(rest).substr(0, pos), markers.deceased_markers, mlen);
      if (!after_index) break;
      split_tokens.push_back(trim(rest.substr(0, pos)));
      rest = trim(rest.substr(pos + 5));
    }
    split_tokens.push_back(rest);
  }

  std::vector<ProofAuthor> authors;
  for (auto token : split_tokens) {
    if (token.empty()) continue;
    if (starts_with(token, "and ")) token = trim(token.substr(4));

    ProofAuthor a;
    std::vector<int> indices;
    std::string s = token;
    while (true) {
      s = trim(s);
      std::size_t mlen = 0;
      if (ends_with_any(s, markers.deceased_markers, mlen)) {
        a.deceased_marker = true;
        s.resize(s.size() - mlen);
        continue;
      }
      std::size_t e = s.size();
      std::size_t b = e;
      while (b > 0 && s[b - 1] >= '0' && s[b - 1] <= '9') --b;
      if (b < e && e - b <= 6) {
        indices.push_back(std::stoi(s.substr(b)));
        s.resize(b);
        continue;
      }
      break;
    }
    std::reverse(indices.begin(), indices.end());
    a.affiliation_indices = std::move(indices);
    a.name = s;

    if (a.name.empty()) {
      // Continuation of the previous author's index group ("A. Aa 1,2").
      if (authors.empty()) {
        diagnostics.push_back("index group '" + token + "' precedes any author name");
        continue;
      }
      auto& prev = authors.back();
      prev.affiliation_indices.insert(prev.affiliation_indices.end(), a.affiliation_indices.begin(),
                                      a.affiliation_indices.end());
      prev.deceased_marker = prev.deceased_marker || a.deceased_marker;
      continue;
    }
    authors.push_back(std::move(a));
  }
  for (const auto& a : authors)
    if (a.affiliation_indices.empty()) diagnostics.push_back("author '" + a.name + "' has no affiliation index");
  return authors;
}

ProofSegments segment_proof(const std::vector<pdf::PageText>& pages, const SegmentMarkers& markers,
                            std::vector<std::string> diagnostics) {
  std::vector<FlatLine> lines;
  for (const auto& p : pages)
    for (const auto& l : p.lines) {
      auto t = trim(l.text);
      if (!t.empty()) lines.push_back({p.page_number, t});
    }

  ProofSegments seg;
  seg.diagnostics = std::move(diagnostics);

  std::size_t banner = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (!markers.banner.empty() && lines[i].text.find(markers.banner) != std::string::npos) {
      banner = i;
      break;
    }
  if (banner == lines.size()) throw Error(ErrorKind::parse, "author block undetected");

  std::size_t ack = lines.size();
  if (!markers.ack_heading.empty())
    for (std::size_t i = 0; i < lines.size(); ++i)
      if (starts_with(lines[i].text, markers.ack_heading)) {
        ack = i;
        break;
      }

  std::size_t first_institute = lines.size();
  for (std::size_t i = banner + 1; i < lines.size(); ++i) {
    if (i == ack) break;
    if (auto inst = institute_line(lines[i].text); inst && inst->index == 1) {
      first_institute = i;
      break;
    }
  }
  std::size_t author_end = std::min(first_institute, ack > banner ? ack : lines.size());
  std::string block;
  for (std::size_t i = banner + 1; i < author_end; ++i) {
    if (!block.empty()) block += '\n';
    block += lines[i].text;
  }
  if (trim(block).empty()) throw Error(ErrorKind::parse, "author block undetected");
  seg.authors = parse_author_block(block, markers, seg.diagnostics);

  if (first_institute == lines.size()) {
    seg.diagnostics.push_back("institute block undetected");
  } else {
    int expected = 1;
    for (std::size_t i = first_institute; i < lines.size() && i != ack; ++i) {
      auto inst = institute_line(lines[i].text);
      if (!inst) {
        // Wrapped institute names continue after a trailing comma or hyphen.
        auto& prev = seg.institutes.back().name;
        if (!prev.empty() && (prev.back() == ',' || prev.back() == ';')) {
          prev += " " + lines[i].text;
          continue;
        }
        if (!prev.empty() && prev.back() == '-') {
          prev += lines[i].text;
          continue;
        }
        break;
      }
      if (inst->index != expected)
        seg.diagnostics.push_back("non-monotonic institute index " + std::to_string(inst->index) +
                                  " (expected " + std::to_string(expected) + ")");
      if (std::any_of(seg.institutes.begin(), seg.institutes.end(),
                      [&](const ProofInstitute& p) { return p.index == inst->index; }))
        seg.diagnostics.push_back("duplicate institute index " + std::to_string(inst->index));
      expected = inst->index + 1;
      seg.institutes.push_back(std::move(*inst));
    }
  }

  if (ack == lines.size()) {
    if (!markers.ack_heading.empty()) seg.diagnostics.push_back("acknowledgements heading not found");
  } else {
    std::string funding = trim(std::string_view(lines[ack].text).substr(markers.ack_heading.size()));
    std::size_t end = banner > ack ? banner : lines.size();
    for (std::size_t i = ack + 1; i < end; ++i) {
      if (!funding.empty()) funding += ' ';
      funding += lines[i].text;
    }
    seg.funding_text = funding;
  }
  return seg;
}

ProofSegments parse_proof(const std::vector<pdf::PageText>& pages, const SegmentMarkers& markers) {
  auto stripped = strip_artifacts(pages, markers);
  return segment_proof(stripped.pages, markers, std::move(stripped.diagnostics));
}

} // namespace pubforge::proof
