#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pubforge/pdfextract.hpp"

namespace pubforge::proof {

/// Per-publisher layout profile.
struct SegmentMarkers {
  std::string name;        ///< publisher label copied into reports
  std::string banner;      ///< line that opens the author block
  std::string ack_heading; ///< line that opens the funding block
  std::vector<std::string> watermarks; ///< ECMAScript regexes, searched per line
  std::vector<std::string> deceased_markers{"†", "*"};
};

/// JSON: {"name"?, "banner", "ack_heading", "watermarks": [], "deceased_markers": []}.
SegmentMarkers parse_profile(std::string_view json_text);

struct ProofAuthor {
  std::string name;
  std::vector<int> affiliation_indices;
  bool deceased_marker = false;

  bool operator==(const ProofAuthor&) const = default;
};

struct ProofInstitute {
  int index = 0;
  std::string name;

  bool operator==(const ProofInstitute&) const = default;
};

struct ProofSegments {
  std::vector<ProofAuthor> authors;
  std::vector<ProofInstitute> institutes;
  std::string funding_text;
  std::vector<std::string> diagnostics;

  bool operator==(const ProofSegments&) const = default;
};

struct StrippedPages {
  std::vector<pdf::PageText> pages;
  std::vector<std::string> diagnostics;
};

/// Removes proof line numbers, watermark/footer lines and running headers.
/// Every removal is logged.
StrippedPages strip_artifacts(const std::vector<pdf::PageText>& pages, const SegmentMarkers& markers);

/// Splits artifact-free pages into author, institute and funding blocks.
/// `diagnostics` from the stripping pass are carried into the result.
ProofSegments segment_proof(const std::vector<pdf::PageText>& pages, const SegmentMarkers& markers,
                            std::vector<std::string> diagnostics = {});

/// strip_artifacts followed by segment_proof.
ProofSegments parse_proof(const std::vector<pdf::PageText>& pages, const SegmentMarkers& markers);

/// Parses the author block text ("A. Aa 1,2, B. Bb 2, ...").
std::vector<ProofAuthor> parse_author_block(std::string_view block, const SegmentMarkers& markers,
                                            std::vector<std::string>& diagnostics);

} // namespace pubforge::proof
