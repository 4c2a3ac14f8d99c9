#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pubforge/common.hpp"

namespace pubforge {

struct ReportEntry {
  std::string reference;
  std::optional<std::string> printed;
  std::optional<std::size_t> distance;
  std::string detail;
  nlohmann::ordered_json extra; ///< kept verbatim; null when absent

  bool operator==(const ReportEntry&) const = default;
};

using EntryList = std::vector<ReportEntry>;

struct DiscrepancyReport {
  std::string ref_code;
  Date ref_date{};
  Date creation_date{};
  std::string publisher;
  std::string document;
  std::string filename;

  EntryList authors_missing_skip;
  EntryList authors_missing_list;
  EntryList authors_puntuation_list;
  EntryList institutes_missing_pdf_list;
  EntryList institutes_missing_pdf_skip;
  EntryList authors_mismatched_list;
  EntryList authors_not_deceased_list;
  EntryList authors_deceased_list;
  EntryList institutes_close_matches_list;
  EntryList founding_agencies_missing;
  EntryList founding_agencies_wrong;

  bool operator==(const DiscrepancyReport&) const = default;
};

/// Key names of the eleven lists, in serialization order.
inline constexpr std::array<std::string_view, 11> kListKeys = {
    "authors_missing_skip",       "authors_missing_list",      "authors_puntuation_list",
    "institutes_missing_pdf_list", "institutes_missing_pdf_skip", "authors_mismatched_list",
    "authors_not_deceased_list",  "authors_deceased_list",     "institutes_close_matches_list",
    "founding_agencies_missing",  "founding_agencies_wrong"};

/// Lists in kListKeys order.
std::array<EntryList*, 11> report_lists(DiscrepancyReport& report);
std::array<const EntryList*, 11> report_lists(const DiscrepancyReport& report);

/// True for the two skip lists.
bool is_skip_list(std::string_view key);

/// Total entries outside the skip lists.
std::size_t finding_count(const DiscrepancyReport& report);

/// Canonical JSON: 17 keys in fixed order, four-space indent, trailing newline.
std::string write_report(const DiscrepancyReport& report);
DiscrepancyReport parse_report(std::string_view json_text);

/// Self-contained HTML page; skip lists collapse behind "Skipped +".
std::string render_html(const DiscrepancyReport& report);

/// "<ref_code>_<filename>.json"
std::string report_file_name(const DiscrepancyReport& report);

} // namespace pubforge
