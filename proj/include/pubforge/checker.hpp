#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pubforge/matcher.hpp"
#include "pubforge/pdfextract.hpp"
#include "pubforge/report.hpp"

namespace pubforge::checker {

/// Everything one proof check needs, captured so a report can be rechecked
/// later against an updated synonym file.
struct CheckInputs {
  std::string reference_xml;
  std::vector<pdf::PageText> proof_pages;
  std::string profile_json;
  std::string agencies_json = "[]";
  matcher::MatchThresholds thresholds;
  std::string document;
  std::string filename;
};

nlohmann::json inputs_to_json(const CheckInputs& in);
CheckInputs inputs_from_json(const nlohmann::json& j);

/// Reads a proof as PDF when it carries a PDF header, as pretokenized text
/// otherwise.
std::vector<pdf::PageText> load_proof(const std::filesystem::path& path);

struct CheckResult {
  DiscrepancyReport report;
  std::vector<std::string> diagnostics; ///< parser warnings, segmentation and matcher notes
};

CheckResult run_check(const CheckInputs& in, const matcher::SynonymDB& synonyms, Date creation_date);

/// Sidecar location for a report stored in `reports_dir`.
std::filesystem::path inputs_path(const std::filesystem::path& reports_dir, const std::string& report_name);

/// Writes the report and its inputs sidecar; returns the report path.
std::filesystem::path store(const std::filesystem::path& reports_dir, const CheckResult& result,
                            const CheckInputs& in);

/// Multi-line category counts, one "key: n" per list.
std::string summary(const DiscrepancyReport& report);

} // namespace pubforge::checker
