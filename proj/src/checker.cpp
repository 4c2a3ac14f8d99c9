#include "pubforge/checker.hpp"

#include <span>

#include "pubforge/authorlist.hpp"
#include "pubforge/proofparse.hpp"

namespace pubforge::checker {

namespace fs = std::filesystem;
using json = nlohmann::json;

json inputs_to_json(const CheckInputs& in) {
  json pages = json::array();
  for (const auto& p : in.proof_pages) {
    json lines = json::array();
    for (const auto& l : p.lines) lines.push_back({{"y", l.y}, {"text", l.text}});
    pages.push_back({{"page", p.page_number}, {"lines", std::move(lines)}});
  }
  return {{"reference_xml", in.reference_xml},
          {"proof_pages", std::move(pages)},
          {"profile", json::parse(in.profile_json)},
          {"agencies", json::parse(in.agencies_json)},
          {"thresholds",
           {{"author_distance", in.thresholds.author_distance}, {"close_similarity", in.thresholds.close_similarity}}},
          {"document", in.document},
          {"filename", in.filename}};
}

CheckInputs inputs_from_json(const json& j) {
  try {
    CheckInputs in;
    in.reference_xml = j.at("reference_xml").get<std::string>();
    for (const auto& p : j.at("proof_pages")) {
      pdf::PageText page{p.at("page").get<int>(), {}};
      for (const auto& l : p.at("lines")) page.lines.push_back({l.at("y").get<double>(), l.at("text").get<std::string>()});
      in.proof_pages.push_back(std::move(page));
    }
    in.profile_json = j.at("profile").dump();
    in.agencies_json = j.value("agencies", json::array()).dump();
    if (j.contains("thresholds")) in.thresholds = matcher::parse_thresholds(j["thresholds"].dump());
    in.document = j.value("document", "");
    in.filename = j.at("filename").get<std::string>();
    return in;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("check inputs: ") + e.what());
  }
}

std::vector<pdf::PageText> load_proof(const fs::path& path) {
  auto bytes = read_binary(path);
  if (pdf::looks_like_pdf(bytes)) return pdf::extract_text(bytes);
  return pdf::load_pretokenized(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

CheckResult run_check(const CheckInputs& in, const matcher::SynonymDB& synonyms, Date creation_date) {
  auto parsed = authorlist::parse_author_list(in.reference_xml);
  auto markers = proof::parse_profile(in.profile_json);
  auto segments = proof::parse_proof(in.proof_pages, markers);
  auto agencies = authorlist::parse_agencies(in.agencies_json);

  matcher::Comparison details;
  CheckResult out;
  out.report = matcher::compare({parsed.list, segments, synonyms, agencies, in.thresholds}, &details);
  out.report.creation_date = creation_date;
  out.report.publisher = markers.name;
  out.report.document = in.document;
  out.report.filename = in.filename;
  out.diagnostics = parsed.warnings;
  out.diagnostics.insert(out.diagnostics.end(), segments.diagnostics.begin(), segments.diagnostics.end());
  out.diagnostics.insert(out.diagnostics.end(), details.notes.begin(), details.notes.end());
  return out;
}

fs::path inputs_path(const fs::path& reports_dir, const std::string& report_name) {
  return reports_dir / "inputs" / report_name;
}

fs::path store(const fs::path& reports_dir, const CheckResult& result, const CheckInputs& in) {
  auto name = report_file_name(result.report);
  write_file_atomic(inputs_path(reports_dir, name), inputs_to_json(in).dump(1) + "\n");
  write_file_atomic(reports_dir / name, write_report(result.report));
  return reports_dir / name;
}

std::string summary(const DiscrepancyReport& report) {
  std::string out;
  auto lists = report_lists(report);
  for (std::size_t i = 0; i < kListKeys.size(); ++i)
    out += std::string(kListKeys[i]) + ": " + std::to_string(lists[i]->size()) + "\n";
  return out;
}

} // namespace pubforge::checker
