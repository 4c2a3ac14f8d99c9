#include "pubforge/report.hpp"

#include <sstream>

#include "pubforge/text.hpp"

namespace pubforge {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json entry_to_json(const ReportEntry& e) {
  ordered_json j;
  j["reference"] = e.reference;
  if (e.printed) j["printed"] = *e.printed;
  if (e.distance) j["distance"] = *e.distance;
  j["detail"] = e.detail;
  if (!e.extra.is_null()) j["extra"] = e.extra;
  return j;
}

ReportEntry entry_from_json(const ordered_json& j, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::parse, where + ": entry is not an object");
  ReportEntry e;
  try {
    e.reference = j.at("reference").get<std::string>();
    if (j.contains("printed")) e.printed = j["printed"].get<std::string>();
    if (j.contains("distance")) e.distance = j["distance"].get<std::size_t>();
    e.detail = j.value("detail", "");
    if (j.contains("extra")) e.extra = j["extra"];
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::parse, where + ": " + ex.what());
  }
  return e;
}

struct Section {
  std::string_view key;
  std::string_view title;
  std::string_view skip_key; ///< empty when the category has no skip list
};

constexpr std::array<Section, 9> kSections = {{
    {"authors_missing_list", "Authors missing from the proof", "authors_missing_skip"},
    {"authors_puntuation_list", "Authors with inconsistent punctuation", ""},
    {"institutes_missing_pdf_list", "Institutes missing from the proof", "institutes_missing_pdf_skip"},
    {"institutes_close_matches_list", "Institutes with close matches", ""},
    {"authors_mismatched_list", "Mismatched authors", ""},
    {"authors_deceased_list", "Deceased authors not marked in the proof", ""},
    {"authors_not_deceased_list", "Authors marked deceased in the proof only", ""},
    {"founding_agencies_missing", "Missing funding agencies", ""},
    {"founding_agencies_wrong", "Funding text naming no known agency", ""},
}};

const EntryList& list_by_key(const DiscrepancyReport& r, std::string_view key) {
  auto lists = report_lists(r);
  for (std::size_t i = 0; i < kListKeys.size(); ++i)
    if (kListKeys[i] == key) return *lists[i];
  throw std::logic_error("unknown report list");
}

void render_entries(std::ostringstream& out, const EntryList& entries) {
  if (entries.empty()) return;
  out << "<table>\n<tr><th>Reference</th><th>Printed</th><th>Distance</th><th>Detail</th></tr>\n";
  for (const auto& e : entries) {
    out << "<tr><td>" << text::xml_escape(e.reference) << "</td><td>"
        << text::xml_escape(e.printed.value_or("")) << "</td><td>";
    if (e.distance) out << *e.distance;
    out << "</td><td>" << text::xml_escape(e.detail) << "</td></tr>\n";
  }
  out << "</table>\n";
}

} // namespace

std::array<EntryList*, 11> report_lists(DiscrepancyReport& r) {
  return {&r.authors_missing_skip,      &r.authors_missing_list,      &r.authors_puntuation_list,
          &r.institutes_missing_pdf_list, &r.institutes_missing_pdf_skip, &r.authors_mismatched_list,
          &r.authors_not_deceased_list, &r.authors_deceased_list,     &r.institutes_close_matches_list,
          &r.founding_agencies_missing, &r.founding_agencies_wrong};
}

std::array<const EntryList*, 11> report_lists(const DiscrepancyReport& r) {
  auto lists = report_lists(const_cast<DiscrepancyReport&>(r));
  std::array<const EntryList*, 11> out{};
  std::copy(lists.begin(), lists.end(), out.begin());
  return out;
}

bool is_skip_list(std::string_view key) {
  return key == "authors_missing_skip" || key == "institutes_missing_pdf_skip";
}

std::size_t finding_count(const DiscrepancyReport& r) {
  std::size_t n = 0;
  auto lists = report_lists(r);
  for (std::size_t i = 0; i < kListKeys.size(); ++i)
    if (!is_skip_list(kListKeys[i])) n += lists[i]->size();
  return n;
}

std::string write_report(const DiscrepancyReport& r) {
  ordered_json j;
  j["ref_code"] = r.ref_code;
  j["ref_date"] = format_date(r.ref_date);
  j["creation_date"] = format_date_dmy(r.creation_date);
  j["publisher"] = r.publisher;
  j["document"] = r.document;
  j["filename"] = r.filename;
  auto lists = report_lists(r);
  for (std::size_t i = 0; i < kListKeys.size(); ++i) {
    ordered_json arr = ordered_json::array();
    for (const auto& e : *lists[i]) arr.push_back(entry_to_json(e));
    j[std::string(kListKeys[i])] = std::move(arr);
  }
  return j.dump(4) + "\n";
}

DiscrepancyReport parse_report(std::string_view json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string("report: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::parse, "report: top level is not an object");
  auto str = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string())
      throw Error(ErrorKind::parse, std::string("report: missing string field '") + key + "'");
    return j[key].get<std::string>();
  };
  DiscrepancyReport r;
  r.ref_code = str("ref_code");
  r.ref_date = parse_any_date(str("ref_date"));
  r.creation_date = parse_any_date(str("creation_date"));
  r.publisher = str("publisher");
  r.document = str("document");
  r.filename = str("filename");
  auto lists = report_lists(r);
  for (std::size_t i = 0; i < kListKeys.size(); ++i) {
    std::string key(kListKeys[i]);
    if (!j.contains(key) || !j[key].is_array())
      throw Error(ErrorKind::parse, "report: missing list '" + key + "'");
    for (std::size_t k = 0; k < j[key].size(); ++k)
      lists[i]->push_back(entry_from_json(j[key][k], key + "[" + std::to_string(k) + "]"));
  }
  return r;
}

std::string render_html(const DiscrepancyReport& r) {
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>"
      << text::xml_escape(r.ref_code) << " " << text::xml_escape(r.filename) << "</title>\n"
      << "<style>table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 6px}"
         "summary{cursor:pointer}</style>\n</head>\n<body>\n";
  out << "<h1>" << text::xml_escape(r.ref_code) << "</h1>\n<dl>\n";
  auto field = [&](std::string_view name, const std::string& value) {
    out << "<dt>" << name << "</dt><dd>" << text::xml_escape(value) << "</dd>\n";
  };
  field("Reference date", format_date(r.ref_date));
  field("Created", format_date_dmy(r.creation_date));
  field("Publisher", r.publisher);
  field("Document", r.document);
  field("File", r.filename);
  out << "</dl>\n";

  for (const auto& s : kSections) {
    const EntryList& entries = list_by_key(r, s.key);
    out << "<section id=\"" << s.key << "\">\n<h2>" << s.title << " <span class=\"count\">("
        << entries.size() << ")</span></h2>\n";
    render_entries(out, entries);
    if (!s.skip_key.empty()) {
      const EntryList& skipped = list_by_key(r, s.skip_key);
      out << "<details class=\"skipped\" id=\"" << s.skip_key << "\">\n<summary>Skipped + ("
          << skipped.size() << ")</summary>\n";
      render_entries(out, skipped);
      out << "</details>\n";
    }
    out << "</section>\n";
  }
  out << "</body>\n</html>\n";
  return out.str();
}

std::string report_file_name(const DiscrepancyReport& r) { return r.ref_code + "_" + r.filename + ".json"; }

} // namespace pubforge
