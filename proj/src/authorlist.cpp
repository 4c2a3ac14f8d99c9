#include "pubforge/authorlist.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "pubforge/text.hpp"

namespace pubforge::authorlist {

using nlohmann::json;
namespace pt = boost::property_tree;

std::string AuthorList::ref_code() const {
  auto it = header.find(std::string(kRefCodeKey));
  return it == header.end() ? std::string{} : it->second;
}

Date AuthorList::reference_date() const {
  auto it = header.find(std::string(kRefDateKey));
  if (it == header.end()) throw Error(ErrorKind::validation, "header has no ref_date");
  return parse_date(it->second);
}

std::size_t AuthorList::institute_position(std::string_view id) const {
  for (std::size_t i = 0; i < institutes.size(); ++i)
    if (institutes[i].id == id) return i + 1;
  return 0;
}

bool is_valid_orcid(std::string_view orcid) {
  if (orcid.size() != 19) return false;
  for (std::size_t i = 0; i < orcid.size(); ++i) {
    char c = orcid[i];
    if (i % 5 == 4) {
      if (c != '-') return false;
    } else if (i == 18) {
      if (!(std::isdigit(static_cast<unsigned char>(c)) || c == 'X')) return false;
    } else if (!std::isdigit(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  return true;
}

namespace {

bool blank_after_normalization(std::string_view s) {
  return text::normalize_u32(s, false).empty();
}

std::string describe(const Author& a) {
  return "'" + a.display_name() + "' (" + a.inspire_id + ")";
}

} // namespace

void validate(const AuthorList& list) {
  auto date = list.header.find(std::string(kRefDateKey));
  if (date == list.header.end())
    throw Error(ErrorKind::validation, "header is missing ref_date");
  parse_date(date->second);

  std::set<std::string> ids;
  for (const auto& inst : list.institutes) {
    if (inst.id.empty()) throw Error(ErrorKind::validation, "institute with empty id");
    if (!ids.insert(inst.id).second)
      throw Error(ErrorKind::validation, "duplicate institute id '" + inst.id + "'");
    if (blank_after_normalization(inst.name))
      throw Error(ErrorKind::validation, "institute '" + inst.id + "' has an empty name");
  }
  for (const auto& author : list.authors) {
    if (author.affiliations.empty())
      throw Error(ErrorKind::validation, "author " + describe(author) + " has no affiliation");
    for (const auto& id : author.affiliations)
      if (!ids.count(id))
        throw Error(ErrorKind::validation,
                    "author " + describe(author) + " references unknown institute '" + id + "'");
    if (!author.orcid.empty() && !is_valid_orcid(author.orcid))
      throw Error(ErrorKind::validation,
                  "author " + describe(author) + " has malformed ORCID '" + author.orcid + "'");
  }
}

// ---------------------------------------------------------------------------
// Member database

namespace {

std::string opt_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  return it->get<std::string>();
}

Institute institute_from_json(const json& j) {
  return Institute{j.at("id").get<std::string>(), j.at("name").get<std::string>(),
                   opt_string(j, "inspire_ref"), opt_string(j, "country")};
}

} // namespace

MemberDB parse_member_db(std::string_view json_text) {
  MemberDB db;
  try {
    json root = json::parse(json_text);
    for (const auto& j : root.at("institutes")) db.institutes.push_back(institute_from_json(j));
    for (const auto& j : root.at("members")) {
      Author a;
      a.family_name = j.at("family_name").get<std::string>();
      a.initials = j.at("initials").get<std::string>();
      a.foaf_name = opt_string(j, "foaf_name");
      a.inspire_id = opt_string(j, "inspire_id");
      a.orcid = opt_string(j, "orcid");
      a.affiliations = j.at("affiliations").get<std::vector<std::string>>();
      a.deceased = j.value("deceased", false);
      a.membership_start = parse_date(j.at("membership_start").get<std::string>());
      if (auto end = opt_string(j, "membership_end"); !end.empty()) a.membership_end = parse_date(end);
      db.members.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("member database: ") + e.what());
  }
  return db;
}

AuthorList snapshot_author_list(const MemberDB& db, Date reference_date,
                                std::map<std::string, std::string> header) {
  std::set<std::string> known;
  for (const auto& inst : db.institutes) known.insert(inst.id);

  struct Keyed {
    std::string family, initials;
    const Author* author;
  };
  std::vector<Keyed> qualified;
  for (const auto& m : db.members) {
    if (!within(reference_date, m.membership_start, m.membership_end)) continue;
    if (m.affiliations.empty())
      throw Error(ErrorKind::validation, "member " + describe(m) + " has no affiliation");
    for (const auto& id : m.affiliations)
      if (!known.count(id))
        throw Error(ErrorKind::validation,
                    "member " + describe(m) + " references unknown institute '" + id + "'");
    qualified.push_back({text::accent_fold(m.family_name), text::accent_fold(m.initials), &m});
  }
  if (qualified.empty()) throw Error(ErrorKind::validation, "no qualified authors");

  // UTF-8 byte order equals code point order.
  std::stable_sort(qualified.begin(), qualified.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.family, a.initials) < std::tie(b.family, b.initials);
  });

  AuthorList list;
  list.header = std::move(header);
  list.header[std::string(kRefDateKey)] = format_date(reference_date);

  std::set<std::string> used;
  for (const auto& k : qualified) {
    list.authors.push_back(*k.author);
    used.insert(k.author->affiliations.begin(), k.author->affiliations.end());
  }
  for (const auto& inst : db.institutes)
    if (used.count(inst.id)) list.institutes.push_back(inst);
  return list;
}

// ---------------------------------------------------------------------------
// Rendering

Format parse_format(std::string_view tag) {
  if (tag == "xml") return Format::xml;
  if (tag == "tex") return Format::tex;
  throw Error(ErrorKind::validation, "unsupported author list format '" + std::string(tag) + "'");
}

namespace {

// Attribute-safe escaping; control whitespace survives attribute-value
// normalization only as character references.
std::string attr(std::string_view s) {
  std::string out;
  for (char c : text::xml_escape(s)) {
    if (c == '\n') out += "&#10;";
    else if (c == '\r') out += "&#13;";
    else if (c == '\t') out += "&#9;";
    else out.push_back(c);
  }
  return out;
}

std::string render_xml(const AuthorList& list) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<authorlist>\n  <header>\n";
  for (const auto& [key, value] : list.header)
    out << "    <field name=\"" << attr(key) << "\">" << attr(value) << "</field>\n";
  out << "  </header>\n  <institutes>\n";
  for (const auto& inst : list.institutes)
    out << "    <institute id=\"" << attr(inst.id) << "\" inspire_ref=\"" << attr(inst.inspire_ref)
        << "\" country=\"" << attr(inst.country) << "\">" << attr(inst.name) << "</institute>\n";
  out << "  </institutes>\n  <authors>\n";
  for (const auto& a : list.authors) {
    out << "    <author family_name=\"" << attr(a.family_name) << "\" initials=\""
        << attr(a.initials) << "\" foaf_name=\"" << attr(a.foaf_name) << "\" inspire_id=\""
        << attr(a.inspire_id) << "\" orcid=\"" << attr(a.orcid) << "\" deceased=\""
        << (a.deceased ? "true" : "false") << "\" membership_start=\""
        << format_date(a.membership_start) << "\"";
    if (a.membership_end) out << " membership_end=\"" << format_date(*a.membership_end) << "\"";
    out << ">\n";
    for (const auto& id : a.affiliations)
      out << "      <affiliation institute=\"" << attr(id) << "\"/>\n";
    out << "    </author>\n";
  }
  out << "  </authors>\n</authorlist>\n";
  return out.str();
}

std::string render_tex(const AuthorList& list) {
  std::ostringstream out;
  out << "% Author list " << list.ref_code() << ", reference date "
      << list.header.at(std::string(kRefDateKey)) << "\n";
  out << "\\begin{flushleft}\n";
  bool any_deceased = false;
  for (std::size_t i = 0; i < list.authors.size(); ++i) {
    const auto& a = list.authors[i];
    out << a.initials << "~" << a.family_name << "$^{";
    for (std::size_t k = 0; k < a.affiliations.size(); ++k)
      out << (k ? "," : "") << list.institute_position(a.affiliations[k]);
    out << "}$";
    if (a.deceased) {
      out << "$^{\\dagger}$";
      any_deceased = true;
    }
    out << (i + 1 < list.authors.size() ? ",\n" : "\n");
  }
  out << "\\end{flushleft}\n\n";
  for (std::size_t i = 0; i < list.institutes.size(); ++i)
    out << "$^{" << i + 1 << "}$" << list.institutes[i].name << "\\\\\n";
  if (any_deceased) out << "$^{\\dagger}$Deceased.\\\\\n";
  return out.str();
}

} // namespace

std::string render_author_list(const AuthorList& list, Format format) {
  validate(list);
  switch (format) {
  case Format::xml: return render_xml(list);
  case Format::tex: return render_tex(list);
  }
  throw Error(ErrorKind::validation, "unsupported author list format");
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct XmlContext {
  std::vector<std::string>* warnings;
};

std::string attribute(const pt::ptree& node, const std::string& name, const std::string& path,
                      bool required = true) {
  auto attrs = node.get_child_optional("<xmlattr>");
  if (attrs) {
    if (auto v = attrs->get_optional<std::string>(name)) return *v;
  }
  if (required)
    throw Error(ErrorKind::parse, path + ": missing attribute '" + name + "'");
  return {};
}

bool is_markup(const std::string& key) { return key == "<xmlattr>" || key == "<xmlcomment>"; }

Date date_attr(const pt::ptree& node, const std::string& name, const std::string& path) {
  try {
    return parse_date(attribute(node, name, path));
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, path + ": " + e.what());
  }
}

} // namespace

ParsedAuthorList parse_author_list(std::string_view xml_text) {
  ParsedAuthorList result;
  if (trim(xml_text).empty()) throw Error(ErrorKind::parse, "missing Header block");

  pt::ptree doc;
  try {
    std::istringstream in{std::string(xml_text)};
    pt::read_xml(in, doc);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorKind::parse, std::string("xml: ") + e.message() + " at line " +
                                      std::to_string(e.line()));
  }

  auto root = doc.get_child_optional("authorlist");
  if (!root) throw Error(ErrorKind::parse, "missing Header block");

  // Block order is Header, Institutes, Authors.
  const pt::ptree* header = nullptr;
  const pt::ptree* institutes = nullptr;
  const pt::ptree* authors = nullptr;
  int stage = 0;
  for (const auto& [key, child] : *root) {
    const std::string path = "authorlist/" + key;
    int want = key == "header" ? 1 : key == "institutes" ? 2 : key == "authors" ? 3 : 0;
    if (want == 0) {
      if (!is_markup(key)) result.warnings.push_back("ignored unknown element " + path);
      continue;
    }
    if (want <= stage) throw Error(ErrorKind::parse, path + ": block out of order or repeated");
    stage = want;
    (want == 1 ? header : want == 2 ? institutes : authors) = &child;
  }
  if (!header) throw Error(ErrorKind::parse, "missing Header block");
  if (!institutes) throw Error(ErrorKind::parse, "missing Institutes block");
  if (!authors) throw Error(ErrorKind::parse, "missing Authors block");

  auto& list = result.list;
  int index = 0;
  for (const auto& [key, node] : *header) {
    if (is_markup(key)) continue;
    std::string path = "authorlist/header/" + key + "[" + std::to_string(++index) + "]";
    if (key != "field") {
      result.warnings.push_back("ignored unknown element " + path);
      continue;
    }
    list.header[attribute(node, "name", path)] = node.data();
  }

  std::set<std::string> ids;
  index = 0;
  for (const auto& [key, node] : *institutes) {
    if (is_markup(key)) continue;
    std::string path = "authorlist/institutes/" + key + "[" + std::to_string(++index) + "]";
    if (key != "institute") {
      result.warnings.push_back("ignored unknown element " + path);
      continue;
    }
    Institute inst{attribute(node, "id", path), node.data(),
                   attribute(node, "inspire_ref", path, false), attribute(node, "country", path, false)};
    if (!ids.insert(inst.id).second)
      throw Error(ErrorKind::parse, path + ": duplicate institute id '" + inst.id + "'");
    list.institutes.push_back(std::move(inst));
  }

  index = 0;
  for (const auto& [key, node] : *authors) {
    if (is_markup(key)) continue;
    std::string path = "authorlist/authors/" + key + "[" + std::to_string(++index) + "]";
    if (key != "author") {
      result.warnings.push_back("ignored unknown element " + path);
      continue;
    }
    Author a;
    a.family_name = attribute(node, "family_name", path);
    a.initials = attribute(node, "initials", path);
    a.foaf_name = attribute(node, "foaf_name", path, false);
    a.inspire_id = attribute(node, "inspire_id", path, false);
    a.orcid = attribute(node, "orcid", path, false);
    std::string deceased = attribute(node, "deceased", path, false);
    if (deceased != "" && deceased != "true" && deceased != "false")
      throw Error(ErrorKind::parse, path + ": deceased must be true or false");
    a.deceased = deceased == "true";
    a.membership_start = date_attr(node, "membership_start", path);
    if (!attribute(node, "membership_end", path, false).empty())
      a.membership_end = date_attr(node, "membership_end", path);
    int aff = 0;
    for (const auto& [ckey, cnode] : node) {
      if (is_markup(ckey)) continue;
      std::string cpath = path + "/" + ckey + "[" + std::to_string(++aff) + "]";
      if (ckey != "affiliation") {
        result.warnings.push_back("ignored unknown element " + cpath);
        continue;
      }
      std::string id = attribute(cnode, "institute", cpath);
      if (!ids.count(id))
        throw Error(ErrorKind::parse, cpath + ": affiliation references undeclared institute '" + id + "'");
      a.affiliations.push_back(std::move(id));
    }
    list.authors.push_back(std::move(a));
  }

  try {
    validate(list);
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, std::string("authorlist: ") + e.what());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Funding agencies

std::vector<FundingAgency> parse_agencies(std::string_view json_text) {
  std::vector<FundingAgency> out;
  std::set<std::u32string> seen;
  try {
    json root = json::parse(json_text);
    const json& items = root.is_object() ? root.at("agencies") : root;
    for (const auto& j : items) {
      FundingAgency a;
      a.name = j.at("name").get<std::string>();
      a.active_from = parse_date(j.at("active_from").get<std::string>());
      if (auto to = opt_string(j, "active_to"); !to.empty()) a.active_to = parse_date(to);
      if (!seen.insert(text::normalize_u32(a.name, true)).second)
        throw Error(ErrorKind::validation, "duplicate funding agency '" + a.name + "'");
      out.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("agencies: ") + e.what());
  }
  return out;
}

Acknowledgements render_acknowledgements(const std::vector<FundingAgency>& agencies,
                                         Date reference_date, std::string_view templ) {
  if (templ.find(kAgenciesPlaceholder) == std::string_view::npos)
    throw Error(ErrorKind::validation, "acknowledgements template lacks the {{agencies}} placeholder");

  Acknowledgements result;
  std::string joined;
  for (const auto& a : agencies) {
    if (!a.active_at(reference_date)) continue;
    if (!joined.empty()) joined += "; ";
    joined += a.name;
  }
  if (joined.empty())
    result.warnings.push_back("no funding agency active at " + format_date(reference_date));

  std::string out(templ);
  for (auto pos = out.find(kAgenciesPlaceholder); pos != std::string::npos;
       pos = out.find(kAgenciesPlaceholder, pos + joined.size()))
    out.replace(pos, kAgenciesPlaceholder.size(), joined);
  result.text = std::move(out);
  return result;
}

} // namespace pubforge::authorlist
