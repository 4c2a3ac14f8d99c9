#include "pubforge/matcher.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <regex>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "pubforge/text.hpp"

namespace pubforge::matcher {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string join_ints(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

std::u32string plain_key(std::string_view s) { return text::normalize_u32(s, false); }

bool same_plain(std::string_view a, std::string_view b) { return plain_key(a) == plain_key(b); }

/// True when `needle` occurs in `hay` with no letter or digit on either side.
bool contains_word(const std::u32string& hay, const std::u32string& needle) {
  if (needle.empty()) return false;
  auto boundary = [](char32_t c) { return !text::is_letter(c) && !text::is_digit(c); };
  for (auto pos = hay.find(needle); pos != std::u32string::npos; pos = hay.find(needle, pos + 1)) {
    bool left = pos == 0 || boundary(hay[pos - 1]);
    bool right = pos + needle.size() == hay.size() || boundary(hay[pos + needle.size()]);
    if (left && right) return true;
  }
  return false;
}

struct Assignment {
  std::vector<std::optional<std::size_t>> target; ///< per reference entry
  std::vector<std::size_t> distance;
  std::vector<bool> consumed;                     ///< per proof entry
};

/// Exact pass in reference order, then a greedy best-distance pass over the
/// leftovers. `accept` decides whether a fuzzy candidate counts as a match.
template <class Accept>
Assignment assign(const std::vector<std::u32string>& refs, const std::vector<std::u32string>& targets,
                  Accept accept) {
  Assignment a;
  a.target.assign(refs.size(), std::nullopt);
  a.distance.assign(refs.size(), 0);
  a.consumed.assign(targets.size(), false);

  std::unordered_map<std::u32string, std::vector<std::size_t>> by_key;
  for (std::size_t j = targets.size(); j-- > 0;) by_key[targets[j]].push_back(j);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    auto it = by_key.find(refs[i]);
    if (it == by_key.end() || it->second.empty()) continue;
    a.target[i] = it->second.back();
    it->second.pop_back();
    a.consumed[*a.target[i]] = true;
  }

  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (a.target[i]) continue;
    std::size_t best = std::numeric_limits<std::size_t>::max();
    std::optional<std::size_t> best_j;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      if (a.consumed[j]) continue;
      auto la = refs[i].size(), lb = targets[j].size();
      if ((la > lb ? la - lb : lb - la) >= best) continue;
      auto d = levenshtein<char32_t>(refs[i], targets[j]);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    if (best_j && accept(i, *best_j, best)) {
      a.target[i] = best_j;
      a.distance[i] = best;
      a.consumed[*best_j] = true;
    }
  }
  return a;
}

const SynonymEntry* author_entry(const SynonymDB& db, const authorlist::Author& a) {
  auto display = plain_key(a.display_name());
  auto foaf = plain_key(a.foaf_name);
  for (const auto& e : db.authors) {
    if (!e.inspire.empty() && e.inspire == a.inspire_id) return &e;
    if (plain_key(e.original) == display) return &e;
    if (!e.foaf_name.empty() && !foaf.empty() && plain_key(e.foaf_name) == foaf) return &e;
  }
  return nullptr;
}

const SynonymEntry* institute_entry(const SynonymDB& db, const authorlist::Institute& inst) {
  auto name = plain_key(inst.name);
  for (const auto& e : db.institutes) {
    if (!e.id.empty() && e.id == inst.id) return &e;
    if (plain_key(e.original) == name) return &e;
  }
  return nullptr;
}

/// Proof index for a printed value that names no institute: drop leading
/// digits one at a time (a line number glued in front of the index).
std::optional<int> strip_line_number(int value, const std::set<int>& known) {
  std::string digits = std::to_string(value);
  for (std::size_t cut = 1; cut < digits.size(); ++cut) {
    int candidate = std::stoi(digits.substr(cut));
    if (known.count(candidate)) return candidate;
  }
  return std::nullopt;
}

ReportEntry entry(std::string reference, std::optional<std::string> printed, std::optional<std::size_t> distance,
                  std::string detail) {
  return ReportEntry{std::move(reference), std::move(printed), distance, std::move(detail), nullptr};
}

void check_synonym_invariants(const std::vector<SynonymEntry>& list, const char* kind) {
  std::set<std::u32string> originals;
  for (const auto& e : list) {
    if (trim(e.original).empty()) throw Error(ErrorKind::validation, std::string(kind) + " synonym entry without original");
    if (!originals.insert(plain_key(e.original)).second)
      throw Error(ErrorKind::validation, std::string("duplicate ") + kind + " synonym entry '" + e.original + "'");
    std::set<std::u32string> seen;
    for (const auto& s : e.synonyms)
      if (!seen.insert(plain_key(s)).second)
        throw Error(ErrorKind::validation, "duplicate synonym '" + s + "' for '" + e.original + "'");
  }
}

} // namespace

std::size_t levenshtein(std::string_view a, std::string_view b) {
  auto ua = text::to_u32(a);
  auto ub = text::to_u32(b);
  return levenshtein<char32_t>(ua, ub);
}

std::string normalize(std::string_view s, NormalizeOptions options) {
  return text::to_utf8(text::normalize_u32(s, options.fold_accents));
}

std::u32string match_key(std::string_view s) { return text::normalize_u32(s, true); }

double similarity(std::size_t distance, std::size_t len_a, std::size_t len_b) {
  auto longest = std::max(len_a, len_b);
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(distance) / static_cast<double>(longest);
}

BestMatch best_match(std::string_view query, const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw Error(ErrorKind::validation, "best_match: no candidates");
  auto q = plain_key(query);
  BestMatch best{0, std::numeric_limits<std::size_t>::max()};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto d = levenshtein<char32_t>(q, plain_key(candidates[i]));
    if (d < best.distance) best = {i, d};
  }
  return best;
}

InitialsClass classify_initials(std::string_view initials) {
  auto cps = text::to_u32(trim(initials));
  InitialsClass c;
  std::string shape;
  for (char32_t ch : cps) {
    if (text::is_space(ch)) {
      c.spaced = true;
      continue;
    }
    if (text::is_letter(ch)) shape += 'L';
    else if (ch == U'.') shape += '.';
    else if (ch == U'-' || ch == U'‐' || ch == U'‑') shape += '-';
    else shape += '?';
  }
  static const std::regex dot(R"(^L+\.$)");
  static const std::regex dot_dot(R"(^(L+\.){2,}$)");
  static const std::regex dot_hyphen(R"(^L+\.-L+\.$)");
  static const std::regex hyphen_dot(R"(^L+-L+\.$)");
  if (std::regex_match(shape, dot)) c.shape = InitialsShape::dot;
  else if (std::regex_match(shape, dot_dot)) c.shape = InitialsShape::dot_dot;
  else if (std::regex_match(shape, dot_hyphen)) c.shape = InitialsShape::dot_hyphen;
  else if (std::regex_match(shape, hyphen_dot)) c.shape = InitialsShape::hyphen_dot;
  else c.shape = InitialsShape::other;
  return c;
}

std::string to_string(InitialsClass c) {
  std::string s;
  switch (c.shape) {
  case InitialsShape::dot: s = "DOT"; break;
  case InitialsShape::dot_dot: s = "DOTDOT"; break;
  case InitialsShape::dot_hyphen: s = "DOT_HYPHEN"; break;
  case InitialsShape::hyphen_dot: s = "HYPHEN_DOT"; break;
  case InitialsShape::other: s = "OTHER"; break;
  }
  return c.spaced ? s + " spaced" : s;
}

std::pair<std::string, std::string> split_printed_name(std::string_view printed) {
  auto words = split(trim(printed), ' ');
  std::string initials, family;
  std::size_t i = 0;
  for (; i + 1 < words.size(); ++i) {
    const auto& w = words[i];
    if (w.empty()) continue;
    bool initial_like = (w.back() == '.' || w.back() == '-') &&
                        std::none_of(w.begin(), w.end(), [](char c) { return c == ',' || (c >= '0' && c <= '9'); });
    if (!initial_like) break;
    initials += (initials.empty() ? "" : " ") + w;
  }
  for (; i < words.size(); ++i)
    if (!words[i].empty()) family += (family.empty() ? "" : " ") + words[i];
  return {initials, family};
}

SynonymDB parse_synonyms(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string("synonyms: ") + e.what());
  }
  SynonymDB db;
  try {
    for (const auto& item : j.value("institutes", nlohmann::json::array())) {
      SynonymEntry e;
      if (item.contains("id")) e.id = item["id"].is_string() ? item["id"].get<std::string>() : item["id"].dump();
      e.original = item.at("original").get<std::string>();
      e.synonyms = item.value("synonyms", std::vector<std::string>{});
      db.institutes.push_back(std::move(e));
    }
    for (const auto& item : j.value("authors", nlohmann::json::array())) {
      SynonymEntry e;
      e.original = item.at("original").get<std::string>();
      e.inspire = item.value("inspire", "");
      e.foaf_name = item.value("foafName", "");
      e.synonyms = item.value("synonyms", std::vector<std::string>{});
      db.authors.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("synonyms: ") + e.what());
  }
  check_synonym_invariants(db.institutes, "institute");
  check_synonym_invariants(db.authors, "author");
  return db;
}

std::string write_synonyms(const SynonymDB& db) {
  ordered_json j;
  j["institutes"] = ordered_json::array();
  for (const auto& e : db.institutes) {
    ordered_json item;
    item["id"] = e.id;
    item["original"] = e.original;
    item["synonyms"] = e.synonyms;
    j["institutes"].push_back(std::move(item));
  }
  j["authors"] = ordered_json::array();
  for (const auto& e : db.authors) {
    ordered_json item;
    item["original"] = e.original;
    item["inspire"] = e.inspire;
    item["foafName"] = e.foaf_name;
    item["synonyms"] = e.synonyms;
    j["authors"].push_back(std::move(item));
  }
  return j.dump(4) + "\n";
}

void add_synonym(SynonymDB& db, SynonymKind kind, std::string_view original, std::string_view synonym) {
  if (trim(original).empty()) throw Error(ErrorKind::validation, "original must not be empty");
  if (trim(synonym).empty()) throw Error(ErrorKind::validation, "synonym must not be empty");
  auto& list = kind == SynonymKind::institute ? db.institutes : db.authors;
  auto it = std::find_if(list.begin(), list.end(), [&](const SynonymEntry& e) { return same_plain(e.original, original); });
  if (it == list.end()) {
    SynonymEntry e;
    e.original = std::string(original);
    list.push_back(std::move(e));
    it = std::prev(list.end());
  }
  if (apply_synonyms(synonym, *it))
    throw Error(ErrorKind::conflict, "synonym '" + std::string(synonym) + "' already recorded for '" + it->original + "'");
  it->synonyms.emplace_back(synonym);
}

bool apply_synonyms(std::string_view printed, const SynonymEntry& entry) {
  auto p = plain_key(printed);
  if (p == plain_key(entry.original)) return true;
  return std::any_of(entry.synonyms.begin(), entry.synonyms.end(),
                     [&](const std::string& s) { return plain_key(s) == p; });
}

MatchThresholds parse_thresholds(std::string_view json_text) {
  MatchThresholds t;
  try {
    auto j = nlohmann::json::parse(json_text);
    if (j.contains("author_distance")) {
      auto v = j["author_distance"].get<long long>();
      if (v < 0) throw Error(ErrorKind::validation, "thresholds: author_distance must be >= 0");
      t.author_distance = static_cast<std::size_t>(v);
    }
    if (j.contains("close_similarity")) t.close_similarity = j["close_similarity"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("thresholds: ") + e.what());
  }
  if (t.close_similarity < 0.0 || t.close_similarity > 1.0)
    throw Error(ErrorKind::validation, "thresholds: close_similarity must lie in [0, 1]");
  return t;
}

std::vector<std::string> funding_segments(std::string_view funding_text) {
  std::vector<std::string> out;
  std::string current;
  auto push = [&] {
    auto t = trim(current);
    while (!t.empty() && (t.back() == '.' || t.back() == ';')) t.pop_back();
    t = trim(t);
    if (!t.empty()) out.push_back(t);
    current.clear();
  };
  std::string s(funding_text);
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == ';') {
      push();
      continue;
    }
    current.push_back(c);
    if (c != '.') continue;
    // Sentence end: ". " followed by an uppercase letter, and the word
    // before the period has no dot of its own (skips "U.S. Department").
    std::size_t k = i + 1;
    if (k >= s.size() || !std::isspace(static_cast<unsigned char>(s[k]))) continue;
    while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k]))) ++k;
    if (k >= s.size() || !std::isupper(static_cast<unsigned char>(s[k]))) continue;
    std::size_t w = i;
    while (w > 0 && !std::isspace(static_cast<unsigned char>(s[w - 1]))) --w;
    std::string_view word(s.data() + w, i - w);
    if (word.find('.') != std::string_view::npos || word.size() <= 1) continue;
    push();
  }
  push();
  return out;
}

DiscrepancyReport compare(const CompareInput& in, Comparison* details) {
  const auto& ref = in.reference;
  const auto& proof = in.proof;
  DiscrepancyReport report;
  report.ref_code = ref.ref_code();
  report.ref_date = ref.reference_date();
  Comparison local;
  Comparison& cmp = details ? *details : local;
  cmp = Comparison{};

  // Institutes -------------------------------------------------------------
  std::vector<std::u32string> ref_inst, proof_inst;
  for (const auto& i : ref.institutes) ref_inst.push_back(match_key(i.name));
  for (const auto& p : proof.institutes) proof_inst.push_back(match_key(p.name));
  auto inst = assign(ref_inst, proof_inst, [&](std::size_t i, std::size_t j, std::size_t d) {
    return similarity(d, ref_inst[i].size(), proof_inst[j].size()) >= in.thresholds.close_similarity;
  });

  std::vector<std::optional<int>> inst_proof_index(ref.institutes.size());
  for (std::size_t i = 0; i < ref.institutes.size(); ++i) {
    const auto& ri = ref.institutes[i];
    MatchResult m;
    m.reference_index = i;
    const SynonymEntry* syn = institute_entry(in.synonyms, ri);
    if (inst.target[i]) {
      std::size_t j = *inst.target[i];
      const auto& printed = proof.institutes[j].name;
      m.target_index = j;
      m.distance = inst.distance[i];
      m.similarity = similarity(m.distance, ref_inst[i].size(), proof_inst[j].size());
      inst_proof_index[i] = proof.institutes[j].index;
      if (m.distance > 0) {
        if (syn && apply_synonyms(printed, *syn)) {
          m.suppressed_by_synonym = true;
          report.institutes_missing_pdf_skip.push_back(entry(ri.name, printed, m.distance, "accepted synonym"));
        } else {
          auto e = entry(ri.name, printed, m.distance, "close match");
          e.extra = ordered_json{{"similarity", std::round(m.similarity * 1000.0) / 1000.0}};
          report.institutes_close_matches_list.push_back(std::move(e));
        }
      }
    } else {
      std::optional<std::size_t> hit;
      if (syn)
        for (std::size_t j = 0; j < proof.institutes.size() && !hit; ++j)
          if (!inst.consumed[j] && apply_synonyms(proof.institutes[j].name, *syn)) hit = j;
      if (hit) {
        inst.consumed[*hit] = true;
        const auto& printed = proof.institutes[*hit].name;
        m.target_index = hit;
        m.distance = levenshtein<char32_t>(ref_inst[i], proof_inst[*hit]);
        m.similarity = similarity(m.distance, ref_inst[i].size(), proof_inst[*hit].size());
        m.suppressed_by_synonym = true;
        inst_proof_index[i] = proof.institutes[*hit].index;
        report.institutes_missing_pdf_skip.push_back(entry(ri.name, printed, m.distance, "accepted synonym"));
      } else {
        report.institutes_missing_pdf_list.push_back(entry(ri.name, std::nullopt, std::nullopt, "not found in proof"));
      }
    }
    cmp.institutes.push_back(m);
  }
  for (std::size_t j = 0; j < proof.institutes.size(); ++j)
    if (!inst.consumed[j])
      cmp.notes.push_back("proof institute " + std::to_string(proof.institutes[j].index) + " '" +
                          proof.institutes[j].name + "' matches no reference institute");

  // Authors ----------------------------------------------------------------
  std::vector<std::u32string> ref_auth, proof_auth;
  for (const auto& a : ref.authors) ref_auth.push_back(match_key(a.display_name()));
  for (const auto& p : proof.authors) proof_auth.push_back(match_key(p.name));
  auto auth = assign(ref_auth, proof_auth,
                     [&](std::size_t, std::size_t, std::size_t d) { return d <= in.thresholds.author_distance; });

  std::set<int> known_indices;
  for (const auto& p : proof.institutes) known_indices.insert(p.index);

  for (std::size_t i = 0; i < ref.authors.size(); ++i) {
    const auto& ra = ref.authors[i];
    const std::string name = ra.display_name();
    MatchResult m;
    m.reference_index = i;
    const SynonymEntry* syn = author_entry(in.synonyms, ra);

    if (!auth.target[i]) {
      std::optional<std::size_t> hit;
      if (syn)
        for (std::size_t j = 0; j < proof.authors.size() && !hit; ++j)
          if (!auth.consumed[j] && apply_synonyms(proof.authors[j].name, *syn)) hit = j;
      if (hit) {
        auth.consumed[*hit] = true;
        m.target_index = hit;
        m.distance = levenshtein<char32_t>(ref_auth[i], proof_auth[*hit]);
        m.similarity = similarity(m.distance, ref_auth[i].size(), proof_auth[*hit].size());
        m.suppressed_by_synonym = true;
        report.authors_missing_skip.push_back(entry(name, proof.authors[*hit].name, m.distance, "accepted synonym"));
      } else {
        report.authors_missing_list.push_back(entry(name, std::nullopt, std::nullopt, "not found in proof"));
      }
      cmp.authors.push_back(m);
      continue;
    }

    std::size_t j = *auth.target[i];
    const auto& pa = proof.authors[j];
    m.target_index = j;
    m.distance = auth.distance[i];
    m.similarity = similarity(m.distance, ref_auth[i].size(), proof_auth[j].size());
    if (m.distance > 0 && syn && apply_synonyms(pa.name, *syn)) {
      m.suppressed_by_synonym = true;
      report.authors_missing_skip.push_back(entry(name, pa.name, m.distance, "accepted synonym"));
      cmp.authors.push_back(m);
      continue;
    }
    cmp.authors.push_back(m);

    auto ref_class = classify_initials(ra.initials);
    auto printed_class = classify_initials(split_printed_name(pa.name).first);
    if (ref_class != printed_class)
      report.authors_puntuation_list.push_back(
          entry(name, pa.name, m.distance, "initials " + to_string(ref_class) + " printed as " + to_string(printed_class)));

    std::vector<int> expected;
    for (const auto& id : ra.affiliations) {
      auto pos = ref.institute_position(id);
      if (pos > 0 && inst_proof_index[pos - 1]) expected.push_back(*inst_proof_index[pos - 1]);
    }
    std::vector<int> printed;
    for (int v : pa.affiliation_indices) {
      if (!known_indices.count(v)) {
        if (auto fixed = strip_line_number(v, known_indices)) {
          cmp.notes.push_back("author '" + pa.name + "': index " + std::to_string(v) + " read as " +
                              std::to_string(*fixed) + " (line number prefix)");
          v = *fixed;
        }
      }
      printed.push_back(v);
    }
    if (printed != expected) {
      auto e = entry(name, pa.name, m.distance, "expected " + join_ints(expected) + " printed " + join_ints(printed));
      e.extra = ordered_json{{"expected", expected}, {"printed", printed}, {"raw", pa.affiliation_indices}};
      report.authors_mismatched_list.push_back(std::move(e));
    }

    if (ra.deceased && !pa.deceased_marker)
      report.authors_deceased_list.push_back(entry(name, pa.name, m.distance, "deceased, not marked in proof"));
    else if (!ra.deceased && pa.deceased_marker)
      report.authors_not_deceased_list.push_back(entry(name, pa.name, m.distance, "marked deceased in proof only"));
  }
  for (std::size_t j = 0; j < proof.authors.size(); ++j)
    if (!auth.consumed[j]) cmp.notes.push_back("proof author '" + proof.authors[j].name + "' matches no reference author");

  // Funding ----------------------------------------------------------------
  auto funding = match_key(proof.funding_text);
  std::vector<const authorlist::FundingAgency*> active;
  for (const auto& a : in.agencies)
    if (a.active_at(report.ref_date)) active.push_back(&a);
  for (const auto* a : active)
    if (!contains_word(funding, match_key(a->name)))
      report.founding_agencies_missing.push_back(entry(a->name, std::nullopt, std::nullopt, "not named in funding text"));

  for (const auto& seg : funding_segments(proof.funding_text)) {
    auto key = match_key(seg);
    bool names_active = std::any_of(active.begin(), active.end(),
                                    [&](const auto* a) { return contains_word(key, match_key(a->name)); });
    if (names_active) continue;
    std::string detail = "names no known agency";
    for (const auto& a : in.agencies)
      if (contains_word(key, match_key(a.name))) {
        detail = "names '" + a.name + "', not active at the reference date";
        break;
      }
    report.founding_agencies_wrong.push_back(entry(seg, seg, std::nullopt, detail));
  }
  return report;
}

} // namespace pubforge::matcher
