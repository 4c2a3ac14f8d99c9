#include "oracles.hpp"

#include <algorithm>
#include <filesystem>
#include <regex>
#include <stdexcept>

namespace testsupport {

namespace {

std::size_t lev(const std::u32string& a, const std::u32string& b, std::size_t i, std::size_t j) {
  if (std::min(i, j) == 0) return std::max(i, j);
  return std::min({lev(a, b, i - 1, j) + 1, lev(a, b, i, j - 1) + 1,
                   lev(a, b, i - 1, j - 1) + (a[i - 1] != b[j - 1] ? 1u : 0u)});
}

} // namespace

std::size_t lev_recurrence(const std::u32string& a, const std::u32string& b) { return lev(a, b, a.size(), b.size()); }

std::string expand_fixpoint(const std::map<std::string, std::string>& files, const std::string& root) {
  static const std::regex include_re(R"(\\(input|include)\s*\{([^}]*)\})");
  std::string text = files.at(root);
  for (int step = 0; step < 100000; ++step) {
    std::smatch m;
    if (!std::regex_search(text, m, include_re)) return text;
    std::string target = std::filesystem::path(m[2].str()).lexically_normal().generic_string();
    auto it = files.find(target);
    if (it == files.end()) it = files.find(target + ".tex");
    if (it == files.end()) throw std::runtime_error("oracle: missing " + target);
    std::string body = it->second;
    if (!body.empty() && body.back() == '\n') body.pop_back();
    text = m.prefix().str() + body + m.suffix().str();
  }
  throw std::runtime_error("oracle: expansion did not terminate");
}

std::vector<std::string> all_strings(const std::string& alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i)
      for (char c : alphabet) out.push_back(out[i] + c);
    begin = end;
  }
  return out;
}

std::string random_string(std::mt19937& rng, const std::string& alphabet, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  for (std::size_t n = len(rng); n > 0; --n) s += alphabet[pick(rng)];
  return s;
}

namespace {

const std::vector<std::string> kFamily{"Aad",   "Abbott", "Müller", "Øvrebø", "Ĉapek",  "Nonamečič", "O'Neil",
                                       "Dûval", "Łukasz", "Smith",  "Zhang",  "Ferraz", "B\\\"ub",  "Lee & Co"};
const std::vector<std::string> kInitials{"A.", "B.C.", "J.-P.", "X.Y.", "M.", "Ø.", "K.-H.", "L"};
const std::vector<std::string> kPlaces{"University of Alberta, Edmonton AB", "LAPP, Université Grenoble Alpes",
                                       "CERN, Geneva",        "Physics <Dept> & \"Lab\"",
                                       "Universität Zürich",  "Институт физики", "東京大学"};

template <class T>
const T& choose(std::mt19937& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::string random_orcid(std::mt19937& rng) {
  std::uniform_int_distribution<int> digit(0, 9);
  std::string s;
  for (int i = 0; i < 16; ++i) {
    if (i && i % 4 == 0) s += '-';
    s += static_cast<char>('0' + digit(rng));
  }
  if (digit(rng) == 0) s.back() = 'X';
  return s;
}

pubforge::Date random_date(std::mt19937& rng) {
  using namespace std::chrono;
  std::uniform_int_distribution<int> y(1995, 2024), m(1, 12), d(1, 28);
  return year_month_day{year{y(rng)}, month{static_cast<unsigned>(m(rng))}, day{static_cast<unsigned>(d(rng))}};
}

} // namespace

pubforge::authorlist::AuthorList random_author_list(std::mt19937& rng, std::size_t authors, std::size_t institutes) {
  using namespace pubforge::authorlist;
  AuthorList list;
  list.header["ref_code"] = "ANA-EXOT-20" + std::to_string(10 + rng() % 15) + "-" + std::to_string(10 + rng() % 90);
  list.header["ref_date"] = pubforge::format_date(random_date(rng));
  if (rng() % 2) list.header["title"] = "Search for " + choose(rng, kPlaces) + " <resonances> & more";

  for (std::size_t i = 0; i < institutes; ++i) {
    Institute inst;
    inst.id = std::to_string(i + 1) + (rng() % 4 == 0 ? "a" : "");
    inst.name = choose(rng, kPlaces) + ", " + std::to_string(rng() % 1000);
    if (rng() % 3) inst.inspire_ref = "INST-" + std::to_string(rng() % 100000);
    if (rng() % 2) inst.country = rng() % 2 ? "Canada" : "Côte d'Ivoire";
    list.institutes.push_back(std::move(inst));
  }
  std::uniform_int_distribution<std::size_t> pick_inst(0, institutes - 1);
  for (std::size_t i = 0; i < authors; ++i) {
    Author a;
    a.family_name = choose(rng, kFamily);
    if (rng() % 5 == 0) a.family_name += "-" + choose(rng, kFamily);
    a.initials = choose(rng, kInitials);
    if (rng() % 2) a.foaf_name = a.initials + " " + a.family_name;
    if (rng() % 2) a.inspire_id = "INSPIRE-" + std::to_string(10000000 + rng() % 89999999);
    if (rng() % 2) a.orcid = random_orcid(rng);
    std::size_t n_aff = 1 + rng() % 3;
    for (std::size_t k = 0; k < n_aff; ++k) {
      auto id = list.institutes[pick_inst(rng)].id;
      if (std::find(a.affiliations.begin(), a.affiliations.end(), id) == a.affiliations.end())
        a.affiliations.push_back(id);
    }
    a.deceased = rng() % 10 == 0;
    a.membership_start = random_date(rng);
    if (rng() % 4 == 0) a.membership_end = random_date(rng);
    list.authors.push_back(std::move(a));
  }
  return list;
}

} // namespace testsupport
