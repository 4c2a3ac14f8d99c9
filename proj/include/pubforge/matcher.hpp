#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pubforge/authorlist.hpp"
#include "pubforge/proofparse.hpp"
#include "pubforge/report.hpp"

namespace pubforge::matcher {

/// Edit distance with unit costs for insertion, deletion and substitution.
/// Works on any sequence of comparable code units; use the char32_t
/// overload (or the UTF-8 convenience below) for Unicode text.
template <class CharT>
std::size_t levenshtein(std::basic_string_view<CharT> a, std::basic_string_view<CharT> b) {
  if (a.size() < b.size()) std::swap(a, b);
  // Single row over the shorter string.
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diagonal = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t above = row[j];
      row[j] = std::min({above + 1, row[j - 1] + 1, diagonal + (a[i - 1] == b[j - 1] ? 0u : 1u)});
      diagonal = above;
    }
  }
  return row[b.size()];
}

/// Decodes both arguments as UTF-8 and compares scalar values. No folding.
std::size_t levenshtein(std::string_view a, std::string_view b);

struct NormalizeOptions {
  bool fold_accents = false;
};

/// NFKD, whitespace collapsed and trimmed, case folded; accents removed on request.
std::string normalize(std::string_view s, NormalizeOptions options = {});

/// The form used for every comparison inside compare(): accents folded.
std::u32string match_key(std::string_view s);

/// 1 - distance / max(|a|, |b|); 1.0 when both are empty.
double similarity(std::size_t distance, std::size_t len_a, std::size_t len_b);

struct BestMatch {
  std::size_t index;
  std::size_t distance;
};

/// Candidate closest to the query after normalization; ties resolve to the
/// smallest index. Throws on an empty candidate list.
BestMatch best_match(std::string_view query, const std::vector<std::string>& candidates);

enum class InitialsShape { dot, dot_dot, dot_hyphen, hyphen_dot, other };

struct InitialsClass {
  InitialsShape shape = InitialsShape::other;
  bool spaced = false;

  bool operator==(const InitialsClass&) const = default;
};

/// Recognizes X. / X.Y. / X.-Y. / X-Y. with or without inner spaces.
InitialsClass classify_initials(std::string_view initials);
std::string to_string(InitialsClass c);

/// Splits a printed author name into its initials prefix and family name.
std::pair<std::string, std::string> split_printed_name(std::string_view printed);

struct SynonymEntry {
  std::string id;        ///< institutes only
  std::string original;
  std::string inspire;   ///< authors only
  std::string foaf_name; ///< authors only
  std::vector<std::string> synonyms;

  bool operator==(const SynonymEntry&) const = default;
};

struct SynonymDB {
  std::vector<SynonymEntry> institutes;
  std::vector<SynonymEntry> authors;

  bool operator==(const SynonymDB&) const = default;
};

enum class SynonymKind { institute, author };

/// JSON layout: {"institutes": [{id, original, synonyms}],
///               "authors": [{original, inspire, foafName, synonyms}]}.
SynonymDB parse_synonyms(std::string_view json_text);
std::string write_synonyms(const SynonymDB& db);

/// Appends `synonym` to the entry whose normalized original equals
/// `original`, creating the entry if needed. Throws Error(conflict) when the
/// spelling is already known for that entry.
void add_synonym(SynonymDB& db, SynonymKind kind, std::string_view original,
                 std::string_view synonym);

/// True iff the printed text equals the entry's original or one of its
/// synonyms after normalization.
bool apply_synonyms(std::string_view printed, const SynonymEntry& entry);

struct MatchThresholds {
  std::size_t author_distance = 2;
  double close_similarity = 0.80;
};

MatchThresholds parse_thresholds(std::string_view json_text);

struct MatchResult {
  std::size_t reference_index = 0;
  std::optional<std::size_t> target_index;
  std::size_t distance = 0;
  double similarity = 0.0;
  bool suppressed_by_synonym = false;
};

/// Raw assignment behind a report, in reference order.
struct Comparison {
  std::vector<MatchResult> authors;
  std::vector<MatchResult> institutes;
  std::vector<std::string> notes;
};

struct CompareInput {
  const authorlist::AuthorList& reference;
  const proof::ProofSegments& proof;
  const SynonymDB& synonyms;
  const std::vector<authorlist::FundingAgency>& agencies;
  MatchThresholds thresholds;
};

/// Fills the eleven discrepancy lists; ref_code and ref_date come from the
/// reference header, the remaining header fields are left to the caller.
DiscrepancyReport compare(const CompareInput& input, Comparison* details = nullptr);

/// Splits funding text into the units checked for unknown agencies.
std::vector<std::string> funding_segments(std::string_view funding_text);

} // namespace pubforge::matcher
