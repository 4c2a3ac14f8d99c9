#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pubforge/common.hpp"

namespace pubforge::authorlist {

struct Institute {
  std::string id;
  std::string name;
  std::string inspire_ref;
  std::string country;

  bool operator==(const Institute&) const = default;
};

struct Author {
  std::string family_name;
  std::string initials;
  std::string foaf_name;
  std::string inspire_id;
  std::string orcid; ///< empty when the author has none
  std::vector<std::string> affiliations;
  bool deceased = false;
  Date membership_start{};
  std::optional<Date> membership_end;

  /// Printed form used for matching against proofs, e.g. "X.-Y. Name".
  std::string display_name() const { return initials + " " + family_name; }

  bool operator==(const Author&) const = default;
};

/// Header keys written by snapshot_author_list.
inline constexpr std::string_view kTitleKey = "title";
inline constexpr std::string_view kRefCodeKey = "ref_code";
inline constexpr std::string_view kRefDateKey = "ref_date";

struct AuthorList {
  std::map<std::string, std::string> header;
  std::vector<Institute> institutes;
  std::vector<Author> authors;

  std::string ref_code() const;
  Date reference_date() const;
  /// 1-based position of an institute id, or 0 when absent.
  std::size_t institute_position(std::string_view id) const;

  bool operator==(const AuthorList&) const = default;
};

/// Throws Error(validation) naming the first broken invariant.
void validate(const AuthorList& list);
bool is_valid_orcid(std::string_view orcid);

/// Flat stand-in for the collaboration membership database.
struct MemberDB {
  std::vector<Institute> institutes;
  std::vector<Author> members;
};

MemberDB parse_member_db(std::string_view json_text);

AuthorList snapshot_author_list(const MemberDB& db, Date reference_date,
                                std::map<std::string, std::string> header);

enum class Format { xml, tex };
Format parse_format(std::string_view tag);

std::string render_author_list(const AuthorList& list, Format format);

struct ParsedAuthorList {
  AuthorList list;
  std::vector<std::string> warnings;
};

/// Inverse of render_author_list(list, Format::xml). Errors carry the
/// element path of the offending node.
ParsedAuthorList parse_author_list(std::string_view xml_text);

struct FundingAgency {
  std::string name;
  Date active_from{};
  std::optional<Date> active_to;

  bool active_at(Date d) const { return within(d, active_from, active_to); }
  bool operator==(const FundingAgency&) const = default;
};

/// Reads a JSON array of {name, active_from, active_to?}. Names must be
/// unique after normalization.
std::vector<FundingAgency> parse_agencies(std::string_view json_text);

inline constexpr std::string_view kAgenciesPlaceholder = "{{agencies}}";

struct Acknowledgements {
  std::string text;
  std::vector<std::string> warnings;
};

Acknowledgements render_acknowledgements(const std::vector<FundingAgency>& agencies,
                                         Date reference_date, std::string_view templ);

} // namespace pubforge::authorlist
