#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pubforge {

/// Broad failure classes. The CLI maps them onto exit codes and the HTTP
/// layer onto status codes.
enum class ErrorKind {
  parse,       ///< malformed input document
  validation,  ///< input parsed but violates an invariant
  not_found,   ///< referenced file or entity does not exist
  permission,  ///< actor lacks a required role
  transition,  ///< workflow has no unique successor
  unsupported, ///< input uses a feature outside the supported subset
  conflict,    ///< duplicate entity
  io,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

/// Calendar date without time zone.
using Date = std::chrono::year_month_day;

/// Parses YYYY-MM-DD. Throws Error(parse) on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date date);
/// DD-Mon-YYYY, e.g. 29-Oct-2018.
std::string format_date_dmy(Date date);
Date parse_date_dmy(std::string_view text);
/// Accepts either of the two textual forms above.
Date parse_any_date(std::string_view text);
Date today();

/// Inclusive interval test; an absent end means open-ended.
inline bool within(Date d, Date start, const std::optional<Date>& end) {
  return start <= d && (!end || d <= *end);
}

std::string read_file(const std::filesystem::path& path);
std::vector<unsigned char> read_binary(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with(std::string_view s, std::string_view prefix);

} // namespace pubforge
