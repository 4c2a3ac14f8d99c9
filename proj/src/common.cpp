#include "pubforge/common.hpp"

#include <array>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace pubforge {

namespace {

constexpr std::array<std::string_view, 12> kMonths = {
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

int parse_int(std::string_view s, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw Error(ErrorKind::parse, "invalid date '" + std::string(whole) + "'");
  return value;
}

Date checked(int y, int m, int d, std::string_view whole) {
  Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
            std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok())
    throw Error(ErrorKind::parse, "invalid date '" + std::string(whole) + "'");
  return date;
}

} // namespace

Date parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-')
    throw Error(ErrorKind::parse, "invalid date '" + std::string(text) + "', expected YYYY-MM-DD");
  return checked(parse_int(text.substr(0, 4), text), parse_int(text.substr(5, 2), text),
                 parse_int(text.substr(8, 2), text), text);
}

std::string format_date(Date date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

std::string format_date_dmy(Date date) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%02u-%s-%04d", static_cast<unsigned>(date.day()),
                kMonths[static_cast<unsigned>(date.month()) - 1].data(),
                static_cast<int>(date.year()));
  return buf;
}

Date parse_date_dmy(std::string_view text) {
  auto parts = split(text, '-');
  if (parts.size() != 3)
    throw Error(ErrorKind::parse, "invalid date '" + std::string(text) + "', expected DD-Mon-YYYY");
  int month = 0;
  for (std::size_t i = 0; i < kMonths.size(); ++i)
    if (parts[1] == kMonths[i]) month = static_cast<int>(i) + 1;
  if (month == 0) throw Error(ErrorKind::parse, "invalid month in date '" + std::string(text) + "'");
  return checked(parse_int(parts[2], text), month, parse_int(parts[0], text), text);
}

Date parse_any_date(std::string_view text) {
  if (text.size() == 10 && text[4] == '-') return parse_date(text);
  return parse_date_dmy(text);
}

Date today() {
  return Date{std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now())};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::not_found, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<unsigned char> read_binary(const std::filesystem::path& path) {
  auto s = read_file(path);
  return {s.begin(), s.end()};
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::io, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorKind::io, "cannot replace '" + path.string() + "': " + ec.message());
  }
}

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

} // namespace pubforge
