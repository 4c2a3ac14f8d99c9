#include <filesystem>

#include <gtest/gtest.h>

#include "pubforge/common.hpp"
#include "pubforge/text.hpp"

using namespace pubforge;
namespace fs = std::filesystem;

TEST(Dates, IsoRoundTrip) {
  auto d = parse_date("2018-07-31");
  EXPECT_EQ(format_date(d), "2018-07-31");
  EXPECT_EQ(format_date_dmy(d), "31-Jul-2018");
}

TEST(Dates, DayMonthYear) {
  auto d = parse_date_dmy("29-Oct-2018");
  EXPECT_EQ(format_date(d), "2018-10-29");
  EXPECT_EQ(format_date_dmy(d), "29-Oct-2018");
  EXPECT_EQ(parse_any_date("29-Oct-2018"), parse_any_date("2018-10-29"));
}

TEST(Dates, RejectsMalformed) {
  for (const char* bad : {"2018-13-01", "2018-02-30", "18-07-31", "2018/07/31", "", "2018-7-31"})
    EXPECT_THROW(parse_date(bad), Error) << bad;
  EXPECT_THROW(parse_date_dmy("29-Foo-2018"), Error);
}

TEST(Dates, WithinIsInclusive) {
  auto a = parse_date("2018-01-01"), b = parse_date("2018-12-31");
  EXPECT_TRUE(within(a, a, b));
  EXPECT_TRUE(within(b, a, b));
  EXPECT_FALSE(within(parse_date("2019-01-01"), a, b));
  EXPECT_TRUE(within(parse_date("2030-01-01"), a, std::nullopt));
}

TEST(Strings, TrimAndSplit) {
  EXPECT_EQ(trim("  a b \t\n"), "a b");
  EXPECT_EQ(trim(""), "");
  auto parts = split("a,,b,", ',');
  ASSERT_EQ(parts.size(), 4u);
  EXPECT_EQ(parts[1], "");
  EXPECT_EQ(parts[2], "b");
  EXPECT_TRUE(starts_with("PO-ready", "PO-"));
  EXPECT_FALSE(starts_with("P", "PO-"));
}

TEST(Files, AtomicWriteReplacesAndCreatesDirectories) {
  auto dir = fs::temp_directory_path() / "pubforge-common-test";
  fs::remove_all(dir);
  auto target = dir / "nested" / "file.txt";
  write_file_atomic(target, "one");
  write_file_atomic(target, "two");
  EXPECT_EQ(read_file(target), "two");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "nested")) ++entries;
  EXPECT_EQ(entries, 1u) << "temporary files left behind";
  fs::remove_all(dir);
}

TEST(Files, MissingFileIsNotFound) {
  try {
    read_file("/nonexistent/pubforge");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_found);
  }
}

TEST(Text, Utf8RoundTrip) {
  std::string s = "Müller Øvrebø 東京 \xF0\x9F\x98\x80";
  EXPECT_EQ(text::to_utf8(text::to_u32(s)), s);
  EXPECT_EQ(text::to_u32("\xC3"), std::u32string(1, U'�'));
}

TEST(Text, AccentFoldingAndCaseFolding) {
  EXPECT_EQ(text::accent_fold("Nonamečič"), "Nonamecic");
  EXPECT_EQ(text::to_utf8(text::normalize_u32("  Université   Grenoble ", true)), "universite grenoble");
  EXPECT_EQ(text::to_utf8(text::normalize_u32("Université", false)), text::to_utf8(text::decompose(U"université")));
}

TEST(Text, CompatibilityDecompositionSplitsLigatures) {
  EXPECT_EQ(text::to_utf8(text::normalize_u32("\xEF\xAC\x81nal", true)), "final"); // U+FB01
}

TEST(Text, XmlEscape) { EXPECT_EQ(text::xml_escape("<a href=\"x\">&'</a>"), "&lt;a href=&quot;x&quot;&gt;&amp;&apos;&lt;/a&gt;"); }
