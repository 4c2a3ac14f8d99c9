#include <random>
#include <regex>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pubforge/archive.hpp"
#include "pubforge/common.hpp"
#include "pubforge/flatten.hpp"
#include "pubforge/workflow.hpp"

using namespace pubforge;
using namespace pubforge::flatten;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = PUBFORGE_FIXTURES;

TexProject fixture_project() { return load_project(kFixtures + "/flatten/project"); }

/// Source with verbatim environments and \verb spans blanked out.
std::string outside_verbatim(const std::string& tex) {
  static const std::regex env(R"(\\begin\{(verbatim|lstlisting)\}[\s\S]*?\\end\{\1\})");
  static const std::regex verb(R"(\\verb\*?([^A-Za-z\s])[^\n]*?\1)");
  return std::regex_replace(std::regex_replace(tex, env, ""), verb, "");
}

std::vector<std::string> manifest_paths(const FlattenResult& r) {
  std::vector<std::string> out;
  for (const auto& e : r.manifest) out.push_back(e.path);
  return out;
}

} // namespace

TEST(Flatten, FixtureMatchesHandDerivedSource) {
  auto r = build_submission(fixture_project(), Profile::arxiv_tl2020);
  EXPECT_EQ(r.flat_source, read_file(kFixtures + "/flatten/expected_flat.tex"));
}

TEST(Flatten, StructuralInvariants) {
  auto r = build_submission(fixture_project(), Profile::arxiv_tl2020);
  auto code = outside_verbatim(r.flat_source);
  EXPECT_EQ(code.find("\\input"), std::string::npos);
  EXPECT_EQ(code.find("\\include{"), std::string::npos);
  // Only the bare line-glue '%' may remain; no comment text survives.
  EXPECT_FALSE(std::regex_search(code, std::regex(R"((^|[^\\])%[^\n])")));

  std::regex graphics(R"(\\includegraphics(\[[^\]]*\])?\{([^}]*)\})");
  std::vector<std::string> refs;
  for (auto it = std::sregex_iterator(code.begin(), code.end(), graphics); it != std::sregex_iterator(); ++it)
    refs.push_back((*it)[2].str());
  EXPECT_EQ(refs, (std::vector<std::string>{"Fig1.pdf", "Fig2.pdf", "Fig3.png", "Fig2.pdf"}));

  EXPECT_EQ(r.renamed_assets, (RenameMap{{"plots/detector.pdf", "Fig1.pdf"}, {"plots/mass.pdf", "Fig2.pdf"}, {"plots/pt.png", "Fig3.png"}}));
  for (const auto& e : r.manifest) EXPECT_EQ(e.path.find('/'), std::string::npos) << e.path;
}

TEST(Flatten, ManifestExcludesAuxiliaryAndUnusedFiles) {
  auto r = build_submission(fixture_project(), Profile::arxiv_tl2020);
  EXPECT_EQ(manifest_paths(r), (std::vector<std::string>{"paper.tex", "Fig1.pdf", "Fig2.pdf", "Fig3.png", "collab.sty",
                                                         "refs.bib", "revtex-lite.cls", "unsrt.bst"}));
  for (const auto& e : r.manifest) EXPECT_FALSE(starts_with(e.source, "aux/")) << e.source;
}

TEST(Flatten, JournalProfileReservesBblSlot) {
  auto r = build_submission(fixture_project(), Profile::journal_tl2017);
  ASSERT_EQ(r.manifest.size(), 9u);
  auto it = std::find_if(r.manifest.begin(), r.manifest.end(), [](const ManifestEntry& e) { return e.kind == "bbl"; });
  ASSERT_NE(it, r.manifest.end());
  EXPECT_EQ(it->path, "paper.bbl");
  EXPECT_TRUE(it->slot);

  auto project = fixture_project();
  project.assets["paper.bbl"] = "\\begin{thebibliography}{1}\\end{thebibliography}\n";
  auto with_bbl = build_submission(project, Profile::journal_tl2017);
  auto bbl = std::find_if(with_bbl.manifest.begin(), with_bbl.manifest.end(), [](const ManifestEntry& e) { return e.kind == "bbl"; });
  EXPECT_FALSE(bbl->slot);
  EXPECT_EQ(bbl->data, project.assets["paper.bbl"]);
}

TEST(Flatten, DeterministicAndIdempotent) {
  auto project = fixture_project();
  auto first = build_submission(project, Profile::arxiv_tl2020);
  EXPECT_EQ(build_submission(project, Profile::arxiv_tl2020), first);

  auto again = build_submission(as_project(first), Profile::arxiv_tl2020);
  EXPECT_EQ(again.flat_source, first.flat_source);
  EXPECT_EQ(manifest_paths(again), manifest_paths(first));
  for (std::size_t i = 0; i < first.manifest.size(); ++i) EXPECT_EQ(again.manifest[i].data, first.manifest[i].data);
}

TEST(Flatten, BundledTemplateProject) {
  auto dir = fs::temp_directory_path() / "pubforge-flatten-template";
  fs::remove_all(dir);
  workflow::instantiate_template(std::string(PUBFORGE_DATA_DIR) + "/template", dir, "ANA-SUSY-2019-04");
  auto r = build_submission(load_project(dir), Profile::arxiv_tl2020);
  EXPECT_EQ(manifest_paths(r), (std::vector<std::string>{"main.tex", "Fig1.pdf", "refs.bib", "style.sty"}));
  EXPECT_NE(r.flat_source.find("ANA-SUSY-2019-04"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Flatten, ArchiveRoundTripAndSidecar) {
  auto dir = fs::temp_directory_path() / "pubforge-flatten-test";
  fs::remove_all(dir);
  auto r = build_submission(fixture_project(), Profile::journal_tl2017);
  auto tarball = write_submission(r, dir, "sub");
  auto bytes = read_file(tarball);
  auto entries = archive::read_tar_gz(bytes);
  std::vector<std::string> names;
  for (const auto& e : entries) names.push_back(e.name);
  auto expected = manifest_paths(r);
  expected.erase(std::remove(expected.begin(), expected.end(), "paper.bbl"), expected.end());
  EXPECT_EQ(names, expected);
  EXPECT_EQ(entries[0].data, r.flat_source);
  EXPECT_TRUE(fs::exists(dir / "sub.json"));

  write_submission(r, dir, "sub");
  EXPECT_EQ(read_file(tarball), bytes);
  fs::remove_all(dir);
}

TEST(Inline, TwoFilesInOrder) {
  TexProject p;
  p.files = {{"main.tex", "B\n\\input{sections/a}\n\\input{sections/b}\nE\n"}, {"sections/a.tex", "A\n"}, {"sections/b.tex", "Bee\n"}};
  EXPECT_EQ(inline_inputs(p), "B\nA\nBee\nE\n");
}

TEST(Inline, CycleNamesThePath) {
  TexProject p;
  p.root_file = "a.tex";
  p.files = {{"a.tex", "\\input{b}"}, {"b.tex", "\\input{a}"}};
  try {
    inline_inputs(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "inclusion cycle: a.tex→b.tex→a.tex");
  }
}

TEST(Inline, MissingFileNamesIncluderAndTarget) {
  TexProject p;
  p.files = {{"main.tex", "\\input{sec/x}"}};
  try {
    inline_inputs(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_found);
    std::string msg = e.what();
    EXPECT_NE(msg.find("main.tex"), std::string::npos);
    EXPECT_NE(msg.find("sec/x"), std::string::npos);
  }
}

TEST(Inline, RandomTreesMatchFixpointOracle) {
  std::mt19937 rng(1010);
  for (int trial = 0; trial < 50; ++trial) {
    std::map<std::string, std::string> files;
    std::vector<std::vector<int>> children(10);
    for (int i = 1; i < 10; ++i) children[rng() % i].push_back(i);
    for (int i = 0; i < 10; ++i) {
      std::string name = i == 0 ? "main.tex" : "part/f" + std::to_string(i) + ".tex";
      std::string text;
      for (int c : children[i]) {
        text += "line " + std::to_string(rng() % 100) + "\n";
        const char* cmd = rng() % 2 ? "\\input" : "\\include";
        bool ext = rng() % 2;
        text += std::string(cmd) + "{part/f" + std::to_string(c) + (ext ? ".tex" : "") + "}" + (rng() % 3 ? "\n" : " tail\n");
      }
      text += "end of " + std::to_string(i) + (rng() % 2 ? "\n" : "");
      files[name] = text;
    }
    TexProject p;
    p.files = files;
    ASSERT_EQ(inline_inputs(p), testsupport::expand_fixpoint(files, "main.tex")) << trial;
  }
}

TEST(Comments, EscapesAndVerbatim) {
  EXPECT_EQ(strip_comments("a \\% b % c"), "a \\% b");
  EXPECT_EQ(strip_comments("\\begin{verbatim}\n%x\n\\end{verbatim}\n"), "\\begin{verbatim}\n%x\n\\end{verbatim}\n");
  EXPECT_EQ(strip_comments("plain text\nno comments\n"), "plain text\nno comments\n");
  EXPECT_EQ(strip_comments("x\n% whole line\ny\n"), "x\ny\n");
  EXPECT_EQ(strip_comments("glue%\nnext"), "glue%\nnext");
  EXPECT_EQ(strip_comments("\\\\% after a line break"), "\\\\%");
}

TEST(Figures, FirstReferenceOrder) {
  std::map<std::string, std::string> assets{{"plots/mass.pdf", "m"}, {"plots/pt.png", "p"}};
  auto r = rename_figures("\\includegraphics{plots/mass.pdf} \\includegraphics{plots/pt.png} \\includegraphics{plots/mass}", assets);
  EXPECT_EQ(r.renamed, (RenameMap{{"plots/mass.pdf", "Fig1.pdf"}, {"plots/pt.png", "Fig2.png"}}));
  EXPECT_EQ(r.text, "\\includegraphics{Fig1.pdf} \\includegraphics{Fig2.png} \\includegraphics{Fig1.pdf}");

  auto none = rename_figures("no graphics here", assets);
  EXPECT_TRUE(none.renamed.empty());
  EXPECT_EQ(none.text, "no graphics here");

  try {
    rename_figures("\\includegraphics{plots/missing}", assets);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("plots/missing"), std::string::npos);
  }
}

TEST(Profiles, Names) {
  EXPECT_EQ(parse_profile("arxiv_tl2020"), Profile::arxiv_tl2020);
  EXPECT_EQ(to_string(Profile::journal_tl2017), "journal_tl2017");
  EXPECT_THROW(parse_profile("tl2030"), Error);
}
