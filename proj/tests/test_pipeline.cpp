#include <filesystem>
#include <regex>

#include <gtest/gtest.h>

#include "pubforge/archive.hpp"
#include "pubforge/common.hpp"
#include "pubforge/pipeline.hpp"
#include "pubforge/workflow.hpp"

using namespace pubforge;
using namespace pubforge::pipeline;
namespace fs = std::filesystem;

namespace {

const std::string kData = PUBFORGE_DATA_DIR;

PipelineConfig bundled(const std::string& name) { return load_pipeline(read_file(kData + "/pipelines/" + name + ".json")); }

flatten::TexProject template_project(const std::string& ref_code = "ANA-SUSY-2019-04") {
  auto dir = fs::temp_directory_path() / "pubforge-pipeline-template";
  fs::remove_all(dir);
  workflow::instantiate_template(kData + "/template", dir, ref_code);
  auto p = flatten::load_project(dir);
  fs::remove_all(dir);
  return p;
}

std::vector<Status> stage_statuses(const PipelineResult& r) {
  std::vector<Status> out;
  for (const auto& s : r.stages) out.push_back(s.status);
  return out;
}

const JobResult& job(const PipelineResult& r, const std::string& name) {
  for (const auto& s : r.stages)
    for (const auto& j : s.jobs)
      if (j.name == name) return j;
  throw std::runtime_error("no job " + name);
}

bool mentions(const std::vector<std::string>& diags, const std::string& needle) {
  return std::any_of(diags.begin(), diags.end(), [&](const std::string& d) { return d.find(needle) != std::string::npos; });
}

} // namespace

TEST(Dispatch, BranchTable) {
  const std::vector<std::pair<std::string, Kind>> table{
      {"PO-ready", Kind::submission}, {"PO-v1", Kind::submission}, {"master", Kind::editing}, {"feature/x", Kind::editing}};
  for (const auto& [ref, kind] : table) EXPECT_EQ(select_pipeline(ref), kind) << ref;
  EXPECT_EQ(select_pipeline("po-ready"), Kind::editing);
  EXPECT_EQ(select_pipeline("feature/PO-x"), Kind::editing);
  EXPECT_EQ(to_string(Kind::submission), "submission");
}

TEST(Gating, CleanTemplatePassesAllEditingStages) {
  auto r = run_pipeline(bundled("editing"), template_project(), {});
  EXPECT_EQ(r.overall, Status::passed) << result_text(r);
  ASSERT_EQ(r.stages.size(), 4u);
  EXPECT_EQ(stage_statuses(r), (std::vector<Status>{Status::passed, Status::passed, Status::passed, Status::passed}));
  EXPECT_TRUE(r.artifacts.empty());
}

TEST(Gating, RulesFailureSkipsBuild) {
  auto p = template_project();
  p.files["main.tex"] = std::regex_replace(p.files["main.tex"], std::regex(R"(\\input\{sections/conclusion\}\n)"), "");
  auto r = run_pipeline(bundled("editing"), p, {});
  EXPECT_EQ(r.overall, Status::failed);
  EXPECT_EQ(stage_statuses(r), (std::vector<Status>{Status::passed, Status::passed, Status::failed, Status::skipped}));
  EXPECT_EQ(job(r, "rules_check").diagnostics, (std::vector<std::string>{"required section 'Conclusion' is missing"}));
  EXPECT_EQ(job(r, "build_check").status, Status::skipped);
}

TEST(Gating, RunOnFailureStage) {
  JobRegistry reg;
  int notified = 0;
  reg.add("fail", [](const JobContext&) { return JobOutcome{false, {"boom"}, {}}; });
  reg.add("ok", [](const JobContext&) { return JobOutcome{}; });
  reg.add("notify", [&](const JobContext&) { ++notified; return JobOutcome{}; });
  auto cfg = load_pipeline(R"({"name":"t","stages":[
    {"name":"a","jobs":[{"name":"a1","kind":"ok"},{"name":"a2","kind":"fail"}]},
    {"name":"b","jobs":[{"name":"b1","kind":"ok"}]},
    {"name":"c","run_on_failure":true,"jobs":[{"name":"c1","kind":"notify"}]}]})",
                           reg);
  auto r = run_pipeline(cfg, flatten::TexProject{}, {}, reg);
  EXPECT_EQ(stage_statuses(r), (std::vector<Status>{Status::failed, Status::skipped, Status::passed}));
  EXPECT_EQ(job(r, "a1").status, Status::passed);
  EXPECT_EQ(notified, 1);
  EXPECT_EQ(r.overall, Status::failed);
}

TEST(Config, UnregisteredKindIsConfigurationError) {
  try {
    load_pipeline(R"({"name":"x","stages":[{"name":"s","jobs":[{"name":"j","kind":"spellcheck"}]}]})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
    EXPECT_NE(std::string(e.what()).find("spellcheck"), std::string::npos);
  }
  EXPECT_THROW(load_pipeline(R"({"name":"x","stages":[]})"), Error);
  EXPECT_THROW(load_pipeline(R"({"name":"x","stages":[{"name":"s","jobs":[{"name":"build_check"},{"name":"build_check"}]}]})"), Error);
  EXPECT_THROW(load_pipeline("{"), Error);
}

TEST(Rules, ReferenceCodeGrammar) {
  EXPECT_TRUE(is_valid_ref_code("ANA-SUSY-2019-04"));
  EXPECT_TRUE(is_valid_ref_code("ANA-SUSY-2019-04-PAPER"));
  EXPECT_TRUE(is_valid_ref_code("ANA-EXOT-2017-24-INT2"));
  EXPECT_FALSE(is_valid_ref_code("ANA-SUSY-19-4"));
  EXPECT_FALSE(is_valid_ref_code("ANA-SUSY-2019-04-DRAFT"));

  auto r = run_pipeline(bundled("editing"), template_project("ANA-SUSY-19-4"), {});
  EXPECT_EQ(job(r, "rules_check").status, Status::failed);
  EXPECT_TRUE(mentions(job(r, "rules_check").diagnostics, "reference code 'ANA-SUSY-19-4' does not follow"));
}

TEST(Build, UnbalancedFigureNamesEnvironment) {
  auto p = template_project();
  auto& results = p.files["sections/results.tex"];
  results = std::regex_replace(results, std::regex(R"(\\end\{figure\})"), "");
  auto r = run_pipeline(bundled("editing"), p, {});
  const auto& build = job(r, "build_check");
  EXPECT_EQ(build.status, Status::failed);
  EXPECT_TRUE(mentions(build.diagnostics, "environment 'figure'")) << result_text(r);
}

TEST(Build, UndefinedLabelAndCitation) {
  auto p = template_project();
  p.files["sections/conclusion.tex"] += "See~\\ref{sec:nowhere} and~\\cite{missing:2020}.\n";
  auto r = run_pipeline(bundled("editing"), p, {});
  const auto& build = job(r, "build_check");
  EXPECT_TRUE(mentions(build.diagnostics, "undefined label 'sec:nowhere'"));
  EXPECT_TRUE(mentions(build.diagnostics, "citation 'missing:2020'"));
}

TEST(Latex, ForbiddenCommandsAndPlacement) {
  auto p = template_project();
  p.files["sections/conclusion.tex"] += "\\clearpage\n\\begin{table}[H]\n\\end{table}\n";
  auto r = run_pipeline(bundled("editing"), p, {});
  const auto& latex = job(r, "latex_checks");
  EXPECT_EQ(latex.status, Status::failed);
  EXPECT_TRUE(mentions(latex.diagnostics, "forbidden command \\clearpage"));
  EXPECT_TRUE(mentions(latex.diagnostics, "table placement [H]"));
  EXPECT_EQ(stage_statuses(r)[2], Status::skipped);
}

TEST(Version, MinimumIsEnforced) {
  auto r = run_pipeline(bundled("editing"), template_project(), {{"toolkit_version", "0.9.9"}});
  EXPECT_EQ(stage_statuses(r), (std::vector<Status>{Status::failed, Status::skipped, Status::skipped, Status::skipped}));
  EXPECT_EQ(compare_versions("1.10", "1.9.9"), 1);
  EXPECT_EQ(compare_versions("1.0", "1.0.0"), 0);
  EXPECT_EQ(compare_versions("0.9.9", "1.0.0"), -1);
}

TEST(Submission, ArtifactsMatchTarballManifest) {
  auto dir = fs::temp_directory_path() / "pubforge-pipeline-artifacts";
  fs::remove_all(dir);
  auto r = run_pipeline(bundled("submission"), template_project(), {{"artifacts_dir", dir.string()}});
  ASSERT_EQ(r.overall, Status::passed) << result_text(r);
  ASSERT_EQ(r.stages.size(), 5u);
  EXPECT_EQ(r.artifacts, (std::vector<std::string>{"ANA-SUSY-2019-04.tar.gz", "ANA-SUSY-2019-04.json",
                                                   "ANA-SUSY-2019-04-journal.tar.gz", "ANA-SUSY-2019-04-journal.json"}));
  for (const auto& a : r.artifacts) EXPECT_TRUE(fs::exists(dir / a)) << a;

  auto sidecar = nlohmann::json::parse(read_file(dir / "ANA-SUSY-2019-04.json"));
  auto entries = archive::read_tar_gz(read_file(dir / "ANA-SUSY-2019-04.tar.gz"));
  std::vector<std::string> names;
  for (const auto& e : entries) names.push_back(e.name);
  std::vector<std::string> listed;
  for (const auto& m : sidecar.at("entries")) listed.push_back(m.at("path").get<std::string>());
  EXPECT_EQ(names, listed);
  fs::remove_all(dir);
}

TEST(Output, JsonAndText) {
  auto r = run_pipeline(bundled("editing"), template_project(), {{"toolkit_version", "1.2.0"}});
  auto j = nlohmann::json::parse(result_json(r));
  EXPECT_EQ(j["pipeline"], "editing");
  EXPECT_EQ(j["status"], "passed");
  EXPECT_EQ(j["stages"][0]["jobs"][0]["diagnostics"][0], "toolkit version 1.2.0 (minimum 1.0.0)");
  EXPECT_NE(result_text(r).find("stage build: passed"), std::string::npos);
}
