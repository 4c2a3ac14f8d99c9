#include "pubforge/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <regex>
#include <set>
#include <sstream>

#include "pubforge/common.hpp"

#ifndef PUBFORGE_VERSION
#define PUBFORGE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace pubforge::pipeline {

namespace {

using json = nlohmann::json;

std::size_t line_of(const std::string& text, std::size_t pos) {
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
}

std::string at_line(const std::string& text, std::size_t pos) {
  return "line " + std::to_string(line_of(text, pos)) + ": ";
}

/// The document as the checks see it: inputs expanded, comments removed.
std::string document_text(const JobContext& ctx) {
  return flatten::strip_comments(flatten::inline_inputs(ctx.workspace));
}

/// Blanks verbatim material so structural checks ignore it; keeps newlines
/// so line numbers stay valid.
std::string without_verbatim(std::string text) {
  static const std::regex env(R"(\\begin\{(verbatim|lstlisting)\}[\s\S]*?\\end\{\1\})");
  static const std::regex verb(R"(\\verb\*?([^a-zA-Z\s])[^\n]*?\1)");
  auto blank = [](std::string s, const std::regex& re) {
    std::string out;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
      out.append(s, last, static_cast<std::size_t>(it->position()) - last);
      for (char c : it->str()) out.push_back(c == '\n' ? '\n' : ' ');
      last = static_cast<std::size_t>(it->position() + it->length());
    }
    out.append(s, last);
    return out;
  };
  return blank(blank(std::move(text), env), verb);
}

std::string ref_code_of(const JobContext& ctx, const std::string& text) {
  if (auto it = ctx.context.find("ref_code"); it != ctx.context.end() && !it->second.empty()) return it->second;
  std::string command = ctx.params.value("ref_code_command", "PubRefCode");
  std::regex re("\\\\" + command + R"(\s*\{([^}]*)\})");
  std::smatch m;
  if (std::regex_search(text, m, re)) return trim(m[1].str());
  return {};
}

JobOutcome version_check(const JobContext& ctx) {
  JobOutcome out;
  std::string have = PUBFORGE_VERSION;
  if (auto it = ctx.context.find("toolkit_version"); it != ctx.context.end()) have = it->second;
  std::string minimum = ctx.params.value("minimum", "0.0.0");
  if (compare_versions(have, minimum) < 0) {
    out.passed = false;
    out.diagnostics.push_back("toolkit version " + have + " is older than the required " + minimum);
  } else {
    out.diagnostics.push_back("toolkit version " + have + " (minimum " + minimum + ")");
  }
  return out;
}

JobOutcome latex_checks(const JobContext& ctx) {
  JobOutcome out;
  std::string text = without_verbatim(document_text(ctx));
  for (const auto& cmd : ctx.params.value("forbidden_commands", std::vector<std::string>{})) {
    std::string name = cmd.starts_with("\\") ? cmd.substr(1) : cmd;
    std::regex re("\\\\" + name + "(?![A-Za-z])");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
      out.passed = false;
      out.diagnostics.push_back(at_line(text, static_cast<std::size_t>(it->position())) + "forbidden command \\" + name);
    }
  }
  if (ctx.params.contains("float_placement")) {
    std::string allowed = ctx.params["float_placement"].get<std::string>();
    static const std::regex floats(R"(\\begin\{(figure|table)\*?\}(\[([^\]]*)\])?)");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), floats); it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      std::string spec = m[3].str();
      bool ok = m[2].matched ? !spec.empty() : !ctx.params.value("require_placement", false);
      for (char c : spec)
        if (allowed.find(c) == std::string::npos && c != '!') ok = false;
      if (!ok) {
        out.passed = false;
        out.diagnostics.push_back(at_line(text, static_cast<std::size_t>(m.position())) + m[1].str() + " placement [" +
                                  spec + "] not allowed (use " + allowed + ")");
      }
    }
  }
  return out;
}

JobOutcome rules_check(const JobContext& ctx) {
  JobOutcome out;
  std::string text = without_verbatim(document_text(ctx));
  std::set<std::string> sections;
  static const std::regex section_re(R"(\\section\*?\s*\{([^}]*)\})");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), section_re); it != std::sregex_iterator(); ++it) {
    std::string title = trim((*it)[1].str());
    std::transform(title.begin(), title.end(), title.begin(), [](unsigned char c) { return std::tolower(c); });
    sections.insert(title);
  }
  for (const auto& required : ctx.params.value("required_sections", std::vector<std::string>{})) {
    std::string key = trim(required);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!sections.count(key)) {
      out.passed = false;
      out.diagnostics.push_back("required section '" + required + "' is missing");
    }
  }
  std::string code = ref_code_of(ctx, text);
  if (code.empty()) {
    out.passed = false;
    out.diagnostics.push_back("no reference code found");
  } else if (!is_valid_ref_code(code)) {
    out.passed = false;
    out.diagnostics.push_back("reference code '" + code + "' does not follow ANA-GROUP-YEAR-NN[-PAPER|-INTn|-CONF|-PUB]");
  }
  return out;
}

JobOutcome build_check(const JobContext& ctx) {
  JobOutcome out;
  std::string text = without_verbatim(document_text(ctx));
  auto fail = [&](std::string msg) {
    out.passed = false;
    out.diagnostics.push_back(std::move(msg));
  };

  static const std::regex env_re(R"(\\(begin|end)\s*\{([^}]*)\})");
  std::vector<std::pair<std::string, std::size_t>> open;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), env_re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto pos = static_cast<std::size_t>(m.position());
    if (m[1] == "begin") {
      open.emplace_back(m[2].str(), pos);
    } else if (open.empty()) {
      fail(at_line(text, pos) + "\\end{" + m[2].str() + "} without matching \\begin");
    } else if (open.back().first != m[2].str()) {
      fail(at_line(text, pos) + "\\end{" + m[2].str() + "} closes environment '" + open.back().first +
           "' opened at line " + std::to_string(line_of(text, open.back().second)));
      open.pop_back();
    } else {
      open.pop_back();
    }
  }
  for (const auto& [name, pos] : open) fail(at_line(text, pos) + "environment '" + name + "' is never closed");

  long depth = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\') {
      ++i;
      continue;
    }
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth < 0) {
      fail(at_line(text, i) + "unmatched '}'");
      depth = 0;
    }
  }
  if (depth > 0) fail(std::to_string(depth) + " unclosed '{'");

  std::set<std::string> labels;
  static const std::regex label_re(R"(\\label\s*\{([^}]*)\})");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), label_re); it != std::sregex_iterator(); ++it)
    if (!labels.insert((*it)[1].str()).second) fail("label '" + (*it)[1].str() + "' defined twice");
  static const std::regex ref_re(R"(\\(?:ref|eqref|autoref|cref|Cref|pageref)\s*\{([^}]*)\})");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), ref_re); it != std::sregex_iterator(); ++it)
    for (const auto& key : split((*it)[1].str(), ','))
      if (!labels.count(trim(key)))
        fail(at_line(text, static_cast<std::size_t>(it->position())) + "reference to undefined label '" + trim(key) + "'");

  std::set<std::string> bib_keys;
  static const std::regex bib_entry(R"(@\s*[A-Za-z]+\s*\{\s*([^,\s]+)\s*,)");
  for (const auto& [path, data] : ctx.workspace.assets) {
    if (!path.ends_with(".bib")) continue;
    for (auto it = std::sregex_iterator(data.begin(), data.end(), bib_entry); it != std::sregex_iterator(); ++it)
      bib_keys.insert((*it)[1].str());
  }
  static const std::regex cite_re(R"(\\cite[a-zA-Z]*\s*(?:\[[^\]]*\]\s*)*\{([^}]*)\})");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), cite_re); it != std::sregex_iterator(); ++it)
    for (const auto& key : split((*it)[1].str(), ','))
      if (!bib_keys.count(trim(key)))
        fail(at_line(text, static_cast<std::size_t>(it->position())) + "citation '" + trim(key) + "' not in any .bib file");

  if (out.passed && ctx.params.contains("engine")) {
    std::string engine = ctx.params["engine"].get<std::string>();
    auto dir = fs::temp_directory_path() / ("pubforge-build-" + std::to_string(std::hash<std::string>{}(text)));
    fs::create_directories(dir);
    for (const auto& [p, data] : ctx.workspace.files) {
      fs::create_directories((dir / p).parent_path());
      write_file_atomic(dir / p, data);
    }
    for (const auto& [p, data] : ctx.workspace.assets) {
      fs::create_directories((dir / p).parent_path());
      write_file_atomic(dir / p, data);
    }
    std::string cmd = "cd '" + dir.string() + "' && " + engine + " '" + ctx.workspace.root_file + "' >build.log 2>&1";
    int rc = std::system(cmd.c_str());
    if (rc != 0) fail("engine '" + engine + "' exited with status " + std::to_string(rc) + " (log in " + (dir / "build.log").string() + ")");
    else fs::remove_all(dir);
  }
  return out;
}

JobOutcome flatten_job(const JobContext& ctx) {
  JobOutcome out;
  auto profile = flatten::parse_profile(ctx.params.value("profile", "arxiv_tl2020"));
  auto result = flatten::build_submission(ctx.workspace, profile);
  std::string stem = ref_code_of(ctx, result.flat_source);
  if (stem.empty()) stem = "submission";
  stem += ctx.params.value("stem_suffix", "");
  out.artifacts = {stem + ".tar.gz", stem + ".json"};
  if (auto it = ctx.context.find("artifacts_dir"); it != ctx.context.end() && !it->second.empty())
    flatten::write_submission(result, it->second, stem);
  out.diagnostics.push_back(std::to_string(result.manifest.size()) + " archive entries, " +
                            std::to_string(result.renamed_assets.size()) + " figures renamed (" +
                            flatten::to_string(profile) + ")");
  return out;
}

} // namespace

Kind select_pipeline(std::string_view ref_name) {
  return starts_with(ref_name, "PO-") ? Kind::submission : Kind::editing;
}

std::string to_string(Kind k) { return k == Kind::submission ? "submission" : "editing"; }

bool is_valid_ref_code(std::string_view code) {
  static const std::regex re(R"(^ANA-[A-Z]{4}-[0-9]{4}-[0-9]{2}(-(PAPER|INT[0-9]+|CONF|PUB))?$)");
  return std::regex_match(std::string(code), re);
}

std::string to_string(Status s) {
  switch (s) {
  case Status::passed: return "passed";
  case Status::failed: return "failed";
  case Status::skipped: return "skipped";
  }
  return "?";
}

int compare_versions(std::string_view a, std::string_view b) {
  auto parts = [](std::string_view v) {
    std::vector<long> out;
    for (const auto& p : split(v, '.')) out.push_back(p.empty() ? 0 : std::strtol(p.c_str(), nullptr, 10));
    out.resize(3, 0);
    return out;
  };
  auto pa = parts(a), pb = parts(b);
  return pa < pb ? -1 : (pb < pa ? 1 : 0);
}

JobRegistry JobRegistry::builtin() {
  JobRegistry r;
  r.add("version_check", version_check);
  r.add("latex_checks", latex_checks);
  r.add("rules_check", rules_check);
  r.add("build_check", build_check);
  r.add("flatten", flatten_job);
  return r;
}

void JobRegistry::add(std::string kind, JobFn fn) { jobs_[std::move(kind)] = std::move(fn); }

bool JobRegistry::contains(std::string_view kind) const { return jobs_.find(kind) != jobs_.end(); }

const JobFn& JobRegistry::at(std::string_view kind) const {
  auto it = jobs_.find(kind);
  if (it == jobs_.end()) throw Error(ErrorKind::validation, "unregistered job kind '" + std::string(kind) + "'");
  return it->second;
}

PipelineConfig load_pipeline(std::string_view json_text, const JobRegistry& registry) {
  PipelineConfig cfg;
  try {
    auto j = json::parse(json_text);
    cfg.name = j.value("name", "");
    const auto& stages = j.at("stages");
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const auto& sj = stages[s];
      Stage stage;
      stage.name = sj.at("name").get<std::string>();
      stage.run_on_failure = sj.value("run_on_failure", false);
      const auto& jobs = sj.at("jobs");
      for (std::size_t k = 0; k < jobs.size(); ++k) {
        JobSpec spec;
        spec.name = jobs[k].at("name").get<std::string>();
        spec.kind = jobs[k].value("kind", spec.name);
        if (jobs[k].contains("params")) spec.params = jobs[k]["params"];
        if (!registry.contains(spec.kind))
          throw Error(ErrorKind::validation, "stages[" + std::to_string(s) + "].jobs[" + std::to_string(k) +
                                                 "]: unregistered job kind '" + spec.kind + "'");
        stage.jobs.push_back(std::move(spec));
      }
      cfg.stages.push_back(std::move(stage));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("pipeline config: ") + e.what());
  }
  if (cfg.stages.empty()) throw Error(ErrorKind::validation, "pipeline config: no stages");
  std::set<std::string> stage_names, job_names;
  for (const auto& s : cfg.stages) {
    if (!stage_names.insert(s.name).second) throw Error(ErrorKind::validation, "pipeline config: duplicate stage '" + s.name + "'");
    if (s.jobs.empty()) throw Error(ErrorKind::validation, "pipeline config: stage '" + s.name + "' has no jobs");
    for (const auto& job : s.jobs)
      if (!job_names.insert(job.name).second)
        throw Error(ErrorKind::validation, "pipeline config: duplicate job '" + job.name + "'");
  }
  return cfg;
}

PipelineResult run_pipeline(const PipelineConfig& config, const flatten::TexProject& workspace,
                            const std::map<std::string, std::string>& context, const JobRegistry& registry) {
  for (const auto& s : config.stages)
    for (const auto& j : s.jobs) registry.at(j.kind);

  PipelineResult result;
  result.pipeline = config.name;
  bool failed = false;
  for (const auto& stage : config.stages) {
    StageResult sr;
    sr.name = stage.name;
    bool run = stage.run_on_failure ? failed : !failed;
    if (!run) {
      for (const auto& j : stage.jobs) sr.jobs.push_back({j.name, j.kind, Status::skipped, {}, {}});
      result.stages.push_back(std::move(sr));
      continue;
    }
    std::vector<std::future<JobOutcome>> running;
    for (const auto& j : stage.jobs) {
      const JobFn& fn = registry.at(j.kind);
      running.push_back(std::async(std::launch::async, [&fn, &workspace, &context, &j] {
        try {
          return fn(JobContext{workspace, context, j.params});
        } catch (const std::exception& e) {
          return JobOutcome{false, {std::string("job error: ") + e.what()}, {}};
        }
      }));
    }
    sr.status = Status::passed;
    for (std::size_t k = 0; k < stage.jobs.size(); ++k) {
      JobOutcome o = running[k].get();
      JobResult jr{stage.jobs[k].name, stage.jobs[k].kind, o.passed ? Status::passed : Status::failed,
                   std::move(o.diagnostics), std::move(o.artifacts)};
      if (jr.status == Status::failed) sr.status = Status::failed;
      result.artifacts.insert(result.artifacts.end(), jr.artifacts.begin(), jr.artifacts.end());
      sr.jobs.push_back(std::move(jr));
    }
    if (sr.status == Status::failed) failed = true;
    result.stages.push_back(std::move(sr));
  }
  result.overall = failed ? Status::failed : Status::passed;
  return result;
}

std::string result_json(const PipelineResult& r) {
  nlohmann::ordered_json j;
  j["pipeline"] = r.pipeline;
  j["status"] = to_string(r.overall);
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : r.stages) {
    nlohmann::ordered_json sj{{"name", s.name}, {"status", to_string(s.status)}, {"jobs", nlohmann::ordered_json::array()}};
    for (const auto& job : s.jobs)
      sj["jobs"].push_back({{"name", job.name},
                            {"kind", job.kind},
                            {"status", to_string(job.status)},
                            {"diagnostics", job.diagnostics},
                            {"artifacts", job.artifacts}});
    j["stages"].push_back(std::move(sj));
  }
  j["artifacts"] = r.artifacts;
  return j.dump(4) + "\n";
}

std::string result_text(const PipelineResult& r) {
  std::ostringstream out;
  out << "pipeline " << r.pipeline << ": " << to_string(r.overall) << "\n";
  for (const auto& s : r.stages) {
    out << "stage " << s.name << ": " << to_string(s.status) << "\n";
    for (const auto& job : s.jobs) {
      out << "  job " << job.name << ": " << to_string(job.status) << "\n";
      for (const auto& d : job.diagnostics) out << "    " << d << "\n";
      for (const auto& a : job.artifacts) out << "    artifact " << a << "\n";
    }
  }
  return out.str();
}

} // namespace pubforge::pipeline
