#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pubforge/flatten.hpp"

namespace pubforge::pipeline {

enum class Kind { editing, submission };

/// Submission for refs matching PO-*, editing otherwise.
Kind select_pipeline(std::string_view ref_name);
std::string to_string(Kind k);

/// ANA-GROUP-YEAR-NN with an optional -PAPER, -INTn, -CONF or -PUB suffix.
bool is_valid_ref_code(std::string_view code);

enum class Status { passed, failed, skipped };
std::string to_string(Status s);

struct JobSpec {
  std::string name;
  std::string kind;
  nlohmann::json params = nlohmann::json::object();
};

struct Stage {
  std::string name;
  std::vector<JobSpec> jobs;
  /// Runs only when an earlier stage failed.
  bool run_on_failure = false;
};

struct PipelineConfig {
  std::string name;
  std::vector<Stage> stages;
};

struct JobContext {
  const flatten::TexProject& workspace;
  const std::map<std::string, std::string>& context;
  const nlohmann::json& params;
};

struct JobOutcome {
  bool passed = true;
  std::vector<std::string> diagnostics;
  std::vector<std::string> artifacts;
};

using JobFn = std::function<JobOutcome(const JobContext&)>;

class JobRegistry {
public:
  /// version_check, latex_checks, rules_check, build_check and flatten.
  static JobRegistry builtin();

  void add(std::string kind, JobFn fn);
  bool contains(std::string_view kind) const;
  const JobFn& at(std::string_view kind) const;

private:
  std::map<std::string, JobFn, std::less<>> jobs_;
};

/// Validates stage names, job names and job kinds against `registry`.
PipelineConfig load_pipeline(std::string_view json_text, const JobRegistry& registry = JobRegistry::builtin());

struct JobResult {
  std::string name;
  std::string kind;
  Status status = Status::skipped;
  std::vector<std::string> diagnostics;
  std::vector<std::string> artifacts;
};

struct StageResult {
  std::string name;
  Status status = Status::skipped;
  std::vector<JobResult> jobs;
};

struct PipelineResult {
  std::string pipeline;
  Status overall = Status::passed;
  std::vector<StageResult> stages;
  std::vector<std::string> artifacts;
};

/// Context keys read by the built-in jobs: toolkit_version, ref_code,
/// artifacts_dir.
PipelineResult run_pipeline(const PipelineConfig& config, const flatten::TexProject& workspace,
                            const std::map<std::string, std::string>& context,
                            const JobRegistry& registry = JobRegistry::builtin());

std::string result_json(const PipelineResult& result);
std::string result_text(const PipelineResult& result);

/// Three-part numeric version comparison; missing parts count as 0.
int compare_versions(std::string_view a, std::string_view b);

} // namespace pubforge::pipeline
