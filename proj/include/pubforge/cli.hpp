#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pubforge::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFindings = 1;
inline constexpr int kExitUsage = 2;

/// File locations. Relative paths in a config file resolve against the
/// file's directory; unset entries fall back to the bundled data directory.
struct CliConfig {
  std::filesystem::path synonyms;
  std::filesystem::path profiles_dir;
  std::filesystem::path thresholds;
  std::filesystem::path pipelines_dir;
  std::filesystem::path workflows_dir;
  std::filesystem::path template_dir;
  std::filesystem::path members;
  std::filesystem::path agencies;
  std::filesystem::path ack_template;
  std::filesystem::path workspace;
  std::filesystem::path reports_dir;
};

CliConfig default_config();
/// Reads a JSON object whose keys are the CliConfig member names.
CliConfig load_config(const std::filesystem::path& path);

/// Full command line without the program name. Output goes to `out`,
/// diagnostics and errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace pubforge::cli
