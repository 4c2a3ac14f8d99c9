#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pubforge::flatten {

enum class Profile { arxiv_tl2020, journal_tl2017 };

Profile parse_profile(std::string_view tag);
std::string to_string(Profile p);

/// A LaTeX project held in memory. Paths are relative, '/'-separated.
struct TexProject {
  std::string root_file = "main.tex";
  std::map<std::string, std::string> files;  ///< .tex sources
  std::map<std::string, std::string> assets; ///< everything else, raw bytes
  /// Path prefixes (e.g. "aux/") whose files never enter the submission.
  std::vector<std::string> auxiliary;

  bool operator==(const TexProject&) const = default;
};

/// Reads a directory. An optional project.json gives
/// {"root_file": "...", "auxiliary": ["aux/"]}; it is not itself an asset.
TexProject load_project(const std::filesystem::path& dir);

struct Options {
  std::vector<std::string> verbatim_environments{"verbatim", "lstlisting"};
};

/// Step 1: expands \input and \include recursively.
std::string inline_inputs(const TexProject& project);

/// Step 2: removes comments. Comment-only lines disappear; a comment after
/// content leaves a bare '%' so the line-continuation effect is kept.
std::string strip_comments(std::string_view tex, const Options& options = {});

using RenameMap = std::vector<std::pair<std::string, std::string>>; ///< original -> new, first-use order

struct RenamedSource {
  std::string text;
  RenameMap renamed;
};

/// Step 3: renames \includegraphics targets to Fig1, Fig2, ... keeping extensions.
RenamedSource rename_figures(std::string_view tex, const std::map<std::string, std::string>& assets);

/// Step 4 helper: strips directories from \bibliography, \bibliographystyle,
/// \usepackage and \documentclass arguments.
std::string flatten_paths(std::string_view tex);

struct ManifestEntry {
  std::string path;   ///< name inside the archive (no directories)
  std::string source; ///< project path it came from; empty for generated files
  std::string kind;   ///< source, figure, bibliography, style, bbl
  std::string data;
  bool slot = false;  ///< placeholder with no content yet (journal .bbl)

  bool operator==(const ManifestEntry&) const = default;
};

struct FlattenResult {
  std::string flat_source;
  RenameMap renamed_assets;
  Profile profile = Profile::arxiv_tl2020;
  std::vector<ManifestEntry> manifest;

  bool operator==(const FlattenResult&) const = default;
};

FlattenResult build_submission(const TexProject& project, Profile profile, const Options& options = {});

/// The flattened result seen as a project again (used for idempotence).
TexProject as_project(const FlattenResult& result);

/// JSON sidecar listing entries and the rename map.
std::string manifest_json(const FlattenResult& result);

/// Writes <stem>.tar.gz and <stem>.json into `out_dir`; returns the archive path.
std::filesystem::path write_submission(const FlattenResult& result, const std::filesystem::path& out_dir,
                                       const std::string& stem);

} // namespace pubforge::flatten
