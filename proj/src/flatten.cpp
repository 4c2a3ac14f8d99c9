#include "pubforge/flatten.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "pubforge/archive.hpp"
#include "pubforge/common.hpp"

namespace fs = std::filesystem;

namespace pubforge::flatten {

namespace {

enum class RegionKind { code, comment, verbatim };

struct Region {
  RegionKind kind;
  std::size_t begin, end;
};

bool at(std::string_view text, std::size_t i, std::string_view token) {
  return text.substr(i, token.size()) == token;
}

/// Splits TeX source into code, comment ('%' to end of line, newline
/// excluded) and verbatim regions.
std::vector<Region> scan(std::string_view text, const Options& options) {
  std::vector<Region> regions;
  std::size_t code_start = 0;
  auto push = [&](RegionKind k, std::size_t b, std::size_t e) {
    if (e > b) regions.push_back({k, b, e});
  };
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '\\') {
      bool handled = false;
      for (const auto& env : options.verbatim_environments) {
        std::string begin = "\\begin{" + env + "}";
        if (!at(text, i, begin)) continue;
        std::string end = "\\end{" + env + "}";
        auto stop = text.find(end, i + begin.size());
        std::size_t region_end = stop == std::string_view::npos ? text.size() : stop + end.size();
        push(RegionKind::code, code_start, i);
        push(RegionKind::verbatim, i, region_end);
        i = code_start = region_end;
        handled = true;
        break;
      }
      if (handled) continue;
      if (at(text, i, "\\verb")) {
        std::size_t d = i + 5;
        if (d < text.size() && text[d] == '*') ++d;
        if (d < text.size() && !std::isalpha(static_cast<unsigned char>(text[d])) && text[d] != '\n') {
          auto stop = text.find(text[d], d + 1);
          auto eol = text.find('\n', d + 1);
          if (stop == std::string_view::npos || (eol != std::string_view::npos && eol < stop)) stop = eol;
          std::size_t region_end = stop == std::string_view::npos ? text.size() : stop + (text[stop] == '\n' ? 0 : 1);
          push(RegionKind::code, code_start, i);
          push(RegionKind::verbatim, i, region_end);
          i = code_start = region_end;
          continue;
        }
      }
      i += 2;
      continue;
    }
    if (c == '%') {
      push(RegionKind::code, code_start, i);
      auto eol = text.find('\n', i);
      std::size_t end = eol == std::string_view::npos ? text.size() : eol;
      push(RegionKind::comment, i, end);
      i = code_start = end;
      continue;
    }
    ++i;
  }
  push(RegionKind::code, code_start, text.size());
  return regions;
}

std::string normal_path(std::string_view p) {
  return fs::path(std::string(p)).lexically_normal().generic_string();
}

std::string base_name(std::string_view p) {
  auto slash = p.find_last_of('/');
  return std::string(slash == std::string_view::npos ? p : p.substr(slash + 1));
}

std::string extension(std::string_view p) {
  auto name = base_name(p);
  auto dot = name.find_last_of('.');
  return dot == std::string::npos || dot == 0 ? std::string{} : name.substr(dot);
}

bool is_auxiliary(const TexProject& project, std::string_view path) {
  return std::any_of(project.auxiliary.begin(), project.auxiliary.end(),
                     [&](const std::string& prefix) { return !prefix.empty() && starts_with(path, prefix); });
}

/// Rewrites every regex match that lies inside a code region.
template <class Replace>
std::string rewrite_code(std::string_view text, const std::regex& re, Replace replace, const Options& options = {}) {
  std::string out;
  for (const auto& r : scan(text, options)) {
    std::string chunk(text.substr(r.begin, r.end - r.begin));
    if (r.kind != RegionKind::code) {
      out += chunk;
      continue;
    }
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(chunk.begin(), chunk.end(), re); it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      out.append(chunk, last, static_cast<std::size_t>(m.position()) - last);
      out += replace(m);
      last = static_cast<std::size_t>(m.position() + m.length());
    }
    out.append(chunk, last);
  }
  return out;
}

void expand(const TexProject& project, const std::string& path, std::vector<std::string>& stack, std::string& out) {
  static const std::regex input_re(R"(\\(input|include)\s*\{([^}]*)\})");
  stack.push_back(path);
  const std::string& text = project.files.at(path);
  out += rewrite_code(text, input_re, [&](const std::smatch& m) {
    std::string target = normal_path(trim(m[2].str()));
    std::string resolved;
    if (project.files.count(target)) resolved = target;
    else if (project.files.count(target + ".tex")) resolved = target + ".tex";
    else
      throw Error(ErrorKind::not_found,
                  path + ": \\" + m[1].str() + "{" + m[2].str() + "}: file '" + target + "' not found");
    if (std::find(stack.begin(), stack.end(), resolved) != stack.end()) {
      std::string cycle;
      auto from = std::find(stack.begin(), stack.end(), resolved);
      for (auto it = from; it != stack.end(); ++it) cycle += *it + "→";
      throw Error(ErrorKind::validation, "inclusion cycle: " + cycle + resolved);
    }
    std::string body;
    expand(project, resolved, stack, body);
    if (!body.empty() && body.back() == '\n') body.pop_back();
    return body;
  });
  stack.pop_back();
}

} // namespace

Profile parse_profile(std::string_view tag) {
  if (tag == "arxiv_tl2020") return Profile::arxiv_tl2020;
  if (tag == "journal_tl2017") return Profile::journal_tl2017;
  throw Error(ErrorKind::validation, "unknown submission profile '" + std::string(tag) + "'");
}

std::string to_string(Profile p) { return p == Profile::arxiv_tl2020 ? "arxiv_tl2020" : "journal_tl2017"; }

TexProject load_project(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::not_found, "project directory '" + dir.string() + "' not found");
  TexProject p;
  if (fs::exists(dir / "project.json")) {
    try {
      auto j = nlohmann::json::parse(read_file(dir / "project.json"));
      p.root_file = j.value("root_file", p.root_file);
      p.auxiliary = j.value("auxiliary", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse, std::string("project.json: ") + e.what());
    }
  }
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& path : paths) {
    auto rel = path.lexically_relative(dir).generic_string();
    if (rel == "project.json" || base_name(rel).starts_with(".")) continue;
    auto bytes = read_file(path);
    if (extension(rel) == ".tex") p.files[rel] = std::move(bytes);
    else p.assets[rel] = std::move(bytes);
  }
  if (!p.files.count(p.root_file))
    throw Error(ErrorKind::not_found, "root file '" + p.root_file + "' not found in " + dir.string());
  return p;
}

std::string inline_inputs(const TexProject& project) {
  if (!project.files.count(project.root_file))
    throw Error(ErrorKind::not_found, "root file '" + project.root_file + "' not found");
  std::vector<std::string> stack;
  std::string out;
  expand(project, project.root_file, stack, out);
  return out;
}

std::string strip_comments(std::string_view tex, const Options& options) {
  std::string out;
  std::size_t skip_newline_at = std::string_view::npos;
  for (const auto& r : scan(tex, options)) {
    if (r.kind != RegionKind::comment) {
      std::size_t b = r.begin;
      if (b == skip_newline_at && b < r.end && tex[b] == '\n') ++b;
      out.append(tex.substr(b, r.end - b));
      continue;
    }
    auto line_start = out.find_last_of('\n');
    line_start = line_start == std::string::npos ? 0 : line_start + 1;
    bool blank = std::all_of(out.begin() + static_cast<std::ptrdiff_t>(line_start), out.end(),
                             [](char c) { return c == ' ' || c == '\t'; });
    if (blank) {
      out.resize(line_start);
      skip_newline_at = r.end;
      continue;
    }
    if (out.back() == ' ' || out.back() == '\t') {
      while (!out.empty() && (out.back() == ' ' || out.back() == '\t')) out.pop_back();
    } else {
      out += '%';
    }
  }
  return out;
}

RenamedSource rename_figures(std::string_view tex, const std::map<std::string, std::string>& assets) {
  static const std::regex graphics_re(R"((\\includegraphics\s*(?:\[[^\]]*\])?\s*\{)([^}]*)\})");
  static const std::vector<std::string> extensions{".pdf", ".png", ".jpg", ".jpeg", ".eps"};
  RenamedSource result;
  std::map<std::string, std::string> by_original;
  result.text = rewrite_code(tex, graphics_re, [&](const std::smatch& m) {
    std::string ref = normal_path(trim(m[2].str()));
    std::string resolved;
    if (assets.count(ref)) {
      resolved = ref;
    } else {
      for (const auto& ext : extensions)
        if (assets.count(ref + ext)) {
          resolved = ref + ext;
          break;
        }
    }
    if (resolved.empty()) throw Error(ErrorKind::not_found, "graphics reference '" + m[2].str() + "' does not resolve");
    auto it = by_original.find(resolved);
    if (it == by_original.end()) {
      std::string name = "Fig" + std::to_string(result.renamed.size() + 1) + extension(resolved);
      it = by_original.emplace(resolved, name).first;
      result.renamed.emplace_back(resolved, name);
    }
    return m[1].str() + it->second + "}";
  });
  return result;
}

std::string flatten_paths(std::string_view tex) {
  static const std::regex re(R"((\\(?:bibliography|bibliographystyle|usepackage|documentclass|RequirePackage)\s*(?:\[[^\]]*\])?\s*\{)([^}]*)\})");
  return rewrite_code(tex, re, [](const std::smatch& m) {
    std::string args;
    for (const auto& item : split(m[2].str(), ',')) {
      if (!args.empty()) args += ',';
      args += base_name(trim(item));
    }
    return m[1].str() + args + "}";
  });
}

FlattenResult build_submission(const TexProject& project, Profile profile, const Options& options) {
  FlattenResult r;
  r.profile = profile;
  std::string text = inline_inputs(project);
  text = strip_comments(text, options);

  std::map<std::string, std::string> usable;
  for (const auto& [path, data] : project.assets)
    if (!is_auxiliary(project, path)) usable.emplace(path, data);
  auto renamed = rename_figures(text, usable);
  r.renamed_assets = renamed.renamed;
  r.flat_source = flatten_paths(renamed.text);

  std::string root = base_name(project.root_file);
  std::set<std::string> taken{root};
  r.manifest.push_back({root, project.root_file, "source", r.flat_source, false});
  for (const auto& [orig, name] : r.renamed_assets) {
    if (!taken.insert(name).second) throw Error(ErrorKind::conflict, "archive name '" + name + "' used twice");
    r.manifest.push_back({name, orig, "figure", usable.at(orig), false});
  }

  std::string stem = root.substr(0, root.find_last_of('.'));
  std::vector<ManifestEntry> support;
  bool have_bbl = false;
  for (const auto& [path, data] : usable) {
    auto ext = extension(path);
    std::string kind;
    if (ext == ".bib" || ext == ".bst") kind = "bibliography";
    else if (ext == ".sty" || ext == ".cls") kind = "style";
    else if (ext == ".bbl" && profile == Profile::journal_tl2017) kind = "bbl";
    else continue;
    auto name = base_name(path);
    if (kind == "bbl") {
      if (name != stem + ".bbl") continue;
      have_bbl = true;
    }
    support.push_back({name, path, kind, data, false});
  }
  if (profile == Profile::journal_tl2017 && !have_bbl) support.push_back({stem + ".bbl", "", "bbl", "", true});
  std::sort(support.begin(), support.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  for (auto& e : support) {
    if (!taken.insert(e.path).second)
      throw Error(ErrorKind::conflict, "archive name '" + e.path + "' used twice (from '" + e.source + "')");
    r.manifest.push_back(std::move(e));
  }
  return r;
}

TexProject as_project(const FlattenResult& result) {
  TexProject p;
  for (const auto& e : result.manifest) {
    if (e.slot) continue;
    if (e.kind == "source") {
      p.root_file = e.path;
      p.files[e.path] = e.data;
    } else {
      p.assets[e.path] = e.data;
    }
  }
  return p;
}

std::string manifest_json(const FlattenResult& result) {
  nlohmann::ordered_json j;
  j["profile"] = to_string(result.profile);
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : result.manifest) {
    nlohmann::ordered_json item{{"path", e.path}, {"source", e.source}, {"kind", e.kind}, {"size", e.data.size()}};
    if (e.slot) item["slot"] = true;
    j["entries"].push_back(std::move(item));
  }
  j["renamed_assets"] = nlohmann::ordered_json::array();
  for (const auto& [orig, name] : result.renamed_assets)
    j["renamed_assets"].push_back({{"original", orig}, {"renamed", name}});
  return j.dump(4) + "\n";
}

fs::path write_submission(const FlattenResult& result, const fs::path& out_dir, const std::string& stem) {
  fs::create_directories(out_dir);
  std::vector<archive::Entry> entries;
  for (const auto& e : result.manifest)
    if (!e.slot) entries.push_back({e.path, e.data});
  auto tarball = out_dir / (stem + ".tar.gz");
  write_file_atomic(tarball, archive::write_tar_gz(entries));
  write_file_atomic(out_dir / (stem + ".json"), manifest_json(result));
  return tarball;
}

} // namespace pubforge::flatten
