#include "pubforge/server.hpp"

#include <algorithm>
#include <mutex>
#include <shared_mutex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pubforge/checker.hpp"
#include "pubforge/matcher.hpp"
#include "pubforge/report.hpp"

namespace pubforge::server {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::parse:
    case ErrorKind::validation: return 400;
    case ErrorKind::conflict: return 409;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

/// Report names are plain "<something>.json" file names inside the reports dir.
bool valid_report_name(const std::string& name) {
  return name.size() > 5 && name.ends_with(".json") && name.find('/') == std::string::npos &&
         name.find('\\') == std::string::npos && name.front() != '.';
}

json entry_json(const matcher::SynonymEntry& e, matcher::SynonymKind kind) {
  if (kind == matcher::SynonymKind::institute)
    return {{"kind", "institute"}, {"id", e.id}, {"original", e.original}, {"synonyms", e.synonyms}};
  return {{"kind", "author"},         {"original", e.original}, {"inspire", e.inspire},
          {"foafName", e.foaf_name}, {"synonyms", e.synonyms}};
}

bool entry_matches(const matcher::SynonymEntry& e, const std::string& needle) {
  if (needle.empty()) return true;
  auto hit = [&](const std::string& s) {
    return !s.empty() && matcher::normalize(s, {.fold_accents = true}).find(needle) != std::string::npos;
  };
  if (hit(e.original) || hit(e.id) || hit(e.foaf_name)) return true;
  return std::any_of(e.synonyms.begin(), e.synonyms.end(), hit);
}

const char* kIndexPage = R"(<!DOCTYPE html>
<html lang="en">
<head><meta charset="utf-8"><title>Proof reports</title></head>
<body>
<h1>Proof reports</h1>
<ul id="reports"></ul>
<script>
fetch('/api/reports').then(r => r.json()).then(list => {
  const ul = document.getElementById('reports');
  for (const r of list) {
    const li = document.createElement('li');
    const a = document.createElement('a');
    a.href = '/api/reports/' + encodeURIComponent(r.name) + '?format=html';
    a.textContent = r.name + ' (' + (r.creation_date || '?') + ')';
    li.appendChild(a);
    ul.appendChild(li);
  }
});
</script>
</body>
</html>
)";

} // namespace

struct Server::Impl {
  ServerOptions options;
  httplib::Server http;
  /// Serializes synonym writes and report rewrites against readers.
  std::shared_mutex lock;

  explicit Impl(ServerOptions o) : options(std::move(o)) {
    if (!fs::is_directory(options.reports_dir))
      throw Error(ErrorKind::not_found, "reports directory " + options.reports_dir.string() + " not found");
    if (!fs::exists(options.synonyms))
      throw Error(ErrorKind::not_found, "synonym file " + options.synonyms.string() + " not found");
    matcher::parse_synonyms(read_file(options.synonyms));
    routes();
  }

  template <class Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_error(res, status_for(e.kind()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  }

  void routes() {
    http.Get("/api/reports", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, index()); });
    });
    http.Get(R"(/api/reports/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { get_report(req, res); });
    });
    http.Get("/api/synonyms", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, search(req.get_param_value("q"))); });
    });
    http.Post("/api/synonyms", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { post_synonym(req, res); });
    });
    http.Post(R"(/api/recheck/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { recheck(req.matches[1].str(), res); });
    });
    http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.body.empty()) send_error(res, res.status, "no route for " + req.method + " " + req.path);
    });
    if (!options.static_dir.empty()) {
      if (!http.set_mount_point("/", options.static_dir.string()))
        throw Error(ErrorKind::not_found, "static directory " + options.static_dir.string() + " not found");
    } else {
      http.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kIndexPage, "text/html; charset=utf-8");
      });
    }
  }

  json index() {
    std::shared_lock guard(lock);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(options.reports_dir))
      if (e.is_regular_file() && valid_report_name(e.path().filename().string())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    json out = json::array();
    for (const auto& f : files) {
      json item{{"name", f.filename().string()}};
      try {
        auto r = parse_report(read_file(f));
        item["ref_code"] = r.ref_code;
        item["filename"] = r.filename;
        item["creation_date"] = format_date_dmy(r.creation_date);
        item["findings"] = finding_count(r);
      } catch (const Error& e) {
        item["error"] = e.what();
      }
      out.push_back(std::move(item));
    }
    return out;
  }

  fs::path report_path(const std::string& name) const {
    if (!valid_report_name(name)) throw Error(ErrorKind::not_found, "no report named '" + name + "'");
    auto p = options.reports_dir / name;
    if (!fs::is_regular_file(p)) throw Error(ErrorKind::not_found, "no report named '" + name + "'");
    return p;
  }

  void get_report(const httplib::Request& req, httplib::Response& res) {
    std::shared_lock guard(lock);
    auto path = report_path(req.matches[1].str());
    auto content = read_file(path);
    if (req.get_param_value("format") == "html") {
      res.set_content(render_html(parse_report(content)), "text/html; charset=utf-8");
      return;
    }
    res.set_content(content, "application/json; charset=utf-8");
  }

  json search(const std::string& q) {
    auto needle = matcher::normalize(q, {.fold_accents = true});
    std::shared_lock guard(lock);
    auto db = matcher::parse_synonyms(read_file(options.synonyms));
    json out{{"institutes", json::array()}, {"authors", json::array()}};
    for (const auto& e : db.institutes)
      if (entry_matches(e, needle)) out["institutes"].push_back(entry_json(e, matcher::SynonymKind::institute));
    for (const auto& e : db.authors)
      if (entry_matches(e, needle)) out["authors"].push_back(entry_json(e, matcher::SynonymKind::author));
    return out;
  }

  void post_synonym(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      send_json(res, 400, {{"error", "malformed JSON body"}, {"fields", {{"body", e.what()}}}});
      return;
    }
    json problems = json::object();
    auto text_field = [&](const char* key) -> std::string {
      if (!body.is_object() || !body.contains(key)) {
        problems[key] = "required";
        return {};
      }
      if (!body[key].is_string() || trim(body[key].get<std::string>()).empty()) {
        problems[key] = "must be a non-empty string";
        return {};
      }
      return body[key].get<std::string>();
    };
    auto kind_text = text_field("kind");
    auto original = text_field("original");
    auto synonym = text_field("synonym");
    if (!kind_text.empty() && kind_text != "institute" && kind_text != "author")
      problems["kind"] = "must be \"institute\" or \"author\"";
    if (!problems.empty()) {
      send_json(res, 400, {{"error", "invalid synonym request"}, {"fields", problems}});
      return;
    }
    auto kind = kind_text == "institute" ? matcher::SynonymKind::institute : matcher::SynonymKind::author;

    std::unique_lock guard(lock);
    auto db = matcher::parse_synonyms(read_file(options.synonyms));
    matcher::add_synonym(db, kind, original, synonym);
    write_file_atomic(options.synonyms, matcher::write_synonyms(db));
    const auto& list = kind == matcher::SynonymKind::institute ? db.institutes : db.authors;
    auto key = matcher::normalize(original);
    for (const auto& e : list)
      if (matcher::normalize(e.original) == key) {
        send_json(res, 201, entry_json(e, kind));
        return;
      }
    send_json(res, 201, json::object());
  }

  void recheck(const std::string& name, httplib::Response& res) {
    std::unique_lock guard(lock);
    auto path = report_path(name);
    auto sidecar = checker::inputs_path(options.reports_dir, name);
    if (!fs::exists(sidecar)) throw Error(ErrorKind::not_found, "no stored inputs for report '" + name + "'");
    auto inputs = checker::inputs_from_json(json::parse(read_file(sidecar)));
    auto db = matcher::parse_synonyms(read_file(options.synonyms));
    auto result = checker::run_check(inputs, db, options.clock ? options.clock() : today());
    auto content = write_report(result.report);
    write_file_atomic(path, content);
    res.set_content(content, "application/json; charset=utf-8");
  }
};

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
Server::~Server() = default;

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    int p = impl_->http.bind_to_any_port(host);
    if (p < 0) throw Error(ErrorKind::io, "cannot bind " + host);
    return p;
  }
  if (!impl_->http.bind_to_port(host, port)) throw Error(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Server::run() { impl_->http.listen_after_bind(); }
void Server::stop() { impl_->http.stop(); }

} // namespace pubforge::server
