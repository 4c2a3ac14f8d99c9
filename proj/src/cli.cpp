#include "pubforge/cli.hpp"

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pubforge/authorlist.hpp"
#include "pubforge/checker.hpp"
#include "pubforge/flatten.hpp"
#include "pubforge/pipeline.hpp"
#include "pubforge/server.hpp"
#include "pubforge/workflow.hpp"

#ifndef PUBFORGE_DATA_DIR
#define PUBFORGE_DATA_DIR "data"
#endif

namespace pubforge::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

CliConfig default_config() {
  fs::path data = PUBFORGE_DATA_DIR;
  CliConfig c;
  c.synonyms = data / "synonyms.json";
  c.profiles_dir = data / "profiles";
  c.thresholds = data / "thresholds.json";
  c.pipelines_dir = data / "pipelines";
  c.workflows_dir = data / "workflows";
  c.template_dir = data / "template";
  c.members = data / "members.json";
  c.agencies = data / "agencies.json";
  c.ack_template = data / "ack_template.tex";
  c.workspace = "workspace";
  c.reports_dir = "reports";
  return c;
}

CliConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::not_found, "config file " + path.string() + " not found");
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, "config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::parse, "config " + path.string() + ": expected an object");
  CliConfig c = default_config();
  const std::vector<std::pair<const char*, fs::path CliConfig::*>> keys{
      {"synonyms", &CliConfig::synonyms},         {"profiles_dir", &CliConfig::profiles_dir},
      {"thresholds", &CliConfig::thresholds},     {"pipelines_dir", &CliConfig::pipelines_dir},
      {"workflows_dir", &CliConfig::workflows_dir}, {"template_dir", &CliConfig::template_dir},
      {"members", &CliConfig::members},           {"agencies", &CliConfig::agencies},
      {"ack_template", &CliConfig::ack_template}, {"workspace", &CliConfig::workspace},
      {"reports_dir", &CliConfig::reports_dir}};
  auto base = path.parent_path();
  for (const auto& [key, member] : j.items()) {
    auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return key == k.first; });
    if (it == keys.end()) throw Error(ErrorKind::validation, "config " + path.string() + ": unknown key '" + key + "'");
    if (!member.is_string()) throw Error(ErrorKind::validation, "config " + path.string() + ": '" + key + "' must be a path");
    fs::path p = member.get<std::string>();
    c.*(it->second) = p.is_absolute() ? p : base / p;
  }
  return c;
}

namespace {

fs::path require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error(ErrorKind::not_found, what + " " + p.string() + " not found");
  return p;
}

std::string read_arg_json(const std::string& value) {
  if (!value.empty() && value.front() == '@') return read_file(require(value.substr(1), "data file"));
  return value;
}

json parse_data(const std::string& value) {
  if (value.empty()) return json::object();
  try {
    auto j = json::parse(read_arg_json(value));
    if (!j.is_object()) throw Error(ErrorKind::validation, "--data must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string("--data: ") + e.what());
  }
}

fs::path resolve_profile(const CliConfig& cfg, const std::string& publisher) {
  fs::path direct = publisher;
  if (direct.extension() == ".json" && fs::exists(direct)) return direct;
  std::string name = publisher;
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  return require(cfg.profiles_dir / (name + ".json"), "publisher profile");
}

workflow::Environment workflow_env(const CliConfig& cfg) {
  workflow::Environment env;
  env.workspace = cfg.workspace;
  env.outbox = cfg.workspace / "outbox";
  env.template_dir = cfg.template_dir;
  env.member_db = cfg.members;
  if (fs::exists(cfg.agencies) && fs::exists(cfg.ack_template)) {
    env.agencies = cfg.agencies;
    env.ack_template = cfg.ack_template;
  }
  return env;
}

workflow::WorkflowDef load_def(const CliConfig& cfg, const std::string& name) {
  fs::path p = name;
  if (p.extension() != ".json" || !fs::exists(p)) p = cfg.workflows_dir / (name + ".json");
  return workflow::load_workflow(read_file(require(p, "workflow definition")));
}

struct Args {
  std::string config;

  std::string ref, project = ".", pipeline_file, ref_code, artifacts;
  bool json_out = false;

  std::string profile = "arxiv_tl2020", out_dir = ".", stem = "submission";

  std::string members, date, title, format = "xml", output, xml, agencies, ack_template;

  std::string proof, publisher, synonyms, thresholds, reports, document, proof_format = "auto";

  std::string wf_name = "phase0", wf_id, actor, roles, data;

  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
};

void emit(std::ostream& out, const std::string& output, const std::string& content) {
  if (output.empty() || output == "-")
    out << content;
  else
    write_file_atomic(output, content);
}

int cmd_check(const CliConfig& cfg, const Args& a, std::ostream& out) {
  auto kind = pipeline::select_pipeline(a.ref);
  fs::path cfg_file = a.pipeline_file.empty() ? cfg.pipelines_dir / (pipeline::to_string(kind) + ".json")
                                              : fs::path(a.pipeline_file);
  auto config = pipeline::load_pipeline(read_file(require(cfg_file, "pipeline config")));
  auto project = flatten::load_project(require(a.project, "project directory"));
  std::map<std::string, std::string> context;
  if (!a.ref_code.empty()) context["ref_code"] = a.ref_code;
  if (!a.artifacts.empty()) context["artifacts_dir"] = a.artifacts;
  auto result = pipeline::run_pipeline(config, project, context);
  out << (a.json_out ? pipeline::result_json(result) : pipeline::result_text(result));
  return result.overall == pipeline::Status::passed ? kExitOk : kExitFindings;
}

int cmd_flatten(const Args& a, std::ostream& out) {
  auto project = flatten::load_project(require(a.project, "project directory"));
  auto result = flatten::build_submission(project, flatten::parse_profile(a.profile));
  auto archive = flatten::write_submission(result, a.out_dir, a.stem);
  out << archive.string() << "\n";
  for (const auto& e : result.manifest)
    out << "  " << e.path << (e.slot ? " (slot)" : "") << (e.source.empty() ? "" : " <- " + e.source) << "\n";
  return kExitOk;
}

int cmd_snapshot(const CliConfig& cfg, const Args& a, std::ostream& out) {
  auto db = authorlist::parse_member_db(read_file(require(a.members.empty() ? cfg.members : fs::path(a.members),
                                                          "member database")));
  std::map<std::string, std::string> header;
  if (!a.ref_code.empty()) header[std::string(authorlist::kRefCodeKey)] = a.ref_code;
  if (!a.title.empty()) header[std::string(authorlist::kTitleKey)] = a.title;
  auto list = authorlist::snapshot_author_list(db, a.date.empty() ? today() : parse_date(a.date), header);
  emit(out, a.output, authorlist::render_author_list(list, authorlist::parse_format(a.format)));
  return kExitOk;
}

int cmd_render(const Args& a, std::ostream& out, std::ostream& err) {
  auto parsed = authorlist::parse_author_list(read_file(require(a.xml, "author list")));
  for (const auto& w : parsed.warnings) err << "warning: " << w << "\n";
  emit(out, a.output, authorlist::render_author_list(parsed.list, authorlist::parse_format(a.format)));
  return kExitOk;
}

int cmd_ack(const CliConfig& cfg, const Args& a, std::ostream& out, std::ostream& err) {
  auto agencies = authorlist::parse_agencies(
      read_file(require(a.agencies.empty() ? cfg.agencies : fs::path(a.agencies), "agency list")));
  auto templ = read_file(require(a.ack_template.empty() ? cfg.ack_template : fs::path(a.ack_template),
                                 "acknowledgements template"));
  auto ack = authorlist::render_acknowledgements(agencies, a.date.empty() ? today() : parse_date(a.date), templ);
  for (const auto& w : ack.warnings) err << "warning: " << w << "\n";
  emit(out, a.output, ack.text);
  return kExitOk;
}

int cmd_compare(const CliConfig& cfg, const Args& a, std::ostream& out, std::ostream& err) {
  checker::CheckInputs in;
  in.reference_xml = read_file(require(a.xml, "author list"));
  fs::path proof_path = require(a.proof, "proof");
  if (a.proof_format == "pdf")
    in.proof_pages = pdf::extract_text(read_binary(proof_path));
  else if (a.proof_format == "text")
    in.proof_pages = pdf::load_pretokenized(read_file(proof_path));
  else
    in.proof_pages = checker::load_proof(proof_path);
  in.profile_json = read_file(resolve_profile(cfg, a.publisher));
  fs::path agencies = a.agencies.empty() ? cfg.agencies : fs::path(a.agencies);
  in.agencies_json = read_file(require(agencies, "agency list"));
  fs::path thresholds = a.thresholds.empty() ? cfg.thresholds : fs::path(a.thresholds);
  if (!a.thresholds.empty() || fs::exists(thresholds))
    in.thresholds = matcher::parse_thresholds(read_file(require(thresholds, "thresholds file")));
  in.filename = proof_path.stem().string();
  in.document = a.document.empty() ? proof_path.filename().string() : a.document;

  fs::path synonyms = a.synonyms.empty() ? cfg.synonyms : fs::path(a.synonyms);
  auto db = matcher::parse_synonyms(read_file(require(synonyms, "synonym file")));
  auto result = checker::run_check(in, db, a.date.empty() ? today() : parse_date(a.date));
  for (const auto& d : result.diagnostics) err << "note: " << d << "\n";

  fs::path reports = a.reports.empty() ? cfg.reports_dir : fs::path(a.reports);
  auto path = checker::store(reports, result, in);
  out << "report: " << path.string() << "\n" << checker::summary(result.report);
  return finding_count(result.report) == 0 ? kExitOk : kExitFindings;
}

int cmd_workflow_init(const CliConfig& cfg, const Args& a, std::ostream& out) {
  auto def = load_def(cfg, a.wf_name);
  workflow::InstanceStore store(cfg.workspace / "instances");
  auto inst = workflow::start_instance(def, a.wf_id);
  store.create(inst);
  out << inst.id << ": " << def.name << " at " << inst.current_node << "\n";
  return kExitOk;
}

workflow::Actor make_actor(const Args& a) {
  workflow::Actor actor{a.actor, {}};
  for (auto& r : split(a.roles, ','))
    if (auto t = trim(r); !t.empty()) actor.roles.push_back(t);
  return actor;
}

int cmd_workflow_step(const CliConfig& cfg, const Args& a, bool advance, std::ostream& out) {
  workflow::InstanceStore store(cfg.workspace / "instances");
  auto def = load_def(cfg, store.load(a.wf_id).workflow);
  auto env = workflow_env(cfg);
  auto actor = make_actor(a);
  auto data = parse_data(a.data);
  std::vector<workflow::Effect> effects;
  auto inst = store.update(a.wf_id, [&](workflow::WorkflowInstance i) {
    if (!advance) return workflow::save(def, std::move(i), actor, data, env);
    auto r = workflow::proceed(def, std::move(i), actor, data, env);
    effects = std::move(r.effects);
    return std::move(r.instance);
  });
  out << inst.id << ": at " << inst.current_node << "\n";
  for (const auto& e : effects) out << "  effect " << e.action << " " << e.detail.dump() << "\n";
  return kExitOk;
}

int cmd_workflow_show(const CliConfig& cfg, const Args& a, std::ostream& out) {
  workflow::InstanceStore store(cfg.workspace / "instances");
  auto inst = store.load(a.wf_id);
  auto def = load_def(cfg, inst.workflow);
  auto replayed = workflow::replay(def, inst);
  if (replayed.current_node != inst.current_node || replayed.step_data != inst.step_data)
    throw Error(ErrorKind::validation, "instance '" + inst.id + "' does not match its history");
  out << workflow::write_instance(inst);
  return kExitOk;
}

server::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const CliConfig& cfg, const Args& a, std::ostream& out) {
  server::ServerOptions opts;
  opts.reports_dir = a.reports.empty() ? cfg.reports_dir : fs::path(a.reports);
  opts.synonyms = a.synonyms.empty() ? cfg.synonyms : fs::path(a.synonyms);
  opts.static_dir = a.static_dir;
  server::Server srv(opts);
  int port = srv.bind(a.host, a.port);
  out << "serving on http://" << a.host << ":" << port << "\n" << std::flush;
  g_server = &srv;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  srv.run();
  g_server = nullptr;
  return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Args a;
  CLI::App app{"Publication toolkit: pipelines, flattening, author lists, proof checks, workflows", "pubforge"};
  app.set_version_flag("--version", PUBFORGE_VERSION);
  app.require_subcommand(1);
  app.add_option("--config", a.config, "JSON config file (default: $PUBFORGE_CONFIG)");

  auto* check = app.add_subcommand("check", "Run the CI pipeline selected by a branch name");
  check->add_option("--ref", a.ref, "Branch name (PO-* selects the submission pipeline)")->required();
  check->add_option("--project", a.project, "LaTeX project directory")->capture_default_str();
  check->add_option("--pipeline", a.pipeline_file, "Pipeline config overriding the selected one");
  check->add_option("--ref-code", a.ref_code, "Reference code (default: read from the source)");
  check->add_option("--artifacts", a.artifacts, "Directory for job artifacts");
  check->add_flag("--json", a.json_out, "Print the result as JSON");

  auto* flat = app.add_subcommand("flatten", "Build a flat submission archive and manifest");
  flat->add_option("--profile", a.profile, "arxiv_tl2020 or journal_tl2017")->capture_default_str();
  flat->add_option("--project", a.project, "LaTeX project directory")->capture_default_str();
  flat->add_option("--out", a.out_dir, "Output directory")->capture_default_str();
  flat->add_option("--stem", a.stem, "Base name of the archive and manifest")->capture_default_str();

  auto* al = app.add_subcommand("authorlist", "Author list snapshot, rendering and acknowledgements");
  al->require_subcommand(1);
  auto* snap = al->add_subcommand("snapshot", "Select qualified members at a reference date");
  snap->add_option("--members", a.members, "Member database JSON");
  snap->add_option("--date", a.date, "Reference date YYYY-MM-DD (default: today)");
  snap->add_option("--ref-code", a.ref_code, "Reference code stored in the header");
  snap->add_option("--title", a.title, "Title stored in the header");
  snap->add_option("--format", a.format, "xml or tex")->capture_default_str();
  snap->add_option("-o,--output", a.output, "Output file (default: stdout)");
  auto* render = al->add_subcommand("render", "Re-render an author list XML file");
  render->add_option("--xml", a.xml, "Author list XML")->required();
  render->add_option("--format", a.format, "xml or tex")->capture_default_str();
  render->add_option("-o,--output", a.output, "Output file (default: stdout)");
  auto* ack = al->add_subcommand("ack", "Render the acknowledgements paragraph");
  ack->add_option("--agencies", a.agencies, "Funding agency list JSON");
  ack->add_option("--template", a.ack_template, "Template containing {{agencies}}");
  ack->add_option("--date", a.date, "Reference date YYYY-MM-DD (default: today)");
  ack->add_option("-o,--output", a.output, "Output file (default: stdout)");

  auto* cmp = app.add_subcommand("compare", "Check a journal proof against the author list");
  cmp->add_option("--xml", a.xml, "Reference author list XML")->required();
  cmp->add_option("--proof", a.proof, "Proof PDF or pretokenized text")->required();
  cmp->add_option("--publisher", a.publisher, "Profile name or profile JSON path")->required();
  cmp->add_option("--proof-format", a.proof_format, "auto, pdf or text")
      ->check(CLI::IsMember({"auto", "pdf", "text"}))
      ->capture_default_str();
  cmp->add_option("--reports", a.reports, "Report directory");
  cmp->add_option("--synonyms", a.synonyms, "Synonym database JSON");
  cmp->add_option("--thresholds", a.thresholds, "Matching thresholds JSON");
  cmp->add_option("--agencies", a.agencies, "Funding agency list JSON");
  cmp->add_option("--document", a.document, "Document label stored in the report");
  cmp->add_option("--date", a.date, "Report creation date YYYY-MM-DD (default: today)");

  auto* wf = app.add_subcommand("workflow", "Drive a workflow instance");
  wf->require_subcommand(1);
  auto* wf_init = wf->add_subcommand("init", "Start an instance");
  wf_init->add_option("--workflow", a.wf_name, "Definition name or JSON path")->capture_default_str();
  wf_init->add_option("--id", a.wf_id, "Instance id")->required();
  CLI::App* wf_steps[2];
  wf_steps[0] = wf->add_subcommand("save", "Store field values without moving");
  wf_steps[1] = wf->add_subcommand("proceed", "Store field values and advance");
  for (auto* s : wf_steps) {
    s->add_option("--id", a.wf_id, "Instance id")->required();
    s->add_option("--actor", a.actor, "Actor name")->required();
    s->add_option("--roles", a.roles, "Comma-separated roles")->required();
    s->add_option("--data", a.data, "JSON object or @file");
  }
  auto* wf_show = wf->add_subcommand("show", "Print an instance after verifying its history");
  wf_show->add_option("--id", a.wf_id, "Instance id")->required();

  auto* serve = app.add_subcommand("serve", "Serve reports and the synonym API over HTTP");
  serve->add_option("--reports", a.reports, "Report directory");
  serve->add_option("--synonyms", a.synonyms, "Synonym database JSON");
  serve->add_option("--static", a.static_dir, "Static UI directory served at /");
  serve->add_option("--host", a.host, "Bind address")->capture_default_str();
  serve->add_option("--port", a.port, "Port (0 picks a free one)")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << PUBFORGE_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    CliConfig cfg;
    if (!a.config.empty())
      cfg = load_config(a.config);
    else if (const char* env = std::getenv("PUBFORGE_CONFIG"); env && *env)
      cfg = load_config(env);
    else
      cfg = default_config();

    if (*check) return cmd_check(cfg, a, out);
    if (*flat) return cmd_flatten(a, out);
    if (*snap) return cmd_snapshot(cfg, a, out);
    if (*render) return cmd_render(a, out, err);
    if (*ack) return cmd_ack(cfg, a, out, err);
    if (*cmp) return cmd_compare(cfg, a, out, err);
    if (*wf_init) return cmd_workflow_init(cfg, a, out);
    if (*wf_steps[0]) return cmd_workflow_step(cfg, a, false, out);
    if (*wf_steps[1]) return cmd_workflow_step(cfg, a, true, out);
    if (*wf_show) return cmd_workflow_show(cfg, a, out);
    if (*serve) return cmd_serve(cfg, a, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  err << app.help();
  return kExitUsage;
}

} // namespace pubforge::cli
