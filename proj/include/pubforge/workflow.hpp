#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pubforge/common.hpp"

namespace pubforge::workflow {

using json = nlohmann::json;

/// Guard expression over step data.
///
///   expr    := or
///   or      := and ('||' and)*
///   and     := unary ('&&' unary)*
///   unary   := '!' unary | primary
///   primary := '(' expr ')' | 'present' '(' field ')' | operand (('=='|'!=') operand)?
///   operand := field | 'string' | "string" | number | true | false
///   field   := name ('.' name)?        (bare names read the current step)
class Guard {
public:
  struct Node;

  Guard() = default;
  /// Throws Error(parse) with the column of the offending token.
  static Guard parse(std::string_view source);

  /// `data` maps node id -> object of field values.
  bool evaluate(const json& data, const std::string& current_node) const;
  bool empty() const { return !root_; }
  /// Node ids named by qualified field references.
  std::vector<std::string> referenced_nodes() const;
  const std::string& source() const { return source_; }

private:
  std::shared_ptr<const Node> root_;
  std::string source_;
};

enum class FieldType { string, text, date, list, boolean, integer };

struct FieldSpec {
  std::string name;
  std::string label;
  FieldType type = FieldType::string;
  bool mandatory = false;
  std::vector<std::string> choices;
  std::string pattern; ///< ECMAScript regex for string fields; empty = any
};

struct ActionSpec {
  std::string kind;
  json params = json::object();
};

struct Step {
  std::string id;
  std::string title;
  std::vector<FieldSpec> fields;
  std::vector<std::string> roles_allowed;
  std::vector<ActionSpec> actions_on_proceed;
  std::optional<std::string> notification;

  const FieldSpec* field(std::string_view name) const;
};

struct Edge {
  std::string from;
  std::string to;
  Guard guard; ///< empty guard is always true
};

struct NotificationTemplate {
  std::string id;
  std::vector<std::string> recipients; ///< "role:X", "field:node.field" or a literal address
  std::string subject;
  std::string body;
};

struct WorkflowDef {
  std::string name;
  std::string start;
  std::vector<Step> nodes;
  std::vector<Edge> edges;
  std::vector<NotificationTemplate> templates;
  /// role -> "node.field" holding that role's addresses
  std::map<std::string, std::string> role_fields;

  const Step& node(std::string_view id) const;
  const NotificationTemplate& notification_template(std::string_view id) const;
  std::vector<const Edge*> outgoing(std::string_view id) const;
};

/// Action kinds load_workflow accepts.
const std::vector<std::string>& builtin_actions();

/// Validates ids, edges, templates, action kinds and guards; errors carry
/// the JSON path ("edges[2].to").
WorkflowDef load_workflow(std::string_view json_text);

struct Actor {
  std::string name;
  std::vector<std::string> roles;
};

enum class Verb { save, proceed };
std::string to_string(Verb v);

struct HistoryEntry {
  std::string node;
  std::string actor;
  std::vector<std::string> roles;
  std::string timestamp;
  Verb verb = Verb::save;
  json data = json::object();
  std::string to; ///< successor for proceed entries
};

struct WorkflowInstance {
  std::string workflow;
  std::string id;
  std::string current_node;
  json step_data = json::object(); ///< node id -> {field: value}
  std::vector<HistoryEntry> history;
};

WorkflowInstance start_instance(const WorkflowDef& def, std::string id);
std::string write_instance(const WorkflowInstance& instance);
WorkflowInstance parse_instance(std::string_view json_text);

struct Effect {
  std::string action;
  json detail = json::object();
};

struct Message {
  std::string template_id;
  std::vector<std::string> recipients;
  std::string subject;
  std::string body;

  json to_json() const;
};

struct RenderContext {
  std::map<std::string, std::string> vars;
  std::map<std::string, std::vector<std::string>> roles;
  std::map<std::string, std::vector<std::string>> fields; ///< "node.field" -> values
};

/// Throws Error(validation) naming the first unresolved placeholder or role.
Message render_notification(const NotificationTemplate& tpl, const RenderContext& context);

/// Side-effect sinks. With dry_run set, actions and notifications produce
/// their records but touch nothing on disk.
struct Environment {
  std::filesystem::path workspace;
  std::filesystem::path outbox;
  std::filesystem::path template_dir;
  std::filesystem::path member_db;
  std::filesystem::path agencies;
  std::filesystem::path ack_template;
  std::function<std::string()> clock;
  bool dry_run = false;
};

/// ISO-8601 UTC timestamp from the system clock.
std::string system_timestamp();

/// Merges `data` into the current step; mandatory fields may be missing.
WorkflowInstance save(const WorkflowDef& def, WorkflowInstance instance, const Actor& actor, const json& data,
                      const Environment& env);

struct ProceedResult {
  WorkflowInstance instance;
  std::vector<Effect> effects;
};

/// Merges, checks mandatory fields, follows the single edge whose guard
/// holds, runs the step's actions and renders its notification.
ProceedResult proceed(const WorkflowDef& def, WorkflowInstance instance, const Actor& actor, const json& data,
                      const Environment& env);

/// Re-applies the history of `recorded` to a fresh instance (dry run).
WorkflowInstance replay(const WorkflowDef& def, const WorkflowInstance& recorded);

/// Instances persisted as <dir>/<id>.json. update() holds an exclusive
/// advisory lock on <dir>/<id>.lock, so writers in any thread or process
/// are serialized.
class InstanceStore {
public:
  explicit InstanceStore(std::filesystem::path dir);

  bool exists(const std::string& id) const;
  WorkflowInstance load(const std::string& id) const;
  /// Throws Error(conflict) when the id is taken.
  void create(const WorkflowInstance& instance);
  WorkflowInstance update(const std::string& id,
                          const std::function<WorkflowInstance(WorkflowInstance)>& fn);

private:
  std::filesystem::path path_of(const std::string& id) const;
  std::filesystem::path dir_;
};

/// Copies a template tree, replacing {{ref_code}} in file names and in the
/// contents of text files.
std::vector<std::string> instantiate_template(const std::filesystem::path& template_dir,
                                              const std::filesystem::path& dest, const std::string& ref_code);

} // namespace pubforge::workflow
