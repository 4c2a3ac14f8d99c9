#include "pubforge/workflow.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <regex>
#include <set>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "pubforge/authorlist.hpp"

namespace pubforge::workflow {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- guards

struct Guard::Node {
  enum class Op { literal, field, present, eq, ne, and_, or_, not_ } op;
  json value;        // literal
  std::string node;  // field / present; empty = current node
  std::string field;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using GuardNode = std::shared_ptr<const Guard::Node>;

struct Token {
  enum class Type { name, string, number, op, end } type;
  std::string text;
  std::size_t column;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::parse, "guard column " + std::to_string(i + 1) + ": " + what);
  };
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '.')) ++i;
      out.push_back({Token::Type::name, std::string(s.substr(start, i - start)), start});
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '-' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      ++i;
      while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
      out.push_back({Token::Type::number, std::string(s.substr(start, i - start)), start});
    } else if (c == '\'' || c == '"') {
      ++i;
      std::string text;
      while (i < s.size() && s[i] != c) {
        if (s[i] == '\\' && i + 1 < s.size()) ++i;
        text += s[i++];
      }
      if (i >= s.size()) {
        i = start;
        fail("unterminated string");
      }
      ++i;
      out.push_back({Token::Type::string, text, start});
    } else {
      auto two = s.substr(i, 2);
      if (two == "==" || two == "!=" || two == "&&" || two == "||") {
        out.push_back({Token::Type::op, std::string(two), start});
        i += 2;
      } else if (c == '!' || c == '(' || c == ')') {
        out.push_back({Token::Type::op, std::string(1, c), start});
        ++i;
      } else {
        fail(std::string("unexpected character '") + c + "'");
      }
    }
  }
  out.push_back({Token::Type::end, "", s.size()});
  return out;
}

class GuardParser {
public:
  explicit GuardParser(std::vector<Token> tokens) : t_(std::move(tokens)) {}

  GuardNode parse() {
    auto n = parse_or();
    if (peek().type != Token::Type::end) fail("unexpected '" + peek().text + "'");
    return n;
  }

private:
  const Token& peek() const { return t_[pos_]; }
  bool accept_op(std::string_view op) {
    if (peek().type == Token::Type::op && peek().text == op) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::parse, "guard column " + std::to_string(peek().column + 1) + ": " + what);
  }

  static GuardNode binary(Guard::Node::Op op, GuardNode l, GuardNode r) {
    auto n = std::make_shared<Guard::Node>();
    n->op = op;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
  }

  GuardNode parse_or() {
    auto l = parse_and();
    while (accept_op("||")) l = binary(Guard::Node::Op::or_, l, parse_and());
    return l;
  }
  GuardNode parse_and() {
    auto l = parse_unary();
    while (accept_op("&&")) l = binary(Guard::Node::Op::and_, l, parse_unary());
    return l;
  }
  GuardNode parse_unary() {
    if (accept_op("!")) return binary(Guard::Node::Op::not_, parse_unary(), nullptr);
    return parse_primary();
  }
  GuardNode parse_primary() {
    if (accept_op("(")) {
      auto n = parse_or();
      if (!accept_op(")")) fail("expected ')'");
      return n;
    }
    if (peek().type == Token::Type::name && peek().text == "present") {
      ++pos_;
      if (!accept_op("(")) fail("expected '(' after present");
      if (peek().type != Token::Type::name) fail("present() takes a field name");
      auto n = field_node(t_[pos_++].text);
      auto p = std::make_shared<Guard::Node>(*n);
      p->op = Guard::Node::Op::present;
      if (!accept_op(")")) fail("expected ')'");
      return p;
    }
    auto l = parse_operand();
    if (accept_op("==")) return binary(Guard::Node::Op::eq, l, parse_operand());
    if (accept_op("!=")) return binary(Guard::Node::Op::ne, l, parse_operand());
    return l;
  }
  GuardNode parse_operand() {
    const Token& tok = peek();
    auto n = std::make_shared<Guard::Node>();
    n->op = Guard::Node::Op::literal;
    switch (tok.type) {
      case Token::Type::string: n->value = tok.text; break;
      case Token::Type::number:
        try {
          n->value = json::parse(tok.text);
        } catch (const json::exception&) {
          fail("bad number '" + tok.text + "'");
        }
        break;
      case Token::Type::name:
        if (tok.text == "true" || tok.text == "false") {
          n->value = tok.text == "true";
        } else {
          ++pos_;
          return field_node(tok.text);
        }
        break;
      default: fail(tok.type == Token::Type::end ? "unexpected end of expression" : "unexpected '" + tok.text + "'");
    }
    ++pos_;
    return n;
  }
  GuardNode field_node(const std::string& name) const {
    auto n = std::make_shared<Guard::Node>();
    n->op = Guard::Node::Op::field;
    auto dot = name.find('.');
    if (dot == std::string::npos) {
      n->field = name;
    } else {
      n->node = name.substr(0, dot);
      n->field = name.substr(dot + 1);
      if (n->node.empty() || n->field.empty() || n->field.find('.') != std::string::npos)
        fail("bad field reference '" + name + "'");
    }
    return n;
  }

  std::vector<Token> t_;
  std::size_t pos_ = 0;
};

json lookup(const json& data, const std::string& node, const std::string& field) {
  auto n = data.find(node);
  if (n == data.end() || !n->is_object()) return nullptr;
  auto f = n->find(field);
  return f == n->end() ? json(nullptr) : *f;
}

json eval_value(const Guard::Node& n, const json& data, const std::string& current) {
  switch (n.op) {
    case Guard::Node::Op::literal: return n.value;
    case Guard::Node::Op::field: return lookup(data, n.node.empty() ? current : n.node, n.field);
    default: break;
  }
  bool b = false;
  switch (n.op) {
    case Guard::Node::Op::present: {
      auto v = lookup(data, n.node.empty() ? current : n.node, n.field);
      b = !v.is_null() && !(v.is_string() && v.get<std::string>().empty()) && !(v.is_array() && v.empty());
      break;
    }
    case Guard::Node::Op::eq: b = eval_value(*n.lhs, data, current) == eval_value(*n.rhs, data, current); break;
    case Guard::Node::Op::ne: b = eval_value(*n.lhs, data, current) != eval_value(*n.rhs, data, current); break;
    case Guard::Node::Op::and_: {
      auto l = eval_value(*n.lhs, data, current);
      b = l.is_boolean() && l.get<bool>();
      if (b) {
        auto r = eval_value(*n.rhs, data, current);
        b = r.is_boolean() && r.get<bool>();
      }
      break;
    }
    case Guard::Node::Op::or_: {
      auto l = eval_value(*n.lhs, data, current);
      b = l.is_boolean() && l.get<bool>();
      if (!b) {
        auto r = eval_value(*n.rhs, data, current);
        b = r.is_boolean() && r.get<bool>();
      }
      break;
    }
    case Guard::Node::Op::not_: {
      auto v = eval_value(*n.lhs, data, current);
      b = !(v.is_boolean() && v.get<bool>());
      break;
    }
    default: break;
  }
  return b;
}

void collect_fields(const Guard::Node* n, std::vector<const Guard::Node*>& out) {
  if (!n) return;
  if (n->op == Guard::Node::Op::field || n->op == Guard::Node::Op::present) out.push_back(n);
  collect_fields(n->lhs.get(), out);
  collect_fields(n->rhs.get(), out);
}

} // namespace

Guard Guard::parse(std::string_view source) {
  Guard g;
  g.source_ = trim(source);
  if (!g.source_.empty()) g.root_ = GuardParser(tokenize(g.source_)).parse();
  return g;
}

std::vector<std::string> Guard::referenced_nodes() const {
  std::vector<const Node*> fields;
  collect_fields(root_.get(), fields);
  std::vector<std::string> out;
  for (const auto* f : fields)
    if (!f->node.empty() && std::find(out.begin(), out.end(), f->node) == out.end()) out.push_back(f->node);
  return out;
}

bool Guard::evaluate(const json& data, const std::string& current_node) const {
  if (!root_) return true;
  auto v = eval_value(*root_, data, current_node);
  return v.is_boolean() && v.get<bool>();
}

// ---------------------------------------------------------------- definition

const FieldSpec* Step::field(std::string_view name) const {
  for (const auto& f : fields)
    if (f.name == name) return &f;
  return nullptr;
}

const Step& WorkflowDef::node(std::string_view id) const {
  for (const auto& n : nodes)
    if (n.id == id) return n;
  throw Error(ErrorKind::not_found, "unknown node '" + std::string(id) + "'");
}

const NotificationTemplate& WorkflowDef::notification_template(std::string_view id) const {
  for (const auto& t : templates)
    if (t.id == id) return t;
  throw Error(ErrorKind::not_found, "unknown notification template '" + std::string(id) + "'");
}

std::vector<const Edge*> WorkflowDef::outgoing(std::string_view id) const {
  std::vector<const Edge*> out;
  for (const auto& e : edges)
    if (e.from == id) out.push_back(&e);
  return out;
}

const std::vector<std::string>& builtin_actions() {
  static const std::vector<std::string> kinds{"create_group", "create_repository", "push_authorlist"};
  return kinds;
}

namespace {

[[noreturn]] void load_error(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::validation, path + ": " + what);
}

std::string req_string(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string() || it->get<std::string>().empty())
    load_error(path + "." + key, "expected a non-empty string");
  return it->get<std::string>();
}

std::vector<std::string> opt_strings(const json& obj, const char* key, const std::string& path) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end()) return out;
  if (!it->is_array()) load_error(path + "." + key, "expected an array of strings");
  for (std::size_t i = 0; i < it->size(); ++i) {
    if (!(*it)[i].is_string()) load_error(path + "." + key + "[" + std::to_string(i) + "]", "expected a string");
    out.push_back((*it)[i].get<std::string>());
  }
  return out;
}

FieldType parse_field_type(const std::string& s, const std::string& path) {
  static const std::map<std::string, FieldType> kTypes{
      {"string", FieldType::string}, {"text", FieldType::text},       {"date", FieldType::date},
      {"list", FieldType::list},     {"boolean", FieldType::boolean}, {"integer", FieldType::integer}};
  auto it = kTypes.find(s);
  if (it == kTypes.end()) load_error(path, "unknown field type '" + s + "'");
  return it->second;
}

} // namespace

WorkflowDef load_workflow(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string("workflow JSON: ") + e.what());
  }
  if (!doc.is_object()) load_error("$", "expected an object");

  WorkflowDef def;
  def.name = req_string(doc, "name", "$");

  std::set<std::string> template_ids;
  if (auto t = doc.find("templates"); t != doc.end()) {
    if (!t->is_array()) load_error("templates", "expected an array");
    for (std::size_t i = 0; i < t->size(); ++i) {
      std::string path = "templates[" + std::to_string(i) + "]";
      const auto& j = (*t)[i];
      if (!j.is_object()) load_error(path, "expected an object");
      NotificationTemplate tpl;
      tpl.id = req_string(j, "id", path);
      tpl.recipients = opt_strings(j, "recipients", path);
      tpl.subject = req_string(j, "subject", path);
      tpl.body = j.value("body", "");
      if (!template_ids.insert(tpl.id).second) load_error(path + ".id", "duplicate template id '" + tpl.id + "'");
      def.templates.push_back(std::move(tpl));
    }
  }

  auto nodes = doc.find("nodes");
  if (nodes == doc.end() || !nodes->is_array() || nodes->empty()) load_error("nodes", "expected a non-empty array");
  std::set<std::string> node_ids;
  const auto& kinds = builtin_actions();
  for (std::size_t i = 0; i < nodes->size(); ++i) {
    std::string path = "nodes[" + std::to_string(i) + "]";
    const auto& j = (*nodes)[i];
    if (!j.is_object()) load_error(path, "expected an object");
    Step step;
    step.id = req_string(j, "id", path);
    if (!node_ids.insert(step.id).second) load_error(path + ".id", "duplicate node id '" + step.id + "'");
    step.title = j.value("title", step.id);
    step.roles_allowed = opt_strings(j, "roles_allowed", path);
    if (auto f = j.find("fields"); f != j.end()) {
      if (!f->is_array()) load_error(path + ".fields", "expected an array");
      for (std::size_t k = 0; k < f->size(); ++k) {
        std::string fpath = path + ".fields[" + std::to_string(k) + "]";
        const auto& fj = (*f)[k];
        if (!fj.is_object()) load_error(fpath, "expected an object");
        FieldSpec spec;
        spec.name = req_string(fj, "name", fpath);
        if (step.field(spec.name)) load_error(fpath + ".name", "duplicate field '" + spec.name + "'");
        spec.label = fj.value("label", spec.name);
        spec.type = parse_field_type(fj.value("type", "string"), fpath + ".type");
        spec.mandatory = fj.value("mandatory", false);
        spec.choices = opt_strings(fj, "choices", fpath);
        spec.pattern = fj.value("pattern", "");
        if (!spec.pattern.empty()) {
          try {
            std::regex re(spec.pattern);
          } catch (const std::regex_error&) {
            load_error(fpath + ".pattern", "invalid regular expression");
          }
        }
        step.fields.push_back(std::move(spec));
      }
    }
    if (auto a = j.find("actions_on_proceed"); a != j.end()) {
      if (!a->is_array()) load_error(path + ".actions_on_proceed", "expected an array");
      for (std::size_t k = 0; k < a->size(); ++k) {
        std::string apath = path + ".actions_on_proceed[" + std::to_string(k) + "]";
        const auto& aj = (*a)[k];
        if (!aj.is_object()) load_error(apath, "expected an object");
        ActionSpec act;
        act.kind = req_string(aj, "kind", apath);
        if (std::find(kinds.begin(), kinds.end(), act.kind) == kinds.end())
          load_error(apath + ".kind", "unknown action kind '" + act.kind + "'");
        act.params = aj.value("params", json::object());
        step.actions_on_proceed.push_back(std::move(act));
      }
    }
    if (auto n = j.find("notification"); n != j.end() && !n->is_null()) {
      if (!n->is_string()) load_error(path + ".notification", "expected a template id");
      step.notification = n->get<std::string>();
      if (!template_ids.count(*step.notification))
        load_error(path + ".notification", "unknown template id '" + *step.notification + "'");
    }
    def.nodes.push_back(std::move(step));
  }

  def.start = doc.value("start", def.nodes.front().id);
  if (!node_ids.count(def.start)) load_error("start", "unknown node '" + def.start + "'");

  if (auto e = doc.find("edges"); e != doc.end()) {
    if (!e->is_array()) load_error("edges", "expected an array");
    for (std::size_t i = 0; i < e->size(); ++i) {
      std::string path = "edges[" + std::to_string(i) + "]";
      const auto& j = (*e)[i];
      if (!j.is_object()) load_error(path, "expected an object");
      Edge edge;
      edge.from = req_string(j, "from", path);
      edge.to = req_string(j, "to", path);
      if (!node_ids.count(edge.from)) load_error(path + ".from", "unknown node '" + edge.from + "'");
      if (!node_ids.count(edge.to)) load_error(path + ".to", "unknown node '" + edge.to + "'");
      if (auto g = j.find("guard"); g != j.end() && !g->is_null()) {
        if (!g->is_string()) load_error(path + ".guard", "expected a string");
        try {
          edge.guard = Guard::parse(g->get<std::string>());
        } catch (const Error& err) {
          load_error(path + ".guard", err.what());
        }
        for (const auto& n : edge.guard.referenced_nodes())
          if (!node_ids.count(n)) load_error(path + ".guard", "unknown node '" + n + "'");
      }
      def.edges.push_back(std::move(edge));
    }
  }

  if (auto r = doc.find("roles"); r != doc.end()) {
    if (!r->is_object()) load_error("roles", "expected an object");
    for (const auto& [role, ref] : r->items()) {
      if (!ref.is_string()) load_error("roles." + role, "expected \"node.field\"");
      auto s = ref.get<std::string>();
      auto dot = s.find('.');
      if (dot == std::string::npos || !node_ids.count(s.substr(0, dot)))
        load_error("roles." + role, "unknown field reference '" + s + "'");
      def.role_fields[role] = s;
    }
  }
  for (std::size_t i = 0; i < def.templates.size(); ++i)
    for (std::size_t k = 0; k < def.templates[i].recipients.size(); ++k) {
      const auto& rc = def.templates[i].recipients[k];
      if (starts_with(rc, "role:") && !def.role_fields.count(rc.substr(5)))
        load_error("templates[" + std::to_string(i) + "].recipients[" + std::to_string(k) + "]",
                   "unknown role '" + rc.substr(5) + "'");
    }
  return def;
}

// ---------------------------------------------------------------- instances

std::string to_string(Verb v) { return v == Verb::save ? "save" : "proceed"; }

WorkflowInstance start_instance(const WorkflowDef& def, std::string id) {
  if (id.empty()) throw Error(ErrorKind::validation, "instance id must not be empty");
  WorkflowInstance inst;
  inst.workflow = def.name;
  inst.id = std::move(id);
  inst.current_node = def.start;
  return inst;
}

std::string write_instance(const WorkflowInstance& instance) {
  nlohmann::ordered_json j;
  j["workflow"] = instance.workflow;
  j["id"] = instance.id;
  j["current_node"] = instance.current_node;
  j["step_data"] = instance.step_data;
  j["history"] = nlohmann::ordered_json::array();
  for (const auto& h : instance.history) {
    nlohmann::ordered_json e;
    e["node"] = h.node;
    e["actor"] = h.actor;
    e["roles"] = h.roles;
    e["timestamp"] = h.timestamp;
    e["verb"] = to_string(h.verb);
    e["data"] = h.data;
    if (h.verb == Verb::proceed) e["to"] = h.to;
    j["history"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

WorkflowInstance parse_instance(std::string_view json_text) {
  try {
    auto j = json::parse(json_text);
    WorkflowInstance inst;
    inst.workflow = j.at("workflow").get<std::string>();
    inst.id = j.at("id").get<std::string>();
    inst.current_node = j.at("current_node").get<std::string>();
    inst.step_data = j.value("step_data", json::object());
    for (const auto& e : j.value("history", json::array())) {
      HistoryEntry h;
      h.node = e.at("node").get<std::string>();
      h.actor = e.at("actor").get<std::string>();
      h.roles = e.value("roles", std::vector<std::string>{});
      h.timestamp = e.at("timestamp").get<std::string>();
      auto verb = e.at("verb").get<std::string>();
      if (verb != "save" && verb != "proceed") throw Error(ErrorKind::parse, "unknown verb '" + verb + "'");
      h.verb = verb == "save" ? Verb::save : Verb::proceed;
      h.data = e.value("data", json::object());
      h.to = e.value("to", "");
      inst.history.push_back(std::move(h));
    }
    return inst;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("workflow instance: ") + e.what());
  }
}

json Message::to_json() const {
  return json{{"template", template_id}, {"recipients", recipients}, {"subject", subject}, {"body", body}};
}

// ---------------------------------------------------------------- notifications

namespace {

const std::regex kPlaceholder(R"(\{\{\s*([A-Za-z0-9_.]+)\s*\}\})");

std::string substitute(const std::string& text, const std::map<std::string, std::string>& vars) {
  std::string out;
  auto begin = std::sregex_iterator(text.begin(), text.end(), kPlaceholder);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto v = vars.find(m[1].str());
    if (v == vars.end()) throw Error(ErrorKind::validation, "unresolved placeholder '" + m[1].str() + "'");
    out.append(text, last, m.position(0) - last);
    out += v->second;
    last = m.position(0) + m.length(0);
  }
  out.append(text, last);
  return out;
}

} // namespace

Message render_notification(const NotificationTemplate& tpl, const RenderContext& context) {
  Message msg;
  msg.template_id = tpl.id;
  msg.subject = substitute(tpl.subject, context.vars);
  msg.body = substitute(tpl.body, context.vars);
  for (const auto& r : tpl.recipients) {
    const std::map<std::string, std::vector<std::string>>* source = nullptr;
    std::string key;
    if (starts_with(r, "role:")) {
      source = &context.roles;
      key = r.substr(5);
    } else if (starts_with(r, "field:")) {
      source = &context.fields;
      key = r.substr(6);
    }
    if (!source) {
      if (std::find(msg.recipients.begin(), msg.recipients.end(), r) == msg.recipients.end()) msg.recipients.push_back(r);
      continue;
    }
    auto it = source->find(key);
    if (it == source->end() || it->second.empty())
      throw Error(ErrorKind::validation, "recipient '" + r + "' resolves to no address");
    for (const auto& a : it->second)
      if (std::find(msg.recipients.begin(), msg.recipients.end(), a) == msg.recipients.end())
        msg.recipients.push_back(a);
  }
  return msg;
}

// ---------------------------------------------------------------- save / proceed

std::string system_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

std::string field_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (const auto& x : v) {
      if (!out.empty()) out += ", ";
      out += field_text(x);
    }
    return out;
  }
  return v.dump();
}

std::vector<std::string> field_list(const json& v) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& x : v) out.push_back(field_text(x));
  } else if (v.is_string() && !v.get<std::string>().empty()) {
    out.push_back(v.get<std::string>());
  }
  return out;
}

void check_role(const Step& step, const Actor& actor) {
  for (const auto& r : actor.roles)
    if (std::find(step.roles_allowed.begin(), step.roles_allowed.end(), r) != step.roles_allowed.end()) return;
  std::string allowed;
  for (const auto& r : step.roles_allowed) allowed += (allowed.empty() ? "" : ", ") + r;
  throw Error(ErrorKind::permission, "actor '" + actor.name + "' lacks a role allowed at '" + step.id + "' (" +
                                         (allowed.empty() ? "none" : allowed) + ")");
}

std::string type_problem(const FieldSpec& f, const json& v) {
  switch (f.type) {
    case FieldType::string:
    case FieldType::text:
      if (!v.is_string()) return "expected a string";
      if (!f.choices.empty() &&
          std::find(f.choices.begin(), f.choices.end(), v.get<std::string>()) == f.choices.end())
        return "'" + v.get<std::string>() + "' is not one of the allowed choices";
      if (!f.pattern.empty() && !std::regex_match(v.get<std::string>(), std::regex(f.pattern)))
        return "does not match /" + f.pattern + "/";
      return {};
    case FieldType::date:
      if (!v.is_string()) return "expected a YYYY-MM-DD date";
      try {
        parse_date(v.get<std::string>());
      } catch (const Error&) {
        return "expected a YYYY-MM-DD date";
      }
      return {};
    case FieldType::list:
      if (!v.is_array()) return "expected a list of strings";
      for (const auto& x : v)
        if (!x.is_string()) return "expected a list of strings";
      return {};
    case FieldType::boolean: return v.is_boolean() ? "" : "expected true or false";
    case FieldType::integer: return v.is_number_integer() ? "" : "expected an integer";
  }
  return {};
}

void validate_data(const Step& step, const json& data) {
  if (!data.is_object()) throw Error(ErrorKind::validation, "step data must be an object");
  std::vector<std::string> problems;
  for (const auto& [key, value] : data.items()) {
    const FieldSpec* f = step.field(key);
    if (!f) {
      problems.push_back(key + ": unknown field");
      continue;
    }
    if (value.is_null()) continue;
    if (auto p = type_problem(*f, value); !p.empty()) problems.push_back(key + ": " + p);
  }
  if (problems.empty()) return;
  std::string msg = "invalid fields at '" + step.id + "': ";
  for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
  throw Error(ErrorKind::validation, msg);
}

std::string now(const Environment& env) { return env.clock ? env.clock() : system_timestamp(); }

void merge(WorkflowInstance& inst, const json& data) {
  auto& slot = inst.step_data[inst.current_node];
  if (!slot.is_object()) slot = json::object();
  for (const auto& [key, value] : data.items()) {
    if (value.is_null())
      slot.erase(key);
    else
      slot[key] = value;
  }
}

RenderContext render_context(const WorkflowDef& def, const WorkflowInstance& inst, const std::string& next) {
  RenderContext ctx;
  for (const auto& [node, fields] : inst.step_data.items()) {
    if (!fields.is_object()) continue;
    for (const auto& [name, value] : fields.items()) {
      ctx.vars[node + "." + name] = field_text(value);
      ctx.fields[node + "." + name] = field_list(value);
      if (node != inst.current_node) ctx.vars.emplace(name, field_text(value));
    }
  }
  if (auto cur = inst.step_data.find(inst.current_node); cur != inst.step_data.end() && cur->is_object())
    for (const auto& [name, value] : cur->items()) ctx.vars[name] = field_text(value);
  ctx.vars["workflow"] = def.name;
  ctx.vars["instance"] = inst.id;
  ctx.vars["node"] = inst.current_node;
  ctx.vars["node_title"] = def.node(inst.current_node).title;
  ctx.vars["next_node"] = next;
  ctx.vars["next_title"] = def.node(next).title;
  for (const auto& [role, ref] : def.role_fields) {
    auto it = ctx.fields.find(ref);
    if (it != ctx.fields.end()) ctx.roles[role] = it->second;
  }
  return ctx;
}

json field_ref(const WorkflowInstance& inst, const std::string& ref) {
  auto dot = ref.find('.');
  if (dot == std::string::npos) return lookup(inst.step_data, inst.current_node, ref);
  return lookup(inst.step_data, ref.substr(0, dot), ref.substr(dot + 1));
}

std::string slugify(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!out.empty() && out.back() != '-')
      out += '-';
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "group" : out;
}

std::string ref_code_of(const WorkflowInstance& inst, const json& params) {
  auto ref = params.value("ref_code_field", "analysis_submission.ref_code");
  auto v = field_ref(inst, ref);
  if (!v.is_string() || v.get<std::string>().empty())
    throw Error(ErrorKind::validation, "reference code field '" + ref + "' is empty");
  return v.get<std::string>();
}

Effect create_group(const WorkflowInstance& inst, const json& params, const Environment& env) {
  std::string name = params.value("name", "");
  if (name.empty()) throw Error(ErrorKind::validation, "create_group needs params.name");
  std::vector<std::string> members;
  if (params.contains("members_field")) members = field_list(field_ref(inst, params["members_field"].get<std::string>()));
  auto rel = fs::path("groups") / (slugify(name) + ".json");
  Effect e{"create_group", {{"name", name}, {"members", members}, {"path", rel.generic_string()}}};
  if (!env.dry_run)
    write_file_atomic(env.workspace / rel, json{{"name", name}, {"members", members}}.dump(2) + "\n");
  return e;
}

Effect create_repository(const WorkflowInstance& inst, const json& params, const Environment& env) {
  std::string repo = ref_code_of(inst, params) + params.value("suffix", "");
  Effect e{"create_repository", {{"repository", repo}, {"path", repo}}};
  if (!env.dry_run) {
    if (env.template_dir.empty()) throw Error(ErrorKind::validation, "create_repository needs a template directory");
    if (fs::exists(env.workspace / repo))
      throw Error(ErrorKind::conflict, "repository '" + repo + "' already exists in the workspace");
    e.detail["files"] = instantiate_template(env.template_dir, env.workspace / repo, ref_code_of(inst, params));
  }
  return e;
}

Effect push_authorlist(const WorkflowInstance& inst, const json& params, const Environment& env) {
  std::string ref_code = ref_code_of(inst, params);
  std::string repo = ref_code + params.value("suffix", "");
  Date ref_date = today();
  if (params.contains("date_field")) {
    auto v = field_ref(inst, params["date_field"].get<std::string>());
    if (!v.is_string()) throw Error(ErrorKind::validation, "push_authorlist date field is empty");
    ref_date = parse_date(v.get<std::string>());
  }
  fs::path dir = env.workspace / repo;
  bool existed = fs::exists(dir / "authorlist.xml");
  Effect e{"push_authorlist",
           {{"repository", repo}, {"ref_date", format_date(ref_date)}, {"status", existed ? "updated" : "added"}}};
  if (env.dry_run) return e;
  if (env.member_db.empty()) throw Error(ErrorKind::validation, "push_authorlist needs a member database");
  auto db = authorlist::parse_member_db(read_file(env.member_db));
  std::map<std::string, std::string> header{{std::string(authorlist::kRefCodeKey), ref_code}};
  if (params.contains("title_field")) {
    auto t = field_ref(inst, params["title_field"].get<std::string>());
    if (t.is_string()) header[std::string(authorlist::kTitleKey)] = t.get<std::string>();
  }
  auto list = authorlist::snapshot_author_list(db, ref_date, std::move(header));
  write_file_atomic(dir / "authorlist.xml", authorlist::render_author_list(list, authorlist::Format::xml));
  write_file_atomic(dir / "authorlist.tex", authorlist::render_author_list(list, authorlist::Format::tex));
  json files{"authorlist.xml", "authorlist.tex"};
  if (!env.agencies.empty() && !env.ack_template.empty()) {
    auto ack = authorlist::render_acknowledgements(authorlist::parse_agencies(read_file(env.agencies)), ref_date,
                                                   read_file(env.ack_template));
    write_file_atomic(dir / "acknowledgements.tex", ack.text);
    files.push_back("acknowledgements.tex");
    e.detail["warnings"] = ack.warnings;
  }
  e.detail["files"] = files;
  e.detail["authors"] = list.authors.size();
  return e;
}

Effect run_action(const ActionSpec& act, const WorkflowInstance& inst, const Environment& env) {
  if (act.kind == "create_group") return create_group(inst, act.params, env);
  if (act.kind == "create_repository") return create_repository(inst, act.params, env);
  if (act.kind == "push_authorlist") return push_authorlist(inst, act.params, env);
  throw Error(ErrorKind::unsupported, "unknown action kind '" + act.kind + "'");
}

void append_effect_log(const Environment& env, const WorkflowInstance& inst, const std::string& node,
                       const std::string& timestamp, const std::vector<Effect>& effects) {
  auto path = env.workspace / "effects.json";
  json log = json::array();
  if (fs::exists(path)) {
    try {
      log = json::parse(read_file(path));
    } catch (const json::exception&) {
      throw Error(ErrorKind::parse, "corrupt effect log " + path.string());
    }
  }
  for (const auto& e : effects)
    log.push_back({{"instance", inst.id}, {"node", node}, {"timestamp", timestamp}, {"action", e.action},
                   {"detail", e.detail}});
  write_file_atomic(path, log.dump(2) + "\n");
}

HistoryEntry history_entry(const WorkflowInstance& inst, const Actor& actor, Verb verb, const json& data,
                           const Environment& env) {
  HistoryEntry h;
  h.node = inst.current_node;
  h.actor = actor.name;
  h.roles = actor.roles;
  h.timestamp = now(env);
  h.verb = verb;
  h.data = data;
  return h;
}

} // namespace

WorkflowInstance save(const WorkflowDef& def, WorkflowInstance instance, const Actor& actor, const json& data,
                      const Environment& env) {
  const Step& step = def.node(instance.current_node);
  check_role(step, actor);
  validate_data(step, data);
  merge(instance, data);
  instance.history.push_back(history_entry(instance, actor, Verb::save, data, env));
  return instance;
}

ProceedResult proceed(const WorkflowDef& def, WorkflowInstance instance, const Actor& actor, const json& data,
                      const Environment& env) {
  const Step& step = def.node(instance.current_node);
  check_role(step, actor);
  validate_data(step, data);
  merge(instance, data);

  const json& current = instance.step_data[instance.current_node];
  std::vector<std::string> missing;
  for (const auto& f : step.fields) {
    if (!f.mandatory) continue;
    auto it = current.find(f.name);
    bool empty = it == current.end() || it->is_null() || (it->is_string() && it->get<std::string>().empty()) ||
                 (it->is_array() && it->empty());
    if (empty) missing.push_back(f.name);
  }
  if (!missing.empty()) {
    std::string msg = "missing mandatory fields at '" + step.id + "': ";
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : "") + missing[i];
    throw Error(ErrorKind::validation, msg);
  }

  auto edges = def.outgoing(step.id);
  std::vector<const Edge*> open;
  for (const auto* e : edges)
    if (e->guard.evaluate(instance.step_data, step.id)) open.push_back(e);
  if (open.size() != 1) {
    std::string names;
    for (const auto* e : (open.empty() ? edges : open))
      names += (names.empty() ? "" : ", ") + e->to + (e->guard.empty() ? "" : " [" + e->guard.source() + "]");
    if (edges.empty()) throw Error(ErrorKind::transition, "node '" + step.id + "' has no outgoing edge");
    throw Error(ErrorKind::transition, std::string(open.empty() ? "no guard holds" : "several guards hold") +
                                           " at '" + step.id + "': " + names);
  }
  const std::string next = open.front()->to;

  ProceedResult result;
  auto entry = history_entry(instance, actor, Verb::proceed, data, env);
  entry.to = next;
  for (const auto& act : step.actions_on_proceed) result.effects.push_back(run_action(act, instance, env));

  if (step.notification) {
    auto msg = render_notification(def.notification_template(*step.notification),
                                   render_context(def, instance, next));
    std::size_t seq = 1;
    for (const auto& h : instance.history)
      if (h.verb == Verb::proceed) ++seq;
    char num[8];
    std::snprintf(num, sizeof num, "%04zu", seq);
    auto file = instance.id + "-" + num + "-" + msg.template_id + ".json";
    auto j = msg.to_json();
    j["instance"] = instance.id;
    j["node"] = step.id;
    j["timestamp"] = entry.timestamp;
    if (!env.dry_run) write_file_atomic(env.outbox / file, j.dump(2) + "\n");
    result.effects.push_back({"notify", {{"template", msg.template_id}, {"file", file}, {"recipients", msg.recipients},
                                         {"subject", msg.subject}}});
  }

  if (!env.dry_run && !result.effects.empty())
    append_effect_log(env, instance, step.id, entry.timestamp, result.effects);

  instance.history.push_back(std::move(entry));
  instance.current_node = next;
  result.instance = std::move(instance);
  return result;
}

WorkflowInstance replay(const WorkflowDef& def, const WorkflowInstance& recorded) {
  if (recorded.workflow != def.name)
    throw Error(ErrorKind::validation,
                "instance belongs to workflow '" + recorded.workflow + "', not '" + def.name + "'");
  auto inst = start_instance(def, recorded.id);
  for (std::size_t i = 0; i < recorded.history.size(); ++i) {
    const auto& h = recorded.history[i];
    if (h.node != inst.current_node)
      throw Error(ErrorKind::transition, "history[" + std::to_string(i) + "] recorded at '" + h.node +
                                             "' but replay is at '" + inst.current_node + "'");
    Environment env;
    env.dry_run = true;
    env.clock = [ts = h.timestamp] { return ts; };
    Actor actor{h.actor, h.roles};
    if (h.verb == Verb::save) {
      inst = save(def, std::move(inst), actor, h.data, env);
    } else {
      inst = proceed(def, std::move(inst), actor, h.data, env).instance;
      if (inst.current_node != h.to)
        throw Error(ErrorKind::transition, "history[" + std::to_string(i) + "] proceeded to '" + h.to +
                                               "' but replay reached '" + inst.current_node + "'");
    }
  }
  return inst;
}

namespace {

class FileLock {
public:
  explicit FileLock(const fs::path& path) {
    fs::create_directories(path.parent_path());
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) {
      if (fd_ >= 0) ::close(fd_);
      throw Error(ErrorKind::io, "cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

private:
  int fd_ = -1;
};

} // namespace

InstanceStore::InstanceStore(fs::path dir) : dir_(std::move(dir)) {}

fs::path InstanceStore::path_of(const std::string& id) const {
  static const std::regex kId(R"([A-Za-z0-9][A-Za-z0-9._-]*)");
  if (!std::regex_match(id, kId)) throw Error(ErrorKind::validation, "invalid instance id '" + id + "'");
  return dir_ / (id + ".json");
}

bool InstanceStore::exists(const std::string& id) const { return fs::exists(path_of(id)); }

WorkflowInstance InstanceStore::load(const std::string& id) const {
  auto path = path_of(id);
  if (!fs::exists(path)) throw Error(ErrorKind::not_found, "no workflow instance '" + id + "'");
  return parse_instance(read_file(path));
}

void InstanceStore::create(const WorkflowInstance& instance) {
  auto path = path_of(instance.id);
  FileLock lock(dir_ / (instance.id + ".lock"));
  if (fs::exists(path)) throw Error(ErrorKind::conflict, "workflow instance '" + instance.id + "' already exists");
  write_file_atomic(path, write_instance(instance));
}

WorkflowInstance InstanceStore::update(const std::string& id,
                                       const std::function<WorkflowInstance(WorkflowInstance)>& fn) {
  auto path = path_of(id);
  FileLock lock(dir_ / (id + ".lock"));
  auto next = fn(load(id));
  write_file_atomic(path, write_instance(next));
  return next;
}

std::vector<std::string> instantiate_template(const fs::path& template_dir, const fs::path& dest,
                                              const std::string& ref_code) {
  if (!fs::is_directory(template_dir))
    throw Error(ErrorKind::not_found, "template directory " + template_dir.string() + " not found");
  static const std::set<std::string> kText{".tex", ".bib", ".sty", ".cls", ".bst", ".json", ".txt", ".md", ".cfg"};
  static const std::regex kRefCode(R"(\{\{\s*ref_code\s*\}\})");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(template_dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), template_dir));
  std::sort(files.begin(), files.end());
  std::vector<std::string> written;
  for (const auto& rel : files) {
    auto name = std::regex_replace(rel.generic_string(), kRefCode, ref_code);
    auto content = read_file(template_dir / rel);
    if (kText.count(rel.extension().string())) content = std::regex_replace(content, kRefCode, ref_code);
    write_file_atomic(dest / name, content);
    written.push_back(name);
  }
  return written;
}

} // namespace pubforge::workflow
