#include <filesystem>
#include <thread>

#include <gtest/gtest.h>

#include "pubforge/common.hpp"
#include "pubforge/workflow.hpp"

using namespace pubforge;
using namespace pubforge::workflow;
namespace fs = std::filesystem;

namespace {

const std::string kData = PUBFORGE_DATA_DIR;

WorkflowDef phase0() { return load_workflow(read_file(kData + "/workflows/phase0.json")); }

const Actor kConvener{"alice", {"convener"}};
const Actor kContact{"bob", {"analysis_contact"}};
const Actor kChair{"carol", {"pubcomm_chair"}};
const Actor kCoordinator{"dave", {"physics_coordinator"}};
const Actor kOfficer{"erin", {"po_officer"}};

const json kRegistration{{"ref_code", "ANA-EXOT-2019-07"}, {"title", "Dijet search"}, {"group", "EXOT"}};
const json kAppointment{{"eb_members", {"a@example.org", "b@example.org", "c@example.org"}}, {"eb_chair", "A. Chair"}};

/// Scratch workspace with the bundled data wired in and a fixed clock.
struct Sandbox {
  fs::path root;
  Environment env;

  explicit Sandbox(const std::string& name) : root(fs::temp_directory_path() / name) {
    fs::remove_all(root);
    env.workspace = root / "ws";
    env.outbox = root / "outbox";
    env.template_dir = kData + "/template";
    env.member_db = kData + "/members.json";
    env.agencies = kData + "/agencies.json";
    env.ack_template = kData + "/ack_template.tex";
    env.clock = [n = std::make_shared<int>(0)] { return "2019-03-01T10:00:" + std::string(*n < 10 ? "0" : "") + std::to_string((*n)++) + "Z"; };
  }
  ~Sandbox() { fs::remove_all(root); }

  std::size_t outbox_count() const {
    if (!fs::exists(env.outbox)) return 0;
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(env.outbox), fs::directory_iterator()));
  }
  json effect_log() const { return json::parse(read_file(env.workspace / "effects.json")); }
};

std::size_t count_action(const std::vector<Effect>& effects, const std::string& action) {
  return static_cast<std::size_t>(
      std::count_if(effects.begin(), effects.end(), [&](const Effect& e) { return e.action == action; }));
}

/// Registration through EB formation, ending at goals_review.
WorkflowInstance through_eb(const WorkflowDef& def, const Environment& env, std::vector<Effect>* eb_effects = nullptr) {
  auto inst = start_instance(def, "dijet");
  inst = proceed(def, inst, kContact, kRegistration, env).instance;
  inst = save(def, inst, kConvener, {{"meeting_title", "EB request"}}, env);
  inst = proceed(def, inst, kConvener, {{"meeting_date", "2019-03-04"}}, env).instance;
  auto eb = proceed(def, inst, kChair, kAppointment, env);
  if (eb_effects) *eb_effects = eb.effects;
  return eb.instance;
}

} // namespace

TEST(Definition, BundledPhase0Loads) {
  auto def = phase0();
  EXPECT_EQ(def.start, "analysis_submission");
  EXPECT_EQ(def.nodes.size(), 7u);
  EXPECT_EQ(def.outgoing("goals_review").size(), 2u);
  EXPECT_EQ(def.role_fields.at("EB"), "eb_appointment.eb_members");
}

TEST(Definition, DanglingEdgeNamesTarget) {
  auto doc = json::parse(read_file(kData + "/workflows/phase0.json"));
  doc["edges"].push_back({{"from", "phase2"}, {"to", "X"}});
  try {
    load_workflow(doc.dump());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "edges[8].to: unknown node 'X'");
  }
}

TEST(Definition, CyclesAreAllowed) {
  auto def = load_workflow(R"({"name":"loop","nodes":[{"id":"A","roles_allowed":["r"]},{"id":"B","roles_allowed":["r"]}],
    "edges":[{"from":"A","to":"B"},{"from":"B","to":"A"}]})");
  Environment env;
  env.dry_run = true;
  auto inst = start_instance(def, "i");
  for (int i = 0; i < 4; ++i) inst = proceed(def, inst, {"x", {"r"}}, json::object(), env).instance;
  EXPECT_EQ(inst.current_node, "A");
  EXPECT_EQ(inst.history.size(), 4u);
}

TEST(Definition, LoadErrorsCarryPaths) {
  auto expect_error = [](const std::string& text, const std::string& needle) {
    try {
      load_workflow(text);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error(R"({"name":"w","nodes":[{"id":"A","actions_on_proceed":[{"kind":"send_fax"}]}]})",
               "nodes[0].actions_on_proceed[0].kind");
  expect_error(R"({"name":"w","nodes":[{"id":"A"},{"id":"A"}]})", "nodes[1].id");
  expect_error(R"({"name":"w","nodes":[{"id":"A","notification":"nope"}]})", "nodes[0].notification");
  expect_error(R"({"name":"w","nodes":[{"id":"A"}],"edges":[{"from":"A","to":"A","guard":"x =="}]})", "edges[0].guard");
  expect_error(R"({"name":"w","nodes":[{"id":"A"}],"edges":[{"from":"A","to":"A","guard":"Z.x == 1"}]})",
               "unknown node 'Z'");
  expect_error("{", "workflow JSON");
}

TEST(Guards, Evaluation) {
  json data{{"a", {{"x", "yes"}, {"n", 3}, {"flag", true}}}, {"b", {{"y", "no"}}}};
  auto eval = [&](const std::string& src) { return Guard::parse(src).evaluate(data, "a"); };
  EXPECT_TRUE(eval("x == 'yes'"));
  EXPECT_TRUE(eval("b.y == \"no\" && n == 3"));
  EXPECT_TRUE(eval("!(x == 'no') || flag == false"));
  EXPECT_TRUE(eval("present(x) && !present(missing)"));
  EXPECT_FALSE(eval("b.y != 'no'"));
  EXPECT_TRUE(eval("flag"));
  try {
    Guard::parse("x == 'open");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("guard column 6"), std::string::npos) << e.what();
  }
}

TEST(Save, ConvenerSavesMeetingTitleOnly) {
  Sandbox box("pubforge-wf-save");
  auto def = phase0();
  auto inst = proceed(def, start_instance(def, "dijet"), kContact, kRegistration, box.env).instance;
  inst = save(def, inst, kConvener, {{"meeting_title", "EB request"}}, box.env);
  EXPECT_EQ(inst.current_node, "eb_request");
  EXPECT_EQ(inst.step_data["eb_request"], (json{{"meeting_title", "EB request"}}));
  EXPECT_EQ(inst.history.back().verb, Verb::save);

  try {
    proceed(def, inst, kConvener, json::object(), box.env);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
    EXPECT_STREQ(e.what(), "missing mandatory fields at 'eb_request': meeting_date");
  }
}

TEST(Save, RoleAndFieldChecks) {
  Sandbox box("pubforge-wf-perm");
  auto def = phase0();
  auto inst = proceed(def, start_instance(def, "dijet"), kContact, kRegistration, box.env).instance;
  try {
    save(def, inst, kContact, {{"meeting_title", "x"}}, box.env);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::permission);
    EXPECT_STREQ(e.what(), "actor 'bob' lacks a role allowed at 'eb_request' (convener)");
  }
  EXPECT_THROW(save(def, inst, kConvener, {{"meeting_date", "04/03/2019"}}, box.env), Error);
  EXPECT_THROW(save(def, inst, kConvener, {{"room", "B40"}}, box.env), Error);
  EXPECT_THROW(save(def, start_instance(def, "x"), kContact, {{"ref_code", "ANA-EXOT-19-7"}}, box.env), Error);
}

TEST(Save, LastWriteWins) {
  Sandbox box("pubforge-wf-lww");
  auto def = phase0();
  InstanceStore store(box.root / "instances");
  store.create(start_instance(def, "dijet"));
  EXPECT_THROW(store.create(start_instance(def, "dijet")), Error);

  store.update("dijet", [&](WorkflowInstance i) { return save(def, std::move(i), kContact, {{"title", "First"}}, box.env); });
  store.update("dijet", [&](WorkflowInstance i) { return save(def, std::move(i), kConvener, {{"title", "Second"}}, box.env); });
  auto inst = store.load("dijet");
  EXPECT_EQ(inst.step_data["analysis_submission"]["title"], "Second");
  EXPECT_EQ(inst.history.size(), 2u);

  std::vector<std::thread> writers;
  for (int t = 0; t < 8; ++t)
    writers.emplace_back([&, t] {
      Environment env;
      env.dry_run = true;
      env.clock = [] { return std::string("2019-01-01T00:00:00Z"); };
      for (int k = 0; k < 5; ++k)
        store.update("dijet", [&](WorkflowInstance i) {
          return save(def, std::move(i), kConvener, {{"group", "G" + std::to_string(t)}}, env);
        });
    });
  for (auto& w : writers) w.join();
  EXPECT_EQ(store.load("dijet").history.size(), 42u);
  EXPECT_THROW(store.load("unknown"), Error);
  EXPECT_THROW(store.load("../escape"), Error);
}

TEST(Proceed, EbStepEmitsOneGroupAndOneNotification) {
  Sandbox box("pubforge-wf-eb");
  auto def = phase0();
  std::vector<Effect> effects;
  auto inst = through_eb(def, box.env, &effects);
  EXPECT_EQ(inst.current_node, "goals_review");
  EXPECT_EQ(count_action(effects, "create_group"), 1u);
  EXPECT_EQ(count_action(effects, "notify"), 1u);
  EXPECT_EQ(effects.size(), 2u);
  EXPECT_EQ(effects[0].detail["name"], "EB e-group members");
  EXPECT_EQ(effects[0].detail["members"].size(), 3u);
  EXPECT_EQ(box.outbox_count(), 1u);

  auto group = json::parse(read_file(box.env.workspace / "groups/eb-e-group-members.json"));
  EXPECT_EQ(group["members"].size(), 3u);

  auto log = box.effect_log();
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0]["action"], "create_group");
  EXPECT_EQ(log[0]["node"], "eb_appointment");
  EXPECT_EQ(log[1]["action"], "notify");

  auto msg = json::parse(read_file(box.env.outbox / log[1]["detail"]["file"].get<std::string>()));
  EXPECT_EQ(msg["subject"], "EB appointed: Dijet search");
  EXPECT_EQ(msg["recipients"], (json{"a@example.org", "b@example.org", "c@example.org"}));
  EXPECT_NE(msg["body"].get<std::string>().find("Request meeting: EB request on 2019-03-04."), std::string::npos);
}

TEST(Proceed, GuardsChooseTheBranch) {
  Sandbox box("pubforge-wf-guards");
  auto def = phase0();
  auto inst = through_eb(def, box.env);
  auto revised = proceed(def, inst, kConvener, {{"decision", "revise"}}, box.env).instance;
  EXPECT_EQ(revised.current_node, "eb_request");
  EXPECT_EQ(revised.step_data["eb_request"]["meeting_date"], "2019-03-04");
  EXPECT_THROW(proceed(def, inst, kConvener, {{"decision", "maybe"}}, box.env), Error);
}

TEST(Proceed, AmbiguousEdgesAreTransitionErrors) {
  auto def = load_workflow(R"({"name":"w","nodes":[{"id":"A","roles_allowed":["r"]},{"id":"B"},{"id":"C"}],
    "edges":[{"from":"A","to":"B"},{"from":"A","to":"C"}]})");
  Environment env;
  env.dry_run = true;
  try {
    proceed(def, start_instance(def, "i"), {"x", {"r"}}, json::object(), env);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::transition);
    EXPECT_STREQ(e.what(), "several guards hold at 'A': B, C");
  }
}

TEST(Proceed, SignoffCreatesPaperRepository) {
  Sandbox box("pubforge-wf-signoff");
  auto def = phase0();
  auto inst = through_eb(def, box.env);
  inst = proceed(def, inst, kConvener, {{"decision", "approve"}}, box.env).instance;
  auto r = proceed(def, inst, kCoordinator, {{"signoff_date", "2019-04-01"}}, box.env);
  EXPECT_EQ(r.instance.current_node, "phase1_circulation");
  ASSERT_EQ(count_action(r.effects, "create_repository"), 1u);
  EXPECT_EQ(r.effects[0].detail["repository"], "ANA-EXOT-2019-07-PAPER");
  EXPECT_TRUE(fs::exists(box.env.workspace / "ANA-EXOT-2019-07-PAPER/ANA-EXOT-2019-07-metadata.tex"));
  EXPECT_EQ(box.outbox_count(), 2u);
  EXPECT_THROW(proceed(def, inst, kCoordinator, {{"signoff_date", "2019-04-01"}}, box.env), Error);

  auto circulated = proceed(def, r.instance, kOfficer, {{"circulation", "recirculate"}, {"circulation_date", "2019-05-01"}}, box.env);
  EXPECT_EQ(circulated.instance.current_node, "phase1_circulation");
  ASSERT_EQ(circulated.effects.size(), 1u);
  EXPECT_EQ(circulated.effects[0].detail["status"], "added");
  EXPECT_TRUE(fs::exists(box.env.workspace / "ANA-EXOT-2019-07-PAPER/authorlist.xml"));
  auto again = proceed(def, circulated.instance, kOfficer, {{"circulation", "done"}}, box.env);
  EXPECT_EQ(again.effects[0].detail["status"], "updated");
  EXPECT_EQ(again.instance.current_node, "phase2");
}

TEST(Notifications, RenderAndErrors) {
  auto def = phase0();
  const auto& tpl = def.notification_template("eb_appointed");
  RenderContext ctx;
  ctx.vars = {{"title", "Dijet search"}, {"ref_code", "ANA-EXOT-2019-07"}, {"eb_chair", "A. Chair"},
              {"eb_members", "a, b, c"}, {"meeting_title", "EB request"}, {"meeting_date", "2019-03-04"}};
  ctx.roles["EB"] = {"a@example.org", "b@example.org", "c@example.org"};
  auto msg = render_notification(tpl, ctx);
  EXPECT_EQ(msg.subject, "EB appointed: Dijet search");
  EXPECT_EQ(msg.recipients.size(), 3u);

  auto missing = ctx;
  missing.vars.erase("meeting_date");
  try {
    render_notification(tpl, missing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "unresolved placeholder 'meeting_date'");
  }
  auto nobody = ctx;
  nobody.roles.clear();
  EXPECT_THROW(render_notification(tpl, nobody), Error);

  NotificationTemplate date_tpl{"t", {"field:n.to", "ops@example.org"}, "On {{date}}", ""};
  ctx.fields["n.to"] = {"x@example.org", "ops@example.org"};
  try {
    render_notification(date_tpl, ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("date"), std::string::npos);
  }
  ctx.vars["date"] = "2019-03-04";
  EXPECT_EQ(render_notification(date_tpl, ctx).recipients, (std::vector<std::string>{"x@example.org", "ops@example.org"}));
}

TEST(Replay, ScriptedHistoryReproducesState) {
  Sandbox box("pubforge-wf-replay");
  auto def = phase0();
  auto inst = through_eb(def, box.env);
  inst = proceed(def, inst, kConvener, {{"decision", "revise"}, {"comments", "tighten scope"}}, box.env).instance;
  inst = save(def, inst, kConvener, {{"agenda_url", "https://indico.example.org/e/1"}}, box.env);
  inst = proceed(def, inst, kConvener, {{"meeting_date", "2019-04-15"}}, box.env).instance;
  auto before = box.outbox_count();

  auto stored = parse_instance(write_instance(inst));
  EXPECT_EQ(write_instance(stored), write_instance(inst));
  auto replayed = replay(def, stored);
  EXPECT_EQ(replayed.current_node, "eb_appointment");
  EXPECT_EQ(replayed.step_data, inst.step_data);
  EXPECT_EQ(write_instance(replayed), write_instance(inst));
  EXPECT_EQ(box.outbox_count(), before);

  stored.history[2].data = {{"meeting_date", "2019-03-04"}, {"meeting_title", "Changed"}};
  EXPECT_EQ(replay(def, stored).step_data["eb_request"]["meeting_title"], "Changed");

  auto broken = parse_instance(write_instance(inst));
  broken.history[4].data = {{"decision", "approve"}};
  try {
    replay(def, broken);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::transition);
  }
}

TEST(Template, InstantiateReplacesPlaceholders) {
  auto dir = fs::temp_directory_path() / "pubforge-wf-template";
  fs::remove_all(dir);
  auto files = instantiate_template(kData + "/template", dir, "ANA-SUSY-2019-04");
  EXPECT_NE(std::find(files.begin(), files.end(), "ANA-SUSY-2019-04-metadata.tex"), files.end());
  EXPECT_EQ(read_file(dir / "main.tex").find("{{"), std::string::npos);
  EXPECT_THROW(instantiate_template(dir / "nope", dir / "x", "A"), Error);
  fs::remove_all(dir);
}
