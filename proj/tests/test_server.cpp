#include <filesystem>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "pubforge/checker.hpp"
#include "pubforge/server.hpp"

using namespace pubforge;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = PUBFORGE_FIXTURES;
const std::string kData = PUBFORGE_DATA_DIR;
const std::string kAlbany = "Physics Department, SUNY Albany, Albany NY, United States of America";

std::vector<std::string> references(const json& list) {
  std::vector<std::string> out;
  for (const auto& e : list) out.push_back(e.at("reference").get<std::string>());
  return out;
}

/// A server over a scratch reports dir holding one stored check of the
/// synonym fixture. The synonym file starts without the Albany entry.
class ServerTest : public ::testing::Test {
protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("pubforge-server-" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_ / "reports");

    auto syn = json::parse(read_file(kData + "/synonyms.json"));
    auto& inst = syn["institutes"];
    inst.erase(std::remove_if(inst.begin(), inst.end(), [](const json& e) { return e["original"] == kAlbany; }), inst.end());
    write_file_atomic(root_ / "synonyms.json", syn.dump(2));

    checker::CheckInputs in;
    in.reference_xml = read_file(kFixtures + "/synonyms/reference.xml");
    in.proof_pages = checker::load_proof(kFixtures + "/synonyms/proof.txt");
    in.profile_json = read_file(kData + "/profiles/aps.json");
    in.agencies_json = read_file(kFixtures + "/synonyms/agencies.json");
    in.document = "proof.txt";
    in.filename = "proof";
    auto db = matcher::parse_synonyms(read_file(root_ / "synonyms.json"));
    name_ = checker::store(root_ / "reports", checker::run_check(in, db, parse_date("2020-01-01")), in).filename().string();

    server_ = std::make_unique<server::Server>(server::ServerOptions{
        root_ / "reports", root_ / "synonyms.json", {}, [] { return parse_date("2020-02-02"); }});
    port_ = server_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->run(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 100 && !client_->Get("/api/reports"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }

  void TearDown() override {
    server_->stop();
    thread_.join();
    fs::remove_all(root_);
  }

  json get_json(const std::string& path, int expected = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    if (!res) return nullptr;
    EXPECT_EQ(res->status, expected) << path << "\n" << res->body;
    return json::parse(res->body);
  }

  httplib::Result post(const std::string& path, const std::string& body) {
    return client_->Post(path, body, "application/json");
  }

  fs::path root_;
  std::string name_;
  std::unique_ptr<server::Server> server_;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

} // namespace

TEST_F(ServerTest, IndexListsStoredReport) {
  auto index = get_json("/api/reports");
  ASSERT_EQ(index.size(), 1u);
  EXPECT_EQ(index[0]["name"], name_);
  EXPECT_EQ(index[0]["creation_date"], "01-Jan-2020");
  // Albany is missing, and the author printed with the unresolved Albany index is mismatched.
  EXPECT_EQ(index[0]["findings"], 2);
}

TEST_F(ServerTest, ReportJsonAndHtml) {
  auto report = get_json("/api/reports/" + name_);
  EXPECT_EQ(references(report["institutes_missing_pdf_list"]), std::vector<std::string>{kAlbany});
  auto html = client_->Get("/api/reports/" + name_ + "?format=html");
  ASSERT_TRUE(html);
  EXPECT_EQ(html->status, 200);
  EXPECT_NE(html->body.find("Skipped + (1)"), std::string::npos);
}

TEST_F(ServerTest, UnknownReportIs404) {
  auto body = get_json("/api/reports/nothing.json", 404);
  EXPECT_EQ(body["error"], "no report named 'nothing.json'");
  get_json("/api/reports/..%2Fsynonyms.json", 404);
  EXPECT_EQ(get_json("/api/nowhere", 404)["error"], "no route for GET /api/nowhere");
  auto res = post("/api/recheck/nothing.json", "");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

TEST_F(ServerTest, SearchFindsAlberta) {
  auto hits = get_json("/api/synonyms?q=alberta");
  ASSERT_EQ(hits["institutes"].size(), 1u);
  EXPECT_EQ(hits["institutes"][0]["id"], "2");
  EXPECT_TRUE(hits["authors"].empty());
  EXPECT_EQ(get_json("/api/synonyms?q=bub")["authors"][0]["foafName"], "A Bub");
  EXPECT_EQ(get_json("/api/synonyms?q=")["institutes"].size(), 1u);
}

TEST_F(ServerTest, PostSynonymStatuses) {
  auto body = json{{"kind", "institute"}, {"original", kAlbany}, {"synonym", "Physics Department, SUNY Albany, Albany, New York, USA"}};
  auto created = post("/api/synonyms", body.dump());
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201) << created->body;
  EXPECT_EQ(json::parse(created->body)["synonyms"].size(), 1u);
  EXPECT_EQ(get_json("/api/synonyms?q=albany")["institutes"].size(), 1u);

  auto again = post("/api/synonyms", body.dump());
  ASSERT_TRUE(again);
  EXPECT_EQ(again->status, 409);

  auto bad = post("/api/synonyms", R"({"kind":"planet","original":""})");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  auto fields = json::parse(bad->body)["fields"];
  EXPECT_EQ(fields["original"], "must be a non-empty string");
  EXPECT_EQ(fields["synonym"], "required");
  EXPECT_EQ(fields["kind"], "must be \"institute\" or \"author\"");

  auto malformed = post("/api/synonyms", "{");
  ASSERT_TRUE(malformed);
  EXPECT_EQ(malformed->status, 400);
}

TEST_F(ServerTest, RecheckMovesEntryToSkipList) {
  auto body = json{{"kind", "institute"}, {"original", kAlbany}, {"synonym", "Physics Department, SUNY Albany, Albany, New York, USA"}};
  ASSERT_EQ(post("/api/synonyms", body.dump())->status, 201);

  auto res = post("/api/recheck/" + name_, "");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  auto report = json::parse(res->body);
  EXPECT_TRUE(report["institutes_missing_pdf_list"].empty());
  EXPECT_EQ(references(report["institutes_missing_pdf_skip"]),
            (std::vector<std::string>{"Department of Physics, University of Alberta, Edmonton AB, Canada", kAlbany}));
  EXPECT_EQ(report["creation_date"], "02-Feb-2020");

  auto stored = get_json("/api/reports/" + name_);
  EXPECT_EQ(stored, report);
  EXPECT_EQ(get_json("/api/reports")[0]["findings"], 0);
}

TEST(ServerOptions, MissingDirectoriesAreRejected) {
  EXPECT_THROW(server::Server(server::ServerOptions{"/nonexistent/reports", "/nonexistent/syn.json", {}, {}}), Error);
}
