#include "crashscene/editor_server.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "crashscene/errors.hpp"
#include "crashscene/io.hpp"

namespace crashscene::editor {
namespace {

using crashscene::AgentCategory;
using scenario::ScenarioSpec;
using scenario::VehicleSpec;

ScenarioSpec TwoVehicles(double gap) {
  ScenarioSpec s;
  for (int i = 0; i <= 30; ++i) s.road.centerline.push_back({2.0 * i, 0.0});
  s.vehicles = {{0, AgentCategory::kEgo, 0.0, {}, {{0.0, 0.0}, {2.0, 0.0}}, {20.0, 20.0}},
                {1, AgentCategory::kD0T1, 0.0, {}, {{gap, 0.0}, {gap + 1.0, 0.0}}, {10.0, 10.0}}};
  return s;
}

class EditorTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "crashscene_editor_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    path_ = dir_ / "scene.json";
    scenario::export_scenario(TwoVehicles(20.0), path_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  fs::path path_;
};

TEST_F(EditorTest, ServiceGetIsFileBytes) {
  // A hand-formatted file is served as-is, not re-serialized.
  const std::string text = nlohmann::json::parse(io::read_text(path_)).dump();
  io::write_text(path_, text);
  EditorService svc(path_);
  EXPECT_EQ(svc.get_scenario().status, 200);
  EXPECT_EQ(svc.get_scenario().body, text);
}

TEST_F(EditorTest, ServicePutValidReplacesFile) {
  EditorService svc(path_);
  ScenarioSpec edited = TwoVehicles(20.0);
  edited.vehicles[1].waypoints[0][1] = 0.5;
  const auto r = svc.put_scenario(nlohmann::json::parse(scenario::to_canonical_json(edited)).dump());
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(io::read_text(path_), scenario::to_canonical_json(edited));
  EXPECT_EQ(svc.get_scenario().body, io::read_text(path_));
}

TEST_F(EditorTest, ServicePutRejectsContinuityGap) {
  EditorService svc(path_);
  const std::string before = io::read_text(path_);
  ScenarioSpec bad = TwoVehicles(20.0);
  bad.vehicles[1].lead_in = {{10.0, 0.0}, {15.0, 0.0}};  // 5 m short of the first waypoint
  const auto r = svc.put_scenario(scenario::to_canonical_json(bad));
  EXPECT_EQ(r.status, 422);
  const auto body = nlohmann::json::parse(r.body);
  ASSERT_EQ(body["violations"].size(), 1u);
  const std::string v = body["violations"][0];
  EXPECT_NE(v.find("vehicle 1"), std::string::npos) << v;
  EXPECT_NE(v.find("continuity"), std::string::npos) << v;
  EXPECT_EQ(io::read_text(path_), before);
  EXPECT_EQ(svc.get_scenario().body, before);
}

TEST_F(EditorTest, ServicePutRejectsBadBodies) {
  EditorService svc(path_);
  EXPECT_EQ(svc.put_scenario("{not json").status, 400);
  const auto r = svc.put_scenario(R"({"frame_rate": 10})");
  EXPECT_EQ(r.status, 422);
  EXPECT_NE(r.body.find("road"), std::string::npos);
}

TEST_F(EditorTest, ServiceCheck) {
  EditorService svc(path_);
  EXPECT_EQ(nlohmann::json::parse(svc.check("").body)["conflicts"].size(), 0u);
  const auto body = nlohmann::json::parse(svc.check(scenario::to_canonical_json(TwoVehicles(3.0))).body);
  ASSERT_EQ(body["conflicts"].size(), 1u);
  EXPECT_EQ(body["conflicts"][0]["id_a"], 0);
  EXPECT_EQ(body["conflicts"][0]["id_b"], 1);
  EXPECT_DOUBLE_EQ(body["conflicts"][0]["distance"].get<double>(), 3.0);
  EXPECT_EQ(body["min_gap"], 6.0);
}

TEST_F(EditorTest, ServiceRejectsInvalidFile) {
  io::write_text(path_, "[]");
  EXPECT_THROW(EditorService{path_}, FormatError);
  EXPECT_THROW(EditorService{dir_ / "missing.json"}, IoError);
}

TEST_F(EditorTest, HttpEndpoints) {
  fs::create_directories(dir_ / "assets");
  io::write_text(dir_ / "assets" / "index.html", "<html>editor</html>");
  EditorService svc(path_);
  EditorServer server(svc, dir_ / "assets");
  const int port = server.bind("127.0.0.1", 0);
  std::thread loop([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  const auto get = client.Get("/scenario");
  ASSERT_TRUE(get);
  EXPECT_EQ(get->status, 200);
  EXPECT_EQ(get->body, io::read_text(path_));

  ScenarioSpec bad = TwoVehicles(20.0);
  bad.vehicles[1].lead_in = {{15.0, 0.0}};
  const auto put = client.Put("/scenario", scenario::to_canonical_json(bad), "application/json");
  ASSERT_TRUE(put);
  EXPECT_EQ(put->status, 422);
  EXPECT_NE(put->body.find("continuity"), std::string::npos);

  const auto check = client.Post("/check", scenario::to_canonical_json(TwoVehicles(3.0)), "application/json");
  ASSERT_TRUE(check);
  EXPECT_EQ(nlohmann::json::parse(check->body)["conflicts"].size(), 1u);

  const auto good = client.Put("/scenario", scenario::to_canonical_json(TwoVehicles(30.0)), "application/json");
  ASSERT_TRUE(good);
  EXPECT_EQ(good->status, 200);
  EXPECT_EQ(client.Get("/scenario")->body, scenario::to_canonical_json(TwoVehicles(30.0)));

  const auto index = client.Get("/index.html");
  ASSERT_TRUE(index);
  EXPECT_EQ(index->body, "<html>editor</html>");

  // A second server on the same port fails at startup.
  EditorServer other(svc);
  EXPECT_THROW(other.bind("127.0.0.1", port), IoError);

  server.stop();
  loop.join();
}

}  // namespace
}  // namespace crashscene::editor
