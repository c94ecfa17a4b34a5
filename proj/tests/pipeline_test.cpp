#include "crashscene/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "crashscene/errors.hpp"
#include "crashscene/io.hpp"

namespace crashscene::pipeline {
namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("crashscene_pipeline_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(ConfigTest, DefaultsRoundTrip) {
  const PipelineConfig defaults;
  const std::string text = config_to_text(defaults);
  EXPECT_EQ(config_to_text(parse_config(text)), text);
  EXPECT_EQ(config_to_text(parse_config("")), text);
  EXPECT_NE(text.find("lane_width = 3.7"), std::string::npos);
  EXPECT_NE(text.find("intrinsics = dataset-default"), std::string::npos);
}

TEST(ConfigTest, ParsesValuesCommentsAndQuotes) {
  const PipelineConfig c = parse_config(
      "# scene 3\n"
      "frame_rate = 15   # fps\n"
      "intrinsics = \"config\"\n"
      "fu = 700\nfv = 700\ncu = 320\ncv = 120\n"
      "\n"
      "ego_mode = constant\n"
      "ego_speed = 12.5\n"
      "birth_hits = 2\n"
      "dbscan_min_pts = 7\n");
  EXPECT_EQ(c.frame_rate, 15.0);
  EXPECT_EQ(c.intrinsics, IntrinsicsSource::kConfig);
  EXPECT_EQ(c.cu, 320.0);
  EXPECT_EQ(c.ego_mode, EgoSource::kConstant);
  EXPECT_EQ(c.ego_speed, 12.5);
  EXPECT_EQ(c.tracker.birth_hits, 2);
  EXPECT_EQ(c.lanes.min_pts, 7u);
  EXPECT_EQ(c.scenario_config().classify.frame_rate, 15.0);
}

TEST(ConfigTest, Rejections) {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  EXPECT_NE(message("frame_rat = 10\n").find("unknown key 'frame_rat'"), std::string::npos);
  EXPECT_NE(message("accel = 1\naccel = 2\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("accel = fast\n").find("accel"), std::string::npos);
  EXPECT_NE(message("birth_hits = 2.5\n").find("birth_hits"), std::string::npos);
  EXPECT_NE(message("frame_rate = -1\n").find("frame_rate"), std::string::npos);
  EXPECT_NE(message("intrinsics = config\n").find("fu/fv"), std::string::npos);
  EXPECT_NE(message("road_spacing = 40\n").find("road_spacing"), std::string::npos);
  EXPECT_NE(message("local_smoothness = 0.1\n").find("local_smoothness"), std::string::npos);
  EXPECT_NE(message("just words\n").find("key = value"), std::string::npos);
  EXPECT_NE(message("ego_mode = sideways\n").find("ego_mode"), std::string::npos);
  EXPECT_THROW(load_config("/nonexistent/config.toml"), IoError);
}

TEST(MotionTest, WaypointsInterpolate) {
  Motion m;
  m.waypoints = {{0, 0, 0}, {10, 10, 0}, {20, 10, 10}};
  EXPECT_FALSE(motion_state(m, -1, 10.0));
  EXPECT_FALSE(motion_state(m, 21, 10.0));
  const auto a = motion_state(m, 5, 10.0);
  EXPECT_DOUBLE_EQ(a->x, 5.0);
  EXPECT_DOUBLE_EQ(a->yaw, 0.0);
  const auto b = motion_state(m, 15, 10.0);
  EXPECT_DOUBLE_EQ(b->y, 5.0);
  EXPECT_NEAR(b->yaw, std::acos(-1.0) / 2, 1e-15);
  EXPECT_DOUBLE_EQ(motion_state(m, 20, 10.0)->y, 10.0);
}

TEST(MotionTest, BrakingStopsAndHolds) {
  Motion m;
  m.speed = 20.0;
  m.accel = -5.0;
  m.accel_frame = 10;
  // 1 s cruise (20 m) then 4 s to stop (40 m).
  EXPECT_DOUBLE_EQ(motion_state(m, 10, 10.0)->x, 20.0);
  EXPECT_DOUBLE_EQ(motion_state(m, 50, 10.0)->x, 60.0);
  EXPECT_DOUBLE_EQ(motion_state(m, 90, 10.0)->x, 60.0);
  m.first_frame = 3;
  m.last_frame = 8;
  EXPECT_FALSE(motion_state(m, 2, 10.0));
  EXPECT_FALSE(motion_state(m, 9, 10.0));
  EXPECT_DOUBLE_EQ(motion_state(m, 3, 10.0)->x, 0.0);
}

TEST(SceneScriptTest, ParsesAndRejects) {
  const auto s = parse_scene_script(nlohmann::json::parse(R"({
      "frames": 5, "image": [64, 48],
      "lanes": {"width": 3.5},
      "ego": {"speed": 10, "odometry": false},
      "vehicles": [{"id": 4, "size": [4, 2, 1.4], "motion": {"waypoints": [[0, 20, 0], [4, 24, 0]]}}]})"));
  EXPECT_EQ(s.frames, 5);
  EXPECT_EQ(s.image.width, 64);
  EXPECT_FALSE(s.write_odometry);
  EXPECT_EQ(s.lane_lines, (std::vector<double>{-1.75, 1.75, 5.25}));
  ASSERT_EQ(s.vehicles.size(), 1u);
  EXPECT_EQ(s.vehicles[0].width, 2.0);
  EXPECT_THROW(parse_scene_script(nlohmann::json::parse(R"({"colour": 1})")), ScriptError);
  EXPECT_THROW(parse_scene_script(nlohmann::json::parse(R"({"vehicles": [{"id": 1}]})")), ScriptError);
  EXPECT_THROW(parse_scene_script(nlohmann::json::parse(
                   R"({"vehicles": [{"id": 1, "motion": {"waypoints": [[3, 0, 0], [2, 1, 0]]}}]})")),
               ScriptError);
}

SceneScript SmallScene() {
  SceneScript s;
  s.frames = 3;
  s.image = {160, 120};
  return s;
}

camera::CameraIntrinsics SmallIntrinsics() { return camera::CameraIntrinsics::centered(100.0, {160, 120}); }

TEST(SyntheticTest, EmptySceneIsGroundOnly) {
  TempDir dir("empty");
  SceneScript s = SmallScene();
  s.lane_lines = {100.0};  // far away, not rendered
  const auto out = generate_synthetic(s, SmallIntrinsics(), dir.path());
  EXPECT_EQ(out.detections, 0);
  EXPECT_TRUE(io::read_text(dir.path() / "detections.jsonl").empty());
  const auto depth = io::read_depth_pgm(dir.path() / "depth" / "000001.pgm");
  const camera::CameraIntrinsics k = SmallIntrinsics();
  for (int v = 0; v < 120; ++v) {
    // Ground at y = h: depth = h * f / (v - c_v), zero at and above the horizon.
    const double expected = v > k.cv ? s.camera_height * k.fv / (v - k.cv) : 0.0;
    const double quantized = expected <= s.max_depth ? std::round(expected * 256.0) / 256.0 : 0.0;
    EXPECT_EQ(depth.at(17, v), quantized) << v;
  }
  EXPECT_EQ(io::read_odometry_csv(dir.path() / "odometry.csv").size(), 3u);
}

TEST(SyntheticTest, CuboidAheadHasRearFaceDepth) {
  TempDir dir("cuboid");
  SceneScript s = SmallScene();
  ScriptVehicle v;
  v.id = 9;
  v.motion.x = 20.0;
  s.vehicles.push_back(v);
  const auto out = generate_synthetic(s, SmallIntrinsics(), dir.path());
  ASSERT_EQ(out.detections, 3);
  EXPECT_EQ(out.ground_truth[0], (metrics::TrackPoint{0, 9, 20.0, 0.0}));
  const auto dets = io::read_detections_jsonl(dir.path() / "detections.jsonl");
  const auto& b = dets[0].bbox;
  const auto depth = io::read_depth_pgm(dir.path() / "depth" / "000000.pgm");
  const int uc = static_cast<int>((b.u_min + b.u_max) / 2), vc = static_cast<int>((b.v_min + b.v_max) / 2);
  EXPECT_EQ(depth.at(uc, vc), 20.0 - 2.25);
  // The bbox is the projected cuboid: the rear bottom edge is at row c_v + f h / 17.75.
  EXPECT_NEAR(b.v_max, 60.0 + 100.0 * 1.65 / 17.75, 1e-9);
  EXPECT_NEAR(b.u_max - b.u_min, 2 * 100.0 * 0.9 / 17.75, 1e-9);
  const auto mask = io::read_mask(dir.path() / *dets[0].mask_file);
  EXPECT_TRUE(mask.at(uc, vc));
  EXPECT_FALSE(mask.at(0, 119));
}

TEST(SyntheticTest, VehicleBehindCameraIsAnError) {
  TempDir dir("behind");
  SceneScript s = SmallScene();
  ScriptVehicle v;
  v.id = 2;
  v.motion.waypoints = {{0, 10, 0}, {2, -10, 0}};
  s.vehicles.push_back(v);
  try {
    generate_synthetic(s, SmallIntrinsics(), dir.path());
    FAIL();
  } catch (const ScriptError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos) << e.what();
  }
}

// Ego at 20 m/s; a lead car 40 m ahead brakes at 4 m/s^2 from frame 10.
SceneScript RearEndScene(int frames) {
  SceneScript s;
  s.frames = frames;
  s.image = {621, 188};
  s.ego.speed = 20.0;
  ScriptVehicle lead;
  lead.id = 1;
  lead.motion.x = 40.0;
  lead.motion.speed = 20.0;
  lead.motion.accel = -4.0;
  lead.motion.accel_frame = 10;
  s.vehicles.push_back(lead);
  return s;
}

camera::CameraIntrinsics HalfKitti() { return camera::CameraIntrinsics::centered(360.0, {621, 188}); }

PipelineConfig ConfigFor(const camera::CameraIntrinsics& k) {
  PipelineConfig c;
  c.intrinsics = IntrinsicsSource::kConfig;
  c.fu = k.fu;
  c.fv = k.fv;
  c.cu = k.cu;
  c.cv = k.cv;
  return c;
}

double MeanError(const std::vector<metrics::TrackPoint>& gt, const trajectory::Trajectory& est) {
  double total = 0.0;
  int n = 0;
  for (const auto& g : gt) {
    if (const auto* p = est.at_frame(g.frame)) {
      total += std::hypot(p->x - g.x, p->y - g.y);
      ++n;
    }
  }
  return n ? total / n : 1e9;
}

TEST(PipelineTest, RearEndSceneEndToEnd) {
  TempDir dir("rear_end");
  const auto truth = generate_synthetic(RearEndScene(40), HalfKitti(), dir.path() / "in");
  const PipelineConfig config = ConfigFor(HalfKitti());
  const auto r = run_pipeline(dir.path() / "in", config, dir.path() / "out" / "scene.json");
  ASSERT_EQ(r.agents.size(), 1u);
  ASSERT_EQ(r.build.categories.size(), 1u);
  EXPECT_EQ(r.build.categories[0], AgentCategory::kD0T1);
  EXPECT_EQ(r.agents[0].poses.front().frame, 0);
  EXPECT_LT(MeanError(truth.ground_truth, r.agents[0]), 1.0);
  const auto spec = scenario::import_scenario(dir.path() / "out" / "scene.json");
  ASSERT_EQ(spec.vehicles.size(), 2u);
  EXPECT_EQ(spec.vehicles[0].category, AgentCategory::kEgo);
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "scene_vehicle_1.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "scene.log"));

  // Re-running is byte-identical.
  run_pipeline(dir.path() / "in", config, dir.path() / "out" / "again.json");
  EXPECT_EQ(io::read_text(dir.path() / "out" / "scene.json"), io::read_text(dir.path() / "out" / "again.json"));
  EXPECT_EQ(io::read_text(dir.path() / "out" / "scene_tracks.csv"),
            io::read_text(dir.path() / "out" / "again_tracks.csv"));

  // The estimates evaluate against the generated ground truth.
  const auto report = metrics::evaluate(truth.ground_truth, r.estimates);
  EXPECT_EQ(report.FN, 0);
  EXPECT_EQ(report.FP, 0);
}

// Random scripts: 1-3 vehicles in distinct lanes, same-direction traffic
// near the ego speed and oncoming traffic far ahead in the left lane.
SceneScript RandomScene(std::mt19937& rng) {
  std::uniform_real_distribution<double> ego_speed(8.0, 25.0), lon(15.0, 45.0), dv(-3.0, 3.0), oncoming(5.0, 12.0);
  SceneScript s;
  s.frames = 25;
  s.image = {621, 188};
  s.ego.speed = ego_speed(rng);
  std::vector<double> lanes = {0.0, 3.7, -3.7};
  std::shuffle(lanes.begin(), lanes.end(), rng);
  const int n = 1 + static_cast<int>(rng() % 3);
  for (int i = 0; i < n; ++i) {
    ScriptVehicle v;
    v.id = i + 1;
    v.motion.y = lanes[i];
    if (lanes[i] > 0.0 && rng() % 2) {
      v.motion.heading = std::acos(-1.0);
      v.motion.speed = oncoming(rng);
      // Stays at least ~15 m ahead over the clip.
      v.motion.x = 15.0 + (s.ego.speed + v.motion.speed) * s.frames / s.frame_rate + lon(rng) / 3;
    } else {
      v.motion.x = lon(rng);
      v.motion.speed = std::max(0.0, s.ego.speed + dv(rng));
    }
    s.vehicles.push_back(v);
  }
  return s;
}

TEST(PipelineTest, SyntheticClosureProperty) {
  TempDir dir("closure");
  std::mt19937 rng(404);
  for (int trial = 0; trial < 8; ++trial) {
    const SceneScript script = RandomScene(rng);
    const auto truth = generate_synthetic(script, HalfKitti(), dir.path() / "in");
    const auto r = run_pipeline(dir.path() / "in", ConfigFor(HalfKitti()), dir.path() / "out.json");
    // Each scripted vehicle is matched to the estimate with the lowest mean
    // error over shared frames.
    for (const auto& v : script.vehicles) {
      std::vector<metrics::TrackPoint> gt;
      for (const auto& g : truth.ground_truth) {
        if (g.object_id == v.id) gt.push_back(g);
      }
      double best = 1e9;
      for (const auto& a : r.agents) best = std::min(best, MeanError(gt, a));
      EXPECT_LT(best, 1.0) << "trial " << trial << " vehicle " << v.id << " y " << v.motion.y << " x0 "
                           << v.motion.x;
    }
    fs::remove_all(dir.path() / "in");
  }
}

TEST(PipelineTest, CalibratesFromRenderedLanes) {
  TempDir dir("calibrate");
  for (double f : {500.0, 720.0}) {
    SceneScript s = RearEndScene(3);
    s.vehicles.clear();
    s.image = {1242, 375};
    s.camera_pitch = 0.1;
    const auto k = camera::CameraIntrinsics::centered(f, s.image);
    generate_synthetic(s, k, dir.path() / "in");
    PipelineConfig c;
    c.intrinsics = IntrinsicsSource::kCalibrate;
    const auto r = run_pipeline(dir.path() / "in", c, dir.path() / "out.json");
    EXPECT_NEAR(r.intrinsics.fu, f, 0.01 * f);
    EXPECT_NEAR(r.pitch, 0.1, 0.002);
  }
}

TEST(PipelineTest, EmptyDetectionsGiveEgoOnly) {
  TempDir dir("ego_only");
  SceneScript s = RearEndScene(12);
  s.vehicles.clear();
  generate_synthetic(s, HalfKitti(), dir.path() / "in");
  const auto r = run_pipeline(dir.path() / "in", ConfigFor(HalfKitti()), dir.path() / "out.json");
  EXPECT_TRUE(r.agents.empty());
  const auto spec = scenario::import_scenario(dir.path() / "out.json");
  ASSERT_EQ(spec.vehicles.size(), 1u);
  bool warned = false;
  for (const auto& d : r.diagnostics) warned = warned || d.find("no detections") != std::string::npos;
  EXPECT_TRUE(warned);
}

TEST(PipelineTest, MissingInputsAreNamed) {
  TempDir dir("missing");
  try {
    run_pipeline(dir.path(), PipelineConfig{}, dir.path() / "out.json");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("detections.jsonl"), std::string::npos);
  }
  io::write_text(dir.path() / "detections.jsonl", "");
  try {
    run_pipeline(dir.path(), PipelineConfig{}, dir.path() / "out.json");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("depth"), std::string::npos);
  }
}

TEST(PipelineTest, PartialDepthCoverageWarns) {
  TempDir dir("partial");
  generate_synthetic(RearEndScene(12), HalfKitti(), dir.path() / "in");
  fs::remove(dir.path() / "in" / "depth" / "000005.pgm");
  const auto r = run_pipeline(dir.path() / "in", ConfigFor(HalfKitti()), dir.path() / "out.json");
  bool warned = false;
  for (const auto& d : r.diagnostics) warned = warned || d.find("no depth map") != std::string::npos;
  EXPECT_TRUE(warned);
  ASSERT_EQ(r.agents.size(), 1u);
  EXPECT_EQ(r.agents[0].poses.size(), 12u);  // the one-frame gap is filled
}

TEST(PipelineTest, BatchRunsScenesInParallel) {
  TempDir dir("batch");
  generate_synthetic(RearEndScene(12), HalfKitti(), dir.path() / "a");
  SceneScript other = RearEndScene(12);
  other.vehicles[0].motion.y = 3.7;
  generate_synthetic(other, HalfKitti(), dir.path() / "b");
  PipelineConfig c = ConfigFor(HalfKitti());
  c.workers = 2;
  const auto errors = run_batch({{dir.path() / "a", dir.path() / "a.json"},
                                 {dir.path() / "b", dir.path() / "b.json"},
                                 {dir.path() / "none", dir.path() / "none.json"}},
                                c);
  ASSERT_EQ(errors.size(), 3u);
  EXPECT_EQ(errors[0], "");
  EXPECT_EQ(errors[1], "");
  EXPECT_NE(errors[2].find("detections.jsonl"), std::string::npos);
  // Same result as a sequential run.
  run_pipeline(dir.path() / "b", c, dir.path() / "b_seq.json");
  EXPECT_EQ(io::read_text(dir.path() / "b.json"), io::read_text(dir.path() / "b_seq.json"));
}

}  // namespace
}  // namespace crashscene::pipeline
