#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crashscene/camera_geometry.hpp"
#include "crashscene/lane_pipeline.hpp"
#include "crashscene/metrics.hpp"
#include "crashscene/scenario_synth.hpp"
#include "crashscene/tracking.hpp"
#include "crashscene/trajectory_builder.hpp"

namespace crashscene::pipeline {

namespace fs = std::filesystem;

enum class IntrinsicsSource { kConfig, kCalibrate, kDatasetDefault };
enum class EgoSource { kAuto, kOdometry, kConstant };

// KITTI focal length, used with the principal point at the image center.
inline constexpr double kDatasetFocal = 721.5377;

// Every tunable of the pipeline. The key of each field in the config file is
// its name; see README for units and ranges.
struct PipelineConfig {
  double frame_rate = 10.0;
  IntrinsicsSource intrinsics = IntrinsicsSource::kDatasetDefault;
  double fu = 0.0;
  double fv = 0.0;
  double cu = 0.0;
  double cv = 0.0;
  double camera_height = 1.65;
  double camera_pitch = 0.0;
  double max_depth = camera::kDefaultMaxDepth;
  double depth_scale = 1.0 / 256.0;
  // Mean of the visible surface sits on the near face; push it back along
  // the line of sight by half a vehicle length.
  double center_offset = 2.25;
  double ego_ref_u = -1.0;  // < 0: principal point column
  double min_score = 0.0;

  tracking::TrackerConfig tracker;
  lanes::LaneConfig lanes;
  trajectory::SmoothingConfig smoothing;
  int max_gap = 5;
  int min_track_length = 5;

  EgoSource ego_mode = EgoSource::kAuto;
  double ego_speed = 0.0;

  int lane_count = 2;
  double accel = 2.5;
  double min_gap = 6.0;
  double collision_distance = 2.0;
  double road_smoothness = 1.0;
  double road_spacing = 2.0;
  double standoff = 8.0;
  double match_threshold = 3.0;
  int workers = 1;

  // Throws ConfigError naming the first out-of-range key.
  void validate() const;
  scenario::ScenarioConfig scenario_config() const;
};

// TOML-style "key = value" lines; '#' starts a comment and string values may
// be quoted. Unknown keys, repeated keys and bad values throw ConfigError
// with the line number.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const fs::path& path);
// Canonical "key = value" listing of every key.
std::string config_to_text(const PipelineConfig& config);

// ------------------------------------------------------------- synthetic

// Straight road along world +x. Motions are either per-frame waypoints
// ([frame, x, y], linear in between) or a constant-acceleration run.
struct Motion {
  std::vector<std::array<double, 3>> waypoints;  // frame, x, y
  // Used when waypoints is empty.
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  int accel_frame = 0;  // acceleration starts here
  int first_frame = 0;
  int last_frame = -1;  // < 0: through the last scene frame
};

struct ScriptVehicle {
  int id = 0;
  double length = 4.5;
  double width = 1.8;
  double height = 1.5;
  Motion motion;
};

struct SceneScript {
  int frames = 60;
  double frame_rate = 10.0;
  camera::ImageSize image{1242, 375};
  double camera_height = 1.65;
  double camera_pitch = 0.0;
  double max_depth = camera::kDefaultMaxDepth;
  double lane_width = 3.7;
  std::vector<double> lane_lines;  // world y of painted lines
  double line_width = 0.15;
  bool write_lanes = true;
  bool write_odometry = true;
  Motion ego;
  std::vector<ScriptVehicle> vehicles;
};

// JSON scene script; unknown keys throw ScriptError. Empty lane_lines means
// lines at -W/2, W/2 and 1.5 W.
SceneScript parse_scene_script(const nlohmann::json& doc);
SceneScript load_scene_script(const fs::path& path);

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

// Scripted pose at `frame`, or nullopt when the motion is not active.
std::optional<VehicleState> motion_state(const Motion& motion, int frame, double frame_rate);

struct SyntheticOutput {
  std::vector<metrics::TrackPoint> ground_truth;  // visible frames, vehicle centers
  std::vector<trajectory::OdometryPose> ego;
  int detections = 0;
};

// Ray-casts every frame: depth/%06d.pgm, masks/%06d_%02d.png,
// detections.jsonl, lanes/%06d.png, odometry.csv and gt.csv. A vehicle
// with any corner at or behind the image plane throws ScriptError naming
// the frame.
SyntheticOutput generate_synthetic(const SceneScript& script, const camera::CameraIntrinsics& intrinsics,
                                   const fs::path& output_dir);

// ---------------------------------------------------------------- pipeline

struct PipelineResult {
  scenario::ScenarioBuild build;
  trajectory::Trajectory ego;
  std::vector<trajectory::Trajectory> agents;  // smoothed, observed frames only
  std::vector<metrics::TrackPoint> estimates;  // agents as frame,id,x,y
  camera::CameraIntrinsics intrinsics;
  double pitch = 0.0;
  std::vector<std::string> diagnostics;
};

// input_dir holds detections.jsonl and depth/ (mandatory), and optionally
// lanes/ or lanes.jsonl and odometry.csv. Writes the scenario to
// output_path and, next to it, <stem>_vehicle_<id>.csv per vehicle,
// <stem>_tracks.csv and <stem>.log. Diagnostics also go to stderr when
// `echo` is set.
PipelineResult run_pipeline(const fs::path& input_dir, const PipelineConfig& config,
                            const fs::path& output_path, bool echo = false);

struct BatchJob {
  fs::path input_dir;
  fs::path output_path;
};

// Runs independent scenes on config.workers threads. Returns one error
// message per job (empty on success), in job order.
std::vector<std::string> run_batch(const std::vector<BatchJob>& jobs, const PipelineConfig& config);

}  // namespace crashscene::pipeline
