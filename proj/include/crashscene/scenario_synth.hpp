#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crashscene/category.hpp"
#include "crashscene/spline.hpp"
#include "crashscene/trajectory_builder.hpp"

namespace crashscene::scenario {

using spline::Vec2;
using trajectory::SmoothTrajectory;
using trajectory::Trajectory;

// ---------------------------------------------------------------- taxonomy

struct EgoFramePoint {
  int frame = 0;
  double lon = 0.0;  // along the ego heading, m
  double lat = 0.0;  // to the ego's left, m
};

// Agent positions expressed in the ego frame at the same frame. Every agent
// frame needs an ego pose (FrameMismatchError otherwise).
std::vector<EgoFramePoint> to_ego_frame(const Trajectory& agent, const Trajectory& ego);

struct ClassifyOptions {
  double frame_rate = 10.0;
  // An agent first seen within this many frames of the clip start counts
  // as present from the first frame.
  int start_tolerance = 0;
  // Observations used for entry/exit trends.
  int trend_window = 5;
  // Longitudinal closing rate (m/s) above which a late entrant is taken to
  // have come from behind.
  double behind_rate = 0.5;
};

// Ego passes an oncoming agent when the agent's ego-frame longitudinal
// coordinate changes sign, either within the observations or, for a track
// that ends before the clip does, on linear extrapolation of its last trend
// before the clip ends.
bool ego_passes(const std::vector<EgoFramePoint>& rel, int last_clip_frame, int trend_window);

// D0 iff the headings at the agent's first frame differ by less than pi/2.
// Late D0 entrants come from behind when first seen behind the ego or when
// their longitudinal coordinate grows over the first observations.
// Throws ClassificationError for fewer than two poses.
AgentCategory classify_agent(const Trajectory& agent, const Trajectory& ego,
                             const ClassifyOptions& options);

// -------------------------------------------------------------------- road

struct RoadSpec {
  std::vector<Vec2> centerline;
  int lane_count = 2;
  double lane_width = 3.7;

  friend bool operator==(const RoadSpec&, const RoadSpec&) = default;
};

// Arc-length frame of a polyline; linear beyond both ends.
class RoadFrame {
 public:
  explicit RoadFrame(const std::vector<Vec2>& centerline);

  struct Projection {
    double s = 0.0;        // arc length
    double d = 0.0;        // signed lateral offset, left positive
    double heading = 0.0;  // tangent heading at s
  };
  Projection project(const Vec2& p) const;
  Vec2 point(double s, double d) const;
  double heading(double s) const;
  double length() const { return cum_.back(); }

 private:
  std::size_t segment(double s) const;

  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

struct RoadConfig {
  int lane_count = 2;
  double lane_width = 3.7;
  // Residual budget of the centerline fit per sample point, m^2.
  double smoothness = 1.0;
  double spacing = 2.0;
  // Oncoming tails shorter than this beyond the ego end are ignored.
  double min_extension = 2.0;
  // Length of the Hermite bridge between the ego end and the tail.
  double bridge_length = 6.0;
};

struct RoadResult {
  RoadSpec road;
  bool extended = false;
};

// Centerline = heavily smoothed ego path resampled at ~spacing. The oncoming
// path reaching furthest beyond the ego end, shifted so that its lateral
// offset at the junction is zero, is bridged onto the end with a cubic
// Hermite segment that starts on the end tangent. Throws ParameterError for
// ego paths shorter than 10 m.
RoadResult generate_road(const SmoothTrajectory& ego, const std::vector<SmoothTrajectory>& oncoming,
                         const RoadConfig& config);

// ----------------------------------------------------------- extrapolation

struct ExtrapolationConfig {
  double frame_rate = 10.0;
  double standoff = 8.0;              // m behind the ego for pre-entry D0T2
  double min_relative_speed = 2.0;    // m/s, D0T2 back-extrapolation
  int speed_window = 5;               // observations averaged for extension speed
  double overtaken_speed_ratio = 0.9;  // of ego mean speed
};

struct Extrapolated {
  Trajectory trajectory;
  double start_delay = 0.0;
  bool road_departure = false;
};

// Category-specific completion of an observed track:
//  D0T1/D1T2        unchanged;
//  D0T2             frames before entry are synthesised to mimic the ego at
//                   up to `standoff` m behind it, outside a 90 degree
//                   forward wedge;
//  D0T3/D1T3/D1T4   start_delay = (first frame - ego first frame)/frame_rate.
// Tracks that end before sim_duration continue along the road: oncoming at
// their recent mean speed, overtaken D0 agents at no more than
// overtaken_speed_ratio of the ego mean speed.
Extrapolated extrapolate(const Trajectory& agent, AgentCategory category, const RoadSpec& road,
                         const Trajectory& ego, double sim_duration,
                         const ExtrapolationConfig& config);

// --------------------------------------------------------------- step-back

struct StepBackEntry {
  double v_t = 0.0;  // m/s at first appearance
  double t_s = 0.0;  // s
  double d_s = 0.0;  // m
  double D_s = 0.0;  // m
};

struct StepBack {
  std::vector<StepBackEntry> entries;
  double t_s_max = 0.0;
  double accel = 0.0;
};

StepBack compute_stepback(const std::vector<double>& targets, double accel);

// Straight lead-in ending at the first pose: the vehicle starts at rest at
// t = 0, accelerates at `accel` to v_t, then holds v_t until it reaches the
// first pose at t_s_max.
struct LeadIn {
  Vec2 start;
  double heading = 0.0;
  StepBackEntry step;
  double t_s_max = 0.0;
  double accel = 0.0;
  std::vector<Vec2> waypoints;  // start ... first pose, spacing <= leadin spacing

  double distance_at(double t) const;
  double speed_at(double t) const;
  Vec2 position_at(double t) const;
  // Breakpoints (t, v) of the piecewise-linear speed profile.
  std::vector<std::pair<double, double>> speed_profile() const;
};

LeadIn build_leadin(const trajectory::Pose2D& first, const StepBackEntry& step, double t_s_max,
                    double accel, double spacing);

// ---------------------------------------------------------------- scenario

struct VehicleSpec {
  int id = 0;
  AgentCategory category = AgentCategory::kD0T1;
  double start_delay = 0.0;
  std::vector<Vec2> lead_in;
  std::vector<Vec2> waypoints;  // one per frame from first appearance
  std::vector<double> speeds;   // one per waypoint

  friend bool operator==(const VehicleSpec&, const VehicleSpec&) = default;
};

struct ScenarioSpec {
  RoadSpec road;
  std::vector<VehicleSpec> vehicles;
  double frame_rate = 10.0;
  nlohmann::json meta = nlohmann::json::object();

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

struct Conflict {
  int id_a = 0;
  int id_b = 0;
  double distance = 0.0;
};

// Pairs whose positions at t = 0 (lead-in start, or first waypoint) are
// closer than min_gap.
std::vector<Conflict> check_overlaps(const ScenarioSpec& scenario, double min_gap);

// Each message names the violated invariant.
std::vector<std::string> validate_scenario(const ScenarioSpec& scenario);

// Canonical JSON: sorted keys, fixed 6-decimal reals, one point per line.
std::string to_canonical_json(const ScenarioSpec& scenario);
ScenarioSpec scenario_from_json(const nlohmann::json& doc);
ScenarioSpec parse_scenario(const std::string& text);

// Validates, then writes atomically (temp file + rename). Throws
// ValidationError listing violations and IoError with the path.
void export_scenario(const ScenarioSpec& scenario, const std::filesystem::path& path);
ScenarioSpec import_scenario(const std::filesystem::path& path);

// Writes `text` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

struct AgentInput {
  Trajectory trajectory;  // smoothed world-frame poses with tangent yaw
  SmoothTrajectory path;
};

struct ScenarioConfig {
  double frame_rate = 10.0;
  double accel = 2.5;
  double min_gap = 6.0;
  double collision_distance = 2.0;
  double leadin_spacing = 0.5;
  RoadConfig road;
  ClassifyOptions classify;
  ExtrapolationConfig extrapolation;
};

struct ScenarioBuild {
  ScenarioSpec scenario;
  std::vector<AgentCategory> categories;  // per input agent
  std::vector<Conflict> conflicts;
  std::vector<std::string> warnings;
  int collision_frame = 0;
};

// First frame where an agent comes within `distance` of the ego, else the
// ego's last frame.
int find_collision_frame(const Trajectory& ego, const std::vector<Trajectory>& agents,
                         double distance);

ScenarioBuild assemble_scenario(const Trajectory& ego, const SmoothTrajectory& ego_path,
                                const std::vector<AgentInput>& agents,
                                const ScenarioConfig& config);

}  // namespace crashscene::scenario
