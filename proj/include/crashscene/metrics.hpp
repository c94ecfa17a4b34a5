#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crashscene/trajectory_builder.hpp"

namespace crashscene::metrics {

// One object position in one frame. Ground-plane meters; for ego-relative
// input x is forward and y is to the left.
struct TrackPoint {
  int frame = 0;
  int object_id = 0;
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

// Rigidly transforms each ego-relative point by its frame's ego pose.
// Throws GapError listing every frame without odometry.
std::vector<TrackPoint> absolutize_ground_truth(std::span<const TrackPoint> relative,
                                                std::span<const trajectory::OdometryPose> odometry);

struct MetricsReport {
  // Percentages.
  double MOTA = 0.0;
  double MOTP = 0.0;
  double MODA = 0.0;
  double MODP = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double F1 = 0.0;
  double FAR = 0.0;
  double MT = 0.0;
  double PT = 0.0;
  double ML = 0.0;
  // Counts.
  int TP = 0;
  int FP = 0;
  int FN = 0;
  int IDSW = 0;
  int objects = 0;       // gt object-frames
  int trajectories = 0;  // distinct gt ids
  int frames = 0;        // frames present in gt or est
};

struct EvaluateOptions {
  double match_threshold = 3.0;  // m
  double mostly_tracked = 0.8;
  double mostly_lost = 0.2;
};

// CLEAR-MOT on absolute positions. Each frame is matched independently with
// the Hungarian method on Euclidean distance, pairs further apart than the
// threshold never match. Throws UndefinedMetricsError for empty gt and
// ParameterError for a non-positive threshold or a repeated (frame, id).
MetricsReport evaluate(std::span<const TrackPoint> gt, std::span<const TrackPoint> est,
                       const EvaluateOptions& options = {});

// Three-block text table in the layout of the paper's tracking results.
std::string format_report(const MetricsReport& report, const std::string& sequence = "SEQ");
nlohmann::json report_to_json(const MetricsReport& report);

// CSV "frame,object_id,x,y"; an optional header line is skipped.
std::vector<TrackPoint> parse_tracks_csv(const std::string& text);
std::vector<TrackPoint> read_tracks_csv(const std::filesystem::path& path);
std::string tracks_to_csv(std::span<const TrackPoint> tracks);

}  // namespace crashscene::metrics
