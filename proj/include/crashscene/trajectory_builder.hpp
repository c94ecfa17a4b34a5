#pragma once

#include <optional>
#include <span>
#include <vector>

#include "crashscene/camera_geometry.hpp"
#include "crashscene/category.hpp"
#include "crashscene/lane_pipeline.hpp"
#include "crashscene/spline.hpp"

namespace crashscene::trajectory {

// World frame: origin at the first ego pose, x = initial ego forward,
// y = left. Angles are radians in (-pi, pi].
struct Pose2D {
  int frame = 0;
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

struct Trajectory {
  int vehicle_id = 0;
  std::vector<Pose2D> poses;  // strictly increasing frame and t
  std::vector<double> speeds;  // m/s, one per pose
  std::optional<AgentCategory> category;

  bool empty() const { return poses.empty(); }
  // Pose at `frame`, or nullptr.
  const Pose2D* at_frame(int frame) const;
  void validate() const;
};

double normalize_angle(double a);

struct OdometryPose {
  int frame = 0;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

enum class EgoMode { kConstantStraight, kFromOdometry };

// kConstantStraight: pose k = (k / frame_rate, k * speed / frame_rate, 0, 0).
// kFromOdometry: poses pass through, re-timed as frame / frame_rate; every
// frame in [0, frame_count) must be present (GapError lists the missing).
Trajectory ego_trajectory(EgoMode mode, std::span<const OdometryPose> odometry, double speed,
                          int frame_count, double frame_rate);

struct LaneCorrection {
  Trajectory trajectory;
  bool warning = false;  // no fixes were available
};

// Replaces the ego's lateral coordinate with the lane-derived one. The left
// boundary of the ego lane is anchored at its world position in the first
// fixed frame; later offsets are unwrapped by whole lane widths so that lane
// changes stay continuous. Unfixed frames interpolate linearly between fixed
// neighbours and keep the nearest edge's shift outside the fixed range.
// x, t and yaw are copied untouched.
LaneCorrection apply_lane_correction(const Trajectory& ego, std::span<const lanes::LateralFix> fixes,
                                     double lane_width);

struct RelativeObservation {
  int frame = 0;
  camera::Point3 position;  // camera frame: x right, y down, z forward
};

// world = ego + R(yaw) * (z, -x). Observations must be ordered by frame and
// each frame needs an ego pose (FrameMismatchError otherwise). Yaw is copied
// from the ego and speeds are zero; both are filled in after smoothing.
Trajectory compose_agent_trajectory(const Trajectory& ego,
                                    std::span<const RelativeObservation> observations,
                                    int vehicle_id);

// Least-squares polynomial smoothing over a sliding odd window. Points
// within half a window of either end take the value of the polynomial
// fitted to the first (or last) full window.
std::vector<double> savitzky_golay(std::span<const double> series, int window, int polyorder);

// Applies savitzky_golay to x and y.
Trajectory savitzky_golay(const Trajectory& traj, int window, int polyorder);

// Spline path over time with an arc-length lookup table.
class SmoothTrajectory {
 public:
  SmoothTrajectory() = default;
  SmoothTrajectory(int vehicle_id, spline::CubicSpline2D spline);

  int vehicle_id() const { return vehicle_id_; }
  const spline::CubicSpline2D& spline() const { return spline_; }
  double t_begin() const { return spline_.front(); }
  double t_end() const { return spline_.back(); }

  spline::Vec2 position(double t) const { return spline_.value(t); }
  spline::Vec2 velocity(double t) const { return spline_.derivative(t); }
  double arc_length() const { return arc_.empty() ? 0.0 : arc_.back(); }
  double arc_length_at(double t) const;
  double time_at_arc_length(double s) const;
  spline::Vec2 position_at_arc_length(double s) const { return position(time_at_arc_length(s)); }

 private:
  int vehicle_id_ = 0;
  spline::CubicSpline2D spline_;
  std::vector<double> arc_t_;
  std::vector<double> arc_;
};

struct SmoothingConfig {
  int sg_window = 11;
  int sg_polyorder = 3;
  int local_window = 25;         // poses; neighbouring windows overlap by half
  // Curvature penalty weights of the two spline stages, with time measured
  // in frames (mean pose spacing). Zero interpolates.
  double local_smoothness = 5.0;
  double global_smoothness = 0.5;
  double endpoint_weight = 1e4;

  void validate() const;
};

struct SmoothResult {
  SmoothTrajectory path;
  bool warning = false;  // too few poses for the windowed stage
};

// Stage 1 fits a smoothing spline per window and blends overlaps with tent
// weights; stage 2 fits one spline to the blended points. Trajectories with
// fewer than 4 poses get a single global fit and a warning.
SmoothResult smooth_two_level(const Trajectory& traj, const SmoothingConfig& config);

// Central differences (one-sided at the ends), dt = frame difference /
// frame_rate. Magnitudes only.
std::vector<double> estimate_speeds(const Trajectory& traj, double frame_rate);

// Samples the smoothed path at the raw trajectory's frames. Yaw follows the
// path tangent; where the vehicle is (nearly) stationary the previous yaw,
// or `fallback_yaw` at the start, is kept.
Trajectory resample(const SmoothTrajectory& path, const Trajectory& raw, double frame_rate,
                    double fallback_yaw);

// Fills runs of fewer than `max_gap` missing frames by linear interpolation
// and splits the track at longer gaps.
std::vector<Trajectory> fill_gaps(const Trajectory& traj, int max_gap);

}  // namespace crashscene::trajectory
