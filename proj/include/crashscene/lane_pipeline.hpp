#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "crashscene/camera_geometry.hpp"

namespace crashscene::lanes {

// Lane pixels use a bottom-left origin: u grows right, v grows up, and the
// bottom image row is v = 0. Convert with from_top_left() at ingestion.
struct PixelPoint {
  double u = 0.0;
  double v = 0.0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

PixelPoint from_top_left(double u, double v_top, int image_height);

struct Clustering {
  std::vector<std::vector<std::size_t>> clusters;  // indices into the input
  std::vector<std::size_t> noise;
};

// DBSCAN under Euclidean pixel distance. `min_pts` counts the point itself.
// Points are visited in (u, v) order, so the partition does not depend on
// the input order.
Clustering cluster_lane_pixels(std::span<const PixelPoint> pixels, double eps, std::size_t min_pts);

// u = slope * v + intercept; x_intercept is u at v = 0 (the bottom row).
struct LaneLine {
  double slope = 0.0;
  double intercept = 0.0;
  double x_intercept = 0.0;
};

// Total-least-squares line through the cluster. Throws FitError when all
// points coincide and NoInterceptError when the line does not reach v = 0
// within 10 image widths of the origin.
LaneLine fit_lane_line(std::span<const PixelPoint> cluster, double image_width);

// max over a of min over b of |p - q|.
double directed_hausdorff(std::span<const PixelPoint> a, std::span<const PixelPoint> b);

struct LaneObservation {
  int frame = 0;
  std::vector<PixelPoint> pixels;
  LaneLine line;
  int lane_id = -1;

  double x_intercept() const { return line.x_intercept; }
};

struct TrackedLane {
  int id = 0;
  int last_seen = 0;
  std::vector<PixelPoint> pixels;
  LaneLine line;
};

// Hungarian matching on directed Hausdorff cost (current -> previous).
// Pairs above max_cost are rejected and those observations take fresh ids
// drawn from *next_id. Returns one id per current observation.
std::vector<int> associate_lanes(const std::vector<TrackedLane>& previous,
                                 const std::vector<std::vector<PixelPoint>>& current,
                                 double max_cost, int* next_id);

struct LateralFix {
  int frame = 0;
  double offset_in_lane = 0.0;  // m from the left boundary of the ego lane
  double lane_width_px = 0.0;
  int ego_lane_id = -1;
};

// Places the ego between two x-intercepts, scaled by the known lane width.
// Throws DegenerateLaneError unless left_intercept < right_intercept.
LateralFix lateral_offset(double ego_ref_u, double left_intercept, double right_intercept,
                          double lane_width);

struct LaneConfig {
  double eps = 15.0;
  std::size_t min_pts = 20;
  double lower_fraction = 0.4;  // share of image rows (from the bottom) used
  double max_cost = 50.0;       // association gate, px
  int survival_frames = 5;
  double lane_width = 3.7;

  void validate() const;
};

struct FrameLanes {
  std::vector<LaneObservation> observations;
  std::optional<LateralFix> fix;
  // Ego-lane boundaries as image lines (top-left origin), when both exist.
  std::optional<std::pair<camera::ImageLine, camera::ImageLine>> ego_boundaries;
};

// Lane identity state for one scene. Frames must arrive in increasing order.
class LaneTracker {
 public:
  LaneTracker(LaneConfig config, camera::ImageSize image);

  // `pixels_top_left` are raw (u, v) lane-mask pixels with a top-left origin.
  FrameLanes process(int frame, std::span<const camera::PixelCoord> pixels_top_left,
                     double ego_ref_u);

  const std::vector<TrackedLane>& lanes() const { return lanes_; }

 private:
  LaneConfig config_;
  camera::ImageSize image_;
  std::vector<TrackedLane> lanes_;
  int next_id_ = 1;
};

}  // namespace crashscene::lanes
