#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace crashscene::camera {

// Camera frame: x right, y down, z forward (depth). Pixel (u, v) is
// column/row with the origin at the top-left corner.

inline constexpr double kDefaultMaxDepth = 120.0;  // m

struct ImageSize {
  int width = 0;
  int height = 0;
};

struct CameraIntrinsics {
  double fu = 0.0;
  double fv = 0.0;
  double cu = 0.0;
  double cv = 0.0;

  // Throws ParameterError when the intrinsics are not usable for `size`.
  void validate(ImageSize size) const;

  // Equal focal lengths with the principal point at the image center.
  static CameraIntrinsics centered(double focal, ImageSize size);
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

using PointCloud = std::vector<Point3>;

// Row-major depth in meters. Non-positive samples are invalid.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  DepthMap() = default;
  DepthMap(int w, int h, double fill = 0.0);

  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  double& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
  ImageSize size() const { return {width, height}; }
};

struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> member;  // nonzero = vehicle pixel

  PixelMask() = default;
  PixelMask(int w, int h, bool fill = false);

  bool at(int u, int v) const { return member[static_cast<std::size_t>(v) * width + u] != 0; }
  void set(int u, int v, bool value) {
    member[static_cast<std::size_t>(v) * width + u] = value ? 1 : 0;
  }
};

// Pinhole back-projection without a bounds check. Throws InvalidDepthError
// for depth <= 0.
Point3 backproject(double u, double v, const CameraIntrinsics& intrinsics, double depth);

// Same as backproject() but also requires 0 <= u < width, 0 <= v < height.
Point3 backproject_pixel(double u, double v, const CameraIntrinsics& intrinsics, double depth,
                         ImageSize size);

// Inverse of backproject(). Requires point.z > 0.
PixelCoord project(const Point3& point, const CameraIntrinsics& intrinsics);

// One point per mask pixel with 0 < depth <= max_depth, in row-major order.
PointCloud backproject_masked(const DepthMap& depth, const PixelMask& mask,
                              const CameraIntrinsics& intrinsics,
                              double max_depth = kDefaultMaxDepth);

// Component-wise mean. Throws EmptyCloudError on an empty cloud.
Point3 estimate_position(std::span<const Point3> cloud);

// Converts a point from the level camera frame (zero pitch) to the frame of
// a camera pitched down by `pitch` radians about its x axis.
Point3 level_to_camera(const Point3& level, double pitch);
Point3 camera_to_level(const Point3& camera, double pitch);

// An image-space line through two pixels (top-left origin).
struct ImageLine {
  PixelCoord a;
  PixelCoord b;

  // Column where the line crosses row v. Undefined for horizontal lines.
  double u_at(double v) const;
};

struct LaneCalibration {
  CameraIntrinsics intrinsics;
  double pitch = 0.0;  // rad, positive = tilted down
};

// Recovers the focal length of a pitched camera from two image lane lines
// of a straight road of known width. The principal point is fixed at the
// image center. The lane-line intersection gives the vanishing row, and
// the bottom-row lane width in pixels,
//
//   du = W * (v_b - v_vp) * f / (h * sqrt(f^2 + (c_v - v_vp)^2)),
//
// is monotone in f, so f is found by bisection on [10, 10 * width].
// Throws CalibrationInfeasibleError when no positive root exists.
LaneCalibration calibrate_from_lanes(const ImageLine& left_line, const ImageLine& right_line,
                                     double lane_width, double camera_height, ImageSize image);

// Forward model used by calibrate_from_lanes(): images of the ground lines
// x = left_x and x = right_x (level camera frame, ground at y = camera_height).
std::pair<ImageLine, ImageLine> render_ground_lanes(const CameraIntrinsics& intrinsics,
                                                    double pitch, double camera_height,
                                                    double left_x, double right_x);

}  // namespace crashscene::camera
