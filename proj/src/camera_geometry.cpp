#include "crashscene/camera_geometry.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "crashscene/errors.hpp"

namespace crashscene::camera {

void CameraIntrinsics::validate(ImageSize size) const {
  std::ostringstream why;
  if (!(fu > 0.0) || !(fv > 0.0)) why << "focal lengths must be positive; ";
  if (!(cu >= 0.0 && cu < size.width)) why << "c_u outside image; ";
  if (!(cv >= 0.0 && cv < size.height)) why << "c_v outside image; ";
  if (!why.str().empty()) throw ParameterError("invalid intrinsics: " + why.str());
}

CameraIntrinsics CameraIntrinsics::centered(double focal, ImageSize size) {
  return {focal, focal, size.width / 2.0, size.height / 2.0};
}

DepthMap::DepthMap(int w, int h, double fill)
    : width(w), height(h), depth(static_cast<std::size_t>(w) * h, fill) {}

PixelMask::PixelMask(int w, int h, bool fill)
    : width(w), height(h), member(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

Point3 backproject(double u, double v, const CameraIntrinsics& intrinsics, double depth) {
  if (!(depth > 0.0)) {
    throw InvalidDepthError("depth must be positive, got " + std::to_string(depth));
  }
  return {(u - intrinsics.cu) * depth / intrinsics.fu, (v - intrinsics.cv) * depth / intrinsics.fv,
          depth};
}

Point3 backproject_pixel(double u, double v, const CameraIntrinsics& intrinsics, double depth,
                         ImageSize size) {
  if (!(u >= 0.0 && u < size.width && v >= 0.0 && v < size.height)) {
    std::ostringstream msg;
    msg << "pixel (" << u << ", " << v << ") outside " << size.width << "x" << size.height
        << " image";
    throw BoundsError(msg.str());
  }
  return backproject(u, v, intrinsics, depth);
}

PixelCoord project(const Point3& point, const CameraIntrinsics& intrinsics) {
  if (!(point.z > 0.0)) throw InvalidDepthError("cannot project a point with z <= 0");
  return {point.x * intrinsics.fu / point.z + intrinsics.cu,
          point.y * intrinsics.fv / point.z + intrinsics.cv};
}

PointCloud backproject_masked(const DepthMap& depth, const PixelMask& mask,
                              const CameraIntrinsics& intrinsics, double max_depth) {
  if (depth.width != mask.width || depth.height != mask.height) {
    std::ostringstream msg;
    msg << "depth map is " << depth.width << "x" << depth.height << " but mask is " << mask.width
        << "x" << mask.height;
    throw ShapeError(msg.str());
  }
  PointCloud cloud;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if (!mask.at(u, v)) continue;
      const double d = depth.at(u, v);
      if (d > 0.0 && d <= max_depth) cloud.push_back(backproject(u, v, intrinsics, d));
    }
  }
  return cloud;
}

Point3 estimate_position(std::span<const Point3> cloud) {
  if (cloud.empty()) throw EmptyCloudError("cannot estimate a position from an empty cloud");
  Point3 sum;
  for (const auto& p : cloud) {
    sum.x += p.x;
    sum.y += p.y;
    sum.z += p.z;
  }
  const double n = static_cast<double>(cloud.size());
  return {sum.x / n, sum.y / n, sum.z / n};
}

Point3 level_to_camera(const Point3& level, double pitch) {
  const double c = std::cos(pitch);
  const double s = std::sin(pitch);
  return {level.x, level.y * c - level.z * s, level.y * s + level.z * c};
}

Point3 camera_to_level(const Point3& camera, double pitch) {
  const double c = std::cos(pitch);
  const double s = std::sin(pitch);
  return {camera.x, camera.y * c + camera.z * s, -camera.y * s + camera.z * c};
}

double ImageLine::u_at(double v) const {
  return a.u + (b.u - a.u) * (v - a.v) / (b.v - a.v);
}

namespace {

constexpr double kParallelTolerance = 1e-12;

// Intersection of two image lines, false when (near) parallel.
bool intersect(const ImageLine& l1, const ImageLine& l2, PixelCoord* out) {
  const double d1u = l1.b.u - l1.a.u;
  const double d1v = l1.b.v - l1.a.v;
  const double d2u = l2.b.u - l2.a.u;
  const double d2v = l2.b.v - l2.a.v;
  const double cross = d1u * d2v - d1v * d2u;
  const double scale = std::hypot(d1u, d1v) * std::hypot(d2u, d2v);
  if (scale == 0.0 || std::abs(cross) <= kParallelTolerance * scale) return false;
  const double t = ((l2.a.u - l1.a.u) * d2v - (l2.a.v - l1.a.v) * d2u) / cross;
  *out = {l1.a.u + t * d1u, l1.a.v + t * d1v};
  return true;
}

}  // namespace

LaneCalibration calibrate_from_lanes(const ImageLine& left_line, const ImageLine& right_line,
                                     double lane_width, double camera_height, ImageSize image) {
  if (!(lane_width > 0.0) || !(camera_height > 0.0)) {
    throw ParameterError("lane_width and camera_height must be positive");
  }
  if (image.width <= 0 || image.height <= 0) throw ParameterError("empty image");

  PixelCoord vanishing;
  if (!intersect(left_line, right_line, &vanishing)) {
    throw CalibrationInfeasibleError("lane lines are parallel in the image");
  }
  const double cu = image.width / 2.0;
  const double cv = image.height / 2.0;
  const double bottom = image.height - 1.0;
  const double offset = cv - vanishing.v;
  const double rows_below = bottom - vanishing.v;
  if (rows_below <= 0.0) {
    throw CalibrationInfeasibleError("lane lines meet below the bottom row");
  }
  // Both lines pass through the vanishing point, so the bottom-row gap
  // follows from the slopes alone.
  const double gap = std::abs(left_line.u_at(bottom) - right_line.u_at(bottom));
  if (!(gap > 0.0) || !std::isfinite(gap)) {
    throw CalibrationInfeasibleError("lane lines do not separate at the bottom row");
  }

  const double scale = lane_width * rows_below / camera_height;
  auto residual = [&](double f) { return scale * f / std::hypot(f, offset) - gap; };

  double lo = 10.0;
  double hi = 10.0 * image.width;
  double r_lo = residual(lo);
  const double r_hi = residual(hi);
  if (r_lo * r_hi > 0.0 || offset == 0.0) {
    throw CalibrationInfeasibleError("no focal length in [10, 10*width] matches the lane gap");
  }
  while ((hi - lo) > 1e-12 * hi) {
    const double mid = 0.5 * (lo + hi);
    const double r_mid = residual(mid);
    if (r_mid == 0.0) {
      lo = hi = mid;
      break;
    }
    if ((r_mid < 0.0) == (r_lo < 0.0)) {
      lo = mid;
      r_lo = r_mid;
    } else {
      hi = mid;
    }
  }
  const double f = 0.5 * (lo + hi);
  return {CameraIntrinsics{f, f, cu, cv}, std::atan2(offset, f)};
}

std::pair<ImageLine, ImageLine> render_ground_lanes(const CameraIntrinsics& intrinsics,
                                                    double pitch, double camera_height,
                                                    double left_x, double right_x) {
  auto line_for = [&](double x) {
    const PixelCoord near = project(level_to_camera({x, camera_height, 5.0}, pitch), intrinsics);
    const PixelCoord far = project(level_to_camera({x, camera_height, 60.0}, pitch), intrinsics);
    return ImageLine{near, far};
  };
  return {line_for(left_x), line_for(right_x)};
}

}  // namespace crashscene::camera
