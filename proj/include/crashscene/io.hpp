#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crashscene/camera_geometry.hpp"
#include "crashscene/tracking.hpp"
#include "crashscene/trajectory_builder.hpp"

namespace crashscene::io {

namespace fs = std::filesystem;

// KITTI convention: meters = sample / 256.
inline constexpr double kDepthScale = 1.0 / 256.0;

// Binary 16-bit PGM ("P5", maxval 65535, big-endian). Sample 0 is invalid
// depth. Throws IoError / FormatError naming the path.
camera::DepthMap read_depth_pgm(const fs::path& path, double scale = kDepthScale);
// Depths round to the nearest sample; values <= 0 or beyond the range
// become 0.
void write_depth_pgm(const fs::path& path, const camera::DepthMap& depth, double scale = kDepthScale);

// Binary mask from an 8-bit PGM or a PNG (any color type); nonzero = set.
// The format follows the extension.
camera::PixelMask read_mask(const fs::path& path);
void write_mask_png(const fs::path& path, const camera::PixelMask& mask);

// Lane-pixel positions (top-left origin) of a binary mask.
std::vector<camera::PixelCoord> mask_pixels(const camera::PixelMask& mask);

// {"frame": int, "pixels": [[u, v], ...]} per line.
std::map<int, std::vector<camera::PixelCoord>> read_lanes_jsonl(const fs::path& path);
std::string lanes_to_jsonl(const std::map<int, std::vector<camera::PixelCoord>>& lanes);

// {"frame", "bbox": [u_min, v_min, u_max, v_max], "score", "mask_file"?, "class"}.
std::vector<tracking::Detection> parse_detections_jsonl(const std::string& text);
std::vector<tracking::Detection> read_detections_jsonl(const fs::path& path);
std::string detections_to_jsonl(const std::vector<tracking::Detection>& detections);

// "frame,x,y,yaw" with a mandatory header row.
std::vector<trajectory::OdometryPose> parse_odometry_csv(const std::string& text);
std::vector<trajectory::OdometryPose> read_odometry_csv(const fs::path& path);
std::string odometry_to_csv(const std::vector<trajectory::OdometryPose>& odometry);

std::string read_text(const fs::path& path);
// Atomic replace via a temporary sibling.
void write_text(const fs::path& path, const std::string& text);

}  // namespace crashscene::io
