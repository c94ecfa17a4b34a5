#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "crashscene/errors.hpp"
#include "crashscene/io.hpp"
#include "crashscene/pipeline.hpp"

namespace crashscene::pipeline {

using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ScriptError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
        allowed.end()) {
      throw ScriptError(where + ": unknown key '" + key + "'");
    }
  }
}

Motion parse_motion(const json& j, const std::string& where) {
  check_keys(j, {"waypoints", "x", "y", "heading", "speed", "accel", "accel_frame", "first_frame", "last_frame"},
             where);
  Motion m;
  if (j.contains("waypoints")) {
    for (const auto& w : j.at("waypoints")) {
      if (!w.is_array() || w.size() != 3) throw ScriptError(where + ": waypoint must be [frame, x, y]");
      m.waypoints.push_back({w[0].get<double>(), w[1].get<double>(), w[2].get<double>()});
    }
    if (m.waypoints.empty()) throw ScriptError(where + ": empty waypoint list");
    for (std::size_t i = 1; i < m.waypoints.size(); ++i) {
      if (!(m.waypoints[i][0] > m.waypoints[i - 1][0])) {
        throw ScriptError(where + ": waypoint frames must increase");
      }
    }
  }
  m.x = j.value("x", 0.0);
  m.y = j.value("y", 0.0);
  m.heading = j.value("heading", 0.0);
  m.speed = j.value("speed", 0.0);
  m.accel = j.value("accel", 0.0);
  m.first_frame = j.value("first_frame", 0);
  m.accel_frame = j.value("accel_frame", m.first_frame);
  m.last_frame = j.value("last_frame", -1);
  if (m.speed < 0.0) throw ScriptError(where + ": speed must be >= 0");
  return m;
}

}  // namespace

SceneScript parse_scene_script(const json& doc) {
  try {
    check_keys(doc, {"frames", "frame_rate", "image", "camera_height", "camera_pitch", "max_depth", "lanes",
                     "ego", "vehicles"},
               "scene");
    SceneScript s;
    s.frames = doc.value("frames", s.frames);
    s.frame_rate = doc.value("frame_rate", s.frame_rate);
    if (doc.contains("image")) {
      const auto& im = doc["image"];
      if (!im.is_array() || im.size() != 2) throw ScriptError("image must be [width, height]");
      s.image = {im[0].get<int>(), im[1].get<int>()};
    }
    s.camera_height = doc.value("camera_height", s.camera_height);
    s.camera_pitch = doc.value("camera_pitch", s.camera_pitch);
    s.max_depth = doc.value("max_depth", s.max_depth);
    if (doc.contains("lanes")) {
      const auto& l = doc["lanes"];
      check_keys(l, {"width", "lines", "line_width", "write"}, "lanes");
      s.lane_width = l.value("width", s.lane_width);
      if (l.contains("lines")) s.lane_lines = l["lines"].get<std::vector<double>>();
      s.line_width = l.value("line_width", s.line_width);
      s.write_lanes = l.value("write", true);
    }
    if (s.lane_lines.empty()) s.lane_lines = {-s.lane_width / 2, s.lane_width / 2, 1.5 * s.lane_width};
    if (doc.contains("ego")) {
      const auto& e = doc["ego"];
      json motion = e;
      s.write_odometry = e.value("odometry", true);
      motion.erase("odometry");
      s.ego = parse_motion(motion, "ego");
    }
    if (doc.contains("vehicles")) {
      for (const auto& v : doc["vehicles"]) {
        check_keys(v, {"id", "size", "motion"}, "vehicle");
        ScriptVehicle sv;
        sv.id = v.at("id").get<int>();
        if (v.contains("size")) {
          const auto& sz = v["size"];
          if (!sz.is_array() || sz.size() != 3) throw ScriptError("vehicle size must be [length, width, height]");
          sv.length = sz[0].get<double>();
          sv.width = sz[1].get<double>();
          sv.height = sz[2].get<double>();
        }
        if (!(sv.length > 0 && sv.width > 0 && sv.height > 0)) throw ScriptError("vehicle size must be positive");
        sv.motion = parse_motion(v.at("motion"), "vehicle " + std::to_string(sv.id));
        for (const auto& other : s.vehicles) {
          if (other.id == sv.id) throw ScriptError("duplicate vehicle id " + std::to_string(sv.id));
        }
        s.vehicles.push_back(std::move(sv));
      }
    }
    if (s.frames < 1) throw ScriptError("frames must be >= 1");
    if (!(s.frame_rate > 0.0)) throw ScriptError("frame_rate must be positive");
    if (s.image.width < 2 || s.image.height < 2) throw ScriptError("image must be at least 2x2");
    if (!(s.camera_height > 0.0)) throw ScriptError("camera_height must be positive");
    if (!(s.max_depth > 0.0 && s.max_depth < 256.0)) throw ScriptError("max_depth must lie in (0, 256) m");
    return s;
  } catch (const json::exception& e) {
    throw ScriptError(std::string("scene script: ") + e.what());
  }
}

SceneScript load_scene_script(const fs::path& path) {
  try {
    return parse_scene_script(json::parse(io::read_text(path)));
  } catch (const json::exception& e) {
    throw ScriptError(path.string() + ": " + e.what());
  } catch (const ScriptError& e) {
    throw ScriptError(path.string() + ": " + e.what());
  }
}

std::optional<VehicleState> motion_state(const Motion& m, int frame, double frame_rate) {
  if (!m.waypoints.empty()) {
    const auto& w = m.waypoints;
    const double f = frame;
    if (f < w.front()[0] || f > w.back()[0]) return std::nullopt;
    if (w.size() == 1) return VehicleState{w[0][1], w[0][2], m.heading};
    std::size_t i = 0;
    while (i + 2 < w.size() && w[i + 1][0] <= f) ++i;
    const double u = (f - w[i][0]) / (w[i + 1][0] - w[i][0]);
    const double dx = w[i + 1][1] - w[i][1];
    const double dy = w[i + 1][2] - w[i][2];
    const double yaw = std::hypot(dx, dy) > 1e-9 ? std::atan2(dy, dx) : m.heading;
    return VehicleState{w[i][1] + u * dx, w[i][2] + u * dy, yaw};
  }
  if (frame < m.first_frame || (m.last_frame >= 0 && frame > m.last_frame)) return std::nullopt;
  const double t = (frame - m.first_frame) / frame_rate;
  const double t0 = std::clamp((m.accel_frame - m.first_frame) / frame_rate, 0.0, t);
  double tau = t - t0;
  if (m.accel < 0.0) tau = std::min(tau, -m.speed / m.accel);  // stops, then stays
  const double s = m.speed * t0 + m.speed * tau + 0.5 * m.accel * tau * tau;
  return VehicleState{m.x + s * std::cos(m.heading), m.y + s * std::sin(m.heading), m.heading};
}

namespace {

struct Box {
  int id = 0;
  double cx = 0.0, cy = 0.0, c = 1.0, s = 0.0;
  double hl = 0.0, hw = 0.0, h = 0.0;
};

// Entry distance of the ray into the box, or +inf.
double ray_box(const Box& b, const double o[3], const double d[3]) {
  // Ray in the box frame.
  const double ox = b.c * (o[0] - b.cx) + b.s * (o[1] - b.cy);
  const double oy = -b.s * (o[0] - b.cx) + b.c * (o[1] - b.cy);
  const double dx = b.c * d[0] + b.s * d[1];
  const double dy = -b.s * d[0] + b.c * d[1];
  const double lo[3] = {-b.hl, -b.hw, 0.0};
  const double hi[3] = {b.hl, b.hw, b.h};
  const double oo[3] = {ox, oy, o[2]};
  const double dd[3] = {dx, dy, d[2]};
  double t_near = 0.0, t_far = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(dd[k]) < 1e-15) {
      if (oo[k] < lo[k] || oo[k] > hi[k]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t1 = (lo[k] - oo[k]) / dd[k];
    double t2 = (hi[k] - oo[k]) / dd[k];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
    if (t_near > t_far) return std::numeric_limits<double>::infinity();
  }
  return t_near > 0.0 ? t_near : std::numeric_limits<double>::infinity();
}

std::string frame_name(int frame, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d%s", frame, ext);
  return buf;
}

}  // namespace

SyntheticOutput generate_synthetic(const SceneScript& script, const camera::CameraIntrinsics& intr,
                                   const fs::path& output_dir) {
  intr.validate(script.image);
  const int width = script.image.width;
  const int height = script.image.height;
  std::error_code ec;
  for (const char* sub : {"depth", "masks", "lanes"}) {
    fs::create_directories(output_dir / sub, ec);
    if (ec) throw IoError((output_dir / sub).string() + ": " + ec.message());
  }
  if (!script.write_lanes) fs::remove_all(output_dir / "lanes", ec);

  // Level-camera ray of every pixel, expressed as (forward, left, up).
  std::vector<std::array<double, 3>> rays(static_cast<std::size_t>(width) * height);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const camera::Point3 dir{(u - intr.cu) / intr.fu, (v - intr.cv) / intr.fv, 1.0};
      const camera::Point3 level = camera::camera_to_level(dir, script.camera_pitch);
      rays[static_cast<std::size_t>(v) * width + u] = {level.z, -level.x, -level.y};
    }
  }

  SyntheticOutput out;
  std::vector<tracking::Detection> detections;
  const double half_line = script.line_width / 2;
  std::vector<double> lane_lines = script.lane_lines;
  if (lane_lines.empty()) lane_lines = {-script.lane_width / 2, script.lane_width / 2, 1.5 * script.lane_width};

  for (int frame = 0; frame < script.frames; ++frame) {
    const auto ego = motion_state(script.ego, frame, script.frame_rate);
    if (!ego) throw ScriptError("ego motion does not cover frame " + std::to_string(frame));
    out.ego.push_back({frame, ego->x, ego->y, ego->yaw});
    const double ce = std::cos(ego->yaw), se = std::sin(ego->yaw);

    std::vector<Box> boxes;
    std::vector<const ScriptVehicle*> owners;
    for (const auto& v : script.vehicles) {
      const auto st = motion_state(v.motion, frame, script.frame_rate);
      if (!st) continue;
      Box b{v.id, st->x, st->y, std::cos(st->yaw), std::sin(st->yaw), v.length / 2, v.width / 2, v.height};
      // Every corner must lie in front of the image plane.
      for (int k = 0; k < 8; ++k) {
        const double lx = (k & 1 ? 1 : -1) * b.hl, ly = (k & 2 ? 1 : -1) * b.hw, z = k & 4 ? b.h : 0.0;
        const double wx = b.cx + b.c * lx - b.s * ly - ego->x;
        const double wy = b.cy + b.s * lx + b.c * ly - ego->y;
        const camera::Point3 level{-(-se * wx + ce * wy), script.camera_height - z, ce * wx + se * wy};
        if (camera::level_to_camera(level, script.camera_pitch).z <= 0.1) {
          throw ScriptError("frame " + std::to_string(frame) + ": vehicle " + std::to_string(v.id) +
                            " is behind the camera");
        }
      }
      boxes.push_back(b);
      owners.push_back(&v);
    }

    camera::DepthMap depth(width, height);
    camera::PixelMask lanes(width, height);
    std::vector<camera::PixelMask> masks(boxes.size(), camera::PixelMask(width, height));
    std::vector<int> mask_count(boxes.size(), 0);
    const double origin[3] = {ego->x, ego->y, script.camera_height};
    for (int v = 0; v < height; ++v) {
      for (int u = 0; u < width; ++u) {
        const auto& r = rays[static_cast<std::size_t>(v) * width + u];
        const double d[3] = {ce * r[0] - se * r[1], se * r[0] + ce * r[1], r[2]};
        double best = std::numeric_limits<double>::infinity();
        int owner = -1;
        for (std::size_t k = 0; k < boxes.size(); ++k) {
          const double t = ray_box(boxes[k], origin, d);
          if (t < best) {
            best = t;
            owner = static_cast<int>(k);
          }
        }
        if (r[2] < 0.0) {
          const double t = script.camera_height / -r[2];
          if (t < best) {
            best = t;
            owner = -2;
          }
        }
        // Ray parameter equals camera-frame depth: the direction has z = 1.
        if (!(best <= script.max_depth)) continue;
        depth.at(u, v) = best;
        if (owner >= 0) {
          masks[owner].set(u, v, true);
          ++mask_count[owner];
        } else if (owner == -2) {
          const double gy = origin[1] + best * d[1];
          for (double line : lane_lines) {
            if (std::abs(gy - line) <= half_line) {
              lanes.set(u, v, true);
              break;
            }
          }
        }
      }
    }

    int index = 0;
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      if (mask_count[k] == 0) continue;
      const Box& b = boxes[k];
      double umin = std::numeric_limits<double>::infinity(), vmin = umin;
      double umax = -umin, vmax = -umin;
      for (int c = 0; c < 8; ++c) {
        const double lx = (c & 1 ? 1 : -1) * b.hl, ly = (c & 2 ? 1 : -1) * b.hw, z = c & 4 ? b.h : 0.0;
        const double wx = b.cx + b.c * lx - b.s * ly - ego->x;
        const double wy = b.cy + b.s * lx + b.c * ly - ego->y;
        const camera::Point3 level{-(-se * wx + ce * wy), script.camera_height - z, ce * wx + se * wy};
        const camera::PixelCoord p = camera::project(camera::level_to_camera(level, script.camera_pitch), intr);
        umin = std::min(umin, p.u);
        umax = std::max(umax, p.u);
        vmin = std::min(vmin, p.v);
        vmax = std::max(vmax, p.v);
      }
      tracking::Detection det;
      det.frame = frame;
      det.bbox = {std::max(umin, 0.0), std::max(vmin, 0.0), std::min(umax, width - 1.0),
                  std::min(vmax, height - 1.0)};
      if (!det.bbox.valid()) continue;
      char name[48];
      std::snprintf(name, sizeof(name), "masks/%06d_%02d.png", frame, index++);
      det.mask_file = name;
      io::write_mask_png(output_dir / name, masks[k]);
      detections.push_back(det);
      out.ground_truth.push_back({frame, owners[k]->id, b.cx, b.cy});
    }

    io::write_depth_pgm(output_dir / "depth" / frame_name(frame, ".pgm"), depth);
    if (script.write_lanes) io::write_mask_png(output_dir / "lanes" / frame_name(frame, ".png"), lanes);
  }

  out.detections = static_cast<int>(detections.size());
  io::write_text(output_dir / "detections.jsonl", io::detections_to_jsonl(detections));
  if (script.write_odometry) {
    io::write_text(output_dir / "odometry.csv", io::odometry_to_csv(out.ego));
  } else {
    fs::remove(output_dir / "odometry.csv", ec);
  }
  io::write_text(output_dir / "gt.csv", metrics::tracks_to_csv(out.ground_truth));
  return out;
}

}  // namespace crashscene::pipeline
