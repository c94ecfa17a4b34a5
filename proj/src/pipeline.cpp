#include "crashscene/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <thread>

#include "crashscene/errors.hpp"
#include "crashscene/io.hpp"

namespace crashscene::pipeline {

namespace {

class Diagnostics {
 public:
  explicit Diagnostics(bool echo) : echo_(echo) {}
  void add(const std::string& msg) {
    lines_.push_back(msg);
    if (echo_) std::cerr << msg << "\n";
  }
  std::vector<std::string>& lines() { return lines_; }

 private:
  bool echo_;
  std::vector<std::string> lines_;
};

// Frame numbers of depth/NNNNNN.pgm files, sorted.
std::vector<int> list_frames(const fs::path& dir, const char* ext) {
  std::vector<int> frames;
  const std::regex pattern(std::string("^([0-9]{6})\\") + ext + "$");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) frames.push_back(std::stoi(m[1]));
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

std::string frame_file(int frame, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d%s", frame, ext);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Pixels inside the bbox, intersected with the instance mask when given.
camera::PixelMask detection_mask(const tracking::Detection& det, const fs::path& input_dir,
                                 camera::ImageSize size) {
  camera::PixelMask box(size.width, size.height);
  const int u0 = std::max(0, static_cast<int>(std::ceil(det.bbox.u_min)));
  const int v0 = std::max(0, static_cast<int>(std::ceil(det.bbox.v_min)));
  const int u1 = std::min(size.width - 1, static_cast<int>(std::floor(det.bbox.u_max)));
  const int v1 = std::min(size.height - 1, static_cast<int>(std::floor(det.bbox.v_max)));
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) box.set(u, v, true);
  }
  if (!det.mask_file) return box;
  const camera::PixelMask mask = io::read_mask(input_dir / *det.mask_file);
  if (mask.width != size.width || mask.height != size.height) {
    throw ShapeError(*det.mask_file + ": mask size differs from the depth map");
  }
  for (std::size_t i = 0; i < box.member.size(); ++i) box.member[i] = box.member[i] && mask.member[i];
  return box;
}

// Line through the per-row mean column of a lane cluster (bottom-left
// origin in, top-left image line out). Regressing u on v averages the
// column quantization that biases a total-least-squares fit of the band.
std::optional<camera::ImageLine> row_centroid_line(const std::vector<lanes::PixelPoint>& pixels, int height) {
  std::map<double, std::pair<double, int>> rows;
  for (const auto& p : pixels) {
    auto& r = rows[p.v];
    r.first += p.u;
    ++r.second;
  }
  if (rows.size() < 2) return std::nullopt;
  double sv = 0.0, su = 0.0, svv = 0.0, suv = 0.0;
  const double n = static_cast<double>(rows.size());
  for (const auto& [v, r] : rows) {
    const double u = r.first / r.second;
    sv += v;
    su += u;
    svv += v * v;
    suv += u * v;
  }
  const double slope = (n * suv - sv * su) / (n * svv - sv * sv);
  const double intercept = (su - slope * sv) / n;
  const double bottom = height - 1.0;
  return camera::ImageLine{{intercept, bottom}, {intercept + slope * 100.0, bottom - 100.0}};
}

// Ego-lane boundary clusters: nearest lane on each side of ref_u.
std::optional<std::pair<camera::ImageLine, camera::ImageLine>> ego_lane_lines(const lanes::FrameLanes& fl,
                                                                              double ref_u, int height) {
  const lanes::LaneObservation* left = nullptr;
  const lanes::LaneObservation* right = nullptr;
  for (const auto& obs : fl.observations) {
    if (obs.x_intercept() <= ref_u) {
      if (!left || obs.x_intercept() > left->x_intercept()) left = &obs;
    } else if (!right || obs.x_intercept() < right->x_intercept()) {
      right = &obs;
    }
  }
  if (!left || !right) return std::nullopt;
  const auto l = row_centroid_line(left->pixels, height);
  const auto r = row_centroid_line(right->pixels, height);
  if (!l || !r) return std::nullopt;
  return std::make_pair(*l, *r);
}

std::string trajectory_csv(const trajectory::Trajectory& t) {
  std::string out = "frame,t,x,y,yaw,speed\n";
  char buf[160];
  for (std::size_t i = 0; i < t.poses.size(); ++i) {
    const auto& p = t.poses[i];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", p.frame, p.t, p.x, p.y, p.yaw,
                  i < t.speeds.size() ? t.speeds[i] : 0.0);
    out += buf;
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(const fs::path& input_dir, const PipelineConfig& config,
                            const fs::path& output_path, bool echo) {
  config.validate();
  Diagnostics diag(echo);
  PipelineResult result;
  const double fr = config.frame_rate;

  const fs::path det_path = input_dir / "detections.jsonl";
  const fs::path depth_dir = input_dir / "depth";
  if (!fs::is_regular_file(det_path)) throw IoError("missing mandatory input " + det_path.string());
  if (!fs::is_directory(depth_dir)) throw IoError("missing mandatory input " + depth_dir.string() + "/");
  const std::vector<int> depth_frames = list_frames(depth_dir, ".pgm");
  if (depth_frames.empty()) throw IoError(depth_dir.string() + ": no NNNNNN.pgm depth frames");
  const int frame_count = depth_frames.back() + 1;
  if (static_cast<int>(depth_frames.size()) < frame_count) {
    diag.add("warning: " + std::to_string(frame_count - depth_frames.size()) + " of " +
             std::to_string(frame_count) + " frames have no depth map");
  }
  const std::set<int> have_depth(depth_frames.begin(), depth_frames.end());

  const camera::DepthMap first_depth = io::read_depth_pgm(depth_dir / frame_file(depth_frames.front(), ".pgm"),
                                                          config.depth_scale);
  const camera::ImageSize size = first_depth.size();

  // Detections grouped by frame; unusable ones are counted and dropped.
  std::map<int, std::vector<tracking::Detection>> by_frame;
  int dropped = 0;
  int low_score = 0;
  for (auto& d : io::read_detections_jsonl(det_path)) {
    if (d.score < config.min_score) {
      ++low_score;
    } else if (d.frame < 0 || d.frame >= frame_count || !have_depth.count(d.frame)) {
      ++dropped;
    } else {
      by_frame[d.frame].push_back(std::move(d));
    }
  }
  if (dropped) diag.add("warning: dropped " + std::to_string(dropped) + " detections without a depth frame");
  if (low_score) diag.add("dropped " + std::to_string(low_score) + " detections below min_score");
  if (by_frame.empty()) diag.add("warning: no detections; scenario holds the ego only");

  // Lane pixels, from lanes.jsonl or lanes/NNNNNN.png.
  std::map<int, std::vector<camera::PixelCoord>> lane_pixels;
  if (fs::is_regular_file(input_dir / "lanes.jsonl")) {
    lane_pixels = io::read_lanes_jsonl(input_dir / "lanes.jsonl");
  } else if (fs::is_directory(input_dir / "lanes")) {
    for (int f : list_frames(input_dir / "lanes", ".png")) {
      lane_pixels[f] = io::mask_pixels(io::read_mask(input_dir / "lanes" / frame_file(f, ".png")));
    }
  }

  // Intrinsics.
  camera::CameraIntrinsics intr;
  double pitch = config.camera_pitch;
  std::vector<lanes::FrameLanes> lane_frames;
  auto run_lanes = [&](double ref_u) {
    lane_frames.clear();
    lanes::LaneTracker tracker(config.lanes, size);
    for (const auto& [f, px] : lane_pixels) {
      if (f < 0 || f >= frame_count) continue;
      lane_frames.push_back(tracker.process(f, px, ref_u));
    }
  };
  switch (config.intrinsics) {
    case IntrinsicsSource::kConfig:
      intr = {config.fu, config.fv, config.cu, config.cv};
      break;
    case IntrinsicsSource::kDatasetDefault:
      intr = camera::CameraIntrinsics::centered(kDatasetFocal, size);
      break;
    case IntrinsicsSource::kCalibrate: {
      // The principal point is the image center in this mode.
      const double center_u = config.ego_ref_u >= 0.0 ? config.ego_ref_u : size.width / 2.0;
      run_lanes(center_u);
      std::vector<double> focals, pitches;
      for (const auto& fl : lane_frames) {
        const auto lines = ego_lane_lines(fl, center_u, size.height);
        if (!lines) continue;
        try {
          const auto cal = camera::calibrate_from_lanes(lines->first, lines->second, config.lanes.lane_width,
                                                        config.camera_height, size);
          focals.push_back(cal.intrinsics.fu);
          pitches.push_back(cal.pitch);
        } catch (const CalibrationInfeasibleError&) {
        }
      }
      if (focals.empty()) throw CalibrationInfeasibleError("no frame yields a lane calibration");
      intr = camera::CameraIntrinsics::centered(median(focals), size);
      pitch = median(pitches);
      diag.add("calibrated f = " + std::to_string(intr.fu) + " px, pitch = " + std::to_string(pitch) +
               " rad from " + std::to_string(focals.size()) + " frames");
      break;
    }
  }
  intr.validate(size);
  result.intrinsics = intr;
  result.pitch = pitch;
  const double ref_u = config.ego_ref_u >= 0.0 ? config.ego_ref_u : intr.cu;
  run_lanes(ref_u);

  // Ego.
  const fs::path odo_path = input_dir / "odometry.csv";
  const bool use_odometry = config.ego_mode == EgoSource::kOdometry ||
                            (config.ego_mode == EgoSource::kAuto && fs::is_regular_file(odo_path));
  trajectory::Trajectory ego;
  if (use_odometry) {
    const auto odo = io::read_odometry_csv(odo_path);
    ego = trajectory::ego_trajectory(trajectory::EgoMode::kFromOdometry, odo, 0.0, frame_count, fr);
  } else {
    ego = trajectory::ego_trajectory(trajectory::EgoMode::kConstantStraight, {}, config.ego_speed, frame_count, fr);
    diag.add("ego: constant straight motion at " + std::to_string(config.ego_speed) + " m/s");
  }
  std::vector<lanes::LateralFix> fixes;
  for (const auto& fl : lane_frames) {
    if (fl.fix) fixes.push_back(*fl.fix);
  }
  const auto corrected = trajectory::apply_lane_correction(ego, fixes, config.lanes.lane_width);
  ego = corrected.trajectory;
  if (corrected.warning) {
    diag.add("warning: no lateral lane fixes; ego lateral position is uncorrected");
  } else {
    diag.add("lane fixes: " + std::to_string(fixes.size()) + " of " + std::to_string(frame_count) + " frames");
  }
  result.ego = ego;

  // Tracking.
  tracking::TrackSet tracks(config.tracker);
  for (int f = 0; f < frame_count; ++f) {
    const auto it = by_frame.find(f);
    tracks.step(f, it == by_frame.end() ? std::vector<tracking::Detection>{} : it->second);
  }

  // 3D positions per confirmed track.
  std::map<int, camera::DepthMap> depth_cache;
  auto depth_at = [&](int f) -> const camera::DepthMap& {
    auto it = depth_cache.find(f);
    if (it == depth_cache.end()) {
      it = depth_cache.emplace(f, io::read_depth_pgm(depth_dir / frame_file(f, ".pgm"), config.depth_scale)).first;
    }
    return it->second;
  };
  const double ego_yaw0 = ego.poses.empty() ? 0.0 : ego.poses.front().yaw;
  std::vector<scenario::AgentInput> agents;
  int confirmed = 0, next_id = 1, empty_clouds = 0;
  for (const auto& track : tracks.tracks()) {
    if (!track.confirmed) continue;
    ++confirmed;
    std::vector<trajectory::RelativeObservation> obs;
    for (const auto& [f, det] : track.history) {
      const camera::PixelMask mask = detection_mask(det, input_dir, size);
      const camera::PointCloud cloud = camera::backproject_masked(depth_at(f), mask, intr, config.max_depth);
      if (cloud.empty()) {
        ++empty_clouds;
        continue;
      }
      camera::Point3 p = camera::camera_to_level(camera::estimate_position(cloud), pitch);
      const double r = std::hypot(p.x, p.z);
      if (r > 0.0) {
        p.x += config.center_offset * p.x / r;
        p.z += config.center_offset * p.z / r;
      }
      obs.push_back({f, p});
    }
    if (static_cast<int>(obs.size()) < config.min_track_length) {
      diag.add("track " + std::to_string(track.id) + ": " + std::to_string(obs.size()) +
               " positioned frames, below min_track_length; dropped");
      continue;
    }
    const auto raw = trajectory::compose_agent_trajectory(ego, obs, 0);
    for (auto piece : trajectory::fill_gaps(raw, config.max_gap)) {
      if (static_cast<int>(piece.poses.size()) < config.min_track_length) continue;
      piece.vehicle_id = next_id++;
      trajectory::Trajectory pre = piece;
      const int n = static_cast<int>(piece.poses.size());
      const int window = std::min(config.smoothing.sg_window, n % 2 ? n : n - 1);
      if (window > config.smoothing.sg_polyorder) {
        pre = trajectory::savitzky_golay(piece, window, config.smoothing.sg_polyorder);
      }
      const auto smooth = trajectory::smooth_two_level(pre, config.smoothing);
      if (smooth.warning) diag.add("vehicle " + std::to_string(piece.vehicle_id) + ": short track, global fit only");
      const auto* e0 = ego.at_frame(piece.poses.front().frame);
      auto traj = trajectory::resample(smooth.path, piece, fr, e0 ? e0->yaw : ego_yaw0);
      diag.add("track " + std::to_string(track.id) + " -> vehicle " + std::to_string(piece.vehicle_id) + ": frames " +
               std::to_string(traj.poses.front().frame) + ".." + std::to_string(traj.poses.back().frame));
      for (const auto& p : traj.poses) result.estimates.push_back({p.frame, traj.vehicle_id, p.x, p.y});
      result.agents.push_back(traj);
      agents.push_back({traj, smooth.path});
    }
  }
  if (empty_clouds) diag.add("warning: " + std::to_string(empty_clouds) + " detections had no valid depth");
  diag.add("tracks: " + std::to_string(tracks.tracks().size()) + " total, " + std::to_string(confirmed) +
           " confirmed, " + std::to_string(agents.size()) + " vehicles");

  const auto ego_smooth = trajectory::smooth_two_level(ego, config.smoothing);
  result.build = scenario::assemble_scenario(ego, ego_smooth.path, agents, config.scenario_config());
  for (std::size_t i = 0; i < result.build.categories.size(); ++i) {
    diag.add("vehicle " + std::to_string(agents[i].trajectory.vehicle_id) + ": " +
             to_string(result.build.categories[i]));
  }
  for (const auto& w : result.build.warnings) diag.add("warning: " + w);
  for (const auto& c : result.build.conflicts) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "warning: vehicles %d and %d start %.2f m apart", c.id_a, c.id_b, c.distance);
    diag.add(buf);
  }

  const fs::path dir = output_path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  scenario::export_scenario(result.build.scenario, output_path);
  const std::string stem = output_path.stem().string();
  io::write_text(dir / (stem + "_vehicle_0.csv"), trajectory_csv(ego));
  for (const auto& a : result.agents) {
    io::write_text(dir / (stem + "_vehicle_" + std::to_string(a.vehicle_id) + ".csv"), trajectory_csv(a));
  }
  io::write_text(dir / (stem + "_tracks.csv"), metrics::tracks_to_csv(result.estimates));
  std::string log;
  for (const auto& l : diag.lines()) log += l + "\n";
  io::write_text(dir / (stem + ".log"), log);
  result.diagnostics = std::move(diag.lines());
  return result;
}

std::vector<std::string> run_batch(const std::vector<BatchJob>& jobs, const PipelineConfig& config) {
  config.validate();
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        run_pipeline(jobs[i].input_dir, config, jobs[i].output_path);
      } catch (const std::exception& e) {
        errors[i] = jobs[i].input_dir.string() + ": " + e.what();
      }
    }
  };
  const int n = std::min<int>(config.workers, static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return errors;
}

}  // namespace crashscene::pipeline
