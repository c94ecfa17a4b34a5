#include "crashscene/scenario_synth.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "crashscene/errors.hpp"

namespace crashscene::scenario {

namespace {

constexpr double kPi = std::numbers::pi;

double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
Vec2 sub(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }
Vec2 add_scaled(const Vec2& a, const Vec2& d, double k) { return {a[0] + k * d[0], a[1] + k * d[1]}; }
double norm(const Vec2& a) { return std::hypot(a[0], a[1]); }
Vec2 unit(const Vec2& a) {
  const double n = norm(a);
  return n > 0.0 ? Vec2{a[0] / n, a[1] / n} : Vec2{1.0, 0.0};
}

// Least-squares slope of lon per frame over points [begin, end).
double lon_slope(const std::vector<EgoFramePoint>& rel, std::size_t begin, std::size_t end) {
  const std::size_t n = end - begin;
  if (n < 2) return 0.0;
  double mf = 0.0, ml = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    mf += rel[i].frame;
    ml += rel[i].lon;
  }
  mf /= n;
  ml /= n;
  double sff = 0.0, sfl = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    sff += (rel[i].frame - mf) * (rel[i].frame - mf);
    sfl += (rel[i].frame - mf) * (rel[i].lon - ml);
  }
  return sff > 0.0 ? sfl / sff : 0.0;
}

double mean_tail(const std::vector<double>& v, int window) {
  if (v.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(v.size(), std::max(window, 1));
  double total = 0.0;
  for (std::size_t i = v.size() - n; i < v.size(); ++i) total += v[i];
  return total / n;
}

}  // namespace

std::vector<EgoFramePoint> to_ego_frame(const Trajectory& agent, const Trajectory& ego) {
  std::vector<EgoFramePoint> out;
  out.reserve(agent.poses.size());
  for (const auto& p : agent.poses) {
    const trajectory::Pose2D* e = ego.at_frame(p.frame);
    if (!e) throw FrameMismatchError("agent frame " + std::to_string(p.frame) + " has no ego pose");
    const double dx = p.x - e->x;
    const double dy = p.y - e->y;
    const double c = std::cos(e->yaw);
    const double s = std::sin(e->yaw);
    out.push_back({p.frame, c * dx + s * dy, -s * dx + c * dy});
  }
  return out;
}

bool ego_passes(const std::vector<EgoFramePoint>& rel, int last_clip_frame, int trend_window) {
  if (rel.empty()) return false;
  for (std::size_t i = 1; i < rel.size(); ++i) {
    if ((rel[i - 1].lon > 0.0) != (rel[i].lon > 0.0)) return true;
  }
  const EgoFramePoint& last = rel.back();
  if (last.frame >= last_clip_frame) return false;
  const std::size_t n = std::min<std::size_t>(rel.size(), std::max(trend_window, 2));
  const double slope = lon_slope(rel, rel.size() - n, rel.size());
  const double predicted = last.lon + slope * (last_clip_frame - last.frame);
  return (predicted > 0.0) != (last.lon > 0.0);
}

AgentCategory classify_agent(const Trajectory& agent, const Trajectory& ego,
                             const ClassifyOptions& options) {
  if (agent.poses.size() < 2) {
    throw ClassificationError("agent " + std::to_string(agent.vehicle_id) +
                              " needs at least two observed poses");
  }
  if (ego.poses.empty()) throw ClassificationError("ego trajectory is empty");
  const std::vector<EgoFramePoint> rel = to_ego_frame(agent, ego);
  const trajectory::Pose2D& first = agent.poses.front();
  const trajectory::Pose2D* ego_first = ego.at_frame(first.frame);
  const bool same_direction =
      std::abs(trajectory::normalize_angle(first.yaw - ego_first->yaw)) < kPi / 2;
  const bool from_start = first.frame - ego.poses.front().frame <= options.start_tolerance;

  if (same_direction) {
    if (from_start) return AgentCategory::kD0T1;
    const std::size_t n = std::min<std::size_t>(rel.size(), std::max(options.trend_window, 2));
    const double rate = lon_slope(rel, 0, n) * options.frame_rate;
    const bool behind = rel.front().lon < 0.0 || rate > options.behind_rate;
    return behind ? AgentCategory::kD0T2 : AgentCategory::kD0T3;
  }
  const bool passes = ego_passes(rel, ego.poses.back().frame, options.trend_window);
  if (from_start) return passes ? AgentCategory::kD1T1 : AgentCategory::kD1T2;
  return passes ? AgentCategory::kD1T3 : AgentCategory::kD1T4;
}

// ------------------------------------------------------------------ road

RoadFrame::RoadFrame(const std::vector<Vec2>& centerline) {
  for (const Vec2& p : centerline) {
    if (pts_.empty() || norm(sub(p, pts_.back())) > 1e-9) pts_.push_back(p);
  }
  if (pts_.size() < 2) throw ParameterError("road needs at least two distinct points");
  cum_.push_back(0.0);
  for (std::size_t i = 1; i < pts_.size(); ++i) cum_.push_back(cum_.back() + norm(sub(pts_[i], pts_[i - 1])));
}

std::size_t RoadFrame::segment(double s) const {
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  std::size_t i = it == cum_.begin() ? 0 : static_cast<std::size_t>(it - cum_.begin()) - 1;
  return std::min(i, pts_.size() - 2);
}

RoadFrame::Projection RoadFrame::project(const Vec2& p) const {
  Projection best;
  double best_dist = std::numeric_limits<double>::infinity();
  const std::size_t last = pts_.size() - 2;
  for (std::size_t i = 0; i <= last; ++i) {
    const Vec2 seg = sub(pts_[i + 1], pts_[i]);
    const double len = cum_[i + 1] - cum_[i];
    double u = dot(sub(p, pts_[i]), seg) / (len * len);
    if (i > 0) u = std::max(u, 0.0);
    if (i < last) u = std::min(u, 1.0);
    const Vec2 q = add_scaled(pts_[i], seg, u);
    const double dist = norm(sub(p, q));
    if (dist < best_dist) {
      best_dist = dist;
      const Vec2 t = unit(seg);
      best.s = cum_[i] + u * len;
      best.d = t[0] * (p[1] - q[1]) - t[1] * (p[0] - q[0]);
      best.heading = std::atan2(t[1], t[0]);
    }
  }
  return best;
}

Vec2 RoadFrame::point(double s, double d) const {
  const std::size_t i = segment(s);
  const Vec2 t = unit(sub(pts_[i + 1], pts_[i]));
  const Vec2 base = add_scaled(pts_[i], t, s - cum_[i]);
  return {base[0] - d * t[1], base[1] + d * t[0]};
}

double RoadFrame::heading(double s) const {
  const std::size_t i = segment(s);
  const Vec2 t = sub(pts_[i + 1], pts_[i]);
  return std::atan2(t[1], t[0]);
}

namespace {

std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, double spacing) {
  std::vector<double> cum = {0.0};
  for (std::size_t i = 1; i < pts.size(); ++i) cum.push_back(cum.back() + norm(sub(pts[i], pts[i - 1])));
  const double total = cum.back();
  const int k = std::max(1, static_cast<int>(std::lround(total / spacing)));
  std::vector<Vec2> out;
  std::size_t seg = 0;
  for (int j = 0; j <= k; ++j) {
    const double s = total * j / k;
    while (seg + 2 < pts.size() && cum[seg + 1] < s) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double u = len > 0.0 ? std::clamp((s - cum[seg]) / len, 0.0, 1.0) : 0.0;
    out.push_back(add_scaled(pts[seg], sub(pts[seg + 1], pts[seg]), u));
  }
  out.front() = pts.front();
  out.back() = pts.back();
  return out;
}

std::vector<Vec2> sample_path(const SmoothTrajectory& path, double step) {
  const double len = path.arc_length();
  const int k = std::max(1, static_cast<int>(std::ceil(len / step)));
  std::vector<Vec2> out;
  for (int j = 0; j <= k; ++j) out.push_back(path.position_at_arc_length(len * j / k));
  return out;
}

}  // namespace

RoadResult generate_road(const SmoothTrajectory& ego, const std::vector<SmoothTrajectory>& oncoming,
                         const RoadConfig& config) {
  if (config.lane_count < 1) throw ParameterError("lane_count must be >= 1");
  if (!(config.lane_width > 0.0)) throw ParameterError("lane_width must be positive");
  if (!(config.spacing >= 0.5 && config.spacing <= 20.0)) {
    throw ParameterError("road spacing must lie in [0.5, 20] m");
  }
  if (!(config.smoothness >= 0.0)) throw ParameterError("road smoothness must be >= 0");
  const double length = ego.arc_length();
  if (!(length >= 10.0)) throw ParameterError("ego path is shorter than 10 m; cannot infer a road");

  // Heavy smoothing of the ego path, parameterized by its arc length.
  const int samples = std::max(10, static_cast<int>(std::ceil(length)));
  std::vector<double> s(samples + 1);
  std::vector<Vec2> pts(samples + 1);
  for (int j = 0; j <= samples; ++j) {
    s[j] = length * j / samples;
    pts[j] = ego.position_at_arc_length(s[j]);
  }
  const spline::CubicSpline2D fit =
      spline::fit_smoothing_spline(s, pts, {}, config.smoothness * (samples + 1));
  const SmoothTrajectory base_path(0, fit);
  const double base_len = base_path.arc_length();
  const int k = std::max(1, static_cast<int>(std::lround(base_len / config.spacing)));

  RoadResult result;
  result.road.lane_count = config.lane_count;
  result.road.lane_width = config.lane_width;
  std::vector<Vec2>& center = result.road.centerline;
  for (int j = 0; j <= k; ++j) center.push_back(base_path.position_at_arc_length(base_len * j / k));

  const Vec2 end = center.back();
  const Vec2 tangent = unit(fit.derivative(fit.back()));
  const Vec2 normal = {-tangent[1], tangent[0]};

  // Oncoming path reaching furthest beyond the end.
  const std::vector<Vec2>* best = nullptr;
  std::vector<std::vector<Vec2>> sampled;
  sampled.reserve(oncoming.size());
  double best_reach = config.min_extension;
  for (const auto& path : oncoming) {
    if (path.spline().empty() || path.arc_length() <= 0.0) continue;
    sampled.push_back(sample_path(path, 1.0));
    double reach = -std::numeric_limits<double>::infinity();
    for (const Vec2& p : sampled.back()) reach = std::max(reach, dot(sub(p, end), tangent));
    if (reach > best_reach) {
      best_reach = reach;
      best = &sampled.back();
    }
  }
  if (!best) return result;

  // Lateral offset at the junction: the sample whose projection is nearest 0.
  double offset = 0.0;
  double nearest = std::numeric_limits<double>::infinity();
  for (const Vec2& p : *best) {
    const double along = dot(sub(p, end), tangent);
    if (std::abs(along) < nearest) {
      nearest = std::abs(along);
      offset = dot(sub(p, end), normal);
    }
  }
  // Contiguous run beyond the bridge that holds the furthest sample, ordered
  // away from the junction.
  std::vector<double> along(best->size());
  std::size_t far = 0;
  for (std::size_t i = 0; i < best->size(); ++i) {
    along[i] = dot(sub((*best)[i], end), tangent);
    if (along[i] > along[far]) far = i;
  }
  if (along[far] <= config.bridge_length) return result;
  std::size_t lo = far, hi = far;
  while (lo > 0 && along[lo - 1] > config.bridge_length) --lo;
  while (hi + 1 < best->size() && along[hi + 1] > config.bridge_length) ++hi;
  std::vector<std::pair<double, Vec2>> tail;
  for (std::size_t i = lo; i <= hi; ++i) tail.emplace_back(along[i], add_scaled((*best)[i], normal, -offset));
  if (norm(sub(tail.back().second, end)) < norm(sub(tail.front().second, end))) {
    std::reverse(tail.begin(), tail.end());
  }
  const Vec2 q0 = tail.front().second;
  const double chord = norm(sub(q0, end));
  const Vec2 q_dir = tail.size() > 1 ? unit(sub(tail[1].second, q0)) : tangent;
  std::vector<Vec2> ext;
  constexpr int kBridgeSamples = 64;
  for (int j = 0; j <= kBridgeSamples; ++j) {
    const double u = static_cast<double>(j) / kBridgeSamples;
    const double h00 = 2 * u * u * u - 3 * u * u + 1;
    const double h10 = u * u * u - 2 * u * u + u;
    const double h01 = -2 * u * u * u + 3 * u * u;
    const double h11 = u * u * u - u * u;
    ext.push_back({h00 * end[0] + h10 * chord * tangent[0] + h01 * q0[0] + h11 * chord * q_dir[0],
                   h00 * end[1] + h10 * chord * tangent[1] + h01 * q0[1] + h11 * chord * q_dir[1]});
  }
  for (std::size_t i = 1; i < tail.size(); ++i) ext.push_back(tail[i].second);
  const std::vector<Vec2> resampled = resample_polyline(ext, config.spacing);
  center.insert(center.end(), resampled.begin() + 1, resampled.end());
  result.extended = true;
  return result;
}

// --------------------------------------------------------- extrapolation

Extrapolated extrapolate(const Trajectory& agent, AgentCategory category, const RoadSpec& road,
                         const Trajectory& ego, double sim_duration,
                         const ExtrapolationConfig& config) {
  if (!(config.frame_rate > 0.0)) throw ParameterError("frame_rate must be positive");
  if (agent.poses.empty()) throw ClassificationError("cannot extrapolate an empty track");
  if (ego.poses.empty()) throw ParameterError("ego trajectory is empty");
  const double fr = config.frame_rate;
  const int ego_first = ego.poses.front().frame;
  const int end_frame = ego_first + static_cast<int>(std::lround(sim_duration * fr));
  const double max_offset = (road.lane_count - 0.5) * road.lane_width;

  Extrapolated out;
  out.trajectory = agent;
  Trajectory& traj = out.trajectory;
  if (traj.speeds.size() != traj.poses.size()) traj.speeds.assign(traj.poses.size(), 0.0);

  std::optional<RoadFrame> frame;
  if (road.centerline.size() >= 2) {
    try {
      frame.emplace(road.centerline);
    } catch (const ParameterError&) {
    }
  }
  auto off_road = [&](const Vec2& p) { return frame && std::abs(frame->project(p).d) > max_offset; };

  const std::vector<EgoFramePoint> rel = to_ego_frame(agent, ego);

  if (category == AgentCategory::kD0T2 && agent.poses.front().frame > ego_first) {
    const std::size_t n = std::min<std::size_t>(rel.size(), std::max(config.speed_window, 2));
    const double v_rel = std::max(lon_slope(rel, 0, n) * fr, config.min_relative_speed);
    const double lon0 = rel.front().lon;
    const double lat0 = rel.front().lat;
    const int first = agent.poses.front().frame;
    std::vector<trajectory::Pose2D> pre;
    for (int f = ego_first; f < first; ++f) {
      const trajectory::Pose2D* e = ego.at_frame(f);
      if (!e) continue;
      double lon = lon0 - v_rel * (first - f) / fr;
      lon = std::min(lon, std::abs(lat0));  // outside the forward 90 degree wedge
      lon = std::max(lon, -config.standoff);
      const double c = std::cos(e->yaw), s = std::sin(e->yaw);
      pre.push_back({f, e->t, e->x + c * lon - s * lat0, e->y + s * lon + c * lat0, e->yaw});
      if (off_road({pre.back().x, pre.back().y})) out.road_departure = true;
    }
    std::vector<double> pre_speeds(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) {
      const trajectory::Pose2D& next = i + 1 < pre.size() ? pre[i + 1] : traj.poses.front();
      pre_speeds[i] = std::hypot(next.x - pre[i].x, next.y - pre[i].y) * fr / (next.frame - pre[i].frame);
    }
    traj.poses.insert(traj.poses.begin(), pre.begin(), pre.end());
    traj.speeds.insert(traj.speeds.begin(), pre_speeds.begin(), pre_speeds.end());
  }
  out.start_delay = std::max(0.0, (traj.poses.front().frame - ego_first) / fr);

  const trajectory::Pose2D last = traj.poses.back();
  if (last.frame < end_frame) {
    double speed = mean_tail(agent.speeds, config.speed_window);
    const bool same_direction = category == AgentCategory::kD0T1 ||
                                category == AgentCategory::kD0T2 ||
                                category == AgentCategory::kD0T3;
    if (same_direction) {
      const std::size_t n = std::min<std::size_t>(rel.size(), std::max(config.speed_window, 2));
      const bool overtaken = lon_slope(rel, rel.size() - n, rel.size()) < 0.0;
      double ego_mean = 0.0;
      for (double v : ego.speeds) ego_mean += v;
      if (!ego.speeds.empty()) ego_mean /= ego.speeds.size();
      if (overtaken) speed = std::min(speed, config.overtaken_speed_ratio * ego_mean);
    }
    if (frame) {
      const RoadFrame::Projection p = frame->project({last.x, last.y});
      const double sign = std::cos(last.yaw - p.heading) >= 0.0 ? 1.0 : -1.0;
      for (int f = last.frame + 1; f <= end_frame; ++f) {
        const double s = p.s + sign * speed * (f - last.frame) / fr;
        const Vec2 q = frame->point(s, p.d);
        const double yaw = trajectory::normalize_angle(frame->heading(s) + (sign < 0 ? kPi : 0.0));
        traj.poses.push_back({f, last.t + (f - last.frame) / fr, q[0], q[1], yaw});
        traj.speeds.push_back(speed);
      }
      if (std::abs(p.d) > max_offset) out.road_departure = true;
    } else {
      for (int f = last.frame + 1; f <= end_frame; ++f) {
        const double dist = speed * (f - last.frame) / fr;
        traj.poses.push_back({f, last.t + (f - last.frame) / fr, last.x + dist * std::cos(last.yaw),
                              last.y + dist * std::sin(last.yaw), last.yaw});
        traj.speeds.push_back(speed);
      }
    }
  }
  return out;
}

// -------------------------------------------------------------- step-back

StepBack compute_stepback(const std::vector<double>& targets, double accel) {
  if (!(accel > 0.0)) throw ParameterError("accel must be positive");
  StepBack out;
  out.accel = accel;
  for (double v : targets) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("target speeds must be >= 0");
    StepBackEntry e;
    e.v_t = v;
    e.t_s = v / accel;
    e.d_s = v * v / (2.0 * accel);
    out.t_s_max = std::max(out.t_s_max, e.t_s);
    out.entries.push_back(e);
  }
  for (auto& e : out.entries) e.D_s = e.d_s + (out.t_s_max - e.t_s) * e.v_t;
  return out;
}

double LeadIn::distance_at(double t) const {
  t = std::clamp(t, 0.0, t_s_max);
  if (t <= step.t_s) return 0.5 * accel * t * t;
  return step.d_s + (t - step.t_s) * step.v_t;
}

double LeadIn::speed_at(double t) const {
  if (t <= 0.0) return 0.0;
  if (t < step.t_s) return accel * t;
  return step.v_t;
}

Vec2 LeadIn::position_at(double t) const {
  const double d = distance_at(t);
  return {start[0] + d * std::cos(heading), start[1] + d * std::sin(heading)};
}

std::vector<std::pair<double, double>> LeadIn::speed_profile() const {
  std::vector<std::pair<double, double>> out = {{0.0, 0.0}};
  if (step.t_s > 0.0) out.emplace_back(step.t_s, step.v_t);
  if (t_s_max > step.t_s) out.emplace_back(t_s_max, step.v_t);
  return out;
}

LeadIn build_leadin(const trajectory::Pose2D& first, const StepBackEntry& step, double t_s_max,
                    double accel, double spacing) {
  if (!(step.D_s >= 0.0)) throw ParameterError("lead-in distance must be >= 0");
  if (!(spacing > 0.0)) throw ParameterError("lead-in spacing must be positive");
  LeadIn out;
  out.heading = first.yaw;
  out.step = step;
  out.t_s_max = t_s_max;
  out.accel = accel;
  const Vec2 dir = {std::cos(first.yaw), std::sin(first.yaw)};
  const Vec2 p0 = {first.x, first.y};
  out.start = add_scaled(p0, dir, -step.D_s);
  if (step.D_s > 0.0) {
    const int k = std::max(1, static_cast<int>(std::ceil(step.D_s / spacing)));
    for (int i = 0; i < k; ++i) out.waypoints.push_back(add_scaled(out.start, dir, step.D_s * i / k));
    out.waypoints.push_back(p0);
  }
  return out;
}

// --------------------------------------------------------------- scenario

std::vector<Conflict> check_overlaps(const ScenarioSpec& scenario, double min_gap) {
  if (!(min_gap > 0.0)) throw ParameterError("min_gap must be positive");
  std::vector<Conflict> out;
  auto start_of = [](const VehicleSpec& v) -> std::optional<Vec2> {
    if (!v.lead_in.empty()) return v.lead_in.front();
    if (!v.waypoints.empty()) return v.waypoints.front();
    return std::nullopt;
  };
  for (std::size_t i = 0; i < scenario.vehicles.size(); ++i) {
    const auto a = start_of(scenario.vehicles[i]);
    if (!a) continue;
    for (std::size_t j = i + 1; j < scenario.vehicles.size(); ++j) {
      const auto b = start_of(scenario.vehicles[j]);
      if (!b) continue;
      const double d = norm(sub(*a, *b));
      if (d < min_gap) out.push_back({scenario.vehicles[i].id, scenario.vehicles[j].id, d});
    }
  }
  return out;
}

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

bool on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  return std::min(a[0], b[0]) - 1e-12 <= p[0] && p[0] <= std::max(a[0], b[0]) + 1e-12 &&
         std::min(a[1], b[1]) - 1e-12 <= p[1] && p[1] <= std::max(a[1], b[1]) + 1e-12;
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double d1 = cross(q1, q2, p1), d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1), d4 = cross(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  return (d1 == 0 && on_segment(p1, q1, q2)) || (d2 == 0 && on_segment(p2, q1, q2)) ||
         (d3 == 0 && on_segment(q1, p1, p2)) || (d4 == 0 && on_segment(q2, p1, p2));
}

bool finite(const Vec2& p) { return std::isfinite(p[0]) && std::isfinite(p[1]); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

}  // namespace

std::vector<std::string> validate_scenario(const ScenarioSpec& scenario) {
  std::vector<std::string> out;
  if (!(scenario.frame_rate > 0.0)) out.push_back("frame_rate must be positive");
  const RoadSpec& road = scenario.road;
  if (road.lane_count < 1) out.push_back("road.lane_count must be >= 1");
  if (!(road.lane_width > 0.0)) out.push_back("road.lane_width must be positive");
  const auto& c = road.centerline;
  if (c.size() < 2) out.push_back("road.centerline needs at least 2 points");
  for (const Vec2& p : c) {
    if (!finite(p)) {
      out.push_back("road.centerline has a non-finite point");
      break;
    }
  }
  for (std::size_t i = 1; i < c.size(); ++i) {
    const double len = norm(sub(c[i], c[i - 1]));
    if (!(len >= 0.5 - 1e-9 && len <= 20.0 + 1e-9)) {
      out.push_back("road.centerline spacing: segment " + std::to_string(i - 1) + " has length " +
                    fmt(len) + " m outside [0.5, 20]");
    }
  }
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    for (std::size_t j = i + 2; j + 1 < c.size(); ++j) {
      if (segments_intersect(c[i], c[i + 1], c[j], c[j + 1])) {
        out.push_back("road.centerline self-intersection: segments " + std::to_string(i) + " and " +
                      std::to_string(j) + " cross");
      }
    }
  }
  std::set<int> ids;
  for (const VehicleSpec& v : scenario.vehicles) {
    const std::string who = "vehicle " + std::to_string(v.id) + ": ";
    if (!ids.insert(v.id).second) out.push_back("vehicles: duplicate id " + std::to_string(v.id));
    if (!(v.start_delay >= 0.0)) out.push_back(who + "start_delay must be >= 0");
    if (v.waypoints.empty()) out.push_back(who + "waypoints must not be empty");
    if (v.speeds.size() != v.waypoints.size()) {
      out.push_back(who + "speeds count " + std::to_string(v.speeds.size()) +
                    " != waypoints count " + std::to_string(v.waypoints.size()));
    }
    for (std::size_t i = 0; i < v.speeds.size(); ++i) {
      if (!(v.speeds[i] >= 0.0) || !std::isfinite(v.speeds[i])) {
        out.push_back(who + "speed " + std::to_string(i) + " must be finite and >= 0");
        break;
      }
    }
    bool bad = false;
    for (const Vec2& p : v.waypoints) bad |= !finite(p);
    for (const Vec2& p : v.lead_in) bad |= !finite(p);
    if (bad) out.push_back(who + "non-finite coordinate");
    if (!v.lead_in.empty() && !v.waypoints.empty()) {
      const double gap = norm(sub(v.lead_in.back(), v.waypoints.front()));
      if (!(gap < 1.0)) out.push_back(who + "lead-in/waypoint continuity gap " + fmt(gap) + " m >= 1 m");
    }
  }
  return out;
}

namespace {

void write_json(std::ostringstream& os, const nlohmann::json& v, int indent) {
  const std::string pad(indent, ' ');
  const std::string inner(indent + 2, ' ');
  switch (v.type()) {
    case nlohmann::json::value_t::object: {
      if (v.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << inner << nlohmann::json(it.key()).dump() << ": ";
        write_json(os, it.value(), indent + 2);
      }
      os << "\n" << pad << "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (v.empty()) {
        os << "[]";
        return;
      }
      const bool flat = std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_number(); });
      if (flat) {
        os << "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) os << ", ";
          write_json(os, v[i], 0);
        }
        os << "]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",\n";
        os << inner;
        write_json(os, v[i], indent + 2);
      }
      os << "\n" << pad << "]";
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double d = v.get<double>();
      os << (std::isfinite(d) ? fmt(d) : "null");
      return;
    }
    default:
      os << v.dump();
  }
}

nlohmann::json points_json(const std::vector<Vec2>& pts) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Vec2& p : pts) arr.push_back({p[0], p[1]});
  return arr;
}

const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(where + ": missing key \"" + key + "\"");
  return *it;
}

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> keys,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      throw FormatError(where + ": unknown key \"" + it.key() + "\"");
    }
  }
}

double number(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number()) throw FormatError(where + " must be a number");
  return v.get<double>();
}

std::vector<Vec2> points(const nlohmann::json& v, const std::string& where) {
  if (!v.is_array()) throw FormatError(where + " must be an array of [x, y]");
  std::vector<Vec2> out;
  for (const auto& p : v) {
    if (!p.is_array() || p.size() != 2) throw FormatError(where + " entries must be [x, y]");
    out.push_back({number(p[0], where), number(p[1], where)});
  }
  return out;
}

}  // namespace

std::string to_canonical_json(const ScenarioSpec& scenario) {
  nlohmann::json doc = nlohmann::json::object();
  doc["frame_rate"] = scenario.frame_rate;
  doc["meta"] = scenario.meta.is_null() ? nlohmann::json::object() : scenario.meta;
  doc["road"] = {{"centerline", points_json(scenario.road.centerline)},
                 {"lane_count", scenario.road.lane_count},
                 {"lane_width", scenario.road.lane_width}};
  nlohmann::json vehicles = nlohmann::json::array();
  for (const VehicleSpec& v : scenario.vehicles) {
    nlohmann::json speeds = nlohmann::json::array();
    for (double s : v.speeds) speeds.push_back(s);
    vehicles.push_back({{"id", v.id},
                        {"category", to_string(v.category)},
                        {"start_delay", v.start_delay},
                        {"lead_in", points_json(v.lead_in)},
                        {"waypoints", points_json(v.waypoints)},
                        {"speeds", speeds}});
  }
  doc["vehicles"] = vehicles;
  std::ostringstream os;
  write_json(os, doc, 0);
  os << "\n";
  return os.str();
}

ScenarioSpec scenario_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw FormatError("scenario must be a JSON object");
  reject_unknown(doc, {"frame_rate", "meta", "road", "vehicles"}, "scenario");
  ScenarioSpec out;
  out.frame_rate = number(require(doc, "frame_rate", "scenario"), "frame_rate");
  if (const auto it = doc.find("meta"); it != doc.end()) {
    if (!it->is_object()) throw FormatError("meta must be an object");
    out.meta = *it;
  }
  const nlohmann::json& road = require(doc, "road", "scenario");
  if (!road.is_object()) throw FormatError("road must be an object");
  reject_unknown(road, {"centerline", "lane_count", "lane_width"}, "road");
  out.road.centerline = points(require(road, "centerline", "road"), "road.centerline");
  const nlohmann::json& lanes = require(road, "lane_count", "road");
  if (!lanes.is_number_integer()) throw FormatError("road.lane_count must be an integer");
  out.road.lane_count = lanes.get<int>();
  out.road.lane_width = number(require(road, "lane_width", "road"), "road.lane_width");
  const nlohmann::json& vehicles = require(doc, "vehicles", "scenario");
  if (!vehicles.is_array()) throw FormatError("vehicles must be an array");
  for (const auto& v : vehicles) {
    if (!v.is_object()) throw FormatError("vehicles entries must be objects");
    const std::string where = "vehicle";
    reject_unknown(v, {"id", "category", "start_delay", "lead_in", "waypoints", "speeds"}, where);
    VehicleSpec spec;
    const nlohmann::json& id = require(v, "id", where);
    if (!id.is_number_integer()) throw FormatError("vehicle id must be an integer");
    spec.id = id.get<int>();
    const std::string w = "vehicle " + std::to_string(spec.id);
    const nlohmann::json& cat = require(v, "category", w);
    if (!cat.is_string()) throw FormatError(w + ": category must be a string");
    const auto parsed = parse_category(cat.get<std::string>());
    if (!parsed) throw FormatError(w + ": unknown category \"" + cat.get<std::string>() + "\"");
    spec.category = *parsed;
    spec.start_delay = number(require(v, "start_delay", w), w + ": start_delay");
    spec.lead_in = points(require(v, "lead_in", w), w + ": lead_in");
    spec.waypoints = points(require(v, "waypoints", w), w + ": waypoints");
    const nlohmann::json& speeds = require(v, "speeds", w);
    if (!speeds.is_array()) throw FormatError(w + ": speeds must be an array");
    for (const auto& s : speeds) spec.speeds.push_back(number(s, w + ": speeds"));
    out.vehicles.push_back(std::move(spec));
  }
  return out;
}

ScenarioSpec parse_scenario(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return scenario_from_json(doc);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open temporary file for writing");
    out << text;
    out.flush();
    if (!out) throw IoError(path.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError(path.string() + ": rename failed");
  }
}

void export_scenario(const ScenarioSpec& scenario, const std::filesystem::path& path) {
  const std::vector<std::string> violations = validate_scenario(scenario);
  if (!violations.empty()) {
    std::string msg = "scenario is invalid:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw ValidationError(msg);
  }
  write_file_atomic(path, to_canonical_json(scenario));
}

ScenarioSpec import_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

int find_collision_frame(const Trajectory& ego, const std::vector<Trajectory>& agents,
                         double distance) {
  if (ego.poses.empty()) throw ParameterError("ego trajectory is empty");
  for (const auto& e : ego.poses) {
    for (const auto& a : agents) {
      const trajectory::Pose2D* p = a.at_frame(e.frame);
      if (p && std::hypot(p->x - e.x, p->y - e.y) < distance) return e.frame;
    }
  }
  return ego.poses.back().frame;
}

ScenarioBuild assemble_scenario(const Trajectory& ego, const SmoothTrajectory& ego_path,
                                const std::vector<AgentInput>& agents,
                                const ScenarioConfig& config) {
  if (ego.poses.empty()) throw ParameterError("ego trajectory is empty");
  ScenarioBuild build;
  ScenarioSpec& spec = build.scenario;
  spec.frame_rate = config.frame_rate;

  ClassifyOptions classify = config.classify;
  classify.frame_rate = config.frame_rate;
  std::vector<SmoothTrajectory> oncoming;
  for (const auto& a : agents) {
    const AgentCategory c = a.trajectory.category.value_or(classify_agent(a.trajectory, ego, classify));
    build.categories.push_back(c);
    if (c == AgentCategory::kD1T1 || c == AgentCategory::kD1T2 || c == AgentCategory::kD1T3 ||
        c == AgentCategory::kD1T4) {
      oncoming.push_back(a.path);
    }
  }

  try {
    spec.road = generate_road(ego_path, oncoming, config.road).road;
  } catch (const ParameterError& e) {
    // Too little ego motion to follow: straight road along the initial heading.
    build.warnings.push_back(std::string("road: ") + e.what() + "; using a straight road");
    const auto& p0 = ego.poses.front();
    const Vec2 dir = {std::cos(p0.yaw), std::sin(p0.yaw)};
    spec.road.lane_count = config.road.lane_count;
    spec.road.lane_width = config.road.lane_width;
    for (int j = -10; j <= 50; ++j) {
      spec.road.centerline.push_back(add_scaled({p0.x, p0.y}, dir, j * config.road.spacing));
    }
  }

  const double sim_duration = ego.poses.back().t - ego.poses.front().t;
  ExtrapolationConfig extra = config.extrapolation;
  extra.frame_rate = config.frame_rate;

  struct Entry {
    Trajectory traj;
    AgentCategory category;
    double start_delay;
  };
  std::vector<Entry> fleet;
  fleet.push_back({ego, AgentCategory::kEgo, 0.0});
  std::vector<Trajectory> observed;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    observed.push_back(agents[i].trajectory);
    const Extrapolated x =
        extrapolate(agents[i].trajectory, build.categories[i], spec.road, ego, sim_duration, extra);
    if (x.road_departure) {
      build.warnings.push_back("vehicle " + std::to_string(agents[i].trajectory.vehicle_id) +
                               ": extrapolation leaves the road");
    }
    fleet.push_back({x.trajectory, build.categories[i], x.start_delay});
  }
  build.collision_frame = find_collision_frame(ego, observed, config.collision_distance);

  // Vehicles present when the recreated segment starts share one step-back.
  std::vector<double> targets;
  std::vector<std::size_t> stepping;
  for (std::size_t i = 0; i < fleet.size(); ++i) {
    if (fleet[i].start_delay == 0.0 && !fleet[i].traj.speeds.empty()) {
      targets.push_back(fleet[i].traj.speeds.front());
      stepping.push_back(i);
    }
  }
  const StepBack step = compute_stepback(targets, config.accel);

  nlohmann::json step_meta = nlohmann::json::array();
  std::vector<LeadIn> leadins(fleet.size());
  for (std::size_t k = 0; k < stepping.size(); ++k) {
    const Entry& e = fleet[stepping[k]];
    leadins[stepping[k]] = build_leadin(e.traj.poses.front(), step.entries[k], step.t_s_max,
                                        config.accel, config.leadin_spacing);
    step_meta.push_back({{"id", e.traj.vehicle_id},
                         {"v_t", step.entries[k].v_t},
                         {"t_s", step.entries[k].t_s},
                         {"d_s", step.entries[k].d_s},
                         {"D_s", step.entries[k].D_s}});
  }

  for (std::size_t i = 0; i < fleet.size(); ++i) {
    const Entry& e = fleet[i];
    VehicleSpec v;
    v.id = i == 0 ? 0 : e.traj.vehicle_id;
    v.category = e.category;
    v.start_delay = e.start_delay;
    v.lead_in = leadins[i].waypoints;
    for (const auto& p : e.traj.poses) v.waypoints.push_back({p.x, p.y});
    v.speeds = e.traj.speeds;
    spec.vehicles.push_back(std::move(v));
  }

  build.conflicts = check_overlaps(spec, config.min_gap);
  for (const Conflict& c : build.conflicts) {
    build.warnings.push_back("vehicles " + std::to_string(c.id_a) + " and " + std::to_string(c.id_b) +
                             " start " + fmt(c.distance) + " m apart");
  }
  for (const std::string& v : validate_scenario(spec)) build.warnings.push_back(v);

  spec.meta = {{"accel", config.accel},
               {"t_s_max", step.t_s_max},
               {"stepback", step_meta},
               {"first_frame", ego.poses.front().frame},
               {"collision_frame", build.collision_frame},
               {"origin", "first ego pose; x forward, y left"},
               {"timing",
                "lead-ins start at t = 0; waypoint i is reached at t_s_max + start_delay + "
                "i / frame_rate"},
               {"warnings", build.warnings}};
  return build;
}

}  // namespace crashscene::scenario
