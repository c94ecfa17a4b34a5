#include "crashscene/trajectory_builder.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "crashscene/errors.hpp"

namespace crashscene::trajectory {

const Pose2D* Trajectory::at_frame(int frame) const {
  const auto it = std::lower_bound(poses.begin(), poses.end(), frame,
                                   [](const Pose2D& p, int f) { return p.frame < f; });
  return it != poses.end() && it->frame == frame ? &*it : nullptr;
}

void Trajectory::validate() const {
  if (speeds.size() != poses.size()) throw ValidationError("speeds and poses differ in length");
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Pose2D& p = poses[i];
    if (!std::isfinite(p.t) || !std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.yaw)) {
      throw ValidationError("non-finite pose");
    }
    if (!(speeds[i] >= 0.0)) throw ValidationError("negative speed");
    if (i > 0 && !(p.frame > poses[i - 1].frame && p.t > poses[i - 1].t)) {
      throw ValidationError("poses are not strictly increasing in time");
    }
  }
}

double normalize_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

Trajectory ego_trajectory(EgoMode mode, std::span<const OdometryPose> odometry, double speed,
                          int frame_count, double frame_rate) {
  if (!(frame_rate > 0.0)) throw ParameterError("frame_rate must be positive");
  if (frame_count < 0) throw ParameterError("frame_count must be non-negative");
  Trajectory traj;
  traj.vehicle_id = 0;
  traj.category = AgentCategory::kEgo;
  if (mode == EgoMode::kConstantStraight) {
    if (!(speed >= 0.0)) throw ParameterError("ego speed must be non-negative");
    for (int k = 0; k < frame_count; ++k) {
      traj.poses.push_back({k, k / frame_rate, k * speed / frame_rate, 0.0, 0.0});
      traj.speeds.push_back(speed);
    }
    return traj;
  }

  std::vector<const OdometryPose*> by_frame(frame_count, nullptr);
  for (const auto& p : odometry) {
    if (p.frame >= 0 && p.frame < frame_count) by_frame[p.frame] = &p;
  }
  std::vector<int> missing;
  for (int k = 0; k < frame_count; ++k) {
    if (!by_frame[k]) missing.push_back(k);
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "odometry is missing frames:";
    for (int f : missing) msg << ' ' << f;
    throw GapError(msg.str());
  }
  for (int k = 0; k < frame_count; ++k) {
    const OdometryPose& p = *by_frame[k];
    traj.poses.push_back({k, k / frame_rate, p.x, p.y, normalize_angle(p.yaw)});
  }
  traj.speeds = traj.poses.size() >= 2 ? estimate_speeds(traj, frame_rate)
                                       : std::vector<double>(traj.poses.size(), 0.0);
  return traj;
}

LaneCorrection apply_lane_correction(const Trajectory& ego, std::span<const lanes::LateralFix> fixes,
                                     double lane_width) {
  if (!(lane_width > 0.0)) throw ParameterError("lane_width must be positive");
  LaneCorrection out{ego, false};
  if (fixes.empty()) {
    out.warning = true;
    return out;
  }
  std::vector<lanes::LateralFix> sorted(fixes.begin(), fixes.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.frame < b.frame; });

  // (pose index, corrected y) per fixed frame.
  std::vector<std::pair<std::size_t, double>> fixed;
  double anchor = 0.0;
  double prev_total = 0.0;
  int k = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const lanes::LateralFix& fix = sorted[i];
    const Pose2D* pose = ego.at_frame(fix.frame);
    if (!pose) throw FrameMismatchError("lane fix at frame " + std::to_string(fix.frame) +
                                        " has no ego pose");
    if (i > 0 && fix.frame == sorted[i - 1].frame) continue;
    double total = fix.offset_in_lane + k * lane_width;
    if (i == 0) {
      anchor = pose->y + total;
    } else {
      k += static_cast<int>(std::lround((prev_total - total) / lane_width));
      total = fix.offset_in_lane + k * lane_width;
    }
    prev_total = total;
    fixed.emplace_back(static_cast<std::size_t>(pose - ego.poses.data()), anchor - total);
  }

  std::vector<Pose2D>& poses = out.trajectory.poses;
  const auto [first_idx, first_y] = fixed.front();
  const auto [last_idx, last_y] = fixed.back();
  const double delta_front = first_y - ego.poses[first_idx].y;
  const double delta_back = last_y - ego.poses[last_idx].y;
  for (std::size_t i = 0; i < first_idx; ++i) poses[i].y = ego.poses[i].y + delta_front;
  for (std::size_t i = last_idx + 1; i < poses.size(); ++i) poses[i].y = ego.poses[i].y + delta_back;
  for (std::size_t j = 0; j < fixed.size(); ++j) {
    const auto [i0, y0] = fixed[j];
    poses[i0].y = y0;
    if (j + 1 == fixed.size()) break;
    const auto [i1, y1] = fixed[j + 1];
    const double f0 = ego.poses[i0].frame;
    const double f1 = ego.poses[i1].frame;
    for (std::size_t i = i0 + 1; i < i1; ++i) {
      const double a = (ego.poses[i].frame - f0) / (f1 - f0);
      poses[i].y = y0 + a * (y1 - y0);
    }
  }
  return out;
}

Trajectory compose_agent_trajectory(const Trajectory& ego,
                                    std::span<const RelativeObservation> observations,
                                    int vehicle_id) {
  Trajectory out;
  out.vehicle_id = vehicle_id;
  for (const auto& obs : observations) {
    const Pose2D* e = ego.at_frame(obs.frame);
    if (!e) throw FrameMismatchError("observation at frame " + std::to_string(obs.frame) +
                                     " has no ego pose");
    if (!out.poses.empty() && obs.frame <= out.poses.back().frame) {
      throw FrameMismatchError("observations must be ordered by frame without repeats");
    }
    const double fwd = obs.position.z;
    const double left = -obs.position.x;
    const double c = std::cos(e->yaw);
    const double s = std::sin(e->yaw);
    out.poses.push_back({obs.frame, e->t, e->x + c * fwd - s * left, e->y + s * fwd + c * left,
                         e->yaw});
  }
  out.speeds.assign(out.poses.size(), 0.0);
  return out;
}

std::vector<double> savitzky_golay(std::span<const double> series, int window, int polyorder) {
  if (window < 1 || window % 2 == 0) throw ParameterError("window must be a positive odd count");
  if (polyorder < 0 || polyorder >= window) throw ParameterError("polyorder must be < window");
  if (series.size() < static_cast<std::size_t>(window)) {
    throw ParameterError("series is shorter than the window");
  }
  const int half = window / 2;
  Eigen::MatrixXd vander(window, polyorder + 1);
  for (int j = 0; j < window; ++j) {
    const double z = static_cast<double>(j - half) / std::max(half, 1);
    double zk = 1.0;
    for (int k = 0; k <= polyorder; ++k, zk *= z) vander(j, k) = zk;
  }
  // Hat matrix: row j maps window samples to the fitted value at sample j.
  const Eigen::MatrixXd pinv =
      vander.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(window, window));
  const Eigen::MatrixXd hat = vander * pinv;

  const std::size_t n = series.size();
  std::vector<double> out(n);
  auto apply = [&](int row, std::size_t start) {
    double acc = 0.0;
    for (int j = 0; j < window; ++j) acc += hat(row, j) * series[start + j];
    return acc;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (i < static_cast<std::size_t>(half)) {
      out[i] = apply(static_cast<int>(i), 0);
    } else if (i + half >= n) {
      out[i] = apply(static_cast<int>(i - (n - window)), n - window);
    } else {
      out[i] = apply(half, i - half);
    }
  }
  return out;
}

Trajectory savitzky_golay(const Trajectory& traj, int window, int polyorder) {
  std::vector<double> xs, ys;
  for (const auto& p : traj.poses) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  const std::vector<double> sx = savitzky_golay(xs, window, polyorder);
  const std::vector<double> sy = savitzky_golay(ys, window, polyorder);
  Trajectory out = traj;
  for (std::size_t i = 0; i < out.poses.size(); ++i) {
    out.poses[i].x = sx[i];
    out.poses[i].y = sy[i];
  }
  return out;
}

SmoothTrajectory::SmoothTrajectory(int vehicle_id, spline::CubicSpline2D spline)
    : vehicle_id_(vehicle_id), spline_(std::move(spline)) {
  constexpr int kSubsteps = 16;
  const std::vector<double>& knots = spline_.knots();
  arc_t_.push_back(knots.front());
  arc_.push_back(0.0);
  spline::Vec2 prev = spline_.value(knots.front());
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    for (int s = 1; s <= kSubsteps; ++s) {
      const double t = s == kSubsteps ? knots[i + 1]
                                      : knots[i] + (knots[i + 1] - knots[i]) * s / kSubsteps;
      const spline::Vec2 p = spline_.value(t);
      arc_.push_back(arc_.back() + std::hypot(p[0] - prev[0], p[1] - prev[1]));
      arc_t_.push_back(t);
      prev = p;
    }
  }
}

double SmoothTrajectory::arc_length_at(double t) const {
  if (t <= arc_t_.front()) return 0.0;
  if (t >= arc_t_.back()) return arc_.back();
  const auto it = std::upper_bound(arc_t_.begin(), arc_t_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - arc_t_.begin());
  const double a = (t - arc_t_[i - 1]) / (arc_t_[i] - arc_t_[i - 1]);
  return arc_[i - 1] + a * (arc_[i] - arc_[i - 1]);
}

double SmoothTrajectory::time_at_arc_length(double s) const {
  if (s <= 0.0) return arc_t_.front();
  if (s >= arc_.back()) return arc_t_.back();
  const auto it = std::lower_bound(arc_.begin(), arc_.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - arc_.begin());
  const double len = arc_[i] - arc_[i - 1];
  const double a = len > 0.0 ? (s - arc_[i - 1]) / len : 0.0;
  return arc_t_[i - 1] + a * (arc_t_[i] - arc_t_[i - 1]);
}

void SmoothingConfig::validate() const {
  if (sg_window < 1 || sg_window % 2 == 0) throw ParameterError("sg_window must be odd");
  if (sg_polyorder < 0 || sg_polyorder >= sg_window) {
    throw ParameterError("sg_polyorder must be below sg_window");
  }
  if (local_window < 4) throw ParameterError("local_window must be at least 4");
  if (!(global_smoothness >= 0.0 && local_smoothness > global_smoothness)) {
    throw ParameterError("need local_smoothness > global_smoothness >= 0");
  }
  if (!(endpoint_weight >= 1.0)) throw ParameterError("endpoint_weight must be >= 1");
}

SmoothResult smooth_two_level(const Trajectory& traj, const SmoothingConfig& config) {
  config.validate();
  const std::size_t n = traj.poses.size();
  if (n == 0) throw ParameterError("cannot smooth an empty trajectory");
  std::vector<double> t(n);
  std::vector<spline::Vec2> xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = traj.poses[i].t;
    xy[i] = {traj.poses[i].x, traj.poses[i].y};
  }
  // Smoothness factors are penalty weights with time measured in frames.
  const double frame_dt = n > 1 ? (t.back() - t.front()) / static_cast<double>(n - 1) : 1.0;
  const double unit = frame_dt * frame_dt * frame_dt;
  std::vector<double> weights(n, 1.0);
  weights.front() = weights.back() = config.endpoint_weight;

  SmoothResult result;
  if (n < 4) {
    result.warning = true;
    result.path = SmoothTrajectory(
        traj.vehicle_id, spline::fit_penalized_spline(t, xy, weights, config.global_smoothness * unit));
    return result;
  }

  const std::size_t window = std::min<std::size_t>(config.local_window, n);
  const std::size_t stride = std::max<std::size_t>(window / 2, 1);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window < n; s += stride) starts.push_back(s);
  starts.push_back(n - window);

  std::vector<spline::Vec2> acc(n, spline::Vec2{0.0, 0.0});
  std::vector<double> wsum(n, 0.0);
  for (std::size_t s : starts) {
    const std::span<const double> wt(t.data() + s, window);
    const std::span<const spline::Vec2> wxy(xy.data() + s, window);
    const std::span<const double> ww(weights.data() + s, window);
    const spline::CubicSpline2D local =
        spline::fit_penalized_spline(wt, wxy, ww, config.local_smoothness * unit);
    for (std::size_t j = 0; j < window; ++j) {
      const double tent = static_cast<double>(std::min(j + 1, window - j));
      acc[s + j][0] += tent * local.values()[j][0];
      acc[s + j][1] += tent * local.values()[j][1];
      wsum[s + j] += tent;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    acc[i][0] /= wsum[i];
    acc[i][1] /= wsum[i];
  }
  result.path = SmoothTrajectory(
      traj.vehicle_id, spline::fit_penalized_spline(t, acc, weights, config.global_smoothness * unit));
  return result;
}

std::vector<double> estimate_speeds(const Trajectory& traj, double frame_rate) {
  if (!(frame_rate > 0.0)) throw ParameterError("frame_rate must be positive");
  const std::size_t n = traj.poses.size();
  if (n < 2) throw ParameterError("speed estimation needs at least two poses");
  std::vector<double> out(n);
  auto rate = [&](std::size_t a, std::size_t b) {
    const Pose2D& p = traj.poses[a];
    const Pose2D& q = traj.poses[b];
    const double dt = (q.frame - p.frame) / frame_rate;
    return std::hypot(q.x - p.x, q.y - p.y) / dt;
  };
  out[0] = rate(0, 1);
  out[n - 1] = rate(n - 2, n - 1);
  for (std::size_t i = 1; i + 1 < n; ++i) out[i] = rate(i - 1, i + 1);
  return out;
}

Trajectory resample(const SmoothTrajectory& path, const Trajectory& raw, double frame_rate,
                    double fallback_yaw) {
  constexpr double kStationary = 0.1;  // m/s
  Trajectory out;
  out.vehicle_id = raw.vehicle_id;
  out.category = raw.category;
  double yaw = normalize_angle(fallback_yaw);
  for (const auto& p : raw.poses) {
    const spline::Vec2 pos = path.position(p.t);
    const spline::Vec2 vel = path.velocity(p.t);
    if (std::hypot(vel[0], vel[1]) > kStationary) yaw = std::atan2(vel[1], vel[0]);
    out.poses.push_back({p.frame, p.t, pos[0], pos[1], yaw});
  }
  out.speeds = out.poses.size() >= 2 ? estimate_speeds(out, frame_rate)
                                     : std::vector<double>(out.poses.size(), 0.0);
  return out;
}

std::vector<Trajectory> fill_gaps(const Trajectory& traj, int max_gap) {
  if (max_gap < 1) throw ParameterError("max_gap must be >= 1");
  std::vector<Trajectory> pieces;
  if (traj.poses.empty()) return pieces;
  auto fresh = [&] {
    Trajectory t;
    t.vehicle_id = traj.vehicle_id;
    t.category = traj.category;
    return t;
  };
  Trajectory cur = fresh();
  for (std::size_t i = 0; i < traj.poses.size(); ++i) {
    const Pose2D& p = traj.poses[i];
    const double speed = i < traj.speeds.size() ? traj.speeds[i] : 0.0;
    if (!cur.poses.empty()) {
      const Pose2D q = cur.poses.back();
      const double q_speed = cur.speeds.back();
      const int missing = p.frame - q.frame - 1;
      if (missing >= max_gap) {
        pieces.push_back(std::move(cur));
        cur = fresh();
      } else {
        const double dyaw = normalize_angle(p.yaw - q.yaw);
        for (int m = 1; m <= missing; ++m) {
          const double a = static_cast<double>(m) / (missing + 1);
          cur.poses.push_back({q.frame + m, q.t + a * (p.t - q.t), q.x + a * (p.x - q.x),
                               q.y + a * (p.y - q.y), normalize_angle(q.yaw + a * dyaw)});
          cur.speeds.push_back(q_speed + a * (speed - q_speed));
        }
      }
    }
    cur.poses.push_back(p);
    cur.speeds.push_back(speed);
  }
  pieces.push_back(std::move(cur));
  return pieces;
}

}  // namespace crashscene::trajectory
