#include "crashscene/lane_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "crashscene/errors.hpp"
#include "crashscene/tracking.hpp"

namespace crashscene::lanes {

PixelPoint from_top_left(double u, double v_top, int image_height) {
  return {u, image_height - 1.0 - v_top};
}

namespace {

class Grid {
 public:
  Grid(std::span<const PixelPoint> points, double cell) : points_(points), cell_(cell) {
    for (std::size_t i = 0; i < points.size(); ++i) cells_[key(points[i])].push_back(i);
  }

  // Indices within eps of point i (including i), ascending.
  std::vector<std::size_t> neighbors(std::size_t i, double eps) const {
    std::vector<std::size_t> out;
    const PixelPoint& p = points_[i];
    const auto cu = static_cast<std::int64_t>(std::floor(p.u / cell_));
    const auto cv = static_cast<std::int64_t>(std::floor(p.v / cell_));
    const double eps2 = eps * eps;
    for (std::int64_t du = -1; du <= 1; ++du) {
      for (std::int64_t dv = -1; dv <= 1; ++dv) {
        const auto it = cells_.find(pack(cu + du, cv + dv));
        if (it == cells_.end()) continue;
        for (std::size_t j : it->second) {
          const double x = points_[j].u - p.u;
          const double y = points_[j].v - p.v;
          if (x * x + y * y <= eps2) out.push_back(j);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static std::int64_t pack(std::int64_t a, std::int64_t b) { return (a << 32) ^ (b & 0xffffffff); }
  std::int64_t key(const PixelPoint& p) const {
    return pack(static_cast<std::int64_t>(std::floor(p.u / cell_)),
                static_cast<std::int64_t>(std::floor(p.v / cell_)));
  }

  std::span<const PixelPoint> points_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

}  // namespace

Clustering cluster_lane_pixels(std::span<const PixelPoint> pixels, double eps,
                               std::size_t min_pts) {
  if (!(eps > 0.0)) throw ParameterError("eps must be positive");
  if (min_pts < 1) throw ParameterError("min_pts must be >= 1");
  Clustering out;
  const std::size_t n = pixels.size();
  if (n == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pixels[a].u != pixels[b].u) return pixels[a].u < pixels[b].u;
    if (pixels[a].v != pixels[b].v) return pixels[a].v < pixels[b].v;
    return a < b;
  });
  // Rank in visiting order, so neighbor expansion is order independent too.
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;

  const Grid grid(pixels, eps);
  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  int cluster = 0;
  auto by_rank = [&](std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
  };

  for (std::size_t seed : order) {
    if (label[seed] != kUnvisited) continue;
    std::vector<std::size_t> nbrs = grid.neighbors(seed, eps);
    if (nbrs.size() < min_pts) {
      label[seed] = kNoise;
      continue;
    }
    label[seed] = cluster;
    by_rank(nbrs);
    std::vector<std::size_t> queue(nbrs.begin(), nbrs.end());
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const std::size_t j = queue[q];
      if (label[j] == kNoise) label[j] = cluster;  // border point
      if (label[j] != kUnvisited) continue;
      label[j] = cluster;
      std::vector<std::size_t> jn = grid.neighbors(j, eps);
      if (jn.size() >= min_pts) {
        by_rank(jn);
        queue.insert(queue.end(), jn.begin(), jn.end());
      }
    }
    ++cluster;
  }

  out.clusters.resize(cluster);
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] >= 0) {
      out.clusters[label[i]].push_back(i);
    } else {
      out.noise.push_back(i);
    }
  }
  return out;
}

LaneLine fit_lane_line(std::span<const PixelPoint> cluster, double image_width) {
  if (cluster.size() < 2) throw FitError("need at least two points to fit a lane line");
  double mu = 0.0, mv = 0.0;
  for (const auto& p : cluster) {
    mu += p.u;
    mv += p.v;
  }
  mu /= cluster.size();
  mv /= cluster.size();
  double suu = 0.0, svv = 0.0, suv = 0.0;
  for (const auto& p : cluster) {
    suu += (p.u - mu) * (p.u - mu);
    svv += (p.v - mv) * (p.v - mv);
    suv += (p.u - mu) * (p.v - mv);
  }
  if (suu + svv <= 0.0) throw FitError("lane cluster points are all coincident");

  // Principal axis of the scatter matrix.
  const double angle = 0.5 * std::atan2(2.0 * suv, suu - svv);
  const double du = std::cos(angle);
  const double dv = std::sin(angle);
  if (std::abs(dv) < 1e-12) throw NoInterceptError("lane line is horizontal");
  const double slope = du / dv;
  const double intercept = mu - slope * mv;
  if (!std::isfinite(intercept) || std::abs(intercept) > 10.0 * image_width) {
    throw NoInterceptError("lane line does not reach the bottom row near the image");
  }
  return {slope, intercept, intercept};
}

double directed_hausdorff(std::span<const PixelPoint> a, std::span<const PixelPoint> b) {
  if (a.empty() || b.empty()) throw ParameterError("directed Hausdorff of an empty set");
  double cmax = 0.0;
  for (const auto& p : a) {
    double cmin = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      const double d2 = (p.u - q.u) * (p.u - q.u) + (p.v - q.v) * (p.v - q.v);
      if (d2 < cmin) cmin = d2;
      if (cmin <= cmax) break;  // p cannot raise the maximum
    }
    cmax = std::max(cmax, cmin);
  }
  return std::sqrt(cmax);
}

std::vector<int> associate_lanes(const std::vector<TrackedLane>& previous,
                                 const std::vector<std::vector<PixelPoint>>& current,
                                 double max_cost, int* next_id) {
  std::vector<int> ids(current.size(), -1);
  if (!previous.empty() && !current.empty()) {
    tracking::CostMatrix cost(current.size(), previous.size());
    for (std::size_t c = 0; c < current.size(); ++c) {
      for (std::size_t p = 0; p < previous.size(); ++p) {
        cost(c, p) = directed_hausdorff(current[c], previous[p].pixels);
      }
    }
    for (const auto& [c, p] : tracking::solve_assignment(cost).pairs) {
      if (cost(c, p) <= max_cost) ids[c] = previous[p].id;
    }
  }
  for (int& id : ids) {
    if (id < 0) id = (*next_id)++;
  }
  return ids;
}

LateralFix lateral_offset(double ego_ref_u, double left_intercept, double right_intercept,
                          double lane_width) {
  const double width_px = right_intercept - left_intercept;
  if (!(width_px > 0.0)) throw DegenerateLaneError("lane intercepts coincide or are reversed");
  LateralFix fix;
  fix.offset_in_lane = (ego_ref_u - left_intercept) / width_px * lane_width;
  fix.lane_width_px = width_px;
  return fix;
}

void LaneConfig::validate() const {
  if (!(eps > 0.0)) throw ParameterError("dbscan eps must be positive");
  if (min_pts < 1) throw ParameterError("dbscan min_pts must be >= 1");
  if (!(lower_fraction > 0.0 && lower_fraction <= 1.0)) {
    throw ParameterError("lane lower_fraction must lie in (0, 1]");
  }
  if (!(max_cost > 0.0)) throw ParameterError("lane association gate must be positive");
  if (survival_frames < 0) throw ParameterError("lane survival_frames must be >= 0");
  if (!(lane_width > 0.0)) throw ParameterError("lane_width must be positive");
}

LaneTracker::LaneTracker(LaneConfig config, camera::ImageSize image)
    : config_(config), image_(image) {
  config_.validate();
}

FrameLanes LaneTracker::process(int frame, std::span<const camera::PixelCoord> pixels_top_left,
                                double ego_ref_u) {
  FrameLanes out;
  const double v_limit = config_.lower_fraction * image_.height;
  std::vector<PixelPoint> pixels;
  for (const auto& px : pixels_top_left) {
    const PixelPoint p = from_top_left(px.u, px.v, image_.height);
    if (p.v >= 0.0 && p.v < v_limit) pixels.push_back(p);
  }

  const Clustering clusters = cluster_lane_pixels(pixels, config_.eps, config_.min_pts);
  std::vector<std::vector<PixelPoint>> members;
  for (const auto& indices : clusters.clusters) {
    std::vector<PixelPoint> pts;
    pts.reserve(indices.size());
    for (std::size_t i : indices) pts.push_back(pixels[i]);
    LaneObservation obs;
    obs.frame = frame;
    try {
      obs.line = fit_lane_line(pts, image_.width);
    } catch (const FitError&) {
      continue;
    } catch (const NoInterceptError&) {
      continue;
    }
    obs.pixels = pts;
    members.push_back(std::move(pts));
    out.observations.push_back(std::move(obs));
  }

  std::erase_if(lanes_, [&](const TrackedLane& lane) {
    return frame - lane.last_seen > config_.survival_frames;
  });
  const std::vector<int> ids = associate_lanes(lanes_, members, config_.max_cost, &next_id_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    LaneObservation& obs = out.observations[i];
    obs.lane_id = ids[i];
    auto it = std::find_if(lanes_.begin(), lanes_.end(),
                           [&](const TrackedLane& l) { return l.id == ids[i]; });
    if (it == lanes_.end()) {
      lanes_.push_back({ids[i], frame, obs.pixels, obs.line});
    } else {
      *it = {ids[i], frame, obs.pixels, obs.line};
    }
  }

  const LaneObservation* left = nullptr;
  const LaneObservation* right = nullptr;
  for (const auto& obs : out.observations) {
    if (obs.x_intercept() <= ego_ref_u) {
      if (!left || obs.x_intercept() > left->x_intercept()) left = &obs;
    } else if (!right || obs.x_intercept() < right->x_intercept()) {
      right = &obs;
    }
  }
  if (left && right) {
    LateralFix fix = lateral_offset(ego_ref_u, left->x_intercept(), right->x_intercept(),
                                    config_.lane_width);
    fix.frame = frame;
    fix.ego_lane_id = left->lane_id;
    out.fix = fix;
    auto to_image = [&](const LaneLine& line) {
      const double v_top_bottom = image_.height - 1.0;
      const double v_prime = v_limit;
      return camera::ImageLine{{line.intercept, v_top_bottom},
                               {line.slope * v_prime + line.intercept,
                                image_.height - 1.0 - v_prime}};
    };
    out.ego_boundaries = std::make_pair(to_image(left->line), to_image(right->line));
  }
  return out;
}

}  // namespace crashscene::lanes
