#include "crashscene/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "crashscene/errors.hpp"

namespace crashscene::tracking {

double iou(const BBox2D& a, const BBox2D& b) {
  const double iw = std::min(a.u_max, b.u_max) - std::max(a.u_min, b.u_min);
  const double ih = std::min(a.v_max, b.v_max) - std::max(a.v_min, b.v_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

CostMatrix::CostMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& row : rows) {
    if (row.size() != cols_) throw ShapeError("ragged cost matrix");
    data_.insert(data_.end(), row.begin(), row.end());
  }
}

namespace {

// Square Hungarian method with potentials, O(n^3). Fills row->col and the
// dual potentials (reduced cost c(i,j) - u[i] - v[j] >= 0, zero on the
// matching).
void hungarian(const CostMatrix& a, std::vector<int>* row_to_col, std::vector<double>* u_out,
               std::vector<double>* v_out) {
  const int n = static_cast<int>(a.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  row_to_col->assign(n, -1);
  for (int j = 1; j <= n; ++j) (*row_to_col)[p[j] - 1] = j - 1;
  u_out->assign(u.begin() + 1, u.end());
  v_out->assign(v.begin() + 1, v.end());
}

// Every optimal assignment is a perfect matching on the tight edges of an
// optimal dual. Walk rows in order and pin each one to its smallest tight
// column that still admits a perfect matching of the remaining rows.
void lexicographic_refine(const CostMatrix& a, const std::vector<double>& u,
                          const std::vector<double>& v, double tolerance,
                          std::vector<int>* row_to_col) {
  const int n = static_cast<int>(a.rows());
  std::vector<int>& match_row = *row_to_col;
  std::vector<int> match_col(n, -1);
  for (int i = 0; i < n; ++i) match_col[match_row[i]] = i;
  std::vector<char> col_locked(n, 0);
  auto tight = [&](int i, int j) { return a(i, j) - u[i] - v[j] <= tolerance; };

  std::vector<char> visited(n);
  int banned_col = -1;
  std::function<bool(int)> augment = [&](int row) -> bool {
    for (int c = 0; c < n; ++c) {
      if (col_locked[c] || c == banned_col || visited[c] || !tight(row, c)) continue;
      visited[c] = 1;
      if (match_col[c] == -1 || augment(match_col[c])) {
        match_col[c] = row;
        match_row[row] = c;
        return true;
      }
    }
    return false;
  };

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (col_locked[j] || !tight(i, j)) continue;
      if (match_row[i] == j) {
        col_locked[j] = 1;
        break;
      }
      const std::vector<int> saved_row = match_row;
      const std::vector<int> saved_col = match_col;
      const int displaced = match_col[j];
      match_col[match_row[i]] = -1;
      match_row[i] = j;
      match_col[j] = i;
      match_row[displaced] = -1;
      col_locked[j] = 1;  // also keeps row i out of the search
      banned_col = j;
      std::fill(visited.begin(), visited.end(), 0);
      if (augment(displaced)) break;
      col_locked[j] = 0;
      match_row = saved_row;
      match_col = saved_col;
    }
  }
}

}  // namespace

Assignment solve_assignment(const CostMatrix& cost) {
  Assignment result;
  if (cost.empty()) return result;
  const std::size_t n = std::max(cost.rows(), cost.cols());
  double max_abs = 0.0;
  for (std::size_t r = 0; r < cost.rows(); ++r) {
    for (std::size_t c = 0; c < cost.cols(); ++c) {
      if (!std::isfinite(cost(r, c))) throw ParameterError("cost matrix has non-finite entries");
      max_abs = std::max(max_abs, std::abs(cost(r, c)));
    }
  }
  CostMatrix square(n, n, 10.0 * max_abs + 1.0);
  for (std::size_t r = 0; r < cost.rows(); ++r) {
    for (std::size_t c = 0; c < cost.cols(); ++c) square(r, c) = cost(r, c);
  }

  std::vector<int> row_to_col;
  std::vector<double> u, v;
  hungarian(square, &row_to_col, &u, &v);
  lexicographic_refine(square, u, v, 1e-9 * (1.0 + max_abs), &row_to_col);

  for (std::size_t r = 0; r < cost.rows(); ++r) {
    const auto c = static_cast<std::size_t>(row_to_col[r]);
    if (c >= cost.cols()) continue;
    result.pairs.emplace_back(r, c);
    result.total_cost += cost(r, c);
  }
  return result;
}

FrameAssociation associate_frame(const std::vector<BBox2D>& tracks,
                                 const std::vector<BBox2D>& detections, double iou_threshold) {
  FrameAssociation out;
  std::vector<char> track_matched(tracks.size(), 0);
  std::vector<char> det_matched(detections.size(), 0);
  if (!tracks.empty() && !detections.empty()) {
    CostMatrix cost(tracks.size(), detections.size());
    for (std::size_t t = 0; t < tracks.size(); ++t) {
      for (std::size_t d = 0; d < detections.size(); ++d) {
        cost(t, d) = 1.0 - iou(tracks[t], detections[d]);
      }
    }
    for (const auto& [t, d] : solve_assignment(cost).pairs) {
      if (1.0 - cost(t, d) < iou_threshold) continue;
      out.matches.emplace_back(t, d);
      track_matched[t] = 1;
      det_matched[d] = 1;
    }
  }
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (!track_matched[t]) out.unmatched_tracks.push_back(t);
  }
  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (!det_matched[d]) out.unmatched_detections.push_back(d);
  }
  return out;
}

const char* to_string(TrackState state) {
  switch (state) {
    case TrackState::kTentative:
      return "tentative";
    case TrackState::kActive:
      return "active";
    case TrackState::kLost:
      return "lost";
    case TrackState::kDead:
      return "dead";
  }
  return "unknown";
}

void TrackerConfig::validate() const {
  if (birth_hits < 1) throw ParameterError("birth_hits must be >= 1");
  if (death_misses < 1) throw ParameterError("death_misses must be >= 1");
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw ParameterError("iou_threshold must lie in [0, 1]");
  }
}

TrackSet::TrackSet(TrackerConfig config) : config_(config) { config_.validate(); }

FrameAssociation TrackSet::step(int frame, const std::vector<Detection>& detections) {
  if (last_frame_ && frame <= *last_frame_) {
    throw ParameterError("frames must be stepped in increasing order");
  }
  last_frame_ = frame;

  std::vector<std::size_t> live;
  std::vector<BBox2D> live_boxes;
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    if (tracks_[i].state == TrackState::kDead) continue;
    live.push_back(i);
    live_boxes.push_back(tracks_[i].last().bbox);
  }
  std::vector<BBox2D> det_boxes;
  det_boxes.reserve(detections.size());
  for (const auto& d : detections) det_boxes.push_back(d.bbox);

  FrameAssociation assoc = associate_frame(live_boxes, det_boxes, config_.iou_threshold);

  for (const auto& [t, d] : assoc.matches) {
    Track& track = tracks_[live[t]];
    track.history[frame] = detections[d];
    track.history[frame].frame = frame;
    track.misses = 0;
    track.hits += 1;
    if (track.state == TrackState::kLost ||
        (track.state == TrackState::kTentative && track.hits >= config_.birth_hits)) {
      track.state = TrackState::kActive;
      track.confirmed = true;
    }
  }
  for (std::size_t t : assoc.unmatched_tracks) {
    Track& track = tracks_[live[t]];
    track.hits = 0;
    track.misses += 1;
    if (track.state == TrackState::kTentative || track.misses >= config_.death_misses) {
      track.state = TrackState::kDead;
    } else {
      track.state = TrackState::kLost;
    }
  }
  for (std::size_t d : assoc.unmatched_detections) {
    Track track;
    track.id = next_id_++;
    track.hits = 1;
    track.history[frame] = detections[d];
    track.history[frame].frame = frame;
    if (config_.birth_hits <= 1) {
      track.state = TrackState::kActive;
      track.confirmed = true;
    }
    tracks_.push_back(std::move(track));
  }
  // Report association indices in terms of the live-track order.
  return assoc;
}

}  // namespace crashscene::tracking
